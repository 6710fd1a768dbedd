//! Random forest of CART trees with Gini impurity.
//!
//! Split search is exact: for every candidate feature the samples are
//! sorted by value and every midpoint between distinct neighbours is
//! scored. Impurity comparisons use integer arithmetic, so ties are real
//! ties and resolve to the first candidate (lowest feature, then lowest
//! threshold).

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FusionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// ⌈√d⌉
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1)),
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k.clamp(1, d.max(1)),
        }
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" => Ok(MaxFeatures::All),
            n => n
                .parse()
                .map(MaxFeatures::Count)
                .map_err(|_| format!("max_features must be sqrt, all or a count, got {n:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestParams {
    /// 1400 trees, depth 80, min split 5, √d features.
    pub fn paper() -> Self {
        Self {
            n_estimators: 1400,
            max_depth: 80,
            min_samples_split: 5,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }

    /// The paper preset with 100 trees.
    pub fn desk() -> Self {
        Self {
            n_estimators: 100,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.n_estimators == 0 {
            return Err(FusionError::BadHyperparameters("n_estimators must be ≥ 1".into()));
        }
        if self.max_depth == 0 {
            return Err(FusionError::BadHyperparameters("max_depth must be ≥ 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(FusionError::BadHyperparameters("min_samples_split must be ≥ 2".into()));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(FusionError::BadHyperparameters("max_features must be ≥ 1".into()));
        }
        Ok(())
    }
}

impl Default for ForestParams {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes in an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Lowest index among the largest counts.
fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64]) -> &[usize] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        majority(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub classes: usize,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Per-class vote counts of the trees.
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let mut v = vec![0; self.classes];
        for t in &self.trees {
            v[t.predict(x)] += 1;
        }
        v
    }

    pub fn save(&self, path: &Path) -> Result<(), FusionError> {
        let json = serde_json::to_string(self).map_err(|e| FusionError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| FusionError::Format(format!("{}: {e}", path.display())))
    }
}

/// Majority vote; ties go to the lowest class id.
pub fn predict_forest(model: &ForestModel, x: &[f64]) -> Result<usize, FusionError> {
    if x.len() != model.n_features {
        return Err(FusionError::DimMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    Ok(majority(&model.votes(x)))
}

pub fn train_forest(features: &[Vec<f64>], labels: &[usize], params: &ForestParams) -> Result<ForestModel, FusionError> {
    params.validate()?;
    if features.is_empty() {
        return Err(FusionError::Empty);
    }
    if features.len() != labels.len() {
        return Err(FusionError::LengthMismatch(features.len(), labels.len()));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(FusionError::DimMismatch { expected: d, got: bad.len() });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; classes];
    labels.iter().for_each(|&y| seen[y] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(FusionError::DegenerateLabels);
    }
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_estimators).map(|_| master.gen()).collect();
    let builder = Builder {
        x: features,
        y: labels,
        classes,
        params,
        k: params.max_features.resolve(d),
    };
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = features.len();
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.tree(idx, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        params: *params,
        classes,
        n_features: d,
        trees,
    })
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    classes: usize,
    params: &'a ForestParams,
    k: usize,
}

/// Σ_c n_c² / n for both children, as an exact fraction (num, den).
/// Larger is purer.
fn purity(left: &[usize], nl: usize, right: &[usize], nr: usize) -> (u128, u128) {
    let sq = |c: &[usize]| c.iter().map(|&v| (v as u128) * (v as u128)).sum::<u128>();
    let (nl, nr) = (nl as u128, nr as u128);
    (sq(left) * nr + sq(right) * nl, nl * nr)
}

fn cmp_frac(a: (u128, u128), b: (u128, u128)) -> Ordering {
    (a.0 * b.1).cmp(&(b.0 * a.1))
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: (u128, u128),
}

impl Builder<'_> {
    fn tree(&self, idx: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = Vec::new();
        self.grow(&mut nodes, idx, 0, rng);
        Tree { nodes }
    }

    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        idx.iter().for_each(|&i| c[self.y[i]] += 1);
        c
    }

    fn grow(&self, nodes: &mut Vec<Node>, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = nodes.len();
        let counts = self.counts(&idx);
        nodes.push(Node::Leaf { counts: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || idx.len() < self.params.min_samples_split {
            return id;
        }
        let d = self.x[0].len();
        let mut features = sample(rng, d, self.k).into_vec();
        features.sort_unstable();
        let Some(best) = self.best_split(&idx, &features) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let left = self.grow(nodes, l, depth + 1, rng);
        let right = self.grow(nodes, r, depth + 1, rng);
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<SplitChoice> {
        let total = self.counts(idx);
        let n = idx.len();
        let mut best: Option<SplitChoice> = None;
        let mut order = idx.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0; self.classes];
            for j in 0..n - 1 {
                left[self.y[order[j]]] += 1;
                let (a, b) = (self.x[order[j]][f], self.x[order[j + 1]][f]);
                if a == b {
                    continue;
                }
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let score = purity(&left, j + 1, &right, n - j - 1);
                if best.as_ref().map_or(true, |s| cmp_frac(score, s.score) == Ordering::Greater) {
                    let mid = a + (b - a) / 2.0;
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: if mid < b { mid } else { a },
                        score,
                    });
                }
            }
        }
        best
    }
}
