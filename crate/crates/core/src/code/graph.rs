//! Function embeddings and structure2vec message passing.
//!
//! Vectors are rows: `x_v W1` with W1 [d, p]. One round updates every node
//! at once,
//!
//! ```text
//! μ_v ← tanh(x_v W1 + σ(Σ_{u∈N(v)} μ_u)),   σ(l) = ReLU(… ReLU(l P_n) …) P_1
//! ```
//!
//! and after T rounds the graph vector is `mean_v(μ_v) W2`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CallGraph, CodeError, NeighborMode, OpcodeEmbedding, OpcodeVocab};
use crate::fusion::{MlpHead, Targets};
use crate::nn::{accumulate, init, mat_vec, outer_acc, vec_mat, zeros_like, Adam, AdamConfig, Checkpoint, NnError, Params, Tensor};
use crate::training::{shuffled, EpochLog};

/// Smoothing constant of the SIF weights.
pub const SIF_A: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Uniform,
    Sif,
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "sif" => Ok(Weighting::Sif),
            _ => Err(format!("weighting must be uniform or sif, got {s:?}")),
        }
    }
}

/// Per-index opcode weights for the weighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct OpcodeWeights(Vec<f64>);

impl OpcodeWeights {
    pub fn new(weighting: Weighting, vocab: &OpcodeVocab) -> Self {
        let w = (0..vocab.rows())
            .map(|i| match weighting {
                Weighting::Uniform => 1.0,
                Weighting::Sif => SIF_A / (SIF_A + vocab.probability(i)),
            })
            .collect();
        Self(w)
    }

    pub fn uniform(rows: usize) -> Self {
        Self(vec![1.0; rows])
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Σ w_i x_i / Σ w_i over the opcode multiset; zero for an empty function.
pub fn function2vec(opcodes: &[usize], emb: &OpcodeEmbedding, weights: &OpcodeWeights) -> Vec<f64> {
    let mut acc = vec![0.0; emb.dim()];
    let mut wsum = 0.0;
    for &op in opcodes {
        let w = weights.get(op);
        acc.iter_mut().zip(emb.row(op)).for_each(|(a, x)| *a += w * x);
        wsum += w;
    }
    if wsum > 0.0 {
        acc.iter_mut().for_each(|a| *a /= wsum);
    }
    acc
}

pub fn node_features(g: &CallGraph, emb: &OpcodeEmbedding, weights: &OpcodeWeights) -> Vec<Vec<f64>> {
    g.nodes.iter().map(|n| function2vec(&n.opcodes, emb, weights)).collect()
}

/// Initial node state before the first round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuInit {
    #[default]
    Zero,
    /// U(−1, 1) per node from the parameters' init seed, in node order.
    Random,
}

impl FromStr for MuInit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(MuInit::Zero),
            "random" => Ok(MuInit::Random),
            _ => Err(format!("mu init must be zero or random, got {s:?}")),
        }
    }
}

impl fmt::Display for MuInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MuInit::Zero => "zero",
            MuInit::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEmbedParams {
    /// [d, p]
    pub w1: Tensor,
    /// P_1 … P_n, each [p, p]; P_n is applied first.
    pub p_layers: Vec<Tensor>,
    /// [p, p]
    pub w2: Tensor,
    pub rounds: usize,
    pub neighbor: NeighborMode,
    pub mu_init: MuInit,
    pub init_seed: u64,
}

pub struct S2vCache {
    adj: Vec<Vec<usize>>,
    xs: Vec<Vec<f64>>,
    /// mus[t][v], t = 0..=T
    mus: Vec<Vec<Vec<f64>>>,
    /// ins[t][v][k]: input row of the k-th applied σ matrix in round t
    ins: Vec<Vec<Vec<Vec<f64>>>>,
    mean: Vec<f64>,
}

impl GraphEmbedParams {
    pub fn init(d: usize, p: usize, layers: usize, rounds: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w1: init::glorot_uniform(&[d, p], d, p, &mut rng),
            p_layers: (0..layers).map(|_| init::glorot_uniform(&[p, p], p, p, &mut rng)).collect(),
            w2: init::glorot_uniform(&[p, p], p, p, &mut rng),
            rounds,
            neighbor: NeighborMode::Undirected,
            mu_init: MuInit::Zero,
            init_seed: seed,
        }
    }

    pub fn zeros(d: usize, p: usize, layers: usize, rounds: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[d, p]),
            p_layers: vec![Tensor::zeros(&[p, p]); layers],
            w2: Tensor::zeros(&[p, p]),
            rounds,
            neighbor: NeighborMode::Undirected,
            mu_init: MuInit::Zero,
            init_seed: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.dim(0)
    }

    pub fn dim(&self) -> usize {
        self.w1.dim(1)
    }

    pub fn validate(&self) -> Result<(), CodeError> {
        let (d, p) = (self.input_dim(), self.dim());
        let bad = |m: String| Err(CodeError::Nn(NnError::ShapeMismatch(m)));
        if self.rounds == 0 {
            return Err(CodeError::BadParams("T must be at least 1".into()));
        }
        if self.p_layers.is_empty() {
            return Err(CodeError::BadParams("σ needs at least one layer".into()));
        }
        if self.w1.shape() != [d, p] || self.w2.shape() != [p, p] {
            return bad(format!("w1 {:?}, w2 {:?}", self.w1.shape(), self.w2.shape()));
        }
        if let Some(t) = self.p_layers.iter().find(|t| t.shape() != [p, p]) {
            return bad(format!("σ layer {:?}, expected [{p}, {p}]", t.shape()));
        }
        Ok(())
    }

    /// σ(l) and the input row of every applied matrix.
    fn sigma(&self, l: Vec<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let p = self.dim();
        let n = self.p_layers.len();
        let mut ins = Vec::with_capacity(n);
        let mut cur = l;
        for k in 0..n {
            let mut z = vec![0.0; p];
            vec_mat(&cur, self.p_layers[n - 1 - k].data(), p, &mut z);
            ins.push(cur);
            if k + 1 < n {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = z;
        }
        (cur, ins)
    }

    fn initial_mu(&self, nodes: usize) -> Vec<Vec<f64>> {
        let p = self.dim();
        match self.mu_init {
            MuInit::Zero => vec![vec![0.0; p]; nodes],
            MuInit::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
                (0..nodes).map(|_| init::uniform(&[p], 1.0, &mut rng).into_data()).collect()
            }
        }
    }

    /// Graph vector from node features `xs` and adjacency lists.
    pub fn forward_cached(&self, xs: Vec<Vec<f64>>, adj: Vec<Vec<usize>>) -> Result<(Vec<f64>, S2vCache), CodeError> {
        if xs.is_empty() {
            return Err(CodeError::EmptyGraph);
        }
        self.validate()?;
        let (d, p) = (self.input_dim(), self.dim());
        if let Some(x) = xs.iter().find(|x| x.len() != d) {
            return Err(CodeError::Nn(NnError::ShapeMismatch(format!("node feature has {} values, expected {d}", x.len()))));
        }
        let xw: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let mut r = vec![0.0; p];
                vec_mat(x, self.w1.data(), p, &mut r);
                r
            })
            .collect();
        let mut mus = vec![self.initial_mu(xs.len())];
        let mut ins = Vec::with_capacity(self.rounds);
        for _ in 0..self.rounds {
            let prev = mus.last().expect("round 0 present");
            let mut next = Vec::with_capacity(xs.len());
            let mut round_ins = Vec::with_capacity(xs.len());
            for (v, nbrs) in adj.iter().enumerate() {
                let mut l = vec![0.0; p];
                for &u in nbrs {
                    l.iter_mut().zip(&prev[u]).for_each(|(a, b)| *a += b);
                }
                let (s, layer_ins) = self.sigma(l);
                next.push(xw[v].iter().zip(&s).map(|(a, b)| (a + b).tanh()).collect());
                round_ins.push(layer_ins);
            }
            mus.push(next);
            ins.push(round_ins);
        }
        let last = mus.last().expect("T ≥ 1");
        let mut mean = vec![0.0; p];
        for mu in last {
            mean.iter_mut().zip(mu).for_each(|(a, b)| *a += b);
        }
        mean.iter_mut().for_each(|a| *a /= last.len() as f64);
        let mut out = vec![0.0; p];
        vec_mat(&mean, self.w2.data(), p, &mut out);
        Ok((out, S2vCache { adj, xs, mus, ins, mean }))
    }

    pub fn embed(&self, g: &CallGraph, emb: &OpcodeEmbedding, weights: &OpcodeWeights) -> Result<GraphVector, CodeError> {
        let (v, _) = self.forward_cached(node_features(g, emb, weights), g.adjacency(self.neighbor))?;
        Ok(GraphVector(v))
    }

    /// Gradients in parameter order for an upstream gradient `dout` on the
    /// graph vector.
    pub fn backward(&self, cache: &S2vCache, dout: &[f64]) -> Vec<Tensor> {
        let p = self.dim();
        let n_nodes = cache.xs.len();
        let n = self.p_layers.len();
        let mut grads = zeros_like(self);
        let (dw1_i, dw2_i) = (0, n + 1);
        outer_acc(&cache.mean, dout, grads[dw2_i].data_mut());
        let mut dmean = vec![0.0; p];
        mat_vec(self.w2.data(), dout, &mut dmean);
        let mut dmu: Vec<Vec<f64>> = vec![dmean.iter().map(|g| g / n_nodes as f64).collect(); n_nodes];
        let mut dxw = vec![vec![0.0; p]; n_nodes];
        for t in (0..self.rounds).rev() {
            let mut dprev = vec![vec![0.0; p]; n_nodes];
            for v in 0..n_nodes {
                let mu = &cache.mus[t + 1][v];
                let da: Vec<f64> = dmu[v].iter().zip(mu).map(|(g, y)| g * (1.0 - y * y)).collect();
                dxw[v].iter_mut().zip(&da).for_each(|(a, b)| *a += b);
                let mut ds = da;
                let layer_ins = &cache.ins[t][v];
                for k in (0..n).rev() {
                    let pi = n - 1 - k;
                    outer_acc(&layer_ins[k], &ds, grads[1 + pi].data_mut());
                    let mut din = vec![0.0; p];
                    mat_vec(self.p_layers[pi].data(), &ds, &mut din);
                    if k > 0 {
                        din.iter_mut().zip(&layer_ins[k]).for_each(|(g, &a)| {
                            if a <= 0.0 {
                                *g = 0.0
                            }
                        });
                    }
                    ds = din;
                }
                for &u in &cache.adj[v] {
                    dprev[u].iter_mut().zip(&ds).for_each(|(a, b)| *a += b);
                }
            }
            dmu = dprev;
        }
        for v in 0..n_nodes {
            outer_acc(&cache.xs[v], &dxw[v], grads[dw1_i].data_mut());
        }
        grads
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("s2v")
            .with_meta("rounds", self.rounds)
            .with_meta("layers", self.p_layers.len())
            .with_meta("neighbor", self.neighbor)
            .with_meta("mu_init", self.mu_init)
            .with_meta("init_seed", self.init_seed);
        ck.push("w1", &self.w1);
        for (i, t) in self.p_layers.iter().enumerate() {
            ck.push(format!("p{}", i + 1), t);
        }
        ck.push("w2", &self.w2);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        ck.expect_kind("s2v")?;
        let w1 = ck.tensor("w1")?.clone();
        if w1.shape().len() != 2 {
            return Err(NnError::Checkpoint("w1 must be 2-D".into()));
        }
        let p = w1.dim(1);
        let layers: usize = ck.meta_parse("layers")?;
        Ok(Self {
            p_layers: (1..=layers).map(|i| ck.tensor_shaped(&format!("p{i}"), &[p, p])).collect::<Result<_, _>>()?,
            w2: ck.tensor_shaped("w2", &[p, p])?,
            w1,
            rounds: ck.meta_parse("rounds")?,
            neighbor: ck.meta_parse("neighbor")?,
            mu_init: ck.meta_parse("mu_init")?,
            init_seed: ck.meta_parse("init_seed")?,
        })
    }
}

impl Params for GraphEmbedParams {
    fn params(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.w1];
        v.extend(self.p_layers.iter());
        v.push(&self.w2);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.w1];
        v.extend(self.p_layers.iter_mut());
        v.push(&mut self.w2);
        v
    }
}

/// Embeds every graph in parallel; output order follows input order.
pub fn embed_graphs(
    graphs: &[CallGraph],
    params: &GraphEmbedParams,
    emb: &OpcodeEmbedding,
    weights: &OpcodeWeights,
) -> Result<Vec<GraphVector>, CodeError> {
    graphs.par_iter().map(|g| params.embed(g, emb, weights)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for GraphTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lr: 0.001,
            seed: 0,
        }
    }
}

/// End-to-end training of structure2vec and a head on labeled graphs.
/// Opcode embeddings stay fixed.
pub fn train_graph_classifier(
    graphs: &[CallGraph],
    targets: &Targets,
    emb: &OpcodeEmbedding,
    weights: &OpcodeWeights,
    mut params: GraphEmbedParams,
    mut head: MlpHead,
    cfg: &GraphTrainConfig,
) -> Result<(GraphEmbedParams, MlpHead, Vec<EpochLog>), CodeError> {
    if graphs.is_empty() {
        return Err(CodeError::EmptyDataset);
    }
    if graphs.len() != targets.len() {
        return Err(CodeError::LengthMismatch(graphs.len(), targets.len()));
    }
    targets.validate()?;
    params.validate()?;
    if head.input_dim() != params.dim() || head.outputs() != targets.outputs() {
        return Err(CodeError::Nn(NnError::ShapeMismatch(format!(
            "head maps {} → {}, need {} → {}",
            head.input_dim(),
            head.outputs(),
            params.dim(),
            targets.outputs()
        ))));
    }
    let inputs: Vec<(Vec<Vec<f64>>, Vec<Vec<usize>>)> = graphs
        .iter()
        .map(|g| (node_features(g, emb, weights), g.adjacency(params.neighbor)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt_g = Adam::new(AdamConfig::with_lr(cfg.lr), &params);
    let mut opt_h = Adam::new(AdamConfig::with_lr(cfg.lr), &head);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in shuffled(graphs.len(), &mut rng).chunks(cfg.batch_size.max(1)) {
            let mut gg = zeros_like(&params);
            let mut gh = zeros_like(&head);
            for &i in batch {
                let (xs, adj) = inputs[i].clone();
                let (v, cache) = params.forward_cached(xs, adj)?;
                let (out, hcache) = head.forward_cached(&v)?;
                let (loss, dout, ok) = targets.loss(i, &out);
                loss_sum += loss;
                correct += ok as usize;
                let dv = head.backward(&hcache, &dout, &mut gh);
                accumulate(&mut gg, &params.backward(&cache, &dv));
            }
            let k = 1.0 / batch.len() as f64;
            gg.iter_mut().chain(gh.iter_mut()).for_each(|g| g.scale(k));
            opt_g.update(&mut params, &gg)?;
            opt_h.update(&mut head, &gh)?;
        }
        if !params.all_finite() || !head.all_finite() {
            return Err(CodeError::NonFinite(epoch));
        }
        let n = graphs.len() as f64;
        log.push(EpochLog {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        });
    }
    Ok((params, head, log))
}
