use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::nn::{accumulate, hinge_loss, softmax, tanh_backward, zeros_like, Adam, AdamConfig, Checkpoint, Dense, NnError, Params, Tensor};
use crate::training::{shuffled, EpochLog};

pub const DEFAULT_HEAD_WIDTH: usize = 64;

/// Detection verdict from the sign of the head's score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Benign,
    Malware,
}

impl Verdict {
    /// Strictly positive is malware; zero is benign.
    pub fn from_score(score: f64) -> Self {
        if score > 0.0 {
            Verdict::Malware
        } else {
            Verdict::Benign
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Verdict::Benign => -1,
            Verdict::Malware => 1,
        }
    }
}

/// Training targets for a head: ±1 detection labels or class ids.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Sign(Vec<i8>),
    Class { labels: Vec<usize>, classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Sign(v) => v.len(),
            Targets::Class { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Head output width: 1 for detection.
    pub fn outputs(&self) -> usize {
        match self {
            Targets::Sign(_) => 1,
            Targets::Class { classes, .. } => *classes,
        }
    }

    /// Rejects bad values and single-class targets.
    pub fn validate(&self) -> Result<(), FusionError> {
        let distinct: std::collections::BTreeSet<i64> = match self {
            Targets::Sign(v) => {
                if let Some(&bad) = v.iter().find(|&&y| y != 1 && y != -1) {
                    return Err(FusionError::BadLabel(bad as i64));
                }
                v.iter().map(|&y| y as i64).collect()
            }
            Targets::Class { labels, classes } => {
                if let Some(&bad) = labels.iter().find(|&&y| y >= *classes) {
                    return Err(FusionError::BadLabel(bad as i64));
                }
                labels.iter().map(|&y| y as i64).collect()
            }
        };
        if distinct.len() < 2 {
            return Err(FusionError::DegenerateLabels);
        }
        Ok(())
    }

    /// Loss of one output row against target `i`, its gradient, and
    /// whether the prediction is correct.
    pub fn loss(&self, i: usize, out: &[f64]) -> (f64, Vec<f64>, bool) {
        match self {
            Targets::Sign(v) => {
                let y = v[i] as f64;
                let (l, g) = hinge_loss(&out[..1], &[y]);
                (l, g, Verdict::from_score(out[0]).sign() == v[i])
            }
            Targets::Class { labels, .. } => {
                let p = softmax(out);
                let y = labels[i];
                let g = p.iter().enumerate().map(|(j, &pj)| pj - if j == y { 1.0 } else { 0.0 }).collect();
                (-p[y].max(1e-300).ln(), g, argmax(out) == y)
            }
        }
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Two affine maps with tanh between them (identity when `linear`).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub layer1: Dense,
    pub layer2: Dense,
    pub linear: bool,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Vec<f64>,
    h: Vec<f64>,
}

impl MlpHead {
    pub fn init(input: usize, hidden: usize, outputs: usize, linear: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layer1: Dense::glorot(input, hidden, &mut rng),
            layer2: Dense::glorot(hidden, outputs, &mut rng),
            linear,
        }
    }

    pub fn zeros(input: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            layer1: Dense::zeros(input, hidden),
            layer2: Dense::zeros(hidden, outputs),
            linear: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.input_dim()
    }

    pub fn outputs(&self) -> usize {
        self.layer2.output_dim()
    }

    fn check(&self, x: &[f64]) -> Result<(), FusionError> {
        if x.len() != self.input_dim() {
            return Err(FusionError::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache), FusionError> {
        self.check(x)?;
        let mut h = self.layer1.apply(x);
        if !self.linear {
            h.iter_mut().for_each(|v| *v = v.tanh());
        }
        let out = self.layer2.apply(&h);
        Ok((out, MlpCache { x: x.to_vec(), h }))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, FusionError> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Accumulates parameter gradients into `grads` (parameter order) and
    /// returns the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grads: &mut [Tensor]) -> Vec<f64> {
        let mut dh = self.layer2.backward_row(&cache.h, dout, &mut grads[2..4]);
        if !self.linear {
            dh.iter_mut().zip(&cache.h).for_each(|(g, &y)| *g *= tanh_backward(y));
        }
        self.layer1.backward_row(&cache.x, &dh, &mut grads[0..2])
    }

    /// Detection score and verdict; the head must have one output.
    pub fn detect(&self, x: &[f64]) -> Result<(f64, Verdict), FusionError> {
        let s = self.forward(x)?[0];
        Ok((s, Verdict::from_score(s)))
    }

    /// Class probabilities.
    pub fn categorize(&self, x: &[f64]) -> Result<Vec<f64>, FusionError> {
        Ok(softmax(&self.forward(x)?))
    }

    /// Predicted label: ±1 for a one-output head, otherwise the argmax class.
    pub fn predict(&self, x: &[f64]) -> Result<i64, FusionError> {
        let out = self.forward(x)?;
        Ok(if out.len() == 1 {
            Verdict::from_score(out[0]).sign() as i64
        } else {
            argmax(&out) as i64
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("mlp").with_meta("linear", self.linear);
        ck.push("layer1.weight", &self.layer1.weight);
        ck.push("layer1.bias", &self.layer1.bias);
        ck.push("layer2.weight", &self.layer2.weight);
        ck.push("layer2.bias", &self.layer2.bias);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        ck.expect_kind("mlp")?;
        let w1 = ck.tensor("layer1.weight")?;
        let w2 = ck.tensor("layer2.weight")?;
        if w1.shape().len() != 2 || w2.shape().len() != 2 {
            return Err(NnError::Checkpoint("mlp weights must be 2-D".into()));
        }
        let (i, h, o) = (w1.dim(0), w1.dim(1), w2.dim(1));
        Ok(Self {
            layer1: Dense {
                weight: ck.tensor_shaped("layer1.weight", &[i, h])?,
                bias: ck.tensor_shaped("layer1.bias", &[h])?,
            },
            layer2: Dense {
                weight: ck.tensor_shaped("layer2.weight", &[h, o])?,
                bias: ck.tensor_shaped("layer2.bias", &[o])?,
            },
            linear: ck.meta_parse("linear")?,
        })
    }
}

impl Params for MlpHead {
    fn params(&self) -> Vec<&Tensor> {
        let mut v = self.layer1.params();
        v.extend(self.layer2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.layer1.params_mut();
        v.extend(self.layer2.params_mut());
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub linear_head: bool,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HEAD_WIDTH,
            epochs: 100,
            batch_size: 32,
            lr: 0.001,
            linear_head: false,
            seed: 0,
        }
    }
}

/// Mini-batch Adam on a fresh head sized for `targets`.
pub fn train_head(features: &[Vec<f64>], targets: &Targets, cfg: &MlpTrainConfig) -> Result<(MlpHead, Vec<EpochLog>), FusionError> {
    if features.is_empty() {
        return Err(FusionError::Empty);
    }
    if features.len() != targets.len() {
        return Err(FusionError::LengthMismatch(features.len(), targets.len()));
    }
    targets.validate()?;
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(FusionError::DimMismatch { expected: dim, got: bad.len() });
    }
    let mut head = MlpHead::init(dim, cfg.hidden, targets.outputs(), cfg.linear_head, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), &head);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in shuffled(features.len(), &mut rng).chunks(cfg.batch_size.max(1)) {
            let mut grads = zeros_like(&head);
            for &i in batch {
                let (out, cache) = head.forward_cached(&features[i])?;
                let (loss, dout, ok) = targets.loss(i, &out);
                loss_sum += loss;
                correct += ok as usize;
                let mut g = zeros_like(&head);
                head.backward(&cache, &dout, &mut g);
                accumulate(&mut grads, &g);
            }
            grads.iter_mut().for_each(|g| g.scale(1.0 / batch.len() as f64));
            opt.update(&mut head, &grads)?;
        }
        if !head.all_finite() {
            return Err(FusionError::NonFinite(epoch));
        }
        let n = features.len() as f64;
        log.push(EpochLog {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        });
    }
    Ok((head, log))
}

/// Hinge-loss detector on ±1 labels.
pub fn train_detector(features: &[Vec<f64>], labels: &[i8], cfg: &MlpTrainConfig) -> Result<(MlpHead, Vec<EpochLog>), FusionError> {
    train_head(features, &Targets::Sign(labels.to_vec()), cfg)
}

/// Softmax/cross-entropy categorizer on class ids.
pub fn train_categorizer(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    cfg: &MlpTrainConfig,
) -> Result<(MlpHead, Vec<EpochLog>), FusionError> {
    train_head(
        features,
        &Targets::Class {
            labels: labels.to_vec(),
            classes,
        },
        cfg,
    )
}
