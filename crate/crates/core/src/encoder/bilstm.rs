use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CaptureSequence, EncoderError, NetworkFeature, FEATURE_DIM};
use crate::image::NUM_CLASSES;
use crate::nn::{
    accumulate, softmax, sparse_ce_loss, Adam, AdamConfig, CellMode, Checkpoint, Dense, LstmCell, NnError, Params,
    Tensor,
};
use crate::training::{shuffled, EpochLog};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_SEQUENCE_CAP: usize = 2_000;

/// Forward and backward LSTM cells over a capture's flow vectors, with a
/// dense 2H → 5 classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmModel {
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub head: Dense,
}

/// Activations of one sequence, for backpropagation.
pub struct BiLstmCache {
    fwd: crate::nn::LstmCache,
    bwd: crate::nn::LstmCache,
    feature: Vec<f64>,
}

impl BiLstmModel {
    pub fn init(input: usize, hidden: usize, mode: CellMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut forward = LstmCell::glorot(input, hidden, &mut rng);
        let mut backward = LstmCell::glorot(input, hidden, &mut rng);
        forward.mode = mode;
        backward.mode = mode;
        let head = Dense::glorot(2 * hidden, NUM_CLASSES, &mut rng);
        Self { forward, backward, head }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            forward: LstmCell::zeros(input, hidden),
            backward: LstmCell::zeros(input, hidden),
            head: Dense::zeros(2 * hidden, NUM_CLASSES),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn set_mode(&mut self, mode: CellMode) {
        self.forward.mode = mode;
        self.backward.mode = mode;
    }

    /// concat(forward final h, backward final h) plus the caches.
    pub fn encode_cached<X: AsRef<[f64]> + Clone>(&self, xs: &[X]) -> Result<(Vec<f64>, BiLstmCache), EncoderError> {
        if xs.is_empty() {
            return Err(EncoderError::EmptySequence);
        }
        let (hf, fwd) = self.forward.run(xs)?;
        let rev: Vec<X> = xs.iter().rev().cloned().collect();
        let (hb, bwd) = self.backward.run(&rev)?;
        let mut feature = hf.h;
        feature.extend(hb.h);
        Ok((feature.clone(), BiLstmCache { fwd, bwd, feature }))
    }

    pub fn encode<X: AsRef<[f64]> + Clone>(&self, xs: &[X]) -> Result<Vec<f64>, EncoderError> {
        Ok(self.encode_cached(xs)?.0)
    }

    pub fn logits<X: AsRef<[f64]> + Clone>(&self, xs: &[X]) -> Result<Vec<f64>, EncoderError> {
        Ok(self.head.apply(&self.encode(xs)?))
    }

    pub fn predict_proba<X: AsRef<[f64]> + Clone>(&self, xs: &[X]) -> Result<Vec<f64>, EncoderError> {
        Ok(softmax(&self.logits(xs)?))
    }

    /// Gradients (in [`Params`] order) given dL/dlogits for one sequence.
    pub fn backward(&self, cache: &BiLstmCache, dlogits: &[f64], truncate: Option<usize>) -> Vec<Tensor> {
        let h = self.hidden();
        let mut head_grads = vec![Tensor::zeros(self.head.weight.shape()), Tensor::zeros(self.head.bias.shape())];
        let dfeat = self.head.backward_row(&cache.feature, dlogits, &mut head_grads);
        let (gf, _) = self.forward.backward(&cache.fwd, &dfeat[..h], truncate);
        let (gb, _) = self.backward.backward(&cache.bwd, &dfeat[h..], truncate);
        gf.into_iter().chain(gb).chain(head_grads).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mode = match self.forward.mode {
            CellMode::Standard => "standard",
            CellMode::Paper => "paper",
        };
        let mut ck = Checkpoint::new("bilstm")
            .with_meta("input", self.forward.input_dim())
            .with_meta("hidden", self.hidden())
            .with_meta("cell", mode);
        for (name, t) in param_names().iter().zip(self.params()) {
            ck.push(name.as_str(), t);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        ck.expect_kind("bilstm")?;
        let mut m = Self::zeros(ck.meta_parse("input")?, ck.meta_parse("hidden")?);
        m.set_mode(match ck.meta("cell")? {
            "paper" => CellMode::Paper,
            _ => CellMode::Standard,
        });
        for (name, slot) in param_names().iter().zip(m.params_mut()) {
            *slot = ck.tensor_shaped(name, slot.shape())?;
        }
        Ok(m)
    }
}

fn param_names() -> Vec<String> {
    let mut names = Vec::new();
    for dir in ["fwd", "bwd"] {
        for kind in ["u", "w", "b"] {
            for gate in crate::nn::GATES {
                names.push(format!("{dir}.{kind}.{gate}"));
            }
        }
    }
    names.push("head.weight".into());
    names.push("head.bias".into());
    names
}

impl Params for BiLstmModel {
    fn params(&self) -> Vec<&Tensor> {
        let mut v = self.forward.params();
        v.extend(self.backward.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.forward.params_mut();
        v.extend(self.backward.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}

/// Keeps the last `cap` vectors of an over-long sequence.
pub fn apply_cap<'a, T>(xs: &'a [T], cap: usize, name: &str) -> &'a [T] {
    if xs.len() > cap {
        warn!("{name}: {} flows exceed the cap of {cap}; dropping the earliest {}", xs.len(), xs.len() - cap);
        &xs[xs.len() - cap..]
    } else {
        xs
    }
}

/// Bidirectional encoding of one capture.
pub fn encode_capture(model: &BiLstmModel, seq: &CaptureSequence) -> Result<NetworkFeature, EncoderError> {
    encode_capture_capped(model, seq, DEFAULT_SEQUENCE_CAP)
}

pub fn encode_capture_capped(model: &BiLstmModel, seq: &CaptureSequence, cap: usize) -> Result<NetworkFeature, EncoderError> {
    let xs = apply_cap(&seq.vectors, cap, &seq.source_name);
    Ok(NetworkFeature(model.encode(xs)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Trailing steps that receive gradient; `None` is full BPTT.
    pub truncation: Option<usize>,
    pub cap: usize,
    pub cell: CellMode,
    pub seed: u64,
}

impl Default for BiLstmTrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            epochs: 50,
            batch_size: 8,
            lr: 0.001,
            truncation: None,
            cap: DEFAULT_SEQUENCE_CAP,
            cell: CellMode::Standard,
            seed: 0,
        }
    }
}

/// Trains the bi-LSTM and its softmax head on labeled capture sequences.
pub fn train_bilstm(seqs: &[CaptureSequence], cfg: &BiLstmTrainConfig) -> Result<(BiLstmModel, Vec<EpochLog>), EncoderError> {
    if seqs.is_empty() {
        return Err(EncoderError::EmptyDataset);
    }
    if let Some(s) = seqs.iter().find(|s| s.vectors.is_empty()) {
        return Err(EncoderError::EmptyCapture(s.source_name.clone()));
    }
    let mut classes: Vec<_> = seqs.iter().map(|s| s.label).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(EncoderError::DegenerateLabels);
    }
    let capped: Vec<&[crate::encoder::FlowVector]> =
        seqs.iter().map(|s| apply_cap(&s.vectors, cfg.cap, &s.source_name)).collect();
    let mut model = BiLstmModel::init(FEATURE_DIM, cfg.hidden, cfg.cell, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), &model);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let order = shuffled(seqs.len(), &mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grads = crate::nn::zeros_like(&model);
            for &i in batch {
                let (feature, cache) = model.encode_cached(capped[i])?;
                let logits = Tensor::new(vec![1, NUM_CLASSES], model.head.apply(&feature))?;
                let label = seqs[i].label.id() as usize;
                let (loss, dlogits) = sparse_ce_loss(&logits, &[label])?;
                loss_sum += loss;
                if super::cnn::argmax_rows(&logits)[0] == label {
                    correct += 1;
                }
                accumulate(&mut grads, &model.backward(&cache, dlogits.data(), cfg.truncation));
            }
            grads.iter_mut().for_each(|g| g.scale(1.0 / batch.len() as f64));
            opt.update(&mut model, &grads)?;
        }
        if !model.all_finite() {
            return Err(EncoderError::NonFinite(epoch));
        }
        let n = seqs.len() as f64;
        log.push(EpochLog {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        });
    }
    Ok((model, log))
}
