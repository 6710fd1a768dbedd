use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EncoderError, FlowVector, FEATURE_DIM};
use crate::image::{FlowImage, ImageCorpus, NUM_CLASSES, SIDE};
use crate::nn::{
    dropout_mask, maxpool2_backward, maxpool2_forward, relu, relu_backward, sparse_ce_loss, Adam, AdamConfig,
    Checkpoint, Conv2d, Dense, NnError, Padding, Params, Tensor,
};
use crate::training::{shuffled, EpochLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub c1: usize,
    pub c2: usize,
    pub padding: Padding,
    pub dropout: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            c1: 16,
            c2: 32,
            padding: Padding::Valid,
            dropout: 0.5,
        }
    }
}

impl CnnConfig {
    /// Side length after conv → pool → conv → pool on a 28×28 input.
    pub fn final_side(&self) -> usize {
        let s = self.padding.output_side(SIDE) / 2;
        self.padding.output_side(s) / 2
    }

    pub fn flatten_dim(&self) -> usize {
        self.final_side() * self.final_side() * self.c2
    }
}

/// conv3×3 → ReLU → pool → conv3×3 → ReLU → pool → flatten → dropout →
/// fc1 (32, the flow feature) → fc2 (5 logits).
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc1: Dense,
    pub fc2: Dense,
    pub config: CnnConfig,
}

/// Activations kept from a training forward pass.
pub struct CnnCache {
    x: Tensor,
    a1: Tensor,
    r1: Tensor,
    arg1: Vec<usize>,
    a2: Tensor,
    r2: Tensor,
    arg2: Vec<usize>,
    mask: Option<Tensor>,
    dropped: Tensor,
    y3: Tensor,
}

impl CnnModel {
    pub fn init(config: CnnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv1 = Conv2d::he(1, config.c1, config.padding, &mut rng);
        let conv2 = Conv2d::he(config.c1, config.c2, config.padding, &mut rng);
        let fc1 = Dense::glorot(config.flatten_dim(), FEATURE_DIM, &mut rng);
        // zero logits at the start: uniform softmax, loss ln 5
        let fc2 = Dense::zeros(FEATURE_DIM, NUM_CLASSES);
        Self {
            conv1,
            conv2,
            fc1,
            fc2,
            config,
        }
    }

    pub fn zeros(config: CnnConfig) -> Self {
        Self {
            conv1: Conv2d::zeros(1, config.c1, config.padding),
            conv2: Conv2d::zeros(config.c1, config.c2, config.padding),
            fc1: Dense::zeros(config.flatten_dim(), FEATURE_DIM),
            fc2: Dense::zeros(FEATURE_DIM, NUM_CLASSES),
            config,
        }
    }

    /// Batches images into an [N, 28, 28, 1] tensor scaled to [0, 1].
    pub fn batch(images: &[&FlowImage]) -> Tensor {
        let data: Vec<f64> = images.iter().flat_map(|img| img.to_unit()).collect();
        Tensor::new(vec![images.len(), SIDE, SIDE, 1], data).expect("784 pixels per image")
    }

    fn trunk(&self, x: &Tensor) -> Result<(Tensor, Tensor, Vec<usize>, Tensor, Tensor, Vec<usize>, Tensor), NnError> {
        let a1 = self.conv1.forward(x)?;
        let r1 = relu(&a1);
        let (p1, arg1) = maxpool2_forward(&r1)?;
        let a2 = self.conv2.forward(&p1)?;
        let r2 = relu(&a2);
        let (p2, arg2) = maxpool2_forward(&r2)?;
        let n = p2.dim(0);
        let flat = p2.reshape(&[n, self.config.flatten_dim()])?;
        Ok((a1, r1, arg1, a2, r2, arg2, flat))
    }

    /// Inference-mode fc1 activations, [N, 32].
    pub fn features(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let flat = self.trunk(x)?.6;
        self.fc1.forward(&flat)
    }

    /// Inference-mode logits, [N, 5].
    pub fn logits(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.fc2.forward(&self.features(x)?)
    }

    /// Training forward pass with an optional dropout mask source.
    pub fn forward_train(&self, x: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<(Tensor, CnnCache), NnError> {
        let (a1, r1, arg1, a2, r2, arg2, flat) = self.trunk(x)?;
        let (dropped, mask) = match rng {
            Some(rng) if self.config.dropout > 0.0 => {
                let mask = dropout_mask(flat.shape(), self.config.dropout, rng);
                let mut d = flat.clone();
                d.data_mut().iter_mut().zip(mask.data()).for_each(|(v, m)| *v *= m);
                (d, Some(mask))
            }
            _ => (flat, None),
        };
        let y3 = self.fc1.forward(&dropped)?;
        let logits = self.fc2.forward(&y3)?;
        Ok((
            logits,
            CnnCache {
                x: x.clone(),
                a1,
                r1,
                arg1,
                a2,
                r2,
                arg2,
                mask,
                dropped,
                y3,
            },
        ))
    }

    /// Parameter gradients (in [`Params`] order) given dL/dlogits.
    pub fn backward(&self, cache: &CnnCache, dlogits: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let (dy3, g_fc2) = self.fc2.backward(&cache.y3, dlogits)?;
        let (mut dflat, g_fc1) = self.fc1.backward(&cache.dropped, &dy3)?;
        if let Some(mask) = &cache.mask {
            dflat.data_mut().iter_mut().zip(mask.data()).for_each(|(g, m)| *g *= m);
        }
        let r2_shape = cache.r2.shape();
        let n = r2_shape[0];
        let dp2 = dflat.reshape(&[n, r2_shape[1] / 2, r2_shape[2] / 2, r2_shape[3]])?;
        let dr2 = maxpool2_backward(&dp2, &cache.arg2, r2_shape)?;
        let da2 = relu_backward(&cache.a2, &dr2);
        let (p1, _) = maxpool2_forward(&cache.r1)?;
        let (dp1, g_conv2) = self.conv2.backward(&p1, &da2)?;
        let dr1 = maxpool2_backward(&dp1, &cache.arg1, cache.r1.shape())?;
        let da1 = relu_backward(&cache.a1, &dr1);
        let (_, g_conv1) = self.conv1.backward(&cache.x, &da1)?;
        Ok([g_conv1, g_conv2, g_fc1, g_fc2].into_iter().flatten().collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::new("cnn")
            .with_meta("c1", c.c1)
            .with_meta("c2", c.c2)
            .with_meta("padding", if c.padding == Padding::Same { "same" } else { "valid" })
            .with_meta("dropout", c.dropout);
        for (name, t) in ["conv1.kernel", "conv1.bias", "conv2.kernel", "conv2.bias", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]
            .into_iter()
            .zip(self.params())
        {
            ck.push(name, t);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        ck.expect_kind("cnn")?;
        let config = CnnConfig {
            c1: ck.meta_parse("c1")?,
            c2: ck.meta_parse("c2")?,
            padding: ck.meta_parse("padding").map_err(|_| NnError::Checkpoint("bad padding".into()))?,
            dropout: ck.meta_parse("dropout")?,
        };
        let mut m = Self::zeros(config);
        let names = ["conv1.kernel", "conv1.bias", "conv2.kernel", "conv2.bias", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"];
        for (name, slot) in names.into_iter().zip(m.params_mut()) {
            *slot = ck.tensor_shaped(name, slot.shape())?;
        }
        Ok(m)
    }
}

impl Params for CnnModel {
    fn params(&self) -> Vec<&Tensor> {
        let mut v = self.conv1.params();
        v.extend(self.conv2.params());
        v.extend(self.fc1.params());
        v.extend(self.fc2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        v.extend(self.fc1.params_mut());
        v.extend(self.fc2.params_mut());
        v
    }
}

/// Inference pass up to fc1 for one image.
pub fn img2vec(model: &CnnModel, img: &FlowImage) -> FlowVector {
    img2vec_batch(model, std::slice::from_ref(img)).pop().expect("one image in, one vector out")
}

/// img2vec over many images, evaluated in fixed-size chunks.
pub fn img2vec_batch(model: &CnnModel, images: &[FlowImage]) -> Vec<FlowVector> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CHUNK) {
        let refs: Vec<&FlowImage> = chunk.iter().collect();
        let feats = model.features(&CnnModel::batch(&refs)).expect("model shapes are consistent");
        out.extend(feats.data().chunks(FEATURE_DIM).map(|r| FlowVector::new(r.to_vec()).expect("fc1 width is 32")));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnTrainConfig {
    pub arch: CnnConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        Self {
            arch: CnnConfig::default(),
            epochs: 50,
            lr: 0.001,
            batch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnTrainReport {
    /// Mean loss of the initial model over the corpus (inference mode).
    pub initial_loss: f64,
    pub epochs: Vec<EpochLog>,
}

/// Mean loss and accuracy of `model` over `corpus` in inference mode.
pub fn evaluate_cnn(model: &CnnModel, corpus: &ImageCorpus) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0;
    for (imgs, labels) in corpus.images.chunks(64).zip(corpus.labels.chunks(64)) {
        let refs: Vec<&FlowImage> = imgs.iter().collect();
        let logits = model.logits(&CnnModel::batch(&refs)).expect("consistent shapes");
        let ids: Vec<usize> = labels.iter().map(|l| l.id() as usize).collect();
        loss += sparse_ce_loss(&logits, &ids).expect("labels < 5").0 * ids.len() as f64;
        correct += argmax_rows(&logits).iter().zip(&ids).filter(|(p, y)| p == y).count();
    }
    let n = corpus.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

pub(crate) fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let k = t.dim(1);
    t.data()
        .chunks(k)
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

/// Mini-batch Adam on sparse categorical cross-entropy.
pub fn train_cnn(corpus: &ImageCorpus, cfg: &CnnTrainConfig) -> Result<(CnnModel, CnnTrainReport), EncoderError> {
    if corpus.is_empty() {
        return Err(EncoderError::EmptyCorpus);
    }
    let mut present = corpus.labels.clone();
    present.sort();
    present.dedup();
    if present.len() < NUM_CLASSES {
        warn!("training corpus has {} of {} classes", present.len(), NUM_CLASSES);
    }
    let mut model = CnnModel::init(cfg.arch, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), &model);
    let initial_loss = evaluate_cnn(&model, corpus).0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch_size.max(1);
    for epoch in 1..=cfg.epochs {
        let order = shuffled(corpus.len(), &mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(batch) {
            let refs: Vec<&FlowImage> = idx.iter().map(|&i| &corpus.images[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| corpus.labels[i].id() as usize).collect();
            let (logits, cache) = model.forward_train(&CnnModel::batch(&refs), Some(&mut rng))?;
            let (loss, dlogits) = sparse_ce_loss(&logits, &labels)?;
            loss_sum += loss * idx.len() as f64;
            correct += argmax_rows(&logits).iter().zip(&labels).filter(|(p, y)| p == y).count();
            let grads = model.backward(&cache, &dlogits)?;
            opt.update(&mut model, &grads)?;
        }
        if !model.all_finite() {
            return Err(EncoderError::NonFinite(epoch));
        }
        let n = corpus.len() as f64;
        epochs.push(EpochLog {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        });
    }
    Ok((model, CnnTrainReport { initial_loss, epochs }))
}
