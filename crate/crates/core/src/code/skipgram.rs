//! Skip-gram with negative sampling over opcode sequences.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CodeError, OpcodeVocab};
use crate::nn::{init, sigmoid, Checkpoint, NnError, Tensor};

/// Input-side skip-gram vectors, one row per vocabulary index plus OOV.
#[derive(Debug, Clone, PartialEq)]
pub struct OpcodeEmbedding {
    /// [|V|+1, d]
    pub matrix: Tensor,
}

impl OpcodeEmbedding {
    pub fn dim(&self) -> usize {
        self.matrix.dim(1)
    }

    pub fn rows(&self) -> usize {
        self.matrix.dim(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    /// Checkpoint of kind `opcode2vec` carrying the vocabulary as JSON.
    pub fn to_checkpoint(&self, vocab: &OpcodeVocab) -> Checkpoint {
        let mut ck = Checkpoint::new("opcode2vec").with_meta("vocab", vocab.to_json());
        ck.push("matrix", &self.matrix);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, OpcodeVocab), NnError> {
        ck.expect_kind("opcode2vec")?;
        let vocab = OpcodeVocab::from_json(ck.meta("vocab")?).map_err(|e| NnError::Checkpoint(format!("vocab: {e}")))?;
        let m = ck.tensor("matrix")?;
        if m.shape().len() != 2 || m.dim(0) != vocab.rows() {
            return Err(NnError::Checkpoint(format!(
                "matrix {:?} does not fit a vocabulary of {} rows",
                m.shape(),
                vocab.rows()
            )));
        }
        Ok((Self { matrix: m.clone() }, vocab))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting rate, decayed linearly towards `lr · 1e-4`.
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 0,
        }
    }
}

/// Trains on sequences of vocabulary indices (OOV included). Input rows
/// start at U(±0.5/d), output rows at zero.
pub fn train_skipgram(corpus: &[Vec<usize>], vocab: &OpcodeVocab, cfg: &SkipGramConfig) -> Result<OpcodeEmbedding, CodeError> {
    let rows = vocab.rows();
    let mut freq = vec![0u64; rows];
    for &t in corpus.iter().flatten() {
        if t >= rows {
            return Err(CodeError::BadIndex(t));
        }
        freq[t] += 1;
    }
    if freq.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(CodeError::DegenerateCorpus);
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input = init::uniform(&[rows, d], 0.5 / d as f64, &mut rng);
    let mut output = Tensor::zeros(&[rows, d]);
    let noise = WeightedIndex::new(freq.iter().map(|&c| (c as f64).powf(0.75))).expect("some token occurs");

    let total = (cfg.epochs * corpus.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
    let mut seen = 0usize;
    let mut grad = vec![0.0; d];
    for epoch in 1..=cfg.epochs {
        for sentence in corpus {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = cfg.lr * (1.0 - seen as f64 / total).max(1e-4);
                seen += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(sentence.len());
                for (cpos, &context) in sentence.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let v = &input.data()[center * d..(center + 1) * d].to_vec();
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let u = &mut output.data_mut()[target * d..(target + 1) * d];
                        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                        let g = lr * (label - sigmoid(dot));
                        for j in 0..d {
                            grad[j] += g * u[j];
                            u[j] += g * v[j];
                        }
                    }
                    let row = &mut input.data_mut()[center * d..(center + 1) * d];
                    row.iter_mut().zip(&grad).for_each(|(a, g)| *a += g);
                }
            }
        }
        if !input.all_finite() {
            return Err(CodeError::NonFinite(epoch));
        }
    }
    Ok(OpcodeEmbedding { matrix: input })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
