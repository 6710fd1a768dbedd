//! Per-epoch training records shared by every trainer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// `epoch,loss,accuracy` CSV with a header line.
pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,loss,accuracy\n");
    for e in log {
        s.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.accuracy));
    }
    s
}

/// Fisher-Yates permutation of `0..n`.
pub(crate) fn shuffled<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
