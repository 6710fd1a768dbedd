use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Dalvik opcodes in live use; the vocabulary never grows past this.
pub const MAX_OPCODES: usize = 221;

/// Opcode mnemonics by descending frequency, ties lexicographic. Index
/// `len()` is the out-of-vocabulary slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpcodeVocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    /// Occurrences of tokens that did not make it into the vocabulary.
    oov_count: u64,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl OpcodeVocab {
    /// Builds from `(mnemonic, count)` pairs, re-sorting them into
    /// vocabulary order and keeping at most `max_size`.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>, max_size: usize) -> Self {
        let mut pairs: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let dropped: u64 = pairs.iter().skip(max_size).map(|(_, c)| c).sum();
        pairs.truncate(max_size);
        let (tokens, counts) = pairs.into_iter().unzip();
        let mut v = Self {
            tokens,
            counts,
            oov_count: dropped,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn oov_index(&self) -> usize {
        self.tokens.len()
    }

    /// Rows an embedding matrix needs: every token plus OOV.
    pub fn rows(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn oov_count(&self) -> u64 {
        self.oov_count
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or the OOV index.
    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(self.oov_index())
    }

    pub fn token(&self, i: usize) -> &str {
        self.tokens.get(i).map_or("<oov>", |s| s.as_str())
    }

    /// Count for any index including OOV.
    pub fn count(&self, i: usize) -> u64 {
        self.counts.get(i).copied().unwrap_or(self.oov_count)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.oov_count
    }

    /// Empirical probability of index `i` (OOV included).
    pub fn probability(&self, i: usize) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.count(i) as f64 / t as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vocab serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let mut v: Self = serde_json::from_str(s)?;
        v.reindex();
        Ok(v)
    }
}

/// Vocabulary over every mnemonic in `corpus`, capped at [`MAX_OPCODES`].
pub fn build_vocab<I, S, T>(corpus: I) -> OpcodeVocab
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for seq in corpus {
        for t in seq {
            *counts.entry(t.as_ref().to_string()).or_default() += 1;
        }
    }
    OpcodeVocab::from_counts(counts, MAX_OPCODES)
}

/// `(rank, mnemonic, count)` with rank starting at 1.
pub fn opcode_histogram(vocab: &OpcodeVocab) -> Vec<(usize, String, u64)> {
    vocab
        .tokens()
        .iter()
        .zip(vocab.counts())
        .enumerate()
        .map(|(i, (t, &c))| (i + 1, t.clone(), c))
        .collect()
}

pub fn histogram_csv(vocab: &OpcodeVocab) -> String {
    let mut s = String::from("rank,mnemonic,count\n");
    for (r, t, c) in opcode_histogram(vocab) {
        s.push_str(&format!("{r},{t},{c}\n"));
    }
    s
}

/// Least-squares slope of log(count) against log(rank) over the first
/// `max_rank` ranks.
pub fn rank_frequency_slope(vocab: &OpcodeVocab, max_rank: usize) -> f64 {
    let pts: Vec<(f64, f64)> = opcode_histogram(vocab)
        .into_iter()
        .take(max_rank)
        .map(|(r, _, c)| ((r as f64).ln(), (c as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
