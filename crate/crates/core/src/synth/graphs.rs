use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::code::{GraphLabel, RawGraph, RawNode};
use crate::image::ClassLabel;

const MNEMONICS: [&str; 40] = [
    "move", "move-result", "return-void", "const/4", "const-string", "if-eqz", "if-nez", "goto",
    "invoke-virtual", "invoke-direct", "invoke-static", "invoke-interface", "new-instance", "check-cast", "iget-object", "iput-object",
    "sget-object", "sput-object", "aget", "aput", "add-int", "sub-int", "mul-int", "div-int",
    "array-length", "new-array", "fill-array-data", "throw", "monitor-enter", "monitor-exit", "instance-of", "cmp-long",
    "int-to-long", "long-to-int", "xor-int", "shl-int", "packed-switch", "sparse-switch", "const-wide", "return-object",
];

/// Opcodes per class; classes draw from disjoint slices.
pub const OPCODES_PER_CLASS: usize = 8;

/// One generated call graph with its family.
#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub raw: RawGraph,
    pub label: ClassLabel,
}

/// Random call graphs (4–16 functions, a spanning call tree plus extra
/// edges) whose opcodes come from a class-specific, disjoint mnemonic set
/// with Zipf-like frequencies. Some functions are empty stubs. Labels cycle
/// through `classes` and are written as `L` records.
pub fn graph_corpus(n: usize, classes: &[ClassLabel], seed: u64) -> Vec<SyntheticGraph> {
    assert!(classes.len() * OPCODES_PER_CLASS <= MNEMONICS.len(), "too many classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = WeightedIndex::new((1..=OPCODES_PER_CLASS).map(|r| 1.0 / r as f64)).expect("positive weights");
    (0..n)
        .map(|i| {
            let k = i % classes.len();
            let ops = &MNEMONICS[k * OPCODES_PER_CLASS..(k + 1) * OPCODES_PER_CLASS];
            let size = rng.gen_range(4..=16u64);
            let nodes = (0..size)
                .map(|j| {
                    let len = if rng.gen_bool(0.15) { 0 } else { rng.gen_range(1..=12) };
                    RawNode {
                        id: j,
                        name: format!("Lapp{i}/C{};->m{j}", j % 3),
                        opcodes: (0..len).map(|_| ops[zipf.sample(&mut rng)].to_string()).collect(),
                    }
                })
                .collect();
            let mut edges: Vec<(u64, u64)> = (1..size).map(|j| (rng.gen_range(0..j), j)).collect();
            for _ in 0..size / 2 {
                let e = (rng.gen_range(0..size), rng.gen_range(0..size));
                if e.0 != e.1 && !edges.contains(&e) {
                    edges.push(e);
                }
            }
            SyntheticGraph {
                raw: RawGraph {
                    nodes,
                    edges,
                    label: Some(GraphLabel::Family(classes[k])),
                },
                label: classes[k],
            }
        })
        .collect()
}
