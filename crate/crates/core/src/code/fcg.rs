//! Function-call-graph documents.
//!
//! Line format (whitespace separated, names contain no whitespace):
//!
//! ```text
//! FCG v1
//! N <id> <name> <k> <mnemonic>*k
//! E <caller id> <callee id>
//! L <label>
//! ```
//!
//! `#` starts a comment line. Labels are `+1` / `-1` or a family name.
//! A JSON document `{"nodes":[{"id","name","opcodes"}],"edges":[[a,b]],"label"}`
//! is accepted in place of the line format.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{CodeError, OpcodeVocab};
use crate::image::ClassLabel;

pub const FCG_HEADER: &str = "FCG v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphLabel {
    Family(ClassLabel),
    Sign(i8),
}

impl fmt::Display for GraphLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphLabel::Family(c) => f.write_str(c.name()),
            GraphLabel::Sign(s) if *s > 0 => f.write_str("+1"),
            GraphLabel::Sign(_) => f.write_str("-1"),
        }
    }
}

impl FromStr for GraphLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+1" => Ok(GraphLabel::Sign(1)),
            "-1" => Ok(GraphLabel::Sign(-1)),
            other => other
                .parse::<ClassLabel>()
                .map(GraphLabel::Family)
                .map_err(|_| format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNode {
    pub id: u64,
    pub name: String,
    pub opcodes: Vec<String>,
}

/// A call graph with mnemonics not yet resolved against a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawGraph {
    pub nodes: Vec<RawNode>,
    pub edges: Vec<(u64, u64)>,
    pub label: Option<GraphLabel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGraph {
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<(u64, u64)>,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionNode {
    pub id: u64,
    pub name: String,
    /// Vocabulary indices; the OOV index may appear.
    pub opcodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallGraph {
    pub nodes: Vec<FunctionNode>,
    pub edges: Vec<(u64, u64)>,
    pub label: Option<GraphLabel>,
}

/// Which endpoints count as a node's neighbours during message passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborMode {
    #[default]
    Undirected,
    /// Callees only.
    Out,
}

impl FromStr for NeighborMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "undirected" => Ok(NeighborMode::Undirected),
            "out" => Ok(NeighborMode::Out),
            _ => Err(format!("neighbor mode must be undirected or out, got {s:?}")),
        }
    }
}

impl fmt::Display for NeighborMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeighborMode::Undirected => "undirected",
            NeighborMode::Out => "out",
        })
    }
}

impl CallGraph {
    /// Sorted, de-duplicated neighbour indices per node.
    pub fn adjacency(&self, mode: NeighborMode) -> Vec<Vec<usize>> {
        let pos: HashMap<u64, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut adj = vec![BTreeSet::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            let (a, b) = (pos[&a], pos[&b]);
            adj[a].insert(b);
            if mode == NeighborMode::Undirected {
                adj[b].insert(a);
            }
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }
}

fn schema(line: usize, msg: impl Into<String>) -> CodeError {
    CodeError::Schema {
        line,
        msg: msg.into(),
    }
}

impl RawGraph {
    /// Checks ids and edges, collapses parallel edges (first occurrence
    /// kept) and rejects an empty graph.
    fn finish(mut self) -> Result<Self, CodeError> {
        if self.nodes.is_empty() {
            return Err(CodeError::EmptyGraph);
        }
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(schema(0, format!("duplicate node id {}", n.id)));
            }
        }
        for &(a, b) in &self.edges {
            for end in [a, b] {
                if !ids.contains(&end) {
                    return Err(schema(0, format!("edge {a} -> {b} references missing node {end}")));
                }
            }
        }
        let mut seen = HashSet::new();
        self.edges.retain(|e| seen.insert(*e));
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self, CodeError> {
        if text.trim_start().starts_with('{') {
            return Self::parse_json(text);
        }
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, FCG_HEADER)) => {}
            Some((n, other)) => return Err(schema(n, format!("expected {FCG_HEADER:?}, found {other:?}"))),
            None => return Err(schema(1, "missing header")),
        }
        let mut g = RawGraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            label: None,
        };
        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str, what: &str| s.parse::<u64>().map_err(|_| schema(n, format!("{what} {s:?} is not an integer")));
            match f[0] {
                "N" => {
                    if f.len() < 4 {
                        return Err(schema(n, "node line needs id, name and opcode count"));
                    }
                    let k = int(f[3], "opcode count")? as usize;
                    if f.len() != 4 + k {
                        return Err(schema(n, format!("node declares {k} opcodes but lists {}", f.len() - 4)));
                    }
                    g.nodes.push(RawNode {
                        id: int(f[1], "node id")?,
                        name: f[2].to_string(),
                        opcodes: f[4..].iter().map(|s| s.to_string()).collect(),
                    });
                }
                "E" => {
                    if f.len() != 3 {
                        return Err(schema(n, "edge line needs two node ids"));
                    }
                    g.edges.push((int(f[1], "caller id")?, int(f[2], "callee id")?));
                }
                "L" => {
                    if f.len() != 2 {
                        return Err(schema(n, "label line needs one value"));
                    }
                    if g.label.is_some() {
                        return Err(schema(n, "label given twice"));
                    }
                    g.label = Some(f[1].parse().map_err(|e: String| schema(n, e))?);
                }
                other => return Err(schema(n, format!("unknown record type {other:?}"))),
            }
        }
        g.finish()
    }

    fn parse_json(text: &str) -> Result<Self, CodeError> {
        let doc: JsonGraph = serde_json::from_str(text).map_err(|e| schema(e.line(), e.to_string()))?;
        let label = doc
            .label
            .map(|l| l.parse::<GraphLabel>())
            .transpose()
            .map_err(|e| schema(0, e))?;
        RawGraph {
            nodes: doc.nodes,
            edges: doc.edges,
            label,
        }
        .finish()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{FCG_HEADER}\n");
        for n in &self.nodes {
            s.push_str(&format!("N {} {} {}", n.id, n.name, n.opcodes.len()));
            for op in &n.opcodes {
                s.push(' ');
                s.push_str(op);
            }
            s.push('\n');
        }
        for (a, b) in &self.edges {
            s.push_str(&format!("E {a} {b}\n"));
        }
        if let Some(l) = self.label {
            s.push_str(&format!("L {l}\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&JsonGraph {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            label: self.label.map(|l| l.to_string()),
        })
        .expect("graph serializes")
    }

    /// Maps mnemonics to vocabulary indices; returns the graph and the
    /// number of out-of-vocabulary occurrences.
    pub fn resolve(&self, vocab: &OpcodeVocab) -> (CallGraph, usize) {
        let mut oov = 0;
        let nodes = self
            .nodes
            .iter()
            .map(|n| FunctionNode {
                id: n.id,
                name: n.name.clone(),
                opcodes: n
                    .opcodes
                    .iter()
                    .map(|op| {
                        let i = vocab.index_of(op);
                        oov += (i == vocab.oov_index()) as usize;
                        i
                    })
                    .collect(),
            })
            .collect();
        let g = CallGraph {
            nodes,
            edges: self.edges.clone(),
            label: self.label,
        };
        (g, oov)
    }

    pub fn opcode_sequences(&self) -> impl Iterator<Item = &[String]> {
        self.nodes.iter().map(|n| n.opcodes.as_slice())
    }
}

/// Parses either document form and resolves it against `vocab`; unknown
/// mnemonics become OOV with a warning.
pub fn parse_fcg(text: &str, vocab: &OpcodeVocab) -> Result<CallGraph, CodeError> {
    let (g, oov) = RawGraph::parse(text)?.resolve(vocab);
    if oov > 0 {
        warn!("{oov} opcode occurrences are out of vocabulary");
    }
    Ok(g)
}

pub fn write_fcg(g: &RawGraph) -> String {
    g.to_text()
}
