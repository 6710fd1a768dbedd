use malscope_core::code::{
    function2vec, CallGraph, FunctionNode, GraphEmbedParams, MuInit, NeighborMode, OpcodeEmbedding, OpcodeWeights,
};
use malscope_core::nn::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn embedding(rows: usize, d: usize, rng: &mut ChaCha8Rng) -> OpcodeEmbedding {
    OpcodeEmbedding {
        matrix: Tensor::new(vec![rows, d], (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
    }
}

fn random_graph(rng: &mut ChaCha8Rng, rows: usize) -> CallGraph {
    let n = rng.gen_range(1..=20u64);
    let nodes = (0..n)
        .map(|id| FunctionNode {
            id,
            name: format!("f{id}"),
            opcodes: (0..rng.gen_range(0..6)).map(|_| rng.gen_range(0..rows)).collect(),
        })
        .collect();
    let mut edges = Vec::new();
    for _ in 0..rng.gen_range(0..2 * n) {
        let e = (rng.gen_range(0..n), rng.gen_range(0..n));
        if !edges.contains(&e) {
            edges.push(e);
        }
    }
    CallGraph { nodes, edges, label: None }
}

/// Same graph with fresh ids and shuffled node and edge order.
fn relabel(g: &CallGraph, rng: &mut ChaCha8Rng) -> CallGraph {
    let mut ids: Vec<u64> = (0..g.nodes.len() as u64).map(|i| 1000 + 7 * i).collect();
    ids.shuffle(rng);
    let map = |old: u64| ids[g.nodes.iter().position(|n| n.id == old).unwrap()];
    let mut nodes: Vec<FunctionNode> = g
        .nodes
        .iter()
        .map(|n| FunctionNode {
            id: map(n.id),
            name: n.name.clone(),
            opcodes: n.opcodes.clone(),
        })
        .collect();
    nodes.shuffle(rng);
    let mut edges: Vec<(u64, u64)> = g.edges.iter().map(|&(a, b)| (map(a), map(b))).collect();
    edges.shuffle(rng);
    CallGraph { nodes, edges, label: None }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_init_is_invariant_to_node_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let emb = embedding(12, 6, &mut rng);
    let w = OpcodeWeights::uniform(12);
    for case in 0..100 {
        let mut params = GraphEmbedParams::init(6, 8, 1 + case % 3, 1 + case % 4, case as u64);
        params.neighbor = if case % 2 == 0 { NeighborMode::Undirected } else { NeighborMode::Out };
        let g = random_graph(&mut rng, 12);
        let h = relabel(&g, &mut rng);
        let a = params.embed(&g, &emb, &w).unwrap();
        let b = params.embed(&h, &emb, &w).unwrap();
        assert!(max_diff(&a.0, &b.0) <= 1e-9, "case {case}");
    }
}

#[test]
fn random_init_depends_on_node_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let emb = embedding(12, 6, &mut rng);
    let w = OpcodeWeights::uniform(12);
    let mut params = GraphEmbedParams::init(6, 8, 2, 3, 5);
    params.mu_init = MuInit::Random;
    let mut moved = 0;
    for _ in 0..20 {
        let g = random_graph(&mut rng, 12);
        let h = relabel(&g, &mut rng);
        let a = params.embed(&g, &emb, &w).unwrap();
        let b = params.embed(&h, &emb, &w).unwrap();
        moved += (max_diff(&a.0, &b.0) > 1e-9) as usize;
    }
    assert!(moved > 0);
}

#[test]
fn mean_readout_of_disconnected_copies() {
    // two disjoint copies of a graph embed exactly like one copy
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let params = GraphEmbedParams::init(4, 5, 2, 2, 3);
    for _ in 0..20 {
        let n = rng.gen_range(1..8);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let adj: Vec<Vec<usize>> = (0..n).map(|v| (0..n).filter(|&u| u != v && rng.gen_bool(0.4)).collect()).collect();
        let (one, _) = params.forward_cached(xs.clone(), adj.clone()).unwrap();
        let mut xs2 = xs.clone();
        xs2.extend(xs.clone());
        let mut adj2 = adj.clone();
        adj2.extend(adj.iter().map(|a| a.iter().map(|u| u + n).collect()));
        let (two, _) = params.forward_cached(xs2, adj2).unwrap();
        assert!(max_diff(&one, &two) <= 1e-12);
    }
}

#[test]
fn function_vector_is_weighted_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let emb = embedding(7, 3, &mut rng);
    let w = OpcodeWeights::uniform(7);
    assert_eq!(function2vec(&[], &emb, &w), vec![0.0; 3]);
    let ops = [2, 5, 2, 6];
    let got = function2vec(&ops, &emb, &w);
    for j in 0..3 {
        let direct = (emb.row(2)[j] * 2.0 + emb.row(5)[j] + emb.row(6)[j]) / 4.0;
        assert!((got[j] - direct).abs() < 1e-12);
    }
}
