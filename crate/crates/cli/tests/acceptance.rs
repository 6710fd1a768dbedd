//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the criteria execute one after another and their
//! wall-clock limits are not skewed by parallel tests.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use malscope_core::code::{
    build_vocab, cosine, train_skipgram, CallGraph, FunctionNode, GraphEmbedParams, MuInit, NeighborMode,
    OpcodeEmbedding, OpcodeWeights, SkipGramConfig,
};
use malscope_core::encoder::{BiLstmModel, CnnConfig, CnnModel};
use malscope_core::fusion::{evaluate, predict_forest, train_forest, ForestParams, MaxFeatures, MlpHead, Node, Targets, Tree};
use malscope_core::image::{normalize_784, read_idx, serialize_flow, to_image, write_idx, ClassLabel, FlowImage, ImageCorpus, RECORD_LEN};
use malscope_core::nn::{
    grad_check, maxpool2_backward, maxpool2_forward, relu, relu_backward, sparse_ce_loss, CellMode, Conv2d, Dense,
    LstmCell, Padding, Params, Tensor,
};
use malscope_core::pcap::{split_flows, FiveTuple, Flow, ParsedPacket, Timestamp, PROTO_TCP};
use malscope_core::synth::{cooccurrence_corpus, gaussian_blobs, random_packets};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn within(limit: Duration, t: Instant, what: &str) -> Result<(), String> {
    let took = t.elapsed();
    if took > limit {
        return Err(format!("{what} took {:.1}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()));
    }
    Ok(())
}

// ------------------------------------------------------------------ 1

fn flow_splitting() -> Outcome {
    let t = Instant::now();
    let mut packets_seen = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(0..=100);
        let packets = random_packets(n, rng.gen_range(1..=15), seed);
        packets_seen += n;
        for bidir in [true, false] {
            let got: Vec<Vec<usize>> = split_flows(packets.clone(), bidir)
                .iter()
                .map(|f| f.packets.iter().map(|p| u32::from_be_bytes(p.bytes[..4].try_into().unwrap()) as usize).collect())
                .collect();
            ensure!(got == oracles::group_flows(&packets, bidir), "set {seed} (bidirectional {bidir}) differs");
        }
    }
    within(Duration::from_secs(10), t, "1,000 sets")?;
    Ok(format!("1000 sets, {packets_seen} packets, both directions modes"))
}

// ------------------------------------------------------------------ 2

fn byte_layout() -> Outcome {
    let tuple = FiveTuple::new((Ipv4Addr::new(10, 0, 0, 1), 4000), (Ipv4Addr::new(10, 0, 0, 2), 80), PROTO_TCP);
    #[rustfmt::skip]
    let header: [u8; 40] = [
        0x45, 0x00, 0x00, 0x28, 0x00, 0x01, 0x00, 0x00, 0x40, 0x06, 0x00, 0x00,
        0x0a, 0x00, 0x00, 0x01, 0x0a, 0x00, 0x00, 0x02,
        0x0f, 0xa0, 0x00, 0x50, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00,
        0x50, 0x02, 0xff, 0xff, 0x00, 0x00, 0x00, 0x00,
    ];
    let mut expected = vec![0x0a, 0, 0, 1, 0x0f, 0xa0, 0x0a, 0, 0, 2, 0x00, 0x50, 0x06];
    expected.extend_from_slice(&header);
    let flow = Flow {
        key: tuple,
        packets: vec![ParsedPacket {
            tuple,
            bytes: header.to_vec(),
            orig_len: 54,
            time: Timestamp::new(1, 0),
        }],
    };
    let raw = serialize_flow(&flow, false);
    ensure!(raw == expected, "53-byte prefix differs");
    let mut record = expected.clone();
    record.resize(RECORD_LEN, 0);
    ensure!(normalize_784(&raw)[..] == record[..], "784-byte record differs");
    ensure!(to_image(&record).unwrap().as_bytes()[..] == record[..], "image bytes differ");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut corpus = ImageCorpus::new();
    let mut total = 0;
    while total < 1000 {
        let k = rng.gen_range(1..25).min(1000 - total);
        let images = (0..k)
            .map(|_| {
                let mut px = [0u8; RECORD_LEN];
                rng.fill(&mut px[..]);
                FlowImage::from_pixels(px)
            })
            .collect();
        corpus.push_capture(format!("c{total}"), images, ClassLabel::from_id(rng.gen_range(0..5)).unwrap());
        total += k;
    }
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = (dir.path().join("images.idx"), dir.path().join("labels.idx"));
    write_idx(&corpus, &ip, &lp).map_err(|e| e.to_string())?;
    let back = read_idx(&ip, &lp).map_err(|e| e.to_string())?;
    ensure!(back == corpus, "IDX round trip differs");
    Ok("53-byte prefix, 784-byte record, 1000-image IDX round trip".into())
}

// ------------------------------------------------------------------ 3

const GRAD_TOL: f64 = 1e-4;

fn flat(grads: &[Tensor]) -> Vec<f64> {
    grads.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn check<P: Params + Clone>(model: &P, analytic: &[Tensor], loss: impl Fn(&P) -> f64, what: &str) -> Result<f64, String> {
    let mut probe = model.clone();
    let report = grad_check(
        |p| {
            probe.set_flat_params(p);
            loss(&probe)
        },
        &model.flat_params(),
        &flat(analytic),
        GRAD_TOL,
    );
    ensure!(report.passed(), "{what}: {report:?}");
    Ok(report.max_rel_error)
}

#[derive(Clone)]
struct TinyCnn {
    conv: Conv2d,
    fc: Dense,
}

impl Params for TinyCnn {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.conv.kernel, &self.conv.bias, &self.fc.weight, &self.fc.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.conv.kernel, &mut self.conv.bias, &mut self.fc.weight, &mut self.fc.bias]
    }
}

impl TinyCnn {
    fn loss_and_grads(&self, x: &Tensor, labels: &[usize]) -> (f64, Vec<Tensor>) {
        let a = self.conv.forward(x).unwrap();
        let r = relu(&a);
        let (p, arg) = maxpool2_forward(&r).unwrap();
        let f = p.clone().reshape(&[x.dim(0), 1]).unwrap();
        let logits = self.fc.forward(&f).unwrap();
        let (loss, dl) = sparse_ce_loss(&logits, labels).unwrap();
        let (df, gfc) = self.fc.backward(&f, &dl).unwrap();
        let dr = maxpool2_backward(&df.reshape(p.shape()).unwrap(), &arg, r.shape()).unwrap();
        let (_, gconv) = self.conv.backward(x, &relu_backward(&a, &dr)).unwrap();
        (loss, gconv.into_iter().chain(gfc).collect())
    }
}

fn head_loss(head: &MlpHead, xs: &[Vec<f64>], targets: &Targets) -> f64 {
    xs.iter().enumerate().map(|(i, x)| targets.loss(i, &head.forward(x).unwrap()).0).sum()
}

fn head_grads(head: &MlpHead, xs: &[Vec<f64>], targets: &Targets) -> Vec<Tensor> {
    let mut grads: Vec<Tensor> = head.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
    for (i, x) in xs.iter().enumerate() {
        let (out, cache) = head.forward_cached(x).unwrap();
        head.backward(&cache, &targets.loss(i, &out).1, &mut grads);
    }
    grads
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut tiny = TinyCnn {
        conv: Conv2d::he(1, 1, Padding::Valid, &mut rng),
        fc: Dense::glorot(1, 3, &mut rng),
    };
    tiny.conv.bias.data_mut()[0] = 2.0;
    let x = Tensor::new(vec![3, 4, 4, 1], (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let (_, g) = tiny.loss_and_grads(&x, &[0, 2, 1]);
    worst = worst.max(check(&tiny, &g, |m| m.loss_and_grads(&x, &[0, 2, 1]).0, "tiny cnn")?);

    let cnn = CnnModel::init(CnnConfig { c1: 2, c2: 2, padding: Padding::Valid, dropout: 0.5 }, 17);
    let imgs: Vec<FlowImage> = (0..2)
        .map(|_| {
            let mut px = [0u8; RECORD_LEN];
            rng.fill(&mut px[..]);
            FlowImage::from_pixels(px)
        })
        .collect();
    let xb = CnnModel::batch(&imgs.iter().collect::<Vec<_>>());
    let (logits, cache) = cnn.forward_train(&xb, None).unwrap();
    let (_, dl) = sparse_ce_loss(&logits, &[1, 4]).unwrap();
    let g = cnn.backward(&cache, &dl).unwrap();
    worst = worst.max(check(&cnn, &g, |m| sparse_ce_loss(&m.logits(&xb).unwrap(), &[1, 4]).unwrap().0, "cnn model")?);

    for (mode, hidden, steps) in [(CellMode::Standard, 4, 3), (CellMode::Paper, 4, 3), (CellMode::Standard, 2, 1)] {
        let model = BiLstmModel::init(3, hidden, mode, 21);
        let xs: Vec<Vec<f64>> = (0..steps).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let (feature, cache) = model.encode_cached(&xs).unwrap();
        let logits = Tensor::new(vec![1, 5], model.head.apply(&feature)).unwrap();
        let (_, dl) = sparse_ce_loss(&logits, &[2]).unwrap();
        let g = model.backward(&cache, dl.data(), None);
        let loss = |m: &BiLstmModel| {
            sparse_ce_loss(&Tensor::new(vec![1, 5], m.logits(&xs).unwrap()).unwrap(), &[2]).unwrap().0
        };
        worst = worst.max(check(&model, &g, loss, &format!("bi-LSTM {mode:?} H={hidden} T={steps}"))?);
    }

    let xs = vec![vec![0.3, -0.2, 0.5], vec![-0.7, 0.1, 0.4], vec![0.2, 0.9, -0.3]];
    let adj = vec![vec![1], vec![0, 2], vec![1]];
    let r = [0.5, -1.0, 0.25, 0.8];
    for layers in [1, 2] {
        let params = GraphEmbedParams::init(3, 4, layers, 2, 8);
        let (_, cache) = params.forward_cached(xs.clone(), adj.clone()).unwrap();
        let g = params.backward(&cache, &r);
        let loss = |p: &GraphEmbedParams| {
            let (out, _) = p.forward_cached(xs.clone(), adj.clone()).unwrap();
            out.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
        };
        worst = worst.max(check(&params, &g, loss, &format!("structure2vec layers={layers}"))?);
    }

    let hx: Vec<Vec<f64>> = (0..6).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let sign = Targets::Sign(vec![1, -1, 1, 1, -1, 1]);
    let class = Targets::Class { labels: vec![0, 4, 2, 1, 3, 2], classes: 5 };
    for linear in [false, true] {
        let det = MlpHead::init(5, 4, 1, linear, 30);
        ensure!(
            hx.iter().all(|x| (det.forward(x).unwrap()[0].abs() - 1.0).abs() > 1e-3),
            "detection score sits on the hinge"
        );
        worst = worst.max(check(&det, &head_grads(&det, &hx, &sign), |h| head_loss(h, &hx, &sign), "detection head")?);
        let cat = MlpHead::init(5, 4, 5, linear, 31);
        worst = worst.max(check(&cat, &head_grads(&cat, &hx, &class), |h| head_loss(h, &hx, &class), "categorization head")?);
    }
    within(Duration::from_secs(60), t, "gradient checks")?;
    Ok(format!("13 checks, worst relative error {worst:.2e}"))
}

// ------------------------------------------------------------------ 4

fn lstm_step() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut worst: f64 = 0.0;
    let mut differs = false;
    for _ in 0..100 {
        let (input, hidden) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let mut cell = LstmCell::glorot(input, hidden, &mut rng);
        for b in cell.b.iter_mut() {
            b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let prev = oracles::lstm_state(
            (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..hidden).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        );
        let mut outs = Vec::new();
        for (mode, paper) in [(CellMode::Standard, false), (CellMode::Paper, true)] {
            cell.mode = mode;
            let got = cell.step(&x, &prev).map_err(|e| e.to_string())?;
            let (h, c) = oracles::lstm_step(&cell, &x, &prev.h, &prev.c, paper);
            worst = worst.max(max_diff(&got.h, &h)).max(max_diff(&got.c, &c));
            outs.push(got);
        }
        differs |= max_diff(&outs[0].c, &outs[1].c) > 1e-6;
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    ensure!(differs, "paper cell never differs from the standard cell");
    Ok(format!("100 cases x 2 cell modes, max deviation {worst:.1e}; paper cell differs"))
}

// ------------------------------------------------------------------ 5

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

fn relabel(g: &CallGraph, rng: &mut ChaCha8Rng) -> CallGraph {
    let mut ids: Vec<u64> = (0..g.nodes.len() as u64).map(|i| 500 + 3 * i).collect();
    ids.shuffle(rng);
    let map = |old: u64| ids[g.nodes.iter().position(|n| n.id == old).unwrap()];
    let mut nodes: Vec<FunctionNode> = g
        .nodes
        .iter()
        .map(|n| FunctionNode { id: map(n.id), name: n.name.clone(), opcodes: n.opcodes.clone() })
        .collect();
    nodes.shuffle(rng);
    let mut edges: Vec<(u64, u64)> = g.edges.iter().map(|&(a, b)| (map(a), map(b))).collect();
    edges.shuffle(rng);
    CallGraph { nodes, edges, label: None }
}

fn permutation_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let emb = OpcodeEmbedding {
        matrix: Tensor::new(vec![12, 6], (0..72).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
    };
    let w = OpcodeWeights::uniform(12);
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut params = GraphEmbedParams::init(6, 8, 2, 3, case);
        params.mu_init = MuInit::Zero;
        params.neighbor = if case % 2 == 0 { NeighborMode::Undirected } else { NeighborMode::Out };
        let g = random_graph(&mut rng, 12);
        let h = relabel(&g, &mut rng);
        let a = params.embed(&g, &emb, &w).map_err(|e| e.to_string())?;
        let b = params.embed(&h, &emb, &w).map_err(|e| e.to_string())?;
        worst = worst.max(max_diff(&a.0, &b.0));
    }
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    Ok(format!("100 relabeled graphs, max deviation {worst:.1e} (random init exempt)"))
}

// ------------------------------------------------------------------ 6 and 10

struct Cli<'a> {
    root: &'a Path,
}

impl Cli<'_> {
    fn run(&self, args: &[&str]) -> Result<String, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_malscope"))
            .args(args)
            .args(["--seed", "1", "--jobs", "1"])
            .current_dir(self.root)
            .env("RUST_LOG", "warn")
            .env_remove("FALCON_SEED")
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        Ok(String::from_utf8_lossy(&out.stdout).lines().last().unwrap_or("").trim().to_string())
    }

    fn accuracy(&self, predictions: &str) -> Result<f64, String> {
        let dir = self.run(&["evaluate", "--predictions", predictions])?;
        let text = std::fs::read_to_string(self.root.join(dir).join("metrics.csv")).map_err(|e| e.to_string())?;
        text.lines()
            .find_map(|l| l.strip_prefix("accuracy,"))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| "no accuracy in metrics.csv".to_string())
    }
}

struct PipelineResult {
    net: (f64, Duration),
    graph: (f64, Duration),
    fused: f64,
}

/// Synthetic two-class corpora through every stage, from `root` with
/// relative paths only.
fn pipeline(root: &Path) -> Result<PipelineResult, String> {
    let cli = Cli { root };
    let j = |a: &str, b: &str| format!("{a}/{b}");
    let caps = cli.run(&["synth", "--task", "captures", "--n", "200", "--holdout", "0.2"])?;
    let graphs = cli.run(&["synth", "--task", "graphs", "--n", "200", "--holdout", "0.2"])?;

    let t = Instant::now();
    let train = cli.run(&["build-corpus", "--in", &j(&caps, "train/pcaps"), "--labels", &j(&caps, "train/labels.csv")])?;
    let test = cli.run(&["build-corpus", "--in", &j(&caps, "test/pcaps"), "--labels", &j(&caps, "test/labels.csv")])?;
    let cnn = j(&cli.run(&["train-cnn", "--corpus", &train])?, "cnn.ckpt");
    let v_train = j(&cli.run(&["embed-net", "--corpus", &train, "--cnn", &cnn])?, "flow_vectors.csv");
    let v_test = j(&cli.run(&["embed-net", "--corpus", &test, "--cnn", &cnn])?, "flow_vectors.csv");
    let lstm = j(&cli.run(&["train-bilstm", "--vectors", &v_train])?, "bilstm.ckpt");
    let preds = cli.run(&["predict", "--model", &lstm, "--vectors", &v_test])?;
    let net_acc = cli.accuracy(&j(&preds, "predictions.csv"))?;
    let n_train = j(&cli.run(&["embed-net", "--corpus", &train, "--cnn", &cnn, "--bilstm", &lstm])?, "network_features.csv");
    let n_test = j(&cli.run(&["embed-net", "--corpus", &test, "--cnn", &cnn, "--bilstm", &lstm])?, "network_features.csv");
    let net_time = t.elapsed();

    let t = Instant::now();
    let o2v = j(&cli.run(&["train-opcode2vec", "--graphs", &j(&graphs, "train/graphs")])?, "opcode2vec.ckpt");
    let trained = cli.run(&["embed-code", "--graphs", &j(&graphs, "train/graphs"), "--opcode2vec", &o2v, "--train"])?;
    let c_train = j(&trained, "code_features.csv");
    let c_test = j(
        &cli.run(&["embed-code", "--graphs", &j(&graphs, "test/graphs"), "--opcode2vec", &o2v, "--s2v", &j(&trained, "s2v.ckpt")])?,
        "code_features.csv",
    );
    let preds = cli.run(&["predict", "--model", &j(&trained, "graph_head.ckpt"), "--features", &c_test])?;
    let graph_acc = cli.accuracy(&j(&preds, "predictions.csv"))?;
    let graph_time = t.elapsed();

    let model = cli.run(&["train-fusion", "--net", &n_train, "--code", &c_train])?;
    let preds = cli.run(&["predict", "--model", &model, "--net", &n_test, "--code", &c_test])?;
    let fused = cli.accuracy(&j(&preds, "predictions.csv"))?;
    Ok(PipelineResult {
        net: (net_acc, net_time),
        graph: (graph_acc, graph_time),
        fused,
    })
}

fn end_to_end(root: &Path) -> Outcome {
    let r = pipeline(root)?;
    let summary = format!(
        "network {:.3} in {:.0}s, graph {:.3} in {:.0}s, fused {:.3}",
        r.net.0,
        r.net.1.as_secs_f64(),
        r.graph.0,
        r.graph.1.as_secs_f64(),
        r.fused
    );
    ensure!(r.net.0 >= 0.95 && r.graph.0 >= 0.95 && r.fused >= 0.95, "accuracy below 0.95: {summary}");
    ensure!(r.net.1 <= Duration::from_secs(300), "network path over 5 minutes: {summary}");
    ensure!(r.graph.1 <= Duration::from_secs(120), "graph path over 2 minutes: {summary}");
    Ok(summary)
}

fn tree_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.file_name() != "timings.json")
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    if !first.join("runs").exists() {
        pipeline(first)?;
    }
    pipeline(second)?;
    let (a, b) = (tree_files(&first.join("runs")), tree_files(&second.join("runs")));
    let only: Vec<String> = a.keys().filter(|k| !b.contains_key(*k)).map(|k| k.display().to_string()).collect();
    ensure!(only.is_empty() && a.len() == b.len(), "{} of {} files have no counterpart, e.g. {}", only.len(), a.len(), only.join(" "));
    let differing: Vec<_> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure!(differing.is_empty(), "{} files differ, e.g. {}", differing.len(), differing[0]);
    let manifests = a.keys().filter(|k| k.ends_with("manifest.json")).count();
    Ok(format!("{} files across {manifests} runs identical (timings excluded)", a.len()))
}

// ------------------------------------------------------------------ 7

fn metrics_oracle() -> Outcome {
    let m = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1]).map_err(|e| e.to_string())?;
    let r4 = |x: f64| (x * 1e4).round() / 1e4;
    ensure!(r4(m.accuracy) == 0.75, "accuracy {}", m.accuracy);
    ensure!(r4(m.precision) == 0.8333, "precision {}", m.precision);
    ensure!(r4(m.f1) == 0.7333, "f1 {}", m.f1);
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for case in 0..1000 {
        let n = rng.gen_range(1..80);
        let k = rng.gen_range(1..6);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let preds: Vec<usize> = labels.iter().map(|&y| if rng.gen_bool(0.6) { y } else { rng.gen_range(0..k) }).collect();
        let m = evaluate(&preds, &labels).map_err(|e| e.to_string())?;
        let o = oracles::metrics(&preds, &labels);
        ensure!(
            m.confusion == o.confusion && m.accuracy == o.accuracy && m.precision == o.precision && m.recall == o.recall && m.f1 == o.f1,
            "case {case} differs"
        );
    }
    Ok("hand example to 4 decimals; 1000 random cases exact".into())
}

// ------------------------------------------------------------------ 8

fn to_oracle(tree: &Tree, i: usize) -> oracles::CartNode {
    match &tree.nodes[i] {
        Node::Leaf { counts } => {
            let mut best = 0;
            for (c, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = c;
                }
            }
            oracles::CartNode::Leaf(best)
        }
        Node::Split { feature, threshold, left, right } => {
            oracles::CartNode::Split(*feature, *threshold, Box::new(to_oracle(tree, *left)), Box::new(to_oracle(tree, *right)))
        }
    }
}

fn forest() -> Outcome {
    let (xs, ys) = gaussian_blobs(1000, 5, 8, 4.0, 81);
    let params = ForestParams { seed: 3, ..ForestParams::desk() };
    let model = train_forest(&xs[..700], &ys[..700], &params).map_err(|e| e.to_string())?;
    let correct = xs[700..].iter().zip(&ys[700..]).filter(|(x, &y)| predict_forest(&model, x).unwrap() == y).count();
    let acc = correct as f64 / 300.0;
    ensure!(acc >= 0.9, "held-out accuracy {acc}");

    let mut rng = ChaCha8Rng::seed_from_u64(80);
    for case in 0..200 {
        let n = rng.gen_range(2..=50);
        let d = rng.gen_range(1..5);
        let k = rng.gen_range(2..5);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..6) as f64 * 0.5).collect()).collect();
        let ys: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
        let (depth, min_split) = (rng.gen_range(1..8), rng.gen_range(2..6));
        let single = ForestParams {
            n_estimators: 1,
            max_depth: depth,
            min_samples_split: min_split,
            max_features: MaxFeatures::All,
            bootstrap: false,
            seed: 0,
        };
        let model = train_forest(&xs, &ys, &single).map_err(|e| e.to_string())?;
        let oracle = oracles::cart(&xs, &ys, model.classes, depth, min_split);
        ensure!(to_oracle(&model.trees[0], 0) == oracle, "tree {case} differs from the CART oracle");
    }
    Ok(format!("5-class blobs held-out {acc:.3}; 200 single trees equal CART"))
}

// ------------------------------------------------------------------ 9

fn skipgram() -> Outcome {
    let t = Instant::now();
    let (corpus, pairs) = cooccurrence_corpus(10, 400, 12, 90);
    let vocab = build_vocab(&corpus);
    let seqs: Vec<Vec<usize>> = corpus.iter().map(|s| s.iter().map(|w| vocab.index_of(w)).collect()).collect();
    let cfg = SkipGramConfig { dim: 32, window: 2, epochs: 5, seed: 1, ..Default::default() };
    let emb = train_skipgram(&seqs, &vocab, &cfg).map_err(|e| e.to_string())?;
    let v = |w: &str| emb.row(vocab.index_of(w)).to_vec();
    let intra = pairs.iter().map(|(a, b)| cosine(&v(a), &v(b))).sum::<f64>() / pairs.len() as f64;
    let (mut inter, mut count) = (0.0, 0);
    for (i, (a, _)) in pairs.iter().enumerate() {
        for (j, (_, b)) in pairs.iter().enumerate() {
            if i != j {
                inter += cosine(&v(a), &v(b));
                count += 1;
            }
        }
    }
    inter /= count as f64;
    within(Duration::from_secs(60), t, "skip-gram")?;
    ensure!(intra - inter >= 0.3, "intra {intra:.3} inter {inter:.3}");
    Ok(format!("intra {intra:.3} - inter {inter:.3} = {:.3}", intra - inter))
}

// ------------------------------------------------------------------

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let (a, b) = (scratch.path().join("a"), scratch.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("flow-splitting oracle", Box::new(flow_splitting)),
        ("byte-layout conformance", Box::new(byte_layout)),
        ("gradient integrity", Box::new(gradients)),
        ("LSTM step oracle", Box::new(lstm_step)),
        ("permutation invariance", Box::new(permutation_invariance)),
        ("synthetic end-to-end", Box::new(|| end_to_end(&a))),
        ("metrics oracle", Box::new(metrics_oracle)),
        ("forest sanity", Box::new(forest)),
        ("skip-gram semantics", Box::new(skipgram)),
        ("determinism", Box::new(|| determinism(&a, &b))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
