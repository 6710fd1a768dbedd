//! Independent reference implementations used as test oracles. They favour
//! obviousness over speed and share no code with the library beyond its
//! plain data types.
#![allow(dead_code)]

use malscope_core::nn::{LstmCell, LstmState};
use malscope_core::pcap::{FiveTuple, ParsedPacket};

// ---------------------------------------------------------------- flows

fn same_flow(a: &FiveTuple, b: &FiveTuple, bidirectional: bool) -> bool {
    if a == b {
        return true;
    }
    bidirectional
        && a.src_ip == b.dst_ip
        && a.src_port == b.dst_port
        && a.dst_ip == b.src_ip
        && a.dst_port == b.src_port
        && a.protocol == b.protocol
}

/// Groups by comparing every packet against every earlier one. Returns,
/// per flow, the input positions of its packets in flow order.
pub fn group_flows(packets: &[ParsedPacket], bidirectional: bool) -> Vec<Vec<usize>> {
    let n = packets.len();
    let mut group = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        for j in 0..i {
            if same_flow(&packets[i].tuple, &packets[j].tuple, bidirectional) {
                group[i] = group[j];
                break;
            }
        }
        if group[i] == usize::MAX {
            group[i] = groups.len();
            groups.push(Vec::new());
        }
        groups[group[i]].push(i);
    }
    // insertion sort by time keeps equal times in input order
    for g in &mut groups {
        for k in 1..g.len() {
            let mut m = k;
            while m > 0 && packets[g[m - 1]].time > packets[g[m]].time {
                g.swap(m - 1, m);
                m -= 1;
            }
        }
    }
    // flows by first-packet time, then by that packet's input position
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut left = groups;
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            let (a, b) = (&packets[left[k][0]], &packets[left[best][0]]);
            if a.time < b.time || (a.time == b.time && left[k][0] < left[best][0]) {
                best = k;
            }
        }
        out.push(left.remove(best));
    }
    out
}

/// The canonical key as described: smaller of the tuple and its reverse,
/// compared on (ip, port) byte strings.
pub fn canonical_key(t: &FiveTuple, bidirectional: bool) -> FiveTuple {
    if !bidirectional {
        return *t;
    }
    let fwd: Vec<u8> = [t.src_ip.octets().to_vec(), t.src_port.to_be_bytes().to_vec(), t.dst_ip.octets().to_vec(), t.dst_port.to_be_bytes().to_vec()].concat();
    let rev: Vec<u8> = [t.dst_ip.octets().to_vec(), t.dst_port.to_be_bytes().to_vec(), t.src_ip.octets().to_vec(), t.src_port.to_be_bytes().to_vec()].concat();
    if rev < fwd {
        FiveTuple {
            src_ip: t.dst_ip,
            src_port: t.dst_port,
            dst_ip: t.src_ip,
            dst_port: t.src_port,
            protocol: t.protocol,
        }
    } else {
        *t
    }
}

// ---------------------------------------------------------------- lstm

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar-by-scalar LSTM step. `paper` wraps the cell update in a sigmoid.
pub fn lstm_step(cell: &LstmCell, x: &[f64], h_prev: &[f64], c_prev: &[f64], paper: bool) -> (Vec<f64>, Vec<f64>) {
    let hid = h_prev.len();
    let inp = x.len();
    let pre = |k: usize, j: usize| -> f64 {
        let mut s = cell.b[k].data()[j];
        for a in 0..inp {
            s += x[a] * cell.u[k].data()[a * hid + j];
        }
        for a in 0..hid {
            s += h_prev[a] * cell.w[k].data()[a * hid + j];
        }
        s
    };
    let mut h = vec![0.0; hid];
    let mut c = vec![0.0; hid];
    for j in 0..hid {
        let i_g = sig(pre(0, j));
        let f_g = sig(pre(1, j));
        let o_g = sig(pre(2, j));
        let cand = pre(3, j).tanh();
        let raw = f_g * c_prev[j] + i_g * cand;
        c[j] = if paper { sig(raw) } else { raw };
        h[j] = c[j].tanh() * o_g;
    }
    (h, c)
}

pub fn lstm_state(h: Vec<f64>, c: Vec<f64>) -> LstmState {
    LstmState { h, c }
}

// ---------------------------------------------------------------- cart

#[derive(Debug, Clone, PartialEq)]
pub enum CartNode {
    Leaf(usize),
    Split(usize, f64, Box<CartNode>, Box<CartNode>),
}

fn gini(labels: &[usize], classes: usize) -> f64 {
    let n = labels.len() as f64;
    let mut g = 1.0;
    for c in 0..classes {
        let p = labels.iter().filter(|&&y| y == c).count() as f64 / n;
        g -= p * p;
    }
    g
}

fn majority_label(labels: &[usize], classes: usize) -> usize {
    let mut best = 0;
    let mut best_n = 0;
    for c in 0..classes {
        let n = labels.iter().filter(|&&y| y == c).count();
        if n > best_n {
            best = c;
            best_n = n;
        }
    }
    best
}

/// Plain CART: all features, every midpoint threshold, weighted Gini,
/// first candidate wins ties (features then thresholds ascending).
pub fn cart(xs: &[Vec<f64>], ys: &[usize], classes: usize, max_depth: usize, min_split: usize) -> CartNode {
    fn build(rows: Vec<usize>, xs: &[Vec<f64>], ys: &[usize], classes: usize, depth: usize, max_depth: usize, min_split: usize) -> CartNode {
        let labels: Vec<usize> = rows.iter().map(|&i| ys[i]).collect();
        let pure = labels.iter().all(|&y| y == labels[0]);
        if pure || depth >= max_depth || rows.len() < min_split {
            return CartNode::Leaf(majority_label(&labels, classes));
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..xs[0].len() {
            let mut vals: Vec<f64> = rows.iter().map(|&i| xs[i][f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let mut t = w[0] + (w[1] - w[0]) / 2.0;
                if t >= w[1] {
                    t = w[0];
                }
                let l: Vec<usize> = rows.iter().filter(|&&i| xs[i][f] <= t).map(|&i| ys[i]).collect();
                let r: Vec<usize> = rows.iter().filter(|&&i| xs[i][f] > t).map(|&i| ys[i]).collect();
                let n = rows.len() as f64;
                let score = l.len() as f64 / n * gini(&l, classes) + r.len() as f64 / n * gini(&r, classes);
                if best.map_or(true, |(s, _, _)| score < s - 1e-12) {
                    best = Some((score, f, t));
                }
            }
        }
        match best {
            None => CartNode::Leaf(majority_label(&labels, classes)),
            Some((_, f, t)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| xs[i][f] <= t);
                CartNode::Split(
                    f,
                    t,
                    Box::new(build(l, xs, ys, classes, depth + 1, max_depth, min_split)),
                    Box::new(build(r, xs, ys, classes, depth + 1, max_depth, min_split)),
                )
            }
        }
    }
    build((0..xs.len()).collect(), xs, ys, classes, 0, max_depth, min_split)
}

pub fn cart_predict(node: &CartNode, x: &[f64]) -> usize {
    match node {
        CartNode::Leaf(c) => *c,
        CartNode::Split(f, t, l, r) => {
            if x[*f] <= *t {
                cart_predict(l, x)
            } else {
                cart_predict(r, x)
            }
        }
    }
}

// ---------------------------------------------------------------- metrics

pub struct OracleMetrics {
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Weighted metrics from explicit TP/FP/FN counts per class.
pub fn metrics(preds: &[usize], labels: &[usize]) -> OracleMetrics {
    let k = preds.iter().chain(labels.iter()).max().unwrap() + 1;
    let n = labels.len();
    let mut confusion = vec![vec![0; k]; k];
    for i in 0..n {
        confusion[labels[i]][preds[i]] += 1;
    }
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    let mut correct = 0;
    for c in 0..k {
        let tp = (0..n).filter(|&i| labels[i] == c && preds[i] == c).count();
        let fp = (0..n).filter(|&i| labels[i] != c && preds[i] == c).count();
        let fn_ = (0..n).filter(|&i| labels[i] == c && preds[i] != c).count();
        correct += tp;
        let prec = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let rec = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
        let w = (tp + fn_) as f64 / n as f64;
        p += w * prec;
        r += w * rec;
        f += w * f1;
    }
    OracleMetrics {
        confusion,
        accuracy: correct as f64 / n as f64,
        precision: p,
        recall: r,
        f1: f,
    }
}
