//! Brute-force reference implementations shared by the integration tests.
//!
//! Everything here is written with plain nested loops over `Vec`s and does
//! not call into the library's numeric code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drtr::{DiffusionParams, GraphStore, HopShells, ScheduleConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi graph with Gaussian-ish features and labels on every node.
pub fn random_graph(n: usize, p: f64, dim: usize, classes: usize, seed: u64) -> GraphStore {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for v in 0..n {
        for u in v + 1..n {
            if r.random::<f64>() < p {
                edges.push((v, u));
            }
        }
    }
    let features = Array2::from_shape_fn((n, dim), |_| r.random_range(-1.5..1.5));
    let labels: BTreeMap<usize, usize> = (0..n).map(|v| (v, r.random_range(0..classes))).collect();
    GraphStore::build(&edges, features, &labels).unwrap()
}

pub fn rows(g: &GraphStore) -> Vec<Vec<f64>> {
    (0..g.node_count()).map(|v| g.feature_row(v).to_vec()).collect()
}

/// All-pairs hop distances by Floyd-Warshall; `usize::MAX` when unreachable.
pub fn floyd_warshall(g: &GraphStore) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for v in 0..n {
        d[v][v] = 0;
        for &u in g.neighbors(v) {
            d[v][u] = 1;
        }
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][m] + d[m][j] < d[i][j] {
                    d[i][j] = d[i][m] + d[m][j];
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(|x| if x >= inf { usize::MAX } else { x }).collect())
        .collect()
}

/// `shells[v][k - 1]`: sorted nodes at distance exactly `k`.
pub fn oracle_shells(g: &GraphStore, hops: usize) -> Vec<Vec<Vec<usize>>> {
    let d = floyd_warshall(g);
    let n = g.node_count();
    (0..n)
        .map(|v| (1..=hops).map(|k| (0..n).filter(|&u| d[v][u] == k).collect()).collect())
        .collect()
}

/// Active members per `(v, k)` read from library shells.
pub fn active_lists(shells: &HopShells) -> Vec<Vec<Vec<usize>>> {
    (0..shells.node_count())
        .map(|v| (1..=shells.hops()).map(|k| shells.active(v, k).collect()).collect())
        .collect()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x W` for a row vector and a `dim x hidden` matrix.
fn project(x: &[f64], w: &Array2<f64>) -> Vec<f64> {
    let mut out = vec![0.0; w.ncols()];
    for j in 0..w.ncols() {
        for i in 0..x.len() {
            out[j] += x[i] * w[[i, j]];
        }
    }
    out
}

fn naive_softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Attention weights of hop `k` for node `v` over `members`.
pub fn oracle_attention(
    x: &[Vec<f64>],
    params: &DiffusionParams,
    v: usize,
    k: usize,
    members: &[usize],
    cfg: &ScheduleConfig,
) -> Vec<f64> {
    if members.is_empty() {
        return Vec::new();
    }
    let w = &params.hop_transforms[k - 1];
    let h = w.ncols();
    let tau = cfg.tau0 * (-cfg.eta_decay * k as f64).exp();
    let pv = project(&x[v], w);
    let mut logits = Vec::new();
    for &u in members {
        let pu = project(&x[u], w);
        let mut s = 0.0;
        for i in 0..h {
            s += params.attention[i] * pv[i] + params.attention[h + i] * pu[i];
        }
        let act = if s > 0.0 { s } else { cfg.leaky_slope * s };
        logits.push(act / tau);
    }
    naive_softmax(&logits)
}

/// Embeddings and logits by explicit loops over nodes, hops and members.
pub fn oracle_forward(
    x: &[Vec<f64>],
    members: &[Vec<Vec<usize>>],
    params: &DiffusionParams,
    cfg: &ScheduleConfig,
    attention: bool,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = x.len();
    let hops = params.hop_transforms.len();
    let hidden = params.hop_transforms[0].ncols();
    let classes = params.bias.len();
    let gamma = naive_softmax(&params.hop_logits.to_vec());
    let mut z = vec![vec![0.0; hidden]; n];
    let mut logits = vec![vec![0.0; classes]; n];
    for v in 0..n {
        for k in 1..=hops {
            let m = &members[v][k - 1];
            if m.is_empty() {
                continue;
            }
            let alpha = if attention {
                oracle_attention(x, params, v, k, m, cfg)
            } else {
                vec![1.0 / m.len() as f64; m.len()]
            };
            let mut h = vec![0.0; hidden];
            for (j, &u) in m.iter().enumerate() {
                let pu = project(&x[u], &params.hop_transforms[k - 1]);
                for i in 0..hidden {
                    h[i] += alpha[j] * pu[i];
                }
            }
            let mean = h.iter().sum::<f64>() / hidden as f64;
            let var = h.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / hidden as f64;
            let sd = var.sqrt();
            for i in 0..hidden {
                z[v][i] += gamma[k - 1] * (h[i] - mean) / (sd + cfg.layer_norm_eps);
            }
        }
        for c in 0..classes {
            let mut s = params.bias[c];
            for i in 0..hidden {
                s += z[v][i] * params.classifier[[i, c]];
            }
            logits[v][c] = s;
        }
    }
    (z, logits)
}

pub fn oracle_distance(xv: &[f64], xu: &[f64], k: usize, cfg: &ScheduleConfig) -> f64 {
    let lambda = cfg.lambda0 * (-cfg.rho * k as f64).exp() + cfg.lambda_min;
    let kk = k as f64;
    sq_dist(xv, xu) + lambda * (cfg.beta1 * kk * kk + cfg.beta2 * (1.0 - cos(xv, xu)))
}

pub fn oracle_jaccard(g: &GraphStore, v: usize, u: usize) -> f64 {
    let a = g.neighbors(v);
    let b = g.neighbors(u);
    let inter = a.iter().filter(|x| b.contains(x)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn oracle_sim(g: &GraphStore, v: usize, u: usize, omega: [f64; 3]) -> f64 {
    let (xv, xu) = (g.feature_row(v), g.feature_row(u));
    omega[0] * cos(xv, xu) + omega[1] * oracle_jaccard(g, v, u) - omega[2] * sq_dist(xv, xu)
}

/// `sum max(0, beta - sim) * sigmoid((sim - beta) / tau)` over unordered pairs.
pub fn oracle_tr_loss(g: &GraphStore, pairs: &[(usize, usize)], omega: [f64; 3], cfg: &ScheduleConfig) -> f64 {
    let mut total = 0.0;
    for &(v, u) in pairs {
        let s = oracle_sim(g, v, u, omega);
        let p = sigmoid((s - cfg.tr_beta) / cfg.tr_tau);
        if cfg.tr_beta - s > 0.0 {
            total += (cfg.tr_beta - s) * p;
        }
    }
    total
}

/// Mean `-log softmax(logits)[y]` over `nodes`.
pub fn oracle_ce(logits: &[Vec<f64>], labels: &[Option<usize>], nodes: &[usize]) -> f64 {
    let mut total = 0.0;
    for &v in nodes {
        let p = naive_softmax(&logits[v]);
        total -= p[labels[v].unwrap()].ln();
    }
    total / nodes.len() as f64
}

// ---------------------------------------------------------------------------
// Shared suites used by both the focused tests and the acceptance target.

use drtr::diffusion::{attention_weights, forward};
use drtr::distance::{prune_shells, shell_distances};
use drtr::topology::{score_candidates, tr_loss};
use drtr::trainer::{backward, classification_loss, ObjectiveContext};
use drtr::{build_hop_shells, Mode, ModelParams};

/// Largest absolute deviation per quantity over `instances` random graphs.
pub fn oracle_suite(instances: u64) -> BTreeMap<&'static str, f64> {
    let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut note = |key: &'static str, err: f64| {
        let e = worst.entry(key).or_insert(0.0);
        *e = e.max(if err.is_nan() { f64::INFINITY } else { err });
    };
    for seed in 0..instances {
        let mut r = rng(1000 + seed);
        let n = r.random_range(5..=50);
        let p = r.random_range(0.05..0.3);
        let dim = r.random_range(2..=5);
        let classes = r.random_range(2..=3);
        let hops = r.random_range(1..=3);
        let hidden = r.random_range(3..=6);
        let mut g = random_graph(n, p, dim, classes, seed);
        let cfg = ScheduleConfig {
            hops,
            hidden_dim: hidden,
            shell_cap: 64,
            mode: Mode::Gkhddra,
            ..Default::default()
        };
        let mut shells = build_hop_shells(&g, hops, cfg.shell_cap, seed).unwrap();
        let exact = oracle_shells(&g, hops);
        let mismatch = (0..n).any(|v| (1..=hops).any(|k| shells.active(v, k).collect::<Vec<_>>() != exact[v][k - 1]));
        note("shells", if mismatch { f64::INFINITY } else { 0.0 });
        if seed % 2 == 1 {
            let out = prune_shells(&g, &shells, &cfg).unwrap();
            g.apply_topology_delta(&out.delta, &mut shells).unwrap();
        }
        let x = rows(&g);
        let members = active_lists(&shells);
        let mut params = ModelParams::init(hops, dim, hidden, classes, [0.7, 0.4, 0.3], seed);
        for i in 0..hops {
            params.diffusion.hop_logits[i] = r.random_range(-1.0..1.0);
        }
        for c in 0..classes {
            params.diffusion.bias[c] = r.random_range(-0.5..0.5);
        }
        let d = &params.diffusion;

        for (mode, att) in [(Mode::Gkhddra, true), (Mode::Baseline, false)] {
            let c = ScheduleConfig { mode, ..cfg.clone() };
            let fwd = forward(&g, &shells, d, &c).unwrap();
            let (z, logits) = oracle_forward(&x, &members, d, &c, att);
            for v in 0..n {
                for i in 0..hidden {
                    note("forward", (fwd.embeddings[[v, i]] - z[v][i]).abs());
                }
                for j in 0..classes {
                    note("forward", (fwd.logits[[v, j]] - logits[v][j]).abs());
                }
            }
            let labels = g.labels();
            let nodes: Vec<usize> = (0..n).collect();
            let ce = classification_loss(&fwd.logits, labels, &nodes).unwrap();
            note("ce", (ce - oracle_ce(&logits, labels, &nodes)).abs());
        }

        for v in 0..n {
            for k in 1..=hops {
                let got = attention_weights(&g, &shells, d, v, k, &cfg).unwrap();
                let want = oracle_attention(&x, d, v, k, &members[v][k - 1], &cfg);
                note("attention", if got.len() == want.len() { 0.0 } else { f64::INFINITY });
                for ((u, a), (&mu, b)) in got.iter().zip(members[v][k - 1].iter().zip(&want)) {
                    note("attention", if *u == mu { (a - b).abs() } else { f64::INFINITY });
                }
                for rec in shell_distances(&g, &shells, v, k, &cfg).unwrap() {
                    note("distance", (rec.total - oracle_distance(&x[v], &x[rec.u], k, &cfg)).abs());
                }
            }
        }

        let omega = [r.random_range(0.1..2.0), r.random_range(0.1..2.0), r.random_range(0.0..1.0)];
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|v| (v + 1..n).map(move |u| (v, u)))
            .filter(|&(v, u)| !g.has_edge(v, u))
            .collect();
        let scored = score_candidates(&g, &pairs, &drtr::SimilarityWeights::new(omega), &cfg).unwrap();
        for c in &scored {
            note("similarity", (c.sim - oracle_sim(&g, c.v, c.u, omega)).abs());
        }
        note("similarity", if scored.len() == pairs.len() { 0.0 } else { f64::INFINITY });
        note("tr_loss", (tr_loss(&scored, &cfg) - oracle_tr_loss(&g, &pairs, omega, &cfg)).abs());
    }
    worst
}

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub entries: usize,
    pub instances: usize,
    pub skipped: usize,
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative error on near-zero gradient entries.
pub const REL_FLOOR: f64 = 1e-6;
/// Clearance required from every kink before an instance is used.
const KINK_MARGIN: f64 = 1e-3;

/// Analytic gradient of the full objective against central differences for
/// every entry of every parameter tensor.
pub fn gradient_suite(instances: usize) -> GradCheck {
    let mut out = GradCheck {
        max_rel_err: 0.0,
        entries: 0,
        instances: 0,
        skipped: 0,
    };
    let mut seed = 0u64;
    while out.instances < instances {
        seed += 1;
        let mut r = rng(5000 + seed);
        let n = r.random_range(8..=14);
        let hops = r.random_range(1..=3);
        let classes = r.random_range(2..=3);
        let g = random_graph(n, 0.3, 3, classes, 77 + seed);
        let cfg = ScheduleConfig {
            hops,
            hidden_dim: 4,
            shell_cap: 64,
            mode: Mode::Gkhddra,
            ..Default::default()
        };
        let shells = build_hop_shells(&g, hops, cfg.shell_cap, seed).unwrap();
        let mut params = ModelParams::init(hops, 3, 4, classes, [0.8, 0.5, 0.2], seed);
        for i in 0..hops {
            params.diffusion.hop_logits[i] = r.random_range(-1.0..1.0);
        }
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|v| (v + 1..n).map(move |u| (v, u)))
            .filter(|&(v, u)| !g.has_edge(v, u))
            .collect();
        let candidates = score_candidates(&g, &pairs, &params.similarity, &cfg).unwrap();
        let train: Vec<usize> = (0..n).filter(|v| v % 2 == 0).collect();
        let ctx = ObjectiveContext {
            graph: &g,
            shells: &shells,
            train_nodes: &train,
            cfg: &cfg,
            candidates,
            dr_value: 1.5,
        };
        let (_, fwd) = ctx.evaluate(&params).unwrap();
        let near_kink = fwd.hops.iter().any(|h| {
            h.scores.iter().any(|s| s.abs() < KINK_MARGIN) || (!h.neighbors.is_empty() && h.std < KINK_MARGIN)
        }) || ctx.candidates.iter().any(|c| (cfg.tr_beta - c.sim).abs() < KINK_MARGIN);
        if near_kink {
            out.skipped += 1;
            continue;
        }
        let analytic = backward(&ctx, &params, &fwd).unwrap();
        let total = |p: &ModelParams| ctx.evaluate(p).unwrap().0.total;
        let grads: Vec<Vec<f64>> = analytic.tensors().into_iter().map(|(_, v)| v.to_vec()).collect();
        for (t, grad) in grads.iter().enumerate() {
            for i in 0..grad.len() {
                let mut plus = params.clone();
                plus.tensors_mut()[t].1[i] += FD_STEP;
                let mut minus = params.clone();
                minus.tensors_mut()[t].1[i] -= FD_STEP;
                let fd = (total(&plus) - total(&minus)) / (2.0 * FD_STEP);
                let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(REL_FLOOR);
                out.max_rel_err = out.max_rel_err.max(rel);
                out.entries += 1;
            }
        }
        out.instances += 1;
    }
    out
}
