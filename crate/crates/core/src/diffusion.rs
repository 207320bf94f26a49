//! K-hop heat-attention diffusion (forward pass).
//!
//! For every node `v` and hop `k` the active shell members are aggregated
//! directly from their raw features through the hop transform `W_k`; attention
//! logits are divided by a hop temperature that decays with `k`. Each hop
//! vector is layer-normalized and the hops are mixed with global softmax
//! weights.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::config::ScheduleConfig;
use crate::error::{DrtrError, Result};
use crate::graph::GraphStore;
use crate::params::DiffusionParams;
use crate::shells::HopShells;

/// `tau0 * exp(-eta * k)`.
pub fn temperature(k: usize, cfg: &ScheduleConfig) -> f64 {
    cfg.tau0 * (-cfg.eta_decay * k as f64).exp()
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Project every node's features through each hop transform: `X W_k`.
pub fn hop_projections(g: &GraphStore, params: &DiffusionParams) -> Vec<Array2<f64>> {
    params
        .hop_transforms
        .iter()
        .map(|w| g.features().dot(w))
        .collect()
}

/// Heat-attention weights over the projected rows of `neighbors`.
///
/// Returns `(alpha, pre_activation_scores)`; both empty when `neighbors` is.
fn attention_from_projections(
    proj: &Array2<f64>,
    attention: &Array1<f64>,
    v: usize,
    neighbors: &[usize],
    tau: f64,
    slope: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if neighbors.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let h = proj.ncols();
    let a = attention.as_slice().expect("contiguous");
    let (a_self, a_nbr) = a.split_at(h);
    let pv = proj.row(v);
    let self_term: f64 = a_self.iter().zip(pv.iter()).map(|(x, y)| x * y).sum();
    let mut pre = Vec::with_capacity(neighbors.len());
    let mut logits = Vec::with_capacity(neighbors.len());
    for &u in neighbors {
        let pu = proj.row(u);
        let s = self_term + a_nbr.iter().zip(pu.iter()).map(|(x, y)| x * y).sum::<f64>();
        let e = leaky_relu(s, slope) / tau;
        if !e.is_finite() {
            return Err(DrtrError::Numeric(format!(
                "attention score for node {v}, neighbor {u} is not finite"
            )));
        }
        pre.push(s);
        logits.push(e);
    }
    Ok((crate::params::softmax(&logits), pre))
}

/// Attention weights `alpha_vu` of hop `k` over the active members of shell `(v, k)`.
///
/// An empty active shell gives an empty list.
pub fn attention_weights(
    g: &GraphStore,
    shells: &HopShells,
    params: &DiffusionParams,
    v: usize,
    k: usize,
    cfg: &ScheduleConfig,
) -> Result<Vec<(usize, f64)>> {
    let neighbors: Vec<usize> = shells.active(v, k).collect();
    let proj = sparse_projection(g, &params.hop_transforms[k - 1], v, &neighbors);
    let (alpha, _) = attention_from_projections(
        &proj,
        &params.attention,
        v,
        &neighbors,
        temperature(k, cfg),
        cfg.leaky_slope,
    )?;
    Ok(neighbors.into_iter().zip(alpha).collect())
}

/// Projections for just `v` and `neighbors` (other rows left zero).
fn sparse_projection(g: &GraphStore, w: &Array2<f64>, v: usize, neighbors: &[usize]) -> Array2<f64> {
    let mut proj = Array2::zeros((g.node_count(), w.ncols()));
    for &u in std::iter::once(&v).chain(neighbors) {
        let x = ndarray::ArrayView1::from(g.feature_row(u));
        proj.row_mut(u).assign(&x.dot(w));
    }
    proj
}

/// `sum_u alpha_vu * W_k x_u` over the active shell; zero vector when empty.
pub fn hop_aggregate(
    g: &GraphStore,
    shells: &HopShells,
    params: &DiffusionParams,
    v: usize,
    k: usize,
    cfg: &ScheduleConfig,
) -> Result<Vec<f64>> {
    let w = &params.hop_transforms[k - 1];
    let mut h = vec![0.0; w.ncols()];
    for (u, alpha) in attention_weights(g, shells, params, v, k, cfg)? {
        let pu = ndarray::ArrayView1::from(g.feature_row(u)).dot(w);
        for (acc, p) in h.iter_mut().zip(pu.iter()) {
            *acc += alpha * p;
        }
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(DrtrError::Numeric(format!("hop {k} aggregate of node {v} overflowed")));
    }
    Ok(h)
}

/// `(h - mean) / (std + eps)` with population variance.
pub fn layer_norm(h: &[f64], eps: f64) -> Vec<f64> {
    layer_norm_with_std(h, eps).0
}

fn layer_norm_with_std(h: &[f64], eps: f64) -> (Vec<f64>, f64) {
    let d = h.len() as f64;
    let mean = h.iter().sum::<f64>() / d;
    let var = h.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
    let std = var.sqrt();
    (h.iter().map(|x| (x - mean) / (std + eps)).collect(), std)
}

/// Mix normalized hop vectors with the global hop weights.
pub fn combine_hops(normalized: &[Vec<f64>], params: &DiffusionParams) -> Result<Vec<f64>> {
    if normalized.len() != params.hops() {
        return Err(DrtrError::Shape(format!(
            "{} hop vectors for {} hop weights",
            normalized.len(),
            params.hops()
        )));
    }
    let gamma = params.hop_weights();
    let dim = normalized.first().map_or(0, Vec::len);
    let mut z = vec![0.0; dim];
    for (hk, g) in normalized.iter().zip(&gamma) {
        if hk.len() != dim {
            return Err(DrtrError::Shape("hop vectors differ in length".into()));
        }
        for (acc, x) in z.iter_mut().zip(hk) {
            *acc += g * x;
        }
    }
    Ok(z)
}

/// Cached intermediate values of one `(v, k)` aggregation.
#[derive(Debug, Clone, Default)]
pub struct HopCache {
    pub neighbors: Vec<usize>,
    pub alpha: Vec<f64>,
    /// Attention scores before LeakyReLU (empty for uniform aggregation).
    pub scores: Vec<f64>,
    pub centered: Vec<f64>,
    pub normalized: Vec<f64>,
    pub std: f64,
}

/// Output of [`forward`] plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub embeddings: Array2<f64>,
    pub logits: Array2<f64>,
    pub projections: Vec<Array2<f64>>,
    /// Indexed `v * K + (k - 1)`.
    pub hops: Vec<HopCache>,
    pub hop_weights: Vec<f64>,
    pub uniform: bool,
}

/// Full forward pass over every node.
///
/// Heat attention is used when the configured mode enables it, otherwise each
/// active shell member gets weight `1 / |shell|`.
pub fn forward(
    g: &GraphStore,
    shells: &HopShells,
    params: &DiffusionParams,
    cfg: &ScheduleConfig,
) -> Result<ForwardPass> {
    let n = g.node_count();
    let hops = params.hops();
    if shells.hops() != hops {
        return Err(DrtrError::Shape(format!(
            "shells have {} hops, parameters {hops}",
            shells.hops()
        )));
    }
    if shells.node_count() != n {
        return Err(DrtrError::Shape("shells built for a different graph".into()));
    }
    if params.feature_dim() != g.feature_dim() {
        return Err(DrtrError::Shape(format!(
            "parameters expect {} features, graph has {}",
            params.feature_dim(),
            g.feature_dim()
        )));
    }
    let hidden = params.hidden_dim();
    let uniform = !cfg.mode.uses_attention();
    let projections = hop_projections(g, params);
    let gamma = params.hop_weights();
    let taus: Vec<f64> = (1..=hops).map(|k| temperature(k, cfg)).collect();

    let per_node: Vec<(Vec<HopCache>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut caches = Vec::with_capacity(hops);
            let mut z = vec![0.0; hidden];
            for k in 1..=hops {
                let proj = &projections[k - 1];
                let neighbors: Vec<usize> = shells.active(v, k).collect();
                let (alpha, scores) = if uniform {
                    let w = 1.0 / neighbors.len().max(1) as f64;
                    (vec![w; neighbors.len()], Vec::new())
                } else {
                    attention_from_projections(
                        proj,
                        &params.attention,
                        v,
                        &neighbors,
                        taus[k - 1],
                        cfg.leaky_slope,
                    )
                    .map_err(|e| DrtrError::Numeric(format!("hop {k}: {e}")))?
                };
                let mut h = vec![0.0; hidden];
                for (&u, &a) in neighbors.iter().zip(&alpha) {
                    for (acc, p) in h.iter_mut().zip(proj.row(u).iter()) {
                        *acc += a * p;
                    }
                }
                if h.iter().any(|x| !x.is_finite()) {
                    return Err(DrtrError::Numeric(format!(
                        "hop {k} aggregate of node {v} is not finite"
                    )));
                }
                let cache = if neighbors.is_empty() {
                    HopCache {
                        centered: vec![0.0; hidden],
                        normalized: vec![0.0; hidden],
                        ..Default::default()
                    }
                } else {
                    let (normalized, std) = layer_norm_with_std(&h, cfg.layer_norm_eps);
                    let mean = h.iter().sum::<f64>() / hidden as f64;
                    let centered = h.iter().map(|x| x - mean).collect();
                    HopCache {
                        neighbors,
                        alpha,
                        scores,
                        centered,
                        normalized,
                        std,
                    }
                };
                for (acc, x) in z.iter_mut().zip(&cache.normalized) {
                    *acc += gamma[k - 1] * x;
                }
                caches.push(cache);
            }
            Ok((caches, z))
        })
        .collect::<Result<_>>()?;

    let mut embeddings = Array2::zeros((n, hidden));
    let mut caches = Vec::with_capacity(n * hops);
    for (v, (c, z)) in per_node.into_iter().enumerate() {
        embeddings.row_mut(v).assign(&Array1::from(z));
        caches.extend(c);
    }
    let logits = embeddings.dot(&params.classifier) + &params.bias.view().insert_axis(Axis(0));
    Ok(ForwardPass {
        embeddings,
        logits,
        projections,
        hops: caches,
        hop_weights: gamma,
        uniform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;
    use crate::shells::build_hop_shells;
    use std::collections::BTreeMap;

    fn cfg() -> ScheduleConfig {
        ScheduleConfig {
            hops: 2,
            hidden_dim: 4,
            mode: Mode::Gkhda,
            ..Default::default()
        }
    }

    #[test]
    fn temperature_values() {
        let c = ScheduleConfig::default();
        assert!((temperature(3, &c) - 0.740_818_220_681_717_9).abs() < 1e-12);
        assert!((temperature(1, &c) - 0.904_837_418_035_959_6).abs() < 1e-12);
        let flat = ScheduleConfig {
            eta_decay: 0.0,
            tau0: 2.5,
            ..Default::default()
        };
        assert!((1..=5).all(|k| temperature(k, &flat) == 2.5));
    }

    #[test]
    fn layer_norm_cases() {
        assert_eq!(layer_norm(&[3.0; 5], 1e-5), vec![0.0; 5]);
        let out = layer_norm(&[1.0, -1.0], 1e-5);
        assert!((out[0] - 1.0 / (1.0 + 1e-5)).abs() < 1e-12);
        assert!((out[1] + 1.0 / (1.0 + 1e-5)).abs() < 1e-12);
        let h = [0.3, -2.0, 5.5, 1.25];
        let shifted: Vec<f64> = h.iter().map(|x| x + 17.0).collect();
        for (a, b) in layer_norm(&h, 1e-5).iter().zip(layer_norm(&shifted, 1e-5)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn combine_cases() {
        let mut p = DiffusionParams::init(3, 2, 2, 2, 0);
        let hops = vec![vec![3.0, 0.0], vec![0.0, 3.0], vec![-3.0, 6.0]];
        let z = combine_hops(&hops, &p).unwrap();
        assert!((z[0] - 0.0).abs() < 1e-12 && (z[1] - 3.0).abs() < 1e-12);
        assert!(combine_hops(&hops[..2], &p).is_err());

        p.hop_logits = ndarray::arr1(&[0.3, -1.0, 2.0]);
        let same = vec![vec![1.5, -0.5]; 3];
        let z = combine_hops(&same, &p).unwrap();
        assert!((z[0] - 1.5).abs() < 1e-12 && (z[1] + 0.5).abs() < 1e-12);

        let mut p2 = DiffusionParams::init(2, 2, 2, 2, 0);
        p2.hop_logits = ndarray::arr1(&[10.0, -10.0]);
        let z = combine_hops(&[vec![1.0, 2.0], vec![-5.0, 7.0]], &p2).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-7 && (z[1] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn attention_symmetric_and_singleton() {
        // 0 connected to 1 and 2 which share features
        let x = ndarray::arr2(&[[1.0, 0.0], [0.5, 2.0], [0.5, 2.0], [3.0, 1.0]]);
        let g = GraphStore::build(&[(0, 1), (0, 2), (2, 3)], x, &BTreeMap::new()).unwrap();
        let s = build_hop_shells(&g, 2, 32, 0).unwrap();
        let p = DiffusionParams::init(2, 2, 4, 2, 5);
        let w = attention_weights(&g, &s, &p, 0, 1, &cfg()).unwrap();
        assert_eq!(w.len(), 2);
        assert!((w[0].1 - 0.5).abs() < 1e-12 && (w[1].1 - 0.5).abs() < 1e-12);
        let single = attention_weights(&g, &s, &p, 3, 1, &cfg()).unwrap();
        assert_eq!(single, vec![(2, 1.0)]);
        // node 1 at hop 2 reaches only 2? N(1)={0}; dist2 = {2}
        let h = hop_aggregate(&g, &s, &p, 1, 2, &cfg()).unwrap();
        let expect = ndarray::ArrayView1::from(g.feature_row(2)).dot(&p.hop_transforms[1]);
        for (a, b) in h.iter().zip(expect.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_graph_forward_is_bias_only() {
        let x = ndarray::Array2::from_shape_fn((5, 3), |(i, j)| (i + 2 * j) as f64);
        let g = GraphStore::build(&[], x, &BTreeMap::new()).unwrap();
        let s = build_hop_shells(&g, 2, 32, 0).unwrap();
        let mut p = DiffusionParams::init(2, 3, 4, 3, 1);
        p.bias = ndarray::arr1(&[0.1, -0.2, 0.3]);
        let out = forward(&g, &s, &p, &cfg()).unwrap();
        assert!(out.embeddings.iter().all(|&x| x == 0.0));
        for row in out.logits.rows() {
            assert_eq!(row.to_vec(), vec![0.1, -0.2, 0.3]);
        }
        assert!(hop_aggregate(&g, &s, &p, 0, 1, &cfg()).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nonfinite_scores_are_reported() {
        let x = ndarray::arr2(&[[1e300, 1e300], [1e300, -1e300]]);
        let g = GraphStore::build(&[(0, 1)], x, &BTreeMap::new()).unwrap();
        let s = build_hop_shells(&g, 1, 32, 0).unwrap();
        let mut p = DiffusionParams::init(1, 2, 2, 2, 0);
        p.hop_transforms[0].fill(1e10);
        p.attention.fill(1.0);
        let c = ScheduleConfig {
            hops: 1,
            ..cfg()
        };
        assert!(matches!(forward(&g, &s, &p, &c), Err(DrtrError::Numeric(_))));
    }
}
