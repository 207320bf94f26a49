//! Topology reconstruction: candidate proposal, similarity scoring, edge
//! addition and the margin loss.
//!
//! ```text
//! sim  = w1 * cos(x_v, x_u) + w2 * jaccard(N(v), N(u)) - w3 * ||x_v - x_u||^2
//! prob = sigmoid((sim - beta) / tau)
//! ```
//!
//! A candidate becomes an edge when `prob > theta`.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{KnnBackend, ScheduleConfig};
use crate::distance::{cosine, squared_euclidean};
use crate::error::{DrtrError, Result};
use crate::graph::GraphStore;
use crate::knn::{exact_knn, forest_knn, ForestParams};
use crate::params::SimilarityWeights;
use crate::report::AddAction;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cosine similarity of two feature vectors; 0 against a zero vector.
pub fn contextual_alignment(x_v: &[f64], x_u: &[f64]) -> Result<f64> {
    if x_v.len() != x_u.len() {
        return Err(DrtrError::Shape(format!(
            "feature lengths {} and {} differ",
            x_v.len(),
            x_u.len()
        )));
    }
    Ok(cosine(x_v, x_u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePair {
    pub v: usize,
    pub u: usize,
    pub alignment: f64,
    pub jaccard: f64,
    pub euclid_sq: f64,
    pub sim: f64,
    pub add_prob: f64,
}

impl CandidatePair {
    /// Recompute `sim` and `add_prob` for new weights.
    pub fn rescore(&mut self, weights: &SimilarityWeights, cfg: &ScheduleConfig) {
        let [w1, w2, w3] = weights.omega;
        self.sim = w1 * self.alignment + w2 * self.jaccard - w3 * self.euclid_sq;
        self.add_prob = sigmoid((self.sim - cfg.tr_beta) / cfg.tr_tau);
    }
}

fn resolve_backend(cfg: &ScheduleConfig, n: usize) -> KnnBackend {
    match cfg.knn_backend {
        KnnBackend::Auto if n <= cfg.knn_exact_limit => KnnBackend::Exact,
        KnnBackend::Auto => KnnBackend::Forest,
        other => other,
    }
}

/// Nearest feature-space neighbors of a node that are not already adjacent.
///
/// Each node proposes at most `min(knn_k, cap_r)` pairs `(v, u)`. The same
/// unordered pair may be proposed from both ends.
pub fn knn_candidates(g: &GraphStore, cfg: &ScheduleConfig) -> Vec<(usize, usize)> {
    let flat = g.features().as_slice().expect("standard layout");
    let dim = g.feature_dim();
    let lists = match resolve_backend(cfg, g.node_count()) {
        KnnBackend::Forest => forest_knn(flat, dim, cfg.knn_k, ForestParams::for_k(cfg.knn_k, cfg.seed)),
        _ => exact_knn(flat, dim, cfg.knn_k),
    };
    let mut out = Vec::new();
    for (v, list) in lists.into_iter().enumerate() {
        out.extend(
            list.into_iter()
                .filter(|&u| !g.has_edge(v, u))
                .take(cfg.cap_r)
                .map(|u| (v, u)),
        );
    }
    out
}

/// Fill in similarity terms for each unordered pair once, as `(min, max)`.
pub fn score_candidates(
    g: &GraphStore,
    skeleton: &[(usize, usize)],
    weights: &SimilarityWeights,
    cfg: &ScheduleConfig,
) -> Result<Vec<CandidatePair>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &(a, b) in skeleton {
        let (v, u) = (a.min(b), a.max(b));
        if v == u || !seen.insert((v, u)) {
            continue;
        }
        let (xv, xu) = (g.feature_row(v), g.feature_row(u));
        let mut pair = CandidatePair {
            v,
            u,
            alignment: contextual_alignment(xv, xu)?,
            jaccard: g.structural_similarity(v, u)?,
            euclid_sq: squared_euclidean(xv, xu),
            sim: 0.0,
            add_prob: 0.0,
        };
        pair.rescore(weights, cfg);
        if !pair.sim.is_finite() {
            return Err(DrtrError::Numeric(format!("similarity of ({v}, {u}) is not finite")));
        }
        out.push(pair);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct Reconstruction {
    pub scored: Vec<CandidatePair>,
    pub added: Vec<(usize, usize)>,
    pub actions: Vec<AddAction>,
}

/// Score candidates and pick the edges to add.
///
/// Deterministic mode adds a pair when `add_prob > theta`; sampling mode
/// draws it with probability `add_prob`. Pairs are visited by descending
/// similarity and no node gains more than `cap_r` edges.
pub fn score_and_add(
    g: &GraphStore,
    skeleton: &[(usize, usize)],
    weights: &SimilarityWeights,
    cfg: &ScheduleConfig,
    rng_seed: u64,
) -> Result<Reconstruction> {
    let scored = score_candidates(g, skeleton, weights, cfg)?;
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| {
        scored[j]
            .sim
            .total_cmp(&scored[i].sim)
            .then((scored[i].v, scored[i].u).cmp(&(scored[j].v, scored[j].u)))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut gained = vec![0usize; g.node_count()];
    let mut added = Vec::new();
    let mut actions = Vec::new();
    for i in order {
        let c = &scored[i];
        if g.has_edge(c.v, c.u) {
            continue;
        }
        let accept = if cfg.tr_sampling {
            rng.random::<f64>() < c.add_prob
        } else {
            c.add_prob > cfg.tr_theta
        };
        if !accept || gained[c.v] >= cfg.cap_r || gained[c.u] >= cfg.cap_r {
            continue;
        }
        gained[c.v] += 1;
        gained[c.u] += 1;
        added.push((c.v, c.u));
        actions.push(AddAction {
            v: c.v,
            u: c.u,
            sim: c.sim,
            prob: c.add_prob,
        });
    }
    Ok(Reconstruction {
        scored,
        added,
        actions,
    })
}

/// `sum max(0, beta - sim) * add_prob` over the scored candidates.
pub fn tr_loss(candidates: &[CandidatePair], cfg: &ScheduleConfig) -> f64 {
    candidates
        .iter()
        .map(|c| (cfg.tr_beta - c.sim).max(0.0) * c.add_prob)
        .sum()
}

/// Same hinge with `add_prob` taken from `frozen_probs` instead of the pair.
pub fn tr_loss_with_probs(candidates: &[CandidatePair], frozen_probs: &[f64], cfg: &ScheduleConfig) -> f64 {
    candidates
        .iter()
        .zip(frozen_probs)
        .map(|(c, p)| (cfg.tr_beta - c.sim).max(0.0) * p)
        .sum()
}

/// Gradient of [`tr_loss`] with respect to the similarity weights, holding
/// each pair's `add_prob` fixed.
pub fn tr_loss_omega_gradient(candidates: &[CandidatePair], cfg: &ScheduleConfig) -> [f64; 3] {
    let mut grad = [0.0; 3];
    for c in candidates {
        if cfg.tr_beta - c.sim > 0.0 {
            // d(beta - sim)/dw = -(align, jaccard, -euclid)
            grad[0] -= c.add_prob * c.alignment;
            grad[1] -= c.add_prob * c.jaccard;
            grad[2] += c.add_prob * c.euclid_sq;
        }
    }
    grad
}
