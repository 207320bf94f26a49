//! Link prediction from node embeddings.
//!
//! Held-out edges are removed before training; an equal number of non-edges
//! is drawn uniformly as negatives. Pairs are scored by
//! `sigmoid(z_v . z_u)`.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, ScheduleConfig};
use crate::error::{DrtrError, Result};
use crate::graph::GraphStore;
use crate::shells::mix_seed;
use crate::topology::sigmoid;
use crate::trainer::fit;

use super::ablation::graph_seed;
use super::sbm::{gen_sbm, SbmSpec};
use super::{row, ExperimentResult};

#[derive(Debug, Clone)]
pub struct LinkSplit {
    pub train_graph: GraphStore,
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkScores {
    pub auc: f64,
    pub ap: f64,
}

/// Remove `round(fraction * |E|)` random edges and draw as many non-edges.
pub fn holdout_split(g: &GraphStore, fraction: f64, seed: u64) -> Result<LinkSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DrtrError::InvalidArgument(format!("holdout fraction {fraction} must be in (0, 1)")));
    }
    let mut edges = g.edge_list();
    let count = (fraction * edges.len() as f64).round() as usize;
    if count == 0 || count >= edges.len() {
        return Err(DrtrError::InvalidArgument(format!(
            "holding out {count} of {} edges leaves nothing to train or test on",
            edges.len()
        )));
    }
    let n = g.node_count();
    let free = n * (n - 1) / 2 - edges.len();
    if free < count {
        return Err(DrtrError::InvalidArgument("not enough non-edges for negatives".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x1e, 0));
    edges.shuffle(&mut rng);
    let mut positives = edges[..count].to_vec();
    positives.sort_unstable();
    let mut seen = BTreeSet::new();
    let mut negatives = Vec::with_capacity(count);
    while negatives.len() < count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let key = (a.min(b), a.max(b));
        if a != b && !g.has_edge(a, b) && seen.insert(key) {
            negatives.push(key);
        }
    }
    Ok(LinkSplit {
        train_graph: g.without_edges(&positives),
        positives,
        negatives,
    })
}

/// Area under the ROC curve; tied scores count half.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Average precision with negatives ranked ahead of positives on ties.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut hits = 0.0;
    let mut total = 0.0;
    for (i, &(_, is_pos)) in all.iter().enumerate() {
        if is_pos {
            hits += 1.0;
            total += hits / (i + 1) as f64;
        }
    }
    total / pos.len() as f64
}

pub fn score_embeddings(z: &Array2<f64>, positives: &[(usize, usize)], negatives: &[(usize, usize)]) -> LinkScores {
    let score = |&(a, b): &(usize, usize)| sigmoid(z.row(a).dot(&z.row(b)));
    let pos: Vec<f64> = positives.iter().map(score).collect();
    let neg: Vec<f64> = negatives.iter().map(score).collect();
    LinkScores {
        auc: auc(&pos, &neg),
        ap: average_precision(&pos, &neg),
    }
}

/// Hold out edges of `g`, train `mode` on the rest and score the holdout.
pub fn link_prediction_eval(
    g: &GraphStore,
    cfg: &ScheduleConfig,
    mode: Mode,
    holdout_fraction: f64,
    seed: u64,
) -> Result<LinkScores> {
    let split = holdout_split(g, holdout_fraction, seed)?;
    let run = fit(&split.train_graph, &ScheduleConfig { seed, ..cfg.clone() }, mode)?;
    Ok(score_embeddings(&run.embeddings, &split.positives, &split.negatives))
}

fn run_experiment<F>(
    graph_for: F,
    config: serde_json::Value,
    cfg: &ScheduleConfig,
    modes: &[Mode],
    holdout_fraction: f64,
    seeds: &[u64],
) -> Result<ExperimentResult>
where
    F: Fn(u64) -> Result<GraphStore> + Sync,
{
    let per_seed: Vec<Vec<(Mode, LinkScores, f64)>> = seeds
        .par_iter()
        .map(|&seed| {
            let g = graph_for(seed)?;
            modes
                .iter()
                .map(|&mode| {
                    let start = std::time::Instant::now();
                    let s = link_prediction_eval(&g, cfg, mode, holdout_fraction, seed)?;
                    Ok((mode, s, start.elapsed().as_secs_f64()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (&seed, runs) in seeds.iter().zip(&per_seed) {
        for &(mode, s, secs) in runs {
            rows.push(row(seed, mode.name(), &[("auc", s.auc), ("ap", s.ap), ("seconds", secs)]));
        }
    }
    Ok(ExperimentResult::new("linkpred", config, rows))
}

/// Link prediction for each mode over per-seed SBM graphs; rows carry
/// `auc`, `ap` and `seconds`.
pub fn link_prediction_experiment(
    spec: &SbmSpec,
    cfg: &ScheduleConfig,
    modes: &[Mode],
    holdout_fraction: f64,
    seeds: &[u64],
) -> Result<ExperimentResult> {
    let config = serde_json::json!({
        "spec": spec,
        "schedule": cfg,
        "holdout": holdout_fraction,
        "seeds": seeds,
    });
    let graph_for = |seed| {
        Ok(gen_sbm(&SbmSpec {
            seed: graph_seed(spec, seed),
            ..spec.clone()
        })?
        .graph)
    };
    run_experiment(graph_for, config, cfg, modes, holdout_fraction, seeds)
}

/// Same as [`link_prediction_experiment`] on one fixed graph, with the
/// holdout and negatives resampled per seed.
pub fn link_prediction_experiment_on(
    g: &GraphStore,
    cfg: &ScheduleConfig,
    modes: &[Mode],
    holdout_fraction: f64,
    seeds: &[u64],
) -> Result<ExperimentResult> {
    let config = serde_json::json!({
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "schedule": cfg,
        "holdout": holdout_fraction,
        "seeds": seeds,
    });
    run_experiment(|_| Ok(g.clone()), config, cfg, modes, holdout_fraction, seeds)
}
