//! Embedding sensitivity to edge perturbations.
//!
//! For a graph pair differing in `delta` flipped node pairs, the ratio
//! `||Z1 - Z2||_F / (delta * sqrt(n))` is measured with identical parameters.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ScheduleConfig;
use crate::diffusion::forward;
use crate::error::{DrtrError, Result};
use crate::graph::GraphStore;
use crate::params::DiffusionParams;
use crate::shells::{build_hop_shells, mix_seed};

use super::{row, ExperimentResult};

/// `delta` distinct node pairs drawn uniformly, each to be toggled.
pub fn random_flips(n: usize, delta: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let available = n * n.saturating_sub(1) / 2;
    if delta > available {
        return Err(DrtrError::InvalidArgument(format!(
            "cannot flip {delta} pairs on {n} nodes ({available} available)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    let mut order = Vec::with_capacity(delta);
    while order.len() < delta {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && chosen.insert((a.min(b), a.max(b))) {
            order.push((a.min(b), a.max(b)));
        }
    }
    Ok(order)
}

/// Frobenius distance between the embeddings of `g` and `g` with `flips` toggled.
pub fn embedding_shift(
    g: &GraphStore,
    params: &DiffusionParams,
    cfg: &ScheduleConfig,
    flips: &[(usize, usize)],
) -> Result<f64> {
    let perturbed = g.with_flipped_edges(flips)?;
    let s1 = build_hop_shells(g, cfg.hops, cfg.shell_cap, cfg.seed)?;
    let s2 = build_hop_shells(&perturbed, cfg.hops, cfg.shell_cap, cfg.seed)?;
    let z1 = forward(g, &s1, params, cfg)?.embeddings;
    let z2 = forward(&perturbed, &s2, params, cfg)?.embeddings;
    Ok((z1 - z2).iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// One row per `(seed, delta)` with the shift and its normalized ratio.
///
/// Derived: `max_ratio`, `ratio_spread` (max over delta of the mean ratio
/// divided by the min), `max_seed_spread` (the same within each seed, worst
/// seed) and `max_doubling` (largest `r(2d) / r(d)` over seeds).
pub fn stability_experiment(
    g: &GraphStore,
    params: &DiffusionParams,
    cfg: &ScheduleConfig,
    deltas: &[usize],
    seeds: &[u64],
) -> Result<ExperimentResult> {
    let n = g.node_count();
    let per_seed: Vec<Vec<(usize, f64, f64)>> = seeds
        .par_iter()
        .map(|&seed| {
            deltas
                .iter()
                .map(|&delta| {
                    let flips = random_flips(n, delta, mix_seed(seed, delta as u64, 0xf11b))?;
                    let shift = embedding_shift(g, params, cfg, &flips)?;
                    let ratio = if delta == 0 { 0.0 } else { shift / (delta as f64 * (n as f64).sqrt()) };
                    Ok((delta, shift, ratio))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (&seed, runs) in seeds.iter().zip(&per_seed) {
        for &(delta, shift, ratio) in runs {
            rows.push(row(seed, &format!("delta={delta}"), &[("shift", shift), ("ratio", ratio)]));
        }
    }
    let config = serde_json::json!({
        "nodes": n,
        "edges": g.edge_count(),
        "deltas": deltas,
        "seeds": seeds,
        "schedule": cfg,
    });
    let mut result = ExperimentResult::new("stability", config, rows);

    let positive: Vec<usize> = deltas.iter().copied().filter(|&d| d > 0).collect();
    let spread = |ratios: &[f64]| {
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    };
    if !positive.is_empty() {
        let means: Vec<f64> = positive
            .iter()
            .map(|d| result.aggregate(&format!("delta={d}"), "ratio").expect("row present").mean)
            .collect();
        let max_ratio = result
            .rows
            .iter()
            .map(|r| r.metrics["ratio"])
            .fold(0.0, f64::max);
        let mut worst_seed = 0.0f64;
        let mut worst_doubling = 0.0f64;
        for runs in &per_seed {
            let ratios: Vec<(usize, f64)> = runs.iter().filter(|r| r.0 > 0).map(|r| (r.0, r.2)).collect();
            let values: Vec<f64> = ratios.iter().map(|r| r.1).collect();
            worst_seed = worst_seed.max(spread(&values));
            for &(d, r) in &ratios {
                if let Some(&(_, r2)) = ratios.iter().find(|x| x.0 == 2 * d) {
                    worst_doubling = worst_doubling.max(r2 / r);
                }
            }
        }
        result.derived.insert("max_ratio".into(), max_ratio);
        result.derived.insert("ratio_spread".into(), spread(&means));
        result.derived.insert("max_seed_spread".into(), worst_seed);
        result.derived.insert("max_doubling".into(), worst_doubling);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sbm::{gen_sbm, SbmSpec};

    #[test]
    fn zero_delta_is_exactly_zero() {
        let g = gen_sbm(&SbmSpec {
            nodes_per_block: 30,
            ..SbmSpec::standard()
        })
        .unwrap()
        .graph;
        let cfg = ScheduleConfig {
            hidden_dim: 8,
            ..Default::default()
        };
        let p = DiffusionParams::init(cfg.hops, 4, 8, 2, 0);
        assert_eq!(embedding_shift(&g, &p, &cfg, &[]).unwrap(), 0.0);
        let r = stability_experiment(&g, &p, &cfg, &[0, 1, 2], &[0, 1]).unwrap();
        assert_eq!(r.aggregate("delta=0", "shift").unwrap().mean, 0.0);
        assert!(r.aggregate("delta=2", "shift").unwrap().mean > 0.0);
    }

    #[test]
    fn too_many_flips_rejected() {
        assert!(random_flips(4, 7, 0).is_err());
        let all = random_flips(4, 6, 0).unwrap();
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), 6);
    }
}
