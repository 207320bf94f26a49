//! Distance recomputation and percentile pruning of hop shells.
//!
//! Every built shell entry gets a semantic distance on raw features,
//!
//! ```text
//! d = ||x_v - x_u||^2 + lambda_k * (beta1 * k^2 + beta2 * (1 - cos(x_v, x_u)))
//! lambda_k = lambda0 * exp(-rho * k) + lambda_min
//! ```
//!
//! and each shell keeps the members with `d <= alpha`, where `alpha` is the
//! nearest-rank `p`-th percentile of that shell's distances.

use rayon::prelude::*;

use crate::config::ScheduleConfig;
use crate::error::{DrtrError, Result};
use crate::graph::{GraphStore, TopologyDelta};
use crate::report::{PruneAction, RefinementReport, Threshold};
use crate::shells::HopShells;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRecord {
    pub v: usize,
    pub u: usize,
    pub k: usize,
    pub euclid_sq: f64,
    pub penalty: f64,
    pub lambda_k: f64,
    pub total: f64,
}

pub fn lambda_schedule(k: usize, cfg: &ScheduleConfig) -> f64 {
    cfg.lambda0 * (-cfg.rho * k as f64).exp() + cfg.lambda_min
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        log::trace!("cosine against a zero vector taken as 0");
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Distance record for features `x_v`, `x_u` at hop `k`. Node ids are left 0.
pub fn semantic_distance(x_v: &[f64], x_u: &[f64], k: usize, cfg: &ScheduleConfig) -> Result<DistanceRecord> {
    if x_v.len() != x_u.len() {
        return Err(DrtrError::Shape(format!(
            "feature lengths {} and {} differ",
            x_v.len(),
            x_u.len()
        )));
    }
    let euclid_sq = squared_euclidean(x_v, x_u);
    let hop = k as f64;
    let penalty = cfg.beta1 * hop * hop + cfg.beta2 * (1.0 - cosine(x_v, x_u));
    let lambda_k = lambda_schedule(k, cfg);
    let total = euclid_sq + lambda_k * penalty;
    if !total.is_finite() {
        return Err(DrtrError::Numeric(format!("distance at hop {k} is not finite")));
    }
    Ok(DistanceRecord {
        v: 0,
        u: 0,
        k,
        euclid_sq,
        penalty,
        lambda_k,
        total,
    })
}

/// Nearest-rank percentile: the `ceil(p * n)`-th smallest value.
pub fn percentile_threshold(distances: &[f64], p: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(DrtrError::InvalidArgument("percentile of an empty list".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(DrtrError::InvalidArgument(format!("percentile {p} outside (0, 1)")));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Distances of every built entry of shell `(v, k)`, in entry order.
pub fn shell_distances(g: &GraphStore, shells: &HopShells, v: usize, k: usize, cfg: &ScheduleConfig) -> Result<Vec<DistanceRecord>> {
    let xv = g.feature_row(v);
    shells
        .entries(v, k)
        .iter()
        .map(|e| {
            semantic_distance(xv, g.feature_row(e.node), k, cfg).map(|r| DistanceRecord {
                v,
                u: e.node,
                ..r
            })
        })
        .collect()
}

/// Outcome of one distance pass, ready to commit through
/// [`GraphStore::apply_topology_delta`].
#[derive(Debug, Clone, Default)]
pub struct PruneOutcome {
    pub delta: TopologyDelta,
    pub report: RefinementReport,
}

/// Recompute distances over every built shell entry and decide which entries
/// stay active.
///
/// Decisions are taken against each shell's full built member list, so a
/// repeated pass over unchanged shells yields an empty delta. Entries that
/// are already inactive are never re-enabled.
pub fn prune_shells(g: &GraphStore, shells: &HopShells, cfg: &ScheduleConfig) -> Result<PruneOutcome> {
    let n = g.node_count();
    let hops = shells.hops();
    let slots: Vec<(usize, usize)> = (0..n).flat_map(|v| (1..=hops).map(move |k| (v, k))).collect();
    let chunk = cfg.batch_size.max(1);

    type SlotResult = (Option<Threshold>, Vec<PruneAction>, usize, usize);
    let results: Vec<SlotResult> = slots
        .par_chunks(chunk)
        .map(|batch| {
            batch
                .iter()
                .map(|&(v, k)| {
                    let entries = shells.entries(v, k);
                    if entries.is_empty() {
                        return Ok((None, Vec::new(), 0, 0));
                    }
                    let records = shell_distances(g, shells, v, k, cfg)?;
                    let totals: Vec<f64> = records.iter().map(|r| r.total).collect();
                    let alpha = percentile_threshold(&totals, cfg.percentile_p)?;
                    let mut pruned = Vec::new();
                    let mut kept = 0;
                    for (e, r) in entries.iter().zip(&records) {
                        let keep = r.total <= alpha;
                        kept += (keep && e.active) as usize;
                        if e.active && !keep {
                            pruned.push(PruneAction {
                                v,
                                k,
                                u: e.node,
                                d: r.total,
                                alpha,
                            });
                        }
                    }
                    let visits = entries.iter().filter(|e| e.active).count();
                    Ok((Some(Threshold { v, k, alpha }), pruned, kept, visits))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut outcome = PruneOutcome::default();
    let mut kept_total = 0usize;
    for (threshold, pruned, kept, visits) in results {
        if let Some(t) = threshold {
            outcome.report.thresholds.push(t);
        }
        outcome
            .delta
            .pruned
            .extend(pruned.iter().map(|p| (p.v, p.k, p.u)));
        outcome.report.pruned.extend(pruned);
        kept_total += kept;
        outcome.report.visits += visits;
    }
    outcome.report.original_degree = shells.built_degree();
    outcome.report.effective_degree = if n == 0 { 0.0 } else { kept_total as f64 / n as f64 };
    Ok(outcome)
}

/// Hinge `sum max(0, d - alpha)` over active entries, with `alpha` taken from
/// each shell's full built member list.
pub fn dr_loss(g: &GraphStore, shells: &HopShells, cfg: &ScheduleConfig) -> Result<f64> {
    let n = g.node_count();
    let hops = shells.hops();
    let per_node: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut acc = 0.0;
            for k in 1..=hops {
                let entries = shells.entries(v, k);
                if entries.is_empty() {
                    continue;
                }
                let records = shell_distances(g, shells, v, k, cfg)?;
                let totals: Vec<f64> = records.iter().map(|r| r.total).collect();
                let alpha = percentile_threshold(&totals, cfg.percentile_p)?;
                acc += entries
                    .iter()
                    .zip(&records)
                    .filter(|(e, _)| e.active)
                    .map(|(_, r)| (r.total - alpha).max(0.0))
                    .sum::<f64>();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(per_node.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shells::build_hop_shells;
    use ndarray::Array2;
    use std::collections::BTreeMap;

    #[test]
    fn lambda_values() {
        let cfg = ScheduleConfig::default();
        assert!((lambda_schedule(2, &cfg) - (0.1 * (-0.1f64).exp() + 0.01)).abs() < 1e-15);
        assert!((lambda_schedule(2, &cfg) - 0.100_483_7).abs() < 1e-6);
        let flat = ScheduleConfig {
            rho: 0.0,
            ..Default::default()
        };
        assert!((lambda_schedule(7, &flat) - 0.11).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let l = lambda_schedule(k, &cfg);
            assert!(l < last && l > cfg.lambda_min);
            last = l;
        }
    }

    #[test]
    fn distance_examples() {
        let cfg = ScheduleConfig::default();
        let r = semantic_distance(&[1.0, 2.0], &[1.0, 2.0], 1, &cfg).unwrap();
        assert_eq!(r.euclid_sq, 0.0);
        assert!((r.penalty - 1.0).abs() < 1e-15);
        assert!((r.total - 0.105_123).abs() < 1e-6);

        let r = semantic_distance(&[1.0, 0.0], &[0.0, 1.0], 2, &cfg).unwrap();
        assert_eq!(r.euclid_sq, 2.0);
        assert_eq!(r.penalty, 5.0);
        assert_eq!(r.total, r.euclid_sq + r.lambda_k * r.penalty);

        let off = ScheduleConfig {
            beta1: 0.0,
            beta2: 0.0,
            ..Default::default()
        };
        let r = semantic_distance(&[1.0, 3.0], &[-1.0, 0.5], 3, &off).unwrap();
        assert_eq!(r.total, 4.0 + 6.25);

        assert!(matches!(
            semantic_distance(&[1.0], &[1.0, 2.0], 1, &cfg),
            Err(DrtrError::Shape(_))
        ));
        let z = semantic_distance(&[0.0, 0.0], &[1.0, 1.0], 1, &cfg).unwrap();
        assert_eq!(z.penalty, 2.0);
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile_threshold(&[4.0, 2.0, 3.0, 1.0], 0.75).unwrap(), 3.0);
        assert_eq!(percentile_threshold(&[4.0, 2.0, 9.0, 1.0], 0.999).unwrap(), 9.0);
        assert_eq!(percentile_threshold(&[5.0, 5.0, 5.0], 0.5).unwrap(), 5.0);
        assert!(percentile_threshold(&[], 0.5).is_err());
    }

    fn star(features: &[[f64; 1]]) -> GraphStore {
        let n = features.len();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| features[i][0]);
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        GraphStore::build(&edges, x, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn prunes_farthest_of_four() {
        let g = star(&[[0.0], [1.0], [2.0], [3.0], [4.0]]);
        let s = build_hop_shells(&g, 1, 32, 0).unwrap();
        let out = prune_shells(&g, &s, &ScheduleConfig::default()).unwrap();
        let center: Vec<_> = out.report.pruned.iter().filter(|p| p.v == 0).collect();
        assert_eq!(center.len(), 1);
        assert_eq!(center[0].u, 4);
        // leaves have singleton shells and survive
        assert!(out.report.pruned.iter().all(|p| p.v == 0));
    }

    #[test]
    fn top_percentile_prunes_nothing() {
        let g = star(&[[0.0], [1.0], [2.0], [3.0], [4.0]]);
        let s = build_hop_shells(&g, 1, 32, 0).unwrap();
        let cfg = ScheduleConfig {
            percentile_p: 0.999,
            ..Default::default()
        };
        let out = prune_shells(&g, &s, &cfg).unwrap();
        assert!(out.report.pruned.is_empty());
        assert!(out.delta.is_empty());
    }

    #[test]
    fn repeated_pass_is_a_no_op() {
        let mut g = star(&[[0.0], [1.0], [2.0], [3.0], [4.0], [7.0], [0.5]]);
        let mut s = build_hop_shells(&g, 1, 32, 0).unwrap();
        let cfg = ScheduleConfig::default();
        let first = prune_shells(&g, &s, &cfg).unwrap();
        assert!(!first.delta.pruned.is_empty());
        assert!(dr_loss(&g, &s, &cfg).unwrap() > 0.0);
        g.apply_topology_delta(&first.delta, &mut s).unwrap();
        let second = prune_shells(&g, &s, &cfg).unwrap();
        assert!(second.delta.is_empty());
        assert_eq!(dr_loss(&g, &s, &cfg).unwrap(), 0.0);
    }
}
