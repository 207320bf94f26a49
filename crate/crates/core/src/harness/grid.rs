//! Grid search over step size and loss weights.
//!
//! Each grid point is trained on SBM graphs drawn from tuning seeds and
//! scored by mean validation accuracy. Test accuracy is never consulted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, ScheduleConfig};
use crate::error::{DrtrError, Result};
use crate::trainer::fit;

use super::ablation::graph_seed;
use super::sbm::{gen_sbm, SbmSpec};
use super::{row, ExperimentResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr0: f64,
    pub loss_weights: [f64; 3],
}

impl GridPoint {
    pub fn apply(&self, cfg: &ScheduleConfig) -> ScheduleConfig {
        ScheduleConfig {
            lr0: self.lr0,
            loss_weights: self.loss_weights,
            ..cfg.clone()
        }
    }

    fn label(&self) -> String {
        let [a, b, c] = self.loss_weights;
        format!("lr0={}/w={a},{b},{c}", self.lr0)
    }
}

/// Cartesian grid over `lr0` and `(λ2, λ3)` with λ1 taking the remainder.
pub fn simplex_grid(lrs: &[f64], l2s: &[f64], l3s: &[f64]) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &lr0 in lrs {
        for &l2 in l2s {
            for &l3 in l3s {
                if l2 + l3 <= 1.0 {
                    out.push(GridPoint {
                        lr0,
                        loss_weights: [((1.0 - l2 - l3) * 1e12).round() / 1e12, l2, l3],
                    });
                }
            }
        }
    }
    out
}

/// Train `mode` at every grid point over the tuning seeds.
///
/// Rows are grouped by point label and carry `val_acc`. Derived:
/// `best_index` and `best_val_acc`; ties go to the earlier point.
pub fn grid_search(
    spec: &SbmSpec,
    cfg: &ScheduleConfig,
    mode: Mode,
    points: &[GridPoint],
    seeds: &[u64],
) -> Result<ExperimentResult> {
    if points.is_empty() || seeds.is_empty() {
        return Err(DrtrError::InvalidArgument("grid search needs points and seeds".into()));
    }
    spec.validate()?;
    for p in points {
        p.apply(cfg).validate()?;
    }
    let graphs: Vec<_> = seeds
        .iter()
        .map(|&s| {
            gen_sbm(&SbmSpec {
                seed: graph_seed(spec, s),
                ..spec.clone()
            })
            .map(|x| x.graph)
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..seeds.len()).map(move |s| (p, s))).collect();
    let accs: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, s)| {
            let run_cfg = ScheduleConfig {
                seed: seeds[s],
                ..points[p].apply(cfg)
            };
            Ok(fit(&graphs[s], &run_cfg, mode)?.val_acc)
        })
        .collect::<Result<_>>()?;
    let rows = jobs
        .iter()
        .zip(&accs)
        .map(|(&(p, s), &acc)| row(seeds[s], &points[p].label(), &[("val_acc", acc)]))
        .collect();
    let config = serde_json::json!({ "spec": spec, "schedule": cfg, "mode": mode, "points": points, "seeds": seeds });
    let mut result = ExperimentResult::new("grid", config, rows);
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let m = result.aggregate(&p.label(), "val_acc").expect("point rows").mean;
        if m > best.1 {
            best = (i, m);
        }
    }
    result.derived.insert("best_index".into(), best.0 as f64);
    result.derived.insert("best_val_acc".into(), best.1);
    Ok(result)
}
