//! Mode ablation: every mode trained on the same graph per seed.

use rayon::prelude::*;

use crate::config::{Mode, ScheduleConfig};
use crate::error::{DrtrError, Result};
use crate::shells::mix_seed;
use crate::trainer::fit;

use super::sbm::{gen_sbm, SbmSpec};
use super::{row, ExperimentResult};

/// Graph seed used for run `seed` of an experiment over `spec`.
pub fn graph_seed(spec: &SbmSpec, seed: u64) -> u64 {
    mix_seed(spec.seed, seed, 0x9a9)
}

/// Train all four modes for each seed and compare test accuracy.
///
/// Rows carry `test_acc`, `val_acc`, `epochs` and `seconds`. Derived values
/// per mode: `variance_reduction_pct.<mode>` and `time_overhead_pct.<mode>`,
/// both relative to the baseline.
pub fn ablation_experiment(spec: &SbmSpec, cfg: &ScheduleConfig, seeds: &[u64]) -> Result<ExperimentResult> {
    if seeds.len() < 2 {
        return Err(DrtrError::InvalidArgument("ablation needs at least two seeds".into()));
    }
    spec.validate()?;
    cfg.validate()?;
    let runs: Vec<Vec<(Mode, f64, f64, usize, f64)>> = seeds
        .par_iter()
        .map(|&seed| {
            let graph = gen_sbm(&SbmSpec {
                seed: graph_seed(spec, seed),
                ..spec.clone()
            })?
            .graph;
            let run_cfg = ScheduleConfig { seed, ..cfg.clone() };
            Mode::ALL
                .iter()
                .map(|&mode| {
                    let r = fit(&graph, &run_cfg, mode)?;
                    Ok((mode, r.test_acc, r.val_acc, r.epochs_run, r.elapsed.as_secs_f64()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (&seed, per_mode) in seeds.iter().zip(&runs) {
        for &(mode, test, val, epochs, secs) in per_mode {
            rows.push(row(
                seed,
                mode.name(),
                &[("test_acc", test), ("val_acc", val), ("epochs", epochs as f64), ("seconds", secs)],
            ));
        }
    }
    let config = serde_json::json!({ "spec": spec, "schedule": cfg, "seeds": seeds });
    let mut result = ExperimentResult::new("ablation", config, rows);
    let base = result.aggregate(Mode::Baseline.name(), "test_acc").expect("baseline rows");
    let base_time = result.timings[Mode::Baseline.name()];
    for mode in Mode::ALL {
        let a = result.aggregate(mode.name(), "test_acc").expect("mode rows");
        let reduction = if base.variance > 0.0 {
            100.0 * (base.variance - a.variance) / base.variance
        } else {
            0.0
        };
        let overhead = 100.0 * (result.timings[mode.name()] - base_time) / base_time;
        result.derived.insert(format!("variance_reduction_pct.{}", mode.name()), reduction);
        result.derived.insert(format!("time_overhead_pct.{}", mode.name()), overhead);
    }
    Ok(result)
}
