//! Effective degree, noise attenuation and runtime scaling.

use std::time::Instant;

use serde::Serialize;

use crate::config::ScheduleConfig;
use crate::diffusion::forward;
use crate::distance::prune_shells;
use crate::error::Result;
use crate::params::ModelParams;
use crate::shells::build_hop_shells;
use crate::trainer::{train_epoch, EpochRecord, LabelSplit, TrainState};

use super::sbm::{gen_sbm, SbmGraph, SbmSpec};
use super::{linear_fit, row, ExperimentResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseAttenuation {
    /// 1-hop shell entries before pruning.
    pub entries: usize,
    /// Share of those entries that are planted noisy edges.
    pub base_rate: f64,
    pub pruned: usize,
    /// Share of pruned 1-hop entries that are planted noisy edges.
    pub pruned_noisy_rate: f64,
}

impl NoiseAttenuation {
    pub fn enrichment(&self) -> f64 {
        self.pruned_noisy_rate / self.base_rate
    }
}

/// Run one distance pass on fresh shells and compare how often pruned 1-hop
/// entries are planted noise against the pre-prune rate. The noisy-edge set
/// is read here only, after the pass.
pub fn noise_attenuation(sbm: &SbmGraph, cfg: &ScheduleConfig) -> Result<NoiseAttenuation> {
    let g = &sbm.graph;
    let shells = build_hop_shells(g, cfg.hops, cfg.shell_cap, cfg.seed)?;
    let outcome = prune_shells(g, &shells, cfg)?;
    let noisy = sbm.noisy_set();
    let is_noisy = |v: usize, u: usize| noisy.contains(&(v.min(u), v.max(u)));
    let mut entries = 0usize;
    let mut noisy_entries = 0usize;
    for v in 0..g.node_count() {
        for e in shells.entries(v, 1) {
            entries += 1;
            noisy_entries += is_noisy(v, e.node) as usize;
        }
    }
    let pruned: Vec<_> = outcome.delta.pruned.iter().filter(|p| p.1 == 1).collect();
    let pruned_noisy = pruned.iter().filter(|p| is_noisy(p.0, p.2)).count();
    Ok(NoiseAttenuation {
        entries,
        base_rate: noisy_entries as f64 / entries.max(1) as f64,
        pruned: pruned.len(),
        pruned_noisy_rate: pruned_noisy as f64 / pruned.len().max(1) as f64,
    })
}

/// Timing of one graph size in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizePoint {
    pub nodes: usize,
    pub edges: usize,
    /// Fastest full training epoch (forward, backward, distance pass,
    /// reconstruction) over the repeats.
    pub epoch_seconds: f64,
    /// Fastest forward pass over unpruned and pruned shells.
    pub forward_full_seconds: f64,
    pub forward_pruned_seconds: f64,
    pub original_degree: f64,
    pub effective_degree: f64,
}

/// Two-block SBM with `nodes` nodes and expected mean degree `avg_degree`,
/// a tenth of it across blocks, no planted noise.
pub fn sweep_spec(nodes: usize, avg_degree: f64, seed: u64) -> SbmSpec {
    let half = (nodes / 2) as f64;
    let p_in = avg_degree / (1.1 * half);
    SbmSpec {
        blocks: 2,
        nodes_per_block: nodes / 2,
        p_in,
        p_out: p_in / 10.0,
        noise_fraction: 0.0,
        feature_dim: 4,
        feature_noise_sigma: 0.5,
        seed,
    }
}

pub fn time_size_point(spec: &SbmSpec, cfg: &ScheduleConfig, repeats: usize) -> Result<SizePoint> {
    let g = gen_sbm(spec)?.graph;
    let split = LabelSplit::new(&g, cfg, cfg.seed)?;
    let params = ModelParams::init(cfg.hops, g.feature_dim(), cfg.hidden_dim, g.class_count(), cfg.omega_init, cfg.seed);
    let mut best_epoch = f64::INFINITY;
    let mut best_full = f64::INFINITY;
    let mut best_pruned = f64::INFINITY;
    let mut original_degree = 0.0;
    let mut effective_degree = 0.0;
    for _ in 0..repeats.max(1) {
        let mut graph = g.clone();
        let mut shells = build_hop_shells(&graph, cfg.hops, cfg.shell_cap, cfg.seed)?;
        original_degree = shells.built_degree();

        let t = Instant::now();
        forward(&graph, &shells, &params.diffusion, cfg)?;
        best_full = best_full.min(t.elapsed().as_secs_f64());

        let mut state = TrainState::new(params.clone(), cfg);
        let t = Instant::now();
        let out = train_epoch(&mut state, &mut graph, &mut shells, &split, cfg)?;
        best_epoch = best_epoch.min(t.elapsed().as_secs_f64());
        effective_degree = out.record.d_eff;

        let t = Instant::now();
        forward(&graph, &shells, &params.diffusion, cfg)?;
        best_pruned = best_pruned.min(t.elapsed().as_secs_f64());
    }
    Ok(SizePoint {
        nodes: g.node_count(),
        edges: g.edge_count(),
        epoch_seconds: best_epoch,
        forward_full_seconds: best_full,
        forward_pruned_seconds: best_pruned,
        original_degree,
        effective_degree,
    })
}

/// Per-epoch effective degree of a run plus a size sweep.
///
/// Derived: `d_eff_ratio_first` (first epoch's d_eff over the unpruned
/// degree), `forward_speedup` (mean unpruned / pruned forward time), and
/// slope and R² of epoch time against node and edge counts.
pub fn degree_and_timing_report(history: &[EpochRecord], original_degree: f64, sweep: &[SizePoint]) -> ExperimentResult {
    let mut rows: Vec<_> = history
        .iter()
        .map(|h| {
            row(
                h.epoch as u64,
                "epoch",
                &[("d_eff", h.d_eff), ("d_ratio", h.d_eff / original_degree)],
            )
        })
        .collect();
    for p in sweep {
        rows.push(row(
            p.nodes as u64,
            "size",
            &[
                ("nodes", p.nodes as f64),
                ("edges", p.edges as f64),
                ("epoch_seconds", p.epoch_seconds),
                ("forward_full_seconds", p.forward_full_seconds),
                ("forward_pruned_seconds", p.forward_pruned_seconds),
                ("d_ratio", p.effective_degree / p.original_degree),
            ],
        ));
    }
    let config = serde_json::json!({ "original_degree": original_degree, "sizes": sweep.len() });
    let mut result = ExperimentResult::new("degree_and_timing", config, rows);
    if let Some(first) = history.first() {
        result.derived.insert("d_eff_ratio_first".into(), first.d_eff / original_degree);
    }
    if sweep.len() >= 2 {
        let times: Vec<f64> = sweep.iter().map(|p| p.epoch_seconds).collect();
        let nodes: Vec<f64> = sweep.iter().map(|p| p.nodes as f64).collect();
        let edges: Vec<f64> = sweep.iter().map(|p| p.edges as f64).collect();
        let (_, slope_n, r2_n) = linear_fit(&nodes, &times);
        let (_, slope_e, r2_e) = linear_fit(&edges, &times);
        result.derived.insert("seconds_per_node".into(), slope_n);
        result.derived.insert("r2_nodes".into(), r2_n);
        result.derived.insert("seconds_per_edge".into(), slope_e);
        result.derived.insert("r2_edges".into(), r2_e);
        let speedup = sweep
            .iter()
            .map(|p| p.forward_full_seconds / p.forward_pruned_seconds)
            .sum::<f64>()
            / sweep.len() as f64;
        result.derived.insert("forward_speedup".into(), speedup);
    }
    result
}
