//! Training loop.
//!
//! One epoch: forward over the current shells, composite loss and analytic
//! gradients, global-norm clipping, a decayed gradient step, then the
//! distance pass and topology reconstruction, committed together.

mod backward;
mod loss;

use std::collections::HashMap;
use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use backward::backward;
pub use loss::{
    accuracy, classification_loss, learning_rate, regularization, LossBreakdown, ObjectiveContext,
};

use crate::config::{Mode, ScheduleConfig};
use crate::distance::{dr_loss, prune_shells};
use crate::error::{DrtrError, Result};
use crate::graph::{GraphStore, TopologyDelta};
use crate::params::ModelParams;
use crate::report::RefinementReport;
use crate::shells::{build_hop_shells, mix_seed, HopShells};
use crate::topology::{knn_candidates, score_and_add, score_candidates};

/// Train / validation / test node partition over the labeled nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl LabelSplit {
    /// Seeded shuffle of the labeled nodes: the first `labeled_fraction` of
    /// them are split into train and validation, the rest are test nodes.
    pub fn new(g: &GraphStore, cfg: &ScheduleConfig, seed: u64) -> Result<Self> {
        let mut labeled = g.labeled_nodes();
        if labeled.is_empty() {
            return Err(DrtrError::InvalidArgument("graph has no labeled nodes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5917, 0));
        labeled.shuffle(&mut rng);
        let used = ((cfg.labeled_fraction * labeled.len() as f64).round() as usize).clamp(1, labeled.len());
        let val_count = ((cfg.val_fraction * used as f64).round() as usize).min(used - 1);
        let mut val = labeled[..val_count].to_vec();
        let mut train = labeled[val_count..used].to_vec();
        let mut test = labeled[used..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, val, test })
    }

    /// Nodes scored for early stopping: validation if any, else training.
    pub fn selection(&self) -> &[usize] {
        if self.val.is_empty() {
            &self.train
        } else {
            &self.val
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub params: ModelParams,
    pub best_val_metric: f64,
    /// Validation cross-entropy at the best epoch; breaks accuracy ties.
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub best_params: ModelParams,
    pub best_test_metric: f64,
    pub patience_left: usize,
    /// How often each `(v, k, u)` shell entry was visited by the distance pass.
    pub visit_counts: HashMap<(usize, usize, usize), u32>,
    pub rng_seed: u64,
    candidates: Option<Vec<(usize, usize)>>,
}

impl TrainState {
    pub fn new(params: ModelParams, cfg: &ScheduleConfig) -> Self {
        Self {
            epoch: 0,
            best_params: params.clone(),
            params,
            best_val_metric: f64::NEG_INFINITY,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            best_test_metric: f64::NAN,
            patience_left: cfg.patience,
            visit_counts: HashMap::new(),
            rng_seed: cfg.seed,
            candidates: None,
        }
    }

    pub fn visits(&self, v: usize, k: usize, u: usize) -> u32 {
        self.visit_counts.get(&(v, k, u)).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_acc: f64,
    pub test_acc: f64,
    pub d_eff: f64,
    pub edges_added: usize,
    pub edges_pruned: usize,
}

#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub record: EpochRecord,
    pub report: RefinementReport,
}

fn global_norm(grads: &ModelParams) -> f64 {
    grads.norm()
}

/// Run one epoch in place.
///
/// The graph, shells and parameters are only written once every stage has
/// succeeded.
pub fn train_epoch(
    state: &mut TrainState,
    g: &mut GraphStore,
    shells: &mut HopShells,
    split: &LabelSplit,
    cfg: &ScheduleConfig,
) -> Result<EpochOutcome> {
    let mode = cfg.mode;
    let epoch = state.epoch + 1;

    if mode.uses_reconstruction() && state.candidates.is_none() {
        state.candidates = Some(knn_candidates(g, cfg));
    }
    let skeleton: &[(usize, usize)] = state.candidates.as_deref().unwrap_or(&[]);
    let candidates = if mode.uses_reconstruction() {
        score_candidates(g, skeleton, &state.params.similarity, cfg)?
    } else {
        Vec::new()
    };
    let dr_value = if mode.uses_pruning() { dr_loss(g, shells, cfg)? } else { 0.0 };
    let ctx = ObjectiveContext {
        graph: g,
        shells,
        train_nodes: &split.train,
        cfg,
        candidates,
        dr_value,
    };
    let (mut loss, fwd) = ctx.evaluate(&state.params)?;
    let val_acc = accuracy(&fwd.logits, g.labels(), split.selection());
    let val_loss = classification_loss(&fwd.logits, g.labels(), split.selection())?;
    let test_acc = accuracy(&fwd.logits, g.labels(), &split.test);

    let mut grads = backward(&ctx, &state.params, &fwd)?;
    loss.grad_norm = global_norm(&grads);
    if loss.grad_norm > cfg.clip {
        grads.scale(cfg.clip / loss.grad_norm);
    }
    let lr = learning_rate(epoch, cfg);
    let mut next = state.params.clone();
    if lr > 0.0 {
        if cfg.weight_decay > 0.0 {
            let decay = next.clone();
            next.add_scaled(&decay, -lr * cfg.weight_decay);
        }
        next.add_scaled(&grads, -lr);
        next.similarity.project();
    }
    next.check_finite()?;

    let mut delta = TopologyDelta::default();
    let mut report = RefinementReport {
        epoch,
        original_degree: shells.built_degree(),
        ..Default::default()
    };
    let mut visited = Vec::new();
    if mode.uses_pruning() {
        let outcome = prune_shells(g, shells, cfg)?;
        for v in 0..g.node_count() {
            for k in 1..=shells.hops() {
                visited.extend(shells.active(v, k).map(|u| (v, k, u)));
            }
        }
        delta.pruned = outcome.delta.pruned;
        delta.restored = outcome.delta.restored;
        report = RefinementReport { epoch, ..outcome.report };
    }
    if mode.uses_reconstruction() {
        let recon = score_and_add(g, skeleton, &next.similarity, cfg, mix_seed(state.rng_seed, epoch as u64, 0xadd))?;
        delta.added = recon.added;
        report.added = recon.actions;
    }

    g.apply_topology_delta(&delta, shells)?;
    if !delta.added.is_empty() {
        let mut fresh = build_hop_shells(g, cfg.hops, cfg.shell_cap, cfg.seed)?;
        fresh.inherit_flags(shells);
        *shells = fresh;
        state.candidates = None;
    }
    for key in visited {
        *state.visit_counts.entry(key).or_insert(0) += 1;
    }
    // With pruning, d_eff is read right after the distance pass; entries of
    // shells rebuilt for new edges are first judged next epoch.
    if !mode.uses_pruning() {
        report.effective_degree = shells.effective_degree();
        report.original_degree = shells.built_degree();
    }

    // early-stopping bookkeeping refers to the parameters that produced `fwd`
    if val_acc > state.best_val_metric || (val_acc == state.best_val_metric && val_loss < state.best_val_loss) {
        state.best_val_metric = val_acc;
        state.best_val_loss = val_loss;
        state.best_epoch = epoch;
        state.best_params = state.params.clone();
        state.best_test_metric = test_acc;
        state.patience_left = cfg.patience;
    } else {
        state.patience_left = state.patience_left.saturating_sub(1);
    }
    state.params = next;
    state.epoch = epoch;

    let record = EpochRecord {
        epoch,
        loss,
        val_acc,
        test_acc,
        d_eff: report.effective_degree,
        edges_added: delta.added.len(),
        edges_pruned: delta.pruned.len(),
    };
    Ok(EpochOutcome { record, report })
}

/// One distance pass and one reconstruction pass with the configured
/// initial similarity weights, committed to `g` and `shells`.
pub fn refine_once(g: &mut GraphStore, shells: &mut HopShells, cfg: &ScheduleConfig) -> Result<RefinementReport> {
    let outcome = prune_shells(g, shells, cfg)?;
    let skeleton = knn_candidates(g, cfg);
    let weights = crate::params::SimilarityWeights::new(cfg.omega_init);
    let recon = score_and_add(g, &skeleton, &weights, cfg, mix_seed(cfg.seed, 0, 0xadd))?;
    let delta = TopologyDelta {
        added: recon.added,
        ..outcome.delta
    };
    g.apply_topology_delta(&delta, shells)?;
    if !delta.added.is_empty() {
        let mut fresh = build_hop_shells(g, cfg.hops, cfg.shell_cap, cfg.seed)?;
        fresh.inherit_flags(shells);
        *shells = fresh;
    }
    let mut report = outcome.report;
    report.added = recon.actions;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mode: Mode,
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
    /// Non-empty refinement reports, in epoch order.
    pub reports: Vec<RefinementReport>,
    pub graph: GraphStore,
    pub shells: HopShells,
    pub split: LabelSplit,
    /// Mean built shell entries per node on the input graph.
    pub initial_degree: f64,
    /// Embeddings of the best parameters on the final topology.
    pub embeddings: Array2<f64>,
    pub test_acc: f64,
    pub val_acc: f64,
    pub epochs_run: usize,
    pub elapsed: Duration,
}

/// Train from freshly initialized parameters until `epochs` or patience runs out.
pub fn fit(g: &GraphStore, cfg: &ScheduleConfig, mode: Mode) -> Result<FitResult> {
    let split = LabelSplit::new(g, cfg, cfg.seed)?;
    fit_with_split(g, cfg, mode, split)
}

pub fn fit_with_split(g: &GraphStore, cfg: &ScheduleConfig, mode: Mode, split: LabelSplit) -> Result<FitResult> {
    cfg.validate()?;
    let cfg = ScheduleConfig { mode, ..cfg.clone() };
    let classes = g.class_count();
    if classes == 0 {
        return Err(DrtrError::InvalidArgument("graph has no labels".into()));
    }
    let start = Instant::now();
    let params = ModelParams::init(
        cfg.hops,
        g.feature_dim(),
        cfg.hidden_dim,
        classes,
        cfg.omega_init,
        cfg.seed,
    );
    let mut graph = g.clone();
    let mut shells = build_hop_shells(&graph, cfg.hops, cfg.shell_cap, cfg.seed)?;
    let initial_degree = shells.built_degree();
    let mut state = TrainState::new(params, &cfg);
    let mut history = Vec::new();
    let mut reports = Vec::new();
    while state.epoch < cfg.epochs {
        let out = train_epoch(&mut state, &mut graph, &mut shells, &split, &cfg)?;
        history.push(out.record);
        if !out.report.is_empty() {
            reports.push(out.report);
        }
        if state.patience_left == 0 {
            break;
        }
    }
    let fwd = crate::diffusion::forward(&graph, &shells, &state.best_params.diffusion, &cfg)?;
    Ok(FitResult {
        mode,
        test_acc: state.best_test_metric,
        val_acc: state.best_val_metric,
        epochs_run: state.epoch,
        state,
        history,
        reports,
        graph,
        shells,
        split,
        initial_degree,
        embeddings: fwd.embeddings,
        elapsed: start.elapsed(),
    })
}

/// Write the per-epoch metric history as CSV.
pub fn write_metrics_csv<W: Write>(history: &[EpochRecord], mut out: W) -> Result<()> {
    writeln!(
        out,
        "epoch,loss_total,loss_cls,loss_dr,loss_tr,loss_reg,grad_norm,val_acc,test_acc,d_eff,edges_added,edges_pruned"
    )?;
    for r in history {
        let l = &r.loss;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            l.total,
            l.classification,
            l.dr,
            l.tr,
            l.regularization,
            l.grad_norm,
            r.val_acc,
            r.test_acc,
            r.d_eff,
            r.edges_added,
            r.edges_pruned
        )?;
    }
    Ok(())
}
