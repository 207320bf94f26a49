//! Composite objective and its pieces.

use ndarray::Array2;
use serde::Serialize;

use crate::config::ScheduleConfig;
use crate::diffusion::{forward, ForwardPass};
use crate::error::{DrtrError, Result};
use crate::graph::GraphStore;
use crate::params::ModelParams;
use crate::shells::HopShells;
use crate::topology::{tr_loss_with_probs, CandidatePair};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub classification: f64,
    pub dr: f64,
    pub tr: f64,
    pub regularization: f64,
    pub total: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// `eta0 / sqrt(t) * exp(-mu * t)` for step `t >= 1`.
pub fn learning_rate(t: usize, cfg: &ScheduleConfig) -> f64 {
    let t = t.max(1) as f64;
    cfg.lr0 / t.sqrt() * (-cfg.lr_mu * t).exp()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn label_of(labels: &[Option<usize>], v: usize, classes: usize) -> Result<usize> {
    match labels.get(v).copied().flatten() {
        Some(c) if c < classes => Ok(c),
        Some(c) => Err(DrtrError::InvalidArgument(format!(
            "node {v} has class {c} but logits have {classes} columns"
        ))),
        None => Err(DrtrError::InvalidArgument(format!("node {v} is unlabeled"))),
    }
}

/// Mean softmax cross-entropy over `nodes`.
pub fn classification_loss(logits: &Array2<f64>, labels: &[Option<usize>], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(DrtrError::InvalidArgument("empty labeled set".into()));
    }
    let classes = logits.ncols();
    let mut total = 0.0;
    for &v in nodes {
        let y = label_of(labels, v, classes)?;
        let row = logits.row(v);
        let row = row.as_slice().expect("standard layout");
        total += log_sum_exp(row) - row[y];
    }
    Ok(total / nodes.len() as f64)
}

/// Gradient of [`classification_loss`] with respect to the logit rows of `nodes`.
pub(crate) fn classification_grad(
    logits: &Array2<f64>,
    labels: &[Option<usize>],
    nodes: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let classes = logits.ncols();
    let m = nodes.len() as f64;
    nodes
        .iter()
        .map(|&v| {
            let y = label_of(labels, v, classes)?;
            let row = logits.row(v);
            let row = row.as_slice().expect("standard layout");
            let mut p = crate::params::softmax(row);
            p[y] -= 1.0;
            Ok(p.into_iter().map(|x| x / m).collect())
        })
        .collect()
}

/// Fraction of `nodes` whose argmax logit matches the label; NaN when empty.
pub fn accuracy(logits: &Array2<f64>, labels: &[Option<usize>], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return f64::NAN;
    }
    let hits = nodes
        .iter()
        .filter(|&&v| {
            let row = logits.row(v);
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0;
            labels[v] == Some(pred)
        })
        .count();
    hits as f64 / nodes.len() as f64
}

/// `sum_k ||W_k||_F^2 + sum_k phi_k^2`.
pub fn regularization(params: &ModelParams) -> f64 {
    let d = &params.diffusion;
    d.hop_transforms.iter().map(|w| w.iter().map(|x| x * x).sum::<f64>()).sum::<f64>()
        + d.hop_logits.iter().map(|x| x * x).sum::<f64>()
}

/// Everything held fixed while the objective is differentiated: the
/// shells, the candidate set with its addition probabilities, and the DR
/// hinge value (distances depend on raw features only).
#[derive(Debug, Clone)]
pub struct ObjectiveContext<'a> {
    pub graph: &'a GraphStore,
    pub shells: &'a HopShells,
    pub train_nodes: &'a [usize],
    pub cfg: &'a ScheduleConfig,
    pub candidates: Vec<CandidatePair>,
    pub dr_value: f64,
}

impl ObjectiveContext<'_> {
    /// Candidates with `sim` recomputed for `params`, `add_prob` left as frozen.
    pub fn candidates_at(&self, params: &ModelParams) -> Vec<CandidatePair> {
        let [w1, w2, w3] = params.similarity.omega;
        self.candidates
            .iter()
            .map(|c| CandidatePair {
                sim: w1 * c.alignment + w2 * c.jaccard - w3 * c.euclid_sq,
                ..*c
            })
            .collect()
    }

    pub fn evaluate(&self, params: &ModelParams) -> Result<(LossBreakdown, ForwardPass)> {
        let fwd = forward(self.graph, self.shells, &params.diffusion, self.cfg)?;
        let classification = classification_loss(&fwd.logits, self.graph.labels(), self.train_nodes)?;
        let cands = self.candidates_at(params);
        let probs: Vec<f64> = cands.iter().map(|c| c.add_prob).collect();
        let tr = tr_loss_with_probs(&cands, &probs, self.cfg);
        let reg = regularization(params);
        let [l1, l2, l3] = self.cfg.loss_weights;
        let total = classification + l1 * self.dr_value + l2 * tr + l3 * reg;
        if !total.is_finite() {
            return Err(DrtrError::Numeric("objective is not finite".into()));
        }
        Ok((
            LossBreakdown {
                classification,
                dr: self.dr_value,
                tr,
                regularization: reg,
                total,
                grad_norm: 0.0,
            },
            fwd,
        ))
    }
}
