//! Per-epoch refinement records and their JSON-lines form.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneAction {
    pub v: usize,
    pub k: usize,
    pub u: usize,
    pub d: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AddAction {
    pub v: usize,
    pub u: usize,
    pub sim: f64,
    pub prob: f64,
}

/// Per-(v, k) percentile threshold used by a prune pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub v: usize,
    pub k: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinementReport {
    pub epoch: usize,
    /// Entries newly deactivated this epoch.
    pub pruned: Vec<PruneAction>,
    pub added: Vec<AddAction>,
    pub thresholds: Vec<Threshold>,
    /// Mean built shell entries per node before pruning.
    pub original_degree: f64,
    /// Mean active shell entries per node after this epoch's prune.
    pub effective_degree: f64,
    /// Shell entries visited by the distance pass this epoch.
    pub visits: usize,
}

impl RefinementReport {
    pub fn is_empty(&self) -> bool {
        self.pruned.is_empty() && self.added.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct PruneLine<'a> {
            epoch: usize,
            v: usize,
            k: usize,
            u: usize,
            d: f64,
            alpha: f64,
            action: &'a str,
        }
        #[derive(Serialize)]
        struct AddLine<'a> {
            epoch: usize,
            v: usize,
            u: usize,
            sim: f64,
            prob: f64,
            action: &'a str,
        }
        for p in &self.pruned {
            let line = PruneLine {
                epoch: self.epoch,
                v: p.v,
                k: p.k,
                u: p.u,
                d: p.d,
                alpha: p.alpha,
                action: "prune",
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        for a in &self.added {
            let line = AddLine {
                epoch: self.epoch,
                v: a.v,
                u: a.u,
                sim: a.sim,
                prob: a.prob,
                action: "add",
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
