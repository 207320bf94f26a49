//! Structural graph storage.
//!
//! The graph is undirected and simple. Adjacency lives in CSR form with every
//! edge stored in both rows; rows are sorted ascending so membership checks
//! and set intersections are merges over slices.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use ndarray::Array2;

use crate::error::{DrtrError, Result};
use crate::shells::HopShells;

/// Immutable-by-default graph topology plus node features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStore {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: Array2<f64>,
    labels: Vec<Option<usize>>,
}

/// One epoch's worth of topology mutation, committed all-or-nothing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopologyDelta {
    /// Undirected edges to insert.
    pub added: Vec<(usize, usize)>,
    /// Shell entries `(v, k, u)` to deactivate.
    pub pruned: Vec<(usize, usize, usize)>,
    /// Previously inactive shell entries `(v, k, u)` to re-enable after a resample.
    pub restored: Vec<(usize, usize, usize)>,
}

impl TopologyDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.pruned.is_empty() && self.restored.is_empty()
    }
}

impl GraphStore {
    /// Build a canonical graph from a raw edge list.
    ///
    /// The node count is taken from the feature matrix. Self-loops and
    /// duplicate edges (in either direction) are dropped.
    pub fn build(
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: &BTreeMap<usize, usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        let mut label_vec = vec![None; n];
        for (&node, &class) in labels {
            if node >= n {
                return Err(DrtrError::MalformedInput(format!(
                    "label for node {node} but only {n} feature rows"
                )));
            }
            label_vec[node] = Some(class);
        }
        Self::from_parts(n, edges, features, label_vec)
    }

    pub(crate) fn from_parts(
        n: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Vec<Option<usize>>,
    ) -> Result<Self> {
        if features.nrows() != n {
            return Err(DrtrError::MalformedInput(format!(
                "feature matrix has {} rows, expected {n}",
                features.nrows()
            )));
        }
        if labels.len() != n {
            return Err(DrtrError::MalformedInput(format!(
                "label vector has {} entries, expected {n}",
                labels.len()
            )));
        }
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut self_loops = 0usize;
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(DrtrError::MalformedInput(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                self_loops += 1;
                continue;
            }
            rows[a].push(b);
            rows[b].push(a);
        }
        let mut duplicates = 0usize;
        for row in &mut rows {
            let before = row.len();
            row.sort_unstable();
            row.dedup();
            duplicates += before - row.len();
        }
        if self_loops > 0 || duplicates > 0 {
            debug!("canonicalized edge list: dropped {self_loops} self-loops, {duplicates} duplicate half-edges");
        }
        Ok(Self::from_rows(&rows, features, labels))
    }

    fn from_rows(rows: &[Vec<usize>], features: Array2<f64>, labels: Vec<Option<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        offsets.push(0);
        for row in rows {
            targets.extend_from_slice(row);
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            features,
            labels,
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_row(&self, v: usize) -> &[f64] {
        let d = self.feature_dim();
        let flat = self
            .features
            .as_slice()
            .expect("feature matrix is kept in standard layout");
        &flat[v * d..(v + 1) * d]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// Node indices carrying a label, ascending.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&v| self.labels[v].is_some())
            .collect()
    }

    /// One more than the largest label present (0 if unlabeled).
    pub fn class_count(&self) -> usize {
        self.labels
            .iter()
            .flatten()
            .map(|&c| c + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, v: usize, u: usize) -> bool {
        self.neighbors(v).binary_search(&u).is_ok()
    }

    /// Undirected edges as `(lo, hi)` pairs in ascending order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for v in 0..self.node_count() {
            out.extend(self.neighbors(v).iter().filter(|&&u| u > v).map(|&u| (v, u)));
        }
        out
    }

    /// Jaccard overlap of the 1-hop neighborhoods of `v` and `u`.
    pub fn structural_similarity(&self, v: usize, u: usize) -> Result<f64> {
        if v == u {
            return Err(DrtrError::InvalidArgument(format!(
                "structural similarity of node {v} with itself"
            )));
        }
        let n = self.node_count();
        if v >= n || u >= n {
            return Err(DrtrError::InvalidArgument(format!(
                "node pair ({v}, {u}) out of range for {n} nodes"
            )));
        }
        let a = self.neighbors(v);
        let b = self.neighbors(u);
        let (mut i, mut j, mut inter) = (0, 0, 0usize);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let union = a.len() + b.len() - inter;
        if union == 0 {
            Ok(0.0)
        } else {
            Ok(inter as f64 / union as f64)
        }
    }

    /// Return a copy with the given undirected edges removed or inserted.
    ///
    /// Each pair is toggled: present edges are removed, absent ones added.
    pub fn with_flipped_edges(&self, pairs: &[(usize, usize)]) -> Result<Self> {
        let n = self.node_count();
        let mut set: BTreeSet<(usize, usize)> = self.edge_list().into_iter().collect();
        for &(a, b) in pairs {
            if a >= n || b >= n || a == b {
                return Err(DrtrError::InvalidArgument(format!(
                    "cannot flip pair ({a}, {b}) on {n} nodes"
                )));
            }
            let key = (a.min(b), a.max(b));
            if !set.remove(&key) {
                set.insert(key);
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        Self::from_parts(n, &edges, self.features.clone(), self.labels.clone())
    }

    /// Return a copy with the given undirected edges removed (missing ones ignored).
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> Self {
        let drop: BTreeSet<(usize, usize)> =
            removed.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        let rows: Vec<Vec<usize>> = (0..self.node_count())
            .map(|v| {
                self.neighbors(v)
                    .iter()
                    .copied()
                    .filter(|&u| !drop.contains(&(v.min(u), v.max(u))))
                    .collect()
            })
            .collect();
        Self::from_rows(&rows, self.features.clone(), self.labels.clone())
    }

    /// Commit an epoch's topology delta to the graph and its shells.
    ///
    /// Everything is validated first; on error neither the graph nor the
    /// shells are touched.
    pub fn apply_topology_delta(&mut self, delta: &TopologyDelta, shells: &mut HopShells) -> Result<()> {
        let n = self.node_count();
        let mut pending: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &(a, b) in &delta.added {
            if a >= n || b >= n || a == b {
                return Err(DrtrError::InvalidArgument(format!(
                    "cannot add edge ({a}, {b}) on {n} nodes"
                )));
            }
            let key = (a.min(b), a.max(b));
            if self.has_edge(a, b) || !pending.insert(key) {
                return Err(DrtrError::DuplicateEdge(key.0, key.1));
            }
        }
        for &(v, k, u) in &delta.pruned {
            if shells.entry_active(v, k, u) != Some(true) {
                return Err(DrtrError::MissingEntry { v, k, u });
            }
        }
        for &(v, k, u) in &delta.restored {
            if shells.entry_active(v, k, u) != Some(false) {
                return Err(DrtrError::MissingEntry { v, k, u });
            }
        }

        if !pending.is_empty() {
            let mut rows: Vec<Vec<usize>> = (0..n).map(|v| self.neighbors(v).to_vec()).collect();
            for &(a, b) in &pending {
                rows[a].push(b);
                rows[b].push(a);
            }
            for row in &mut rows {
                row.sort_unstable();
            }
            let features = std::mem::take(&mut self.features);
            let labels = std::mem::take(&mut self.labels);
            *self = Self::from_rows(&rows, features, labels);
        }
        for &(v, k, u) in &delta.pruned {
            shells.set_active(v, k, u, false);
        }
        for &(v, k, u) in &delta.restored {
            shells.set_active(v, k, u, true);
        }
        Ok(())
    }

    /// Canonical byte serialization of the topology (edge list as text).
    pub fn topology_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (a, b) in self.edge_list() {
            out.extend_from_slice(format!("{a}\t{b}\n").as_bytes());
        }
        out
    }

    /// Relabel nodes: node `v` of `self` becomes node `perm[v]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(DrtrError::Shape(format!(
                "permutation of length {} for {n} nodes",
                perm.len()
            )));
        }
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut labels = vec![None; n];
        for v in 0..n {
            features.row_mut(perm[v]).assign(&self.features.row(v));
            labels[perm[v]] = self.labels[v];
        }
        let edges: Vec<_> = self
            .edge_list()
            .into_iter()
            .map(|(a, b)| (perm[a], perm[b]))
            .collect();
        Self::from_parts(n, &edges, features, labels)
    }
}
