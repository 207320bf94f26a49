//! Exact-distance hop shells.
//!
//! `shells[v][k]` holds the nodes at shortest-path distance exactly `k` from
//! `v`, sorted ascending. Entries are never deleted once built; pruning only
//! clears their `active` flag so every decision can be audited afterwards.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{DrtrError, Result};
use crate::graph::GraphStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShellEntry {
    pub node: usize,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopShells {
    hops: usize,
    shells: Vec<Vec<ShellEntry>>,
    provenance: Vec<(usize, usize, usize)>,
}

/// Deterministic per-(seed, node, hop) stream seed.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// BFS every node to depth `hops`, keeping a seeded uniform sample of at most
/// `cap` nodes per shell.
pub fn build_hop_shells(g: &GraphStore, hops: usize, cap: usize, seed: u64) -> Result<HopShells> {
    if hops == 0 {
        return Err(DrtrError::InvalidArgument("hop count must be at least 1".into()));
    }
    if cap == 0 {
        return Err(DrtrError::InvalidArgument("shell cap must be at least 1".into()));
    }
    let n = g.node_count();
    let per_node: Vec<Vec<Vec<ShellEntry>>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![u32::MAX; n], 0u32),
            |(seen, stamp), v| {
                *stamp = stamp.wrapping_add(1);
                if *stamp == u32::MAX {
                    seen.fill(u32::MAX - 1);
                    *stamp = 0;
                }
                node_shells(g, v, hops, cap, seed, seen, *stamp)
            },
        )
        .collect();
    let shells = per_node.into_iter().flatten().collect();
    Ok(HopShells {
        hops,
        shells,
        provenance: Vec::new(),
    })
}

fn node_shells(
    g: &GraphStore,
    v: usize,
    hops: usize,
    cap: usize,
    seed: u64,
    seen: &mut [u32],
    stamp: u32,
) -> Vec<Vec<ShellEntry>> {
    let mut out = Vec::with_capacity(hops);
    seen[v] = stamp;
    let mut frontier = vec![v];
    for k in 1..=hops {
        let mut next = Vec::new();
        for &w in &frontier {
            for &u in g.neighbors(w) {
                if seen[u] != stamp {
                    seen[u] = stamp;
                    next.push(u);
                }
            }
        }
        next.sort_unstable();
        let kept = if next.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, v as u64, k as u64));
            let mut picked: Vec<usize> = index::sample(&mut rng, next.len(), cap)
                .into_iter()
                .map(|i| next[i])
                .collect();
            picked.sort_unstable();
            picked
        } else {
            next.clone()
        };
        out.push(
            kept.into_iter()
                .map(|node| ShellEntry { node, active: true })
                .collect(),
        );
        frontier = next;
    }
    out
}

impl HopShells {
    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn node_count(&self) -> usize {
        self.shells.len() / self.hops
    }

    fn slot(&self, v: usize, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.hops);
        v * self.hops + (k - 1)
    }

    /// All built entries of shell `(v, k)`, active or not.
    pub fn entries(&self, v: usize, k: usize) -> &[ShellEntry] {
        &self.shells[self.slot(v, k)]
    }

    /// Active neighbor indices of shell `(v, k)`, ascending.
    pub fn active(&self, v: usize, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.entries(v, k)
            .iter()
            .filter(|e| e.active)
            .map(|e| e.node)
    }

    pub fn active_count(&self, v: usize, k: usize) -> usize {
        self.entries(v, k).iter().filter(|e| e.active).count()
    }

    /// `Some(active)` if `u` is a built entry of shell `(v, k)`.
    pub fn entry_active(&self, v: usize, k: usize, u: usize) -> Option<bool> {
        if v >= self.node_count() || k == 0 || k > self.hops {
            return None;
        }
        let entries = self.entries(v, k);
        entries
            .binary_search_by_key(&u, |e| e.node)
            .ok()
            .map(|i| entries[i].active)
    }

    pub(crate) fn set_active(&mut self, v: usize, k: usize, u: usize, active: bool) {
        let slot = self.slot(v, k);
        let entries = &mut self.shells[slot];
        if let Ok(i) = entries.binary_search_by_key(&u, |e| e.node) {
            if entries[i].active && !active {
                self.provenance.push((v, k, u));
            }
            entries[i].active = active;
        }
    }

    /// Every `(v, k, u)` ever deactivated, in commit order.
    pub fn provenance(&self) -> &[(usize, usize, usize)] {
        &self.provenance
    }

    pub fn total_entries(&self) -> usize {
        self.shells.iter().map(Vec::len).sum()
    }

    pub fn total_active(&self) -> usize {
        self.shells
            .iter()
            .map(|s| s.iter().filter(|e| e.active).count())
            .sum()
    }

    /// Mean number of active entries per node, summed over hops.
    pub fn effective_degree(&self) -> f64 {
        let n = self.node_count();
        if n == 0 {
            0.0
        } else {
            self.total_active() as f64 / n as f64
        }
    }

    /// Mean number of built entries per node, summed over hops.
    pub fn built_degree(&self) -> f64 {
        let n = self.node_count();
        if n == 0 {
            0.0
        } else {
            self.total_entries() as f64 / n as f64
        }
    }

    /// Copy inactive flags from `previous` for entries both share, and carry
    /// its provenance log forward.
    pub fn inherit_flags(&mut self, previous: &HopShells) {
        if previous.hops != self.hops || previous.node_count() != self.node_count() {
            return;
        }
        for slot in 0..self.shells.len() {
            let old = &previous.shells[slot];
            for e in self.shells[slot].iter_mut() {
                if let Ok(i) = old.binary_search_by_key(&e.node, |o| o.node) {
                    e.active = old[i].active;
                }
            }
        }
        self.provenance = previous.provenance.clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::collections::BTreeMap;

    fn graph(n: usize, edges: &[(usize, usize)]) -> GraphStore {
        GraphStore::build(edges, Array2::zeros((n, 1)), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn path_shells() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let s = build_hop_shells(&g, 2, 32, 0).unwrap();
        assert_eq!(s.active(0, 1).collect::<Vec<_>>(), vec![1]);
        assert_eq!(s.active(0, 2).collect::<Vec<_>>(), vec![2]);
        assert_eq!(s.active(1, 1).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(s.active(1, 2).collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn star_cap_binds() {
        let edges: Vec<_> = (1..=100).map(|i| (0, i)).collect();
        let g = graph(101, &edges);
        let s = build_hop_shells(&g, 1, 32, 9).unwrap();
        assert_eq!(s.active_count(0, 1), 32);
        let again = build_hop_shells(&g, 1, 32, 9).unwrap();
        assert_eq!(s, again);
        let other = build_hop_shells(&g, 1, 32, 10).unwrap();
        assert_ne!(s, other);
    }

    #[test]
    fn isolated_node_has_empty_shells() {
        let g = graph(3, &[(0, 1)]);
        let s = build_hop_shells(&g, 3, 32, 0).unwrap();
        for k in 1..=3 {
            assert_eq!(s.active_count(2, k), 0);
        }
    }

    #[test]
    fn rejects_zero_hops_or_cap() {
        let g = graph(2, &[(0, 1)]);
        assert!(build_hop_shells(&g, 0, 4, 0).is_err());
        assert!(build_hop_shells(&g, 2, 0, 0).is_err());
    }

    #[test]
    fn inherit_keeps_inactive_flags() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let mut s = build_hop_shells(&g, 2, 32, 0).unwrap();
        s.set_active(1, 1, 2, false);
        let g2 = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let mut fresh = build_hop_shells(&g2, 2, 32, 0).unwrap();
        fresh.inherit_flags(&s);
        assert_eq!(fresh.entry_active(1, 1, 2), Some(false));
        assert_eq!(fresh.entry_active(0, 1, 3), Some(true));
        assert_eq!(fresh.provenance(), &[(1, 1, 2)]);
    }
}
