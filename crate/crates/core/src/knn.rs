//! k-nearest-neighbor search over node features.
//!
//! Two backends: an exact linear scan and a random-projection forest whose
//! leaf candidates are reranked exactly and then refined by one
//! neighbors-of-neighbors pass.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distance::squared_euclidean;

fn row(flat: &[f64], dim: usize, i: usize) -> &[f64] {
    &flat[i * dim..(i + 1) * dim]
}

/// Keep the `k` smallest `(dist, index)` pairs, sorted ascending.
fn top_k(mut cands: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cands.len() > k {
        cands.select_nth_unstable_by(k, cmp);
        cands.truncate(k);
    }
    cands.sort_by(cmp);
    cands.into_iter().map(|(_, i)| i).collect()
}

/// Exact `k` nearest neighbors of every row (self excluded), nearest first.
pub fn exact_knn(flat: &[f64], dim: usize, k: usize) -> Vec<Vec<usize>> {
    let n = if dim == 0 { 0 } else { flat.len() / dim };
    (0..n)
        .into_par_iter()
        .map(|v| {
            let xv = row(flat, dim, v);
            let cands = (0..n)
                .filter(|&u| u != v)
                .map(|u| (squared_euclidean(xv, row(flat, dim, u)), u))
                .collect();
            top_k(cands, k)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ForestParams {
    pub trees: usize,
    pub leaf_size: usize,
    pub seed: u64,
}

impl ForestParams {
    pub fn for_k(k: usize, seed: u64) -> Self {
        Self {
            trees: 8,
            leaf_size: (2 * k).max(32),
            seed,
        }
    }
}

fn build_leaves(
    flat: &[f64],
    dim: usize,
    points: Vec<usize>,
    leaf_size: usize,
    rng: &mut ChaCha8Rng,
    leaves: &mut Vec<Vec<usize>>,
) {
    if points.len() <= leaf_size {
        leaves.push(points);
        return;
    }
    let pick = index::sample(rng, points.len(), 2);
    let (a, b) = (row(flat, dim, points[pick.index(0)]), row(flat, dim, points[pick.index(1)]));
    let normal: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let offset: f64 = normal
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * 0.5 * (x + y))
        .sum();
    let (mut left, mut right): (Vec<usize>, Vec<usize>) = points.iter().copied().partition(|&p| {
        let x = row(flat, dim, p);
        normal.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() < offset
    });
    if left.is_empty() || right.is_empty() {
        // Degenerate hyperplane (duplicate points): split at random.
        let mut all = points;
        for i in (1..all.len()).rev() {
            let j = rng.random_range(0..=i);
            all.swap(i, j);
        }
        right = all.split_off(all.len() / 2);
        left = all;
    }
    build_leaves(flat, dim, left, leaf_size, rng, leaves);
    build_leaves(flat, dim, right, leaf_size, rng, leaves);
}

/// Approximate `k` nearest neighbors with a random-projection forest.
pub fn forest_knn(flat: &[f64], dim: usize, k: usize, params: ForestParams) -> Vec<Vec<usize>> {
    let n = if dim == 0 { 0 } else { flat.len() / dim };
    if n <= params.leaf_size + 1 {
        return exact_knn(flat, dim, k);
    }
    let trees: Vec<(Vec<Vec<usize>>, Vec<usize>)> = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::shells::mix_seed(params.seed, t as u64, 0x7e3));
            let mut leaves = Vec::new();
            build_leaves(flat, dim, (0..n).collect(), params.leaf_size, &mut rng, &mut leaves);
            let mut leaf_of = vec![0usize; n];
            for (l, members) in leaves.iter().enumerate() {
                for &p in members {
                    leaf_of[p] = l;
                }
            }
            (leaves, leaf_of)
        })
        .collect();

    let rerank = |v: usize, pool: &mut Vec<usize>| -> Vec<usize> {
        pool.sort_unstable();
        pool.dedup();
        let xv = row(flat, dim, v);
        let cands = pool
            .iter()
            .filter(|&&u| u != v)
            .map(|&u| (squared_euclidean(xv, row(flat, dim, u)), u))
            .collect();
        top_k(cands, k)
    };

    let initial: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut pool: Vec<usize> = trees
                .iter()
                .flat_map(|(leaves, leaf_of)| leaves[leaf_of[v]].iter().copied())
                .collect();
            rerank(v, &mut pool)
        })
        .collect();

    (0..n)
        .into_par_iter()
        .map(|v| {
            let mut pool = initial[v].clone();
            for &u in &initial[v] {
                pool.extend_from_slice(&initial[u]);
            }
            rerank(v, &mut pool)
        })
        .collect()
}

/// Fraction of exact neighbors recovered by `approx`, pooled over all rows.
pub fn recall(approx: &[Vec<usize>], exact: &[Vec<usize>]) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (a, e) in approx.iter().zip(exact) {
        total += e.len();
        hit += e.iter().filter(|u| a.contains(u)).count();
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn exact_on_a_line() {
        let pts = [0.0, 1.0, 3.0, 6.0];
        let nn = exact_knn(&pts, 1, 2);
        assert_eq!(nn[0], vec![1, 2]);
        assert_eq!(nn[2], vec![1, 0]);
        assert_eq!(nn[3], vec![2, 1]);
    }

    #[test]
    fn exact_clamps_k() {
        let nn = exact_knn(&[0.0, 1.0, 2.0], 1, 10);
        assert!(nn.iter().all(|r| r.len() == 2));
    }

    #[test]
    fn forest_recall_is_high() {
        let pts = random_points(1500, 8, 3);
        let exact = exact_knn(&pts, 8, 10);
        let approx = forest_knn(&pts, 8, 10, ForestParams::for_k(10, 1));
        assert!(recall(&approx, &exact) >= 0.9);
        assert!(approx.iter().enumerate().all(|(v, r)| !r.contains(&v) && r.len() == 10));
    }

    #[test]
    fn forest_handles_duplicates() {
        let pts = vec![0.5; 200 * 2];
        let approx = forest_knn(&pts, 2, 5, ForestParams { trees: 2, leaf_size: 8, seed: 0 });
        assert!(approx.iter().all(|r| r.len() == 5));
    }
}
