//! Stochastic block model generator with planted noisy edges.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DrtrError, Result};
use crate::graph::GraphStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Extra inter-block edges, as a fraction of the clean edge count.
    pub noise_fraction: f64,
    pub feature_dim: usize,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl SbmSpec {
    /// Two blocks of 100 nodes, `p_in = 0.1`, `p_out = 0.01`, 30% noise.
    pub fn standard() -> Self {
        Self {
            blocks: 2,
            nodes_per_block: 100,
            p_in: 0.1,
            p_out: 0.01,
            noise_fraction: 0.3,
            feature_dim: 4,
            feature_noise_sigma: 0.5,
            seed: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.blocks * self.nodes_per_block
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DrtrError::InvalidArgument(m));
        if self.node_count() == 0 {
            return bad("SBM has no nodes".into());
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.noise_fraction >= 0.0 && self.noise_fraction.is_finite()) {
            return bad(format!("noise_fraction = {} must be >= 0", self.noise_fraction));
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return bad(format!("feature_noise_sigma = {} must be >= 0", self.feature_noise_sigma));
        }
        if self.feature_dim < self.blocks {
            return bad(format!(
                "feature_dim {} cannot hold {} block indicators",
                self.feature_dim, self.blocks
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SbmGraph {
    pub graph: GraphStore,
    /// Planted noise, `(a, b)` with `a < b`, sorted. Only for post-hoc metrics.
    pub noisy_edges: Vec<(usize, usize)>,
    pub clean_edge_count: usize,
}

impl SbmGraph {
    pub fn noisy_set(&self) -> BTreeSet<(usize, usize)> {
        self.noisy_edges.iter().copied().collect()
    }
}

/// Sample an SBM graph. Features are the block's indicator vector plus
/// isotropic Gaussian noise; labels are block ids.
pub fn gen_sbm(spec: &SbmSpec) -> Result<SbmGraph> {
    spec.validate()?;
    let n = spec.node_count();
    let block = |v: usize| v / spec.nodes_per_block;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = if block(a) == block(b) { spec.p_in } else { spec.p_out };
            if p > 0.0 && rng.random::<f64>() < p {
                edges.insert((a, b));
            }
        }
    }
    let clean_edge_count = edges.len();

    let want = (spec.noise_fraction * clean_edge_count as f64).round() as usize;
    let free_pairs = if spec.blocks >= 2 {
        let nb = spec.nodes_per_block;
        spec.blocks * (spec.blocks - 1) / 2 * nb * nb
    } else {
        n * (n - 1) / 2
    };
    let taken_inter = edges.iter().filter(|&&(a, b)| spec.blocks < 2 || block(a) != block(b)).count();
    if want > free_pairs - taken_inter {
        return Err(DrtrError::InvalidArgument(format!(
            "cannot plant {want} noisy edges: only {} free pairs",
            free_pairs - taken_inter
        )));
    }
    let mut noisy = BTreeSet::new();
    while noisy.len() < want {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b || (spec.blocks >= 2 && block(a) == block(b)) {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if !edges.contains(&key) {
            noisy.insert(key);
        }
    }
    edges.extend(noisy.iter().copied());

    let normal = Normal::new(0.0, spec.feature_noise_sigma).expect("sigma validated");
    let mut features = Array2::zeros((n, spec.feature_dim));
    for v in 0..n {
        for j in 0..spec.feature_dim {
            features[[v, j]] = normal.sample(&mut rng);
        }
        features[[v, block(v)]] += 1.0;
    }
    let labels = (0..n).map(|v| Some(block(v))).collect();
    let edge_vec: Vec<_> = edges.into_iter().collect();
    let graph = GraphStore::from_parts(n, &edge_vec, features, labels)?;
    Ok(SbmGraph {
        graph,
        noisy_edges: noisy.into_iter().collect(),
        clean_edge_count,
    })
}
