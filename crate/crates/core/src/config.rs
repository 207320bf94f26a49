//! Fixed hyperparameters and engine modes.
//!
//! Defaults follow the published settings table where one exists; the rest
//! are engine choices (LeakyReLU slope, TR temperature, loss weights, the
//! learning-rate decay `lr_mu`, the shell cap).

use serde::{Deserialize, Serialize};

use crate::error::{DrtrError, Result};

/// Which refinement stages are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Uniform mean aggregation over the hop shells, no refinement.
    Baseline,
    /// Mean aggregation plus distance-based pruning.
    Gdra,
    /// Heat-attention diffusion only.
    Gkhda,
    /// Heat attention, pruning and topology reconstruction.
    Gkhddra,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Gdra, Mode::Gkhda, Mode::Gkhddra];

    pub fn uses_attention(self) -> bool {
        matches!(self, Mode::Gkhda | Mode::Gkhddra)
    }

    pub fn uses_pruning(self) -> bool {
        matches!(self, Mode::Gdra | Mode::Gkhddra)
    }

    pub fn uses_reconstruction(self) -> bool {
        matches!(self, Mode::Gkhddra)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Gdra => "gdra",
            Mode::Gkhda => "gkhda",
            Mode::Gkhddra => "gkhddra",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = DrtrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "gdra" => Ok(Mode::Gdra),
            "gkhda" => Ok(Mode::Gkhda),
            "gkhddra" => Ok(Mode::Gkhddra),
            other => Err(DrtrError::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

/// Nearest-neighbor search used to propose reconstruction candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnBackend {
    Exact,
    Forest,
    /// Exact below `knn_exact_limit` nodes, forest above.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub tau0: f64,
    pub eta_decay: f64,
    pub leaky_slope: f64,
    pub layer_norm_eps: f64,
    #[serde(rename = "K")]
    pub hops: usize,
    pub hidden_dim: usize,
    /// Per-shell sample cap applied when shells are built.
    pub shell_cap: usize,
    /// Recorded only; attention is single-head.
    pub attention_head_dim: usize,

    pub lambda0: f64,
    pub rho: f64,
    pub lambda_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub percentile_p: f64,

    pub omega_init: [f64; 3],
    pub tr_beta: f64,
    pub tr_tau: f64,
    pub tr_theta: f64,
    pub knn_k: usize,
    #[serde(rename = "cap_R")]
    pub cap_r: usize,
    pub knn_backend: KnnBackend,
    pub knn_exact_limit: usize,
    /// Add edges by Bernoulli draw instead of the deterministic threshold rule.
    pub tr_sampling: bool,

    /// Weights of the DR, TR and regularization terms.
    pub loss_weights: [f64; 3],
    pub lr0: f64,
    pub lr_mu: f64,
    pub clip: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Chunk size for distance computation; optimization is full-batch.
    pub batch_size: usize,

    /// Fraction of labeled nodes used for training and validation; the rest are test nodes.
    pub labeled_fraction: f64,
    /// Fraction of the training labels held out for early stopping.
    pub val_fraction: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            eta_decay: 0.1,
            leaky_slope: 0.2,
            layer_norm_eps: 1e-5,
            hops: 3,
            hidden_dim: 64,
            shell_cap: 32,
            attention_head_dim: 8,
            lambda0: 0.1,
            rho: 0.05,
            lambda_min: 0.01,
            beta1: 1.0,
            beta2: 1.0,
            percentile_p: 0.75,
            omega_init: [1.0, 1.0, 1.0],
            tr_beta: 0.5,
            tr_tau: 1.0,
            tr_theta: 0.6,
            knn_k: 50,
            cap_r: 50,
            knn_backend: KnnBackend::Auto,
            knn_exact_limit: 2048,
            tr_sampling: false,
            loss_weights: [0.4, 0.4, 0.2],
            lr0: 0.005,
            lr_mu: 0.001,
            clip: 1.0,
            weight_decay: 0.0005,
            epochs: 1000,
            patience: 100,
            batch_size: 1024,
            labeled_fraction: 0.25,
            val_fraction: 0.2,
            seed: 0,
            mode: Mode::Gkhddra,
        }
    }
}

impl ScheduleConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| DrtrError::MalformedInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(DrtrError::InvalidArgument(msg.to_string()));
        if !(self.tau0 > 0.0) {
            return bad("tau0 must be positive");
        }
        if !(self.eta_decay >= 0.0) {
            return bad("eta_decay must be non-negative");
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive");
        }
        if !(self.percentile_p > 0.0 && self.percentile_p < 1.0) {
            return bad("percentile_p must lie in (0, 1)");
        }
        if !(self.tr_theta > 0.0 && self.tr_theta < 1.0) {
            return bad("tr_theta must lie in (0, 1)");
        }
        if !(self.tr_tau > 0.0) {
            return bad("tr_tau must be positive");
        }
        if self.loss_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("loss weights must be non-negative");
        }
        let sum: f64 = self.loss_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad("loss weights must sum to 1");
        }
        if self.omega_init.iter().any(|w| !(*w >= 0.0)) {
            return bad("omega_init must be non-negative");
        }
        if self.hops == 0 || self.hidden_dim == 0 || self.shell_cap == 0 {
            return bad("K, hidden_dim and shell_cap must be at least 1");
        }
        if self.knn_k == 0 {
            return bad("knn_k must be at least 1");
        }
        if !(self.lr0 >= 0.0) || !(self.lr_mu >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("lr0, lr_mu and weight_decay must be non-negative");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return bad("labeled_fraction must lie in (0, 1]");
        }
        if !(self.val_fraction >= 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}
