//! Graph learning engine with per-hop diffusion, distance-based shell
//! pruning and similarity-driven edge addition.
//!
//! A [`GraphStore`] holds an undirected CSR graph with node features and
//! labels. [`build_hop_shells`] collects each node's exact-distance-`k`
//! neighborhoods, [`diffusion::forward`] aggregates them with temperature
//! scaled attention, [`distance::prune_shells`] drops semantically distant
//! shell members and [`topology::score_and_add`] proposes new edges. The
//! [`trainer`] ties these together; [`harness`] holds synthetic data and
//! experiment drivers.

pub mod config;
pub mod diffusion;
pub mod distance;
pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod knn;
pub mod params;
pub mod report;
pub mod shells;
pub mod topology;
pub mod trainer;

pub use config::{KnnBackend, Mode, ScheduleConfig};
pub use error::{DrtrError, Result};
pub use graph::{GraphStore, TopologyDelta};
pub use params::{DiffusionParams, ModelParams, SimilarityWeights};
pub use report::RefinementReport;
pub use shells::{build_hop_shells, HopShells, ShellEntry};
