//! Automated model order selection (AMOS) for spectral graph clustering.
//!
//! The crate runs spectral clustering at increasing cluster counts and stops
//! at the first count whose clusters pass a sequence of statistical
//! reliability tests under the random interconnection model (RIM):
//!
//! 1. a V-test on the row sums of every inter-cluster block,
//! 2. a likelihood-ratio test of a single shared interconnection probability,
//! 3. a phase-transition test comparing the estimated interconnectivity with
//!    a lower bound computed from the cluster Laplacians.
//!
//! Supporting modules cover graph ingestion, Laplacian eigensolvers,
//! K-means, a synthetic RIM generator and clustering quality metrics.

pub mod amos;
pub mod generator;
pub mod graph;
pub mod kmeans;
pub mod metrics;
pub mod spectral;
pub mod stats;
pub mod sweep;

pub use amos::{run_amos, AmosConfig, AmosError, AmosReport, IterationRecord, Stage, Termination};
pub use generator::{empirical_t, generate_rim, InternalGraph, RimGraph, RimSpec};
pub use graph::{load_graph, Format, Graph, GraphError, Indexing, NodeSet};
pub use kmeans::{kmeans, KMeansResult, Partition};
pub use metrics::{conductance, f_measure, nmi, normalized_cut, rand_index};
pub use spectral::{embedding, sin_theta_distance, smallest_eigenpairs, EigenSolver, Eigenpairs, SpectralEmbedding};
pub use stats::{v_test_pvalue, PairStats};
pub use sweep::{run_sweep, SweepConfig, SweepRow};
