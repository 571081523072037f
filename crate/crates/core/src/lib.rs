//! Unbalanced optimal transport distances on finite metric spaces.
//!
//! This crate computes the classical Hellinger and Wasserstein distances,
//! the Hellinger-Kantorovich distance, and the one-step marginal
//! Hellinger-Wasserstein cost `WHe` between discrete measures, together
//! with the machinery needed to check numerically that chaining `WHe`
//! steps (the metric infimal convolution of the two distances) recovers
//! the Hellinger-Kantorovich distance.
//!
//! The main building blocks:
//!
//! * [`space`]: finite metric spaces with a Euclidean point-cloud backend
//!   and a weighted-graph (shortest-path) backend, both with geodesic
//!   interpolation.
//! * [`measure`]: finite nonnegative atomic measures and the measure
//!   primitives (Lebesgue decomposition, pushforward, scaling).
//! * [`cone`]: the geometric cone over a metric space: truncated cone
//!   distances, geodesics, minimal radius, discretized action.
//! * [`classical`]: exact p-Hellinger and p-Wasserstein distances; the
//!   Wasserstein side runs an exact transportation simplex.
//! * [`solver`]: the semi-coupling solver for 2-homogeneous unbalanced
//!   transport costs (Hellinger-Kantorovich and `WHe`), plus a brute-force
//!   grid oracle for tiny instances.
//! * [`infconv`]: N-path energies, min-plus dynamic programming over
//!   finite candidate sets, the Dirac-path energy minimizer, and the
//!   geodesic-discretization convergence experiment.
//! * [`hilbertian`]: parallel addition of positive-definite forms and the
//!   quadratic one-step minimizer, the norm counterpart of the metric
//!   construction.

pub mod classical;
pub mod cone;
pub mod error;
pub mod hilbertian;
pub mod infconv;
pub mod measure;
pub mod solver;
pub mod space;

mod transport;

pub use classical::{hellinger, wasserstein, TransportPlan};
pub use cone::{
    cone_distance, cone_distance_cosine_form, cone_geodesic, discrete_action, min_radius,
    ConeGeodesic, ConePoint,
};
pub use error::{Error, Result};
pub use hilbertian::{grid_metric_check, one_step_quadratic, parallel_sum, GridSpec, SpdMatrix};
pub use infconv::{
    dirac_fn_min, fn_energy, geodesic_energy_experiment, minplus_infconv, path_energy,
    stability_probe, CostMatrix, EnergyReport, EnergyStep, FnState, NPath, StabilityReport,
};
pub use measure::{lebesgue_decompose, pushforward, scale, DiscreteMeasure};
pub use solver::{
    brute_force_uot, hk_distance, solve_uot, whe_cost, BruteForceResult, PairCost, SemiCoupling,
    SolveOptions, UotSolution, WheSolution,
};
pub use space::{Backend, FiniteMetricSpace};

/// Radii below this threshold are canonicalized to the cone vertex, and
/// atom masses below it are dropped at measure construction.
pub const VERTEX_EPS: f64 = 1e-15;
