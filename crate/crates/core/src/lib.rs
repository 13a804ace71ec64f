//! Symmetric PCA and PSA learning rules derived from the traditional and
//! the squared-summand objective.
//!
//! The crate covers
//!
//! - problem data and diagonal operators ([`model`]),
//! - both objective functions and their gradients ([`objectives`]),
//! - Stiefel tangent spaces, retractions and manifold gradients ([`stiefel`]),
//! - the catalog of averaged learning rules ([`rules`]),
//! - closed-form fixed points and their equations ([`fixed_points`]),
//! - second-order classification of fixed points ([`critical`]),
//! - ODE integration with convergence diagnostics ([`dynamics`]),
//! - randomized oracles for the supporting matrix lemmas ([`lemmas`]).

pub mod critical;
pub mod dynamics;
pub mod error;
pub mod fixed_points;
pub mod lemmas;
mod matrix_serde;
pub mod model;
pub mod objectives;
pub mod random;
pub mod rules;
pub mod stiefel;

pub use critical::{classify, delta_j_closed, delta_j_numeric, nonmax_witness, CriticalClassification, Verdict};
pub use dynamics::{eigvec_alignment, integrate, subspace_error, IntegrationConfig, ProjectionMode};
pub use error::{Error, Result};
pub use fixed_points::{
    construct_fixed_point, fp_objective, fp_residual, hadamard_mixer, FixedPointCase, FixedPointDescriptor, Mixer,
};
pub use model::{
    build_covariance, build_covariance_with, cross_diag, dg, response_diag, CovarianceModel, CovarianceOptions,
    GainSpec, SignedPermutation, WeightMatrix,
};
pub use nalgebra::{DMatrix, DVector};
pub use objectives::{gradient, gradient_check, objective, ObjectiveKind};
pub use rules::{rule_rhs, term_profile, RuleId, TermProfile};
pub use stiefel::{
    complement, manifold_gradient, project_tangent, retract_approx, retract_exact, tangent, FrameWithComplement,
    Metric, TangentPerturbation,
};
