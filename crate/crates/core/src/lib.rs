//! Optimal averaging weights for distributed consensus on path networks.
//!
//! Nodes on a path repeatedly replace their value with a weighted average of
//! their neighbors'. The asymptotic convergence rate is governed by the
//! second-largest eigenvalue modulus (SLEM) of the weight matrix. This crate
//! computes spectra of such matrices, optimizes the edge weights, certifies
//! optimality through semidefinite duality, and simulates the iteration.
//!
//! On a path every edge weight equal to 1/2 is optimal and the best SLEM is
//! `cos(pi / n)`; the crate reproduces that three independent ways
//! (eigensolve, numerical optimization, dual certificate).

pub mod consensus_engine;
pub mod dual_certificate;
pub mod error;
pub mod path_model;
pub mod sdp_forms;
pub mod tridiag_spectra;
pub mod weight_optimizer;

pub use error::{Error, Result};
pub use path_model::{
    basis_vector, build_path, edge_difference, gram_matrix, matrix_from_expansion, weight_matrix,
    PathNetwork, TridiagonalMatrix, WeightAssignment,
};
pub use consensus_engine::{
    estimate_rate, generic_initial_state, iterate, RateEstimate, SimulationTrace,
};
pub use dual_certificate::{
    build_certificate, certificate_coordinates, slackness_recurrence_check, verify_certificate,
    CertificateReport, DualCertificate,
};
pub use sdp_forms::{
    assemble_x, build_sdp_instance, duality_gap, lmi_blocks, primal_feasible, trace_f0_z,
    trace_fi_z, trace_fn_z, FeasibilityReport, SdpInstance, MAX_DENSE_NODES,
};
pub use tridiag_spectra::{
    char_poly_sturm, eigenvalues, eigenvector, slem, uniform_spectrum, SpectralSummary,
    DEFAULT_EIG_TOL,
};
pub use weight_optimizer::{
    branch_subgradients, closed_form_weights, grid_oracle, optimize_weights, slem_subgradient,
    BranchSubgradients, OptimizationResult, OptimizerParams,
};
