//! Simulation and analysis of one- and two-photon quantum walks in
//! evanescently coupled waveguide lattices.
//!
//! The pipeline runs lattice geometry -> coupling matrix -> (optionally
//! disordered, segmented) unitary evolution -> single-photon and two-photon
//! output distributions -> Cauchy-Schwarz violation and similarity metrics.
//! [`counting`] adds finite-count detection statistics and [`tomography`]
//! recovers the relevant columns of an unknown unitary from singles and HOM
//! visibilities.
//!
//! Mode indices are 0-based throughout the library; the file formats in
//! [`io`] use 1-based indices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlation;
pub mod counting;
pub mod error;
pub mod evolution;
pub mod exec;
pub mod io;
pub mod lattice;
mod lsq;
pub mod metrics;
pub mod tomography;

pub use correlation::{
    classical_correlation, hom_dip_curve, partial_correlation, quantum_correlation, singles_distribution,
    CorrelationMatrix, PairInput, SinglesDistribution,
};
pub use counting::{
    estimate_correlation, sample_counts, violation_significance, CorrelationEstimate, CountRecord,
    LossVector, ViolationSignificance,
};
pub use error::{Error, Result};
pub use evolution::{evolve_segments, evolve_unitary, haar_unitary, UnitaryMatrix};
pub use exec::Execution;
pub use lattice::{
    apply_disorder, build_coupling_matrix, two_photon_basis, CouplingMatrix, DisorderSpec, GeometryKind,
    LatticeGeometry, Segment,
};
pub use metrics::{hom_max_visibility, similarity, violation_matrix, ViolationMatrix};
pub use tomography::{
    plan_scans, predict_correlation, reconstruct_submatrix, simulate_visibility, PlanMode,
    ReconstructOptions, Scan, SubmatrixEstimate, VisibilityRecord,
};

pub use nalgebra;
pub use num_complex;
