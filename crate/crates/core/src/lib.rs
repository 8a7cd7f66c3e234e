//! Discrete and truncated models of phase-space localization observables.
//!
//! Effects live on a finite Hilbert space; POVMs are maps from the atoms of a
//! finite outcome space to effects. Covariant constructions (Weyl–Heisenberg
//! over Z_d x Z_d and coherent-state grids) feed marginal, norm-1 and
//! continuity analyses.

pub mod analysis;
pub mod covariant;
pub mod error;
pub mod linalg;
pub mod marginals;
pub mod povm;
pub mod serial;
pub mod tolerance;

pub use analysis::{
    cell_shrink_scaling, joint_localization_bound, necessary_condition_family,
    necessary_condition_verdict, norm1_report, refinement_check, standard_events, ContinuityReport,
    Direction, EventOrigin, EventSample, JointBound, NecessaryCondition, NecessaryVerdict,
    Norm1Report, Norm1Verdict, RefinementSequence, ScalingFit,
};
pub use covariant::{
    absolute_continuity_constant, build_coherent_povm, build_wh_povm, build_wh_povm_with,
    covariance_check, sharp_position_pvm, CoherentGrid, ContinuityConstant, FiducialLabel,
    FiducialVector, Truncation, WeylSystem,
};
pub use error::{Error, Result};
pub use linalg::{
    commutator_norm, maximizing_state, min_eigenvalue, spectral_norm, Effect, HilbertSpace,
    Operator, StateVector, C64,
};
pub use marginals::{
    extract_kernel, marginal_kernel_identity_check, marginal_p, marginal_q, momentum_kernel,
    position_kernel, smear_pvm, KernelIdentity, MarkovKernel, OrthonormalBasis, SmearedObservable,
};
pub use povm::{
    is_commutative, is_projective, outcome_probability, spectrum_support, validate_povm,
    DiscretePovm, EventSet, OutcomeSpace, SpaceShape, ValidationReport,
};
pub use tolerance::Tolerances;
