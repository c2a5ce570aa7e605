//! Discrete differential geometry for principal U(1) and SU(2) bundles
//! presented by transition-function cocycles over good covers.
//!
//! The crate provides, bottom up:
//!
//! - [`lie`]: exact pointwise group/algebra kernel (exp, log, Ad, brackets)
//!   with a bi-invariant metric of injectivity radius π,
//! - [`grid`]: periodic boxes and a global sphere grid, box charts, covers
//!   with controlled margins and refinement,
//! - [`field`]: group-, algebra- and form-valued lattice fields with an
//!   exterior derivative, its adjoint codifferential, wedge-brackets and
//!   Maurer–Cartan derivatives,
//! - [`norms`]: weighted Lᵖ, Lorentz and equiintegrability diagnostics,
//! - [`partition`]: smooth partitions of unity subordinate to a cover,
//! - [`bundle`]: cocycles, connections, curvature, Yang–Mills energies and
//!   the built-in example bundles,
//! - [`elliptic`]: the critical drift solver Δu = A·∇u + f with its
//!   contraction certificates and interior bootstrap,
//! - [`coulomb`]: Coulomb gauge fixing per chart (abelian exactly, nonabelian
//!   by preconditioned descent) and gauge gluing,
//! - [`topology`]: Chern numbers, winding numbers, flatness detection and
//!   stabilization experiments,
//! - [`smoothing`]: cocycle mollification, extension and repair,
//! - [`scenario`]: the reproducible experiment driver behind the CLI.

pub mod bundle;
pub mod coulomb;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod grid;
pub mod lie;
pub mod norms;
pub mod partition;
pub mod scenario;
pub mod smoothing;
pub mod snapshot;
pub mod topology;

pub use bundle::{
    charge_sphere_bundle, flux_torus_bundle, gluing_residual, pou_connection,
    random_smooth_gauge, refine_bundle, trivial_bundle, ym_energy, ym_energy_with, Bundle,
    Cocycle, ConnectionForm, CurvatureForm, GaugeField,
};
pub use coulomb::{
    abelian_coulomb, chart_curvature, connection_estimate_ratio, gauge_derivative_identity_check,
    gauge_transformed, glue_coulomb, gradient_lp_norm, holder_diagnostic, nonabelian_coulomb,
    stokes_compatibility_defect, CoulombResult,
};
pub use elliptic::{
    bootstrap_interior, certify_eps_elliptic, contraction_probe, drift_ln_norm,
    solve_drift_dirichlet, solve_drift_dirichlet_from, stage_count, w2q_norm, BootstrapReport,
    DriftProblem, SmallnessProfile, SolverReport,
};
pub use error::{Error, Result};
pub use field::{exp_field, form_indices, Domain, FormField, GroupField, ScalarField};
pub use grid::{BaseGrid, BoxRegion, Chart, Cover, GridKind};
pub use norms::{equiintegrability_profile, lorentz_quasinorm, lp_norm};
pub use partition::{build_partition_of_unity, PartitionOfUnity, RampProfile};
pub use scenario::{
    calibrate, load_spec, parse_grid_preset, parse_spec, run_scenario, stream_rng,
    validate_spec, write_outcome, Metric, Report, ScenarioKind, ScenarioOutcome, ScenarioSpec,
    StageReport, REPORT_SCHEMA_VERSION,
};
pub use smoothing::{
    mollify_cocycle, mollify_group_map, patch_extend, patch_interpolate, repair_cocycle,
    smooth_connection_on_bundle, PairSmoothingDistance, SmoothingReport, DELTA_G,
};
pub use snapshot::FieldSnapshot;
pub use topology::{
    calibrate_flatness_delta, chern_number_u1, cocycle_derivative_sup, concentrating_family,
    coulomb_bundle, curvature_flux_integral, direct_class, flatness_detect,
    non_concentrating_family, stabilization_experiment, torus4_flux_classes, winding_number,
    ClassKind, ClassProvenance, FlatnessVerdict, StabilizationReport, StabilizationStep,
    TopologyClass, INTEGRALITY_TOL,
};
pub use lie::{AlgebraElement, GroupElement, GroupId, IdentityNeighborhood, Mat2};
