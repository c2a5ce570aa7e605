//! Crate-wide error type. Every fallible operation funnels into [`Error`] so
//! pipeline stages can wrap causes with provenance instead of stringifying.

use crate::lie::GroupId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group mismatch: expected {expected:?}, got {got:?}")]
    GroupMismatch { expected: GroupId, got: GroupId },

    #[error("element outside the injectivity domain: angle {angle:.6} exceeds radius {radius:.6}")]
    OutsideInjectivityDomain { angle: f64, radius: f64 },

    #[error("matrix too far from the group: distance {dist:.6} exceeds 0.5")]
    TooFarFromGroup { dist: f64 },

    #[error("invalid identity-neighborhood radius {radius} (must lie in (0, pi])")]
    InvalidRadius { radius: f64 },

    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },

    #[error("domain mismatch: {reason}")]
    DomainMismatch { reason: String },

    #[error("form degree {degree} cannot be raised on a {dim}-dimensional base")]
    DegreeOverflow { degree: u8, dim: usize },

    #[error("codifferential of a 0-form is undefined")]
    DegreeUnderflow,

    #[error("bad exponent: {what}")]
    BadExponent { what: String },

    #[error("empty sequence passed where at least one element is required")]
    EmptySequence,

    #[error("cover gap: partition weight {weight:.3e} at grid index {index:?}")]
    CoverGap { index: Vec<usize>, weight: f64 },

    #[error("chart margins exhausted: {reason}")]
    MarginExhausted { reason: String },

    #[error("cover mismatch: {reason}")]
    CoverMismatch { reason: String },

    #[error("fixed-point iteration lost contraction: distance ratio {ratio:.4} over {span} consecutive steps")]
    ContractionFailure { ratio: f64, span: usize },

    #[error("iteration failed to converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("Neumann compatibility violated: defect {defect:.3e} exceeds {limit:.3e}")]
    CompatibilityViolation { defect: f64, limit: f64 },

    #[error("descent stalled at residual {residual:.3e} without reaching the Coulomb system")]
    StallWithoutCoulomb { residual: f64 },

    #[error("smallness violated: {value:.4e} exceeds threshold {threshold:.4e} ({what})")]
    SmallnessViolated { what: String, value: f64, threshold: f64 },

    #[error("oscillation too large for a log lift: {osc:.4} exceeds {limit:.4}")]
    OscillationTooLarge { osc: f64, limit: f64 },

    #[error("phase jump {jump:.4} at sample {index} is too large to unwrap")]
    UnresolvableJump { index: usize, jump: f64 },

    #[error("integral {value:.8} is not within {tol:.1e} of an integer (deviation {deviation:.3e})")]
    NonIntegral { value: f64, deviation: f64, tol: f64 },

    #[error("no admissible stage count for n = {n}, q = {q}, theta = {theta}")]
    NoAdmissibleStageCount { n: usize, q: f64, theta: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("pipeline stage '{stage}' failed: {source}")]
    Pipeline {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Pipeline {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
