use thiserror::Error;

use crate::dynsys::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every typed failure a computation in this crate can report.
///
/// The variant name is part of the CLI contract: it is what ends up in the
/// `error` field of the JSON written to stderr.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parameters make the map non-invertible: {0}")]
    NonInvertibleParams(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("orbit escaped the bounding box at step {step} (point {x}, {y})")]
    Escape { step: i64, x: f64, y: f64 },
    #[error("requested {requested} iterations, cap is {cap}")]
    TooManyIterations { requested: u64, cap: u64 },
    #[error("orbit is not a saddle")]
    NotSaddle,
    #[error("manifold refinement exhausted its point budget of {0}")]
    RefinementBlowup(usize),
    #[error("intersection pattern contradicts class period {expected}: admissible residues {found:?}")]
    ConflictingPeriod { expected: u64, found: Vec<u64> },
    #[error("no su-quadrilateral could be closed up: {0}")]
    NoQuadrilateral(String),
    #[error("shadowing Newton iteration failed to contract: {0}")]
    NoContraction(String),
    #[error("missing homoclinic connection from saddle {from} to saddle {to}")]
    NoHomoclinicConnection { from: usize, to: usize },
    #[error("window too small: endpoint mismatch {mismatch:.3e} >= {bound:.3e}")]
    WindowTooSmall { mismatch: f64, bound: f64 },
    #[error("hyperbolicity certificate failed: {0}")]
    NotHyperbolic(String),
    #[error("cone condition violated at ({}, {}): {reason}", point[0], point[1])]
    ConeViolation { point: [f64; 2], reason: String },
    #[error("power iteration did not converge after {0} iterations")]
    NonConvergent(usize),
    #[error("component is reducible")]
    Reducible,
    #[error("regression fit is poor (R^2 = {0:.4})")]
    PoorFit(f64),
    #[error("rejection sampling starved: {accepted} points in a Bowen ball (need {needed})")]
    SampleStarvation { accepted: usize, needed: usize },
    #[error("transversal is not transverse to the leaves (angle {0:.3e})")]
    NotTransverse(f64),
    #[error("too few intersection samples: {found} < {needed}")]
    TooFewPoints { found: usize, needed: usize },
    #[error("no tangencies found")]
    NoTangencies,
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonInvertibleParams(_) => "NonInvertibleParams",
            Error::InvalidParams(_) => "InvalidParams",
            Error::Escape { .. } => "Escape",
            Error::TooManyIterations { .. } => "TooManyIterations",
            Error::NotSaddle => "NotSaddle",
            Error::RefinementBlowup(_) => "RefinementBlowup",
            Error::ConflictingPeriod { .. } => "ConflictingPeriod",
            Error::NoQuadrilateral(_) => "NoQuadrilateral",
            Error::NoContraction(_) => "NoContraction",
            Error::NoHomoclinicConnection { .. } => "NoHomoclinicConnection",
            Error::WindowTooSmall { .. } => "WindowTooSmall",
            Error::NotHyperbolic(_) => "NotHyperbolic",
            Error::ConeViolation { .. } => "ConeViolation",
            Error::NonConvergent(_) => "NonConvergent",
            Error::Reducible => "Reducible",
            Error::PoorFit(_) => "PoorFit",
            Error::SampleStarvation { .. } => "SampleStarvation",
            Error::NotTransverse(_) => "NotTransverse",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::NoTangencies => "NoTangencies",
            Error::Parse(_) => "Parse",
        }
    }

    pub(crate) fn escape(step: i64, p: &Point) -> Self {
        Error::Escape { step, x: p[0], y: p[1] }
    }
}
