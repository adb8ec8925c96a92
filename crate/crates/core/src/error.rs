use thiserror::Error;

use crate::operator::BasisLabel;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate denominator {value:.3e} MHz in {which} (operating at a level crossing)")]
    DegenerateDenominator { which: &'static str, value: f64 },

    #[error("eigenvector labeling is ambiguous: two eigenvectors claim {0}")]
    LabelingAmbiguity(BasisLabel),

    #[error("time step {dt:.3e} us exceeds the bound {max_dt:.3e} us")]
    StepSize { dt: f64, max_dt: f64 },

    #[error("accumulated propagator deviates from unitary by {drift:.3e} (tolerance {tolerance:.3e})")]
    UnitarityDrift { drift: f64, tolerance: f64 },

    #[error("no oscillation found: {0}")]
    NoOscillation(String),

    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("fit did not converge after {iterations} iterations (best cost {cost:.6e}, start {start})")]
    NonConvergence {
        iterations: usize,
        cost: f64,
        start: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::InsufficientData(_)
                | Error::StepSize { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
