use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no quantum state exists below minimum uncertainty (nu = {nu})")]
    BelowMinimumUncertainty { nu: f64 },

    #[error("spectrum truncation needs {needed} terms, cap is {cap}")]
    TruncationCap { needed: usize, cap: usize },

    #[error("closed-form propagation needs degree <= 2, potential has degree {0}")]
    NotQuadratic(usize),

    #[error("grid coverage violated: {0}")]
    Coverage(String),

    #[error("probability leakage {leak:.3e} at grid edges exceeds {limit:.1e} (t = {time})")]
    Leakage { leak: f64, limit: f64, time: f64 },

    #[error("sample {index} escaped beyond |q| = {bound} (t = {time})")]
    Escape { index: usize, bound: f64, time: f64 },

    #[error("relative energy drift {drift:.3e} exceeds bound {bound:.1e} (t = {time})")]
    EnergyDrift { drift: f64, bound: f64, time: f64 },

    #[error("infeasible moment constraints: {0}")]
    Infeasible(String),

    #[error("dual solver stopped after {iterations} iterations with residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("energy {energy} is not above the zero-point energy {zero_point}")]
    BelowZeroPoint { energy: f64, zero_point: f64 },

    #[error("tail truncation estimate {estimate:.3e} exceeds {limit:.1e}")]
    TailTruncation { estimate: f64, limit: f64 },
}

impl Error {
    /// True for failures detected while computing (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Leakage { .. }
                | Error::Escape { .. }
                | Error::EnergyDrift { .. }
                | Error::NoConvergence { .. }
                | Error::TailTruncation { .. }
                | Error::TruncationCap { .. }
        )
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be finite and > 0, got {value}") })
    }
}

pub(crate) fn require_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be finite, got {value}") })
    }
}
