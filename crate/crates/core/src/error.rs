//! Error type shared by all analysis modules.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid line {index}: {reason}")]
    InvalidLine { index: usize, reason: String },

    #[error("invalid machine at bus {bus}: {reason}")]
    InvalidMachine { bus: u32, reason: String },

    #[error("transmission graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error(
        "coupling matrix numerically singular (reciprocal condition {rcond:.3e} < {threshold:.1e}); \
         check the shunt condition beta_i * x_i <= 1"
    )]
    GammaSingular { rcond: f64, threshold: f64 },

    #[error("shunt condition violated: beta * X = {value:.6} > 1 at bus index {bus}")]
    ShuntCondition { bus: usize, value: f64 },

    #[error("operation requires a lossless network (max |G_red| = {gred_max:.3e})")]
    LossyNetwork { gred_max: f64 },

    #[error("singular matrix: {what}")]
    Singular { what: String },

    #[error("machine {machine}: X - X' = {gap:.3e} is too small; flux energy terms are undefined")]
    DegenerateReactance { machine: usize, gap: f64 },

    #[error("dimension mismatch: {what}")]
    Dimension { what: String },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e}); system too stiff for an explicit integrator")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget exhausted after {steps} steps at t = {t:.6e}")]
    StepBudget { steps: usize, t: f64 },

    #[error("transfer matrix evaluated at a pole: s = {s}")]
    PoleEvaluation { s: Complex64 },

    #[error("internal consistency: membership verdicts disagree ({detail})")]
    VerdictMismatch { detail: String },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
