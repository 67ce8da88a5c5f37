//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("J_st + J is singular; structure too far from the standard one")]
    StructureTooFar,
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("degenerate coordinate change: {0}")]
    DegenerateChange(String),
    #[error("no local disc: {0}")]
    NoDisc(String),
    #[error("degenerate tangent: {0}")]
    DegenerateTangent(String),
    #[error("degenerate boundary coefficients: {0}")]
    DegenerateBoundary(String),
    #[error("no convergence after {iterations} iterations (last step {step:.3e}, pde residual {residual_pde:.3e}, boundary residual {residual_bc:.3e})")]
    NonConvergence {
        iterations: usize,
        step: f64,
        residual_pde: f64,
        residual_bc: f64,
    },
    #[error("iteration does not contract (last step {step:.3e})")]
    NonContraction { step: f64 },
    #[error("expression error: {0}")]
    Expr(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
