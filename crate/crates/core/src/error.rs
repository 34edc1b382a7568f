use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {value} is outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel {kernel} is singular at r = 0")]
    Singularity { kernel: &'static str },

    #[error(
        "quadrature did not converge: estimated error {achieved:.3e} exceeds target {target:.3e}"
    )]
    QuadratureNonConvergence { achieved: f64, target: f64 },

    #[error(
        "no feasible eps: tail {tail:.3e} at eps = {eps:.3e} still exceeds tolerance {tol:.3e}"
    )]
    NoFeasibleEps { eps: f64, tail: f64, tol: f64 },

    #[error("tail integral is not monotone in eps (eps {eps_lo:.4e} -> {tail_lo:.3e}, eps {eps_hi:.4e} -> {tail_hi:.3e})")]
    NonMonotoneTail {
        eps_lo: f64,
        tail_lo: f64,
        eps_hi: f64,
        tail_hi: f64,
    },

    #[error("window upper edge {edge} must lie below R0 = {r0}")]
    WindowEdge { edge: f64, r0: f64 },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shape mismatch: expected {expected} values, got {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("imaginary residue {residue:.3e} exceeds {limit:.3e} (index map bug?)")]
    ImaginaryResidue { residue: f64, limit: f64 },

    #[error("direct summation is limited to N <= {limit}, got N = {n}")]
    SizeGuard { n: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
