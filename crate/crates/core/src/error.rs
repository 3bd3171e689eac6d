use thiserror::Error;

pub type Result<T, E = FlowError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("jets of different truncation order ({left} vs {right})")]
    MixedJetOrders { left: usize, right: usize },

    #[error("derivative order {order} outside 1..={cap}")]
    OrderOutOfRange { order: usize, cap: usize },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown symbol `{symbol}` at line {line}, column {column}")]
    UnknownSymbol { symbol: String, line: usize, column: usize },

    #[error("Newton iteration did not converge from any of {guesses} initial guesses")]
    NoConvergence { guesses: usize },

    #[error("vectors are linearly dependent (rank loss at vector {index})")]
    DegenerateStack { index: usize },

    #[error("zero velocity: curvature undefined at a fixed point")]
    ZeroVelocity,

    #[error("first curvature vanishes: torsion undefined")]
    UndefinedTorsion,

    #[error("fast eigenvalue {re} {im:+}i is complex: no real invariant hyperplane")]
    ComplexFastEigenvalue { re: f64, im: f64 },

    #[error("Jacobian has no real eigenvalue")]
    NoRealEigenvalue,

    #[error("eigenvector residual {residual:e} exceeds threshold for eigenvalue {re} {im:+}i (defective Jacobian?)")]
    Defective { re: f64, im: f64, residual: f64 },

    #[error("eigenvalue multiplicity collapse: slow wedge is degenerate")]
    MultiplicityCollapse,

    #[error("factor vanishes identically on the sampling box")]
    IdenticallyZeroFactor,

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {steps} exhausted at t = {t}")]
    StepLimit { t: f64, steps: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl FlowError {
    /// Errors caused by the request itself rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            FlowError::DimensionMismatch { .. }
                | FlowError::OrderOutOfRange { .. }
                | FlowError::UnknownModel(_)
                | FlowError::UnknownParam(_)
                | FlowError::Config(_)
                | FlowError::Parse { .. }
                | FlowError::UnknownSymbol { .. }
                | FlowError::InvalidArgument(_)
        )
    }
}
