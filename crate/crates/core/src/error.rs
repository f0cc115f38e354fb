use thiserror::Error;

/// Failures raised anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "dispersion symbol c + xi^2 + gamma|xi| is not positive (gamma = {gamma}, c = {c}, min = {min_symbol:.3e}); \
         solitary waves need c > gamma^2/4 = {threshold:.6} when gamma < 0"
    )]
    SymbolDegenerate {
        gamma: f64,
        c: f64,
        min_symbol: f64,
        threshold: f64,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("branch continuation failed at gamma = {gamma}: {source}")]
    ContinuationFailed {
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("blow-up detected at t = {t}: sup|u| = {sup_norm:.3e}")]
    BlowupDetected { t: f64, sup_norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("rescaled field is under-resolved: {fraction:.3e} of its spectral energy lies past the dealiasing cutoff")]
    ResolutionLoss { fraction: f64 },

    #[error("translation fit did not converge after {steps} Newton steps (|F| = {residual:.3e})")]
    NoConvergence { steps: usize, residual: f64 },

    #[error("translation fit is ambiguous: shifts {first} and {second} correlate equally well")]
    AmbiguousFit { first: f64, second: f64 },

    #[error("target squared L2 norm {target} outside the branch range [{low}, {high}] for c in [{c_min}, {c_max}]")]
    OutOfRange {
        target: f64,
        low: f64,
        high: f64,
        c_min: f64,
        c_max: f64,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
