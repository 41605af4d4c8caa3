use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("lattice needs at least one step")]
    ZeroSteps,

    #[error("degenerate lattice: {factor} factor is {value} (need d < 1 < u)")]
    DegenerateFactor { factor: &'static str, value: f64 },

    #[error("piecewise-linear function needs at least 2 knots, got {0}")]
    TooFewKnots(usize),

    #[error("knots must be strictly increasing (violated at index {0})")]
    UnorderedKnots(usize),

    #[error("knots and values differ in length ({knots} vs {values})")]
    LengthMismatch { knots: usize, values: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("x = {x} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("function and envelope spans differ: [{f_lo}, {f_hi}] vs [{env_lo}, {env_hi}]")]
    SpanMismatch {
        f_lo: f64,
        f_hi: f64,
        env_lo: f64,
        env_hi: f64,
    },

    #[error("{value} is not strictly inside the gap ({a}, {b})")]
    OutsideGap { value: f64, a: f64, b: f64 },

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("wealth plan does not cover level {level}")]
    MissingWealth { level: usize },

    #[error("initial capital must be nonnegative, got {0}")]
    NegativeCapital(f64),

    #[error("invalid transfer problem: {0}")]
    InvalidTransfer(String),

    #[error("wealth grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),

    #[error("plan is inadmissible: negative wealth {wealth} at level {level}")]
    NegativeWealth { level: usize, wealth: f64 },

    #[error("plan breaks the Q-supermartingale property at level {level}: E_Q[next] - current = {excess}")]
    NotSupermartingale { level: usize, excess: f64 },

    #[error("malformed plan: {0}")]
    MalformedPlan(String),

    #[error("multiplier must be positive, got {0}")]
    NonPositiveMultiplier(f64),

    #[error("not enough dual samples: {0}")]
    InsufficientSamples(String),
}
