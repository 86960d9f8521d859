use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dim must be 3,4,5 (got {0})")]
    BadDim(u32),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("K is not positive at {at:?} (K = {value})")]
    Positivity { at: Vec<f64>, value: f64 },
    #[error("mass is negative at {at:?} (H = {value})")]
    NegativeMass { at: Vec<f64>, value: f64 },
    #[error("integrand `{0}` does not decay fast enough to converge")]
    Divergent(String),
    #[error("quadrature did not reach tolerance: estimated error {err:e} over {intervals} intervals")]
    Quadrature { err: f64, intervals: usize },
    #[error("grid resolves only {got} points per bubble scale, need at least {need}")]
    UnresolvedScale { got: f64, need: f64 },
    #[error("conformal factor must be positive (u[{index}] = {value})")]
    NonPositiveField { index: usize, value: f64 },
    #[error("malformed field: {0}")]
    Field(String),
    #[error("time step underflow at t = {t}: dt = {dt:e}")]
    StiffnessFailure { t: f64, dt: f64 },
    #[error("positivity lost at t = {t} after time step underflow")]
    BlowDown { t: f64 },
    #[error("left the shadow regime at t = {t}: {reason}")]
    RegimeExit { t: f64, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
