use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid nonlinearity: {0}")]
    Nonlinearity(String),
    #[error("nonlinearity is not monotone: segment {segment} has slope {slope}")]
    NotMonotone { segment: usize, slope: f64 },
    #[error("invalid measure: {0}")]
    Measure(String),
    #[error("atom at {position:?} lies outside the grid box")]
    AtomOutsideBox { position: [f64; 2] },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("ball of radius {radius} does not fit strictly inside the grid box")]
    BallDoesNotFit { radius: f64 },
    #[error("shell cell {cell} lacks two interior neighbours along its radial axis")]
    ShellStencil { cell: usize },
    #[error("exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("time {0} must be positive")]
    NonPositiveTime(f64),
    #[error("time {time} is outside the stored range [{start}, {end}]")]
    TimeOutOfRange { time: f64, start: f64, end: f64 },
    #[error("time {0} is not on the stored time mesh")]
    OffMesh(f64),
    #[error("horizon {horizon} exceeds 1/(4c) = {limit} for gauss_c = {gauss_c}")]
    Horizon {
        horizon: f64,
        limit: f64,
        gauss_c: f64,
    },
    #[error(
        "newton iteration did not converge: residual {residual:e} after {iterations} iterations"
    )]
    NewtonDivergence { residual: f64, iterations: usize },
    #[error("linear solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    LinearSolver { residual: f64, iterations: usize },
    #[error("test function support violates the domain: {0}")]
    Support(String),
    #[error("region too close to the space-time boundary: {0}")]
    Region(String),
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("no qualifying shell radius inside the grid (truncation box too small)")]
    NoQualifyingShell,
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
