use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probability {value} is outside {range}")]
    ProbabilityOutOfRange { value: f64, range: &'static str },

    #[error("invalid binary pmf ({0}, {1})")]
    InvalidPmf(f64, f64),

    #[error("response must be 0 or 1, got {0}")]
    InvalidResponse(u8),

    #[error("grid needs at least {min} cells, got {got}")]
    GridTooSmall { min: usize, got: usize },

    #[error("cell masses must be finite and nonnegative with positive total")]
    InvalidMasses,

    #[error("posterior collapsed: every cell has zero mass after the update")]
    DegeneratePosterior,

    #[error("query region has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rectangle bounds invalid: {0}")]
    InvalidRectangle(String),

    #[error("query region has {got} rectangles, at most {max} are supported")]
    TooManyRectangles { max: usize, got: usize },

    #[error("{got} players requested, at most {max} supported here")]
    TooManyPlayers { max: usize, got: usize },

    #[error("player index {index} out of range for {count} players")]
    InvalidPlayer { index: usize, count: usize },

    #[error("no players supplied")]
    NoPlayers,

    #[error("invalid player parameters: {0}")]
    InvalidPlayerModel(String),

    #[error("player {0} has a distance-dependent channel; a constant crossover probability is required")]
    NonConstantChannel(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("oracle aborted: {0}")]
    OracleAborted(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_open_half(eps: f64) -> Result<f64> {
    if eps > 0.0 && eps < 0.5 {
        Ok(eps)
    } else {
        Err(Error::ProbabilityOutOfRange {
            value: eps,
            range: "(0, 1/2)",
        })
    }
}

pub(crate) fn check_unit(p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::ProbabilityOutOfRange {
            value: p,
            range: "[0, 1]",
        })
    }
}
