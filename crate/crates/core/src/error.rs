use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("curve is not immersed: speed {speed:e} at parameter {param}")]
    NotImmersed { param: f64, speed: f64 },

    #[error("self-intersection at sample resolution: samples {i} and {j}, chord/arc ratio {ratio:e}")]
    SelfIntersection { i: usize, j: usize, ratio: f64 },

    #[error("point lies at (or too close to) the pole of an inversion centred at {center:?}")]
    Pole { center: [f64; 3] },

    #[error("curve is not asymptotically straight: tail estimate grew from {previous:e} to {current:e}")]
    NotAsymptoticallyStraight { previous: f64, current: f64 },

    #[error("degenerate projection direction")]
    DegenerateDirection,

    #[error("too many degenerate projection directions ({rejected} rejected for {accepted} accepted)")]
    ExcessiveDegeneracy { rejected: usize, accepted: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
