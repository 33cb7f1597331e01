use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid atom: position {position}, mass {mass}")]
    InvalidAtom { position: f64, mass: f64 },

    #[error("invalid window [{lo}, {hi}): lower bound must be below upper bound")]
    InvalidWindow { lo: f64, hi: f64 },

    #[error("configuration exceeds the cap of {cap} atoms")]
    TooManyAtoms { cap: usize },

    #[error("integral over [{lo}, {hi}] did not converge")]
    NonIntegrable { lo: f64, hi: f64 },

    #[error("decoration `{0}` is unbounded above; exact window sampling is impossible")]
    UnboundedDecoration(String),

    #[error("decoration `{name}` produced rightmost atom {rightmost} above its declared bound {bound}")]
    DecorationBoundViolated {
        name: String,
        rightmost: f64,
        bound: f64,
    },

    #[error("decoration `{0}` produced the null measure")]
    NullDecoration(String),

    #[error("test function `{f_id}` has support [{lo}, {hi}] outside the sampled window [{window_lo}, {window_hi})")]
    WindowTooSmall {
        f_id: String,
        lo: f64,
        hi: f64,
        window_lo: f64,
        window_hi: f64,
    },

    #[error("alpha = {0} gives e^alpha outside (0, 1)")]
    DegenerateAlpha(f64),

    #[error("particle count exceeded the cap of {cap}")]
    ParticleOverflow { cap: usize },

    #[error("derivative martingale is non-positive (W_t = {0})")]
    NonpositiveMartingale(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown decoration `{0}`")]
    UnknownDecoration(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
