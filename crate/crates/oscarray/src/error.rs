//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice wavelengths are equal; no superlattice period exists")]
    DegenerateWavelengths,

    #[error("both lattice depths are zero; potential is flat")]
    FlatPotential,

    #[error("invalid {what}: {why}")]
    InvalidInput { what: &'static str, why: String },

    #[error("spectrum grids differ (start/step/len must match exactly)")]
    GridMismatch,

    #[error("spectrum kind mismatch: expected {expected}, got {got}")]
    KindMismatch { expected: String, got: String },

    #[error("oscillator linewidth must be positive")]
    ZeroLinewidth,

    #[error("detection efficiency must be positive")]
    ZeroEfficiency,

    #[error("cooperativity must be positive to invert a phase peak")]
    ZeroCooperativity,

    #[error(
        "nonphysical sideband ordering: anti-Stokes area {antistokes} >= Stokes area {stokes} \
         (noise-dominated fit)"
    )]
    NonphysicalOrdering { stokes: f64, antistokes: f64 },

    #[error("ridge is empty; nothing to reconstruct")]
    EmptyRidge,

    #[error(
        "oscillator frequencies collide: separation {separation:.1} rad/s <= linewidth {linewidth:.1} rad/s"
    )]
    FrequencyCollision { separation: f64, linewidth: f64 },

    #[error("target occupations do not vary; crosstalk slopes are undefined")]
    DegenerateAbscissa,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::InvalidInput {
            what,
            why: why.into(),
        }
    }
}
