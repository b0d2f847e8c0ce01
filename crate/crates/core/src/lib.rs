//! Spectral data attached to a Schottky group acting on the Riemann sphere.
//!
//! The pipeline: reduced words of the free group index a nested family of
//! cylinder sets in the limit set; a conformal measure of exponent delta is
//! estimated on cylinders from derivative shadows; the cylinder indicators
//! generate a filtered Hilbert space whose orthonormalized filtration carries
//! a Dirac-type operator with cubed-dimension eigenvalues; the resulting zeta
//! series (one per symbol of the reduced algebra) determine the cylinder
//! measures, and comparing them decides whether two group presentations can
//! describe conformally equivalent quotients.

pub mod freegroup;
pub mod gns;
pub mod moebius;
pub mod psmeasure;
pub mod zeta;

pub mod fixtures;

pub(crate) mod util;

use thiserror::Error as ThisError;

/// Crate-wide error type. The CLI maps `Input`-like variants to exit code 2
/// and numeric failures to exit code 3.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("word count {count} at length {length} exceeds cap {cap}")]
    WordCountExceeded { length: usize, count: u128, cap: u128 },

    #[error("letter index {index} out of range 1..={rank}")]
    LetterOutOfRange { index: usize, rank: usize },

    #[error("matrix not invertible (|det| = {det_abs:.3e})")]
    SingularMatrix { det_abs: f64 },

    #[error("map is the identity; fixed points are not isolated")]
    IdentityMap,

    #[error("circle passes through the pole of the map; image is unbounded")]
    UnboundedCircleImage,

    #[error("group spec carries no isometric disks")]
    MissingDisks,

    #[error("invalid group spec: {reason}")]
    InvalidSpec { reason: String },

    #[error("level-sum ratio does not bracket 1 on [{lo}, {hi}] (ratio {ratio_lo:.6} .. {ratio_hi:.6})")]
    NoBracket { lo: f64, hi: f64, ratio_lo: f64, ratio_hi: f64 },

    #[error("measure table of depth {available} cannot resolve words of length {needed}")]
    MeasureDepth { needed: usize, available: usize },

    #[error("non-positive cylinder mass at word {word}")]
    DegenerateMass { word: String },

    #[error("near-zero norm while orthonormalizing at word {word}")]
    DegenerateNorm { word: String },

    #[error("prefix weight below floor at word {word}")]
    DegenerateKappa { word: String },

    #[error("series diverges: Re(s) = {re} is not < -1/3")]
    Divergent { re: f64 },

    #[error("closed form has a pole at this s")]
    ClosedFormPole,

    #[error("inconsistent series: {reason}")]
    InconsistentSeries { reason: String },

    #[error("inconsistent coefficient table: {reason}")]
    InconsistentTable { reason: String },

    #[error("cache file rejected: {reason}")]
    CacheMismatch { reason: String },

    #[error("parse error: {reason}")]
    Parse { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
