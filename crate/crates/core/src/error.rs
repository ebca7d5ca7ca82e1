use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid must be at least 3x3 pixels, got {width}x{height}")]
    GridTooSmall { width: usize, height: usize },

    #[error("known pixel ({x}, {y}) lies on the grid frame; the Dirichlet and Neumann boundaries must not intersect")]
    KnownPixelOnFrame { x: usize, y: usize },

    #[error("pixel index {index} out of range for a {width}x{height} grid")]
    PixelOutOfRange {
        index: usize,
        width: usize,
        height: usize,
    },

    #[error("field dimensions {got_w}x{got_h} do not match expected {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("grid spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),

    #[error("weight value {value} at pixel ({x}, {y}) outside [0, 1]")]
    WeightOutOfRange { x: usize, y: usize, value: f64 },

    #[error("no Dirichlet data: the known-pixel boundary is empty and the matrix has a constant nullspace")]
    NoDirichletData,

    #[error("weight c vanishes everywhere; the collocation system is a pure Neumann Laplacian and singular")]
    AllZeroWeight,

    #[error("exhaustion set empty at level {level}; the grid is too coarse for this many levels")]
    ExhaustionEmpty { level: usize },

    #[error("Friedrichs constant unbounded: {count} unknown pixel(s) carry no diffusion path to the known data (weight reaches 1 on a region disconnected from the Dirichlet layer)")]
    UnboundedConstant { count: usize },

    #[error("region E is empty")]
    EmptyRegion,

    #[error("region E touches the boundary of D; E must lie strictly inside")]
    RegionTouchesBoundary,

    #[error("cg requires symmetric_hint = true, but the system is not marked symmetric")]
    MethodMismatch,

    #[error("bicgstab breakdown at iteration {iteration} (rho = {rho:e})")]
    Breakdown { iteration: usize, rho: f64 },

    #[error("vector length {got} does not match system size {expected}")]
    LengthMismatch { got: usize, expected: usize },

    #[error("direct solver capped at n <= {cap}, system has n = {n}")]
    DirectTooLarge { n: usize, cap: usize },

    #[error("singular matrix in direct solve")]
    SingularMatrix,

    #[error("{path}: malformed header at byte {offset}: {reason}")]
    MalformedHeader {
        path: PathBuf,
        offset: usize,
        reason: String,
    },

    #[error("{path}: truncated pixel data at byte {offset}: expected {expected} samples, found {found}")]
    TruncatedData {
        path: PathBuf,
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: unsupported maxval {maxval} at byte {offset} (supported: 1..=65535)")]
    UnsupportedMaxval {
        path: PathBuf,
        offset: usize,
        maxval: u64,
    },

    #[error("{path}: unsupported file extension (supported: .pgm, .csv)")]
    UnsupportedFormat { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("point ({x}, {y}) with radius {r} outside the annulus {eps} <= r <= 1")]
    OutsideAnnulus { x: f64, y: f64, r: f64, eps: f64 },

    #[error("epsilon must be in (0, 1), got {0}")]
    BadEpsilon(f64),

    #[error("resolutions must be increasing and each >= 33, got {0:?}")]
    BadResolutions(Vec<usize>),

    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),

    #[error("density must yield at least one mask pixel, got density {density} on {pixels} pixels")]
    BadDensity { density: f64, pixels: usize },

    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
