use alloc::string::String;
use alloc::vec::Vec;

/// Errors reported by the dynamics, discretization and estimation layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A map or observable parameter is outside its admissible range.
    #[error("invalid parameter {name}: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },

    /// A point lies outside the domain of the map it was fed to.
    #[error("point outside the map domain: {0}")]
    OutsideDomain(String),

    /// A 1D-only operation was invoked on a two-dimensional system.
    #[error("{op} supports one-dimensional maps only")]
    UnsupportedDimension { op: &'static str },

    /// Ulam discretization requires a power-of-two bin count >= 16.
    #[error("bin count must be a power of two >= 16 (got {0})")]
    InvalidBinCount(usize),

    /// Numerical construction of a map failed (root finding, trapping
    /// interval iteration, forward-invariance check).
    #[error("map construction failed: {0}")]
    Construction(String),

    /// The observable is identically zero (after centering); correlation
    /// quantities are undefined for it.
    #[error("observable is zero{}", if *.centered { " after centering" } else { "" })]
    ZeroObservable { centered: bool },

    /// Transfer application hit bins with (numerically) zero invariant
    /// density intersecting the support of the input.
    #[error("zero-density bins intersect the input support: {bins:?}")]
    Conditioning { bins: Vec<usize> },

    /// A decay envelope with non-positive rate or exponent was supplied.
    #[error("invalid decay envelope: tau and theta must be positive (tau={tau}, theta={theta})")]
    InvalidEnvelope { tau: f64, theta: f64 },

    /// Curve fitting rejected its input.
    #[error("fit rejected: {0}")]
    Fit(String),

    /// The geometric series in the exponential-moment bound diverges.
    #[error("divergent series: ratio {ratio} >= 1 (tau' mis-calibrated)")]
    DivergentSeries { ratio: f64 },

    /// An exponential-moment evaluation would overflow.
    #[error(
        "exponential moment mis-calibrated: integrand bound exceeds 1e300 (exponent {exponent})"
    )]
    Miscalibrated { exponent: f64 },

    /// A required prior computation is missing.
    #[error("missing dependency: {0}")]
    MissingDependency(&'static str),

    /// A sampling specification violates its invariants.
    #[error("invalid sample spec: {0}")]
    InvalidSampleSpec(&'static str),
}
