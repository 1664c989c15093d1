//! Numerical toolkit for studying how stretched-exponential decay of
//! correlations in chaotic interval maps translates into large-deviation
//! rates for Birkhoff sums.
//!
//! The crate provides:
//!
//! * [`maps`] — the concrete dynamical systems (doubling map, an
//!   intermittent family with a neutral fixed point, and a skew-product
//!   family over an expanding circle map), orbit iteration and Birkhoff
//!   sums;
//! * [`observable`] — bounded observables and mean-centering;
//! * [`ulam`] — Ulam discretization of the transfer operator, invariant
//!   densities and correlation-decay curves;
//! * [`gordin`] — the martingale–coboundary decomposition built from
//!   truncated transfer-operator sums;
//! * [`montecarlo`] — reproducible orbit-sampling estimators for
//!   large-deviation probabilities, moments and exponential moments;
//! * [`fit`] — stretched-exponential curve fitting in log space;
//! * [`theory`] — closed-form evaluators for the exponent relation
//!   `theta' = theta / (theta + 1)` and the associated moment,
//!   exponential-moment and large-deviation bounds.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm`
//! feature instead of `std` for float math in embedded builds. All
//! estimators are deterministic functions of their inputs and a 64-bit
//! seed, independent of worker count.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]
// `!(x > 0.0)` guards reject NaN; the suggested `partial_cmp` form hides that.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("ldlab-core requires either the `std` or the `libm` feature");

mod error;
pub(crate) mod math;
pub mod rng;

pub mod fit;
pub mod gordin;
pub mod maps;
pub mod montecarlo;
pub mod observable;
pub mod theory;
pub mod ulam;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, Error>;
