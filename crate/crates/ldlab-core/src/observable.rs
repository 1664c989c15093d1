//! Bounded observables on phase space and mean-centering.

use alloc::format;
use alloc::string::String;

use crate::maps::{MapSystem, Point};
use crate::montecarlo::OrbitWalker;
use crate::{math, ulam, Error, Result};

/// The functional form of an observable, before centering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservableKind {
    /// `x -> cos(2 pi x)` on the interval.
    Cosine,
    /// `x -> x` on the interval (centering subtracts the mean).
    CoordinateCentered,
    /// Smoothed indicator `x -> max(0, 1 - |x - center| / width)^exponent`
    /// with Hoelder exponent `exponent` in `(0, 1]`.
    HolderBump {
        center: f64,
        width: f64,
        exponent: f64,
    },
    /// `(s, x) -> cos(2 pi x)` on the cylinder.
    VianaFiber,
    /// A constant.
    Constant(f64),
}

/// A real observable together with its centering offset: the evaluated
/// value is `raw(kind, p) - offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observable {
    pub kind: ObservableKind,
    pub offset: f64,
}

impl Observable {
    pub fn new(kind: ObservableKind) -> Self {
        Self { kind, offset: 0.0 }
    }

    pub fn with_offset(kind: ObservableKind, offset: f64) -> Self {
        Self { kind, offset }
    }

    /// Stable identifier used in output files and manifests.
    pub fn id(&self) -> String {
        let base = match self.kind {
            ObservableKind::Cosine => String::from("cosine"),
            ObservableKind::CoordinateCentered => String::from("coordinate"),
            ObservableKind::HolderBump {
                center,
                width,
                exponent,
            } => {
                format!("holder_bump(center={center:?},width={width:?},exponent={exponent:?})")
            }
            ObservableKind::VianaFiber => String::from("viana_fiber"),
            ObservableKind::Constant(c) => format!("constant({c:?})"),
        };
        format!("{base}-offset({:?})", self.offset)
    }

    /// Raw value before the centering offset is subtracted.
    pub fn raw(&self, p: Point) -> Result<f64> {
        match (self.kind, p) {
            (ObservableKind::Cosine, Point::Interval(x)) => {
                Ok(math::cos(2.0 * core::f64::consts::PI * x))
            }
            (ObservableKind::CoordinateCentered, Point::Interval(x)) => Ok(x),
            (
                ObservableKind::HolderBump {
                    center,
                    width,
                    exponent,
                },
                Point::Interval(x),
            ) => {
                let t = 1.0 - math::abs(x - center) / width;
                Ok(if t <= 0.0 {
                    0.0
                } else {
                    math::powf(t, exponent)
                })
            }
            (ObservableKind::VianaFiber, Point::Cylinder { x, .. }) => {
                Ok(math::cos(2.0 * core::f64::consts::PI * x))
            }
            (ObservableKind::Constant(c), _) => Ok(c),
            _ => Err(Error::OutsideDomain(String::from(
                "observable dimension does not match the point",
            ))),
        }
    }

    /// Centered value `raw(p) - offset`.
    #[inline]
    pub fn eval(&self, p: Point) -> Result<f64> {
        Ok(self.raw(p)? - self.offset)
    }

    /// A finite bound on `sup |raw - offset|` over the map's domain.
    ///
    /// For the fiber observable the bound assumes the fiber interval
    /// meets a full period of the cosine, which holds for every
    /// constructed skew product here; the bound is conservative
    /// otherwise.
    pub fn sup_norm(&self) -> f64 {
        match self.kind {
            ObservableKind::Cosine | ObservableKind::VianaFiber => 1.0 + math::abs(self.offset),
            ObservableKind::CoordinateCentered | ObservableKind::HolderBump { .. } => {
                // Raw range is contained in [0, 1].
                math::abs(self.offset).max(math::abs(1.0 - self.offset))
            }
            ObservableKind::Constant(c) => math::abs(c - self.offset),
        }
    }
}

/// How to estimate the invariant mean when centering an observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CenterMethod {
    /// Integrate against the Ulam invariant density on `bins` bins
    /// (1D systems only).
    UlamDensity { bins: usize },
    /// Average along a single orbit of `budget` points after a fixed
    /// burn-in, started from a seeded uniform draw.
    LongOrbit { budget: u64, seed: u64 },
}

/// Result of centering: the adjusted observable plus the estimate that
/// produced it.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Centering {
    #[cfg_attr(feature = "serde", serde(skip))]
    pub observable: Observable,
    /// The mean estimate that was folded into the offset.
    pub mean: f64,
    /// Claimed accuracy of the estimate (tolerance for the Ulam route,
    /// `3 sigma / sqrt(budget)` for the orbit route).
    pub uncertainty: f64,
}

/// Long-orbit centering uses this many warm-up steps.
const CENTER_BURN_IN: u64 = 1000;

/// Adjust the offset of `obs` so its estimated mean under the invariant
/// measure vanishes. The Ulam route is exact to discretization accuracy
/// but is unavailable for the skew product, which must use
/// [`CenterMethod::LongOrbit`].
pub fn center(map: &MapSystem, obs: &Observable, method: CenterMethod) -> Result<Centering> {
    match method {
        CenterMethod::UlamDensity { bins } => {
            if !map.is_one_dimensional() {
                return Err(Error::UnsupportedDimension {
                    op: "Ulam-density centering",
                });
            }
            let op = ulam::build_ulam(map, bins)?;
            let grid = op.discretize(obs)?;
            let mean = op.integral_mu(&grid);
            Ok(Centering {
                observable: Observable::with_offset(obs.kind, obs.offset + mean),
                mean,
                uncertainty: 1e-4,
            })
        }
        CenterMethod::LongOrbit { budget, seed } => {
            if budget < 1000 {
                return Err(Error::InvalidSampleSpec("centering budget must be >= 1000"));
            }
            // sigma is estimated from batch means, so orbit
            // autocorrelation is reflected in the reported uncertainty.
            let n_batches = (budget / 100).clamp(10, 1000);
            let batch_size = budget / n_batches;
            let mut walker = OrbitWalker::new(map, seed, 0, CENTER_BURN_IN);
            let mut sum = math::NeumaierSum::new();
            let mut batch = math::NeumaierSum::new();
            let mut bm = math::NeumaierSum::new();
            let mut bm_sq = math::NeumaierSum::new();
            for k in 0..budget {
                let v = obs.eval(walker.point())?;
                sum.add(v);
                batch.add(v);
                if (k + 1) % batch_size == 0 && (k + 1) / batch_size <= n_batches {
                    let m = batch.total() / batch_size as f64;
                    bm.add(m);
                    bm_sq.add(m * m);
                    batch = math::NeumaierSum::new();
                }
                if k + 1 < budget {
                    walker.step();
                }
            }
            let n = budget as f64;
            let mean = sum.total() / n;
            let bm_mean = bm.total() / n_batches as f64;
            let bm_var = (bm_sq.total() / n_batches as f64 - bm_mean * bm_mean).max(0.0);
            let sigma_sq = batch_size as f64 * bm_var;
            Ok(Centering {
                observable: Observable::with_offset(obs.kind, obs.offset + mean),
                mean,
                uncertainty: 3.0 * math::sqrt(sigma_sq / n),
            })
        }
    }
}
