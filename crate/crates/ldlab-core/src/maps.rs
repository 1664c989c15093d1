//! The concrete dynamical systems: orbit iteration and Birkhoff sums.
//!
//! Three families are implemented:
//!
//! * the doubling map `x -> 2x mod 1` on `[0, 1]`;
//! * an intermittent interval family with a neutral fixed point at 0,
//!   `f(x) = x (1 + (log 2)^{1/g - 1} / |log x|^{1/g - 1})` on the left
//!   branch and `2x - 1` on the right, parametrized by `g` in `(0, 1]`
//!   (at `g = 1` the correction factor is identically 1 and the map
//!   coincides with the doubling map);
//! * a skew product over the expanding circle map `s -> d s mod 1` with
//!   quadratic fibers `x -> a0 + alpha sin(2 pi s) - x^2`, restricted to
//!   a forward-invariant cylinder `S^1 x I` computed at construction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::observable::Observable;
use crate::{Error, Result};

/// Left-branch correction underflows the fitted range below this point;
/// the map is the identity there to working precision.
const LOG_GUARD: f64 = 1e-300;

/// A phase-space point: either on the interval `[0, 1]` or on the
/// cylinder `S^1 x I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Interval(f64),
    Cylinder { s: f64, x: f64 },
}

impl Point {
    /// The interval coordinate, for 1D systems.
    pub fn coord(&self) -> Option<f64> {
        match self {
            Point::Interval(x) => Some(*x),
            Point::Cylinder { .. } => None,
        }
    }
}

/// Parameters for the skew-product family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VianaParams {
    /// Quadratic parameter; `None` selects the pre-periodic parameter
    /// computed by [`misiurewicz_a0`].
    pub a0: Option<f64>,
    /// Coupling amplitude of the circle coordinate into the fiber.
    pub alpha: f64,
    /// Degree of the expanding circle map.
    pub d: u32,
}

impl Default for VianaParams {
    fn default() -> Self {
        Self {
            a0: None,
            alpha: 1e-2,
            d: 16,
        }
    }
}

/// A constructed skew-product map with its invariant fiber interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VianaMap {
    a0: f64,
    alpha: f64,
    d: u32,
    fiber_lo: f64,
    fiber_hi: f64,
}

impl VianaMap {
    pub fn a0(&self) -> f64 {
        self.a0
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn degree(&self) -> u32 {
        self.d
    }
    /// The invariant fiber interval `I = [lo, hi] c (-2, 2)`.
    pub fn fiber(&self) -> (f64, f64) {
        (self.fiber_lo, self.fiber_hi)
    }
    /// Fiber parameter `a(s) = a0 + alpha sin(2 pi s)`.
    #[inline]
    pub fn a_of(&self, s: f64) -> f64 {
        self.a0 + self.alpha * math::sin(2.0 * core::f64::consts::PI * s)
    }
}

/// A concrete dynamical system.
#[derive(Debug, Clone, PartialEq)]
pub enum MapSystem {
    Doubling,
    IntermittentStretched { gamma: f64 },
    Viana(VianaMap),
}

/// The quadratic parameter in `(1, 2)` at which the critical point 0 of
/// `x -> a - x^2` lands on the positive fixed point after three steps,
/// computed by bisection to `1e-12`.
pub fn misiurewicz_a0() -> f64 {
    // g(a) = Q_a^3(0) - p_+(a) is positive at 1.5 and negative at 1.6.
    let g = |a: f64| {
        let q1 = a;
        let q2 = a - q1 * q1;
        let q3 = a - q2 * q2;
        let p_plus = 0.5 * (-1.0 + math::sqrt(1.0 + 4.0 * a));
        q3 - p_plus
    };
    let (mut lo, mut hi) = (1.5, 1.6);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl MapSystem {
    pub fn doubling() -> Self {
        MapSystem::Doubling
    }

    /// The intermittent family; `gamma` must lie in `(0, 1]`.
    pub fn intermittent(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "must lie in (0, 1]",
                value: gamma,
            });
        }
        Ok(MapSystem::IntermittentStretched { gamma })
    }

    /// Construct the skew product: resolves the quadratic parameter,
    /// iterates the fiber envelope to a trapping interval, and checks
    /// forward invariance of `S^1 x I` on a dense grid.
    pub fn viana(params: VianaParams) -> Result<Self> {
        if !(params.alpha > 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "must be positive",
                value: params.alpha,
            });
        }
        if params.d < 2 {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: "must be an integer >= 2",
                value: params.d as f64,
            });
        }
        let a0 = params.a0.unwrap_or_else(misiurewicz_a0);
        if !(a0 > 1.0 && a0 < 2.0) {
            return Err(Error::InvalidParameter {
                name: "a0",
                reason: "must lie in (1, 2)",
                value: a0,
            });
        }
        let (a_min, a_max) = (a0 - params.alpha, a0 + params.alpha);

        // Hull iteration of the fiber envelope maps x -> a_min - x^2 and
        // x -> a_max - x^2, started from the critical point.
        let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
        let mut converged = false;
        for _ in 0..1000 {
            let m2 = lo.abs().max(hi.abs());
            let m2 = m2 * m2;
            let img_lo = a_min - m2;
            let img_hi = if lo <= 0.0 && hi >= 0.0 {
                a_max
            } else {
                let min_sq = lo.abs().min(hi.abs());
                a_max - min_sq * min_sq
            };
            let new_lo = lo.min(img_lo);
            let new_hi = hi.max(img_hi);
            if (new_lo - lo).abs() < 1e-12 && (new_hi - hi).abs() < 1e-12 {
                lo = new_lo;
                hi = new_hi;
                converged = true;
                break;
            }
            lo = new_lo;
            hi = new_hi;
            if lo <= -2.0 || hi >= 2.0 {
                return Err(Error::Construction(format!(
                    "fiber envelope escaped (-2, 2): [{lo}, {hi}]"
                )));
            }
        }
        if !converged {
            return Err(Error::Construction(String::from(
                "fiber envelope did not trap within 1000 iterations",
            )));
        }
        let map = VianaMap {
            a0,
            alpha: params.alpha,
            d: params.d,
            fiber_lo: lo,
            fiber_hi: hi,
        };

        // Forward invariance of S^1 x I on a dense grid.
        let (ns, nx) = (320, 320);
        for i in 0..ns {
            let s = (i as f64 + 0.5) / ns as f64;
            let a = map.a_of(s);
            for j in 0..nx {
                let x = lo + (hi - lo) * (j as f64 + 0.5) / nx as f64;
                let y = a - x * x;
                if y < lo || y > hi {
                    return Err(Error::Construction(format!(
                        "forward invariance fails at (s={s}, x={x}): image {y} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(MapSystem::Viana(map))
    }

    /// Stable identifier used in output files and manifests.
    pub fn id(&self) -> String {
        match self {
            MapSystem::Doubling => String::from("doubling"),
            MapSystem::IntermittentStretched { gamma } => {
                format!("intermittent(gamma={gamma:?})")
            }
            MapSystem::Viana(v) => {
                format!("viana(d={},alpha={:?},a0={:?})", v.d, v.alpha, v.a0)
            }
        }
    }

    pub fn is_one_dimensional(&self) -> bool {
        !matches!(self, MapSystem::Viana(_))
    }

    /// One step of the dynamics. The point must lie in the map's domain.
    pub fn apply(&self, p: Point) -> Result<Point> {
        match (self, p) {
            (MapSystem::Doubling, Point::Interval(x)) => {
                check_unit(x)?;
                Ok(Point::Interval(doubling_step(x)))
            }
            (MapSystem::IntermittentStretched { gamma }, Point::Interval(x)) => {
                check_unit(x)?;
                Ok(Point::Interval(intermittent_step(*gamma, x)))
            }
            (MapSystem::Viana(v), Point::Cylinder { s, x }) => {
                if !(0.0..1.0).contains(&s) {
                    return Err(Error::OutsideDomain(format!("circle coordinate s={s}")));
                }
                if x < v.fiber_lo || x > v.fiber_hi {
                    return Err(Error::OutsideDomain(format!(
                        "fiber coordinate x={x} outside [{}, {}]",
                        v.fiber_lo, v.fiber_hi
                    )));
                }
                Ok(Point::Cylinder {
                    s: circle_step(v.d, s),
                    x: v.a_of(s) - x * x,
                })
            }
            _ => Err(Error::OutsideDomain(String::from(
                "point dimension does not match the map",
            ))),
        }
    }

    /// The forward orbit `p0, T p0, ..., T^n p0` (length `n + 1`).
    pub fn orbit(&self, p0: Point, n: usize) -> Result<Vec<Point>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(p0);
        let mut p = p0;
        for _ in 0..n {
            p = self.apply(p)?;
            out.push(p);
        }
        Ok(out)
    }

    /// Birkhoff sum of `obs` over the first `n` orbit points of `p0`
    /// (compensated accumulation).
    pub fn birkhoff_sum(&self, obs: &Observable, p0: Point, n: usize) -> Result<f64> {
        let mut acc = math::NeumaierSum::new();
        let mut p = p0;
        for k in 0..n {
            acc.add(obs.eval(p)?);
            if k + 1 < n {
                p = self.apply(p)?;
            }
        }
        Ok(acc.total())
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutsideDomain(format!("x={x} outside [0, 1]")))
    }
}

/// `2x mod 1`, with the convention `T(1) = 1` kept inside the interval.
#[inline]
pub(crate) fn doubling_step(x: f64) -> f64 {
    if x <= 0.5 {
        2.0 * x
    } else {
        2.0 * x - 1.0
    }
}

/// One step of the intermittent family. The left branch maps `[0, 1/2]`
/// onto `[0, 1]` with a neutral fixed point at 0; the right branch is
/// `2x - 1`.
#[inline]
pub(crate) fn intermittent_step(gamma: f64, x: f64) -> f64 {
    if x > 0.5 {
        2.0 * x - 1.0
    } else {
        intermittent_left(gamma, x)
    }
}

/// The left branch value, defined for `x` in `[0, 1/2]`. `f(0) = 0` by
/// continuity; `f(1/2) = 1` since the log ratio is exactly 1 there.
#[inline]
pub(crate) fn intermittent_left(gamma: f64, x: f64) -> f64 {
    let p = 1.0 / gamma - 1.0;
    if p == 0.0 {
        // gamma = 1: the correction factor is identically 1.
        return 2.0 * x;
    }
    if x < LOG_GUARD {
        return x;
    }
    let ratio = core::f64::consts::LN_2 / -math::ln(x);
    let y = x * (1.0 + math::powf(ratio, p));
    y.min(1.0)
}

/// Preimage under the left branch: the unique `x` in `[0, 1/2]` with
/// `f(x) = y`, by bisection to absolute precision `1e-14`.
pub(crate) fn intermittent_left_inverse(gamma: f64, y: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&y));
    if y <= 0.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 0.5;
    }
    math::bisect_increasing(|x| intermittent_left(gamma, x), 0.0, 0.5, y, 1e-14)
}

#[inline]
pub(crate) fn circle_step(d: u32, s: f64) -> f64 {
    let y = d as f64 * s;
    y - math::floor(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::{Observable, ObservableKind};

    #[test]
    fn doubling_left_branch() {
        let m = MapSystem::doubling();
        assert_eq!(
            m.apply(Point::Interval(0.25)).unwrap(),
            Point::Interval(0.5)
        );
    }

    #[test]
    fn gamma_one_right_branch_is_doubling() {
        let m = MapSystem::intermittent(1.0).unwrap();
        assert_eq!(
            m.apply(Point::Interval(0.75)).unwrap(),
            Point::Interval(0.5)
        );
    }

    #[test]
    fn left_branch_value_at_half_is_one() {
        for gamma in [0.25, 0.5, 0.75, 1.0] {
            let m = MapSystem::intermittent(gamma).unwrap();
            assert_eq!(
                m.apply(Point::Interval(0.5)).unwrap(),
                Point::Interval(1.0),
                "gamma = {gamma}"
            );
        }
    }

    #[test]
    fn left_branch_closed_form() {
        // gamma = 0.5: f(x) = x (1 + log 2 / |log x|); at x = 0.1 the
        // ratio is log10(2), so f(0.1) = 0.1 * (1 + 0.30102999566398114...).
        let m = MapSystem::intermittent(0.5).unwrap();
        let got = m.apply(Point::Interval(0.1)).unwrap().coord().unwrap();
        let expected = 0.13010299956639812;
        assert!((got - expected).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn neutral_fixed_point() {
        let m = MapSystem::intermittent(0.5).unwrap();
        let orb = m.orbit(Point::Interval(0.0), 3).unwrap();
        assert!(orb.iter().all(|p| *p == Point::Interval(0.0)));
    }

    #[test]
    fn doubling_fixed_point_orbit() {
        let m = MapSystem::doubling();
        let orb = m.orbit(Point::Interval(0.0), 5).unwrap();
        assert_eq!(orb.len(), 6);
        assert!(orb.iter().all(|p| *p == Point::Interval(0.0)));
    }

    #[test]
    fn doubling_period_two_orbit() {
        let m = MapSystem::doubling();
        let third = 1.0 / 3.0;
        let orb = m.orbit(Point::Interval(third), 2).unwrap();
        let xs: Vec<f64> = orb.iter().map(|p| p.coord().unwrap()).collect();
        assert!((xs[0] - third).abs() < 1e-15);
        assert!((xs[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((xs[2] - third).abs() < 1e-15);
    }

    #[test]
    fn gamma_outside_range_rejected() {
        assert!(MapSystem::intermittent(0.0).is_err());
        assert!(MapSystem::intermittent(1.5).is_err());
        assert!(MapSystem::intermittent(-0.3).is_err());
    }

    #[test]
    fn domain_errors() {
        let m = MapSystem::doubling();
        assert!(m.apply(Point::Interval(1.5)).is_err());
        assert!(m.apply(Point::Interval(-0.1)).is_err());
        assert!(m.apply(Point::Cylinder { s: 0.1, x: 0.0 }).is_err());
    }

    #[test]
    fn misiurewicz_parameter_is_pre_periodic() {
        let a0 = misiurewicz_a0();
        assert!((1.54..1.55).contains(&a0), "a0 = {a0}");
        let q1 = a0;
        let q2 = a0 - q1 * q1;
        let q3 = a0 - q2 * q2;
        let p_plus = 0.5 * (-1.0 + (1.0 + 4.0 * a0).sqrt());
        assert!((q3 - p_plus).abs() < 1e-10);
        // Once on the fixed point, the orbit stays there.
        let q4 = a0 - q3 * q3;
        assert!((q4 - p_plus).abs() < 1e-9);
    }

    #[test]
    fn viana_construction_and_step() {
        let m = MapSystem::viana(VianaParams::default()).unwrap();
        let MapSystem::Viana(v) = &m else {
            unreachable!()
        };
        let (lo, hi) = v.fiber();
        assert!(lo > -2.0 && hi < 2.0 && lo < 0.0 && hi > 1.0);
        let p = Point::Cylinder { s: 0.3, x: 0.2 };
        let q = m.apply(p).unwrap();
        let Point::Cylinder { s, x } = q else {
            panic!()
        };
        assert!((0.0..1.0).contains(&s));
        assert!(x >= lo && x <= hi);
    }

    #[test]
    fn viana_rejects_bad_params() {
        assert!(MapSystem::viana(VianaParams {
            a0: Some(2.5),
            ..Default::default()
        })
        .is_err());
        assert!(MapSystem::viana(VianaParams {
            alpha: -1.0,
            ..Default::default()
        })
        .is_err());
        assert!(MapSystem::viana(VianaParams {
            d: 1,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn birkhoff_sum_of_zero_observable() {
        let m = MapSystem::doubling();
        let zero = Observable::new(ObservableKind::Constant(0.0));
        let s = m.birkhoff_sum(&zero, Point::Interval(0.37), 100).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn birkhoff_sum_exact_trig_values() {
        // cos(2 pi / 3) + cos(4 pi / 3) = -1.
        let m = MapSystem::doubling();
        let cos = Observable::new(ObservableKind::Cosine);
        let s = m.birkhoff_sum(&cos, Point::Interval(1.0 / 3.0), 2).unwrap();
        assert!((s + 1.0).abs() < 1e-14, "got {s}");
    }

    #[test]
    fn birkhoff_sum_matches_plain_loop() {
        let m = MapSystem::doubling();
        let cos = Observable::new(ObservableKind::Cosine);
        let got = m.birkhoff_sum(&cos, Point::Interval(0.123), 10).unwrap();
        // Independent re-implementation of the loop.
        let mut expected = 0.0;
        let mut x = 0.123_f64;
        for _ in 0..10 {
            expected += (2.0 * core::f64::consts::PI * x).cos();
            x = if x <= 0.5 { 2.0 * x } else { 2.0 * x - 1.0 };
        }
        assert!((got - expected).abs() < 1e-12);
    }
}
