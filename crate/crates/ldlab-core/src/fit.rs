//! Stretched-exponential fits `a_n ~ C exp(-tau n^theta)` in log space.
//!
//! The fit is deterministic by construction: a coarse grid over
//! `theta in {0.05, 0.10, ..., 1.00}` with an exact linear least-squares
//! solve of `log a_n` against `n^theta` at each grid point, followed by
//! golden-section refinement of `theta` to `1e-3` around the best grid
//! value. No iterative nonlinear solver, no initialization sensitivity.
//!
//! Log values are taken relative to the first point in the window, so
//! rescaling the whole curve by a power of two leaves `tau` and `theta`
//! bit-identical and scales `C` exactly; other positive scalings agree
//! to rounding.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::montecarlo::LdEstimate;
use crate::{math, Error, Result};

const THETA_GRID_STEP: f64 = 0.05;
const THETA_REFINE_TOL: f64 = 1e-3;
/// Grid points with r^2 within this relative slack of the optimum make
/// up the reported theta confidence band.
const PROFILE_SLACK: f64 = 0.005;

/// Fitted stretched-exponential parameters.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StretchedExpFit {
    pub c: f64,
    pub tau: f64,
    pub theta: f64,
    pub r_squared: f64,
    /// Profile band over the theta grid (r^2 within 0.5% of optimum).
    pub theta_ci: (f64, f64),
    /// Inclusive `n` range of the points used.
    pub window: (u64, u64),
    pub points_used: usize,
    /// Diagnostics, e.g. dropped zero-probability points.
    pub notes: Vec<String>,
}

/// Inclusive fitting window over `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitWindow {
    pub n_min: u64,
    pub n_max: u64,
}

impl FitWindow {
    pub fn new(n_min: u64, n_max: u64) -> Self {
        Self { n_min, n_max }
    }

    pub fn all() -> Self {
        Self {
            n_min: 0,
            n_max: u64::MAX,
        }
    }

    fn contains(&self, n: u64) -> bool {
        n >= self.n_min && n <= self.n_max
    }
}

/// Evaluate the model curve `C exp(-tau n^theta)` on the given indices.
pub fn stretched_curve(c: f64, tau: f64, theta: f64, ns: &[u64]) -> Vec<(u64, f64)> {
    ns.iter()
        .map(|&n| (n, c * math::exp(-tau * math::powf(n as f64, theta))))
        .collect()
}

/// Fit `(C, tau, theta)` to a positive decay sequence on the window.
pub fn fit_stretched(points: &[(u64, f64)], window: FitWindow) -> Result<StretchedExpFit> {
    let selected: Vec<(u64, f64)> = points
        .iter()
        .copied()
        .filter(|&(n, _)| window.contains(n))
        .collect();
    fit_selected(&selected, Vec::new())
}

/// Fit the empirical large-deviation exponent to `p_hat` as a function
/// of `n` at fixed `epsilon`. Cells with `p_hat = 0` are dropped with a
/// note; at least 8 usable points must remain.
pub fn fit_ld_exponent(estimates: &[LdEstimate], window: FitWindow) -> Result<StretchedExpFit> {
    if estimates.is_empty() {
        return Err(Error::Fit(String::from("no estimates supplied")));
    }
    let eps = estimates[0].epsilon;
    if estimates.iter().any(|e| e.epsilon != eps) {
        return Err(Error::Fit(String::from(
            "estimates must share a fixed epsilon",
        )));
    }
    let mut notes = Vec::new();
    let mut selected = Vec::new();
    for e in estimates {
        if !window.contains(e.n) {
            continue;
        }
        if e.p_hat > 0.0 {
            selected.push((e.n, e.p_hat));
        } else {
            notes.push(format!("dropped n={} (p_hat = 0)", e.n));
            log::info!("ld fit: dropped n={} with p_hat = 0", e.n);
        }
    }
    selected.sort_by_key(|&(n, _)| n);
    fit_selected(&selected, notes)
}

fn fit_selected(selected: &[(u64, f64)], notes: Vec<String>) -> Result<StretchedExpFit> {
    if selected.len() < 8 {
        return Err(Error::Fit(format!(
            "need at least 8 positive points in the window, have {}",
            selected.len()
        )));
    }
    if let Some(&(n, a)) = selected.iter().find(|&&(_, a)| !(a > 0.0)) {
        return Err(Error::Fit(format!("non-positive value a_{n} = {a}")));
    }
    let a_max = selected.iter().map(|&(_, a)| a).fold(f64::MIN, f64::max);
    let a_min = selected.iter().map(|&(_, a)| a).fold(f64::MAX, f64::min);
    if (a_max - a_min) / a_max < 1e-12 {
        return Err(Error::Fit(String::from(
            "degenerate curve: relative range below 1e-12",
        )));
    }

    let a_ref = selected[0].1;
    let ns: Vec<f64> = selected.iter().map(|&(n, _)| n as f64).collect();
    let ys: Vec<f64> = selected.iter().map(|&(_, a)| math::ln(a / a_ref)).collect();

    let sse_at = |theta: f64| line_fit(&ns, &ys, theta).sse;

    let grid: Vec<f64> = (1..=20).map(|i| i as f64 * THETA_GRID_STEP).collect();
    let grid_sse: Vec<f64> = grid.iter().map(|&t| sse_at(t)).collect();
    let best = grid_sse
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();

    let lo = (grid[best] - THETA_GRID_STEP).max(0.01);
    let hi = (grid[best] + THETA_GRID_STEP).min(1.0);
    let refined = golden_min(sse_at, lo, hi, THETA_REFINE_TOL);
    // Golden section cannot land on a bracket endpoint, so consider the
    // endpoints too (theta = 1 sits on the boundary of the family).
    let theta = [refined, lo, hi]
        .into_iter()
        .min_by(|&a, &b| sse_at(a).partial_cmp(&sse_at(b)).unwrap())
        .unwrap();

    let fitted = line_fit(&ns, &ys, theta);
    if !(fitted.slope < 0.0) {
        return Err(Error::Fit(format!(
            "curve does not decay: fitted rate {} at theta {theta}",
            -fitted.slope
        )));
    }
    let tau = -fitted.slope;
    let c = a_ref * math::exp(fitted.intercept);
    let r_squared = fitted.r_squared();

    // Profile band over the grid.
    let mut ci = (theta, theta);
    for (i, &t) in grid.iter().enumerate() {
        let r2 = LineFit {
            sse: grid_sse[i],
            ..fitted
        }
        .r_squared_with(fitted.sst);
        if r2 >= r_squared - PROFILE_SLACK * math::abs(r_squared) {
            ci.0 = ci.0.min(t);
            ci.1 = ci.1.max(t);
        }
    }

    Ok(StretchedExpFit {
        c,
        tau,
        theta,
        r_squared,
        theta_ci: ci,
        window: (selected[0].0, selected[selected.len() - 1].0),
        points_used: selected.len(),
        notes,
    })
}

#[derive(Clone, Copy)]
struct LineFit {
    slope: f64,
    intercept: f64,
    sse: f64,
    sst: f64,
}

impl LineFit {
    fn r_squared(&self) -> f64 {
        self.r_squared_with(self.sst)
    }
    fn r_squared_with(&self, sst: f64) -> f64 {
        if sst <= 0.0 {
            return 0.0;
        }
        (1.0 - self.sse / sst).clamp(0.0, 1.0)
    }
}

/// Least squares of `y` against `x = n^theta` with centered sums.
fn line_fit(ns: &[f64], ys: &[f64], theta: f64) -> LineFit {
    let m = ns.len() as f64;
    let xs: Vec<f64> = ns.iter().map(|&n| math::powf(n, theta)).collect();
    let x_mean = math::compensated_sum(&xs) / m;
    let y_mean = math::compensated_sum(ys) / m;
    let mut sxx = math::NeumaierSum::new();
    let mut sxy = math::NeumaierSum::new();
    let mut syy = math::NeumaierSum::new();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxx.add(dx * dx);
        sxy.add(dx * dy);
        syy.add(dy * dy);
    }
    let sxx = sxx.total();
    let sxy = sxy.total();
    let sst = syy.total();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = y_mean - slope * x_mean;
    let sse = (sst - slope * sxy).max(0.0);
    LineFit {
        slope,
        intercept,
        sse,
        sst,
    }
}

/// Golden-section minimum of a unimodal function on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.6180339887498949;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, unit_f64};

    fn ns_1_to(n: u64) -> Vec<u64> {
        (1..=n).collect()
    }

    #[test]
    fn recovers_its_own_model() {
        let curve = stretched_curve(3.0, 0.7, 0.5, &ns_1_to(200));
        let fit = fit_stretched(&curve, FitWindow::all()).unwrap();
        assert!((fit.c - 3.0).abs() / 3.0 < 0.01, "c = {}", fit.c);
        assert!((fit.tau - 0.7).abs() / 0.7 < 0.01, "tau = {}", fit.tau);
        assert!(
            (fit.theta - 0.5).abs() / 0.5 < 0.01,
            "theta = {}",
            fit.theta
        );
        assert!(fit.r_squared > 0.9999);
    }

    #[test]
    fn pure_exponential_reports_theta_near_one() {
        let curve = stretched_curve(1.0, 1.0, 1.0, &ns_1_to(60));
        let fit = fit_stretched(&curve, FitWindow::all()).unwrap();
        assert!(fit.theta >= 0.95, "theta = {}", fit.theta);
    }

    #[test]
    fn multiplicative_noise_stays_in_band() {
        // 1% relative noise, fixed substream; the recovered exponent
        // stays within +-0.05 of the true value.
        let mut rng = substream(2024, 0);
        let curve: Vec<(u64, f64)> = stretched_curve(3.0, 0.7, 0.5, &ns_1_to(200))
            .into_iter()
            .map(|(n, a)| (n, a * (1.0 + 0.01 * (2.0 * unit_f64(&mut rng) - 1.0))))
            .collect();
        let fit = fit_stretched(&curve, FitWindow::all()).unwrap();
        assert!(
            (0.45..=0.55).contains(&fit.theta),
            "theta = {} outside [0.45, 0.55]",
            fit.theta
        );
    }

    #[test]
    fn scale_equivariance_is_exact_for_dyadic_factors() {
        let curve = stretched_curve(1.7, 0.4, 0.6, &ns_1_to(100));
        let base = fit_stretched(&curve, FitWindow::all()).unwrap();
        for lambda in [0.5, 2.0, 4.0] {
            let scaled: Vec<(u64, f64)> = curve.iter().map(|&(n, a)| (n, lambda * a)).collect();
            let fit = fit_stretched(&scaled, FitWindow::all()).unwrap();
            assert_eq!(fit.tau, base.tau, "lambda = {lambda}");
            assert_eq!(fit.theta, base.theta, "lambda = {lambda}");
            assert_eq!(fit.c, lambda * base.c, "lambda = {lambda}");
        }
        // General positive factors agree to rounding.
        let scaled: Vec<(u64, f64)> = curve.iter().map(|&(n, a)| (n, 3.0 * a)).collect();
        let fit = fit_stretched(&scaled, FitWindow::all()).unwrap();
        assert!((fit.tau - base.tau).abs() < 1e-9);
        assert!((fit.theta - base.theta).abs() < 1e-9);
    }

    #[test]
    fn dropping_first_point_moves_theta_less_than_band_width() {
        let curve = stretched_curve(2.0, 0.5, 0.4, &ns_1_to(150));
        let full = fit_stretched(&curve, FitWindow::all()).unwrap();
        let shifted = fit_stretched(&curve, FitWindow::new(2, u64::MAX)).unwrap();
        let band = (full.theta_ci.1 - full.theta_ci.0).max(2.0 * THETA_REFINE_TOL);
        assert!(
            (full.theta - shifted.theta).abs() <= band,
            "shift {} vs band {band}",
            (full.theta - shifted.theta).abs()
        );
    }

    #[test]
    fn subwindow_theta_stays_inside_full_band() {
        let curve = stretched_curve(1.0, 0.6, 0.5, &ns_1_to(200));
        let full = fit_stretched(&curve, FitWindow::all()).unwrap();
        let sub = fit_stretched(&curve, FitWindow::new(20, 150)).unwrap();
        assert!(
            sub.theta >= full.theta_ci.0 - THETA_REFINE_TOL
                && sub.theta <= full.theta_ci.1 + THETA_REFINE_TOL,
            "sub theta {} outside band {:?}",
            sub.theta,
            full.theta_ci
        );
    }

    #[test]
    fn round_trip_over_parameter_grid() {
        for &c in &[0.5, 3.0] {
            for &tau in &[0.1, 1.0] {
                for &theta in &[0.3, 0.5, 1.0] {
                    let curve = stretched_curve(c, tau, theta, &ns_1_to(200));
                    let fit = fit_stretched(&curve, FitWindow::all()).unwrap();
                    assert!(
                        (fit.c - c).abs() / c < 0.01
                            && (fit.tau - tau).abs() / tau < 0.01
                            && (fit.theta - theta).abs() / theta < 0.01,
                        "({c}, {tau}, {theta}) -> ({}, {}, {})",
                        fit.c,
                        fit.tau,
                        fit.theta
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let flat: Vec<(u64, f64)> = (1..=20).map(|n| (n, 1.0)).collect();
        assert!(matches!(
            fit_stretched(&flat, FitWindow::all()),
            Err(Error::Fit(_))
        ));

        let mut with_zero = stretched_curve(1.0, 0.5, 0.5, &ns_1_to(20));
        with_zero[10].1 = 0.0;
        assert!(fit_stretched(&with_zero, FitWindow::all()).is_err());

        let short = stretched_curve(1.0, 0.5, 0.5, &ns_1_to(5));
        assert!(fit_stretched(&short, FitWindow::all()).is_err());

        let rising: Vec<(u64, f64)> = (1..=20).map(|n| (n, n as f64)).collect();
        assert!(fit_stretched(&rising, FitWindow::all()).is_err());
    }

    #[test]
    fn ld_exponent_recovers_synthetic_model() {
        // p_n = 2 exp(-0.3 n^{1/3}).
        let ns: Vec<u64> = (1..=100).collect();
        let ests: Vec<LdEstimate> = stretched_curve(2.0, 0.3, 1.0 / 3.0, &ns)
            .into_iter()
            .map(|(n, p)| LdEstimate {
                n,
                epsilon: 0.1,
                p_hat: p,
                exceed_count: 0,
                samples: 1,
                ci_low: p,
                ci_high: p,
                seed: 0,
                map_id: String::new(),
                obs_id: String::new(),
            })
            .collect();
        let fit = fit_ld_exponent(&ests, FitWindow::all()).unwrap();
        assert!(
            (fit.theta - 1.0 / 3.0).abs() / (1.0 / 3.0) < 0.01,
            "theta = {}",
            fit.theta
        );
    }

    #[test]
    fn ld_exponent_drops_zero_cells() {
        let ns: Vec<u64> = (1..=12).collect();
        let mut ests: Vec<LdEstimate> = stretched_curve(1.0, 0.4, 0.5, &ns)
            .into_iter()
            .map(|(n, p)| LdEstimate {
                n,
                epsilon: 0.1,
                p_hat: p,
                exceed_count: 0,
                samples: 1,
                ci_low: p,
                ci_high: p,
                seed: 0,
                map_id: String::new(),
                obs_id: String::new(),
            })
            .collect();
        ests[11].p_hat = 0.0;
        let fit = fit_ld_exponent(&ests, FitWindow::all()).unwrap();
        assert_eq!(fit.points_used, 11);
        assert_eq!(fit.notes.len(), 1);

        // Too few positive points left.
        for e in ests.iter_mut().skip(7) {
            e.p_hat = 0.0;
        }
        assert!(fit_ld_exponent(&ests, FitWindow::all()).is_err());
    }

    #[test]
    fn mixed_epsilon_rejected() {
        let mk = |n: u64, eps: f64| LdEstimate {
            n,
            epsilon: eps,
            p_hat: 0.5,
            exceed_count: 0,
            samples: 1,
            ci_low: 0.4,
            ci_high: 0.6,
            seed: 0,
            map_id: String::new(),
            obs_id: String::new(),
        };
        let ests = vec![mk(1, 0.1), mk(2, 0.2)];
        assert!(fit_ld_exponent(&ests, FitWindow::all()).is_err());
    }
}
