//! Ulam discretization of the transfer operator on a uniform partition.
//!
//! One row-stochastic matrix `P` with entries
//! `P[i][j] = m(I_i intersect T^{-1} I_j) / m(I_i)` (Lebesgue `m`,
//! uniform bins `I_i = [i/k, (i+1)/k)`) carries both views used here:
//!
//! * acting on densities from the left (`f -> f P`, [`UlamOperator::transfer_leb`])
//!   it is the discretized Lebesgue transfer operator;
//! * acting on grid functions from the right (`g -> P g`,
//!   [`UlamOperator::koopman`]) it is the discretized composition
//!   operator `g -> g o T`.
//!
//! The invariant density `h` is the left fixed point `h P = h`,
//! normalized to integrate to 1, and the transfer operator with respect
//! to the invariant measure is realized by conjugation,
//! `L f = transfer_leb(h f) / h`.
//!
//! Matrix entries come from branch inverses (closed-form for dyadic
//! branches, bisection for the intermittent left branch), never from
//! orbit sampling, so operators are bit-reproducible.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::maps::{self, MapSystem};
use crate::observable::Observable;
use crate::{math, Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Bins with invariant density below this are masked out of norms.
const DENSITY_MASK: f64 = 1e-12;
const POWER_TOL: f64 = 1e-12;
const MAX_POWER_ITERS: usize = 100_000;

/// Sparse row-stochastic Ulam matrix plus the invariant density of its
/// transfer action.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    map: MapSystem,
    bins: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<f64>,
    density: Vec<f64>,
    density_residual: f64,
    density_iterations: usize,
    masked: Vec<usize>,
    map_id: String,
}

impl UlamOperator {
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// The map this operator discretizes.
    pub fn map(&self) -> &MapSystem {
        &self.map
    }

    /// Invariant density values per bin, normalized so the mean is 1
    /// (the piecewise-constant density integrates to 1).
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Final L1 change of the power iteration that produced the density.
    pub fn density_residual(&self) -> f64 {
        self.density_residual
    }

    pub fn density_iterations(&self) -> usize {
        self.density_iterations
    }

    /// Bins whose density fell below the masking threshold.
    pub fn masked_bins(&self) -> &[usize] {
        &self.masked
    }

    pub fn map_id(&self) -> &str {
        &self.map_id
    }

    /// Midpoint of bin `i`.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.bins as f64
    }

    /// The bin containing `x` in `[0, 1]`.
    #[inline]
    pub fn bin_of(&self, x: f64) -> usize {
        let j = math::floor(x * self.bins as f64) as usize;
        j.min(self.bins - 1)
    }

    /// Sparse entries as `(row, col, weight)` triples in row order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.bins).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |t| (i, self.col_idx[t] as usize, self.weights[t]))
        })
    }

    /// Evaluate an observable at the bin centers (centering offset
    /// applied).
    pub fn discretize(&self, obs: &Observable) -> Result<Vec<f64>> {
        (0..self.bins)
            .map(|i| obs.eval(crate::maps::Point::Interval(self.center(i))))
            .collect()
    }

    /// Discretized Lebesgue transfer operator: `f -> f P`.
    pub fn transfer_leb(&self, f: &[f64]) -> Vec<f64> {
        debug_assert_eq!(f.len(), self.bins);
        let mut out = vec![0.0; self.bins];
        for i in 0..self.bins {
            let fi = f[i];
            if fi == 0.0 {
                continue;
            }
            for t in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[t] as usize] += fi * self.weights[t];
            }
        }
        out
    }

    /// Discretized composition operator: `g -> P g`, i.e. row `i` holds
    /// the average of `g o T` over bin `i`.
    pub fn koopman(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.bins);
        (0..self.bins)
            .map(|i| {
                let mut acc = 0.0;
                for t in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.weights[t] * g[self.col_idx[t] as usize];
                }
                acc
            })
            .collect()
    }

    /// `n`-fold application of the transfer operator with respect to the
    /// invariant measure, `L f = transfer_leb(h f) / h`.
    ///
    /// Rejects inputs supported on masked (numerically unreachable)
    /// bins, since the conjugation is ill-conditioned there.
    pub fn transfer_apply_mu(&self, f: &[f64], n: usize) -> Result<Vec<f64>> {
        debug_assert_eq!(f.len(), self.bins);
        let offending: Vec<usize> = self
            .masked
            .iter()
            .copied()
            .filter(|&i| f[i] != 0.0)
            .collect();
        if !offending.is_empty() {
            return Err(Error::Conditioning { bins: offending });
        }
        let mut g: Vec<f64> = (0..self.bins).map(|i| self.density[i] * f[i]).collect();
        for _ in 0..n {
            g = self.transfer_leb(&g);
        }
        Ok((0..self.bins)
            .map(|i| {
                if self.density[i] < DENSITY_MASK {
                    0.0
                } else {
                    g[i] / self.density[i]
                }
            })
            .collect())
    }

    /// `integral |f| dmu` on the grid (masked bins excluded).
    pub fn l1_mu(&self, f: &[f64]) -> f64 {
        self.lq_mu(f, 1.0)
    }

    /// `(integral |f|^q dmu)^{1/q}` on the grid (masked bins excluded).
    pub fn lq_mu(&self, f: &[f64], q: f64) -> f64 {
        debug_assert!(q >= 1.0);
        let inv_k = 1.0 / self.bins as f64;
        let mut acc = math::NeumaierSum::new();
        for i in 0..self.bins {
            let h = self.density[i];
            if h < DENSITY_MASK {
                continue;
            }
            let a = math::abs(f[i]);
            let term = if q == 1.0 { a } else { math::powf(a, q) };
            acc.add(term * h * inv_k);
        }
        let total = acc.total();
        if q == 1.0 {
            total
        } else {
            math::powf(total, 1.0 / q)
        }
    }

    /// `integral f dmu` on the grid.
    pub fn integral_mu(&self, f: &[f64]) -> f64 {
        let inv_k = 1.0 / self.bins as f64;
        let mut acc = math::NeumaierSum::new();
        for i in 0..self.bins {
            acc.add(f[i] * self.density[i] * inv_k);
        }
        acc.total()
    }

    /// Grid sup norm.
    pub fn sup(&self, f: &[f64]) -> f64 {
        f.iter().fold(0.0, |m, &v| m.max(math::abs(v)))
    }
}

/// Build the Ulam operator for a 1D map on `k` bins (`k` a power of two,
/// at least 16, so bin edges align with the branch point 1/2).
pub fn build_ulam(map: &MapSystem, k: usize) -> Result<UlamOperator> {
    if !map.is_one_dimensional() {
        return Err(Error::UnsupportedDimension {
            op: "Ulam discretization",
        });
    }
    if k < 16 || !k.is_power_of_two() {
        return Err(Error::InvalidBinCount(k));
    }

    let build_row = |i: usize| -> Vec<(u32, f64)> {
        match map {
            MapSystem::Doubling => dyadic_row(i, k),
            MapSystem::IntermittentStretched { gamma } => {
                if i >= k / 2 {
                    // Right branch 2x - 1: dyadic, exact half weights.
                    dyadic_row(i, k)
                } else {
                    intermittent_left_row(*gamma, i, k)
                }
            }
            MapSystem::Viana(_) => unreachable!(),
        }
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<(u32, f64)>> = (0..k).into_par_iter().map(build_row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<(u32, f64)>> = (0..k).map(build_row).collect();

    let nnz: usize = rows.iter().map(Vec::len).sum();
    let mut row_ptr = Vec::with_capacity(k + 1);
    let mut col_idx = Vec::with_capacity(nnz);
    let mut weights = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for row in &rows {
        for &(j, w) in row {
            col_idx.push(j);
            weights.push(w);
        }
        row_ptr.push(col_idx.len());
    }

    let mut op = UlamOperator {
        map: map.clone(),
        bins: k,
        row_ptr,
        col_idx,
        weights,
        density: vec![1.0; k],
        density_residual: f64::INFINITY,
        density_iterations: 0,
        masked: Vec::new(),
        map_id: map.id(),
    };

    // Power iteration for the invariant density, from the uniform start.
    let inv_k = 1.0 / k as f64;
    let mut h = vec![1.0; k];
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    for it in 1..=MAX_POWER_ITERS {
        let mut next = op.transfer_leb(&h);
        // Renormalize the mean to 1 (guards against weight drift).
        let mass: f64 = math::compensated_sum(&next) * inv_k;
        if mass > 0.0 {
            for v in &mut next {
                *v /= mass;
            }
        }
        residual = next
            .iter()
            .zip(&h)
            .map(|(a, b)| math::abs(a - b) * inv_k)
            .sum();
        h = next;
        iters = it;
        if residual <= POWER_TOL {
            break;
        }
    }
    op.density_residual = residual;
    op.density_iterations = iters;
    op.masked = h
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < DENSITY_MASK)
        .map(|(i, _)| i)
        .collect();
    if !op.masked.is_empty() {
        log::warn!(
            "{}: {} bins masked out of mu-norms (density < {DENSITY_MASK})",
            op.map_id,
            op.masked.len()
        );
    }
    op.density = h;
    Ok(op)
}

/// Row for a branch that doubles its bin exactly onto two bins (the
/// doubling map everywhere; the right branch `2x - 1`). Alignment of
/// dyadic edges makes the two half weights exact.
fn dyadic_row(i: usize, k: usize) -> Vec<(u32, f64)> {
    let j0 = (2 * i) % k;
    vec![(j0 as u32, 0.5), ((j0 + 1) as u32, 0.5)]
}

/// Row for the intermittent left branch on bin `[i/k, (i+1)/k]`,
/// `i < k/2`: forward-map the endpoints, then split the image interval
/// over the bins it covers with weights from the branch inverse
/// (bisection to 1e-14). Consecutive preimages telescope, so the weights
/// sum to 1 up to rounding.
fn intermittent_left_row(gamma: f64, i: usize, k: usize) -> Vec<(u32, f64)> {
    let a = i as f64 / k as f64;
    let b = (i + 1) as f64 / k as f64;
    let ya = if i == 0 {
        0.0
    } else {
        maps::intermittent_left(gamma, a)
    };
    let yb = if i + 1 == k / 2 {
        1.0
    } else {
        maps::intermittent_left(gamma, b)
    };

    let mut out = Vec::with_capacity(4);
    let mut j = ((ya * k as f64) as usize).min(k - 1);
    let mut x_prev = a;
    loop {
        let edge = (j + 1) as f64 / k as f64;
        let (x_next, last) = if edge >= yb {
            (b, true)
        } else {
            (maps::intermittent_left_inverse(gamma, edge), false)
        };
        let w = ((x_next - x_prev) * k as f64).max(0.0);
        if w > 0.0 {
            out.push((j as u32, w));
        }
        if last || j + 1 >= k {
            break;
        }
        x_prev = x_next;
        j += 1;
    }
    out
}

/// What the values of a decay curve mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum CurveSemantics {
    /// `a_n = || L^n phi ||_{L1(mu)}` on the grid.
    OperatorL1Norm,
    /// Normalized correlation integrals.
    Correlation,
}

impl CurveSemantics {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveSemantics::OperatorL1Norm => "operator-l1-norm",
            CurveSemantics::Correlation => "correlation",
        }
    }
}

/// A measured decay sequence `(n, a_n)` with provenance.
#[derive(Debug, Clone)]
pub struct DecayCurve {
    pub points: Vec<(u64, f64)>,
    pub semantics: CurveSemantics,
    pub bins: usize,
    pub map_id: String,
    /// Set when the curve was cut short by underflow (`a_n < 1e-300`).
    pub truncated: bool,
}

/// Measure `a_n = || L^n phi_bar ||_{L1(mu)}` for `n = 1..=n_max`.
///
/// The grid mean (with respect to the invariant measure) of the
/// discretized observable is subtracted before iterating, so the curve
/// decays to the spectral floor rather than to a residual constant;
/// `obs` itself must already be centered to function-level accuracy.
pub fn decay_curve(op: &UlamOperator, obs: &Observable, n_max: usize) -> Result<DecayCurve> {
    if n_max < 4 {
        return Err(Error::Fit(String::from("decay curve needs n_max >= 4")));
    }
    let mut phi = op.discretize(obs)?;
    if op.sup(&phi) == 0.0 {
        return Err(Error::ZeroObservable { centered: false });
    }
    let mean = op.integral_mu(&phi);
    for v in &mut phi {
        *v -= mean;
    }
    if op.sup(&phi) < 1e-14 {
        return Err(Error::ZeroObservable { centered: true });
    }

    let mut points = Vec::with_capacity(n_max);
    let mut truncated = false;
    let mut g: Vec<f64> = (0..op.bins).map(|i| op.density[i] * phi[i]).collect();
    for n in 1..=n_max {
        g = op.transfer_leb(&g);
        let f: Vec<f64> = (0..op.bins)
            .map(|i| {
                if op.density[i] < DENSITY_MASK {
                    0.0
                } else {
                    g[i] / op.density[i]
                }
            })
            .collect();
        let a_n = op.l1_mu(&f);
        if a_n < 1e-300 {
            truncated = true;
            log::warn!("decay curve truncated at n={n}: a_n underflow");
            break;
        }
        points.push((n as u64, a_n));
    }
    Ok(DecayCurve {
        points,
        semantics: CurveSemantics::OperatorL1Norm,
        bins: op.bins,
        map_id: String::from(op.map_id()),
        truncated,
    })
}

/// Normalized correlation of `phi` (an observable) against a grid
/// function `psi` at lag `n`:
/// `|integral phi_bar (psi o T^n) dmu| / (sup|phi_bar| sup|psi|)`,
/// computed through the transfer operator by duality.
pub fn correlation(op: &UlamOperator, phi: &Observable, psi: &[f64], n: usize) -> Result<f64> {
    let mut phi_grid = op.discretize(phi)?;
    let norm_phi = op.sup(&phi_grid);
    let norm_psi = op.sup(psi);
    if norm_phi == 0.0 || norm_psi == 0.0 {
        return Err(Error::ZeroObservable { centered: false });
    }
    let mean = op.integral_mu(&phi_grid);
    for v in &mut phi_grid {
        *v -= mean;
    }
    let pushed = op.transfer_apply_mu(&phi_grid, n)?;
    let inv_k = 1.0 / op.bins as f64;
    let mut acc = math::NeumaierSum::new();
    for i in 0..op.bins {
        acc.add(pushed[i] * psi[i] * op.density[i] * inv_k);
    }
    Ok(math::abs(acc.total()) / (norm_phi * norm_psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapSystem;
    use crate::observable::{Observable, ObservableKind};

    fn cos_obs() -> Observable {
        Observable::new(ObservableKind::Cosine)
    }

    #[test]
    fn rejects_bad_bin_counts_and_viana() {
        let m = MapSystem::doubling();
        assert!(matches!(build_ulam(&m, 8), Err(Error::InvalidBinCount(8))));
        assert!(matches!(
            build_ulam(&m, 100),
            Err(Error::InvalidBinCount(100))
        ));
        let v = MapSystem::viana(Default::default()).unwrap();
        assert!(matches!(
            build_ulam(&v, 64),
            Err(Error::UnsupportedDimension { .. })
        ));
    }

    #[test]
    fn doubling_k16_structure() {
        // Every row has exactly two half-weight targets; the density is
        // uniform (Lebesgue is invariant).
        let op = build_ulam(&MapSystem::doubling(), 16).unwrap();
        for i in 0..16 {
            let row: Vec<_> = op
                .entries()
                .filter(|&(r, _, _)| r == i)
                .map(|(_, c, w)| (c, w))
                .collect();
            assert_eq!(row, vec![((2 * i) % 16, 0.5), ((2 * i + 1) % 16, 0.5)]);
        }
        for &h in op.density() {
            assert_eq!(h, 1.0);
        }
    }

    #[test]
    fn rows_are_stochastic() {
        for map in [MapSystem::doubling(), MapSystem::intermittent(0.5).unwrap()] {
            let op = build_ulam(&map, 128).unwrap();
            let mut sums = vec![0.0; 128];
            for (i, _, w) in op.entries() {
                assert!(w >= 0.0);
                sums[i] += w;
            }
            for (i, s) in sums.iter().enumerate() {
                assert!((s - 1.0).abs() <= 1e-12, "row {i} sums to {s}");
            }
        }
    }

    #[test]
    fn density_is_a_fixed_point() {
        let op = build_ulam(&MapSystem::intermittent(0.5).unwrap(), 256).unwrap();
        let pushed = op.transfer_leb(op.density());
        let diff: f64 = pushed
            .iter()
            .zip(op.density())
            .map(|(a, b)| (a - b).abs() / 256.0)
            .sum();
        assert!(diff <= 10.0 * POWER_TOL, "fixed-point residual {diff}");
        // Entrywise nonnegative, integrates to 1.
        assert!(op.density().iter().all(|&h| h >= 0.0));
        let mass: f64 = op.density().iter().sum::<f64>() / 256.0;
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intermittent_density_peaks_at_origin() {
        let op = build_ulam(&MapSystem::intermittent(0.5).unwrap(), 512).unwrap();
        let h = op.density();
        let max = h.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(
            h[0], max,
            "density maximum should sit at the bin adjacent to 0"
        );
        assert!(h[0] > h[256]);
    }

    #[test]
    fn transfer_mu_fixes_constants() {
        let op = build_ulam(&MapSystem::intermittent(0.5).unwrap(), 128).unwrap();
        let ones = vec![1.0; 128];
        let out = op.transfer_apply_mu(&ones, 7).unwrap();
        for v in out {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn transfer_kills_cosine_on_doubling() {
        // L cos(2 pi x) = (cos(pi x) + cos(pi x + pi)) / 2 = 0; on the
        // aligned grid the cancellation is exact to rounding.
        let op = build_ulam(&MapSystem::doubling(), 256).unwrap();
        let phi = op.discretize(&cos_obs()).unwrap();
        let out = op.transfer_apply_mu(&phi, 1).unwrap();
        assert!(op.l1_mu(&out) < 1e-12);
    }

    #[test]
    fn transfer_preserves_integrals() {
        let op = build_ulam(&MapSystem::intermittent(0.5).unwrap(), 256).unwrap();
        let mut f = op.discretize(&cos_obs()).unwrap();
        let mean = op.integral_mu(&f);
        for v in &mut f {
            *v -= mean;
        }
        let out = op.transfer_apply_mu(&f, 10).unwrap();
        assert!(op.integral_mu(&out).abs() < 1e-10);
    }

    #[test]
    fn transfer_contracts_l1() {
        let op = build_ulam(&MapSystem::intermittent(0.5).unwrap(), 128).unwrap();
        let mut rng = crate::rng::substream(13, 0);
        for _ in 0..100 {
            let f: Vec<f64> = (0..128)
                .map(|_| 2.0 * crate::rng::unit_f64(&mut rng) - 1.0)
                .collect();
            let out = op.transfer_apply_mu(&f, 1).unwrap();
            assert!(op.l1_mu(&out) <= op.l1_mu(&f) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn duality_on_the_grid() {
        // <L f, g>_mu = <f, g o T>_mu with g o T evaluated by bin lookup,
        // up to O(1/k).
        let k = 256;
        let map = MapSystem::intermittent(0.5).unwrap();
        let op = build_ulam(&map, k).unwrap();
        let f: Vec<f64> = (0..k).map(|i| (3.0 * op.center(i)).sin()).collect();
        let g: Vec<f64> = (0..k).map(|i| (2.0 * op.center(i) + 0.4).cos()).collect();
        let lf = op.transfer_apply_mu(&f, 1).unwrap();
        let inv_k = 1.0 / k as f64;
        let lhs: f64 = (0..k).map(|i| lf[i] * g[i] * op.density()[i] * inv_k).sum();
        let g_of_t: Vec<f64> = (0..k)
            .map(|i| {
                let y = maps::intermittent_step(0.5, op.center(i));
                g[op.bin_of(y)]
            })
            .collect();
        let rhs: f64 = (0..k)
            .map(|i| f[i] * g_of_t[i] * op.density()[i] * inv_k)
            .sum();
        assert!(
            (lhs - rhs).abs() <= 20.0 / k as f64,
            "duality gap {} at k={k}",
            (lhs - rhs).abs()
        );
    }

    #[test]
    fn decay_curve_monotone_and_bounded() {
        let map = MapSystem::intermittent(0.5).unwrap();
        let op = build_ulam(&map, 256).unwrap();
        let obs = Observable::new(ObservableKind::HolderBump {
            center: 0.3,
            width: 0.2,
            exponent: 0.5,
        });
        let c = crate::observable::center(
            &map,
            &obs,
            crate::observable::CenterMethod::UlamDensity { bins: 256 },
        )
        .unwrap();
        let curve = decay_curve(&op, &c.observable, 60).unwrap();
        assert_eq!(curve.points.len(), 60);
        let mut phi = op.discretize(&c.observable).unwrap();
        let mean = op.integral_mu(&phi);
        for v in &mut phi {
            *v -= mean;
        }
        let l1_phi = op.l1_mu(&phi);
        let mut prev = f64::INFINITY;
        for &(_, a) in &curve.points {
            assert!(a > 0.0);
            assert!(a <= prev * (1.0 + 1e-12));
            assert!(a <= l1_phi * (1.0 + 1e-12));
            prev = a;
        }
    }

    #[test]
    fn decay_curve_rejects_zero_and_constants() {
        let op = build_ulam(&MapSystem::doubling(), 64).unwrap();
        let zero = Observable::new(ObservableKind::Constant(0.0));
        assert!(matches!(
            decay_curve(&op, &zero, 10),
            Err(Error::ZeroObservable { .. })
        ));
        let c = Observable::new(ObservableKind::Constant(3.0));
        assert!(matches!(
            decay_curve(&op, &c, 10),
            Err(Error::ZeroObservable { centered: true })
        ));
    }

    #[test]
    fn doubling_cosine_curve_is_at_noise_floor() {
        let op = build_ulam(&MapSystem::doubling(), 1024).unwrap();
        let curve = decay_curve(&op, &cos_obs(), 10).unwrap();
        assert!(curve.points[0].1 < 1e-12, "a_1 = {}", curve.points[0].1);
    }

    #[test]
    fn correlation_against_constant_vanishes() {
        let op = build_ulam(&MapSystem::intermittent(0.5).unwrap(), 128).unwrap();
        let psi = vec![2.5; 128];
        let c = correlation(&op, &cos_obs(), &psi, 3).unwrap();
        assert!(c < 1e-14);
    }

    #[test]
    fn correlation_at_lag_zero_is_normalized_variance() {
        let k = 1024;
        let op = build_ulam(&MapSystem::doubling(), k).unwrap();
        let psi = op.discretize(&cos_obs()).unwrap();
        let c = correlation(&op, &cos_obs(), &psi, 0).unwrap();
        // Var(cos 2 pi x) under Lebesgue = 1/2; sup norms on the grid
        // are 1 - O(1/k^2).
        assert!((c - 0.5).abs() < 1e-4, "got {c}");
    }

    #[test]
    fn correlation_lag_one_on_doubling_vanishes() {
        let k = 1024;
        let op = build_ulam(&MapSystem::doubling(), k).unwrap();
        let psi: Vec<f64> = (0..k).map(|i| (5.0 * op.center(i)).sin()).collect();
        let c = correlation(&op, &cos_obs(), &psi, 1).unwrap();
        assert!(c < 1e-10, "got {c}");
    }

    #[test]
    fn correlation_rejects_zero_inputs() {
        let op = build_ulam(&MapSystem::doubling(), 64).unwrap();
        let zeros = vec![0.0; 64];
        assert!(correlation(&op, &cos_obs(), &zeros, 1).is_err());
        let psi = vec![1.0; 64];
        let zero_obs = Observable::new(ObservableKind::Constant(0.0));
        assert!(correlation(&op, &zero_obs, &psi, 1).is_err());
    }

    #[test]
    fn conditioning_error_reports_bins() {
        // Hand-built operator with an unreachable bin.
        let op = UlamOperator {
            map: MapSystem::doubling(),
            bins: 16,
            row_ptr: (0..=16).collect(),
            col_idx: (0..16).map(|i| ((i + 1) % 16) as u32).collect(),
            weights: vec![1.0; 16],
            density: {
                let mut h = vec![1.0; 16];
                h[5] = 0.0;
                h
            },
            density_residual: 0.0,
            density_iterations: 1,
            masked: vec![5],
            map_id: String::from("synthetic"),
        };
        let mut f = vec![0.0; 16];
        f[5] = 1.0;
        match op.transfer_apply_mu(&f, 1) {
            Err(Error::Conditioning { bins }) => assert_eq!(bins, vec![5]),
            other => panic!("expected conditioning error, got {other:?}"),
        }
        f[5] = 0.0;
        f[3] = 1.0;
        assert!(op.transfer_apply_mu(&f, 1).is_ok());
    }
}
