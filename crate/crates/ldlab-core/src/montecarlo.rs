//! Orbit-sampling estimators: large-deviation probabilities, Birkhoff
//! moments and exponential moments.
//!
//! Every estimator is a pure function of `(map, observable, parameters,
//! seed)`: sample `i` draws from the counter-based substream
//! `rng::substream(seed, i)`, so results are bit-identical across
//! re-runs and worker counts. Estimators sharing `(seed, n)` see the
//! same Birkhoff sums, which makes cross-estimator identities (Markov's
//! inequality on the empirical measure) hold exactly.
//!
//! # Orbit representation
//!
//! Orbits of the expanding base maps are generated through their
//! symbolic representation rather than by iterating floats: `2x mod 1`
//! shifts mantissa bits left, so a plain `f64` orbit hits 0 after at
//! most 53 steps and stays there. Instead, the orbit point is a sliding
//! window over an i.i.d. digit stream (binary for the doubling map,
//! base `d` for the skew-product base), which *is* the invariant-measure
//! distribution of the true map; reported points are 53-bit truncations
//! of the exact orbit. The intermittent family is not dyadic and does
//! not suffer mantissa exhaustion, so it iterates in `f64` directly.

use alloc::string::String;
use alloc::vec::Vec;

use crate::maps::{self, MapSystem, Point, VianaMap};
use crate::math::{self, NeumaierSum};
use crate::observable::Observable;
use crate::rng::{substream, unit_f64, BitStream};
use crate::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const TWO_NEG53: f64 = 1.0 / 9007199254740992.0;

/// z for a 95% two-sided normal interval.
const Z95: f64 = 1.959963984540054;

/// Sampling parameters shared by all estimators. Substreams are always
/// counter-based: sample `i` reads `substream(seed, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SampleSpec {
    pub samples: u64,
    pub burn_in: u64,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(samples: u64, burn_in: u64, seed: u64) -> Result<Self> {
        if samples < 100 {
            return Err(Error::InvalidSampleSpec("samples must be >= 100"));
        }
        if burn_in < 1000 {
            return Err(Error::InvalidSampleSpec("burn_in must be >= 1000"));
        }
        Ok(Self {
            samples,
            burn_in,
            seed,
        })
    }
}

enum WalkerState {
    /// Doubling map: sliding 64-bit window over the binary stream.
    Shift { window: u64, bits: BitStream },
    /// Intermittent family: plain f64 iteration.
    Smooth { gamma: f64, x: f64 },
    /// Skew product: base-`d` digit ring for the circle coordinate,
    /// f64 for the fiber.
    Skew {
        map: VianaMap,
        digits: Vec<u32>,
        head: usize,
        x: f64,
        bits: BitStream,
    },
}

/// A single orbit of the invariant dynamics, deterministically seeded.
pub(crate) struct OrbitWalker {
    state: WalkerState,
}

impl OrbitWalker {
    /// Start the orbit for sample `index`: an independent uniform draw
    /// advanced through `burn_in` steps.
    pub fn new(map: &MapSystem, seed: u64, index: u64, burn_in: u64) -> Self {
        let state = match map {
            MapSystem::Doubling => {
                let mut bits = BitStream::new(substream(seed, index));
                // Skipping bits advances the exact binary shift.
                bits.skip_bits(burn_in);
                let window = bits.next_bits(64);
                WalkerState::Shift { window, bits }
            }
            MapSystem::IntermittentStretched { gamma } => {
                let mut rng = substream(seed, index);
                let mut x = unit_f64(&mut rng);
                for _ in 0..burn_in {
                    x = maps::intermittent_step(*gamma, x);
                }
                WalkerState::Smooth { gamma: *gamma, x }
            }
            MapSystem::Viana(v) => {
                let mut bits = BitStream::new(substream(seed, index));
                let digit_width = 32 - (v.degree() - 1).leading_zeros();
                let ring_len = 53u32.div_ceil(digit_width);
                let mut digits = Vec::with_capacity(ring_len as usize);
                for _ in 0..ring_len {
                    digits.push(draw_digit(&mut bits, v.degree(), digit_width));
                }
                let (lo, hi) = v.fiber();
                let u = bits.next_bits(53) as f64 * TWO_NEG53;
                let x = lo + u * (hi - lo);
                let mut w = WalkerState::Skew {
                    map: *v,
                    digits,
                    head: 0,
                    x,
                    bits,
                };
                for _ in 0..burn_in {
                    step_state(&mut w);
                }
                w
            }
        };
        Self { state }
    }

    /// Current phase-space point (53-bit truncation for shift states).
    pub fn point(&self) -> Point {
        match &self.state {
            WalkerState::Shift { window, .. } => Point::Interval((window >> 11) as f64 * TWO_NEG53),
            WalkerState::Smooth { x, .. } => Point::Interval(*x),
            WalkerState::Skew {
                digits,
                head,
                x,
                map,
                ..
            } => Point::Cylinder {
                s: ring_value(digits, *head, map.degree()),
                x: *x,
            },
        }
    }

    pub fn step(&mut self) {
        step_state(&mut self.state);
    }
}

fn step_state(state: &mut WalkerState) {
    match state {
        WalkerState::Shift { window, bits } => {
            *window = (*window << 1) | bits.next_bits(1);
        }
        WalkerState::Smooth { gamma, x } => {
            *x = maps::intermittent_step(*gamma, *x);
        }
        WalkerState::Skew {
            map,
            digits,
            head,
            x,
            bits,
        } => {
            let s = ring_value(digits, *head, map.degree());
            *x = map.a_of(s) - *x * *x;
            let digit_width = 32 - (map.degree() - 1).leading_zeros();
            digits[*head] = draw_digit(bits, map.degree(), digit_width);
            *head = (*head + 1) % digits.len();
        }
    }
}

/// Uniform digit in `0..d` by rejection on `digit_width`-bit reads.
#[inline]
fn draw_digit(bits: &mut BitStream, d: u32, digit_width: u32) -> u32 {
    loop {
        let v = bits.next_bits(digit_width) as u32;
        if v < d {
            return v;
        }
    }
}

/// Value of the digit ring as a base-`d` fraction (Horner, oldest digit
/// most significant). Recomputed from scratch each step so no rounding
/// drift accumulates.
#[inline]
fn ring_value(digits: &[u32], head: usize, d: u32) -> f64 {
    let inv_d = 1.0 / d as f64;
    let mut s = 0.0;
    let n = digits.len();
    for j in (0..n).rev() {
        s = (s + digits[(head + j) % n] as f64) * inv_d;
    }
    s
}

fn map_for_each_sample<T: Send>(
    spec: &SampleSpec,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        (0..spec.samples).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..spec.samples).map(f).collect()
    }
}

/// Draw `spec.samples` approximately invariant-distributed points: each
/// is the `burn_in`-th iterate of an independent uniform draw on the
/// domain, deterministic in `(seed, index)`.
pub fn sample_invariant(map: &MapSystem, spec: &SampleSpec) -> Result<Vec<Point>> {
    map_for_each_sample(spec, |i| {
        Ok(OrbitWalker::new(map, spec.seed, i, spec.burn_in).point())
    })
}

/// Birkhoff sums `S_n` of the centered observable for every sample, at
/// each requested `n` (strictly increasing). Row `j` of the result holds
/// the sums at `ns[j]`; prefixes are shared along each orbit, so the row
/// for `n` is bit-identical to a standalone call with that `n`.
pub fn birkhoff_sums_grid(
    map: &MapSystem,
    obs: &Observable,
    ns: &[u64],
    spec: &SampleSpec,
) -> Result<Vec<Vec<f64>>> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::InvalidSampleSpec(
            "ns must be strictly increasing and positive",
        ));
    }
    let per_sample = map_for_each_sample(spec, |i| {
        let mut walker = OrbitWalker::new(map, spec.seed, i, spec.burn_in);
        let mut acc = NeumaierSum::new();
        let mut k = 0u64;
        let mut out = Vec::with_capacity(ns.len());
        for &n in ns {
            while k < n {
                acc.add(obs.eval(walker.point())?);
                walker.step();
                k += 1;
            }
            out.push(acc.total());
        }
        Ok(out)
    })?;
    let mut grid = alloc::vec![Vec::with_capacity(per_sample.len()); ns.len()];
    for row in per_sample {
        for (j, v) in row.into_iter().enumerate() {
            grid[j].push(v);
        }
    }
    Ok(grid)
}

/// Birkhoff sums of the observable over `n` steps for every sample.
pub fn birkhoff_sums(
    map: &MapSystem,
    obs: &Observable,
    n: u64,
    spec: &SampleSpec,
) -> Result<Vec<f64>> {
    Ok(birkhoff_sums_grid(map, obs, &[n], spec)?.pop().unwrap())
}

/// Monte Carlo estimate of `mu(|S_n / n| > epsilon)` with a Wilson 95%
/// interval.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LdEstimate {
    pub n: u64,
    pub epsilon: f64,
    pub p_hat: f64,
    pub exceed_count: u64,
    pub samples: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub map_id: String,
    pub obs_id: String,
}

impl LdEstimate {
    /// True when `p_hat = 0` was observed with fewer samples than the
    /// expected bound calls for (fewer than `10 / bound`).
    pub fn insufficient_for(&self, expected_bound: f64) -> bool {
        self.p_hat == 0.0 && (self.samples as f64) < 10.0 / expected_bound
    }
}

/// Wilson 95% score interval for `successes` out of `trials`. The
/// interval stays informative at the boundary counts (0 and `trials`).
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * math::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Assemble an LD estimate from precomputed Birkhoff sums.
pub fn ld_from_sums(
    sums: &[f64],
    n: u64,
    epsilon: f64,
    spec: &SampleSpec,
    map_id: String,
    obs_id: String,
) -> LdEstimate {
    debug_assert_eq!(sums.len() as u64, spec.samples);
    let exceed = sums
        .iter()
        .filter(|&&s| math::abs(s) / n as f64 > epsilon)
        .count() as u64;
    let p_hat = exceed as f64 / spec.samples as f64;
    let (ci_low, ci_high) = wilson_interval(exceed, spec.samples);
    LdEstimate {
        n,
        epsilon,
        p_hat,
        exceed_count: exceed,
        samples: spec.samples,
        ci_low,
        ci_high,
        seed: spec.seed,
        map_id,
        obs_id,
    }
}

/// Estimate `mu(|S_n / n| > epsilon)` by orbit sampling. `obs` must be
/// centered.
pub fn ld_probability(
    map: &MapSystem,
    obs: &Observable,
    n: u64,
    epsilon: f64,
    spec: &SampleSpec,
) -> Result<LdEstimate> {
    if n == 0 {
        return Err(Error::InvalidSampleSpec("n must be >= 1"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: "must be positive",
            value: epsilon,
        });
    }
    let sums = birkhoff_sums(map, obs, n, spec)?;
    Ok(ld_from_sums(&sums, n, epsilon, spec, map.id(), obs.id()))
}

/// LD estimates over an `(n, epsilon)` grid, sharing one orbit per
/// sample across all `n` (bit-identical to cell-by-cell calls).
pub fn ld_grid(
    map: &MapSystem,
    obs: &Observable,
    ns: &[u64],
    epsilons: &[f64],
    spec: &SampleSpec,
) -> Result<Vec<LdEstimate>> {
    let grid = birkhoff_sums_grid(map, obs, ns, spec)?;
    let mut out = Vec::with_capacity(ns.len() * epsilons.len());
    for (j, &n) in ns.iter().enumerate() {
        for &eps in epsilons {
            out.push(ld_from_sums(&grid[j], n, eps, spec, map.id(), obs.id()));
        }
    }
    Ok(out)
}

/// Sample estimate of `|| S_n ||_{L^q}` with a jackknife standard error.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MomentEstimate {
    pub q: f64,
    pub n: u64,
    pub value: f64,
    pub jackknife_se: f64,
    pub samples: u64,
    pub seed: u64,
}

/// `(mean |S|^q)^{1/q}` over precomputed sums, with leave-one-out
/// jackknife uncertainty.
pub fn moment_from_sums(sums: &[f64], q: f64, n: u64, spec: &SampleSpec) -> MomentEstimate {
    let m = sums.len();
    let powers: Vec<f64> = sums.iter().map(|&s| math::powf(math::abs(s), q)).collect();
    let total = math::compensated_sum(&powers);
    let value = math::powf(total / m as f64, 1.0 / q);

    let mut loo = NeumaierSum::new();
    let mut loo_sq = NeumaierSum::new();
    for &p in &powers {
        let v = math::powf((total - p) / (m as f64 - 1.0), 1.0 / q);
        loo.add(v);
        loo_sq.add(v * v);
    }
    let mean_loo = loo.total() / m as f64;
    let var_loo = (loo_sq.total() / m as f64 - mean_loo * mean_loo).max(0.0);
    let jackknife_se = math::sqrt((m as f64 - 1.0) * var_loo);

    MomentEstimate {
        q,
        n,
        value,
        jackknife_se,
        samples: spec.samples,
        seed: spec.seed,
    }
}

/// Estimate the `L^q` norm of the Birkhoff sum at time `n`.
pub fn empirical_moment(
    map: &MapSystem,
    obs: &Observable,
    n: u64,
    q: f64,
    spec: &SampleSpec,
) -> Result<MomentEstimate> {
    if !(q > 0.0) {
        return Err(Error::InvalidParameter {
            name: "q",
            reason: "must be positive",
            value: q,
        });
    }
    let sums = birkhoff_sums(map, obs, n, spec)?;
    Ok(moment_from_sums(&sums, q, n, spec))
}

/// Empirical moments over a `(q, n)` grid, sharing sums across `q`.
#[derive(Debug, Clone, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MomentGrid {
    pub entries: Vec<MomentEstimate>,
}

pub fn moment_grid(
    map: &MapSystem,
    obs: &Observable,
    qs: &[f64],
    ns: &[u64],
    spec: &SampleSpec,
) -> Result<MomentGrid> {
    if qs.iter().any(|&q| q <= 0.0) {
        return Err(Error::InvalidParameter {
            name: "q",
            reason: "must be positive",
            value: *qs.iter().find(|&&q| q <= 0.0).unwrap(),
        });
    }
    let grid = birkhoff_sums_grid(map, obs, ns, spec)?;
    let mut entries = Vec::with_capacity(qs.len() * ns.len());
    for (j, &n) in ns.iter().enumerate() {
        for &q in qs {
            entries.push(moment_from_sums(&grid[j], q, n, spec));
        }
    }
    Ok(MomentGrid { entries })
}

/// Monte Carlo estimate of the exponential moment
/// `integral exp(tau' n^{-theta'} |S_n|^{2 theta'}) dmu`.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ExpMomentEstimate {
    pub n: u64,
    pub tau_p: f64,
    pub theta_p: f64,
    pub value: f64,
    /// Standard error of the sample mean.
    pub se: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Exponential moment from precomputed sums. `sup_bound` must bound
/// `sup |phi_bar|`; the call is rejected as mis-calibrated when the
/// worst-case integrand exceeds 1e300.
pub fn exp_moment_from_sums(
    sums: &[f64],
    n: u64,
    tau_p: f64,
    theta_p: f64,
    sup_bound: f64,
    spec: &SampleSpec,
) -> Result<ExpMomentEstimate> {
    if !(tau_p > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau_p",
            reason: "must be positive",
            value: tau_p,
        });
    }
    if !(theta_p > 0.0 && theta_p <= 0.5) {
        return Err(Error::InvalidParameter {
            name: "theta_p",
            reason: "must lie in (0, 1/2]",
            value: theta_p,
        });
    }
    let nf = n as f64;
    let worst = tau_p * math::powf(sup_bound, 2.0 * theta_p) * math::powf(nf, theta_p);
    if worst > 690.77 {
        return Err(Error::Miscalibrated { exponent: worst });
    }
    let scale = tau_p * math::powf(nf, -theta_p);
    let mut acc = NeumaierSum::new();
    let mut acc_sq = NeumaierSum::new();
    for &s in sums {
        let t = math::exp(scale * math::powf(math::abs(s), 2.0 * theta_p));
        acc.add(t);
        acc_sq.add(t * t);
    }
    let m = sums.len() as f64;
    let mean = acc.total() / m;
    let var = (acc_sq.total() / m - mean * mean).max(0.0);
    Ok(ExpMomentEstimate {
        n,
        tau_p,
        theta_p,
        value: mean,
        se: math::sqrt(var / m),
        samples: spec.samples,
        seed: spec.seed,
    })
}

/// Estimate the exponential moment at time `n`.
pub fn exp_moment(
    map: &MapSystem,
    obs: &Observable,
    n: u64,
    tau_p: f64,
    theta_p: f64,
    spec: &SampleSpec,
) -> Result<ExpMomentEstimate> {
    let sums = birkhoff_sums(map, obs, n, spec)?;
    exp_moment_from_sums(&sums, n, tau_p, theta_p, obs.sup_norm(), spec)
}
