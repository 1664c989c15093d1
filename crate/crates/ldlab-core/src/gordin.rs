//! Martingale–coboundary decomposition on the Ulam grid.
//!
//! With `chi_N = sum_{m=1}^{N} L^m phi_bar` and
//! `phi_hat = phi_bar + chi_N - chi_N o T`, the transfer operator
//! annihilates `phi_hat` up to the truncation tail:
//! `L phi_hat = L^{N+1} phi_bar`, so the residual `|| L phi_hat ||_1` is
//! controlled by the decay envelope beyond `N` plus the grid-composition
//! error. The composition `chi o T` is realized by mapping each bin
//! center forward and reading the containing bin, which makes the
//! telescoping identity for Birkhoff sums exact under the bin dynamics.
//!
//! This module is diagnostic: the sampling pipeline does not depend on
//! it.

use alloc::vec::Vec;

use crate::observable::Observable;
use crate::theory;
use crate::ulam::UlamOperator;
use crate::{math, Error, Result};

/// A fitted decay envelope `a_n <= c exp(-tau n^theta)`.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DecayEnvelope {
    pub c: f64,
    pub tau: f64,
    pub theta: f64,
}

impl DecayEnvelope {
    pub fn new(c: f64, tau: f64, theta: f64) -> Result<Self> {
        if !(tau > 0.0) || !(theta > 0.0) {
            return Err(Error::InvalidEnvelope { tau, theta });
        }
        if !(c > 0.0) {
            return Err(Error::InvalidParameter {
                name: "c",
                reason: "must be positive",
                value: c,
            });
        }
        Ok(Self { c, tau, theta })
    }

    /// Envelope value at `n`.
    pub fn at(&self, n: u64) -> f64 {
        self.c * math::exp(-self.tau * math::powf(n as f64, self.theta))
    }

    /// Upper bound on the tail `sum_{m > n} c exp(-tau m^theta)` by
    /// integral comparison:
    /// `c (1/theta) tau^{-1/theta} Gamma(1/theta, tau n^theta)`.
    pub fn tail(&self, n: u64) -> f64 {
        let inv_theta = 1.0 / self.theta;
        let x = self.tau * math::powf(n as f64, self.theta);
        self.c
            * inv_theta
            * math::powf(self.tau, -inv_theta)
            * theory::upper_incomplete_gamma(inv_theta, x)
    }
}

impl From<&crate::fit::StretchedExpFit> for DecayEnvelope {
    fn from(f: &crate::fit::StretchedExpFit) -> Self {
        Self {
            c: f.c,
            tau: f.tau,
            theta: f.theta,
        }
    }
}

/// Whether the envelope dominates every measured point.
pub fn envelope_dominates(points: &[(u64, f64)], env: &DecayEnvelope) -> bool {
    points.iter().all(|&(n, a)| a <= env.at(n))
}

/// The smallest truncation depth `N` (capped) whose certified tail drops
/// below `target`; returns `(N, tail)`.
pub fn select_truncation(env: &DecayEnvelope, target: f64, cap: usize) -> (usize, f64) {
    for n in 1..cap {
        let tail = env.tail(n as u64);
        if tail < target {
            return (n, tail);
        }
    }
    (cap, env.tail(cap as u64))
}

/// The truncated decomposition.
#[derive(Debug, Clone)]
pub struct GordinDecomposition {
    /// `chi_N = sum_{m=1}^{N} L^m phi_bar` on the grid.
    pub chi: Vec<f64>,
    /// `phi_bar + chi - chi o T` on the grid.
    pub phi_hat: Vec<f64>,
    pub truncation_n: usize,
    /// Certified envelope tail beyond the truncation.
    pub tail_bound: f64,
}

/// Compute the decomposition at truncation depth `n` under the given
/// envelope. `obs` must be centered.
pub fn decompose(
    op: &UlamOperator,
    obs: &Observable,
    n: usize,
    envelope: &DecayEnvelope,
) -> Result<GordinDecomposition> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "truncation depth must be >= 1",
            value: 0.0,
        });
    }
    // Re-validate: envelopes can be built literal-field.
    let envelope = DecayEnvelope::new(envelope.c, envelope.tau, envelope.theta)?;

    let k = op.bins();
    let mut phi = op.discretize(obs)?;
    let mean = op.integral_mu(&phi);
    for v in &mut phi {
        *v -= mean;
    }

    let mut chi = alloc::vec![0.0; k];
    let mut current = phi.clone();
    for _ in 0..n {
        current = op.transfer_apply_mu(&current, 1)?;
        for (acc, v) in chi.iter_mut().zip(&current) {
            *acc += v;
        }
    }

    // chi o T by bin lookup of the forward-mapped bin centers.
    let map = op.map();
    let mut phi_hat = alloc::vec![0.0; k];
    for i in 0..k {
        let image = map.apply(crate::maps::Point::Interval(op.center(i)))?;
        let j = op.bin_of(image.coord().expect("1D operator"));
        phi_hat[i] = phi[i] + chi[i] - chi[j];
    }

    Ok(GordinDecomposition {
        chi,
        phi_hat,
        truncation_n: n,
        tail_bound: envelope.tail(n as u64),
    })
}

/// Grid `L^q(mu)` norm of `chi`.
pub fn chi_norm(dec: &GordinDecomposition, q: f64, op: &UlamOperator) -> f64 {
    op.lq_mu(&dec.chi, q)
}

/// Residual `|| L phi_hat ||_{L1(mu)}` of the martingale property.
pub fn residual(dec: &GordinDecomposition, op: &UlamOperator) -> Result<f64> {
    let pushed = op.transfer_apply_mu(&dec.phi_hat, 1)?;
    Ok(op.l1_mu(&pushed))
}
