//! Stage implementations behind the `decay`, `ld` and `verify`
//! subcommands.

use std::path::Path;

use anyhow::{anyhow, bail, Result};
use ldlab_core::fit::{fit_ld_exponent, fit_stretched, FitWindow, StretchedExpFit};
use ldlab_core::gordin::{self, DecayEnvelope};
use ldlab_core::maps::MapSystem;
use ldlab_core::montecarlo::{self, exp_moment_from_sums, ld_from_sums, LdEstimate, SampleSpec};
use ldlab_core::observable::{center, CenterMethod, Centering, Observable};
use ldlab_core::theory::{self, TheoremConstants};
use ldlab_core::ulam::{build_ulam, decay_curve, DecayCurve, UlamOperator};
use serde_json::json;

use crate::config::Config;
use crate::manifest::{write_artifact, Check, StageOutput};

/// A decay curve collapses to rounding noise when its first value sits
/// this far below the observable's grid sup norm.
const NOISE_FLOOR_REL: f64 = 1e-10;

pub fn centered_observable(cfg: &Config, map: &MapSystem) -> Result<(Observable, Centering)> {
    let raw = cfg.observable()?;
    let method = match cfg.get_str("center", "method")? {
        "ulam" => CenterMethod::UlamDensity {
            bins: cfg.get_usize("center", "bins")?,
        },
        "long_orbit" => CenterMethod::LongOrbit {
            budget: cfg.get_u64("center", "budget")?,
            seed: cfg.seed()?,
        },
        other => bail!("[center] method: unknown method {other:?}"),
    };
    let centering = center(map, &raw, method)?;
    Ok((centering.observable, centering))
}

fn centering_json(c: &Centering) -> serde_json::Value {
    json!({
        "offset": c.observable.offset,
        "mean_estimate": c.mean,
        "uncertainty": c.uncertainty,
    })
}

fn fit_json(f: &StretchedExpFit) -> serde_json::Value {
    json!({
        "c": f.c,
        "tau": f.tau,
        "theta": f.theta,
        "r_squared": f.r_squared,
        "theta_ci": [f.theta_ci.0, f.theta_ci.1],
        "window": [f.window.0, f.window.1],
        "points_used": f.points_used,
        "notes": f.notes,
    })
}

fn fit_window(cfg: &Config) -> Result<FitWindow> {
    let n_min = cfg.get_u64("fit", "window_min")?;
    let n_max = cfg.get_u64("fit", "window_max")?;
    Ok(FitWindow::new(
        n_min,
        if n_max == 0 { u64::MAX } else { n_max },
    ))
}

fn decay_csv(curve: &DecayCurve) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "a_n", "semantics", "k", "map_id"])?;
    for &(n, a) in &curve.points {
        w.write_record([
            n.to_string(),
            format!("{a:?}"),
            curve.semantics.as_str().to_string(),
            curve.bins.to_string(),
            curve.map_id.clone(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn matrix_dump(op: &UlamOperator) -> Vec<u8> {
    let mut out = String::new();
    for (row, col, weight) in op.entries() {
        out.push_str(&format!("{row} {col} {weight:?}\n"));
    }
    out.into_bytes()
}

fn density_json(op: &UlamOperator) -> serde_json::Value {
    json!({
        "bins": op.bins(),
        "power_iterations": op.density_iterations(),
        "residual_l1": op.density_residual(),
        "masked_bins": op.masked_bins().len(),
    })
}

/// Build the operator, measure the decay curve, fit it, and optionally
/// re-run at doubled resolution for the stability diagnostic.
pub fn decay_stage(cfg: &Config, run_dir: &Path) -> Result<StageOutput> {
    let map = cfg.map_system()?;
    if !map.is_one_dimensional() {
        bail!("decay requires a 1D map; the skew product has no Ulam discretization here");
    }
    let (obs, centering) = centered_observable(cfg, &map)?;
    let bins = cfg.get_usize("ulam", "bins")?;
    let n_max = cfg.get_usize("ulam", "n_max")?;
    let op = build_ulam(&map, bins)?;
    let curve = decay_curve(&op, &obs, n_max)?;

    let mut out = StageOutput::default();
    out.insert("map_id", map.id());
    out.insert("obs_id", obs.id());
    out.insert("centering", centering_json(&centering));
    out.insert("density", density_json(&op));
    out.insert(
        "curve",
        json!({
            "points": curve.points.len(),
            "truncated": curve.truncated,
            "a_first": curve.points.first().map(|&(_, a)| a),
            "a_last": curve.points.last().map(|&(_, a)| a),
        }),
    );
    out.artifacts
        .push(write_artifact(run_dir, "decay.csv", &decay_csv(&curve)?)?);

    if cfg.get_bool("ulam", "dump_matrix")? {
        out.artifacts
            .push(write_artifact(run_dir, "matrix.txt", &matrix_dump(&op))?);
    }

    let grid_sup = {
        let phi = op.discretize(&obs)?;
        op.sup(&phi)
    };
    let floor = NOISE_FLOOR_REL * grid_sup;
    let at_noise_floor = curve
        .points
        .first()
        .map(|&(_, a)| a < floor)
        .unwrap_or(true);
    out.insert("noise_floor", at_noise_floor);
    if at_noise_floor {
        out.insert(
            "note",
            "curve collapses at n=1 (transfer operator annihilates the observable); fit skipped",
        );
        return Ok(out);
    }

    let window = fit_window(cfg)?;
    let fit = fit_stretched(&curve.points, window)?;
    out.insert("fit", fit_json(&fit));

    if cfg.get_bool("ulam", "refine_check")? {
        let op2 = build_ulam(&map, 2 * bins)?;
        let curve2 = decay_curve(&op2, &obs, n_max)?;
        let fit2 = fit_stretched(&curve2.points, window)?;
        let band = fit.theta_ci.1 - fit.theta_ci.0;
        let shift = (fit.theta - fit2.theta).abs();
        out.insert(
            "refinement_stability",
            json!({
                "bins": [bins, 2 * bins],
                "theta": [fit.theta, fit2.theta],
                "shift": shift,
                "theta_band": band,
                "stable": shift <= band,
            }),
        );
        out.artifacts.push(write_artifact(
            run_dir,
            "decay_refined.csv",
            &decay_csv(&curve2)?,
        )?);
    }
    Ok(out)
}

fn ld_csv(estimates: &[LdEstimate]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "map_id", "obs_id", "n", "epsilon", "estimate", "ci_low", "ci_high", "samples", "seed",
    ])?;
    for e in estimates {
        w.write_record([
            e.map_id.clone(),
            e.obs_id.clone(),
            e.n.to_string(),
            format!("{:?}", e.epsilon),
            format!("{:?}", e.p_hat),
            format!("{:?}", e.ci_low),
            format!("{:?}", e.ci_high),
            e.samples.to_string(),
            e.seed.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

/// Large-deviation grid plus fitted empirical exponents and the
/// side-by-side predictions.
pub fn ld_stage(cfg: &Config, run_dir: &Path) -> Result<StageOutput> {
    let map = cfg.map_system()?;
    let (obs, centering) = centered_observable(cfg, &map)?;
    let ns = cfg.get_list_u64("ld", "ns")?;
    let epsilons = cfg.get_list_f64("ld", "epsilons")?;
    let spec = SampleSpec::new(
        cfg.get_u64("ld", "samples")?,
        cfg.get_u64("ld", "burn_in")?,
        cfg.seed()?,
    )?;
    let estimates = montecarlo::ld_grid(&map, &obs, &ns, &epsilons, &spec)?;

    let theta = cfg.get_f64("theory", "theta")?;
    let theta_new =
        theory::predicted_exponent(theta).map_err(|e| anyhow!("[theory] theta: {e}"))?;
    let theta_old = theory::predicted_exponent_old(theta)?;

    let mut out = StageOutput::default();
    out.insert("map_id", map.id());
    out.insert("obs_id", obs.id());
    out.insert("centering", centering_json(&centering));
    out.artifacts
        .push(write_artifact(run_dir, "ld.csv", &ld_csv(&estimates)?)?);

    let window = fit_window(cfg)?;
    let mut table = Vec::new();
    let mut expo_csv = csv::Writer::from_writer(Vec::new());
    expo_csv.write_record([
        "epsilon",
        "theta_emp",
        "theta_predicted",
        "theta_predicted_old",
        "r_squared",
        "degenerate",
    ])?;
    for &eps in &epsilons {
        let column: Vec<LdEstimate> = estimates
            .iter()
            .filter(|e| e.epsilon == eps)
            .cloned()
            .collect();
        let degenerate = column.iter().all(|e| e.p_hat == 0.0);
        let fitted = if degenerate {
            None
        } else {
            fit_ld_exponent(&column, window).ok()
        };
        if degenerate {
            log::warn!("epsilon {eps}: all-zero LD column (epsilon above sup |phi|?)");
        }
        let (emp, r2) = fitted.as_ref().map(|f| (f.theta, f.r_squared)).unzip();
        expo_csv.write_record([
            format!("{eps:?}"),
            emp.map(|t| format!("{t:?}")).unwrap_or_default(),
            format!("{theta_new:?}"),
            format!("{theta_old:?}"),
            r2.map(|r| format!("{r:?}")).unwrap_or_default(),
            degenerate.to_string(),
        ])?;
        table.push(json!({
            "epsilon": eps,
            "theta_emp": emp,
            "theta_predicted": theta_new,
            "theta_predicted_old": theta_old,
            "fit": fitted.as_ref().map(fit_json),
            "degenerate": degenerate,
        }));
    }
    out.artifacts.push(write_artifact(
        run_dir,
        "ld_exponents.csv",
        &expo_csv.into_inner()?,
    )?);
    out.insert("exponents", table);
    out.insert("assumed_theta", theta);
    Ok(out)
}

fn moments_csv(grid: &montecarlo::MomentGrid, map_id: &str, obs_id: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "map_id", "obs_id", "n", "q", "estimate", "ci_low", "ci_high", "samples", "seed",
    ])?;
    for e in &grid.entries {
        w.write_record([
            map_id.to_string(),
            obs_id.to_string(),
            e.n.to_string(),
            format!("{:?}", e.q),
            format!("{:?}", e.value),
            format!("{:?}", e.value - e.jackknife_se),
            format!("{:?}", e.value + e.jackknife_se),
            e.samples.to_string(),
            e.seed.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

/// Envelope plus the measured curve it was fitted to (when fitted) and
/// a provenance record for the manifest.
type EnvelopeSource = (DecayEnvelope, Option<Vec<(u64, f64)>>, serde_json::Value);

/// The decay envelope for verification: fitted from a fresh decay run,
/// or synthetic from config.
pub fn resolve_envelope(cfg: &Config, map: &MapSystem, obs: &Observable) -> Result<EnvelopeSource> {
    match cfg.get_str("gordin", "envelope")? {
        "synthetic" => {
            let env = DecayEnvelope::new(
                cfg.get_f64("gordin", "synthetic_c")?,
                cfg.get_f64("gordin", "synthetic_tau")?,
                cfg.get_f64("gordin", "synthetic_theta")?,
            )?;
            let info =
                json!({"source": "synthetic", "c": env.c, "tau": env.tau, "theta": env.theta});
            Ok((env, None, info))
        }
        "fit" => {
            if !map.is_one_dimensional() {
                bail!(
                    "missing dependency: decay fit requires a 1D map (run_decay); \
                     set [gordin] envelope = synthetic for the skew product"
                );
            }
            let bins = cfg.get_usize("ulam", "bins")?;
            let op = build_ulam(map, bins)?;
            let curve = decay_curve(&op, obs, cfg.get_usize("ulam", "n_max")?)?;
            let fit = fit_stretched(&curve.points, fit_window(cfg)?)?;
            let env = DecayEnvelope::from(&fit);
            let info = json!({"source": "fit", "fit": fit_json(&fit)});
            Ok((env, Some(curve.points), info))
        }
        other => bail!("[gordin] envelope: expected `fit` or `synthetic`, got {other:?}"),
    }
}

/// The full proof-chain verification: moment calibration, moment
/// domination, Gordin residual, exponential moments, series bound,
/// pathwise Markov, and theorem-bound domination.
pub fn verify_stage(cfg: &Config, run_dir: &Path) -> Result<StageOutput> {
    let map = cfg.map_system()?;
    let (obs, centering) = centered_observable(cfg, &map)?;
    let theta = cfg.get_f64("theory", "theta")?;
    let seed = cfg.seed()?;

    let mut out = StageOutput::default();
    out.insert("map_id", map.id());
    out.insert("obs_id", obs.id());
    out.insert("centering", centering_json(&centering));

    // Stage 1: decay envelope.
    let (envelope, measured_curve, env_info) = resolve_envelope(cfg, &map, &obs)?;
    out.insert("envelope", env_info);

    // Stage 2: moment grid and K calibration.
    let qs = cfg.get_list_f64("moments", "qs")?;
    let m_ns = cfg.get_list_u64("moments", "ns")?;
    let m_spec = SampleSpec::new(
        cfg.get_u64("moments", "samples")?,
        cfg.get_u64("moments", "burn_in")?,
        seed,
    )?;
    let grid = montecarlo::moment_grid(&map, &obs, &qs, &m_ns, &m_spec)?;
    let sup_phi = obs.sup_norm();
    let c_phi = envelope.c;
    let c_tilde = c_phi.max(sup_phi);
    let k_const = theory::calibrate_k(&grid, theta, c_tilde)?;
    out.artifacts.push(write_artifact(
        run_dir,
        "moments.csv",
        &moments_csv(&grid, &map.id(), &obs.id())?,
    )?);

    // Stage 3: moment domination (grid plus a held-out point).
    let held_q = cfg.get_f64("moments", "held_out_q")?;
    let held_n = cfg.get_u64("moments", "held_out_n")?;
    let held = montecarlo::empirical_moment(&map, &obs, held_n, held_q, &m_spec)?;
    let mut worst_margin = f64::INFINITY;
    let mut dominated = true;
    for e in &grid.entries {
        let bound = theory::moment_bound(k_const, c_tilde, e.q, theta, e.n);
        dominated &= bound >= e.value;
        worst_margin = worst_margin.min(bound / e.value.max(1e-300));
    }
    let held_bound = theory::moment_bound(k_const, c_tilde, held_q, theta, held_n);
    dominated &= held_bound >= held.value;
    out.checks.push(Check::new(
        "moment_domination",
        dominated,
        format!(
            "K = {k_const:.6}, worst grid bound/value = {worst_margin:.3}, held-out (q={held_q}, n={held_n}): bound {held_bound:.3} vs {:.3}",
            held.value
        ),
    ));

    // CLT scaling of the second moments across the n grid.
    let ratios: Vec<f64> = grid
        .entries
        .iter()
        .filter(|e| e.q == 2.0)
        .map(|e| e.value / (e.n as f64).sqrt())
        .collect();
    if ratios.len() >= 2 {
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        out.checks.push(Check::new(
            "clt_scaling",
            max / min <= 2.0,
            format!(
                "||S_n||_2 / sqrt(n) spread {:.4} (max/min over n grid)",
                max / min
            ),
        ));
    }

    let mut consts = TheoremConstants::calibrated(theta, envelope.tau, c_phi, sup_phi, k_const)?;
    let tau_scale = cfg.get_f64("theory", "tau_prime_scale")?;
    if tau_scale != 1.0 {
        consts.tau_prime *= tau_scale;
        out.insert("tau_prime_scale", tau_scale);
    }
    out.insert("constants", serde_json::to_value(consts)?);
    out.insert(
        "calibration",
        json!({"k_const": k_const, "c_tilde": c_tilde, "samples": m_spec.samples}),
    );

    // Stage 4: series bound at the calibrated tau' is exactly 2; a
    // mis-calibrated tau' surfaces here as a divergent series.
    match theory::exp_series_bound(
        consts.theta_prime,
        consts.k_const,
        consts.c_tilde,
        consts.tau_prime,
    ) {
        Ok(series) => out.checks.push(Check::new(
            "exp_series_bound",
            series == 2.0,
            format!("geometric series value {series} (must be exactly 2)"),
        )),
        Err(e) => out
            .checks
            .push(Check::new("exp_series_bound", false, e.to_string())),
    }

    // Stage 5: Gordin residual (1D maps only).
    if map.is_one_dimensional() {
        let bins = cfg.get_usize("ulam", "bins")?;
        let op = build_ulam(&map, bins)?;
        let tail_target = cfg.get_f64("gordin", "tail_target")?;
        let cap = cfg.get_usize("gordin", "cap")?;
        let (trunc_n, tail) = gordin::select_truncation(&envelope, tail_target, cap);
        let dec = gordin::decompose(&op, &obs, trunc_n, &envelope)?;
        let resid = gordin::residual(&dec, &op)?;
        let allowance = tail + 10.0 / bins as f64;
        out.checks.push(Check::new(
            "gordin_residual",
            resid <= allowance,
            format!("||L phi_hat||_1 = {resid:.3e} <= tail {tail:.3e} + 10/k = {allowance:.3e} at N = {trunc_n}"),
        ));
        let chi_norms: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&q| (q, gordin::chi_norm(&dec, q, &op)))
            .collect();
        if let Some(points) = &measured_curve {
            if gordin::envelope_dominates(points, &envelope) {
                let ok = chi_norms.iter().all(|&(q, v)| {
                    v <= theory::chi_norm_bound(c_tilde, q, envelope.tau, envelope.theta)
                });
                out.checks.push(Check::new(
                    "chi_norm_bound",
                    ok,
                    "fitted envelope dominates the measured curve; chi norms under the integral bound",
                ));
            }
        }
        let mut report = format!(
            "martingale-coboundary decomposition\nN = {trunc_n}\ntail_bound = {tail:.6e}\n"
        );
        for &(q, v) in &chi_norms {
            report.push_str(&format!("chi_norm_q{q} = {v:.6e}\n"));
        }
        report.push_str(&format!("residual_l1 = {resid:.6e}\n"));
        out.artifacts
            .push(write_artifact(run_dir, "gordin.txt", report.as_bytes())?);
        if cfg.get_bool("gordin", "dump_grid")? {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["bin", "center", "chi", "phi_hat"])?;
            for i in 0..op.bins() {
                w.write_record([
                    i.to_string(),
                    format!("{:?}", op.center(i)),
                    format!("{:?}", dec.chi[i]),
                    format!("{:?}", dec.phi_hat[i]),
                ])?;
            }
            out.artifacts.push(write_artifact(
                run_dir,
                "gordin_grid.csv",
                &w.into_inner()?,
            )?);
        }
        out.insert(
            "gordin",
            json!({
                "truncation_n": trunc_n,
                "tail_bound": tail,
                "residual_l1": resid,
                "chi_norms": chi_norms,
            }),
        );
    } else {
        out.insert(
            "gordin",
            json!({"skipped": "no Ulam discretization for the skew product"}),
        );
    }

    // Stage 6: exponential moments at the calibrated (tau', theta').
    let e_ns = cfg.get_list_u64("expmoment", "ns")?;
    let e_spec = SampleSpec::new(
        cfg.get_u64("expmoment", "samples")?,
        cfg.get_u64("expmoment", "burn_in")?,
        seed,
    )?;
    let mut exp_rows = Vec::new();
    for &n in &e_ns {
        let est =
            montecarlo::exp_moment(&map, &obs, n, consts.tau_prime, consts.theta_prime, &e_spec)?;
        let ci = 1.959963984540054 * est.se;
        let threshold = 2.0 + 3.0 * ci;
        out.checks.push(Check::new(
            format!("exp_moment_n{n}"),
            est.value <= threshold,
            format!(
                "E exp(tau' n^-theta' |S_n|^2theta') = {:.6} <= 2 + 3 CI = {threshold:.6}",
                est.value
            ),
        ));
        exp_rows.push(json!({"n": n, "value": est.value, "se": est.se}));
    }
    out.insert("exp_moments", exp_rows);

    // Stage 7: LD grid; exponential moments on the SAME sample sets give
    // the pathwise Markov identity, and the theorem bound must dominate
    // the upper confidence limits.
    let ns = cfg.get_list_u64("ld", "ns")?;
    let epsilons = cfg.get_list_f64("ld", "epsilons")?;
    let ld_spec = SampleSpec::new(
        cfg.get_u64("ld", "samples")?,
        cfg.get_u64("ld", "burn_in")?,
        seed,
    )?;
    let sums_grid = montecarlo::birkhoff_sums_grid(&map, &obs, &ns, &ld_spec)?;
    let mut estimates = Vec::new();
    let mut markov_ok = true;
    let mut markov_detail = String::new();
    let mut dominated = true;
    let mut worst_ratio = 0.0_f64;
    let mut flagged = 0usize;
    for (j, &n) in ns.iter().enumerate() {
        let sums = &sums_grid[j];
        let em = exp_moment_from_sums(
            sums,
            n,
            consts.tau_prime,
            consts.theta_prime,
            sup_phi,
            &ld_spec,
        )?;
        for &eps in &epsilons {
            let est = ld_from_sums(sums, n, eps, &ld_spec, map.id(), obs.id());
            let pathwise = em.value
                * (-consts.tau_prime
                    * eps.powf(2.0 * consts.theta_prime)
                    * (n as f64).powf(consts.theta_prime))
                .exp();
            if est.p_hat > pathwise {
                markov_ok = false;
                markov_detail =
                    format!("violated at (n={n}, eps={eps}): {} > {pathwise}", est.p_hat);
            }
            let bound = theory::theorem_bound(n, eps, &consts);
            if est.insufficient_for(bound) {
                flagged += 1;
            }
            dominated &= est.ci_high <= bound;
            worst_ratio = worst_ratio.max(est.ci_high / bound);
            estimates.push(est);
        }
    }
    if markov_ok {
        markov_detail = format!(
            "p_hat <= exp_moment * e^-tau' eps^2theta' n^theta' on all {} cells",
            estimates.len()
        );
    }
    out.checks
        .push(Check::new("markov_pathwise", markov_ok, markov_detail));
    out.checks.push(Check::new(
        "theorem_domination",
        dominated,
        format!(
            "max ci_high / bound = {worst_ratio:.4} over {} cells ({flagged} cells flagged insufficient-samples)",
            estimates.len()
        ),
    ));
    out.artifacts
        .push(write_artifact(run_dir, "ld.csv", &ld_csv(&estimates)?)?);
    out.insert(
        "ld_summary",
        json!({
            "cells": estimates.len(),
            "worst_ci_high_over_bound": worst_ratio,
            "insufficient_sample_cells": flagged,
        }),
    );

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(extra: &[&str]) -> Config {
        let mut cfg = Config::defaults();
        for e in extra {
            cfg.apply_set(e).unwrap();
        }
        cfg
    }

    #[test]
    fn decay_stage_flags_noise_floor_for_doubling_cosine() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&["ulam.bins=256", "ulam.n_max=10", "center.bins=256"]);
        let out = decay_stage(&cfg, dir.path()).unwrap();
        assert_eq!(out.results["noise_floor"], serde_json::Value::Bool(true));
        assert!(dir.path().join("decay.csv").exists());
    }

    #[test]
    fn decay_stage_fits_intermittent_curve() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&[
            "map.kind=intermittent",
            "map.gamma=0.5",
            "observable.kind=holder_bump",
            "ulam.bins=256",
            "ulam.n_max=60",
            "ulam.dump_matrix=true",
            "center.bins=256",
        ]);
        let out = decay_stage(&cfg, dir.path()).unwrap();
        assert_eq!(out.results["noise_floor"], serde_json::Value::Bool(false));
        assert!(out.results.contains_key("fit"));
        assert!(dir.path().join("matrix.txt").exists());
    }

    #[test]
    fn decay_stage_rejects_viana() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&[
            "map.kind=viana",
            "center.method=long_orbit",
            "center.budget=2000",
        ]);
        assert!(decay_stage(&cfg, dir.path()).is_err());
    }

    #[test]
    fn ld_stage_writes_estimates_and_comparisons() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&[
            "ld.ns=8,16,32,64,128,256,512,1024",
            "ld.samples=2000",
            "center.bins=256",
        ]);
        let out = ld_stage(&cfg, dir.path()).unwrap();
        assert!(dir.path().join("ld.csv").exists());
        assert!(dir.path().join("ld_exponents.csv").exists());
        let table = out.results["exponents"].as_array().unwrap();
        assert_eq!(table.len(), 3);
        for row in table {
            assert_eq!(row["theta_predicted"], serde_json::json!(0.5));
            assert_eq!(row["theta_predicted_old"], serde_json::json!(1.0 / 3.0));
        }
    }

    #[test]
    fn ld_stage_on_viana_reports_one_third_prediction() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&[
            "map.kind=viana",
            "observable.kind=viana_fiber",
            "center.method=long_orbit",
            "center.budget=5000",
            "theory.theta=0.5",
            "ld.ns=8,16,32",
            "ld.epsilons=0.1",
            "ld.samples=500",
        ]);
        let out = ld_stage(&cfg, dir.path()).unwrap();
        let table = out.results["exponents"].as_array().unwrap();
        assert_eq!(table[0]["theta_predicted"], serde_json::json!(1.0 / 3.0));
        assert_eq!(table[0]["theta_predicted_old"], serde_json::json!(0.2));
    }

    #[test]
    fn decay_stage_refinement_check_records_stability() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&[
            "map.kind=intermittent",
            "map.gamma=0.5",
            "observable.kind=holder_bump",
            "ulam.bins=256",
            "ulam.n_max=60",
            "ulam.refine_check=true",
            "center.bins=256",
        ]);
        let out = decay_stage(&cfg, dir.path()).unwrap();
        let stability = &out.results["refinement_stability"];
        assert_eq!(stability["bins"], serde_json::json!([256, 512]));
        assert!(stability["shift"].as_f64().unwrap() >= 0.0);
        assert!(dir.path().join("decay_refined.csv").exists());
    }

    #[test]
    fn ld_stage_flags_degenerate_epsilon() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&[
            "ld.ns=8,16,32,64,128,256,512,1024",
            "ld.epsilons=5.0",
            "ld.samples=500",
            "center.bins=256",
        ]);
        let out = ld_stage(&cfg, dir.path()).unwrap();
        let table = out.results["exponents"].as_array().unwrap();
        assert_eq!(table[0]["degenerate"], serde_json::Value::Bool(true));
    }

    #[test]
    fn verify_stage_small_smoke() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&[
            "gordin.envelope=synthetic",
            "gordin.dump_grid=true",
            "moments.ns=100,400",
            "moments.samples=2000",
            "moments.held_out_n=200",
            "expmoment.ns=10,100",
            "expmoment.samples=2000",
            "ld.ns=16,64",
            "ld.epsilons=0.1,0.2",
            "ld.samples=5000",
            "ulam.bins=256",
            "center.bins=256",
        ]);
        let out = verify_stage(&cfg, dir.path()).unwrap();
        assert!(
            out.checks.iter().all(|c| c.passed),
            "failed: {:?}",
            out.checks
        );
        assert!(dir.path().join("gordin.txt").exists());
        assert!(dir.path().join("gordin_grid.csv").exists());
        assert!(dir.path().join("moments.csv").exists());
    }
}
