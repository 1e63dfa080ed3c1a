// SPDX-License-Identifier: Apache-2.0

//! Average run length to false alarm and the choice of thresholds.
//!
//! [`calibrate_threshold`] searches for the global threshold `a` with
//! `E^∞(T(a)) ≈ γ`. Every candidate `a` is scored on the same replications:
//! each replication keeps the upper records of its `G_n` path, so the ARL at
//! any already-reached level is read off the records instead of re-simulated.
//! The ARL-versus-`a` curve is then monotone pathwise and the search is
//! deterministic for a fixed seed.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combiners::{Monitor, SchemeSpec};
use crate::error::{ensure_finite, Error, Result};
use crate::quantile::normal_quantile;
use crate::rng::SeedSpec;
use crate::simulation::{run_replications, PathSource, RecordingRun, StopSummary};
use crate::stream_models::{ChangeScenario, StreamModel};

/// False-alarm constraint `E^∞(T) ≥ γ` and the Monte Carlo budget used to
/// check it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub gamma: f64,
    pub reps: u64,
    /// Bisection stops once `|ARL − γ| ≤ rel_tol·γ`.
    pub rel_tol: f64,
    /// Replications still running at this time are truncated here.
    pub horizon_cap: u64,
    /// Optional starting bracket `(lower, upper)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    /// Give up when the upper bracket would exceed this threshold.
    pub max_threshold: f64,
}

impl CalibrationTarget {
    /// Defaults: 2% tolerance, horizon cap `10γ`.
    pub fn new(gamma: f64, reps: u64) -> Self {
        Self {
            gamma,
            reps,
            rel_tol: 0.02,
            horizon_cap: (10.0 * gamma).ceil().max(1.0) as u64,
            bracket: None,
            max_threshold: 1e4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if self.reps == 0 {
            return Err(Error::ZeroReplications);
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol must be positive"));
        }
        if self.horizon_cap == 0 {
            return Err(Error::invalid("horizon cap must be positive"));
        }
        if (self.horizon_cap as f64) < 10.0 * self.gamma {
            warn!(
                "horizon cap {} is below 10*gamma = {}; ARL estimates will be biased low",
                self.horizon_cap,
                10.0 * self.gamma
            );
        }
        if let Some((lo, hi)) = self.bracket {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
                return Err(Error::invalid(format!("bad bracket ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArlEstimate {
    pub mean: f64,
    pub se: f64,
    pub censored_fraction: f64,
    pub reps: u64,
}

impl From<StopSummary> for ArlEstimate {
    fn from(s: StopSummary) -> Self {
        Self {
            mean: s.mean,
            se: s.se,
            censored_fraction: s.censored_fraction(),
            reps: s.reps as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub a: f64,
    pub arl_hat: f64,
    pub se: f64,
    pub iterations: u32,
    pub censored_fraction: f64,
    /// `|arl_hat − γ| ≤ max(rel_tol·γ, 2·se)`.
    pub converged: bool,
}

/// Estimated mean and spread of the stationary pre-change `G_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryMoments {
    pub mu_h: f64,
    pub sigma_h: f64,
    pub burn_in: u64,
    pub samples: u64,
    pub reps: u64,
    /// Standard error of `mu_h` from the spread of per-replication means.
    pub mu_se: f64,
}

/// Monte Carlo ARL to false alarm at the scheme's fixed threshold.
///
/// Replications that never alarm are truncated at the horizon cap, which can
/// only bias the estimate low.
pub fn estimate_arl(
    spec: &SchemeSpec,
    models: &[StreamModel],
    target: &CalibrationTarget,
    seeds: &SeedSpec,
) -> Result<ArlEstimate> {
    target.validate()?;
    let scenario = ChangeScenario::pre_change(models.len());
    let runs = run_replications(
        spec,
        models,
        &scenario,
        seeds,
        target.reps,
        target.horizon_cap,
    )?;
    Ok(StopSummary::from_values(runs.iter().map(|r| (r.stop as f64, r.censored))).into())
}

struct RecordPool<'a> {
    runs: Vec<RecordingRun<'a>>,
    cap: u64,
    level: f64,
}

impl<'a> RecordPool<'a> {
    fn reach(&mut self, level: f64) -> Result<()> {
        if level > self.level {
            let cap = self.cap;
            self.runs
                .par_iter_mut()
                .try_for_each(|run| run.extend_to(level, cap))?;
            self.level = level;
        }
        Ok(())
    }

    fn arl(&mut self, a: f64) -> Result<StopSummary> {
        self.reach(a)?;
        let cap = self.cap;
        Ok(StopSummary::from_values(self.runs.iter().map(|run| {
            let out = run
                .stop_at(a, cap)
                .expect("every run has been simulated up to the requested level");
            (out.stop as f64, out.censored)
        })))
    }
}

/// Next upper-bracket candidate: log-linear extrapolation of the ARL curve
/// toward `1.25γ`, never more than doubling and never less than a 2% step.
fn propose_upper(prev: (f64, f64), cur: (f64, f64), gamma: f64) -> f64 {
    let (a0, arl0) = prev;
    let (a1, arl1) = cur;
    let scale = a1.abs().max(1.0);
    let doubling = a1 + scale;
    if a1 > a0 && arl1 > arl0 && arl0 > 0.0 {
        let slope = (arl1.ln() - arl0.ln()) / (a1 - a0);
        let step = ((1.25 * gamma).ln() - arl1.ln()) / slope;
        if step.is_finite() {
            return a1 + step.clamp(0.02 * scale, scale);
        }
    }
    doubling
}

/// Finds `a` with `E^∞(T(a)) ≈ γ` by bracketing and bisection on common
/// random numbers. `spec.a` is ignored. When `moments` are given, the CLT
/// heuristic seeds the lower end of the bracket.
pub fn calibrate_threshold(
    spec: &SchemeSpec,
    models: &[StreamModel],
    target: &CalibrationTarget,
    seeds: &SeedSpec,
    moments: Option<&StationaryMoments>,
) -> Result<CalibrationResult> {
    target.validate()?;
    let gamma = target.gamma;
    let scenario = ChangeScenario::pre_change(models.len());
    let runs = (0..target.reps)
        .map(|rep| RecordingRun::new(spec, models, &scenario, seeds, rep))
        .collect::<Result<Vec<_>>>()?;
    let mut pool = RecordPool {
        runs,
        cap: target.horizon_cap,
        level: f64::NEG_INFINITY,
    };
    let mut iterations = 0u32;

    let start = match (target.bracket, moments) {
        (Some((lo, _)), _) => lo,
        (None, Some(m)) => clt_threshold(gamma, m)
            .ok()
            .filter(|a| *a > 0.0)
            .unwrap_or(1.0),
        (None, None) => 1.0,
    };
    let mut lo = start;
    let mut lo_arl = pool.arl(lo)?;
    while lo_arl.mean >= gamma {
        iterations += 1;
        lo *= 0.5;
        if lo < 1e-9 {
            return Err(Error::invalid(format!(
                "ARL exceeds gamma = {gamma} even for vanishing thresholds"
            )));
        }
        lo_arl = pool.arl(lo)?;
    }

    let mut prev = (lo, lo_arl.mean);
    let mut cur = prev;
    if let Some((_, hint)) = target.bracket {
        if hint > lo {
            cur = (hint, pool.arl(hint)?.mean);
            iterations += 1;
        }
    }
    while cur.1 < gamma {
        let summary = pool.arl(cur.0)?;
        if summary.censored == summary.reps {
            return Err(Error::BracketNotFound {
                a_reached: cur.0,
                arl_hat: summary.mean,
                gamma,
                censored_fraction: 1.0,
            });
        }
        let next = propose_upper(prev, cur, gamma);
        if next > target.max_threshold {
            return Err(Error::BracketNotFound {
                a_reached: cur.0,
                arl_hat: summary.mean,
                gamma,
                censored_fraction: summary.censored_fraction(),
            });
        }
        iterations += 1;
        let arl = pool.arl(next)?.mean;
        debug!("bracket growth: a={next:.4} ARL={arl:.1}");
        if cur.0 > lo && cur.1 < gamma {
            lo = cur.0;
        }
        prev = cur;
        cur = (next, arl);
    }
    let mut hi = cur.0;
    let mut best_a = hi;
    let mut best = pool.arl(hi)?;

    let tol = target.rel_tol * gamma;
    while (best.mean - gamma).abs() > tol && hi - lo > 1e-10 * hi.abs().max(1.0) {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let s = pool.arl(mid)?;
        debug!("bisection: a={mid:.6} ARL={:.1}", s.mean);
        if (s.mean - gamma).abs() <= tol {
            best_a = mid;
            best = s;
            break;
        }
        if s.mean < gamma {
            lo = mid;
        } else {
            hi = mid;
            best_a = mid;
            best = s;
        }
    }

    let converged = (best.mean - gamma).abs() <= tol.max(2.0 * best.se);
    if !converged {
        warn!(
            "calibration settled at a={best_a:.4} with ARL {:.1} (gamma {gamma}, se {:.1})",
            best.mean, best.se
        );
    }
    Ok(CalibrationResult {
        a: best_a,
        arl_hat: best.mean,
        se: best.se,
        iterations,
        censored_fraction: best.censored_fraction(),
        converged,
    })
}

/// Runs the detectors pre-change for `burn_in` steps, then pools `G_n` over
/// the next `samples` steps of every replication.
pub fn estimate_stationary_moments(
    spec: &SchemeSpec,
    models: &[StreamModel],
    burn_in: u64,
    samples: u64,
    reps: u64,
    seeds: &SeedSpec,
) -> Result<StationaryMoments> {
    if reps == 0 {
        return Err(Error::ZeroReplications);
    }
    if samples == 0 {
        return Err(Error::invalid("need at least one sample per replication"));
    }
    let open = spec.with_threshold(f64::INFINITY);
    Monitor::new(&open, models)?;
    let scenario = ChangeScenario::pre_change(models.len());
    // (mean, M2) per replication, merged in replication order below.
    let per_rep: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64)> {
            let mut monitor = Monitor::new(&open, models)?;
            let mut source = PathSource::new(models, &scenario, seeds, rep)?;
            let mut obs = vec![0.0; models.len()];
            for _ in 0..burn_in {
                source.fill_next(&mut obs);
                monitor.step(&obs)?;
            }
            let (mut mean, mut m2) = (0.0, 0.0);
            for i in 0..samples {
                source.fill_next(&mut obs);
                let g = monitor.step(&obs)?.g;
                let delta = g - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (g - mean);
            }
            Ok((mean, m2))
        })
        .collect::<Result<_>>()?;

    let per = samples as f64;
    let (mut count, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    for &(m, s) in &per_rep {
        let total = count + per;
        let delta = m - mean;
        mean += delta * per / total;
        m2 += s + delta * delta * count * per / total;
        count = total;
    }
    let var = if count > 1.0 { m2 / (count - 1.0) } else { 0.0 };
    let mu_se = if reps > 1 {
        let r = reps as f64;
        let spread: f64 = per_rep.iter().map(|(m, _)| (m - mean) * (m - mean)).sum();
        (spread / (r - 1.0)).sqrt() / r.sqrt()
    } else {
        0.0
    };
    Ok(StationaryMoments {
        mu_h: mean,
        sigma_h: var.max(0.0).sqrt(),
        burn_in,
        samples,
        reps,
        mu_se,
    })
}

/// `(log γ + log 4)/θ₀`: guarantees `E^∞(T) ≥ γ` whenever every stream's
/// limiting log-MGF satisfies `ψ_k(θ₀) ≤ 0`.
pub fn chebyshev_threshold(gamma: f64, theta0: f64) -> Result<f64> {
    chebyshev_threshold_with_log_mgf(gamma, theta0, 0.0)
}

/// General form `(log γ + log 4 + Σ_k ψ_k(θ))/θ` for any `θ > 0` and an
/// upper bound `psi_sum` on `Σ_k ψ_k(θ)`.
pub fn chebyshev_threshold_with_log_mgf(gamma: f64, theta: f64, psi_sum: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::invalid(format!("theta must be > 0, got {theta}")));
    }
    ensure_finite("log-MGF sum", psi_sum)?;
    Ok((gamma.ln() + 4f64.ln() + psi_sum) / theta)
}

/// `μ_H + z·σ_H` with `P(N(0,1) ≥ z) = 1/γ`.
pub fn clt_threshold(gamma: f64, moments: &StationaryMoments) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::invalid(format!("gamma must exceed 1, got {gamma}")));
    }
    if !(moments.sigma_h.is_finite() && moments.sigma_h > 0.0) {
        return Err(Error::invalid(format!(
            "sigma_H must be positive, got {}",
            moments.sigma_h
        )));
    }
    ensure_finite("mu_H", moments.mu_h)?;
    let z = normal_quantile(1.0 - 1.0 / gamma)?;
    Ok(moments.mu_h + z * moments.sigma_h)
}

/// KL-proportional censoring: `ρ_k = I_k/ΣI`, `b = log(1/η)/ρ_min`, `b_k = ρ_k·b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringPlan {
    pub weights: Vec<f64>,
    pub common: f64,
    pub thresholds: Vec<f64>,
}

pub fn censoring_from_eta(eta: f64, kl_numbers: &[f64]) -> Result<CensoringPlan> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!("eta must lie in (0, 1), got {eta}")));
    }
    if kl_numbers.is_empty() {
        return Err(Error::invalid("no streams"));
    }
    if let Some(bad) = kl_numbers.iter().find(|i| !(i.is_finite() && **i > 0.0)) {
        return Err(Error::invalid(format!(
            "KL numbers must be finite and positive, got {bad}"
        )));
    }
    let total: f64 = kl_numbers.iter().sum();
    let weights: Vec<f64> = kl_numbers.iter().map(|i| i / total).collect();
    let rho_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let common = (1.0 / eta).ln() / rho_min;
    let thresholds = weights.iter().map(|w| w * common).collect();
    Ok(CensoringPlan {
        weights,
        common,
        thresholds,
    })
}

/// `log((1 − π)/π)`: soft-threshold level from a prior fraction `π` of
/// affected streams.
pub fn bayes_b1(pi: f64) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::invalid(format!("pi must lie in (0, 1), got {pi}")));
    }
    Ok(((1.0 - pi) / pi).ln())
}
