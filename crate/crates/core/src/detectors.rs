// SPDX-License-Identifier: Apache-2.0

//! Recursive per-stream detection statistics.
//!
//! All states are small `Copy` values updated one observation at a time:
//!
//! * [`CusumState`]: Page's CUSUM `W_n = max(W_{n-1} + llr_n, 0)`.
//! * [`SrState`]: Shiryaev–Roberts in log scale, `Ŵ_n = log(e^{Ŵ_{n-1}} + 1) + llr_n`.
//! * [`LpRegisters`] / [`TwoSidedLpState`]: the Lorden–Pollak adaptive CUSUM for
//!   an unknown Gaussian mean, kept as `(S, T, W)` registers per side.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CusumState {
    pub w: f64,
}

impl CusumState {
    #[inline]
    pub(crate) fn step(&mut self, llr: f64) {
        self.w = (self.w + llr).max(0.0);
    }

    pub fn update(self, llr_increment: f64) -> Result<Self> {
        ensure_finite("log-likelihood ratio", llr_increment)?;
        let mut next = self;
        next.step(llr_increment);
        Ok(next)
    }
}

/// `log(e^w + 1)` without overflow for large `w`.
#[inline]
pub(crate) fn log1p_exp(w: f64) -> f64 {
    w.max(0.0) + (-w.abs()).exp().ln_1p()
}

/// Log-scale Shiryaev–Roberts statistic; starts at `Ŵ_0 = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SrState {
    pub w_log: f64,
}

impl SrState {
    #[inline]
    pub(crate) fn step(&mut self, llr: f64) {
        self.w_log = log1p_exp(self.w_log) + llr;
    }

    pub fn update(self, llr_increment: f64) -> Result<Self> {
        ensure_finite("log-likelihood ratio", llr_increment)?;
        let mut next = self;
        next.step(llr_increment);
        Ok(next)
    }

    /// `max(Ŵ, 0)`.
    pub fn positive_part(&self) -> f64 {
        self.w_log.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Positive,
    Negative,
}

/// Tuning of the adaptive mean estimate `μ̂ = max(ρ, (s0 + S)/(t0 + T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpConfig {
    /// Smallest meaningful shift.
    pub rho: f64,
    /// Prior numerator.
    pub s0: f64,
    /// Prior denominator.
    pub t0: f64,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            rho: 0.25,
            s0: 1.0,
            t0: 4.0,
        }
    }
}

impl LpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::invalid(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.s0.is_finite() && self.s0 >= 0.0 && self.t0.is_finite() && self.t0 >= 0.0) {
            return Err(Error::invalid(
                "prior (s0, t0) must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// Registers of one Lorden–Pollak side.
///
/// After time `n`: `t` counts and `s` sums the observations with indices
/// `ν̂..n-1`, where `ν̂` is the last time before `n` at which `w` was zero.
/// Both are reset whenever the previous `w` was zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LpRegisters {
    pub s: f64,
    pub t: u64,
    pub w: f64,
}

impl LpRegisters {
    /// Mean estimate from the current `(S, T)` registers, clamped away from 0.
    #[inline]
    pub fn mu_hat(&self, cfg: &LpConfig, side: Side) -> f64 {
        let denom = cfg.t0 + self.t as f64;
        match side {
            Side::Positive => {
                if denom == 0.0 {
                    cfg.rho
                } else {
                    cfg.rho.max((cfg.s0 + self.s) / denom)
                }
            }
            Side::Negative => {
                if denom == 0.0 {
                    -cfg.rho
                } else {
                    (-cfg.rho).min((-cfg.s0 + self.s) / denom)
                }
            }
        }
    }

    #[inline]
    pub(crate) fn step(&mut self, cfg: &LpConfig, side: Side, x_prev: f64, x_new: f64) -> f64 {
        if self.w > 0.0 {
            self.s += x_prev;
            self.t += 1;
        } else {
            self.s = 0.0;
            self.t = 0;
        }
        let mu = self.mu_hat(cfg, side);
        self.w = (self.w + mu * x_new - 0.5 * mu * mu).max(0.0);
        mu
    }

    /// One time step: `(S, T)` absorb `x_prev` (observation at `n-1`, zero at
    /// `n = 1`), `μ̂` is formed from them, and only then does `x_new` enter `w`.
    pub fn update(self, cfg: &LpConfig, side: Side, x_prev: f64, x_new: f64) -> Result<Self> {
        ensure_finite("previous observation", x_prev)?;
        ensure_finite("observation", x_new)?;
        let mut next = self;
        next.step(cfg, side, x_prev, x_new);
        Ok(next)
    }
}

/// Positive and negative Lorden–Pollak sides plus the last observation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwoSidedLpState {
    pub pos: LpRegisters,
    pub neg: LpRegisters,
    pub x_prev: f64,
}

impl TwoSidedLpState {
    #[inline]
    pub(crate) fn step(&mut self, cfg: &LpConfig, x: f64) -> f64 {
        self.pos.step(cfg, Side::Positive, self.x_prev, x);
        self.neg.step(cfg, Side::Negative, self.x_prev, x);
        self.x_prev = x;
        self.statistic()
    }

    pub fn update(self, cfg: &LpConfig, x: f64) -> Result<Self> {
        ensure_finite("observation", x)?;
        let mut next = self;
        next.step(cfg, x);
        Ok(next)
    }

    /// `max(W⁽¹⁾, W⁽²⁾)`.
    #[inline]
    pub fn statistic(&self) -> f64 {
        self.pos.w.max(self.neg.w)
    }
}
