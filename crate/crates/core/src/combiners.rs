// SPDX-License-Identifier: Apache-2.0

//! Fusion-center side: shrinkage transforms, the global statistic
//! `G_n = Σ_k h_k(W_{k,n})`, censored sensor messages, and [`Monitor`], which
//! drives one global stopping rule `inf{n ≥ 1 : G_n ≥ a}` step by step.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detectors::{CusumState, LpConfig, SrState, TwoSidedLpState};
use crate::error::{ensure_finite, Error, Result};
use crate::stream_models::StreamModel;

/// Default look-back of the windowed Xie–Siegmund statistic.
pub const DEFAULT_XS_WINDOW: usize = 200;

/// Hard thresholding `x·1{x ≥ b}`.
#[inline]
pub fn hard_transform(x: f64, b: f64) -> f64 {
    if x >= b {
        x
    } else {
        0.0
    }
}

/// Soft thresholding `max(x − b, 0)`.
#[inline]
pub fn soft_transform(x: f64, b: f64) -> f64 {
    (x - b).max(0.0)
}

fn clamp_order(r: usize, len: usize) -> usize {
    let clamped = r.clamp(1, len.max(1));
    if clamped != r {
        warn!("order parameter r={r} clamped to {clamped} for {len} streams");
    }
    clamped
}

#[inline]
fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Sum of the `r` largest entries, `1 ≤ r`, added in descending order.
///
/// Every additive rule goes through here, so `r = len` is also the plain sum
/// and the result is monotone in `r` bit for bit. Exact zeros are skipped
/// since adding them changes nothing.
fn top_r_sum_with(values: &[f64], r: usize, scratch: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    if r <= 1 {
        return max_of(values);
    }
    scratch.clear();
    scratch.extend(values.iter().copied().filter(|&x| x != 0.0));
    let zeros = values.len() - scratch.len();
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if r < scratch.len() {
        scratch.select_nth_unstable_by(r - 1, desc);
        scratch.truncate(r);
    }
    scratch.sort_unstable_by(desc);
    let positives = scratch.partition_point(|&x| x > 0.0);
    let mut total = 0.0;
    for &x in &scratch[..positives] {
        total += x;
    }
    // below zero only once the zeros are used up
    let negatives = r.saturating_sub(positives).saturating_sub(zeros);
    for &x in scratch[positives..].iter().take(negatives) {
        total += x;
    }
    total
}

/// Sum of the `r` largest values; `r` outside `[1, len]` is clamped with a
/// warning.
pub fn top_r_sum(values: &[f64], r: usize) -> f64 {
    let r = clamp_order(r, values.len());
    top_r_sum_with(values, r, &mut Vec::with_capacity(values.len()))
}

/// Local statistic run at every stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorKind {
    /// CUSUM with the models' known post-change law.
    Cusum,
    /// Log-scale Shiryaev–Roberts; experimental as a global building block.
    Sr {
        #[serde(default)]
        positive_part: bool,
    },
    /// Two-sided Lorden–Pollak statistic for an unknown Gaussian mean.
    LpTwoSided {
        #[serde(default)]
        lp: LpConfig,
    },
}

/// Shrinkage rule applied by the fusion center. Censoring vectors hold one
/// `b_k` per stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shrinkage {
    Max,
    Sum,
    Hard {
        b: Vec<f64>,
    },
    Soft {
        b: Vec<f64>,
    },
    Order {
        r: usize,
    },
    /// Hard censoring followed by the top-`r` sum; NULL counts as 0.
    Comb {
        r: usize,
        b: Vec<f64>,
    },
    /// Windowed Xie–Siegmund mixture statistic on the raw observations.
    Xs {
        p0: f64,
        window: usize,
    },
}

impl Shrinkage {
    pub fn hard(k: usize, b: f64) -> Self {
        Shrinkage::Hard { b: vec![b; k] }
    }

    pub fn soft(k: usize, b: f64) -> Self {
        Shrinkage::Soft { b: vec![b; k] }
    }

    pub fn comb(k: usize, r: usize, b: f64) -> Self {
        Shrinkage::Comb { r, b: vec![b; k] }
    }

    pub fn xs(p0: f64) -> Self {
        Shrinkage::Xs {
            p0,
            window: DEFAULT_XS_WINDOW,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shrinkage::Max => "max",
            Shrinkage::Sum => "sum",
            Shrinkage::Hard { .. } => "hard",
            Shrinkage::Soft { .. } => "soft",
            Shrinkage::Order { .. } => "order",
            Shrinkage::Comb { .. } => "comb",
            Shrinkage::Xs { .. } => "xs",
        }
    }

    pub fn censoring(&self) -> Option<&[f64]> {
        match self {
            Shrinkage::Hard { b } | Shrinkage::Soft { b } | Shrinkage::Comb { b, .. } => Some(b),
            _ => None,
        }
    }

    pub fn order(&self) -> Option<usize> {
        match self {
            Shrinkage::Order { r } | Shrinkage::Comb { r, .. } => Some(*r),
            _ => None,
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if let Some(b) = self.censoring() {
            if b.len() != k {
                return Err(Error::LengthMismatch {
                    expected: k,
                    got: b.len(),
                });
            }
            if let Some(bad) = b.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "censoring parameters must be finite and >= 0, got {bad}"
                )));
            }
        }
        if let Shrinkage::Xs { p0, window } = self {
            if !(*p0 > 0.0 && *p0 <= 1.0) {
                return Err(Error::invalid(format!("p0 must lie in (0, 1], got {p0}")));
            }
            if *window == 0 {
                return Err(Error::invalid("XS window must be positive"));
            }
        }
        Ok(())
    }

    /// Copy with `r` clamped into `[1, k]`.
    fn resolved(&self, k: usize) -> Self {
        match self {
            Shrinkage::Order { r } => Shrinkage::Order {
                r: clamp_order(*r, k),
            },
            Shrinkage::Comb { r, b } => Shrinkage::Comb {
                r: clamp_order(*r, k),
                b: b.clone(),
            },
            other => other.clone(),
        }
    }
}

/// A complete global scheme: local detector, shrinkage rule and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub detector: DetectorKind,
    pub shrinkage: Shrinkage,
    pub a: f64,
}

impl SchemeSpec {
    pub fn new(detector: DetectorKind, shrinkage: Shrinkage, a: f64) -> Self {
        Self {
            detector,
            shrinkage,
            a,
        }
    }

    pub fn cusum(shrinkage: Shrinkage, a: f64) -> Self {
        Self::new(DetectorKind::Cusum, shrinkage, a)
    }

    pub fn with_threshold(&self, a: f64) -> Self {
        Self { a, ..self.clone() }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::invalid("at least one stream is required"));
        }
        if self.a.is_nan() || self.a <= 0.0 {
            return Err(Error::invalid(format!(
                "threshold must be > 0, got {}",
                self.a
            )));
        }
        if let DetectorKind::LpTwoSided { lp } = &self.detector {
            lp.validate()?;
        }
        self.shrinkage.validate(k)
    }
}

/// Fusion-center statistic `G_n` from the local statistics.
///
/// The Xie–Siegmund rule works on raw observations, not on local statistics,
/// so it is rejected here; use [`Monitor`] or [`XsWindowState`] for it.
pub fn global_stat(spec: &SchemeSpec, w: &[f64]) -> Result<f64> {
    spec.shrinkage.validate(w.len())?;
    if matches!(spec.shrinkage, Shrinkage::Xs { .. }) {
        return Err(Error::invalid(
            "the XS statistic needs the observation window, not local statistics",
        ));
    }
    let shrinkage = spec.shrinkage.resolved(w.len());
    Ok(shrink(
        &shrinkage,
        w,
        &mut Vec::with_capacity(w.len()),
        &mut Vec::with_capacity(w.len()),
    ))
}

fn shrink(shrinkage: &Shrinkage, w: &[f64], shrunk: &mut Vec<f64>, scratch: &mut Vec<f64>) -> f64 {
    let k = w.len();
    let mut apply = |h: fn(f64, f64) -> f64, b: &[f64]| {
        shrunk.clear();
        shrunk.extend(w.iter().zip(b).map(|(&x, &b)| h(x, b)));
    };
    match shrinkage {
        Shrinkage::Max => max_of(w),
        Shrinkage::Sum => top_r_sum_with(w, k, scratch),
        Shrinkage::Order { r } => top_r_sum_with(w, *r, scratch),
        Shrinkage::Hard { b } => {
            apply(hard_transform, b);
            top_r_sum_with(shrunk, k, scratch)
        }
        Shrinkage::Soft { b } => {
            apply(soft_transform, b);
            top_r_sum_with(shrunk, k, scratch)
        }
        Shrinkage::Comb { r, b } => {
            apply(hard_transform, b);
            top_r_sum_with(shrunk, *r, scratch)
        }
        Shrinkage::Xs { .. } => unreachable!("XS is evaluated from its window state"),
    }
}

/// A transmitted local statistic; silent sensors send nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMessage {
    pub stream: usize,
    pub value: f64,
}

/// Messages reaching the fusion center: stream `k` transmits iff `w_k ≥ b_k`.
pub fn censored_messages(w: &[f64], b: &[f64]) -> Result<Vec<SensorMessage>> {
    if w.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            got: b.len(),
        });
    }
    Ok(w.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (w, b))| w >= b)
        .map(|(stream, (&value, _))| SensorMessage { stream, value })
        .collect())
}

/// Number of streams with `w_k ≥ b_k`.
#[inline]
pub(crate) fn transmitting(w: &[f64], b: &[f64]) -> usize {
    w.iter().zip(b).filter(|(w, b)| w >= b).count()
}

/// Rolling cumulative sums for the windowed Xie–Siegmund statistic.
///
/// At time `n` the ring holds `C_{k,i} = Σ_{j ≤ i} X_{k,j}` for the last
/// `min(n, window)` indices `i = n-1, n-2, …`, enough to form every
/// `Σ_{j=i+1..n} X_{k,j}` with `n − window ≤ i < n`.
#[derive(Debug, Clone)]
pub struct XsWindowState {
    streams: usize,
    window: usize,
    n: u64,
    cum: Vec<f64>,
    ring: Vec<f64>,
    head: usize,
    len: usize,
}

impl XsWindowState {
    pub fn new(streams: usize, window: usize) -> Result<Self> {
        if streams == 0 || window == 0 {
            return Err(Error::invalid("XS state needs streams > 0 and window > 0"));
        }
        Ok(Self {
            streams,
            window,
            n: 0,
            cum: vec![0.0; streams],
            ring: vec![0.0; streams * window],
            head: window - 1,
            len: 0,
        })
    }

    pub fn time(&self) -> u64 {
        self.n
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Number of candidate change times currently held.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends the observations of time `n + 1`.
    pub fn push(&mut self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.streams {
            return Err(Error::LengthMismatch {
                expected: self.streams,
                got: obs.len(),
            });
        }
        self.head = (self.head + 1) % self.window;
        let k = self.streams;
        self.ring[self.head * k..(self.head + 1) * k].copy_from_slice(&self.cum);
        for (c, &x) in self.cum.iter_mut().zip(obs) {
            *c += x;
        }
        self.len = (self.len + 1).min(self.window);
        self.n += 1;
        Ok(())
    }

    /// `max_i Σ_k log(1 − p0 + p0·exp((U⁺_{k,n,i})²/2))` over the window.
    pub fn statistic(&self, p0: f64) -> f64 {
        let k = self.streams;
        let mut best = f64::NEG_INFINITY;
        for back in 0..self.len {
            let slot = (self.head + self.window - back) % self.window;
            let base = &self.ring[slot * k..(slot + 1) * k];
            let inv_two_age = 0.5 / (back as f64 + 1.0);
            let mut total = 0.0;
            if p0 == 1.0 {
                for (c, b) in self.cum.iter().zip(base) {
                    let d = c - b;
                    if d > 0.0 {
                        total += d * d * inv_two_age;
                    }
                }
            } else {
                let stay = 1.0 - p0;
                for (c, b) in self.cum.iter().zip(base) {
                    let d = c - b;
                    if d > 0.0 {
                        let v = d * d * inv_two_age;
                        // log(1 - p0 + p0 e^v) without overflowing e^v.
                        total += v + (p0 + stay * (-v).exp()).ln();
                    }
                }
            }
            if total > best {
                best = total;
            }
        }
        best
    }
}

/// Windowed XS statistic at time `n`; `n` must match the state's clock.
pub fn xs_stat(state: &XsWindowState, p0: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("the XS statistic is undefined at n = 0"));
    }
    if n != state.time() {
        return Err(Error::invalid(format!(
            "window state is at time {}, requested {n}",
            state.time()
        )));
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::invalid(format!("p0 must lie in (0, 1], got {p0}")));
    }
    Ok(state.statistic(p0))
}

#[derive(Debug, Clone)]
enum LocalBank {
    Cusum {
        models: Vec<StreamModel>,
        states: Vec<CusumState>,
    },
    Sr {
        models: Vec<StreamModel>,
        states: Vec<SrState>,
        positive_part: bool,
    },
    Lp {
        cfg: LpConfig,
        states: Vec<TwoSidedLpState>,
    },
    /// XS needs no local statistics.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub g: f64,
    pub alarm: bool,
}

/// One running global scheme over `K` streams.
#[derive(Debug, Clone)]
pub struct Monitor {
    bank: LocalBank,
    shrinkage: Shrinkage,
    a: f64,
    stats: Vec<f64>,
    scratch: Vec<f64>,
    shrunk: Vec<f64>,
    xs: Option<XsWindowState>,
    n: u64,
}

impl Monitor {
    /// `models` supply the known post-change laws of CUSUM and SR; the
    /// Lorden–Pollak and XS rules only use their length.
    pub fn new(spec: &SchemeSpec, models: &[StreamModel]) -> Result<Self> {
        let k = models.len();
        spec.validate(k)?;
        let shrinkage = spec.shrinkage.resolved(k);
        let (bank, xs) = match (&shrinkage, spec.detector) {
            (Shrinkage::Xs { window, .. }, _) => {
                (LocalBank::Raw, Some(XsWindowState::new(k, *window)?))
            }
            (_, DetectorKind::Cusum) => (
                LocalBank::Cusum {
                    models: models.to_vec(),
                    states: vec![CusumState::default(); k],
                },
                None,
            ),
            (_, DetectorKind::Sr { positive_part }) => (
                LocalBank::Sr {
                    models: models.to_vec(),
                    states: vec![SrState::default(); k],
                    positive_part,
                },
                None,
            ),
            (_, DetectorKind::LpTwoSided { lp }) => (
                LocalBank::Lp {
                    cfg: lp,
                    states: vec![TwoSidedLpState::default(); k],
                },
                None,
            ),
        };
        for m in models {
            m.validate()?;
        }
        Ok(Self {
            bank,
            shrinkage,
            a: spec.a,
            stats: vec![0.0; k],
            scratch: Vec::with_capacity(k),
            shrunk: Vec::with_capacity(k),
            xs,
            n: 0,
        })
    }

    pub fn streams(&self) -> usize {
        self.stats.len()
    }

    pub fn time(&self) -> u64 {
        self.n
    }

    pub fn threshold(&self) -> f64 {
        self.a
    }

    /// Current local statistics `W_{k,n}` (all zero for XS).
    pub fn local_stats(&self) -> &[f64] {
        &self.stats
    }

    pub fn xs_state(&self) -> Option<&XsWindowState> {
        self.xs.as_ref()
    }

    /// Feeds one observation per stream and evaluates `G_n` against `a`.
    pub fn step(&mut self, obs: &[f64]) -> Result<StepOutcome> {
        if obs.len() != self.stats.len() {
            return Err(Error::LengthMismatch {
                expected: self.stats.len(),
                got: obs.len(),
            });
        }
        if let Some(&bad) = obs.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "observation",
                value: bad,
            });
        }
        self.update_local(obs)?;
        self.n += 1;
        let g = self.current_g();
        Ok(StepOutcome {
            g,
            alarm: g >= self.a,
        })
    }

    fn update_local(&mut self, obs: &[f64]) -> Result<()> {
        match &mut self.bank {
            LocalBank::Cusum { models, states } => {
                for (((s, m), &x), out) in states
                    .iter_mut()
                    .zip(models.iter())
                    .zip(obs)
                    .zip(&mut self.stats)
                {
                    let llr = ensure_finite("log-likelihood ratio", m.llr_unchecked(x))?;
                    s.step(llr);
                    *out = s.w;
                }
            }
            LocalBank::Sr {
                models,
                states,
                positive_part,
            } => {
                for (((s, m), &x), out) in states
                    .iter_mut()
                    .zip(models.iter())
                    .zip(obs)
                    .zip(&mut self.stats)
                {
                    let llr = ensure_finite("log-likelihood ratio", m.llr_unchecked(x))?;
                    s.step(llr);
                    *out = if *positive_part {
                        s.positive_part()
                    } else {
                        s.w_log
                    };
                }
            }
            LocalBank::Lp { cfg, states } => {
                for ((s, &x), out) in states.iter_mut().zip(obs).zip(&mut self.stats) {
                    *out = s.step(cfg, x);
                }
            }
            LocalBank::Raw => {
                if let Some(xs) = &mut self.xs {
                    xs.push(obs)?;
                }
            }
        }
        Ok(())
    }

    fn current_g(&mut self) -> f64 {
        match (&self.shrinkage, &self.xs) {
            (Shrinkage::Xs { p0, .. }, Some(xs)) => xs.statistic(*p0),
            (shrinkage, _) => shrink(shrinkage, &self.stats, &mut self.shrunk, &mut self.scratch),
        }
    }
}
