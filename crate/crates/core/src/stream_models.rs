// SPDX-License-Identifier: Apache-2.0

//! Pre/post-change laws of the individual streams and the change scenario
//! that decides which law each observation is drawn from.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::StreamRng;

/// A pre/post-change pair `(f, g)` supplied by the caller.
///
/// Implementations must keep `kl_number` finite and positive and the second
/// moment of `llr` under `g` finite.
pub trait ObservationFamily: Send + Sync + fmt::Debug {
    /// `log g(x)/f(x)`.
    fn llr(&self, x: f64) -> f64;
    /// `I(g, f) = E_g[llr(X)]`.
    fn kl_number(&self) -> f64;
    /// One observation from `g` when `post_change`, else from `f`.
    fn draw(&self, post_change: bool, rng: &mut StreamRng) -> f64;
}

/// Unit-variance Gaussian mean shift `N(pre_mean, 1) -> N(post_mean, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianShift {
    pub pre_mean: f64,
    pub post_mean: f64,
}

impl GaussianShift {
    #[inline]
    fn shift(&self) -> f64 {
        self.post_mean - self.pre_mean
    }
}

#[derive(Debug, Clone)]
pub enum StreamModel {
    Gaussian(GaussianShift),
    Custom(Arc<dyn ObservationFamily>),
}

impl StreamModel {
    /// `N(0,1) -> N(mu,1)`.
    pub fn gaussian(mu: f64) -> Result<Self> {
        let model = StreamModel::Gaussian(GaussianShift {
            pre_mean: 0.0,
            post_mean: mu,
        });
        model.validate()?;
        Ok(model)
    }

    /// `K` copies of the same Gaussian model.
    pub fn homogeneous(k: usize, mu: f64) -> Result<Vec<Self>> {
        let model = Self::gaussian(mu)?;
        Ok(vec![model; k])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StreamModel::Gaussian(g) => {
                ensure_finite("pre-change mean", g.pre_mean)?;
                ensure_finite("post-change mean", g.post_mean)?;
                if g.shift() == 0.0 {
                    return Err(Error::invalid(
                        "post-change mean equals pre-change mean (zero KL information)",
                    ));
                }
                Ok(())
            }
            StreamModel::Custom(family) => {
                let kl = family.kl_number();
                if !(kl.is_finite() && kl > 0.0) {
                    return Err(Error::invalid(format!(
                        "KL information must be finite and positive, got {kl}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Log-likelihood ratio `log g(x)/f(x)`; rejects non-finite `x`.
    pub fn llr(&self, x: f64) -> Result<f64> {
        ensure_finite("observation", x)?;
        Ok(self.llr_unchecked(x))
    }

    #[inline]
    pub(crate) fn llr_unchecked(&self, x: f64) -> f64 {
        match self {
            StreamModel::Gaussian(g) => {
                if g.pre_mean == 0.0 {
                    g.post_mean * x - 0.5 * g.post_mean * g.post_mean
                } else {
                    let d = g.shift();
                    d * (x - 0.5 * (g.pre_mean + g.post_mean))
                }
            }
            StreamModel::Custom(family) => family.llr(x),
        }
    }

    /// Kullback–Leibler number `I(g, f)`.
    pub fn kl_number(&self) -> f64 {
        match self {
            StreamModel::Gaussian(g) => 0.5 * g.shift() * g.shift(),
            StreamModel::Custom(family) => family.kl_number(),
        }
    }

    pub fn post_mean(&self) -> Option<f64> {
        match self {
            StreamModel::Gaussian(g) => Some(g.post_mean),
            StreamModel::Custom(_) => None,
        }
    }

    /// One observation. For the Gaussian family the draw is `mean + Z` with a
    /// single standard normal `Z` per call, so pre- and post-change paths
    /// built from the same substream share their noise.
    #[inline]
    pub(crate) fn draw(
        &self,
        post_change: bool,
        post_mean_override: Option<f64>,
        rng: &mut StreamRng,
    ) -> f64 {
        match self {
            StreamModel::Gaussian(g) => {
                let z: f64 = StandardNormal.sample(rng);
                let mean = if post_change {
                    post_mean_override.unwrap_or(g.post_mean)
                } else {
                    g.pre_mean
                };
                mean + z
            }
            StreamModel::Custom(family) => family.draw(post_change, rng),
        }
    }
}

/// When the change happens and which streams it reaches.
///
/// Stream `k` is post-change at time `n` iff `nu` and `delays[k]` are both
/// finite and `n >= nu + delays[k]`. `None` encodes infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeScenario {
    nu: Option<u64>,
    delays: Vec<Option<u64>>,
    /// Overrides the models' post-change mean for affected Gaussian streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    post_mean: Option<f64>,
}

impl ChangeScenario {
    pub fn new(nu: Option<u64>, delays: Vec<Option<u64>>) -> Result<Self> {
        if nu == Some(0) {
            return Err(Error::invalid("change-point must be >= 1"));
        }
        if let Some(min) = delays.iter().flatten().min() {
            if *min != 0 {
                return Err(Error::invalid(format!(
                    "smallest finite delay must be 0, got {min}"
                )));
            }
        }
        Ok(Self {
            nu,
            delays,
            post_mean: None,
        })
    }

    /// No change ever occurs.
    pub fn pre_change(k: usize) -> Self {
        Self {
            nu: None,
            delays: vec![None; k],
            post_mean: None,
        }
    }

    /// Streams `0..affected` change instantaneously at `nu`.
    pub fn first_affected(k: usize, affected: usize, nu: u64) -> Result<Self> {
        if affected > k {
            return Err(Error::invalid(format!(
                "{affected} affected streams out of {k}"
            )));
        }
        let delays = (0..k).map(|i| (i < affected).then_some(0)).collect();
        Self::new(Some(nu), delays)
    }

    /// The listed streams change instantaneously at `nu`.
    pub fn with_indices(k: usize, indices: &[usize], nu: u64) -> Result<Self> {
        let mut delays = vec![None; k];
        for &i in indices {
            if i >= k {
                return Err(Error::invalid(format!(
                    "stream index {i} out of range 0..{k}"
                )));
            }
            delays[i] = Some(0);
        }
        Self::new(Some(nu), delays)
    }

    pub fn with_post_mean(mut self, mu: f64) -> Result<Self> {
        ensure_finite("post-change mean", mu)?;
        self.post_mean = Some(mu);
        Ok(self)
    }

    pub fn nu(&self) -> Option<u64> {
        self.nu
    }

    pub fn delays(&self) -> &[Option<u64>] {
        &self.delays
    }

    pub fn post_mean(&self) -> Option<f64> {
        self.post_mean
    }

    pub fn streams(&self) -> usize {
        self.delays.len()
    }

    /// True when some delay is finite, in which case the smallest one is 0.
    pub fn min_finite_delay_zero(&self) -> bool {
        self.delays.iter().flatten().min() == Some(&0)
    }

    /// First post-change time of stream `k`.
    #[inline]
    pub fn onset(&self, k: usize) -> Option<u64> {
        match (self.nu, self.delays[k]) {
            (Some(nu), Some(d)) => Some(nu + d),
            _ => None,
        }
    }

    #[inline]
    pub fn is_post_change(&self, k: usize, n: u64) -> bool {
        self.onset(k).is_some_and(|t| n >= t)
    }

    pub fn affected(&self) -> Vec<usize> {
        if self.nu.is_none() {
            return Vec::new();
        }
        self.delays
            .iter()
            .enumerate()
            .filter_map(|(k, d)| d.map(|_| k))
            .collect()
    }

    pub fn affected_count(&self) -> usize {
        self.affected().len()
    }
}

/// Observation of stream `k` at time `n` under `scenario`.
pub fn sample(
    model: &StreamModel,
    scenario: &ChangeScenario,
    k: usize,
    n: u64,
    rng: &mut StreamRng,
) -> Result<f64> {
    if k >= scenario.streams() {
        return Err(Error::invalid(format!(
            "stream index {k} out of range 0..{}",
            scenario.streams()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("time steps start at 1"));
    }
    Ok(model.draw(scenario.is_post_change(k, n), scenario.post_mean, rng))
}
