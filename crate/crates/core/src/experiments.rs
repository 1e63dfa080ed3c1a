// SPDX-License-Identifier: Apache-2.0

//! Detection-delay tables, communication accounting and the two theoretical
//! reference values printed next to simulated results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combiners::DetectorKind;
use crate::combiners::{transmitting, Monitor, SchemeSpec, Shrinkage};
use crate::error::{Error, Result};
use crate::rng::{SeedSpec, DELAY_DOMAIN};
use crate::simulation::{run_replications, PathSource, StopSummary};
use crate::stream_models::{ChangeScenario, StreamModel};

/// Default cap on a single delay replication.
pub const DEFAULT_DELAY_HORIZON: u64 = 5_000;

/// A scheme with a stable identifier for tabulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScheme {
    pub id: String,
    pub spec: SchemeSpec,
}

/// Homogeneous Gaussian experiment: `k` streams shifting from 0 to
/// `post_mean`, one table row per scheme and one column per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub k: usize,
    pub post_mean: f64,
    pub schemes: Vec<LabeledScheme>,
    pub scenarios: Vec<ChangeScenario>,
    pub gamma: f64,
    pub reps: u64,
    pub seed: u64,
    pub delay_horizon: u64,
}

impl ExperimentSpec {
    /// Scenarios in which streams `0..m` change at `ν = 1`, one per count.
    pub fn first_affected_scenarios(k: usize, counts: &[usize]) -> Result<Vec<ChangeScenario>> {
        counts
            .iter()
            .map(|&m| ChangeScenario::first_affected(k, m, 1))
            .collect()
    }

    pub fn models(&self) -> Result<Vec<StreamModel>> {
        StreamModel::homogeneous(self.k, self.post_mean)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("at least one stream is required"));
        }
        if self.reps == 0 {
            return Err(Error::ZeroReplications);
        }
        if self.delay_horizon == 0 {
            return Err(Error::invalid("delay horizon must be positive"));
        }
        for s in &self.scenarios {
            if s.streams() != self.k {
                return Err(Error::LengthMismatch {
                    expected: self.k,
                    got: s.streams(),
                });
            }
        }
        for s in &self.schemes {
            s.spec.validate(self.k)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayCell {
    pub mean_delay: f64,
    pub se: f64,
    pub reps: u64,
    /// Replications that reached the horizon without an alarm.
    pub cap_hits: u64,
}

impl DelayCell {
    pub fn cap_fraction(&self) -> f64 {
        self.cap_hits as f64 / self.reps as f64
    }
}

/// Mean detection delay `T − ν + 1` with the change at `ν = 1`.
pub fn simulate_delay(
    spec: &SchemeSpec,
    models: &[StreamModel],
    scenario: &ChangeScenario,
    reps: u64,
    horizon: u64,
    seeds: &SeedSpec,
) -> Result<DelayCell> {
    if scenario.nu() != Some(1) {
        return Err(Error::invalid(format!(
            "delay simulation needs the change at time 1, got {:?}",
            scenario.nu()
        )));
    }
    if scenario.affected_count() == 0 {
        return Err(Error::NoAffectedStreams);
    }
    spec.validate(models.len())?;
    let runs = run_replications(spec, models, scenario, seeds, reps, horizon)?;
    let summary = StopSummary::from_values(runs.iter().map(|r| (r.stop as f64, r.censored)));
    Ok(DelayCell {
        mean_delay: summary.mean,
        se: summary.se,
        reps,
        cap_hits: summary.censored as u64,
    })
}

/// Delay grid: `cells[i][j]` is scheme `i` under scenario `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableResult {
    pub scheme_ids: Vec<String>,
    pub affected_counts: Vec<usize>,
    pub cells: Vec<Vec<DelayCell>>,
    /// Smallest and largest SE in each column.
    pub se_min: Vec<f64>,
    pub se_max: Vec<f64>,
    /// First-order delay floor `log γ / J` per column.
    pub lower_bounds: Vec<f64>,
}

impl TableResult {
    pub fn total_cap_hits(&self) -> u64 {
        self.cells.iter().flatten().map(|c| c.cap_hits).sum()
    }
}

/// Runs every `(scheme, scenario)` cell. All cells share the same seeds, so
/// equivalent schemes produce identical rows.
pub fn run_table(spec: &ExperimentSpec) -> Result<TableResult> {
    spec.validate()?;
    let models = spec.models()?;
    let seeds = SeedSpec::new(spec.seed).domain(DELAY_DOMAIN);
    let mut cells = Vec::with_capacity(spec.schemes.len());
    for scheme in &spec.schemes {
        let row = spec
            .scenarios
            .iter()
            .map(|scen| {
                simulate_delay(
                    &scheme.spec,
                    &models,
                    scen,
                    spec.reps,
                    spec.delay_horizon,
                    &seeds,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    let cols = spec.scenarios.len();
    let column = |j: usize| cells.iter().map(move |row: &Vec<DelayCell>| row[j].se);
    let se_min = (0..cols)
        .map(|j| column(j).fold(f64::INFINITY, f64::min))
        .collect();
    let se_max = (0..cols)
        .map(|j| column(j).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let lower_bounds = spec
        .scenarios
        .iter()
        .map(|s| info_lower_bound(spec.gamma, s, &models))
        .collect::<Result<Vec<_>>>()?;
    Ok(TableResult {
        scheme_ids: spec.schemes.iter().map(|s| s.id.clone()).collect(),
        affected_counts: spec.scenarios.iter().map(|s| s.affected_count()).collect(),
        cells,
        se_min,
        se_max,
        lower_bounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    pub mean_fraction: f64,
    pub se: f64,
    pub reps: u64,
    pub horizon: u64,
}

/// Pre-change average fraction of sensors with `W_{k,n} ≥ b_k`, averaged
/// over `n = 1..horizon` and over replications.
pub fn transmission_fraction(
    detector: &DetectorKind,
    models: &[StreamModel],
    b: &[f64],
    horizon: u64,
    reps: u64,
    seeds: &SeedSpec,
) -> Result<CommReport> {
    let k = models.len();
    if b.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: b.len(),
        });
    }
    if reps == 0 {
        return Err(Error::ZeroReplications);
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    let spec = SchemeSpec::new(*detector, Shrinkage::Hard { b: b.to_vec() }, f64::INFINITY);
    spec.validate(k)?;
    let scenario = ChangeScenario::pre_change(k);
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let mut monitor = Monitor::new(&spec, models)?;
            let mut source = PathSource::new(models, &scenario, seeds, rep)?;
            let mut obs = vec![0.0; k];
            let mut sent = 0u64;
            for _ in 0..horizon {
                source.fill_next(&mut obs);
                monitor.step(&obs)?;
                sent += transmitting(monitor.local_stats(), b) as u64;
            }
            Ok(sent as f64 / (horizon as f64 * k as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = StopSummary::from_values(per_rep.into_iter().map(|f| (f, false)));
    Ok(CommReport {
        mean_fraction: summary.mean,
        se: summary.se,
        reps,
        horizon,
    })
}

/// `log γ / Σ_{affected k} I(g_k, f_k)`.
pub fn info_lower_bound(
    gamma: f64,
    scenario: &ChangeScenario,
    models: &[StreamModel],
) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::invalid(format!("gamma must exceed 1, got {gamma}")));
    }
    if scenario.streams() != models.len() {
        return Err(Error::LengthMismatch {
            expected: models.len(),
            got: scenario.streams(),
        });
    }
    let affected = scenario.affected();
    if affected.is_empty() {
        return Err(Error::NoAffectedStreams);
    }
    let j: f64 = affected.iter().map(|&k| models[k].kl_number()).sum();
    if j.is_nan() || j <= 0.0 {
        return Err(Error::invalid("affected streams carry no information"));
    }
    Ok(gamma.ln() / j)
}

/// `log(e^a / Σ_{j<K} a^j/j!)`, i.e. minus the log Poisson(a) CDF at `K − 1`.
pub fn log_arl_bound(k: usize, a: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("at least one stream is required"));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::invalid(format!(
            "threshold must be finite and > 0, got {a}"
        )));
    }
    let ln_a = a.ln();
    let mut log_fact = 0.0;
    let mut log_pmf = |j: usize| {
        if j > 0 {
            log_fact += (j as f64).ln();
        }
        j as f64 * ln_a - a - log_fact
    };
    let terms: Vec<f64> = (0..k).map(&mut log_pmf).collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_cdf = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
    if log_cdf < -std::f64::consts::LN_2 {
        return Ok(-log_cdf);
    }
    // Close to 1: go through the upper tail to keep relative accuracy.
    let mut tail = 0.0;
    for j in k.. {
        let term = log_pmf(j).exp();
        tail += term;
        if j as f64 > a && term <= 1e-17 * tail {
            break;
        }
    }
    Ok(-(-tail).ln_1p())
}

/// Lower bound on the ARL to false alarm of any scheme in the family at
/// threshold `a` with `K` streams.
pub fn arl_bound_report(k: usize, a: f64) -> Result<f64> {
    Ok(log_arl_bound(k, a)?.exp())
}
