// SPDX-License-Identifier: Apache-2.0

//! Single-replication drivers shared by calibration and delay simulation.
//!
//! A replication is fully determined by `(SeedSpec, rep)`: stream `k` draws
//! from its own substream, so two schemes run on the same replication see
//! identical observations. That is what makes the pathwise identities and
//! monotonicity checks exact.

use rayon::prelude::*;

use crate::combiners::{Monitor, SchemeSpec, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::{SeedSpec, StreamRng};
use crate::stream_models::{ChangeScenario, StreamModel};

/// Observation generator for one replication.
#[derive(Debug, Clone)]
pub struct PathSource<'a> {
    models: &'a [StreamModel],
    scenario: &'a ChangeScenario,
    rngs: Vec<StreamRng>,
    n: u64,
}

impl<'a> PathSource<'a> {
    pub fn new(
        models: &'a [StreamModel],
        scenario: &'a ChangeScenario,
        seeds: &SeedSpec,
        rep: u64,
    ) -> Result<Self> {
        if models.len() != scenario.streams() {
            return Err(Error::LengthMismatch {
                expected: models.len(),
                got: scenario.streams(),
            });
        }
        Ok(Self {
            models,
            scenario,
            rngs: seeds.replication(rep, models.len()),
            n: 0,
        })
    }

    /// Time index of the last observation produced.
    pub fn time(&self) -> u64 {
        self.n
    }

    /// Writes the observations of the next time step into `out`.
    #[inline]
    pub fn fill_next(&mut self, out: &mut [f64]) {
        self.n += 1;
        let n = self.n;
        let post_mean = self.scenario.post_mean();
        for (k, ((x, model), rng)) in out
            .iter_mut()
            .zip(self.models)
            .zip(self.rngs.iter_mut())
            .enumerate()
        {
            *x = model.draw(self.scenario.is_post_change(k, n), post_mean, rng);
        }
    }

    /// The first `steps` observation vectors, mainly for oracles in tests.
    pub fn take_steps(&mut self, steps: usize) -> Vec<Vec<f64>> {
        (0..steps)
            .map(|_| {
                let mut v = vec![0.0; self.models.len()];
                self.fill_next(&mut v);
                v
            })
            .collect()
    }
}

/// Result of running one replication until alarm or the horizon cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    /// Alarm time, or the cap when `censored`.
    pub stop: u64,
    pub censored: bool,
}

/// Runs the scheme on replication `rep` until `G_n ≥ a` or `n = cap`.
pub fn run_until_alarm(
    spec: &SchemeSpec,
    models: &[StreamModel],
    scenario: &ChangeScenario,
    seeds: &SeedSpec,
    rep: u64,
    cap: u64,
) -> Result<RunOutcome> {
    let mut monitor = Monitor::new(spec, models)?;
    let mut source = PathSource::new(models, scenario, seeds, rep)?;
    let mut obs = vec![0.0; models.len()];
    while source.time() < cap {
        source.fill_next(&mut obs);
        let StepOutcome { alarm, .. } = monitor.step(&obs)?;
        if alarm {
            return Ok(RunOutcome {
                stop: source.time(),
                censored: false,
            });
        }
    }
    Ok(RunOutcome {
        stop: cap,
        censored: true,
    })
}

/// Runs replications `0..reps` in parallel; results keep replication order.
pub fn run_replications(
    spec: &SchemeSpec,
    models: &[StreamModel],
    scenario: &ChangeScenario,
    seeds: &SeedSpec,
    reps: u64,
    cap: u64,
) -> Result<Vec<RunOutcome>> {
    if reps == 0 {
        return Err(Error::ZeroReplications);
    }
    // Fail fast on a bad spec before fanning out.
    Monitor::new(spec, models)?;
    (0..reps)
        .into_par_iter()
        .map(|rep| run_until_alarm(spec, models, scenario, seeds, rep, cap))
        .collect()
}

/// Mean, standard error and censored count of stopping times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopSummary {
    pub mean: f64,
    pub se: f64,
    pub censored: usize,
    pub reps: usize,
}

impl StopSummary {
    pub fn from_values<I: IntoIterator<Item = (f64, bool)>>(values: I) -> Self {
        let buf: Vec<(f64, bool)> = values.into_iter().collect();
        let reps = buf.len();
        let censored = buf.iter().filter(|(_, c)| *c).count();
        if reps == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                censored,
                reps,
            };
        }
        let mean = buf.iter().map(|(v, _)| v).sum::<f64>() / reps as f64;
        let se = if reps > 1 {
            let ss: f64 = buf.iter().map(|(v, _)| (v - mean) * (v - mean)).sum();
            (ss / (reps as f64 - 1.0)).sqrt() / (reps as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            se,
            censored,
            reps,
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.reps == 0 {
            0.0
        } else {
            self.censored as f64 / self.reps as f64
        }
    }
}

/// A resumable replication that keeps the upper records of `G_n`.
///
/// The stopping time at any threshold `a` is the time of the first record
/// with value `≥ a`, so once a run has reached level `L` every threshold up
/// to `L` is answered without re-simulating: common random numbers across
/// all candidate thresholds for free.
#[derive(Debug, Clone)]
pub(crate) struct RecordingRun<'a> {
    monitor: Monitor,
    source: PathSource<'a>,
    obs: Vec<f64>,
    times: Vec<u64>,
    values: Vec<f64>,
}

impl<'a> RecordingRun<'a> {
    pub(crate) fn new(
        spec: &SchemeSpec,
        models: &'a [StreamModel],
        scenario: &'a ChangeScenario,
        seeds: &SeedSpec,
        rep: u64,
    ) -> Result<Self> {
        let open = spec.with_threshold(f64::INFINITY);
        Ok(Self {
            monitor: Monitor::new(&open, models)?,
            source: PathSource::new(models, scenario, seeds, rep)?,
            obs: vec![0.0; models.len()],
            times: Vec::new(),
            values: Vec::new(),
        })
    }

    fn best(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Simulates until some `G_n ≥ level` or `n = cap`.
    pub(crate) fn extend_to(&mut self, level: f64, cap: u64) -> Result<()> {
        let mut best = self.best();
        while best < level && self.source.time() < cap {
            self.source.fill_next(&mut self.obs);
            let g = self.monitor.step(&self.obs)?.g;
            if g > best {
                best = g;
                self.times.push(self.source.time());
                self.values.push(g);
            }
        }
        Ok(())
    }

    /// Stopping time at threshold `a`; `None` if the run has not been
    /// simulated far enough to know.
    pub(crate) fn stop_at(&self, a: f64, cap: u64) -> Option<RunOutcome> {
        let idx = self.values.partition_point(|&g| g < a);
        if idx < self.values.len() {
            Some(RunOutcome {
                stop: self.times[idx],
                censored: false,
            })
        } else if self.source.time() >= cap {
            Some(RunOutcome {
                stop: cap,
                censored: true,
            })
        } else {
            None
        }
    }
}
