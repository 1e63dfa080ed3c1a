// SPDX-License-Identifier: Apache-2.0

//! TOML run configuration and its resolution into core specs.

use std::path::Path;

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};
use sumshrink_core::{
    censoring_from_eta, CalibrationTarget, ChangeScenario, DetectorKind, LpConfig, SchemeSpec,
    Shrinkage, StreamModel, DEFAULT_DELAY_HORIZON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Paper-scale replication counts.
    Paper,
    /// Reduced counts for a laptop.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm: Option<CommSection>,
    #[serde(default, rename = "scheme")]
    pub schemes: Vec<SchemeEntry>,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<ScenarioEntry>,
}

fn default_post_mean() -> f64 {
    1.0
}
fn default_paper_reps() -> u64 {
    2500
}
fn default_desk_reps() -> u64 {
    500
}
fn default_delay_horizon() -> u64 {
    DEFAULT_DELAY_HORIZON
}
fn default_cap_tolerance() -> f64 {
    0.01
}
fn default_rel_tol() -> f64 {
    0.02
}
fn default_max_threshold() -> f64 {
    1e4
}
fn default_comm_horizon() -> u64 {
    1000
}
fn default_comm_reps() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub k: usize,
    #[serde(default = "default_post_mean")]
    pub post_mean: f64,
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paper_reps")]
    pub reps: u64,
    #[serde(default = "default_desk_reps")]
    pub desk_reps: u64,
    #[serde(default = "default_delay_horizon")]
    pub delay_horizon: u64,
    /// Shorthand for scenarios where streams `1..m` change at time 1.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub affected_counts: Vec<usize>,
    /// Largest tolerated fraction of replications stopped by a horizon cap.
    #[serde(default = "default_cap_tolerance")]
    pub cap_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    #[serde(default = "default_paper_reps")]
    pub reps: u64,
    #[serde(default = "default_desk_reps")]
    pub desk_reps: u64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_cap: Option<u64>,
    #[serde(default = "default_max_threshold")]
    pub max_threshold: f64,
    /// Seed the lower bracket with the CLT heuristic.
    #[serde(default)]
    pub clt_start: bool,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            reps: default_paper_reps(),
            desk_reps: default_desk_reps(),
            rel_tol: default_rel_tol(),
            horizon_cap: None,
            max_threshold: default_max_threshold(),
            clt_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSection {
    #[serde(default = "default_comm_horizon")]
    pub horizon: u64,
    #[serde(default = "default_comm_reps")]
    pub reps: u64,
    #[serde(default)]
    pub detector: DetectorName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp: Option<LpConfig>,
    /// Common censoring levels, one report each.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<f64>,
    /// Target fractions; each is turned into `b_k` by KL weighting.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorName {
    #[default]
    Cusum,
    Sr,
    SrPositive,
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkageName {
    Max,
    Sum,
    Hard,
    Soft,
    Order,
    Comb,
    Xs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BSpec {
    Common(f64),
    PerStream(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntry {
    pub id: String,
    #[serde(default)]
    pub detector: DetectorName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp: Option<LpConfig>,
    pub shrinkage: ShrinkageName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<BSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Affected {
    Count(usize),
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<u64>,
    pub affected: Affected,
    /// Per affected stream, in the order listed; defaults to all zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_mean: Option<f64>,
}

/// A scheme ready to run plus what the output needs to describe it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedScheme {
    pub id: String,
    /// Threshold is a placeholder when `fixed_a` is `None`.
    pub spec: SchemeSpec,
    pub fixed_a: Option<f64>,
    pub b_spec: String,
    /// KL weights `ρ_k`, present for censoring rules.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(skip)]
    pub bracket: Option<(f64, f64)>,
}

impl ResolvedScheme {
    pub fn r_label(&self) -> String {
        self.spec
            .shrinkage
            .order()
            .map(|r| r.to_string())
            .unwrap_or_default()
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> anyhow::Result<()> {
        let e = &self.experiment;
        ensure!(e.k > 0, "experiment.k must be positive");
        ensure!(
            e.gamma.is_finite() && e.gamma > 1.0,
            "experiment.gamma must exceed 1"
        );
        ensure!(
            e.post_mean.is_finite() && e.post_mean != 0.0,
            "experiment.post_mean must be nonzero"
        );
        ensure!(
            (0.0..=1.0).contains(&e.cap_tolerance),
            "experiment.cap_tolerance must lie in [0, 1]"
        );
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.schemes {
            ensure!(
                !s.id.is_empty() && !s.id.contains([',', '"', '\n']),
                "scheme id {:?} must be non-empty without commas or quotes",
                s.id
            );
            ensure!(seen.insert(s.id.as_str()), "duplicate scheme id {:?}", s.id);
        }
        ensure!(
            self.scenarios.is_empty() || e.affected_counts.is_empty(),
            "give either experiment.affected_counts or [[scenario]] tables, not both"
        );
        Ok(())
    }

    pub fn models(&self) -> anyhow::Result<Vec<StreamModel>> {
        Ok(StreamModel::homogeneous(
            self.experiment.k,
            self.experiment.post_mean,
        )?)
    }

    pub fn delay_reps(&self, profile: Profile, reps_override: Option<u64>) -> u64 {
        reps_override.unwrap_or(match profile {
            Profile::Paper => self.experiment.reps,
            Profile::Desk => self.experiment.desk_reps,
        })
    }

    pub fn calibration_target(
        &self,
        profile: Profile,
        reps_override: Option<u64>,
    ) -> CalibrationTarget {
        let c = &self.calibration;
        let reps = reps_override.unwrap_or(match profile {
            Profile::Paper => c.reps,
            Profile::Desk => c.desk_reps,
        });
        let mut t = CalibrationTarget::new(self.experiment.gamma, reps);
        t.rel_tol = c.rel_tol;
        t.max_threshold = c.max_threshold;
        if let Some(cap) = c.horizon_cap {
            t.horizon_cap = cap;
        }
        t
    }

    pub fn scenarios(&self) -> anyhow::Result<Vec<ChangeScenario>> {
        let k = self.experiment.k;
        if !self.experiment.affected_counts.is_empty() {
            return self
                .experiment
                .affected_counts
                .iter()
                .map(|&m| Ok(ChangeScenario::first_affected(k, m, 1)?))
                .collect();
        }
        self.scenarios.iter().map(|s| s.resolve(k)).collect()
    }

    pub fn resolved_schemes(&self) -> anyhow::Result<Vec<ResolvedScheme>> {
        let models = self.models()?;
        let kl: Vec<f64> = models.iter().map(|m| m.kl_number()).collect();
        self.schemes
            .iter()
            .map(|s| {
                s.resolve(self.experiment.k, &kl)
                    .with_context(|| format!("scheme {:?}", s.id))
            })
            .collect()
    }
}

impl ScenarioEntry {
    fn resolve(&self, k: usize) -> anyhow::Result<ChangeScenario> {
        let nu = self.nu.unwrap_or(1);
        let indices: Vec<usize> = match &self.affected {
            Affected::Count(m) => (0..*m).collect(),
            Affected::Indices(idx) => idx.iter().map(|i| i.wrapping_sub(1)).collect(),
        };
        if let Affected::Indices(idx) = &self.affected {
            ensure!(
                idx.iter().all(|&i| i >= 1 && i <= k),
                "stream indices are 1-based and at most K"
            );
        }
        let mut scen = match &self.delays {
            None => {
                ensure!(indices.len() <= k, "more affected streams than K");
                ChangeScenario::with_indices(k, &indices, nu)?
            }
            Some(d) => {
                ensure!(
                    d.len() == indices.len(),
                    "one delay per affected stream is required"
                );
                let mut delays = vec![None; k];
                for (&i, &dk) in indices.iter().zip(d) {
                    delays[i] = Some(dk);
                }
                ChangeScenario::new(Some(nu), delays)?
            }
        };
        if let Some(mu) = self.post_mean {
            scen = scen.with_post_mean(mu)?;
        }
        Ok(scen)
    }
}

fn format_b(b: &[f64]) -> String {
    match b.first() {
        Some(first) if b.iter().all(|x| x == first) => format!("{first}"),
        _ => "vector".to_string(),
    }
}

impl SchemeEntry {
    fn detector_kind(&self) -> DetectorKind {
        detector_kind(self.detector, self.lp)
    }

    fn censoring(&self, k: usize, kl: &[f64]) -> anyhow::Result<(Vec<f64>, String, Vec<f64>)> {
        let total: f64 = kl.iter().sum();
        let rho: Vec<f64> = kl.iter().map(|i| i / total).collect();
        match (&self.b, self.eta) {
            (Some(_), Some(_)) => bail!("give either b or eta, not both"),
            (None, Some(eta)) => {
                let plan = censoring_from_eta(eta, kl)?;
                Ok((plan.thresholds, format!("eta={eta}"), plan.weights))
            }
            (Some(BSpec::Common(b)), None) => Ok((vec![*b; k], format!("{b}"), rho)),
            (Some(BSpec::PerStream(v)), None) => {
                ensure!(v.len() == k, "b has {} entries for {k} streams", v.len());
                Ok((v.clone(), format_b(v), rho))
            }
            (None, None) => Ok((vec![0.0; k], "0".to_string(), rho)),
        }
    }

    fn resolve(&self, k: usize, kl: &[f64]) -> anyhow::Result<ResolvedScheme> {
        let needs_b = matches!(
            self.shrinkage,
            ShrinkageName::Hard | ShrinkageName::Soft | ShrinkageName::Comb
        );
        if !needs_b {
            ensure!(
                self.b.is_none() && self.eta.is_none(),
                "b/eta only apply to hard, soft and comb"
            );
        }
        let needs_r = matches!(self.shrinkage, ShrinkageName::Order | ShrinkageName::Comb);
        if needs_r {
            ensure!(self.r.is_some(), "r is required");
        } else {
            ensure!(self.r.is_none(), "r only applies to order and comb");
        }
        let (shrinkage, b_spec, rho) = match self.shrinkage {
            ShrinkageName::Max => (Shrinkage::Max, String::new(), None),
            ShrinkageName::Sum => (Shrinkage::Sum, String::new(), None),
            ShrinkageName::Order => (
                Shrinkage::Order {
                    r: self.r.unwrap_or(1),
                },
                String::new(),
                None,
            ),
            ShrinkageName::Hard | ShrinkageName::Soft | ShrinkageName::Comb => {
                let (b, label, rho) = self.censoring(k, kl)?;
                let sh = match self.shrinkage {
                    ShrinkageName::Hard => Shrinkage::Hard { b },
                    ShrinkageName::Soft => Shrinkage::Soft { b },
                    _ => Shrinkage::Comb {
                        r: self.r.unwrap_or(1),
                        b,
                    },
                };
                (sh, label, Some(rho))
            }
            ShrinkageName::Xs => {
                let p0 = self.p0.context("p0 is required for xs")?;
                let window = self
                    .window
                    .unwrap_or(sumshrink_core::combiners::DEFAULT_XS_WINDOW);
                (Shrinkage::Xs { p0, window }, format!("p0={p0}"), None)
            }
        };
        if !matches!(self.shrinkage, ShrinkageName::Xs) {
            ensure!(
                self.p0.is_none() && self.window.is_none(),
                "p0/window only apply to xs"
            );
        }
        let spec = SchemeSpec::new(self.detector_kind(), shrinkage, self.a.unwrap_or(1.0));
        spec.validate(k)?;
        Ok(ResolvedScheme {
            id: self.id.clone(),
            spec,
            fixed_a: self.a,
            b_spec,
            rho,
            bracket: self.bracket.map(|[lo, hi]| (lo, hi)),
        })
    }
}

pub fn detector_kind(name: DetectorName, lp: Option<LpConfig>) -> DetectorKind {
    match name {
        DetectorName::Cusum => DetectorKind::Cusum,
        DetectorName::Sr => DetectorKind::Sr {
            positive_part: false,
        },
        DetectorName::SrPositive => DetectorKind::Sr {
            positive_part: true,
        },
        DetectorName::Lp => DetectorKind::LpTwoSided {
            lp: lp.unwrap_or_default(),
        },
    }
}
