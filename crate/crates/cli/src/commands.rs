// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use log::warn;
use serde_json::{json, Value};
use sumshrink_core::rng::{CALIBRATION_DOMAIN, COMM_DOMAIN, MOMENTS_DOMAIN};
use sumshrink_core::{
    arl_bound_report, calibrate_threshold, censoring_from_eta, estimate_stationary_moments,
    info_lower_bound, log_arl_bound, run_table, transmission_fraction, ChangeScenario, Error,
    ExperimentSpec, LabeledScheme, SeedSpec, StreamModel,
};

use crate::config::{detector_kind, ResolvedScheme, RunConfig};
use crate::{BoundsArgs, Cli, Command, GlobalOpts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Runtime,
    Config,
    Calibration,
    Horizon,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Runtime => 1,
            FailureKind::Config => 2,
            FailureKind::Calibration => 3,
            FailureKind::Horizon => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for Failure {}

fn fail(kind: FailureKind) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { kind, error }
}

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    fail(FailureKind::Config)(e.into())
}

fn core_err(e: Error) -> Failure {
    let kind = match e {
        Error::BracketNotFound { .. } => FailureKind::Calibration,
        Error::InvalidParameter(_) | Error::LengthMismatch { .. } | Error::NoAffectedStreams => {
            FailureKind::Config
        }
        _ => FailureKind::Runtime,
    };
    fail(kind)(e.into())
}

type Outcome = std::result::Result<(), Failure>;

/// Sends finished result files to `--out-dir`, or to stdout.
struct Sink<'a> {
    dir: Option<&'a Path>,
}

impl Sink<'_> {
    fn emit(&self, name: &str, body: &str) -> Outcome {
        match self.dir {
            Some(dir) => std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(dir.join(name), body))
                .with_context(|| format!("writing {}", dir.join(name).display()))
                .map_err(fail(FailureKind::Runtime)),
            None => {
                print!("{body}");
                Ok(())
            }
        }
    }
}

fn json_lines(values: &[Value]) -> String {
    let mut out = String::new();
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

struct Ctx<'a> {
    opts: &'a GlobalOpts,
    cfg: RunConfig,
    seed: u64,
}

impl<'a> Ctx<'a> {
    fn load(opts: &'a GlobalOpts, path: &Path) -> Result<Self, Failure> {
        let cfg = RunConfig::load(path).map_err(config_err)?;
        let seed = opts.seed.unwrap_or(cfg.experiment.seed);
        Ok(Self { opts, cfg, seed })
    }

    fn models(&self) -> Result<Vec<StreamModel>, Failure> {
        self.cfg.models().map_err(config_err)
    }

    fn echo(&self, command: &str, reps: u64, schemes: &[ResolvedScheme]) -> Value {
        json!({
            "command": command,
            "profile": self.opts.profile,
            "seed": self.seed,
            "reps": reps,
            "config": self.cfg,
            "resolved_schemes": schemes,
        })
    }
}

pub fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| fail(FailureKind::Runtime)(anyhow!(e)))?;
    }
    let sink = Sink {
        dir: cli.global.out_dir.as_deref(),
    };
    match &cli.command {
        Command::Calibrate { config } => calibrate(&Ctx::load(&cli.global, config)?, &sink),
        Command::Delay { config, calibrated } => delay(
            &Ctx::load(&cli.global, config)?,
            calibrated.as_deref(),
            &sink,
        ),
        Command::Comm { config } => comm(&Ctx::load(&cli.global, config)?, &sink),
        Command::Bounds(args) => bounds(args, &sink),
    }
}

fn calibrate(ctx: &Ctx, sink: &Sink) -> Outcome {
    let schemes = ctx.cfg.resolved_schemes().map_err(config_err)?;
    let models = ctx.models()?;
    let base = ctx.cfg.calibration_target(ctx.opts.profile, ctx.opts.reps);
    let seeds = SeedSpec::new(ctx.seed).domain(CALIBRATION_DOMAIN);
    let tolerance = ctx.cfg.experiment.cap_tolerance;
    let mut lines = vec![ctx.echo("calibrate", base.reps, &schemes)];
    let mut worst = None;
    for scheme in &schemes {
        if let Some(a) = scheme.fixed_a {
            warn!(
                "scheme {} already has a = {a}; not calibrating it",
                scheme.id
            );
            continue;
        }
        let mut target = base;
        target.bracket = scheme.bracket;
        let moments = if ctx.cfg.calibration.clt_start {
            let m = estimate_stationary_moments(
                &scheme.spec,
                &models,
                200,
                2000,
                20,
                &SeedSpec::new(ctx.seed).domain(MOMENTS_DOMAIN),
            )
            .map_err(core_err)?;
            Some(m)
        } else {
            None
        };
        match calibrate_threshold(&scheme.spec, &models, &target, &seeds, moments.as_ref()) {
            Ok(r) => {
                lines.push(json!({
                    "scheme": scheme.id,
                    "a": r.a,
                    "arl_hat": r.arl_hat,
                    "se": r.se,
                    "iterations": r.iterations,
                    "censored_fraction": r.censored_fraction,
                    "converged": r.converged,
                }));
                if r.censored_fraction > tolerance {
                    worst.get_or_insert(FailureKind::Horizon);
                }
            }
            Err(e @ Error::BracketNotFound { .. }) => {
                eprintln!("scheme {}: {e}", scheme.id);
                lines.push(json!({ "scheme": scheme.id, "error": e.to_string() }));
                worst = Some(FailureKind::Calibration);
            }
            Err(e) => return Err(core_err(e)),
        }
    }
    sink.emit("calibration.jsonl", &json_lines(&lines))?;
    match worst {
        Some(kind) => Err(fail(kind)(anyhow!(match kind {
            FailureKind::Calibration => "calibration failed for at least one scheme",
            _ => "horizon cap reached by more replications than tolerated",
        }))),
        None => Ok(()),
    }
}

fn read_calibrated(path: &Path) -> Result<BTreeMap<String, f64>, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).map_err(config_err)?;
        if let (Some(id), Some(a)) = (v["scheme"].as_str(), v["a"].as_f64()) {
            out.insert(id.to_string(), a);
        }
    }
    Ok(out)
}

pub const CSV_HEADER: &str = "scheme_id,a,b_spec,r,affected_count,mean_delay,se,reps,lower_bound";

fn delay(ctx: &Ctx, calibrated: Option<&Path>, sink: &Sink) -> Outcome {
    let mut schemes = ctx.cfg.resolved_schemes().map_err(config_err)?;
    let known = match calibrated {
        Some(p) => read_calibrated(p)?,
        None => BTreeMap::new(),
    };
    for s in &mut schemes {
        let a = s
            .fixed_a
            .or_else(|| known.get(&s.id).copied())
            .ok_or_else(|| {
                config_err(anyhow!(
                    "scheme {} has no threshold; run calibrate first",
                    s.id
                ))
            })?;
        s.fixed_a = Some(a);
        s.spec = s.spec.with_threshold(a);
    }
    let reps = ctx.cfg.delay_reps(ctx.opts.profile, ctx.opts.reps);
    let e = &ctx.cfg.experiment;
    let spec = ExperimentSpec {
        k: e.k,
        post_mean: e.post_mean,
        schemes: schemes
            .iter()
            .map(|s| LabeledScheme {
                id: s.id.clone(),
                spec: s.spec.clone(),
            })
            .collect(),
        scenarios: ctx.cfg.scenarios().map_err(config_err)?,
        gamma: e.gamma,
        reps,
        seed: ctx.seed,
        delay_horizon: e.delay_horizon,
    };
    let table = run_table(&spec).map_err(core_err)?;

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut lines = vec![ctx.echo("delay", reps, &schemes)];
    let mut over_cap = Vec::new();
    for (scheme, row) in schemes.iter().zip(&table.cells) {
        let a = scheme.spec.a;
        let r = scheme.r_label();
        for ((cell, &m), &bound) in row
            .iter()
            .zip(&table.affected_counts)
            .zip(&table.lower_bounds)
        {
            writeln!(
                csv,
                "{},{a},{},{r},{m},{:.4},{:.4},{},{:.6e}",
                scheme.id, scheme.b_spec, cell.mean_delay, cell.se, cell.reps, bound
            )
            .expect("writing to a String");
            lines.push(json!({
                "scheme_id": scheme.id,
                "a": a,
                "b_spec": scheme.b_spec,
                "r": r,
                "affected_count": m,
                "mean_delay": cell.mean_delay,
                "se": cell.se,
                "reps": cell.reps,
                "cap_hits": cell.cap_hits,
                "lower_bound": bound,
            }));
            if cell.cap_fraction() > e.cap_tolerance {
                over_cap.push(format!("{} (m={m}: {} hits)", scheme.id, cell.cap_hits));
            }
        }
    }
    lines.push(json!({
        "affected_counts": table.affected_counts,
        "se_min": table.se_min,
        "se_max": table.se_max,
    }));
    sink.emit("delays.csv", &csv)?;
    if sink.dir.is_some() {
        sink.emit("delays.jsonl", &json_lines(&lines))?;
    }
    if over_cap.is_empty() {
        Ok(())
    } else {
        Err(fail(FailureKind::Horizon)(anyhow!(
            "delay horizon {} reached too often: {}",
            e.delay_horizon,
            over_cap.join(", ")
        )))
    }
}

fn comm(ctx: &Ctx, sink: &Sink) -> Outcome {
    let section = ctx
        .cfg
        .comm
        .as_ref()
        .ok_or_else(|| config_err(anyhow!("the config has no [comm] section")))?;
    let models = ctx.models()?;
    let k = models.len();
    let kl: Vec<f64> = models.iter().map(|m| m.kl_number()).collect();
    let reps = ctx.opts.reps.unwrap_or(section.reps);
    let detector = detector_kind(section.detector, section.lp);
    let seeds = SeedSpec::new(ctx.seed).domain(COMM_DOMAIN);

    let mut settings: Vec<(String, Vec<f64>, f64)> = Vec::new();
    for &b in &section.b {
        settings.push((format!("{b}"), vec![b; k], (-b).exp()));
    }
    for &eta in &section.eta {
        let plan = censoring_from_eta(eta, &kl).map_err(core_err)?;
        settings.push((format!("eta={eta}"), plan.thresholds, eta));
    }
    let mut lines = vec![json!({
        "command": "comm",
        "seed": ctx.seed,
        "reps": reps,
        "config": ctx.cfg,
        "settings": settings.iter().map(|(label, b, _)| json!({"b_spec": label, "b": b})).collect::<Vec<_>>(),
    })];
    for (label, b, reference) in &settings {
        let rep = transmission_fraction(&detector, &models, b, section.horizon, reps, &seeds)
            .map_err(core_err)?;
        eprintln!(
            "b_spec={label}: fraction {:.5} (se {:.5}), reference {:.5}",
            rep.mean_fraction, rep.se, reference
        );
        lines.push(json!({
            "b_spec": label,
            "mean_fraction": rep.mean_fraction,
            "se": rep.se,
            "reps": rep.reps,
            "horizon": rep.horizon,
            "reference": reference,
        }));
    }
    sink.emit("comm.jsonl", &json_lines(&lines))
}

fn bounds(args: &BoundsArgs, sink: &Sink) -> Outcome {
    let mut lines = vec![json!({
        "k": args.k,
        "a": args.a,
        "arl_bound": arl_bound_report(args.k, args.a).map_err(core_err)?,
        "log_arl_bound": log_arl_bound(args.k, args.a).map_err(core_err)?,
    })];
    if let Some(gamma) = args.gamma {
        let m = args.affected.unwrap_or(args.k);
        let models = StreamModel::homogeneous(args.k, args.mu).map_err(core_err)?;
        let scen = ChangeScenario::first_affected(args.k, m, 1).map_err(core_err)?;
        lines.push(json!({
            "gamma": gamma,
            "affected": m,
            "mu": args.mu,
            "delay_lower_bound": info_lower_bound(gamma, &scen, &models).map_err(core_err)?,
        }));
    }
    sink.emit("bounds.jsonl", &json_lines(&lines))
}
