//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use loewner::chain::{chain_csv, ChainEvaluator, RangePoint};
use loewner::field::polynomial::load_field_file;
use loewner::field::{builtin_field_with_tol, corpus_with_tol, Family, FieldSpec, ParamTable};
use loewner::flow::{trajectories, trajectory_csv, FlowRequest};
use loewner::sampling::sphere_directions;
use loewner::schedule::{build_schedule, schedule_for_path, EllSource, Schedule};
use loewner::verify::{analyze_field, run_suite, SuiteConfig};
use loewner::C64;

use crate::args::{Cli, Command, GlobalArgs, GridArgs};
use crate::output::{sha256_hex, versioned, Sink};
use crate::points::parse_points;
use crate::{CliError, EXIT_CHECK_FAILED, EXIT_NUMERICAL, EXIT_PASS};

pub const TOL_RANGE: (f64, f64) = (1e-14, 1e-2);
pub const HORIZON_RANGE: (usize, usize) = (1, 10_000);
const DEFAULT_CHAIN_RADII: [f64; 3] = [0.25, 0.5, 0.75];
const DEFAULT_CHAIN_DIRECTIONS: usize = 8;

/// Where the field comes from.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FieldSource {
    Builtin { family: String, params: ParamTable },
    File { path: PathBuf, sha256: String },
    Corpus,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub ode: f64,
    pub quad: f64,
    pub chain: f64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub field: FieldSource,
    pub tolerances: Tolerances,
    #[serde(rename = "horizon_N")]
    pub horizon: usize,
    pub seed: u64,
    pub dense: bool,
    pub command: Command,
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    let Cli { global, command } = cli;
    validate(&global)?;
    let corpus = matches!(command, Command::Verify { corpus: true, .. });
    let source = field_source(&global, corpus)?;
    let config = RunConfig {
        field: source,
        tolerances: Tolerances { ode: global.tol_ode, quad: global.tol_quad, chain: global.tol_chain },
        horizon: global.horizon,
        seed: global.seed,
        dense: global.dense,
        command: command.clone(),
    };
    let mut sink = Sink::new(global.out.clone())?;
    let (code, notes) = match &command {
        Command::Analyze => analyze(&config, &mut sink)?,
        Command::Flow { s, t, z } => flow(&config, *s, *t, z, &mut sink)?,
        Command::Schedule { ell, r } => schedule(&config, *ell, *r, &mut sink)?,
        Command::Chain { t, grid } => chain(&config, t, grid, &mut sink)?,
        Command::Verify { per_shell, .. } => verify(&config, *per_shell, &mut sink)?,
        Command::Range { t, radii, directions } => range(&config, t, radii, *directions, &mut sink)?,
    };
    sink.manifest(command_name(&command), &config, notes)?;
    Ok(code)
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Analyze => "analyze",
        Command::Flow { .. } => "flow",
        Command::Schedule { .. } => "schedule",
        Command::Chain { .. } => "chain",
        Command::Verify { .. } => "verify",
        Command::Range { .. } => "range",
    }
}

fn validate(global: &GlobalArgs) -> Result<(), CliError> {
    let (lo, hi) = TOL_RANGE;
    for (key, v) in [("--tol-ode", global.tol_ode), ("--tol-quad", global.tol_quad), ("--tol-chain", global.tol_chain)] {
        if !(lo..=hi).contains(&v) {
            return Err(CliError::usage(format!("{key} = {v} outside [{lo:e}, {hi:e}]")));
        }
    }
    let (lo, hi) = HORIZON_RANGE;
    if !(lo..=hi).contains(&global.horizon) {
        return Err(CliError::usage(format!("--horizon = {} outside [{lo}, {hi}]", global.horizon)));
    }
    Ok(())
}

fn parse_params(raw: &[String]) -> Result<ParamTable, CliError> {
    let mut table = BTreeMap::new();
    for item in raw {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--param `{item}`: expected key=value")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("--param `{}`: `{value}` is not a number", key.trim())))?;
        if table.insert(key.trim().to_string(), v).is_some() {
            return Err(CliError::usage(format!("--param `{}` given twice", key.trim())));
        }
    }
    Ok(table)
}

fn field_source(global: &GlobalArgs, corpus: bool) -> Result<FieldSource, CliError> {
    let params = parse_params(&global.params)?;
    match (&global.builtin, &global.field, corpus) {
        (None, None, true) if params.is_empty() => Ok(FieldSource::Corpus),
        (_, _, true) => Err(CliError::usage("--corpus takes no --builtin, --field or --param")),
        (Some(name), None, false) => {
            let family: Family = name.parse()?;
            Ok(FieldSource::Builtin { family: family.name().to_string(), params })
        }
        (None, Some(path), false) => {
            if !params.is_empty() {
                return Err(CliError::usage("--param applies to built-in fields only"));
            }
            let bytes =
                std::fs::read(path).map_err(|e| CliError::usage(format!("field file {}: {e}", path.display())))?;
            Ok(FieldSource::File { path: path.clone(), sha256: sha256_hex(&bytes) })
        }
        (None, None, false) => Err(CliError::usage("one of --builtin or --field is required")),
        (Some(_), Some(_), false) => Err(CliError::usage("--builtin and --field are mutually exclusive")),
    }
}

/// Builds the field of a single-field run, with its report label.
fn load_field(config: &RunConfig) -> Result<(String, FieldSpec), CliError> {
    let quad = config.tolerances.quad;
    match &config.field {
        FieldSource::Builtin { family, params } => {
            let fam: Family = family.parse()?;
            Ok((family.clone(), builtin_field_with_tol(fam, params, quad)?))
        }
        FieldSource::File { path, .. } => Ok((label_of(path), load_field_file(path, quad)?)),
        FieldSource::Corpus => Err(CliError::usage("this command needs a single field")),
    }
}

fn label_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn suite_config(config: &RunConfig, per_shell: Option<usize>) -> Result<SuiteConfig, CliError> {
    let mut cfg = SuiteConfig {
        tol_ode: config.tolerances.ode,
        tol_chain: config.tolerances.chain,
        horizon: config.horizon,
        seed: config.seed,
        ..SuiteConfig::default()
    };
    if let Some(n) = per_shell {
        if n == 0 {
            return Err(CliError::usage("--per-shell must be positive"));
        }
        cfg.per_shell = n;
    }
    Ok(cfg)
}

fn check_times(times: &[f64]) -> Result<(), CliError> {
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(CliError::usage(format!("--t: time {t} must be finite and >= 0")));
    }
    Ok(())
}

fn check_radii(radii: &[f64]) -> Result<(), CliError> {
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(CliError::usage(format!("--radii: radius {r} outside [0, 1)")));
    }
    Ok(())
}

type Outcome = (u8, Value);

fn analyze(config: &RunConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let (label, field) = load_field(config)?;
    let report = analyze_field(&label, &field, &suite_config(config, None)?)?;
    sink.json("analyze.json", &versioned(&report)?)?;
    let code = if report.passed { EXIT_PASS } else { EXIT_CHECK_FAILED };
    Ok((code, json!({ "passed": report.passed })))
}

fn flow(config: &RunConfig, s: f64, t: f64, z: &str, sink: &mut Sink) -> Result<Outcome, CliError> {
    let (_, field) = load_field(config)?;
    let points = parse_points(z, field.dim()).map_err(|e| CliError::usage(format!("--z: {e}")))?;
    let req = FlowRequest { field: &field, s, t, points, tol: config.tolerances.ode };
    let rows = trajectories(&req, config.dense)?;
    sink.text("flow.csv", &trajectory_csv(&rows, field.dim()))?;
    Ok((EXIT_PASS, json!({ "rows": rows.len() })))
}

/// Why the chain cannot be evaluated on this schedule, if it cannot.
fn chain_unavailable(schedule: &Schedule) -> Option<String> {
    if schedule.h_int > 2 {
        Some(format!("ell = {} needs jet matching of degree h = {} > 2", schedule.ell, schedule.h_int))
    } else if !schedule.accepted {
        Some("schedule rejected".into())
    } else {
        None
    }
}

fn schedule(config: &RunConfig, ell: Option<f64>, r: Option<f64>, sink: &mut Sink) -> Result<Outcome, CliError> {
    let (_, field) = load_field(config)?;
    let schedule = match ell {
        Some(ell) => build_schedule(field.linear(), ell, EllSource::UserSupplied, config.horizon, r)?,
        None => schedule_for_path(field.linear(), config.horizon, r)?,
    };
    sink.json("schedule.json", &versioned(&schedule)?)?;
    let reason = chain_unavailable(&schedule);
    let notes = json!({
        "ell_source": schedule.ell_source,
        "failing_index": schedule.failing_index(),
        "chain_available": reason.is_none(),
        "chain_unavailable_reason": reason,
        "nu_note": "nu is the minimum over the first horizon_N steps; extending the horizon can only shrink it",
    });
    let code = if schedule.accepted { EXIT_PASS } else { EXIT_CHECK_FAILED };
    Ok((code, notes))
}

fn evaluator(config: &RunConfig) -> Result<ChainEvaluator, CliError> {
    let (_, field) = load_field(config)?;
    Ok(ChainEvaluator::for_field(field, config.horizon, config.tolerances.ode, config.tolerances.chain)?)
}

fn schedule_notes(ev: &ChainEvaluator) -> Value {
    let s = ev.schedule();
    json!({
        "ell": s.ell,
        "ell_source": s.ell_source,
        "h": s.h_int,
        "r": s.r,
        "mu": s.mu,
        "nu": s.nu,
        "contraction_ratio": s.contraction_ratio(),
        "increment_threshold": ev.increment_threshold(),
        "u_N": s.last_time(),
    })
}

fn chain(config: &RunConfig, times: &[f64], grid: &GridArgs, sink: &mut Sink) -> Result<Outcome, CliError> {
    check_times(times)?;
    check_radii(&grid.radii)?;
    let ev = evaluator(config)?;
    let q = ev.field().dim();
    let points: Vec<Vec<C64>> = match &grid.z {
        Some(z) => parse_points(z, q).map_err(|e| CliError::usage(format!("--z: {e}")))?,
        None => {
            let radii = if grid.radii.is_empty() { DEFAULT_CHAIN_RADII.to_vec() } else { grid.radii.clone() };
            let dirs = sphere_directions(q, grid.directions.unwrap_or(DEFAULT_CHAIN_DIRECTIONS), config.seed);
            radii.iter().flat_map(|&r| dirs.iter().map(move |d| d.iter().map(|c| c * r).collect())).collect()
        }
    };
    let mut rows = Vec::with_capacity(times.len() * points.len());
    let mut per_time = Vec::with_capacity(times.len());
    for &t in times {
        let values = ev.eval_many(t, &points)?;
        let converged = values.iter().filter(|v| v.converged).count();
        let max_m = values.iter().map(|v| v.m_used).max().unwrap_or(0);
        let max_inc = values.iter().map(|v| v.last_increment).fold(0.0_f64, f64::max);
        per_time.push(json!({
            "t": t,
            "points": values.len(),
            "converged": converged,
            "max_m_used": max_m,
            "max_last_increment": max_inc,
        }));
        rows.extend(points.iter().zip(values).map(|(z, v)| RangePoint {
            t,
            z: z.clone(),
            f: v.value,
            m_used: v.m_used,
            converged: v.converged,
        }));
    }
    let unconverged = rows.iter().filter(|r| !r.converged).count();
    sink.text("chain.csv", &chain_csv(&rows, q))?;
    let summary = json!({
        "schema_version": crate::output::SCHEMA_VERSION,
        "evaluations": rows.len(),
        "unconverged": unconverged,
        "all_converged": unconverged == 0,
        "schedule": schedule_notes(&ev),
        "per_time": per_time,
    });
    sink.json("chain_summary.json", &summary)?;
    let code = if unconverged == 0 { EXIT_PASS } else { EXIT_NUMERICAL };
    Ok((code, json!({ "all_converged": unconverged == 0 })))
}

fn verify(config: &RunConfig, per_shell: Option<usize>, sink: &mut Sink) -> Result<Outcome, CliError> {
    let cfg = suite_config(config, per_shell)?;
    let fields = match &config.field {
        FieldSource::Corpus => corpus_with_tol(config.tolerances.quad),
        _ => vec![load_field(config)?],
    };
    let mut reports = Vec::with_capacity(fields.len());
    for (label, field) in &fields {
        reports.push(run_suite(label, field, &cfg)?);
    }
    let passed = reports.iter().all(|r| r.passed);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.field.as_str()).collect();
    let out = json!({
        "schema_version": crate::output::SCHEMA_VERSION,
        "passed": passed,
        "failed_fields": failed,
        "reports": reports,
    });
    sink.json("verify.json", &out)?;
    let code = if passed { EXIT_PASS } else { EXIT_CHECK_FAILED };
    Ok((code, json!({ "passed": passed, "fields": fields.len() })))
}

/// A range record keyed like the chain CSV columns.
fn range_record(p: &RangePoint) -> Value {
    let mut rec = serde_json::Map::new();
    rec.insert("t".into(), json!(p.t));
    for (prefix, v) in [("z", &p.z), ("f", &p.f)] {
        for (i, c) in v.iter().enumerate() {
            rec.insert(format!("re_{prefix}_{}", i + 1), json!(c.re));
        }
        for (i, c) in v.iter().enumerate() {
            rec.insert(format!("im_{prefix}_{}", i + 1), json!(c.im));
        }
    }
    rec.insert("m_used".into(), json!(p.m_used));
    rec.insert("converged".into(), json!(p.converged));
    Value::Object(rec)
}

fn range(
    config: &RunConfig,
    times: &[f64],
    radii: &[f64],
    directions: usize,
    sink: &mut Sink,
) -> Result<Outcome, CliError> {
    check_times(times)?;
    check_radii(radii)?;
    if directions == 0 {
        return Err(CliError::usage("--directions must be positive"));
    }
    let ev = evaluator(config)?;
    let cloud = ev.range_sample(times, radii, directions, config.seed)?;
    let unconverged = cloud.points.iter().filter(|p| !p.converged).count();
    let out = json!({
        "schema_version": crate::output::SCHEMA_VERSION,
        "spot_check_residual": cloud.spot_check_residual,
        "unconverged": unconverged,
        "records": cloud.points.iter().map(range_record).collect::<Vec<_>>(),
    });
    sink.json("range.json", &out)?;
    let code = if unconverged == 0 { EXIT_PASS } else { EXIT_NUMERICAL };
    Ok((code, json!({ "records": cloud.points.len(), "schedule": schedule_notes(&ev) })))
}
