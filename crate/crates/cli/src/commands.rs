use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gcov_core::io::write_matrix_csv;
use gcov_core::pipeline::{estimate_pipeline_traced, start_invariant, PipelineConfig, START_INVARIANCE_TOL};
use gcov_core::{
    export_report, gcov, load_series, ols_var, run_experiment, simulate_mixed, AnnealSchedule,
    ErrorDistribution, ErrorSpec, Execution, ExperimentConfig, LoadOptions, LocalOptConfig, MissingPolicy,
    ObjectiveConfig, OptimizerChoice, SimConfig, StartStrategy, TransformSet, VarParams, Variant,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{CliError, EstimateArgs, MontecarloArgs, ObjectiveArgs, ScheduleArgs, SimulateArgs, SliceArgs};

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, body).map_err(|e| gcov_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?,
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(body.as_bytes());
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// Parses row-major coefficients; `n` is inferred when omitted.
fn parse_theta(text: &str, n: Option<usize>, p: usize) -> CliResult<VarParams> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("--theta: {e}")))?;
    let n = match n {
        Some(n) => n,
        None => {
            let per_lag = values.len() / p.max(1);
            let n = (per_lag as f64).sqrt().round() as usize;
            if n * n * p != values.len() {
                return Err(usage(format!("--theta has {} values; give --n", values.len())));
            }
            n
        }
    };
    VarParams::from_vec(n, p, &values).map_err(|e| usage(format!("--theta: {e}")))
}

/// `START:STOP:STEP`, both ends included.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("grid {text:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(format!("grid {text:?} is not START:STOP:STEP"));
    };
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(format!("grid {text:?} needs START <= STOP and STEP > 0"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + step * k as f64).collect())
}

/// One start name: `ols`, `reverse_ols`, `causal_counterpart`,
/// `noncausal_counterpart`, `random_mixed:N1:N2` or `annealed`.
pub fn parse_start(text: &str) -> Result<StartStrategy, String> {
    let t = text.trim().to_ascii_lowercase();
    let s = match t.as_str() {
        "ols" => StartStrategy::Ols,
        "reverse_ols" | "reverse" => StartStrategy::ReverseOls,
        "causal_counterpart" | "causal" => StartStrategy::CausalCounterpart,
        "noncausal_counterpart" | "noncausal" => StartStrategy::NoncausalCounterpart,
        "annealed" | "sa" => StartStrategy::Annealed,
        other => {
            let rest = other
                .strip_prefix("random_mixed:")
                .ok_or_else(|| format!("unknown start {text:?}"))?;
            let (a, b) = rest
                .split_once(':')
                .ok_or_else(|| format!("random_mixed needs N1:N2, got {text:?}"))?;
            let n1 = a.parse().map_err(|_| format!("bad n1 in {text:?}"))?;
            let n2 = b.parse().map_err(|_| format!("bad n2 in {text:?}"))?;
            StartStrategy::RandomMixed { n1, n2 }
        }
    };
    Ok(s)
}

fn apply_objective(mut cfg: ObjectiveConfig, a: &ObjectiveArgs) -> CliResult<ObjectiveConfig> {
    if let Some(h) = a.h {
        cfg.h = h;
    }
    if let Some(t) = &a.transforms {
        cfg.transforms = t.parse::<TransformSet>().map_err(|e| usage(e.to_string()))?;
    }
    if let Some(v) = &a.variant {
        cfg.variant = match v.to_ascii_lowercase().as_str() {
            "gcov22" => Variant::Gcov22,
            "gcov17" => Variant::Gcov17,
            _ => return Err(usage(format!("unknown variant {v:?}"))),
        };
    }
    if let Some(r) = a.ridge {
        cfg.ridge = r;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn apply_schedule(base: Option<AnnealSchedule>, a: &ScheduleArgs, seed: u64) -> CliResult<AnnealSchedule> {
    let mut s = if a.long_schedule {
        AnnealSchedule::long()
    } else {
        base.unwrap_or_default()
    };
    if let Some(v) = a.t_max {
        s.t_max = v;
    }
    if let Some(v) = a.r {
        s.r = v;
    }
    if let Some(v) = a.q {
        s.q = v;
    }
    if let Some(v) = a.m {
        s.m = v;
    }
    if let Some(v) = a.theta_min {
        s.theta_min = v;
    }
    if let Some(v) = a.theta_max {
        s.theta_max = v;
    }
    if let Some(v) = a.restarts {
        s.restarts = v;
    }
    s.seed = seed;
    s.validate().map_err(|e| usage(e.to_string()))?;
    Ok(s)
}

fn load(path: &Path, drop_missing: bool) -> CliResult<gcov_core::SeriesFile> {
    let options = LoadOptions {
        missing: if drop_missing {
            MissingPolicy::Drop
        } else {
            MissingPolicy::Strict
        },
        ..LoadOptions::default()
    };
    Ok(load_series(path, &options)?)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    params: Option<VarParams>,
    t: Option<usize>,
    trim_frac: Option<f64>,
    distribution: Option<ErrorDistribution>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    version: &'static str,
    seed: u64,
    distribution: ErrorDistribution,
    config: &'a SimConfig,
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let cfg: SimulateConfig = read_config(a.config.as_deref())?;
    let params = match (&a.theta, cfg.params) {
        (Some(text), _) => parse_theta(text, a.n, a.p.unwrap_or(1))?,
        (None, Some(p)) => p,
        (None, None) => return Err(usage("give VAR coefficients with --theta or in --config")),
    };
    let distribution = if a.normal {
        ErrorDistribution::StandardNormal
    } else if let Some(dof) = a.dof {
        ErrorDistribution::StudentT { dof }
    } else {
        cfg.distribution.unwrap_or_default()
    };
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let sim = SimConfig {
        t: a.t.or(cfg.t).unwrap_or(1000),
        trim_frac: a.trim.or(cfg.trim_frac).unwrap_or(0.10),
        params,
    };
    sim.validate().map_err(|e| usage(e.to_string()))?;
    let spec = ErrorSpec {
        distribution,
        n: sim.params.n(),
        seed,
    };
    let y = simulate_mixed(&sim, &spec)?;
    let header: Vec<String> = (1..=y.ncols()).map(|k| format!("y{k}")).collect();
    match &a.out {
        Some(path) => {
            write_matrix_csv(path, &header, &y)?;
            let manifest = SimulateManifest {
                version: env!("CARGO_PKG_VERSION"),
                seed,
                distribution,
                config: &sim,
            };
            let mpath = manifest_path(path);
            emit(Some(&mpath), &to_json(&manifest))?;
        }
        None => {
            let mut body = header.join(",") + "\n";
            for row in y.row_iter() {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                body.push_str(&cells.join(","));
                body.push('\n');
            }
            emit(None, &body)?;
        }
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimateConfig {
    data: Option<PathBuf>,
    p: Option<usize>,
    starts: Option<Vec<StartStrategy>>,
    objective: Option<ObjectiveConfig>,
    schedule: Option<AnnealSchedule>,
    local: Option<LocalOptConfig>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct EstimateReport {
    version: &'static str,
    data: PathBuf,
    rows: usize,
    columns: Vec<String>,
    seed: u64,
    objective: ObjectiveConfig,
    results: Vec<gcov_core::EstimationResult>,
    start_invariant: bool,
}

pub fn estimate(a: &EstimateArgs) -> CliResult<()> {
    let cfg: EstimateConfig = read_config(a.config.as_deref())?;
    let data = a
        .data
        .clone()
        .or(cfg.data)
        .ok_or_else(|| usage("--data is required"))?;
    let p = a.p.or(cfg.p).unwrap_or(1);
    if p == 0 {
        return Err(usage("--p must be at least 1"));
    }
    let starts = match &a.start {
        Some(list) => list.split(',').map(parse_start).collect::<Result<Vec<_>, _>>().map_err(usage)?,
        None => cfg.starts.unwrap_or_else(|| vec![StartStrategy::Ols]),
    };
    if starts.is_empty() {
        return Err(usage("--start needs at least one strategy"));
    }
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let objective = apply_objective(cfg.objective.unwrap_or_default(), &a.objective)?;
    let schedule = apply_schedule(cfg.schedule, &a.schedule, seed)?;
    let local = cfg.local.unwrap_or_default();
    local.validate().map_err(|e| usage(e.to_string()))?;

    let series = load(&data, a.drop_missing)?;
    let mut results = Vec::new();
    let mut trace = None;
    for start in starts {
        let optimizer = match start {
            StartStrategy::Annealed => OptimizerChoice::SaThenPolish(schedule.clone()),
            _ => OptimizerChoice::LocalOnly,
        };
        let pipe = PipelineConfig {
            p,
            start,
            objective: objective.clone(),
            optimizer,
            local,
            seed,
        };
        let (res, t) = estimate_pipeline_traced(&series.data, &pipe)?;
        if trace.is_none() {
            trace = t;
        }
        results.push(res);
    }
    if let Some(path) = &a.trace {
        let Some(trace) = &trace else {
            return Err(usage("--trace needs an annealed start"));
        };
        let mut body = String::from("stage,temperature,accept_rate,f_best\n");
        for s in trace {
            body.push_str(&format!("{},{},{},{}\n", s.stage, s.temperature, s.accept_rate, s.f_best));
        }
        emit(Some(path), &body)?;
    }
    let report = EstimateReport {
        version: env!("CARGO_PKG_VERSION"),
        data,
        rows: series.rows(),
        columns: series.columns,
        seed,
        objective,
        start_invariant: start_invariant(&results, START_INVARIANCE_TOL),
        results,
    };
    emit(a.out.as_deref(), &to_json(&report))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SliceConfig {
    data: Option<PathBuf>,
    entries: Option<Vec<(usize, usize)>>,
    lag: Option<usize>,
    grid: Option<String>,
    params: Option<VarParams>,
    p: Option<usize>,
    objective: Option<ObjectiveConfig>,
}

fn parse_entry(text: &str) -> CliResult<(usize, usize)> {
    let bad = || usage(format!("--entry {text:?} is not ROW,COL"));
    let (i, j) = text.split_once(',').ok_or_else(bad)?;
    let i: usize = i.trim().parse().map_err(|_| bad())?;
    let j: usize = j.trim().parse().map_err(|_| bad())?;
    if i == 0 || j == 0 {
        return Err(usage("--entry is 1-based"));
    }
    Ok((i, j))
}

pub fn slice(a: &SliceArgs) -> CliResult<()> {
    let cfg: SliceConfig = read_config(a.config.as_deref())?;
    let data = a
        .data
        .clone()
        .or(cfg.data)
        .ok_or_else(|| usage("--data is required"))?;
    let entries = if a.entry.is_empty() {
        cfg.entries.ok_or_else(|| usage("--entry is required"))?
    } else {
        a.entry.iter().map(|e| parse_entry(e)).collect::<CliResult<Vec<_>>>()?
    };
    let grid_text = a.grid.clone().or(cfg.grid).ok_or_else(|| usage("--grid is required"))?;
    let grid = parse_grid(&grid_text).map_err(usage)?;
    let lag = a.lag.or(cfg.lag).unwrap_or(1);
    let objective = apply_objective(cfg.objective.unwrap_or_default(), &a.objective)?;

    let series = load(&data, a.drop_missing)?;
    let y = if gcov_core::io::is_demeaned(&series.data) {
        series.data.clone()
    } else {
        log::warn!("series is not demeaned; subtracting column means");
        gcov_core::demean(&series.data)
    };
    let p = a.p.or(cfg.p).unwrap_or(1);
    let base = match (&a.theta, cfg.params) {
        (Some(text), _) => parse_theta(text, Some(y.ncols()), p)?,
        (None, Some(params)) => params,
        (None, None) => ols_var(&y, p)?,
    };
    if lag == 0 || lag > base.p() {
        return Err(usage(format!("--lag must be in 1..={}", base.p())));
    }
    for &(i, j) in &entries {
        if i > base.n() || j > base.n() {
            return Err(usage(format!("--entry {i},{j} outside a {0}×{0} matrix", base.n())));
        }
    }
    let several = entries.len() > 1;
    for (i, j) in entries {
        let curve = gcov::objective_slice(&y, &base, (lag, i - 1, j - 1), &grid, &objective)?;
        let mut body = String::from("grid_value,objective\n");
        for (v, f) in curve {
            body.push_str(&format!("{v},{f}\n"));
        }
        let out = match &a.out {
            Some(path) if several => Some(suffixed(path, i, j)),
            other => other.clone(),
        };
        emit(out.as_deref(), &body)?;
    }
    Ok(())
}

fn suffixed(path: &Path, i: usize, j: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{i}{j}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{i}{j}"),
    };
    path.with_file_name(name)
}

#[derive(Serialize)]
struct MontecarloSummary<'a> {
    replications: usize,
    classified: usize,
    failures: usize,
    frequencies: &'a [gcov_core::mc::FrequencyRow],
}

pub fn montecarlo(a: &MontecarloArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| usage(format!("cannot read {}: {e}", a.config.display())))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid config {}: {e}", a.config.display())))?;
    if let Some(seed) = a.seed {
        cfg.seed_base = seed;
    }
    if let Some(n) = a.replications {
        cfg.replications = n;
    }
    if a.sequential {
        cfg.execution = Execution::Sequential;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let report = run_experiment(&cfg)?;
    if let Some(dir) = &a.out {
        export_report(&report, dir)?;
    }
    let summary = MontecarloSummary {
        replications: report.records.len(),
        classified: report.classified,
        failures: report.failures,
        frequencies: &report.frequencies,
    };
    emit(None, &to_json(&summary))
}
