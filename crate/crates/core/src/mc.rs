//! Replicated identification experiments.
//!
//! Replication `i` is driven entirely by the seed `seed_base + i`: error
//! draws, random starts and annealing all derive from it, so any single
//! replication can be re-run in isolation with [`run_replication`].

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcov::{GcovObjective, ObjectiveConfig};
use crate::local::{LocalOptConfig, StartStrategy};
use crate::model::{classify_strict, ModelOrder, VarParams};
use crate::par::Execution;
use crate::pipeline::{estimate_prepared, OptimizerChoice, PipelineConfig};
use crate::sim::{simulate_mixed, ErrorDistribution, ErrorSpec, SimConfig};

pub const DEFAULT_BINS: usize = 60;

/// Order label of an estimated matrix (strict cut at modulus one).
pub fn classify_estimate(theta_hat: &VarParams) -> Result<ModelOrder> {
    classify_strict(theta_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub params: VarParams,
    #[serde(default)]
    pub distribution: ErrorDistribution,
    /// Retained sample length.
    pub t: usize,
    #[serde(default = "default_trim")]
    pub trim_frac: f64,
}

fn default_trim() -> f64 {
    0.10
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dgp: DgpConfig,
    pub start: StartStrategy,
    #[serde(default)]
    pub estimator: ObjectiveConfig,
    #[serde(default)]
    pub optimizer: OptimizerChoice,
    #[serde(default)]
    pub local: LocalOptConfig,
    pub replications: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Scheduling only; never changes the report.
    #[serde(default)]
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(dgp: DgpConfig, start: StartStrategy, replications: usize) -> Self {
        ExperimentConfig {
            dgp,
            start,
            estimator: ObjectiveConfig::default(),
            optimizer: OptimizerChoice::LocalOnly,
            local: LocalOptConfig::default(),
            replications,
            seed_base: 0,
            histogram_bins: DEFAULT_BINS,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParams("need at least one replication".into()));
        }
        if self.histogram_bins < 10 {
            return Err(Error::InvalidParams("need at least 10 histogram bins".into()));
        }
        self.dgp.distribution.validate()?;
        self.estimator.validate()?;
        self.local.validate()?;
        if let OptimizerChoice::SaThenPolish(s) = &self.optimizer {
            s.validate()?;
        }
        Ok(())
    }

    pub fn seed(&self, index: usize) -> u64 {
        self.seed_base.wrapping_add(index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub start: Option<VarParams>,
    pub start_order: Option<ModelOrder>,
    pub converged: bool,
    pub iterations: usize,
    pub objective_start: Option<f64>,
    pub sa_objective: Option<f64>,
    pub objective_final: Option<f64>,
    pub theta_hat: Option<VarParams>,
    pub order: Option<ModelOrder>,
    pub error: Option<String>,
}

impl ReplicationRecord {
    fn failed(index: usize, seed: u64, err: &Error) -> Self {
        ReplicationRecord {
            index,
            seed,
            start: None,
            start_order: None,
            converged: false,
            iterations: 0,
            objective_start: None,
            sa_objective: None,
            objective_final: None,
            theta_hat: None,
            order: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub order: ModelOrder,
    pub count: usize,
    /// Share of classified replications.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `theta{lag}_{row}{col}`, 1-based.
    pub coefficient: String,
    /// Position in the row-major parameter vector.
    pub index: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_values(coefficient: String, index: usize, values: &[f64], bins: usize) -> Self {
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !(lo.is_finite() && hi.is_finite()) {
            lo = 0.0;
            hi = 1.0;
        }
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
            counts[k] += 1;
        }
        Histogram {
            coefficient,
            index,
            edges,
            counts,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    /// Bins of the modes of the [1,2,1]-smoothed histogram, each carrying
    /// at least `min_mass` of the total within ±2 bins, and separated from
    /// every other reported mode by a valley no higher than half the
    /// lower peak.
    pub fn separated_modes(&self, min_mass: f64) -> Vec<usize> {
        let c = &self.counts;
        let nb = c.len();
        let at = |k: isize| -> f64 {
            if k < 0 || k >= nb as isize {
                0.0
            } else {
                c[k as usize] as f64
            }
        };
        let smooth: Vec<f64> = (0..nb as isize)
            .map(|k| (at(k - 1) + 2.0 * at(k) + at(k + 1)) / 4.0)
            .collect();
        let total = self.total() as f64;
        let mass = |k: usize| -> f64 { (-2..=2).map(|d| at(k as isize + d)).sum::<f64>() };
        let mut peaks: Vec<usize> = (0..nb)
            .filter(|&k| {
                let left = if k == 0 { 0.0 } else { smooth[k - 1] };
                let right = if k + 1 == nb { 0.0 } else { smooth[k + 1] };
                smooth[k] > 0.0 && smooth[k] > left && smooth[k] >= right
            })
            .filter(|&k| mass(k) >= min_mass * total)
            .collect();
        // Merge peaks not separated by a deep valley, keeping the taller.
        let mut merged = true;
        while merged && peaks.len() > 1 {
            merged = false;
            for w in 0..peaks.len() - 1 {
                let (a, b) = (peaks[w], peaks[w + 1]);
                let valley = smooth[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
                let lower = smooth[a].min(smooth[b]);
                if b - a < 2 || valley > 0.5 * lower {
                    let drop = if smooth[a] < smooth[b] { w } else { w + 1 };
                    peaks.remove(drop);
                    merged = true;
                    break;
                }
            }
        }
        peaks
    }

    /// At least two nonadjacent modes, each holding 5% of the mass.
    pub fn is_bimodal(&self) -> bool {
        self.separated_modes(0.05).len() >= 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: ExperimentConfig,
    pub frequencies: Vec<FrequencyRow>,
    pub classified: usize,
    pub failures: usize,
    pub histograms: Vec<Histogram>,
    pub records: Vec<ReplicationRecord>,
}

impl McReport {
    pub fn frequency(&self, n1: usize, n2: usize) -> f64 {
        self.frequencies
            .iter()
            .find(|r| r.order.n1 == n1 && r.order.n2 == n2)
            .map_or(0.0, |r| r.frequency)
    }

    pub fn histogram(&self, coefficient: &str) -> Option<&Histogram> {
        self.histograms.iter().find(|h| h.coefficient == coefficient)
    }
}

fn coefficient_name(n: usize, index: usize) -> String {
    let lag = index / (n * n) + 1;
    let rem = index % (n * n);
    format!("theta{lag}_{}{}", rem / n + 1, rem % n + 1)
}

/// One replication of `cfg`.
pub fn run_replication(cfg: &ExperimentConfig, index: usize) -> ReplicationRecord {
    let seed = cfg.seed(index);
    match replicate(cfg, seed) {
        Ok(mut r) => {
            r.index = index;
            r
        }
        Err(e) => ReplicationRecord::failed(index, seed, &e),
    }
}

fn replicate(cfg: &ExperimentConfig, seed: u64) -> Result<ReplicationRecord> {
    let params = &cfg.dgp.params;
    let sim = SimConfig {
        t: cfg.dgp.t,
        trim_frac: cfg.dgp.trim_frac,
        params: params.clone(),
    };
    let spec = ErrorSpec {
        distribution: cfg.dgp.distribution,
        n: params.n(),
        seed,
    };
    let y = simulate_mixed(&sim, &spec).map_err(|e| e.at_stage("simulate"))?;
    let optimizer = match &cfg.optimizer {
        OptimizerChoice::SaThenPolish(s) => OptimizerChoice::SaThenPolish(crate::anneal::AnnealSchedule {
            seed,
            ..s.clone()
        }),
        other => other.clone(),
    };
    let pipe = PipelineConfig {
        p: params.p(),
        start: cfg.start.clone(),
        objective: cfg.estimator.clone(),
        optimizer,
        local: cfg.local,
        seed,
    };
    let objective = GcovObjective::new(&y, params.p(), &cfg.estimator).map_err(|e| e.at_stage("objective"))?;
    let (res, _) = estimate_prepared(&y, &objective, &pipe, Some(params))?;
    Ok(ReplicationRecord {
        index: 0,
        seed,
        start_order: classify_strict(&res.start_params).ok(),
        start: Some(res.start_params),
        converged: res.converged,
        iterations: res.iterations,
        objective_start: Some(res.objective_start),
        sa_objective: res.sa_objective,
        objective_final: Some(res.objective_value),
        theta_hat: Some(res.theta_hat),
        order: Some(res.order),
        error: None,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let records = cfg
        .execution
        .map_indexed(cfg.replications, |i| run_replication(cfg, i));
    assemble_report(cfg.clone(), records)
}

fn assemble_report(config: ExperimentConfig, records: Vec<ReplicationRecord>) -> Result<McReport> {
    let n = config.dgp.params.n();
    let p = config.dgp.params.p();
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.order.is_some()).collect();
    let failures = records.len() - ok.len();
    if ok.is_empty() {
        return Err(Error::AllReplicationsFailed(records.len()));
    }
    let classified = ok.len();
    let frequencies = ModelOrder::all(n, p)
        .into_iter()
        .map(|order| {
            let count = ok.iter().filter(|r| r.order == Some(order)).count();
            FrequencyRow {
                order,
                count,
                frequency: count as f64 / classified as f64,
            }
        })
        .collect();
    let estimates: Vec<Vec<f64>> = ok
        .iter()
        .map(|r| r.theta_hat.as_ref().expect("classified").to_vec())
        .collect();
    let histograms = (0..n * n * p)
        .map(|k| {
            let values: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
            Histogram::from_values(coefficient_name(n, k), k, &values, config.histogram_bins)
        })
        .collect();
    Ok(McReport {
        config,
        frequencies,
        classified,
        failures,
        histograms,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub replications: usize,
    pub classified: usize,
    pub failures: usize,
}

/// Writes `frequencies.csv`, `histograms.csv`, `records.jsonl` and
/// `manifest.json` into `dir`.
pub fn export_report(report: &McReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("frequencies.csv");
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e| Error::Csv { path: path.clone(), source: e }
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["label", "n1", "n2", "p", "count", "frequency"])
        .map_err(csv_err(&path))?;
    for row in &report.frequencies {
        let o = row.order;
        w.write_record([
            o.to_string(),
            o.n1.to_string(),
            o.n2.to_string(),
            o.p.to_string(),
            row.count.to_string(),
            row.frequency.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.write_record(["failed", "", "", "", &report.failures.to_string(), ""])
        .map_err(csv_err(&path))?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("histograms.csv");
    let mut body = String::from("coefficient,bin_left,bin_right,count\n");
    for h in &report.histograms {
        for (k, c) in h.counts.iter().enumerate() {
            body.push_str(&format!("{},{},{},{}\n", h.coefficient, h.edges[k], h.edges[k + 1], c));
        }
    }
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;

    let path = dir.join("records.jsonl");
    let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for r in &report.records {
        let line = serde_json::to_string(r).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        writeln!(file, "{line}").map_err(|e| Error::io(&path, e))?;
    }

    let path = dir.join("manifest.json");
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: report.config.clone(),
        seeds: (0..report.config.replications).map(|i| report.config.seed(i)).collect(),
        replications: report.records.len(),
        classified: report.classified,
        failures: report.failures,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
