//! Paired experiment runner.
//!
//! A [`BenchSpec`] names a circuit family, qubit and core counts, a list of
//! methods and how many instances and trials to run. Every method is run on
//! the same generated circuits, so the per-instance ratios against the
//! FGP-rOEE baseline are paired. Rows are sorted before they are reported,
//! which makes the output independent of scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, GenSpec};
use crate::environment::{CircuitSource, EnvConfig, MaskMode, RewardParams};
use crate::partition::{fgp_roee, CoreConfig, FgpParams, InitStrategy};
use crate::policies::{run_episode, PolicyKind};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("reading remote rows: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FgpRoee,
    RandomNone,
    RandomSoft,
    RandomHard,
    GreedySoft,
    GreedyHard,
    /// Rows produced elsewhere (an external trainer) and merged from CSV.
    Remote,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::FgpRoee,
        Method::RandomNone,
        Method::RandomSoft,
        Method::RandomHard,
        Method::GreedySoft,
        Method::GreedyHard,
        Method::Remote,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FgpRoee => "fgp_roee",
            Method::RandomNone => "random_none",
            Method::RandomSoft => "random_soft",
            Method::RandomHard => "random_hard",
            Method::GreedySoft => "greedy_soft",
            Method::GreedyHard => "greedy_hard",
            Method::Remote => "remote",
        }
    }

    /// Policy and mask for the environment-driven methods.
    pub fn policy(self) -> Option<(PolicyKind, MaskMode)> {
        match self {
            Method::RandomNone => Some((PolicyKind::Random, MaskMode::None)),
            Method::RandomSoft => Some((PolicyKind::Random, MaskMode::Soft)),
            Method::RandomHard => Some((PolicyKind::Random, MaskMode::Hard)),
            Method::GreedySoft => Some((PolicyKind::Greedy, MaskMode::Soft)),
            Method::GreedyHard => Some((PolicyKind::Greedy, MaskMode::Hard)),
            Method::FgpRoee | Method::Remote => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Accepts `fgp_roee` as well as `fgp-roee`.
impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| BenchError::UnknownMethod(s.to_string()))
    }
}

fn default_slices() -> usize {
    50
}

fn default_density() -> f64 {
    1.0
}

/// Circuit family; the qubit count and seed come from the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Random {
        #[serde(default = "default_slices")]
        slices: usize,
        #[serde(default = "default_density")]
        density: f64,
    },
    Qaoa {
        layers: usize,
        degree: usize,
    },
    /// Ripple-carry adder on `qubits = 2·bits + 2`.
    Cuccaro,
}

impl Family {
    pub fn instance(&self, qubits: usize, seed: u64) -> Result<GenSpec, BenchError> {
        Ok(match *self {
            Family::Random { slices, density } => GenSpec::Random {
                qubits,
                slices,
                density,
                seed,
            },
            Family::Qaoa { layers, degree } => GenSpec::Qaoa {
                qubits,
                layers,
                degree,
                seed,
            },
            Family::Cuccaro => {
                if qubits < 4 || !qubits.is_multiple_of(2) {
                    return Err(BenchError::InvalidSpec(format!(
                        "cuccaro needs an even qubit count >= 4, got {qubits}"
                    )));
                }
                GenSpec::Cuccaro {
                    bits: (qubits - 2) / 2,
                }
            }
        })
    }
}

fn default_trials() -> usize {
    20
}

fn one() -> usize {
    1
}

fn default_decay() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub circuit: Family,
    pub qubits: Vec<usize>,
    pub cores: Vec<usize>,
    pub methods: Vec<Method>,
    /// Policy seeds per instance.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Circuits generated per qubit count, with seeds `seed, seed + 1, ...`.
    #[serde(default = "one")]
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Per-slice action budget for the policies; defaults to the qubit count.
    #[serde(default)]
    pub budget_per_slice: Option<usize>,
    #[serde(default)]
    pub reward: RewardParams,
    /// Record wall time. Off by default so repeated runs are byte-identical.
    #[serde(default)]
    pub timing: bool,
    /// CSV with `remote` rows to merge in.
    #[serde(default)]
    pub remote_csv: Option<PathBuf>,
    /// Output directory; used by the CLI.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl BenchSpec {
    pub fn new(
        circuit: Family,
        qubits: Vec<usize>,
        cores: Vec<usize>,
        methods: Vec<Method>,
    ) -> Self {
        BenchSpec {
            circuit,
            qubits,
            cores,
            methods,
            trials: default_trials(),
            instances: 1,
            seed: 0,
            decay: default_decay(),
            horizon: None,
            budget_per_slice: None,
            reward: RewardParams::default(),
            timing: false,
            remote_csv: None,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::InvalidSpec(msg));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.instances == 0 {
            return bad("instances must be >= 1".into());
        }
        if self.qubits.is_empty() || self.cores.is_empty() || self.methods.is_empty() {
            return bad("qubits, cores and methods must be non-empty".into());
        }
        for &q in &self.qubits {
            self.circuit.instance(q, self.seed)?;
            for &k in &self.cores {
                if k < 2 || q % k != 0 {
                    return bad(format!("{q} qubits cannot be split evenly over {k} cores"));
                }
            }
        }
        if self.methods.contains(&Method::Remote) && self.remote_csv.is_none() {
            return bad("method `remote` needs remote_csv".into());
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        Ok(())
    }

    /// Seed of the policy (or FGP initial placement) for one trial.
    pub fn trial_seed(&self, instance: usize, trial: usize) -> u64 {
        self.seed
            .wrapping_add((instance * self.trials + trial) as u64)
    }
}

/// One (method, instance, trial) evaluation.
///
/// `error` is set when the run failed; its metrics are then meaningless and
/// left empty in the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub circuit: String,
    pub qubits: usize,
    pub cores: usize,
    pub trial: usize,
    pub seed: u64,
    pub avg_moves: f64,
    pub total_moves: usize,
    pub episode_length: usize,
    pub total_reward: f64,
    pub wall_ms: f64,
    /// Every slice was committed.
    pub completed: bool,
    #[serde(default)]
    pub error: Option<String>,
}

impl BenchRow {
    fn sort_key(&self) -> (usize, usize, &str, Method, usize, u64) {
        (
            self.qubits,
            self.cores,
            &self.circuit,
            self.method,
            self.trial,
            self.seed,
        )
    }

    pub fn usable(&self) -> bool {
        self.error.is_none() && self.completed
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std, n })
    }
}

/// Aggregates of one method at one (qubits, cores) point, over usable rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub qubits: usize,
    pub cores: usize,
    pub runs: usize,
    pub completed: usize,
    pub failed: usize,
    pub avg_moves: Option<MeanStd>,
    pub total_reward: Option<MeanStd>,
    pub episode_length: Option<MeanStd>,
    /// Mean of the per-instance ratios against the baseline.
    pub mean_ratio: Option<f64>,
}

/// `baseline_avg / method_avg` on one circuit instance; above 1 means the
/// method needs fewer movements than FGP-rOEE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub method: Method,
    pub circuit: String,
    pub qubits: usize,
    pub cores: usize,
    pub baseline_avg: f64,
    pub method_avg: f64,
    /// `None` when the method needs no movement but the baseline does.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<MethodSummary>,
    pub ratios: Vec<RatioRow>,
}

impl BenchReport {
    /// Sorts `rows` and derives the summaries and ratios from them.
    pub fn from_rows(mut rows: Vec<BenchRow>) -> Self {
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let ratios = ratios(&rows);
        let summaries = summaries(&rows, &ratios);
        BenchReport {
            rows,
            summaries,
            ratios,
        }
    }

    pub fn summary(&self, method: Method, qubits: usize, cores: usize) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.qubits == qubits && s.cores == cores)
    }

    /// Mean ratio of `method` over every instance in the report.
    pub fn mean_ratio(&self, method: Method) -> Option<f64> {
        let rs: Vec<f64> = self
            .ratios
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.ratio)
            .collect();
        MeanStd::of(&rs).map(|m| m.mean)
    }
}

fn ratio(baseline: f64, method: f64) -> Option<f64> {
    if method > 0.0 {
        Some(baseline / method)
    } else if baseline == 0.0 {
        Some(1.0)
    } else {
        None
    }
}

type InstanceKey<'a> = (&'a str, usize, usize);

fn ratios(rows: &[BenchRow]) -> Vec<RatioRow> {
    let mut means: BTreeMap<(InstanceKey<'_>, Method), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.usable()) {
        means
            .entry(((r.circuit.as_str(), r.qubits, r.cores), r.method))
            .or_default()
            .push(r.avg_moves);
    }
    let mean = |xs: &Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut out = Vec::new();
    for (&(instance, method), xs) in &means {
        let Some(base) = means.get(&(instance, Method::FgpRoee)) else {
            continue;
        };
        let (baseline_avg, method_avg) = (mean(base), mean(xs));
        out.push(RatioRow {
            method,
            circuit: instance.0.to_string(),
            qubits: instance.1,
            cores: instance.2,
            baseline_avg,
            method_avg,
            ratio: ratio(baseline_avg, method_avg),
        });
    }
    out
}

fn summaries(rows: &[BenchRow], ratios: &[RatioRow]) -> Vec<MethodSummary> {
    let mut groups: BTreeMap<(Method, usize, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method, r.qubits, r.cores))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((method, qubits, cores), rs)| {
            let ok: Vec<&&BenchRow> = rs.iter().filter(|r| r.usable()).collect();
            let col =
                |f: fn(&BenchRow) -> f64| MeanStd::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let rs_ratio: Vec<f64> = ratios
                .iter()
                .filter(|r| r.method == method && r.qubits == qubits && r.cores == cores)
                .filter_map(|r| r.ratio)
                .collect();
            MethodSummary {
                method,
                qubits,
                cores,
                runs: rs.len(),
                completed: ok.len(),
                failed: rs.iter().filter(|r| r.error.is_some()).count(),
                avg_moves: col(|r| r.avg_moves),
                total_reward: col(|r| r.total_reward),
                episode_length: col(|r| r.episode_length as f64),
                mean_ratio: MeanStd::of(&rs_ratio).map(|m| m.mean),
            }
        })
        .collect()
}

struct Job<'a> {
    method: Method,
    circuit: &'a Circuit,
    cores: usize,
    instance: usize,
    trial: usize,
}

/// Runs every (method, instance, trial) of `spec` on the rayon pool of the
/// caller. Per-run failures become rows with `error` set.
pub fn run_benchmark(spec: &BenchSpec) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    let mut circuits = Vec::new();
    for &q in &spec.qubits {
        for i in 0..spec.instances {
            let gen = spec.circuit.instance(q, spec.seed.wrapping_add(i as u64))?;
            circuits.push((i, gen.generate()?));
        }
    }
    let mut jobs = Vec::new();
    for (instance, circuit) in &circuits {
        for &cores in &spec.cores {
            for &method in spec.methods.iter().filter(|&&m| m != Method::Remote) {
                for trial in 0..spec.trials {
                    jobs.push(Job {
                        method,
                        circuit,
                        cores,
                        instance: *instance,
                        trial,
                    });
                }
            }
        }
    }
    let mut rows: Vec<BenchRow> = jobs.par_iter().map(|job| run_job(spec, job)).collect();
    if let Some(path) = spec
        .remote_csv
        .as_ref()
        .filter(|_| spec.methods.contains(&Method::Remote))
    {
        rows.extend(read_remote_rows(std::fs::File::open(path)?)?);
    }
    Ok(BenchReport::from_rows(rows))
}

fn run_job(spec: &BenchSpec, job: &Job<'_>) -> BenchRow {
    let seed = spec.trial_seed(job.instance, job.trial);
    let started = Instant::now();
    let outcome = match job.method.policy() {
        None => run_fgp(spec, job.circuit, job.cores, seed),
        Some((kind, mask)) => {
            let mut config = EnvConfig::new(
                CircuitSource::Gates {
                    num_qubits: job.circuit.num_qubits,
                    gates: job.circuit.gates.iter().map(|g| (g.a, g.b)).collect(),
                },
                job.cores,
            );
            config.mask_mode = mask;
            config.budget_per_slice = spec.budget_per_slice;
            config.decay = spec.decay;
            config.horizon = spec.horizon;
            config.reward = spec.reward;
            config.seed = seed;
            run_episode(&config, kind, seed)
                .map(|s| {
                    (
                        s.avg_moves,
                        s.total_moves,
                        s.episode_length,
                        s.total_reward,
                        s.completed,
                    )
                })
                .map_err(|e| e.to_string())
        }
    };
    let wall_ms = if spec.timing {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let mut row = BenchRow {
        method: job.method,
        circuit: job.circuit.name.clone(),
        qubits: job.circuit.num_qubits,
        cores: job.cores,
        trial: job.trial,
        seed,
        avg_moves: 0.0,
        total_moves: 0,
        episode_length: 0,
        total_reward: 0.0,
        wall_ms,
        completed: false,
        error: None,
    };
    match outcome {
        Ok((avg, total, length, reward, completed)) => {
            row.avg_moves = avg;
            row.total_moves = total;
            row.episode_length = length;
            row.total_reward = reward;
            row.completed = completed;
        }
        Err(e) => row.error = Some(e),
    }
    row
}

type Metrics = (f64, usize, usize, f64, bool);

/// FGP-rOEE scored as if replayed in the environment: one action per
/// exchange plus one advance per slice.
fn run_fgp(
    spec: &BenchSpec,
    circuit: &Circuit,
    cores: usize,
    seed: u64,
) -> Result<Metrics, String> {
    let cfg = CoreConfig::new(circuit.num_qubits, cores).map_err(|e| e.to_string())?;
    let params = FgpParams {
        decay: spec.decay,
        horizon: spec.horizon,
        init: InitStrategy::RoundRobin,
        seed,
        ..FgpParams::default()
    };
    let slices = circuit.timeslices();
    let t = fgp_roee::<f64>(&slices, &cfg, &params).map_err(|e| e.to_string())?;
    Ok((
        t.avg_moves,
        t.total_moves,
        t.total_swaps() + slices.len(),
        spec.reward.score(&t.moves_per_step, &t.swaps_per_step),
        true,
    ))
}

/// The fixed CSV column set.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRecord {
    method: String,
    circuit: String,
    qubits: usize,
    cores: usize,
    trial: usize,
    seed: u64,
    avg_moves: Option<f64>,
    total_moves: Option<usize>,
    episode_length: Option<usize>,
    total_reward: Option<f64>,
    wall_ms: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "method",
    "circuit",
    "qubits",
    "cores",
    "trial",
    "seed",
    "avg_moves",
    "total_moves",
    "episode_length",
    "total_reward",
    "wall_ms",
];

impl From<&BenchRow> for CsvRecord {
    fn from(r: &BenchRow) -> Self {
        let ok = r.error.is_none();
        CsvRecord {
            method: r.method.to_string(),
            circuit: r.circuit.clone(),
            qubits: r.qubits,
            cores: r.cores,
            trial: r.trial,
            seed: r.seed,
            avg_moves: ok.then_some(r.avg_moves),
            total_moves: ok.then_some(r.total_moves),
            episode_length: ok.then_some(r.episode_length),
            total_reward: ok.then_some(r.total_reward),
            wall_ms: Some(r.wall_ms),
        }
    }
}

/// Reads the `remote` rows of a CSV in the report layout; other methods'
/// rows are skipped so a trainer may hand back a full report.
pub fn read_remote_rows(input: impl Read) -> Result<Vec<BenchRow>, BenchError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(BenchError::Remote(format!(
            "expected columns {}, got {}",
            CSV_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in reader.deserialize::<CsvRecord>() {
        let r = record?;
        if r.method.parse::<Method>().ok() != Some(Method::Remote) {
            continue;
        }
        let metrics = match (r.avg_moves, r.total_moves, r.episode_length, r.total_reward) {
            (Some(a), Some(t), Some(l), Some(w)) => Some((a, t, l, w)),
            _ => None,
        };
        let failed = metrics.is_none();
        let (avg, total, length, reward) = metrics.unwrap_or_default();
        rows.push(BenchRow {
            method: Method::Remote,
            circuit: r.circuit,
            qubits: r.qubits,
            cores: r.cores,
            trial: r.trial,
            seed: r.seed,
            avg_moves: avg,
            total_moves: total,
            episode_length: length,
            total_reward: reward,
            wall_ms: r.wall_ms.unwrap_or(0.0),
            completed: !failed,
            error: failed.then(|| "missing metrics".to_string()),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Writes `report` in `format`. Output depends only on the report: fixed
/// column order, shortest round-trip float formatting, `\n` line endings.
pub fn write_report(
    report: &BenchReport,
    format: ReportFormat,
    out: impl Write,
) -> Result<(), BenchError> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .has_headers(false)
                .from_writer(out);
            w.write_record(CSV_COLUMNS)?;
            for row in &report.rows {
                w.serialize(CsvRecord::from(row))?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Writes `bench.csv` and `bench.json` into `dir`, creating it if needed.
pub fn write_report_files(
    report: &BenchReport,
    dir: &Path,
) -> Result<(PathBuf, PathBuf), BenchError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("bench.csv");
    let json_path = dir.join("bench.json");
    for (path, format) in [
        (&csv_path, ReportFormat::Csv),
        (&json_path, ReportFormat::Json),
    ] {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_report(report, format, &mut file)?;
        file.flush()?;
    }
    Ok((csv_path, json_path))
}
