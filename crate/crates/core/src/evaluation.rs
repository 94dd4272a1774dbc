//! Utility measurement: MSE, epsilon sweeps, trend checks and report files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended_float::{format_f64, parse_f64};
use crate::grid::GridSpec;
use crate::model::{MechanismConfig, MechanismKind, ScenarioKind};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::rng::mix;
use crate::synthgen::{generate, Dataset, ScenarioConfig};

const DATASET_DOMAIN: u64 = 0x4441_5441_5345_5421;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 8] = [
    "scenario",
    "mechanism",
    "epsilon",
    "repetition",
    "mse",
    "suppressed_cells",
    "per_user_epsilon",
    "composed_epsilon",
];

pub const COMPARABILITY_CAVEAT: &str = "gaussian rows are (epsilon, delta)-DP; randomized_response \
and exponential rows are pure epsilon-DP. Gaussian calibration for epsilon >= 1 is heuristic.";

/// Mean squared error `(1/n) * sum (a_i - b_i)^2`.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Strictly ascending; `inf` (no DP) may only appear last.
    #[serde(with = "crate::extended_float::vec")]
    pub epsilons: Vec<f64>,
    pub repetitions: usize,
    pub scenarios: Vec<ScenarioKind>,
    pub mechanisms: Vec<MechanismKind>,
    pub delta: f64,
    pub base_seed: u64,
    pub grid: GridSpec,
    pub records_per_cell: usize,
    #[serde(default)]
    pub min_cohort: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilons: Self::DEFAULT_EPSILONS.to_vec(),
            repetitions: 10,
            scenarios: ScenarioKind::ALL.to_vec(),
            mechanisms: vec![
                MechanismKind::RandomizedResponse,
                MechanismKind::Exponential,
                MechanismKind::Gaussian,
            ],
            delta: 1.5e-7,
            base_seed: 0,
            grid: GridSpec::PITTSBURGH,
            records_per_cell: 200,
            min_cohort: 0,
        }
    }
}

impl SweepConfig {
    pub const DEFAULT_EPSILONS: [f64; 7] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epsilons.is_empty() {
            return bad("epsilon grid is empty".into());
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0)) {
            return bad("epsilons must be positive".into());
        }
        if self.epsilons.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("epsilon grid must be strictly ascending".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1".into());
        }
        if self.scenarios.is_empty() || self.mechanisms.is_empty() {
            return bad("at least one scenario and one mechanism are required".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidDelta(self.delta));
        }
        if self.records_per_cell == 0 {
            return bad("records_per_cell must be >= 1".into());
        }
        self.grid.validate()
    }

    /// Admissible `(scenario, mechanism)` series in configuration order.
    pub fn series(&self) -> Vec<(ScenarioKind, MechanismKind)> {
        self.scenarios
            .iter()
            .flat_map(|&s| {
                self.mechanisms
                    .iter()
                    .filter(move |m| m.admissible_for(s))
                    .map(move |&m| (s, m))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: ScenarioKind,
    pub mechanism: MechanismKind,
    #[serde(with = "crate::extended_float")]
    pub epsilon: f64,
    pub repetition: usize,
    /// NaN when every cell was suppressed.
    #[serde(with = "crate::extended_float")]
    pub mse: f64,
    pub suppressed_cells: usize,
    #[serde(with = "crate::extended_float")]
    pub per_user_epsilon: f64,
    #[serde(with = "crate::extended_float")]
    pub composed_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

fn mechanism_config(kind: MechanismKind, epsilon: f64, delta: f64) -> Result<MechanismConfig> {
    if epsilon.is_infinite() {
        return Ok(MechanismConfig::none());
    }
    match kind {
        MechanismKind::RandomizedResponse => MechanismConfig::randomized_response(epsilon),
        MechanismKind::Exponential => MechanismConfig::exponential(epsilon),
        // Values are unit-scaled before noise, so sensitivity is 1.
        MechanismKind::Gaussian => MechanismConfig::gaussian(epsilon, delta, 1.0),
        MechanismKind::None => Ok(MechanismConfig::none()),
    }
}

/// Runs the pipeline for every `(scenario, mechanism, epsilon, repetition)`
/// tuple. Datasets are generated once per `(scenario, repetition)` and shared
/// across mechanisms and epsilons; each tuple's run seed is derived from the
/// base seed and the tuple index.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let dataset_base = mix(cfg.base_seed, DATASET_DOMAIN);
    let datasets: BTreeMap<(ScenarioKind, usize), Dataset> = cfg
        .scenarios
        .par_iter()
        .enumerate()
        .flat_map_iter(|(si, &s)| (0..cfg.repetitions).map(move |rep| (si, s, rep)))
        .map(|(si, s, rep)| {
            let mut sc = ScenarioConfig::new(s, cfg.grid, cfg.records_per_cell, 0);
            sc.seed = mix(mix(dataset_base, si as u64), rep as u64);
            Ok(((s, rep), generate(&sc)?))
        })
        .collect::<Result<_>>()?;

    let tuples: Vec<(ScenarioKind, MechanismKind, f64, usize)> = cfg
        .series()
        .into_iter()
        .flat_map(|(s, m)| {
            cfg.epsilons
                .iter()
                .flat_map(move |&e| (0..cfg.repetitions).map(move |r| (s, m, e, r)))
        })
        .collect();

    let rows = tuples
        .par_iter()
        .enumerate()
        .map(|(i, &(scenario, mechanism, epsilon, repetition))| {
            let mech = mechanism_config(mechanism, epsilon, cfg.delta)?;
            let pc = PipelineConfig::new(scenario, mech, cfg.min_cohort, mix(cfg.base_seed, i as u64));
            let result = run_pipeline(&datasets[&(scenario, repetition)], &pc)?;
            let totals = result.ledger.totals();
            Ok(SweepRow {
                scenario,
                mechanism,
                epsilon,
                repetition,
                mse: result.mse.unwrap_or(f64::NAN),
                suppressed_cells: result.suppressed_cells,
                per_user_epsilon: totals.per_user_epsilon,
                composed_epsilon: totals.composed_epsilon,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { rows })
}

/// Mean and sample standard deviation over repetitions at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    #[serde(with = "crate::extended_float")]
    pub epsilon: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

fn summarize_values(epsilon: f64, v: &[f64]) -> PointSummary {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    PointSummary {
        epsilon,
        mean,
        std,
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        n,
    }
}

fn epsilon_key(e: f64) -> u64 {
    // Positive floats order the same as their bit patterns.
    e.to_bits()
}

/// Per-`(scenario, mechanism)` summaries ordered by epsilon. Rows with NaN
/// MSE are skipped.
pub fn series_summaries(table: &SweepTable) -> BTreeMap<(ScenarioKind, MechanismKind), Vec<PointSummary>> {
    let mut groups: BTreeMap<(ScenarioKind, MechanismKind), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in table.rows.iter().filter(|r| !r.mse.is_nan()) {
        groups
            .entry((r.scenario, r.mechanism))
            .or_default()
            .entry(epsilon_key(r.epsilon))
            .or_default()
            .push(r.mse);
    }
    groups
        .into_iter()
        .map(|(k, pts)| {
            let v = pts
                .into_iter()
                .map(|(e, vals)| summarize_values(f64::from_bits(e), &vals))
                .collect();
            (k, v)
        })
        .collect()
}

/// Per-mechanism curve averaged across scenarios: at each epsilon, the
/// unweighted mean of per-scenario mean MSEs. Repetition-level values are
/// averaged across scenarios rep by rep, which gives the spread.
pub fn mechanism_summaries(table: &SweepTable) -> BTreeMap<MechanismKind, Vec<PointSummary>> {
    let mut by_rep: BTreeMap<MechanismKind, BTreeMap<u64, BTreeMap<usize, Vec<f64>>>> = BTreeMap::new();
    for r in table.rows.iter().filter(|r| !r.mse.is_nan()) {
        by_rep
            .entry(r.mechanism)
            .or_default()
            .entry(epsilon_key(r.epsilon))
            .or_default()
            .entry(r.repetition)
            .or_default()
            .push(r.mse);
    }
    by_rep
        .into_iter()
        .map(|(m, pts)| {
            let v = pts
                .into_iter()
                .map(|(e, reps)| {
                    let vals: Vec<f64> = reps
                        .values()
                        .map(|xs| xs.iter().sum::<f64>() / xs.len() as f64)
                        .collect();
                    summarize_values(f64::from_bits(e), &vals)
                })
                .collect();
            (m, v)
        })
        .collect()
}

/// How well one curve follows "MSE decreases as epsilon grows".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    /// Adjacent pairs whose mean MSE increased.
    pub inversions: usize,
    /// Inversions whose repetition-level ranges do not overlap.
    pub separated_inversions: usize,
    /// Mean MSE at the smallest epsilon divided by mean MSE at the largest.
    pub reduction: f64,
}

impl TrendCheck {
    pub fn of(points: &[PointSummary]) -> Self {
        let mut inversions = 0;
        let mut separated_inversions = 0;
        for w in points.windows(2) {
            if w[1].mean > w[0].mean {
                inversions += 1;
                if w[1].min > w[0].max {
                    separated_inversions += 1;
                }
            }
        }
        let reduction = match (points.first(), points.last()) {
            (Some(a), Some(b)) if b.mean > 0.0 => a.mean / b.mean,
            (Some(a), Some(_)) if a.mean > 0.0 => f64::INFINITY,
            _ => 1.0,
        };
        Self { inversions, separated_inversions, reduction }
    }

    /// Non-increasing up to one inversion, and that inversion overlaps.
    pub fn is_monotone(&self) -> bool {
        self.inversions <= 1 && self.separated_inversions == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown report format '{other}'"))),
        }
    }
}

pub fn write_csv<W: Write>(table: &SweepTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in &table.rows {
        w.write_record([
            r.scenario.as_str().to_string(),
            r.mechanism.as_str().to_string(),
            format_f64(r.epsilon),
            r.repetition.to_string(),
            format_f64(r.mse),
            r.suppressed_cells.to_string(),
            format_f64(r.per_user_epsilon),
            format_f64(r.composed_epsilon),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<SweepTable> {
    let mut rdr = csv::Reader::from_reader(input);
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(parse_err(1, "unexpected columns".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let float = |j: usize| parse_f64(&rec[j]).ok_or_else(|| parse_err(line, format!("bad number '{}'", &rec[j])));
        let int = |j: usize| rec[j].parse::<usize>().map_err(|e| parse_err(line, e.to_string()));
        rows.push(SweepRow {
            scenario: rec[0].parse()?,
            mechanism: rec[1].parse()?,
            epsilon: float(2)?,
            repetition: int(3)?,
            mse: float(4)?,
            suppressed_cells: int(5)?,
            per_user_epsilon: float(6)?,
            composed_epsilon: float(7)?,
        });
    }
    Ok(SweepTable { rows })
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    schema_version: u32,
    caveat: String,
    rows: Vec<SweepRow>,
}

pub fn write_json<W: Write>(table: &SweepTable, mut out: W) -> Result<()> {
    let report = JsonReport {
        schema_version: SCHEMA_VERSION,
        caveat: COMPARABILITY_CAVEAT.into(),
        rows: table.rows.clone(),
    };
    serde_json::to_writer_pretty(&mut out, &report).map_err(|e| Error::Io(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<SweepTable> {
    let report: JsonReport = serde_json::from_reader(input).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(SweepTable { rows: report.rows })
}

/// Writes `table` to `path` in `format`.
pub fn emit_report(table: &SweepTable, format: ReportFormat, path: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Empty);
    }
    let out = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Csv => write_csv(table, out),
        ReportFormat::Json => write_json(table, out),
    }
}

pub fn read_report(format: ReportFormat, path: &Path) -> Result<SweepTable> {
    let f = File::open(path)?;
    match format {
        ReportFormat::Csv => read_csv(f),
        ReportFormat::Json => read_json(f),
    }
}
