//! End-to-end local-DP aggregation: perturb each record on the "client",
//! shuffle the reports, tally them per cell, suppress small cohorts, and
//! invert the noise channel to estimate each cell's aggregate.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{BudgetCap, BudgetEntry, BudgetLedger};
use crate::error::{Error, Result};
use crate::evaluation::mse;
use crate::grid::{CellId, GridSpec};
use crate::mechanisms::{
    exponential_select, gaussian_sigma, one_hot, onehot_flip_probability, randomize_bit,
    randomize_onehot, rr_flip_probability,
};
use crate::model::{MechanismConfig, MechanismKind, Record, ScenarioKind, Value};
use crate::rng::{mix, RngStream};
use crate::synthgen::Dataset;

const PERTURB_DOMAIN: u64 = 0x5045_5254_5552_4221;
const SHUFFLE_DOMAIN: u64 = 0x5348_5546_464c_4521;

/// What a client sends after local perturbation. Carries no identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    BitVector(Vec<bool>),
    Bit(bool),
    RankValue { rank: u32, levels: u32 },
    FloatValue(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub cell: CellId,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scenario: ScenarioKind,
    pub mechanism: MechanismConfig,
    pub min_cohort: usize,
    pub seed: u64,
    /// Optional cap; a run whose charge would exceed it is aborted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetCap>,
}

impl PipelineConfig {
    pub fn new(scenario: ScenarioKind, mechanism: MechanismConfig, min_cohort: usize, seed: u64) -> Self {
        Self {
            scenario,
            mechanism,
            min_cohort,
            seed,
            budget: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mechanism.validate()?;
        check_admissible(self.mechanism.kind, self.scenario)
    }
}

fn check_admissible(kind: MechanismKind, scenario: ScenarioKind) -> Result<()> {
    if kind.admissible_for(scenario) {
        Ok(())
    } else {
        Err(Error::InadmissibleMechanism {
            mechanism: kind.to_string(),
            scenario: scenario.to_string(),
        })
    }
}

/// Exact, unperturbed encoding of a record.
fn encode(record: &Record) -> Payload {
    match *record.value() {
        Value::Categorical { index, k } => Payload::BitVector(one_hot(index as usize, k as usize)),
        Value::Boolean(b) => Payload::Bit(b),
        Value::Rank { rank, levels } => Payload::RankValue { rank, levels },
        Value::Float { value, lo, hi } => Payload::FloatValue(unit_scale(value, lo, hi)),
    }
}

/// Clips to `[lo, hi]` and maps onto `[0, 1]`.
fn unit_scale(value: f64, lo: f64, hi: f64) -> f64 {
    (value.clamp(lo, hi) - lo) / (hi - lo)
}

/// Applies the configured mechanism to one record.
///
/// Categorical and rank records under randomized response are one-hot encoded
/// and bit-flipped; ranks under the exponential mechanism use the indicator
/// utility with unit sensitivity; floats are clipped to their range, scaled
/// onto `[0, 1]`, and get Gaussian noise calibrated to `mech.sensitivity` on
/// that scale (1 is exact).
pub fn perturb_record(record: &Record, mech: &MechanismConfig, rng: &mut RngStream) -> Result<ClientReport> {
    check_admissible(mech.kind, record.value().scenario())?;
    let cell = record.cell();
    let payload = match (mech.kind, *record.value()) {
        (MechanismKind::None, _) => encode(record),
        (MechanismKind::RandomizedResponse, Value::Boolean(b)) => {
            Payload::Bit(randomize_bit(b, mech.epsilon, rng)?)
        }
        (MechanismKind::RandomizedResponse, Value::Categorical { index, k }) => {
            Payload::BitVector(randomize_onehot(&one_hot(index as usize, k as usize), mech.epsilon, rng)?)
        }
        (MechanismKind::RandomizedResponse, Value::Rank { rank, levels }) => Payload::BitVector(
            randomize_onehot(&one_hot(rank as usize - 1, levels as usize), mech.epsilon, rng)?,
        ),
        (MechanismKind::Exponential, Value::Rank { rank, levels }) => {
            let candidates: Vec<u32> = (1..=levels).collect();
            let utilities: Vec<f64> = candidates
                .iter()
                .map(|&r| if r == rank { 1.0 } else { 0.0 })
                .collect();
            let chosen = exponential_select(&candidates, &utilities, 1.0, mech.epsilon, rng)?;
            Payload::RankValue { rank: chosen, levels }
        }
        (MechanismKind::Gaussian, Value::Float { value, lo, hi }) => {
            let sigma = gaussian_sigma(mech.sensitivity, mech.epsilon, mech.delta)?;
            Payload::FloatValue(unit_scale(value, lo, hi) + sigma * rng.standard_normal())
        }
        _ => unreachable!("admissibility checked above"),
    };
    Ok(ClientReport { cell, payload })
}

/// Uniformly random permutation of the reports (Fisher-Yates).
pub fn shuffle(mut reports: Vec<ClientReport>, rng: &mut RngStream) -> Vec<ClientReport> {
    reports.shuffle(rng);
    reports
}

/// Per-cell tallies before estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTally {
    pub reports: usize,
    /// Per-outcome counts for histogram payloads; empty for float payloads.
    pub counts: Vec<u64>,
    /// Float payloads, sorted so sums do not depend on arrival order.
    pub values: Vec<f64>,
    pub suppressed: bool,
}

impl CellTally {
    /// Order-independent sum of float payloads.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadShape {
    Histogram { outcomes: usize, bit_vector: bool },
    Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAggregates {
    pub shape: PayloadShape,
    /// Row-major, one per grid cell.
    pub cells: Vec<CellTally>,
}

fn shape_of(p: &Payload) -> PayloadShape {
    match p {
        Payload::BitVector(v) => PayloadShape::Histogram { outcomes: v.len(), bit_vector: true },
        Payload::Bit(_) => PayloadShape::Histogram { outcomes: 2, bit_vector: false },
        Payload::RankValue { levels, .. } => PayloadShape::Histogram {
            outcomes: *levels as usize,
            bit_vector: false,
        },
        Payload::FloatValue(_) => PayloadShape::Scalar,
    }
}

fn payload_fits(scenario: ScenarioKind, p: &Payload) -> bool {
    matches!(
        (scenario, p),
        (ScenarioKind::OneHot, Payload::BitVector(_))
            | (ScenarioKind::Boolean, Payload::Bit(_))
            | (ScenarioKind::Ranking, Payload::BitVector(_) | Payload::RankValue { .. })
            | (ScenarioKind::Income, Payload::FloatValue(_))
    )
}

/// Tallies reports per cell and flags cells with fewer than `min_cohort`
/// reports as suppressed.
pub fn aggregate(
    reports: &[ClientReport],
    grid: &GridSpec,
    scenario: ScenarioKind,
    min_cohort: usize,
) -> Result<RawAggregates> {
    let shape = match reports.first() {
        Some(r) => shape_of(&r.payload),
        None => PayloadShape::Histogram { outcomes: 0, bit_vector: false },
    };
    let outcomes = match shape {
        PayloadShape::Histogram { outcomes, .. } => outcomes,
        PayloadShape::Scalar => 0,
    };
    let mut cells: Vec<CellTally> = (0..grid.cell_count())
        .map(|_| CellTally {
            reports: 0,
            counts: vec![0; outcomes],
            values: Vec::new(),
            suppressed: false,
        })
        .collect();

    for r in reports {
        if shape_of(&r.payload) != shape || !payload_fits(scenario, &r.payload) {
            return Err(Error::MixedPayloads);
        }
        if !grid.contains_cell(r.cell) {
            return Err(Error::InvalidRecord(format!(
                "report for cell ({}, {}) outside grid",
                r.cell.row, r.cell.col
            )));
        }
        let tally = &mut cells[grid.index_of(r.cell)];
        tally.reports += 1;
        match &r.payload {
            Payload::BitVector(bits) => {
                for (c, &b) in tally.counts.iter_mut().zip(bits) {
                    *c += u64::from(b);
                }
            }
            Payload::Bit(b) => tally.counts[usize::from(*b)] += 1,
            Payload::RankValue { rank, levels } => {
                if *rank == 0 || rank > levels {
                    return Err(Error::InvalidRecord(format!("rank {rank} outside 1..={levels}")));
                }
                tally.counts[*rank as usize - 1] += 1;
            }
            Payload::FloatValue(v) => tally.values.push(*v),
        }
    }
    for tally in &mut cells {
        tally.values.sort_by(f64::total_cmp);
        tally.suppressed = tally.reports < min_cohort;
    }
    Ok(RawAggregates { shape, cells })
}

/// Frequency estimates from one cell's noisy counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedHistogram {
    /// Unbiased per-outcome count estimates, before clamping.
    pub unclamped: Vec<f64>,
    /// Clamped at zero and renormalised to sum to one.
    pub frequencies: Vec<f64>,
}

/// Inverts a channel that reports each outcome with probability `keep` when
/// it is the true outcome and `other` when it is not:
/// `estimate = (count - n * other) / (keep - other)`.
pub fn debias_symmetric_channel(noisy_counts: &[f64], keep: f64, other: f64, n: usize) -> Result<DebiasedHistogram> {
    if n == 0 {
        return Err(Error::Empty);
    }
    let gap = keep - other;
    if !(gap > 1e-9) {
        return Err(Error::DegenerateFlipProbability(other));
    }
    let n = n as f64;
    let unclamped: Vec<f64> = noisy_counts.iter().map(|c| (c - n * other) / gap).collect();
    let clamped: Vec<f64> = unclamped.iter().map(|e| e.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let frequencies = if total > 0.0 {
        clamped.iter().map(|c| c / total).collect()
    } else {
        vec![1.0 / clamped.len() as f64; clamped.len()]
    };
    Ok(DebiasedHistogram { unclamped, frequencies })
}

/// Randomized-response inversion with per-bit flip probability `flip_p`.
pub fn debias_rr_histogram(noisy_counts: &[f64], flip_p: f64, n: usize) -> Result<DebiasedHistogram> {
    if !(0.0..0.5 - 1e-9).contains(&flip_p) {
        return Err(Error::DegenerateFlipProbability(flip_p));
    }
    debias_symmetric_channel(noisy_counts, 1.0 - flip_p, flip_p, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: CellId,
    pub count: usize,
    pub suppressed: bool,
    /// Normalised histogram, or a one-element vector holding the mean scaled
    /// to `[0, 1]` by the value range for float data. `None` for empty cells.
    pub true_aggregate: Option<Vec<f64>>,
    /// Withheld for suppressed and empty cells.
    pub private_aggregate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub scenario: ScenarioKind,
    /// The mechanism as applied, with data-derived sensitivity.
    pub mechanism: MechanismConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub cells: Vec<CellResult>,
    /// Over non-suppressed, non-empty cells; `None` if there are none.
    pub mse: Option<f64>,
    pub suppressed_cells: usize,
    pub ledger: BudgetLedger,
}

/// Applies the run's channel inversion to one cell.
enum Estimator {
    Exact,
    Channel { keep: f64, other: f64 },
    Mean,
}

fn estimator_for(mech: &MechanismConfig, scenario: ScenarioKind, levels: u32) -> Result<Estimator> {
    Ok(match (mech.kind, scenario) {
        (_, ScenarioKind::Income) => Estimator::Mean,
        (MechanismKind::None, _) => Estimator::Exact,
        (MechanismKind::RandomizedResponse, ScenarioKind::Boolean) => {
            let p = rr_flip_probability(mech.epsilon)?;
            Estimator::Channel { keep: 1.0 - p, other: p }
        }
        (MechanismKind::RandomizedResponse, _) => {
            let p = onehot_flip_probability(mech.epsilon)?;
            Estimator::Channel { keep: 1.0 - p, other: p }
        }
        (MechanismKind::Exponential, _) => {
            // Indicator utility: the true rank has weight e^(eps/2), others 1.
            let w = (mech.epsilon / 2.0).exp();
            let z = w + (levels as f64 - 1.0);
            Estimator::Channel { keep: w / z, other: 1.0 / z }
        }
        (MechanismKind::Gaussian, _) => unreachable!("admissibility checked"),
    })
}

fn histogram(counts: &[u64], n: usize) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

fn check_dataset(ds: &Dataset) -> Result<()> {
    let c = &ds.config;
    for r in &ds.records {
        if !c.grid.contains_cell(r.cell()) {
            return Err(Error::InvalidRecord("record outside grid".into()));
        }
        let ok = match *r.value() {
            Value::Categorical { k, .. } => c.scenario == ScenarioKind::OneHot && k == c.categories,
            Value::Boolean(_) => c.scenario == ScenarioKind::Boolean,
            Value::Rank { levels, .. } => c.scenario == ScenarioKind::Ranking && levels == c.levels,
            Value::Float { lo, hi, .. } => {
                c.scenario == ScenarioKind::Income && lo == c.income_lo && hi == c.income_hi
            }
        };
        if !ok {
            return Err(Error::InvalidRecord("record does not match dataset config".into()));
        }
    }
    Ok(())
}

/// Runs the full flow over `dataset`.
///
/// Each record is perturbed with its own stream derived from the run seed and
/// the record's index, so results do not depend on thread scheduling. The
/// ledger receives one entry for the run; a budget violation aborts before any
/// private aggregate is computed.
pub fn run_pipeline(dataset: &Dataset, cfg: &PipelineConfig) -> Result<AggregateResult> {
    cfg.validate()?;
    if dataset.scenario() != cfg.scenario {
        return Err(Error::InvalidConfig(format!(
            "dataset scenario {} does not match run scenario {}",
            dataset.scenario(),
            cfg.scenario
        )));
    }
    check_dataset(dataset)?;
    if dataset.records.is_empty() {
        return Err(Error::InvalidConfig("dataset has no records".into()));
    }
    let dc = &dataset.config;
    let grid = dc.grid;
    let n = dataset.records.len() as u64;

    let mut mech = cfg.mechanism;
    let mut sigma = None;
    let entry = match mech.kind {
        MechanismKind::None => BudgetEntry::pure(MechanismKind::None, f64::INFINITY, n),
        MechanismKind::Gaussian => {
            // Values are unit-scaled before noise, so one record moves the sum by at most 1.
            mech.sensitivity = 1.0;
            let s = gaussian_sigma(mech.sensitivity, mech.epsilon, mech.delta)?;
            sigma = Some(s);
            BudgetEntry::gaussian(mech.epsilon, mech.delta, s, mech.sensitivity, n)
        }
        kind => {
            mech.sensitivity = 1.0;
            BudgetEntry::pure(kind, mech.epsilon, n)
        }
    };
    let mut ledger = match cfg.budget {
        Some(cap) => BudgetLedger::with_cap(cap.epsilon, cap.delta, cap.basis),
        None => BudgetLedger::new(),
    };
    ledger.charge(entry)?;

    let true_reports: Vec<ClientReport> = dataset
        .records
        .iter()
        .map(|r| ClientReport { cell: r.cell(), payload: encode(r) })
        .collect();
    let truth = aggregate(&true_reports, &grid, cfg.scenario, cfg.min_cohort)?;

    let perturb_base = mix(cfg.seed, PERTURB_DOMAIN);
    let reports: Vec<ClientReport> = dataset
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| perturb_record(r, &mech, &mut RngStream::derive(perturb_base, i as u64)))
        .collect::<Result<_>>()?;
    let reports = shuffle(reports, &mut RngStream::derive(cfg.seed, SHUFFLE_DOMAIN));
    ledger.mark_shuffled();
    let noisy = aggregate(&reports, &grid, cfg.scenario, cfg.min_cohort)?;

    let estimator = estimator_for(&mech, cfg.scenario, dc.levels)?;
    let mut cells = Vec::with_capacity(grid.cell_count());
    let (mut true_all, mut private_all) = (Vec::new(), Vec::new());
    for (i, (t, p)) in truth.cells.iter().zip(&noisy.cells).enumerate() {
        let count = p.reports;
        let true_aggregate = (t.reports > 0).then(|| match estimator {
            Estimator::Mean => vec![t.sum() / t.reports as f64],
            _ => histogram(&t.counts, t.reports),
        });
        let private_aggregate = if p.suppressed || count == 0 {
            None
        } else {
            Some(match estimator {
                Estimator::Exact => histogram(&p.counts, count),
                Estimator::Channel { keep, other } => {
                    let counts: Vec<f64> = p.counts.iter().map(|&c| c as f64).collect();
                    debias_symmetric_channel(&counts, keep, other, count)?.frequencies
                }
                Estimator::Mean => vec![p.sum() / count as f64],
            })
        };
        if let (Some(t), Some(p)) = (&true_aggregate, &private_aggregate) {
            true_all.extend_from_slice(t);
            private_all.extend_from_slice(p);
        }
        cells.push(CellResult {
            cell: grid.cell_at(i),
            count,
            suppressed: p.suppressed,
            true_aggregate,
            private_aggregate,
        });
    }
    let mse = if true_all.is_empty() { None } else { Some(mse(&true_all, &private_all)?) };
    let suppressed_cells = cells.iter().filter(|c| c.suppressed).count();

    Ok(AggregateResult {
        scenario: cfg.scenario,
        mechanism: mech,
        sigma,
        cells,
        mse,
        suppressed_cells,
        ledger,
    })
}
