//! Synthetic geo-datasets for the four aggregation scenarios.
//!
//! Each cell's ground-truth distribution is derived from Perlin fields
//! evaluated at the cell centre (in grid units), then blended with a jitter
//! term; individual records are drawn from that distribution. Everything is a
//! pure function of [`ScenarioConfig`].

mod io;
mod perlin;

pub use io::{read_dataset, read_dataset_file, write_dataset, write_dataset_file};
pub use perlin::{perlin, PerlinField, PerlinSampler};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellId, GridSpec};
use crate::model::{Record, ScenarioKind};
use crate::rng::{mix, RngStream};

/// Seed domain for per-cell record streams, disjoint from field indices.
const RECORD_DOMAIN: u64 = 0x5245_434f_5244_5321;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub grid: GridSpec,
    pub records_per_cell: usize,
    /// One-hot categories (`k`).
    #[serde(default = "defaults::categories")]
    pub categories: u32,
    /// Rank levels (`m`).
    #[serde(default = "defaults::levels")]
    pub levels: u32,
    #[serde(default = "defaults::income_lo")]
    pub income_lo: f64,
    #[serde(default = "defaults::income_hi")]
    pub income_hi: f64,
    #[serde(default = "defaults::jitter")]
    pub jitter: f64,
    #[serde(default = "defaults::frequency")]
    pub frequency: f64,
    #[serde(default = "defaults::octaves")]
    pub octaves: u32,
    pub seed: u64,
}

pub mod defaults {
    pub fn categories() -> u32 {
        5
    }
    pub fn levels() -> u32 {
        5
    }
    pub fn income_lo() -> f64 {
        20_000.0
    }
    pub fn income_hi() -> f64 {
        200_000.0
    }
    pub fn jitter() -> f64 {
        0.2
    }
    /// About 2.4 lattice cells across a 16-cell grid.
    pub fn frequency() -> f64 {
        0.15
    }
    pub fn octaves() -> u32 {
        1
    }
}

impl ScenarioConfig {
    /// Defaults for `scenario` over the preset region.
    pub fn new(scenario: ScenarioKind, grid: GridSpec, records_per_cell: usize, seed: u64) -> Self {
        Self {
            scenario,
            grid,
            records_per_cell,
            categories: defaults::categories(),
            levels: defaults::levels(),
            income_lo: defaults::income_lo(),
            income_hi: defaults::income_hi(),
            jitter: defaults::jitter(),
            frequency: defaults::frequency(),
            octaves: defaults::octaves(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.grid.validate()?;
        if self.records_per_cell == 0 {
            return bad("records_per_cell must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return bad(format!("jitter {} outside [0, 1]", self.jitter));
        }
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad(format!("frequency {} must be positive", self.frequency));
        }
        if self.octaves == 0 {
            return bad("octaves must be >= 1".into());
        }
        match self.scenario {
            ScenarioKind::OneHot if self.categories < 2 => bad("categories must be >= 2".into()),
            ScenarioKind::Ranking if self.levels < 2 => bad("levels must be >= 2".into()),
            ScenarioKind::Income
                if !(self.income_lo.is_finite()
                    && self.income_hi.is_finite()
                    && self.income_lo < self.income_hi) =>
            {
                bad("income_lo must be < income_hi".into())
            }
            _ => Ok(()),
        }
    }

    pub fn record_count(&self) -> usize {
        self.grid.cell_count() * self.records_per_cell
    }

    /// Noise field for category `index` (0 for single-field scenarios).
    pub fn field(&self, index: u64) -> PerlinField {
        PerlinField::new(mix(self.seed, index), self.frequency).with_octaves(self.octaves)
    }

    fn expect(&self, scenario: ScenarioKind) -> Result<()> {
        self.validate()?;
        if self.scenario != scenario {
            return Err(Error::InvalidConfig(format!(
                "config is for scenario {}, not {scenario}",
                self.scenario
            )));
        }
        Ok(())
    }
}

/// Field evaluation point for a cell: its centre in grid units.
fn cell_center(cell: CellId) -> (f64, f64) {
    (cell.col as f64 + 0.5, cell.row as f64 + 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    /// Row-major by cell, `records_per_cell` records per cell for generated data.
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn scenario(&self) -> ScenarioKind {
        self.config.scenario
    }

    pub fn grid(&self) -> &GridSpec {
        &self.config.grid
    }
}

/// Shift category scores to be non-negative, normalise to the simplex, and
/// blend with the uniform distribution at weight `jitter`.
pub fn onehot_distribution(scores: &[f64], jitter: f64) -> Vec<f64> {
    let k = scores.len() as f64;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = scores.iter().map(|s| s - min).collect();
    let sum: f64 = shifted.iter().sum();
    shifted
        .iter()
        .map(|s| {
            let base = if sum < 1e-9 { 1.0 / k } else { s / sum };
            (1.0 - jitter) * base + jitter / k
        })
        .collect()
}

/// Positive rate of a boolean cell.
pub fn boolean_rate(noise: f64, jitter: f64) -> f64 {
    ((1.0 - jitter) * (noise + 1.0) / 2.0 + jitter * 0.5).clamp(0.01, 0.99)
}

pub fn modal_rank(noise: f64, levels: u32) -> u32 {
    let r = 1.0 + (levels as f64 * (noise + 1.0) / 2.0).floor();
    r.clamp(1.0, levels as f64) as u32
}

pub fn income_mean(noise: f64, lo: f64, hi: f64) -> f64 {
    (lo + (hi - lo) * (noise + 1.0) / 2.0).clamp(lo, hi)
}

/// Per-cell category distributions, row-major.
pub fn onehot_cell_distributions(cfg: &ScenarioConfig) -> Vec<Vec<f64>> {
    let samplers: Vec<PerlinSampler> = (0..cfg.categories as u64)
        .map(|j| cfg.field(j).sampler())
        .collect();
    (0..cfg.grid.cell_count())
        .map(|i| {
            let (x, y) = cell_center(cfg.grid.cell_at(i));
            let scores: Vec<f64> = samplers.iter().map(|s| s.eval(x, y)).collect();
            onehot_distribution(&scores, cfg.jitter)
        })
        .collect()
}

fn single_field_values(cfg: &ScenarioConfig, map: impl Fn(f64) -> f64) -> Vec<f64> {
    let sampler = cfg.field(0).sampler();
    (0..cfg.grid.cell_count())
        .map(|i| {
            let (x, y) = cell_center(cfg.grid.cell_at(i));
            map(sampler.eval(x, y))
        })
        .collect()
}

pub fn boolean_cell_rates(cfg: &ScenarioConfig) -> Vec<f64> {
    single_field_values(cfg, |n| boolean_rate(n, cfg.jitter))
}

pub fn ranking_modal_ranks(cfg: &ScenarioConfig) -> Vec<u32> {
    single_field_values(cfg, |n| modal_rank(n, cfg.levels) as f64)
        .into_iter()
        .map(|r| r as u32)
        .collect()
}

pub fn income_cell_means(cfg: &ScenarioConfig) -> Vec<f64> {
    single_field_values(cfg, |n| income_mean(n, cfg.income_lo, cfg.income_hi))
}

/// Draws `records_per_cell` records for every cell in parallel and assembles
/// them row-major.
fn per_cell<F>(cfg: &ScenarioConfig, draw: F) -> Result<Vec<Record>>
where
    F: Fn(usize, CellId, &mut RngStream) -> Result<Record> + Sync,
{
    let base = mix(cfg.seed, RECORD_DOMAIN);
    let cells: Vec<Vec<Record>> = (0..cfg.grid.cell_count())
        .into_par_iter()
        .map(|i| {
            let cell = cfg.grid.cell_at(i);
            let mut rng = RngStream::derive(base, i as u64);
            (0..cfg.records_per_cell)
                .map(|_| draw(i, cell, &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(cells.into_iter().flatten().collect())
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn generate_onehot_dataset(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.expect(ScenarioKind::OneHot)?;
    let dists = onehot_cell_distributions(cfg);
    let k = cfg.categories;
    let records = per_cell(cfg, |i, cell, rng| {
        let idx = sample_index(&dists[i], rng.uniform());
        Record::categorical(cell, idx as u32, k)
    })?;
    Ok(Dataset { config: cfg.clone(), records })
}

pub fn generate_boolean_dataset(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.expect(ScenarioKind::Boolean)?;
    let rates = boolean_cell_rates(cfg);
    let records = per_cell(cfg, |i, cell, rng| Ok(Record::boolean(cell, rng.uniform() < rates[i])))?;
    Ok(Dataset { config: cfg.clone(), records })
}

pub fn generate_ranking_dataset(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.expect(ScenarioKind::Ranking)?;
    let modes = ranking_modal_ranks(cfg);
    let m = cfg.levels;
    let records = per_cell(cfg, |i, cell, rng| {
        let rank = if rng.uniform() < cfg.jitter {
            1 + ((rng.uniform() * m as f64) as u32).min(m - 1)
        } else {
            modes[i]
        };
        Record::rank(cell, rank, m)
    })?;
    Ok(Dataset { config: cfg.clone(), records })
}

pub fn generate_income_dataset(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.expect(ScenarioKind::Income)?;
    let means = income_cell_means(cfg);
    let (lo, hi) = (cfg.income_lo, cfg.income_hi);
    let spread = cfg.jitter * (hi - lo);
    let records = per_cell(cfg, |i, cell, rng| {
        let v = (means[i] + spread * rng.standard_normal()).clamp(lo, hi);
        Record::float(cell, v, lo, hi)
    })?;
    Ok(Dataset { config: cfg.clone(), records })
}

/// Dispatches on `cfg.scenario`.
pub fn generate(cfg: &ScenarioConfig) -> Result<Dataset> {
    match cfg.scenario {
        ScenarioKind::OneHot => generate_onehot_dataset(cfg),
        ScenarioKind::Boolean => generate_boolean_dataset(cfg),
        ScenarioKind::Ranking => generate_ranking_dataset(cfg),
        ScenarioKind::Income => generate_income_dataset(cfg),
    }
}
