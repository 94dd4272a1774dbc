//! Locational differential privacy over a geographic grid.
//!
//! Individuals perturb their own record with a local DP mechanism
//! (randomized response, the exponential mechanism, or the Gaussian
//! mechanism); reports are shuffled, tallied per grid cell, gated on a
//! minimum cohort size, and debiased. A ledger tracks the privacy spent.
//!
//! ```
//! use geodp_core::{generate, run_pipeline, GridSpec, MechanismConfig, PipelineConfig, ScenarioConfig, ScenarioKind};
//!
//! let grid = GridSpec::pittsburgh(4, 4).unwrap();
//! let data = generate(&ScenarioConfig::new(ScenarioKind::Boolean, grid, 100, 7)).unwrap();
//! let mech = MechanismConfig::randomized_response(1.0).unwrap();
//! let result = run_pipeline(&data, &PipelineConfig::new(ScenarioKind::Boolean, mech, 10, 42)).unwrap();
//! assert_eq!(result.cells.len(), 16);
//! assert_eq!(result.ledger.totals().per_user_epsilon, 1.0);
//! ```

pub mod accountant;
pub mod error;
pub mod evaluation;
pub mod extended_float;
pub mod grid;
pub mod mechanisms;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod synthgen;

pub use accountant::{
    compose_basic, compose_rdp_gaussian, BudgetCap, BudgetEntry, BudgetLedger, CapBasis, LedgerTotals,
    RdpOptions,
};
pub use error::{Error, Result};
pub use evaluation::{
    emit_report, mechanism_summaries, mse, read_report, run_sweep, series_summaries, PointSummary,
    ReportFormat, SweepConfig, SweepRow, SweepTable, TrendCheck,
};
pub use grid::{build_grid, locate, CellBounds, CellId, GridSpec};
pub use mechanisms::{
    add_gaussian_noise, exponential_select, gaussian_sigma, randomize_bit, randomize_onehot,
    rr_flip_probability, DiscreteDistribution,
};
pub use model::{admissibility_table, MechanismConfig, MechanismKind, Record, ScenarioKind, Value};
pub use pipeline::{
    aggregate, debias_rr_histogram, perturb_record, run_pipeline, shuffle, AggregateResult, CellResult,
    ClientReport, Payload, PipelineConfig,
};
pub use rng::RngStream;
pub use synthgen::{generate, read_dataset_file, write_dataset_file, Dataset, ScenarioConfig};
