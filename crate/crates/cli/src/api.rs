//! The one execution path behind both the CLI and the HTTP service.
//!
//! Each front end builds a [`RunRequest`], calls [`execute`] (or
//! [`execute_on_dataset`]), and writes [`response_bytes`]. Identical
//! parameters therefore give byte-identical output on either path.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use geodp_core::evaluation::{self, SCHEMA_VERSION};
use geodp_core::extended_float::parse_f64;
use geodp_core::grid::MAX_CELLS;
use geodp_core::{
    admissibility_table, generate, run_pipeline, run_sweep, AggregateResult, BudgetCap, BudgetEntry,
    CellBounds, Dataset, GridSpec, LedgerTotals, MechanismConfig, MechanismKind, PipelineConfig,
    ScenarioConfig, ScenarioKind, SweepConfig, SweepTable,
};

/// Per-request compute cap for the HTTP service: grid cells × records per cell.
pub const MAX_REQUEST_RECORDS: usize = 1_000_000;

pub const DEFAULT_ROWS: usize = 16;
pub const DEFAULT_COLS: usize = 16;
pub const DEFAULT_RECORDS_PER_CELL: usize = 200;
pub const DEFAULT_MIN_COHORT: usize = 10;
pub const DEFAULT_DELTA: f64 = 1.5e-7;
pub const DEFAULT_CATEGORIES: u32 = 5;
pub const DEFAULT_LEVELS: u32 = 5;
const MAX_OUTCOMES: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("invalid request: {}", join(.0))]
    Invalid(Vec<FieldError>),
    #[error("mechanism {mechanism} is not admissible for scenario {scenario}")]
    Inadmissible { scenario: String, mechanism: String },
    #[error("request needs {records} records; the limit is {limit}")]
    TooLarge { records: usize, limit: usize },
    #[error("privacy budget exceeded: epsilon {epsilon}, delta {delta}")]
    BudgetExceeded { epsilon: f64, delta: f64 },
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        ApiError::Invalid(vec![FieldError {
            field: field.into(),
            message: message.into(),
        }])
    }
}

impl From<geodp_core::Error> for ApiError {
    fn from(e: geodp_core::Error) -> Self {
        use geodp_core::Error as E;
        match e {
            E::InadmissibleMechanism { mechanism, scenario } => ApiError::Inadmissible { scenario, mechanism },
            E::BudgetExceeded { epsilon, delta } => ApiError::BudgetExceeded { epsilon, delta },
            E::InvalidEpsilon(_) | E::DegenerateFlipProbability(_) => ApiError::field("epsilon", e.to_string()),
            E::InvalidDelta(_) => ApiError::field("delta", e.to_string()),
            E::InvalidSpec(m) => ApiError::field("grid", m),
            E::InvalidConfig(m) | E::InvalidMechanism(m) => ApiError::field("request", m),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

/// Parameters of one simulated run. `seed` drives perturbation and
/// shuffling; `data_seed` drives dataset generation and defaults to `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub scenario: ScenarioKind,
    pub mechanism: MechanismKind,
    #[serde(with = "geodp_core::extended_float")]
    pub epsilon: f64,
    pub delta: f64,
    pub rows: usize,
    pub cols: usize,
    pub records_per_cell: usize,
    pub min_cohort: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub categories: u32,
    pub levels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetCap>,
}

const RUN_FIELDS: [&str; 13] = [
    "scenario",
    "mechanism",
    "epsilon",
    "delta",
    "rows",
    "cols",
    "records_per_cell",
    "min_cohort",
    "seed",
    "data_seed",
    "categories",
    "levels",
    "budget",
];

/// Collects typed fields out of a JSON object, remembering every failure.
struct Fields<'a> {
    obj: &'a Map<String, Json>,
    errors: Vec<FieldError>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Option<&'a Json> {
        self.obj.get(key).filter(|v| !v.is_null())
    }

    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
    }

    fn required<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && self.get(key).is_none() {
            self.fail(key, "is required");
        }
        v
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(key)?;
        match v.as_str().map(str::parse::<T>) {
            Some(Ok(t)) => Some(t),
            Some(Err(e)) => {
                self.fail(key, e.to_string());
                None
            }
            None => {
                self.fail(key, "must be a string");
                None
            }
        }
    }

    fn uint(&mut self, key: &str) -> Option<u64> {
        let v = self.get(key)?;
        let r = v.as_u64();
        if r.is_none() {
            self.fail(key, "must be a non-negative integer");
        }
        r
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        let v = self.get(key)?;
        let r = v.as_f64().or_else(|| v.as_str().and_then(parse_f64));
        if r.is_none() {
            self.fail(key, "must be a number or \"inf\"");
        }
        r
    }
}

impl RunRequest {
    /// A request with the service defaults for everything but the given fields.
    pub fn new(scenario: ScenarioKind, mechanism: MechanismKind, epsilon: f64, seed: u64) -> Self {
        Self {
            scenario,
            mechanism,
            epsilon,
            delta: if mechanism == MechanismKind::Gaussian { DEFAULT_DELTA } else { 0.0 },
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
            records_per_cell: DEFAULT_RECORDS_PER_CELL,
            min_cohort: DEFAULT_MIN_COHORT,
            seed,
            data_seed: seed,
            categories: DEFAULT_CATEGORIES,
            levels: DEFAULT_LEVELS,
            budget: None,
        }
    }

    pub fn from_json(body: &[u8]) -> Result<Self, ApiError> {
        let v: Json = serde_json::from_slice(body).map_err(|e| ApiError::field("body", format!("malformed JSON: {e}")))?;
        Self::from_value(&v)
    }

    /// Strict parse: unknown keys and ill-typed values are field errors.
    /// `scenario`, `mechanism` and `seed` are mandatory; `epsilon` is too
    /// unless the mechanism is `none`.
    pub fn from_value(v: &Json) -> Result<Self, ApiError> {
        let obj = v
            .as_object()
            .ok_or_else(|| ApiError::field("body", "expected a JSON object"))?;
        let mut f = Fields { obj, errors: Vec::new() };
        for key in obj.keys() {
            if !RUN_FIELDS.contains(&key.as_str()) {
                f.fail(key, "unknown field");
            }
        }
        let scenario = f.parsed::<ScenarioKind>("scenario");
        let scenario = f.required("scenario", scenario);
        let mechanism = f.parsed::<MechanismKind>("mechanism");
        let mechanism = f.required("mechanism", mechanism);
        let seed = f.uint("seed");
        let seed = f.required("seed", seed);
        let epsilon = f.float("epsilon");
        let epsilon = match (epsilon, mechanism) {
            (Some(e), _) => Some(e),
            (None, Some(MechanismKind::None)) => Some(f64::INFINITY),
            (None, Some(_)) => f.required("epsilon", None),
            (None, None) => None,
        };
        let delta = f.float("delta");
        let rows = f.uint("rows");
        let cols = f.uint("cols");
        let records_per_cell = f.uint("records_per_cell");
        let min_cohort = f.uint("min_cohort");
        let data_seed = f.uint("data_seed");
        let categories = f.uint("categories");
        let levels = f.uint("levels");
        let budget = f.get("budget").and_then(|b| match serde_json::from_value::<BudgetCap>(b.clone()) {
            Ok(cap) => Some(cap),
            Err(e) => {
                f.fail("budget", e.to_string());
                None
            }
        });
        if !f.errors.is_empty() {
            return Err(ApiError::Invalid(f.errors));
        }
        let (scenario, mechanism, epsilon, seed) = (scenario.unwrap(), mechanism.unwrap(), epsilon.unwrap(), seed.unwrap());

        let mut req = Self::new(scenario, mechanism, epsilon, seed);
        let size = |v: u64| usize::try_from(v).unwrap_or(usize::MAX);
        let small = |v: u64| u32::try_from(v).unwrap_or(u32::MAX);
        if let Some(d) = delta {
            req.delta = d;
        }
        req.rows = rows.map_or(req.rows, size);
        req.cols = cols.map_or(req.cols, size);
        req.records_per_cell = records_per_cell.map_or(req.records_per_cell, size);
        req.min_cohort = min_cohort.map_or(req.min_cohort, size);
        req.data_seed = data_seed.unwrap_or(seed);
        req.categories = categories.map_or(req.categories, small);
        req.levels = levels.map_or(req.levels, small);
        req.budget = budget;
        Ok(req)
    }

    /// Field checks first (all reported together), then admissibility.
    pub fn validate(&self) -> Result<(), ApiError> {
        let mut errors = Vec::new();
        let mut fail = |field: &str, message: &str| {
            errors.push(FieldError {
                field: field.into(),
                message: message.into(),
            })
        };
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            fail("epsilon", "must be > 0 or \"inf\"");
        }
        if !(0.0..1.0).contains(&self.delta) {
            fail("delta", "must be in [0, 1)");
        } else if self.mechanism == MechanismKind::Gaussian && self.epsilon.is_finite() && self.delta == 0.0 {
            fail("delta", "the gaussian mechanism needs delta > 0");
        }
        if self.rows == 0 {
            fail("rows", "must be >= 1");
        }
        if self.cols == 0 {
            fail("cols", "must be >= 1");
        }
        if self.rows.saturating_mul(self.cols) > MAX_CELLS {
            fail("rows", "rows * cols exceeds the grid size limit");
        }
        if self.records_per_cell == 0 {
            fail("records_per_cell", "must be >= 1");
        }
        if !(2..=MAX_OUTCOMES).contains(&self.categories) {
            fail("categories", "must be in 2..=1024");
        }
        if !(2..=MAX_OUTCOMES).contains(&self.levels) {
            fail("levels", "must be in 2..=1024");
        }
        if let Some(cap) = self.budget {
            if cap.epsilon.is_nan() || cap.epsilon < 0.0 || !(0.0..=1.0).contains(&cap.delta) {
                fail("budget", "needs epsilon >= 0 and delta in [0, 1]");
            }
        }
        if !errors.is_empty() {
            return Err(ApiError::Invalid(errors));
        }
        if !self.mechanism.admissible_for(self.scenario) {
            return Err(ApiError::Inadmissible {
                scenario: self.scenario.to_string(),
                mechanism: self.mechanism.to_string(),
            });
        }
        Ok(())
    }

    /// Canonical form: `epsilon = inf` and mechanism `none` imply each
    /// other, and pure mechanisms carry `delta = 0`.
    pub fn normalized(&self) -> Self {
        let mut r = self.clone();
        if r.mechanism == MechanismKind::None || r.epsilon == f64::INFINITY {
            r.mechanism = MechanismKind::None;
            r.epsilon = f64::INFINITY;
        }
        if r.mechanism != MechanismKind::Gaussian {
            r.delta = 0.0;
        }
        r
    }

    /// Records the run will generate.
    pub fn work(&self) -> usize {
        self.rows.saturating_mul(self.cols).saturating_mul(self.records_per_cell)
    }

    fn mechanism_config(&self) -> Result<MechanismConfig, ApiError> {
        Ok(match self.mechanism {
            MechanismKind::None => MechanismConfig::none(),
            MechanismKind::RandomizedResponse => MechanismConfig::randomized_response(self.epsilon)?,
            MechanismKind::Exponential => MechanismConfig::exponential(self.epsilon)?,
            MechanismKind::Gaussian => MechanismConfig::gaussian(self.epsilon, self.delta, 1.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellView {
    pub row: usize,
    pub col: usize,
    pub bounds: CellBounds,
    pub count: usize,
    pub suppressed: bool,
    pub true_aggregate: Option<Vec<f64>>,
    pub private_aggregate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerView {
    pub entries: Vec<BudgetEntry>,
    pub totals: LedgerTotals,
    pub shuffled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<BudgetCap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResponse {
    pub schema_version: u32,
    /// The request as executed, after normalisation.
    pub config: RunRequest,
    pub grid: GridSpec,
    /// Row-major.
    pub cells: Vec<CellView>,
    pub mse: Option<f64>,
    pub suppressed_cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub ledger: LedgerView,
}

impl RunResponse {
    fn new(config: RunRequest, grid: GridSpec, r: AggregateResult) -> Self {
        let cells = r
            .cells
            .into_iter()
            .map(|c| CellView {
                row: c.cell.row,
                col: c.cell.col,
                bounds: grid.bounds(c.cell),
                count: c.count,
                suppressed: c.suppressed,
                true_aggregate: c.true_aggregate,
                private_aggregate: c.private_aggregate,
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            grid,
            cells,
            mse: r.mse,
            suppressed_cells: r.suppressed_cells,
            sigma: r.sigma,
            ledger: LedgerView {
                entries: r.ledger.entries().to_vec(),
                totals: r.ledger.totals(),
                shuffled: r.ledger.shuffled(),
                cap: r.ledger.cap(),
            },
        }
    }
}

/// Generates the request's synthetic dataset and runs it. `limit` caps
/// [`RunRequest::work`]; the CLI passes `None`.
pub fn execute(req: &RunRequest, limit: Option<usize>) -> Result<RunResponse, ApiError> {
    req.validate()?;
    let req = req.normalized();
    if let Some(limit) = limit {
        if req.work() > limit {
            return Err(ApiError::TooLarge { records: req.work(), limit });
        }
    }
    let grid = GridSpec::pittsburgh(req.rows, req.cols)?;
    let mut sc = ScenarioConfig::new(req.scenario, grid, req.records_per_cell, req.data_seed);
    sc.categories = req.categories;
    sc.levels = req.levels;
    let dataset = generate(&sc)?;
    run_on(req, &dataset)
}

/// Runs an existing dataset. Data-shape fields of `req` are replaced by the
/// dataset's own so the echoed config describes what actually ran.
pub fn execute_on_dataset(req: &RunRequest, dataset: &Dataset) -> Result<RunResponse, ApiError> {
    let dc = &dataset.config;
    if req.scenario != dc.scenario {
        return Err(ApiError::field(
            "scenario",
            format!("dataset holds {} records, not {}", dc.scenario, req.scenario),
        ));
    }
    let mut req = req.clone();
    req.rows = dc.grid.rows;
    req.cols = dc.grid.cols;
    req.records_per_cell = dc.records_per_cell;
    req.data_seed = dc.seed;
    req.categories = dc.categories;
    req.levels = dc.levels;
    req.validate()?;
    run_on(req.normalized(), dataset)
}

fn run_on(req: RunRequest, dataset: &Dataset) -> Result<RunResponse, ApiError> {
    let mut pc = PipelineConfig::new(req.scenario, req.mechanism_config()?, req.min_cohort, req.seed);
    pc.budget = req.budget;
    let result = run_pipeline(dataset, &pc)?;
    Ok(RunResponse::new(req, dataset.config.grid, result))
}

/// Canonical bytes of a response: compact JSON plus a trailing newline.
pub fn response_bytes(resp: &RunResponse) -> Vec<u8> {
    let mut out = serde_json::to_vec(resp).expect("response is serialisable");
    out.push(b'\n');
    out
}

/// What the UI needs to build its controls.
pub fn meta() -> Json {
    let admissibility: Map<String, Json> = admissibility_table()
        .into_iter()
        .map(|(s, ms)| (s.to_string(), json!(ms)))
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "scenarios": ScenarioKind::ALL,
        "mechanisms": MechanismKind::ALL,
        "admissibility": admissibility,
        "default_grid": GridSpec::PITTSBURGH,
        "defaults": {
            "rows": DEFAULT_ROWS,
            "cols": DEFAULT_COLS,
            "records_per_cell": DEFAULT_RECORDS_PER_CELL,
            "min_cohort": DEFAULT_MIN_COHORT,
            "delta": DEFAULT_DELTA,
            "categories": DEFAULT_CATEGORIES,
            "levels": DEFAULT_LEVELS,
            "epsilons": SweepConfig::DEFAULT_EPSILONS,
        },
        "limits": { "max_request_records": MAX_REQUEST_RECORDS },
        "caveat": evaluation::COMPARABILITY_CAVEAT,
    })
}

/// Parses a sweep request: any subset of [`SweepConfig`] fields over the
/// defaults, except `base_seed`, which is mandatory.
pub fn sweep_config_from_json(body: &[u8]) -> Result<SweepConfig, ApiError> {
    let v: Json = serde_json::from_slice(body).map_err(|e| ApiError::field("body", format!("malformed JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| ApiError::field("body", "expected a JSON object"))?;
    let defaults = serde_json::to_value(SweepConfig::default()).expect("defaults serialise");
    let known = defaults.as_object().expect("struct serialises to an object");

    let mut errors = Vec::new();
    if obj.get("base_seed").is_none_or(Json::is_null) {
        errors.push(FieldError {
            field: "base_seed".into(),
            message: "is required".into(),
        });
    }
    let mut merged = known.clone();
    for (k, val) in obj {
        if !known.contains_key(k) {
            errors.push(FieldError {
                field: k.clone(),
                message: "unknown field".into(),
            });
            continue;
        }
        // Check each key alone against the defaults so errors name it.
        let mut probe = known.clone();
        probe.insert(k.clone(), val.clone());
        if let Err(e) = serde_json::from_value::<SweepConfig>(Json::Object(probe)) {
            errors.push(FieldError {
                field: k.clone(),
                message: e.to_string(),
            });
        }
        merged.insert(k.clone(), val.clone());
    }
    if !errors.is_empty() {
        return Err(ApiError::Invalid(errors));
    }
    serde_json::from_value(Json::Object(merged)).map_err(|e| ApiError::field("body", e.to_string()))
}

fn sweep_field_errors(cfg: &SweepConfig) -> Vec<FieldError> {
    let mut errors = Vec::new();
    let mut fail = |field: &str, message: &str| {
        errors.push(FieldError {
            field: field.into(),
            message: message.into(),
        })
    };
    if cfg.epsilons.is_empty() {
        fail("epsilons", "must not be empty");
    } else if cfg.epsilons.iter().any(|e| !(*e > 0.0)) {
        fail("epsilons", "must all be > 0");
    } else if cfg.epsilons.windows(2).any(|w| !(w[0] < w[1])) {
        fail("epsilons", "must be strictly ascending");
    }
    if cfg.repetitions == 0 {
        fail("repetitions", "must be >= 1");
    }
    if cfg.scenarios.is_empty() {
        fail("scenarios", "must not be empty");
    }
    if cfg.mechanisms.is_empty() {
        fail("mechanisms", "must not be empty");
    } else if !cfg.scenarios.is_empty() && cfg.series().is_empty() {
        fail("mechanisms", "no selected mechanism is admissible for any selected scenario");
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        fail("delta", "must be in (0, 1)");
    }
    if cfg.records_per_cell == 0 {
        fail("records_per_cell", "must be >= 1");
    }
    if let Err(e) = cfg.grid.validate() {
        fail("grid", &e.to_string());
    }
    errors
}

/// Runs a sweep. `limit` caps the records of each individual run.
pub fn execute_sweep(cfg: &SweepConfig, limit: Option<usize>) -> Result<SweepTable, ApiError> {
    let errors = sweep_field_errors(cfg);
    if !errors.is_empty() {
        return Err(ApiError::Invalid(errors));
    }
    if let Some(limit) = limit {
        let records = cfg.grid.cell_count().saturating_mul(cfg.records_per_cell);
        if records > limit {
            return Err(ApiError::TooLarge { records, limit });
        }
    }
    Ok(run_sweep(cfg)?)
}

pub fn sweep_bytes(table: &SweepTable) -> Result<Vec<u8>, ApiError> {
    let mut out = Vec::new();
    evaluation::write_json(table, &mut out)?;
    Ok(out)
}
