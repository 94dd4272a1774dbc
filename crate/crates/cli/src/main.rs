use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use geodp_cli::api::{self, ApiError, RunRequest};
use geodp_cli::config::{ConfigError, FileConfig};
use geodp_cli::server;
use geodp_core::extended_float::{format_f64, parse_f64};
use geodp_core::{
    emit_report, generate, mechanism_summaries, read_dataset_file, write_dataset_file, BudgetCap, CapBasis,
    GridSpec, MechanismKind, ReportFormat, ScenarioConfig, ScenarioKind, SweepConfig,
};

#[derive(Parser)]
#[command(name = "geodp", version, about = "Locational local differential privacy simulator")]
struct Cli {
    /// key = value config file; flags take precedence over it
    #[arg(long, global = true, env = "GEODP_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as JSON Lines
    Generate(GenerateArgs),
    /// Run one simulation and write the result JSON
    Run(RunArgs),
    /// Run an epsilon sweep and write a CSV or JSON report
    Sweep(SweepArgs),
    /// Serve the HTTP API (and UI assets, if given)
    Serve(ServeArgs),
}

fn positive(s: &str) -> Result<u64, String> {
    match s.parse::<u64>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn extended(s: &str) -> Result<f64, String> {
    parse_f64(s).ok_or_else(|| format!("'{s}' is not a number or \"inf\""))
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_parser = positive)]
    rows: Option<u64>,
    #[arg(long, value_parser = positive)]
    cols: Option<u64>,
    /// Records per cell
    #[arg(long = "n", value_parser = positive)]
    records_per_cell: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Categories for onehot data
    #[arg(long)]
    categories: Option<u32>,
    /// Rank levels for ranking data
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long, default_value = "dataset.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Run an existing dataset instead of generating one
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    #[arg(long)]
    mechanism: Option<MechanismKind>,
    /// A positive number, or "inf" for no privacy
    #[arg(long, value_parser = extended)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    min_cohort: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset seed when generating; defaults to --seed
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    categories: Option<u32>,
    #[arg(long)]
    levels: Option<u32>,
    /// Abort with exit code 4 if the run would spend more than this
    #[arg(long, value_parser = extended)]
    budget_epsilon: Option<f64>,
    #[arg(long, default_value_t = 1.0, requires = "budget_epsilon")]
    budget_delta: f64,
    /// per_user or composed
    #[arg(long, default_value = "per_user", requires = "budget_epsilon")]
    budget_basis: String,
    #[arg(long, default_value = "result.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated, strictly ascending
    #[arg(long, value_delimiter = ',', value_parser = extended)]
    epsilons: Option<Vec<f64>>,
    #[arg(long = "reps", value_parser = positive)]
    repetitions: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<ScenarioKind>>,
    #[arg(long, value_delimiter = ',')]
    mechanisms: Option<Vec<MechanismKind>>,
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    min_cohort: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// csv or json; defaults to the output file's extension
    #[arg(long)]
    format: Option<ReportFormat>,
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<IpAddr>,
    #[arg(long)]
    port: Option<u16>,
    /// Directory of built UI assets
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn parse_key<T: FromStr>(key: &str, v: Option<&String>) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    v.map(|s| s.parse::<T>().map_err(|e| anyhow!(ApiError::field(key, e.to_string()))))
        .transpose()
}

fn size(v: u64) -> usize {
    usize::try_from(v).unwrap_or(usize::MAX)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn generate_cmd(args: GenerateArgs, file: &FileConfig) -> Result<()> {
    let scenario = match args.scenario {
        Some(s) => s,
        None => parse_key("scenario", file.scenario.as_ref())?.unwrap_or(ScenarioKind::Boolean),
    };
    let rows = args.grid.rows.or(file.rows).unwrap_or(api::DEFAULT_ROWS as u64);
    let cols = args.grid.cols.or(file.cols).unwrap_or(api::DEFAULT_COLS as u64);
    let grid = GridSpec::pittsburgh(size(rows), size(cols))?;
    let n = args
        .grid
        .records_per_cell
        .or(file.records_per_cell)
        .unwrap_or(api::DEFAULT_RECORDS_PER_CELL as u64);
    let mut cfg = ScenarioConfig::new(scenario, grid, size(n), args.seed.or(file.seed).unwrap_or(0));
    if let Some(k) = args.categories.or(file.categories) {
        cfg.categories = k;
    }
    if let Some(m) = args.levels.or(file.levels) {
        cfg.levels = m;
    }
    let ds = generate(&cfg)?;
    write_dataset_file(&ds, &args.out)?;
    println!("{} {} records", args.out.display(), ds.records.len());
    Ok(())
}

fn run_cmd(args: RunArgs, file: &FileConfig) -> Result<()> {
    let dataset = args
        .dataset
        .as_deref()
        .map(|p| read_dataset_file(p).with_context(|| format!("cannot load dataset {}", p.display())))
        .transpose()?;
    let scenario = match (args.scenario, &dataset) {
        (Some(s), _) => s,
        (None, Some(ds)) => ds.config.scenario,
        (None, None) => parse_key("scenario", file.scenario.as_ref())?.unwrap_or(ScenarioKind::Boolean),
    };
    let mechanism = match args.mechanism {
        Some(m) => m,
        None => parse_key("mechanism", file.mechanism.as_ref())?.unwrap_or(MechanismKind::RandomizedResponse),
    };
    let file_epsilon = match &file.epsilon {
        Some(e) => Some(
            e.value()
                .ok_or_else(|| ApiError::field("epsilon", "must be a number or \"inf\""))?,
        ),
        None => None,
    };
    let epsilon = args.epsilon.or(file_epsilon).unwrap_or(if mechanism == MechanismKind::None {
        f64::INFINITY
    } else {
        1.0
    });
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let mut req = RunRequest::new(scenario, mechanism, epsilon, seed);
    if let Some(d) = args.delta.or(file.delta) {
        req.delta = d;
    }
    if let Some(v) = args.grid.rows.or(file.rows) {
        req.rows = size(v);
    }
    if let Some(v) = args.grid.cols.or(file.cols) {
        req.cols = size(v);
    }
    if let Some(v) = args.grid.records_per_cell.or(file.records_per_cell) {
        req.records_per_cell = size(v);
    }
    if let Some(v) = args.min_cohort.or(file.min_cohort) {
        req.min_cohort = size(v);
    }
    req.data_seed = args.data_seed.or(file.data_seed).unwrap_or(seed);
    if let Some(k) = args.categories.or(file.categories) {
        req.categories = k;
    }
    if let Some(m) = args.levels.or(file.levels) {
        req.levels = m;
    }
    if let Some(epsilon) = args.budget_epsilon {
        let basis = match args.budget_basis.as_str() {
            "per_user" => CapBasis::PerUser,
            "composed" => CapBasis::Composed,
            other => bail!(ApiError::field("budget_basis", format!("'{other}' is not per_user or composed"))),
        };
        req.budget = Some(BudgetCap {
            epsilon,
            delta: args.budget_delta,
            basis,
        });
    }

    let resp = match &dataset {
        Some(ds) => api::execute_on_dataset(&req, ds)?,
        None => api::execute(&req, None)?,
    };
    write_file(&args.out, &api::response_bytes(&resp))?;
    let mse = resp.mse.map_or_else(|| "none".to_string(), format_f64);
    println!("mse={mse} per_user_eps={}", format_f64(resp.ledger.totals.per_user_epsilon));
    Ok(())
}

fn sweep_cmd(args: SweepArgs, file: &FileConfig) -> Result<()> {
    let mut cfg = SweepConfig::default();
    if let Some(e) = args.epsilons.or_else(|| {
        file.epsilons
            .as_ref()
            .map(|v| v.iter().map(|e| e.value().unwrap_or(f64::NAN)).collect())
    }) {
        cfg.epsilons = e;
    }
    if let Some(r) = args.repetitions.or(file.repetitions) {
        cfg.repetitions = size(r);
    }
    if let Some(s) = args.scenarios {
        cfg.scenarios = s;
    } else if let Some(names) = &file.scenarios {
        cfg.scenarios = names
            .iter()
            .map(|n| parse_key("scenarios", Some(n)).map(Option::unwrap))
            .collect::<Result<_>>()?;
    }
    if let Some(m) = args.mechanisms {
        cfg.mechanisms = m;
    } else if let Some(names) = &file.mechanisms {
        cfg.mechanisms = names
            .iter()
            .map(|n| parse_key("mechanisms", Some(n)).map(Option::unwrap))
            .collect::<Result<_>>()?;
    }
    if let Some(d) = args.delta.or(file.delta) {
        cfg.delta = d;
    }
    let rows = args.grid.rows.or(file.rows).map_or(cfg.grid.rows, size);
    let cols = args.grid.cols.or(file.cols).map_or(cfg.grid.cols, size);
    cfg.grid = GridSpec::pittsburgh(rows, cols)?;
    if let Some(n) = args.grid.records_per_cell.or(file.records_per_cell) {
        cfg.records_per_cell = size(n);
    }
    if let Some(c) = args.min_cohort.or(file.min_cohort) {
        cfg.min_cohort = size(c);
    }
    cfg.base_seed = args.seed.or(file.seed).unwrap_or(0);

    let format = match args.format {
        Some(f) => f,
        None => match parse_key::<ReportFormat>("format", file.format.as_ref())? {
            Some(f) => f,
            None if args.out.extension().is_some_and(|e| e == "json") => ReportFormat::Json,
            None => ReportFormat::Csv,
        },
    };

    let table = api::execute_sweep(&cfg, None)?;
    emit_report(&table, format, &args.out)?;
    println!("{} {} rows", args.out.display(), table.rows.len());
    for (m, points) in mechanism_summaries(&table) {
        if let (Some(lo), Some(hi)) = (points.first(), points.last()) {
            println!(
                "{m} mse@eps={}: {} mse@eps={}: {}",
                format_f64(lo.epsilon),
                format_f64(lo.mean),
                format_f64(hi.epsilon),
                format_f64(hi.mean)
            );
        }
    }
    Ok(())
}

fn serve_cmd(args: ServeArgs, file: &FileConfig) -> Result<()> {
    let host = match args.host {
        Some(h) => h,
        None => parse_key("host", file.host.as_ref())?.unwrap_or(IpAddr::from([127, 0, 0, 1])),
    };
    let port = args.port.or(file.port).unwrap_or(8080);
    let static_dir = args.static_dir.or_else(|| file.static_dir.clone());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(SocketAddr::new(host, port), static_dir))?;
    Ok(())
}

/// 2: invalid input, 3: I/O, 4: budget exceeded.
fn exit_code(err: &anyhow::Error) -> u8 {
    use geodp_core::Error as E;
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return if matches!(e, ConfigError::Io { .. }) { 3 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<ApiError>() {
            return match e {
                ApiError::BudgetExceeded { .. } => 4,
                ApiError::Internal(_) => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) | E::Parse { .. } => 3,
                E::BudgetExceeded { .. } => 4,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = FileConfig::load_optional(cli.config.as_deref())
        .map_err(anyhow::Error::from)
        .and_then(|file| match cli.command {
            Command::Generate(a) => generate_cmd(a, &file),
            Command::Run(a) => run_cmd(a, &file),
            Command::Sweep(a) => sweep_cmd(a, &file),
            Command::Serve(a) => serve_cmd(a, &file),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
