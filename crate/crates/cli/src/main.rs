//! `ratecov`: solve, sweep and validate virtual network leasing scenarios.
//!
//! Exit codes: 0 success, 1 infeasibility handled (fallback or no allocation,
//! failed validation), 2 user error, 3 internal error. Errors are printed as
//! a JSON object on stdout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ratecov::error::{CoverageError, Error, SolverError};
use ratecov::montecarlo::AssociationMode;
use ratecov::workflow::{self, Method, RunConfig};
use ratecov::{QuadratureConfig, Scenario};

#[derive(Parser)]
#[command(
    name = "ratecov",
    version,
    about = "Rate coverage and BS leasing/slicing for virtualised cellular networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario with one allocation method.
    Solve(SolveArgs),
    /// Solve a scenario over a list of UE intensities and methods (CSV).
    Sweep(SweepArgs),
    /// Compare analytic and Monte Carlo coverage of a given allocation.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Association {
    Circular,
    Voronoi,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Monte Carlo trials per SP (0 disables simulation).
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Cap on the characteristic-function integration range.
    #[arg(long)]
    omega_max: Option<f64>,
    /// Relative tolerance of the adaptive integrations.
    #[arg(long)]
    tol: Option<f64>,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_method, default_value = "exact")]
    method: Method,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Override every SP's UE intensity (UEs/km²).
    #[arg(long)]
    intensity: Option<f64>,
    /// Branch-and-bound node budget.
    #[arg(long, default_value_t = 1_000_000)]
    max_nodes: u64,
    /// Coefficient cache file for the exact method.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Record wall time in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated ascending UE intensities (UEs/km²).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    intensities: Vec<f64>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "exact,greedy")]
    methods: Vec<Method>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Allocation JSON, or a report from `solve`.
    #[arg(long)]
    allocation: PathBuf,
    #[arg(long, value_enum, default_value = "circular")]
    association: Association,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

enum Failure {
    User(String, String),
    Internal(String, String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::User(..) => 2,
            Failure::Internal(..) => 3,
        }
    }

    fn json(&self) -> String {
        let (kind, msg) = match self {
            Failure::User(k, m) | Failure::Internal(k, m) => (k, m),
        };
        let v = serde_json::json!({ "error": { "kind": kind, "message": msg, "exit_code": self.code() } });
        format!(
            "{}\n",
            serde_json::to_string_pretty(&v).expect("error serializes")
        )
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Scenario(_) => Failure::User("scenario".into(), msg),
            Error::Geometry(_) => Failure::User("geometry".into(), msg),
            Error::AllocationMismatch(_) => Failure::User("allocation".into(), msg),
            Error::InvalidArgument(_) => Failure::User("argument".into(), msg),
            Error::Io(_) => Failure::User("io".into(), msg),
            Error::Coverage(CoverageError::InvalidInput(_)) => {
                Failure::User("argument".into(), msg)
            }
            Error::Coverage(CoverageError::Geometry(_)) => Failure::User("geometry".into(), msg),
            Error::Solver(SolverError::SizeGuard { .. }) => Failure::User("size".into(), msg),
            Error::Solver(SolverError::BudgetExceeded { .. }) => {
                Failure::Internal("budget".into(), msg)
            }
            Error::Coverage(_) | Error::Milp(_) | Error::Solver(_) => {
                Failure::Internal("numerical".into(), msg)
            }
        }
    }
}

fn quadrature(c: &Common) -> QuadratureConfig {
    let mut q = QuadratureConfig::default();
    if let Some(w) = c.omega_max {
        q.omega_max = w;
    }
    if let Some(t) = c.tol {
        q.rel_tol = t;
    }
    q
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| Error::from(e).into())
}

fn emit(out: &Option<PathBuf>, text: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::User("io".into(), e.to_string());
    match out {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::User("io".into(), format!("{}: {e}", p.display()))),
        None => {
            let mut h = std::io::stdout().lock();
            h.write_all(text).map_err(io)?;
            h.flush().map_err(io)
        }
    }
}

fn run_solve(a: SolveArgs) -> Result<u8, Failure> {
    let sc = load(&a.common.scenario)?;
    let cfg = RunConfig {
        method: a.method,
        trials: a.common.trials,
        seed: a.common.seed,
        quadrature: quadrature(&a.common),
        intensity: a.intensity,
        max_nodes: a.max_nodes,
        coefficient_cache: a.cache,
        timing: a.timing,
    };
    let report = workflow::solve(&sc, &cfg)?;
    let text = match a.format {
        Format::Json => report.to_json().into_bytes(),
        Format::Csv => {
            let row = workflow::SweepRow::from_report(
                a.intensity.unwrap_or(sc.demands[0].ue_intensity),
                &report,
            );
            let mut buf = Vec::new();
            workflow::write_sweep_csv(&sc, &[row], &mut buf)?;
            buf
        }
    };
    emit(&a.common.out, &text)?;
    Ok(report.exit_code() as u8)
}

fn run_sweep(a: SweepArgs) -> Result<u8, Failure> {
    let sc = load(&a.common.scenario)?;
    let cfg = RunConfig {
        trials: a.common.trials,
        seed: a.common.seed,
        quadrature: quadrature(&a.common),
        ..RunConfig::default()
    };
    let rows = workflow::sweep(&sc, &a.intensities, &a.methods, &cfg)?;
    let text = match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            workflow::write_sweep_csv(&sc, &rows, &mut buf)?;
            buf
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
            s.push('\n');
            s.into_bytes()
        }
    };
    emit(&a.common.out, &text)?;
    Ok(0)
}

fn run_validate(a: ValidateArgs) -> Result<u8, Failure> {
    let sc = load(&a.common.scenario)?;
    let text = fs::read_to_string(&a.allocation)
        .map_err(|e| Failure::User("io".into(), format!("{}: {e}", a.allocation.display())))?;
    let alloc = workflow::parse_allocation(&text)?;
    let association = match a.association {
        Association::Circular => AssociationMode::Circular,
        Association::Voronoi => AssociationMode::Voronoi,
    };
    if a.common.trials == 0 {
        return Err(Failure::User(
            "argument".into(),
            "validation needs at least one trial".into(),
        ));
    }
    let report = workflow::validate(
        &sc,
        &alloc,
        association,
        a.common.trials,
        a.common.seed,
        quadrature(&a.common),
    )?;
    emit(&a.common.out, report.to_json().as_bytes())?;
    Ok(if report.pass { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::User(
                "usage".into(),
                e.render().to_string().trim_end().to_string(),
            );
            print!("{}", f.json());
            return ExitCode::from(f.code());
        }
    };
    let result = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Validate(a) => run_validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            print!("{}", f.json());
            ExitCode::from(f.code())
        }
    }
}
