//! Command-line front end. Every flag may also come from a `--config` file
//! of `key = value` lines using the flag names; flags win over the file.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand};

use crate::asymptotics::{are_table, std_error};
use crate::divergence::DivergenceParams;
use crate::error::{Error, Result};
use crate::estimation::{fit, fit_grid, FitOptions};
use crate::io::{
    ingest, parse_key_values, parse_list, parse_plan, read_source, render_are, render_fit, render_grid,
    render_lambda_check, render_report, sha256_hex, DataFormat, DatasetInfo, OutputFormat, RunManifest,
};
use crate::models::Model;
use crate::simulation::{lambda_independence_check, run_plan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INADMISSIBLE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_BAD_ARGS: i32 = 5;

pub const DEFAULT_GRID_ALPHAS: [f64; 8] = [0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.8, 1.0];
pub const DEFAULT_GRID_LAMBDAS: [f64; 11] = [-1.0, -0.7, -0.5, -0.3, -0.1, 0.0, 0.5, 1.0, 1.3, 1.5, 2.0];
pub const DEFAULT_ARE_ALPHAS: [f64; 7] = [0.0, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0];

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UndefinedDivergence { .. } | Error::KernelSingularity { .. } => EXIT_INADMISSIBLE,
        Error::NonConvergence { .. }
        | Error::AllReplicatesFailed { .. }
        | Error::Truncation { .. }
        | Error::DegenerateInformation { .. } => EXIT_NONCONVERGENCE,
        Error::Io(_) | Error::Parse { .. } | Error::EmptyDataset => EXIT_IO,
        Error::ParameterOutOfRange { .. } | Error::BelowSupport { .. } | Error::InvalidArgument(_) => EXIT_BAD_ARGS,
    }
}

#[derive(Debug, Parser)]
#[command(name = "sdiv", version, about = "Minimum S-divergence estimation for discrete models")]
pub struct Cli {
    /// File of `key = value` defaults keyed by flag name.
    #[arg(long, global = true)]
    config: Option<String>,
    /// text, csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Worker threads for grids and simulations.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one (alpha, lambda) cell.
    Fit(FitArgs),
    /// Fit a lambda x alpha grid.
    Table(TableArgs),
    /// Asymptotic relative efficiency table.
    Are(AreArgs),
    /// Run a Monte Carlo plan.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset path or builtin:<name>.
    #[arg(long)]
    data: Option<String>,
    /// frequency, raw or auto.
    #[arg(long)]
    data_format: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Decimals in text output.
    #[arg(long)]
    decimals: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
}

#[derive(Debug, Args)]
struct TableArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    grid_alphas: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    grid_lambdas: Option<String>,
}

#[derive(Debug, Args)]
struct AreArgs {
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated parameter values.
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    grid_alphas: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    plan: Option<String>,
    /// Overrides the plan seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run the plan once per lambda on shared datasets.
    #[arg(long, allow_hyphen_values = true)]
    lambdas: Option<String>,
}

struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Settings {
    fn get(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let v = flag.or_else(|| self.file.get(key).cloned());
        if let Some(v) = &v {
            self.used.insert(key.to_string(), v.clone());
        }
        v
    }

    fn require(&mut self, key: &str, flag: Option<String>) -> Result<String> {
        self.get(key, flag)
            .ok_or_else(|| Error::invalid(format!("--{key} is required")))
    }

    fn real(&mut self, key: &str, flag: Option<String>) -> Result<f64> {
        let v = self.require(key, flag)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::invalid(format!("--{key}: invalid number '{v}'")))
    }

    fn list(&mut self, key: &str, flag: Option<String>, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key, flag) {
            Some(v) => parse_list(&v),
            None => Ok(default.to_vec()),
        }
    }
}

struct Context {
    settings: Settings,
    format: OutputFormat,
    pool: rayon::ThreadPool,
}

/// Runs the CLI with explicit argument list and output streams; returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_BAD_ARGS } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let file = match &cli.config {
        Some(path) => parse_key_values(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let mut settings = Settings {
        file,
        used: BTreeMap::new(),
    };
    let format = OutputFormat::from_name(&settings.get("format", cli.format).unwrap_or_else(|| "text".into()))?;
    let jobs = match settings.get("jobs", cli.jobs.map(|j| j.to_string())) {
        Some(j) => j
            .parse::<usize>()
            .map_err(|_| Error::invalid(format!("--jobs: invalid count '{j}'")))?,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let mut ctx = Context { settings, format, pool };
    let text = match cli.command {
        Command::Fit(a) => cmd_fit(&mut ctx, a),
        Command::Table(a) => cmd_table(&mut ctx, a),
        Command::Are(a) => cmd_are(&mut ctx, a),
        Command::Simulate(a) => cmd_simulate(&mut ctx, a),
    };
    match text {
        Ok(text) => {
            out.write_all(text.as_bytes())?;
            Ok(EXIT_OK)
        }
        Err(e @ Error::UndefinedDivergence { .. }) if ctx.format == OutputFormat::Text => {
            out.write_all(b"--\n")?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

struct Loaded {
    table: crate::table::FrequencyTable,
    model: Model,
    info: DatasetInfo,
    decimals: usize,
}

fn load(ctx: &mut Context, a: DataArgs) -> Result<Loaded> {
    let source = ctx.settings.require("data", a.data)?;
    let format = DataFormat::from_name(&ctx.settings.get("data-format", a.data_format).unwrap_or_else(|| "auto".into()))?;
    let model = Model::from_name(&ctx.settings.require("model", a.model)?)?;
    let decimals = match ctx.settings.get("decimals", a.decimals.map(|d| d.to_string())) {
        Some(d) => d
            .parse()
            .map_err(|_| Error::invalid(format!("--decimals: invalid count '{d}'")))?,
        None => match model {
            Model::Poisson => 2,
            Model::Geometric => 4,
        },
    };
    let text = read_source(&source)?;
    let info = DatasetInfo {
        source: source.clone(),
        sha256: sha256_hex(text.as_bytes()),
    };
    Ok(Loaded {
        table: ingest(&source, format)?,
        model,
        info,
        decimals,
    })
}

fn cmd_fit(ctx: &mut Context, a: FitArgs) -> Result<String> {
    let d = load(ctx, a.data)?;
    let alpha = ctx.settings.real("alpha", a.alpha)?;
    let lambda = ctx.settings.real("lambda", a.lambda)?;
    let params = DivergenceParams::new(alpha, lambda)?;
    let family = d.model.family();
    let mut result = fit(&d.table, family, &params, &FitOptions::default())?;
    result.std_error = Some(std_error(&result, &d.table, family, alpha)?);
    let manifest = RunManifest::new("fit", ctx.settings.used.clone(), Some(d.info));
    Ok(render_fit(&result, &manifest, ctx.format, d.decimals))
}

fn cmd_table(ctx: &mut Context, a: TableArgs) -> Result<String> {
    let d = load(ctx, a.data)?;
    let alphas = ctx.settings.list("grid-alphas", a.grid_alphas, &DEFAULT_GRID_ALPHAS)?;
    let lambdas = ctx.settings.list("grid-lambdas", a.grid_lambdas, &DEFAULT_GRID_LAMBDAS)?;
    let grid = ctx
        .pool
        .install(|| fit_grid(&d.table, d.model.family(), &alphas, &lambdas, &FitOptions::default()))?;
    let manifest = RunManifest::new("table", ctx.settings.used.clone(), Some(d.info));
    Ok(render_grid(&grid, &manifest, ctx.format, d.decimals))
}

fn cmd_are(ctx: &mut Context, a: AreArgs) -> Result<String> {
    let model = Model::from_name(&ctx.settings.require("model", a.model)?)?;
    let default_thetas: &[f64] = match model {
        Model::Poisson => &[2.0, 3.0, 5.0, 10.0, 15.0],
        Model::Geometric => &[0.1, 0.2, 0.5, 0.7, 0.9],
    };
    let thetas = ctx.settings.list("theta", a.theta, default_thetas)?;
    let alphas = ctx.settings.list("grid-alphas", a.grid_alphas, &DEFAULT_ARE_ALPHAS)?;
    let table = ctx.pool.install(|| are_table(model.family(), &thetas, &alphas))?;
    let manifest = RunManifest::new("are", ctx.settings.used.clone(), None);
    Ok(render_are(&table, &manifest, ctx.format))
}

fn cmd_simulate(ctx: &mut Context, a: SimulateArgs) -> Result<String> {
    let path = ctx.settings.require("plan", a.plan)?;
    let text = std::fs::read_to_string(&path)?;
    let (mut plan, plan_lambdas) = parse_plan(&text)?;
    if let Some(seed) = ctx.settings.get("seed", a.seed.map(|s| s.to_string())) {
        plan.seed = seed
            .parse()
            .map_err(|_| Error::invalid(format!("--seed: invalid value '{seed}'")))?;
    }
    let lambdas = match ctx.settings.get("lambdas", a.lambdas) {
        Some(v) => Some(parse_list(&v)?),
        None => plan_lambdas,
    };
    let info = DatasetInfo {
        source: path,
        sha256: sha256_hex(text.as_bytes()),
    };
    let manifest = RunManifest::new("simulate", ctx.settings.used.clone(), Some(info));
    match lambdas {
        Some(ls) => {
            let check = ctx.pool.install(|| lambda_independence_check(&plan, &ls))?;
            Ok(render_lambda_check(&check, &manifest, ctx.format))
        }
        None => {
            let report = ctx.pool.install(|| run_plan(&plan))?;
            Ok(render_report(&report, &manifest, ctx.format))
        }
    }
}
