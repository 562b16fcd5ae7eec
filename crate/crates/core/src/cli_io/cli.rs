use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::epsilon_expansion::exact_mode_trajectories;
use crate::error::{Error, Result};
use crate::error_metrics::Measure;
use crate::pdae_core::{solve_eps_system, ForcingSpec, State, TimeGrid};
use crate::pipe_model::{build_pipe_system, initial_data, InitialDataPreset};
use crate::sweep_rates::{
    estimate_rates, figure_preset, run_sweep, GridKind, Integrator, SweepConfig,
};

use super::{
    read_config, read_errors_csv, write_errors_csv, write_rate_plot_svg, write_rates_csv,
    write_trajectory_csv,
};

/// Keys accepted in a configuration file; identical to the long flag names.
pub const CONFIG_KEYS: &[&str] = &[
    "out-dir", "threads", "seed", "exact", "midpoint", "id", "n", "eps", "preset", "jmax",
    "measures", "t-end", "n-steps", "grid", "input", "output",
];

#[derive(Debug, Parser)]
#[command(
    name = "pdae-eps",
    version,
    about = "Singularly perturbed PDAE solver and ε-rate sweeps"
)]
struct Cli {
    /// Directory for all output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for ε sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reserved; all computations are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the closed-form mode solution.
    #[arg(long, global = true, conflicts_with = "midpoint")]
    exact: bool,
    /// Use the implicit midpoint integrator.
    #[arg(long, global = true)]
    midpoint: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one (n, ε) problem and write its trajectory.
    Run(RunArgs),
    /// Sweep ε and write the error table.
    Sweep(SweepArgs),
    /// Estimate rates from an error table.
    Rates(RatesArgs),
    /// Reproduce one experiment: errors, rates and a plot.
    Figure(FigureArgs),
}

#[derive(Debug, Args, Default)]
struct SolveArgs {
    /// Final time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Number of time steps.
    #[arg(long)]
    n_steps: Option<usize>,
    /// Time grid: uniform or graded.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Number of sine modes.
    #[arg(long)]
    n: Option<usize>,
    /// Perturbation parameter ε.
    #[arg(long)]
    eps: Option<f64>,
    /// Initial data: data42, data43, data44 or data45.
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    solve: SolveArgs,
    /// Output file name inside the output directory.
    #[arg(long)]
    output: Option<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated list of mode counts.
    #[arg(long)]
    n: Option<String>,
    /// Initial data: data42, data43, data44 or data45.
    #[arg(long)]
    preset: Option<String>,
    /// Largest ε index; ε_j = 2^(-3-j/2) for j = 1..=jmax.
    #[arg(long)]
    jmax: Option<usize>,
    /// Comma-separated measure ids.
    #[arg(long)]
    measures: Option<String>,
    #[command(flatten)]
    solve: SolveArgs,
    /// Output file name inside the output directory.
    #[arg(long)]
    output: Option<String>,
}

#[derive(Debug, Args)]
struct RatesArgs {
    /// Error table to read.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file name inside the output directory.
    #[arg(long)]
    output: Option<String>,
}

#[derive(Debug, Args)]
struct FigureArgs {
    /// Experiment id (2, 3, 4 or 5).
    #[arg(long)]
    id: Option<u32>,
    /// Comma-separated list of mode counts.
    #[arg(long)]
    n: Option<String>,
    /// Largest ε index; ε_j = 2^(-3-j/2) for j = 1..=jmax.
    #[arg(long)]
    jmax: Option<usize>,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Globals {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub integrator: Integrator,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Run {
        n: usize,
        eps: f64,
        preset: InitialDataPreset,
        t_end: f64,
        n_steps: usize,
        grid: GridKind,
        output: String,
    },
    Sweep {
        config: SweepConfig,
        output: String,
    },
    Rates {
        input: PathBuf,
        output: String,
    },
    Figure {
        id: u32,
        config: SweepConfig,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliCommand {
    pub globals: Globals,
    pub action: Action,
}

/// Flag values take precedence over configuration-file values.
struct Resolver {
    file: BTreeMap<String, String>,
}

impl Resolver {
    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Usage(format!("invalid value {v:?} for key `{key}`")))
            })
            .transpose()
    }

    fn require<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.get(flag, key)?.ok_or_else(|| {
            Error::Usage(format!(
                "missing required `--{key}` (or `{key}` in the config file); valid keys: {}",
                CONFIG_KEYS.join(", ")
            ))
        })
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.file.get(key).map(String::as_str) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(Error::Usage(format!(
                "key `{key}` expects true or false, got {v:?}"
            ))),
        }
    }
}

fn usage<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Usage(_) | Error::Io { .. } | Error::Parse { .. } => e,
        other => Error::Usage(other.to_string()),
    })
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Usage(format!("invalid {what} {x:?}")))
        })
        .collect()
}

fn parse_measures(s: &str) -> Result<Vec<Measure>> {
    usage(s.split(',').map(|x| x.parse::<Measure>()).collect())
}

fn apply_solve(cfg: &mut SweepConfig, r: &Resolver, solve: SolveArgs) -> Result<()> {
    if let Some(t) = r.get(solve.t_end, "t-end")? {
        cfg.t_end = t;
    }
    if let Some(s) = r.get(solve.n_steps, "n-steps")? {
        cfg.n_steps = s;
    }
    if let Some(g) = r.get(solve.grid, "grid")? {
        cfg.grid = usage(g.parse())?;
    }
    Ok(())
}

/// Parses arguments (including the program name) into a validated command.
pub fn parse_cli<I, S>(argv: I) -> Result<CliCommand>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Usage(e.to_string()))?;
    let file = match &cli.config {
        Some(path) => usage(read_config(path, CONFIG_KEYS))?,
        None => BTreeMap::new(),
    };
    let r = Resolver { file };

    let integrator = if cli.exact {
        Integrator::ExactMode
    } else if cli.midpoint {
        Integrator::ImplicitMidpoint
    } else {
        match (r.flag(false, "exact")?, r.flag(false, "midpoint")?) {
            (true, true) => {
                return Err(Error::Usage(
                    "exact and midpoint are mutually exclusive".into(),
                ))
            }
            (_, true) => Integrator::ImplicitMidpoint,
            _ => Integrator::ExactMode,
        }
    };
    let globals = Globals {
        out_dir: r
            .get(cli.out_dir, "out-dir")?
            .unwrap_or_else(|| PathBuf::from(".")),
        threads: r.get(cli.threads, "threads")?,
        seed: r.get(cli.seed, "seed")?,
        integrator,
    };
    if globals.threads == Some(0) {
        return Err(Error::Usage("--threads must be positive".into()));
    }

    let action = match cli.command {
        Command::Run(a) => {
            let preset: String = r.require(a.preset, "preset")?;
            let mut cfg = SweepConfig::default();
            apply_solve(&mut cfg, &r, a.solve)?;
            let n: usize = r.require(a.n, "n")?;
            let eps: f64 = r.require(a.eps, "eps")?;
            if n == 0 || !(eps > 0.0) {
                return Err(Error::Usage("run needs n >= 1 and eps > 0".into()));
            }
            Action::Run {
                n,
                eps,
                preset: usage(preset.parse())?,
                t_end: cfg.t_end,
                n_steps: cfg.n_steps,
                grid: cfg.grid,
                output: r
                    .get(a.output, "output")?
                    .unwrap_or_else(|| "trajectory.csv".into()),
            }
        }
        Command::Sweep(a) => {
            let mut config = SweepConfig {
                integrator,
                ..SweepConfig::default()
            };
            let n: String = r.require(a.n, "n")?;
            config.n_list = parse_list(&n, "n")?;
            let preset: String = r.require(a.preset, "preset")?;
            config.preset = usage(preset.parse())?;
            if let Some(j) = r.get(a.jmax, "jmax")? {
                config.j_max = j;
            }
            config.measures = match r.get(a.measures, "measures")? {
                Some(m) => parse_measures(&m)?,
                None => default_measures(config.preset),
            };
            apply_solve(&mut config, &r, a.solve)?;
            usage(config.validate())?;
            Action::Sweep {
                config,
                output: r
                    .get(a.output, "output")?
                    .unwrap_or_else(|| "errors.csv".into()),
            }
        }
        Command::Rates(a) => Action::Rates {
            input: r.require(a.input, "input")?,
            output: r
                .get(a.output, "output")?
                .unwrap_or_else(|| "rates.csv".into()),
        },
        Command::Figure(a) => {
            let id: u32 = r.require(a.id, "id")?;
            let mut config = usage(figure_preset(id))?;
            config.integrator = integrator;
            if let Some(n) = r.get(a.n, "n")? {
                config.n_list = parse_list(&n, "n")?;
            }
            if let Some(j) = r.get(a.jmax, "jmax")? {
                config.j_max = j;
            }
            apply_solve(&mut config, &r, a.solve)?;
            usage(config.validate())?;
            Action::Figure { id, config }
        }
    };
    Ok(CliCommand { globals, action })
}

/// Measures of the experiment that uses the same initial data.
fn default_measures(preset: InitialDataPreset) -> Vec<Measure> {
    let id = match preset {
        InitialDataPreset::Data42 => 2,
        InitialDataPreset::Data43 => 3,
        InitialDataPreset::Data44 => 4,
        InitialDataPreset::Data45 => 5,
    };
    figure_preset(id).map(|c| c.measures).unwrap_or_default()
}

/// Runs a parsed command and returns the files it wrote.
pub fn execute(cmd: &CliCommand) -> Result<Vec<PathBuf>> {
    let work = || execute_inner(cmd);
    match cmd.globals.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work),
        None => work(),
    }
}

fn execute_inner(cmd: &CliCommand) -> Result<Vec<PathBuf>> {
    let out = |name: &str| cmd.globals.out_dir.join(name);
    match &cmd.action {
        Action::Run {
            n,
            eps,
            preset,
            t_end,
            n_steps,
            grid,
            output,
        } => {
            let sys = build_pipe_system(*n)?;
            let (p, m) = initial_data(*preset, *n)?;
            let tg = match grid {
                GridKind::Uniform => TimeGrid::uniform(*t_end, *n_steps)?,
                GridKind::LayerGraded => TimeGrid::layer_graded(*t_end, *eps, *n_steps)?,
            };
            let traj = match cmd.globals.integrator {
                Integrator::ExactMode => exact_mode_trajectories(&sys, *eps, &p, &m, &tg)?,
                Integrator::ImplicitMidpoint => {
                    let init = State::initial(p, m, sys.dim_q());
                    solve_eps_system(&sys, &init, *eps, &tg, &ForcingSpec::Zero)?
                }
            };
            let path = out(output);
            write_trajectory_csv(&traj, &path)?;
            Ok(vec![path])
        }
        Action::Sweep { config, output } => {
            let table = run_sweep(config)?;
            let path = out(output);
            write_errors_csv(&table, &path)?;
            Ok(vec![path])
        }
        Action::Rates { input, output } => {
            let table = read_errors_csv(input)?;
            let rates = estimate_rates(&table)?;
            let path = out(output);
            write_rates_csv(&rates, &path)?;
            Ok(vec![path])
        }
        Action::Figure { id, config } => {
            let table = run_sweep(config)?;
            let rates = estimate_rates(&table)?;
            let paths = [
                out(&format!("fig{id}_errors.csv")),
                out(&format!("fig{id}_rates.csv")),
                out(&format!("fig{id}_rates.svg")),
            ];
            write_errors_csv(&table, &paths[0])?;
            write_rates_csv(&rates, &paths[1])?;
            write_rate_plot_svg(&rates, &paths[2])?;
            Ok(paths.to_vec())
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<S> = argv.into_iter().collect();
    if let Err(e) = Cli::try_parse_from(argv.clone()) {
        use clap::error::ErrorKind;
        let code = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
            _ => 2,
        };
        let _ = e.print();
        return code;
    }
    let cmd = match parse_cli(argv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                Error::Io { .. } => 1,
                _ => 2,
            };
        }
    };
    match execute(&cmd) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
