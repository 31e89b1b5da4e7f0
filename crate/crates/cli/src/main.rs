use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use ugv_plan::experiment::{load_spec, run_sweep, write_sweep, ExperimentSpec};
use ugv_plan::report::{self, solve, summary, Method, ResultDoc};
use ugv_plan::scenario_io::{load_scenario, save_scenario};
use ugv_plan::FileError;
use ugv_plan_core::allocation::fit_beta_ook;
use ugv_plan_core::planner::SolverConfig;
use ugv_plan_core::scenario::{dbm_to_watts, generate_scenario, Fading, Scenario, ScenarioConfig};

/// Energy-minimal tours and backscatter schedules for a data-collecting
/// ground vehicle.
#[derive(Parser)]
#[command(name = "ugv-plan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write a result document.
    Solve(SolveArgs),
    /// Monte-Carlo sweep over noise power.
    Sweep(SweepArgs),
    /// Local-search objective per iteration, as CSV.
    Trace(SolveArgs),
    /// Vertex, user and tour geometry of the chosen plan, as CSV.
    PathDump(SolveArgs),
    /// Draw a random scenario.
    GenScenario(GenArgs),
    /// Fit the OOK modulation loss factor.
    FitBeta(FitArgs),
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Local-search RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighbourhood radius.
    #[arg(long = "L", default_value_t = 3)]
    neighborhood: usize,
    /// Iteration cap.
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// Disable memoization of evaluated selections.
    #[arg(long)]
    no_cache: bool,
}

impl SearchArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            neighborhood: self.neighborhood,
            iterations: self.iters,
            seed: self.seed,
            cache: !self.no_cache,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    /// Override the vehicle speed (m/s).
    #[arg(long)]
    speed: Option<f64>,
    /// Enumerate every selection instead of searching (M <= 12).
    #[arg(long, conflicts_with = "depot_only")]
    exhaustive: bool,
    /// Stay at the depot.
    #[arg(long)]
    depot_only: bool,
    /// Visit every vertex.
    #[arg(long, conflicts_with_all = ["depot_only", "exhaustive"])]
    visit_all: bool,
}

impl SolveArgs {
    fn method(&self) -> Method {
        if self.exhaustive {
            Method::Exhaustive
        } else if self.depot_only {
            Method::NoMove
        } else if self.visit_all {
            Method::VisitAll
        } else {
            Method::Sls
        }
    }

    fn scenario(&self) -> Result<Scenario, FileError> {
        let s = load_scenario(&self.scenario)?;
        match self.speed {
            None => Ok(s),
            Some(speed) => s
                .with_params(ugv_plan_core::scenario::PhysicalParams { speed, ..*s.params() })
                .map_err(|source| FileError::Invalid { path: self.scenario.clone(), source }),
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment spec; defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated noise levels (dBm).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    noise_grid: Option<Vec<f64>>,
    #[arg(long = "L")]
    neighborhood: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    no_cache: bool,
    /// Add the exhaustive oracle as a method (M <= 12).
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15)]
    vertices: usize,
    #[arg(long, default_value_t = 10)]
    users: usize,
    /// Side of the square map (m).
    #[arg(long, default_value_t = 20.0)]
    area_side: f64,
    #[arg(long, default_value_t = -70.0, allow_hyphen_values = true)]
    noise_dbm: f64,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Deterministic path-loss channels, no fading.
    #[arg(long)]
    no_fading: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Largest SNR of the fitting grid (linear).
    #[arg(long, default_value_t = 10.0)]
    grid_max: f64,
    #[arg(long, default_value_t = 1000)]
    points: usize,
}

const EXIT_BAD_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_BAD_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Solve(args) => {
            let scenario = args.scenario()?;
            let config = args.search.config();
            let solved = solve(&scenario, args.method(), &config)?;
            if let Some(out) = &args.out {
                report::write_result(out, &ResultDoc::new(&scenario, &config, &solved))?;
            }
            println!("{}", summary(&solved));
            Ok(feasibility_code(solved.outcome.is_feasible()))
        }
        Command::Trace(args) => {
            let scenario = args.scenario()?;
            let config = args.search.config();
            let solved = solve(&scenario, Method::Sls, &config)?;
            let search = solved.search.as_ref().context("local search produced no trace")?;
            match &args.out {
                Some(out) => report::write_trace(out, search)?,
                None => {
                    println!("iteration,xi");
                    for row in report::trace_rows(search) {
                        println!("{},{}", row.iteration, row.xi);
                    }
                }
            }
            Ok(feasibility_code(solved.outcome.is_feasible()))
        }
        Command::PathDump(args) => {
            let scenario = args.scenario()?;
            let solved = solve(&scenario, args.method(), &args.search.config())?;
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("path.csv"));
            report::write_geometry(&out, &scenario, &solved.outcome)?;
            println!("{}", summary(&solved));
            Ok(feasibility_code(solved.outcome.is_feasible()))
        }
        Command::Sweep(args) => {
            let mut spec = match &args.spec {
                Some(path) => load_spec(path)?,
                None => ExperimentSpec::default(),
            };
            if let Some(seed) = args.seed {
                spec.master_seed = seed;
            }
            if let Some(runs) = args.runs {
                spec.runs = runs;
            }
            if let Some(grid) = args.noise_grid {
                spec.noise_grid_dbm = grid;
            }
            if let Some(l) = args.neighborhood {
                spec.solver.neighborhood = l;
            }
            if let Some(iters) = args.iters {
                spec.solver.iterations = iters;
            }
            if let Some(speed) = args.speed {
                spec.scenario.vehicle.speed = speed;
            }
            if args.no_cache {
                spec.solver.cache = false;
            }
            if args.exhaustive && !spec.methods.contains(&Method::Exhaustive) {
                spec.methods.push(Method::Exhaustive);
            }
            let out = run_sweep(&spec)?;
            write_sweep(&args.out, &spec, &out)?;
            for a in &out.aggregates {
                println!(
                    "N0 {:>7} dBm  {:<10}  mean xi {:>14.6} J  feasible {}/{}",
                    a.noise_dbm, a.method, a.mean_xi, a.feasible_runs, a.runs
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenScenario(args) => {
            let mut cfg = ScenarioConfig { num_vertices: args.vertices, num_users: args.users, area_side: args.area_side, ..Default::default() };
            cfg.params.noise_w = dbm_to_watts(args.noise_dbm);
            cfg.params.speed = args.speed;
            if args.no_fading {
                cfg.channel.fading = Fading::None;
            }
            let scenario = generate_scenario(args.seed, &cfg)?;
            save_scenario(&args.out, &scenario)?;
            println!("wrote {} ({} vertices, {} users)", args.out.display(), args.vertices, args.users);
            Ok(ExitCode::SUCCESS)
        }
        Command::FitBeta(args) => {
            let beta = fit_beta_ook(args.grid_max, args.points)?;
            println!("{beta}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn feasibility_code(feasible: bool) -> ExitCode {
    if feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INFEASIBLE)
    }
}
