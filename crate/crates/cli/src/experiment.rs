//! Monte-Carlo sweeps over the receiver noise power.
//!
//! Run `r` of a sweep with master seed `s` draws its scenario seed and its
//! solver seed as the first two `u64` outputs of ChaCha8 seeded with `s`
//! on stream `r`. Each run's channels are drawn once and reused at every
//! noise level, and every method sees the same channels.

use crate::document::{self, FileError};
use crate::report::{solve, write_csv, Method};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use std::path::Path;
use std::time::Instant;
use ugv_plan_core::allocation::{EffectiveGains, Tolerances};
use ugv_plan_core::planner::{PlanOutcome, SolverConfig, EXHAUSTIVE_VERTEX_CAP};
use ugv_plan_core::scenario::{dbm_to_watts, generate_scenario, ChannelModel, PhysicalParams, Scenario, ScenarioConfig};

pub const SPEC_SCHEMA: u32 = 1;

/// Vehicle and link constants of a sweep; the noise comes from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSpec {
    pub alpha1: f64,
    pub alpha2: f64,
    pub speed: f64,
    pub eta: f64,
    pub beta: f64,
    pub horizon: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        let p = PhysicalParams::default();
        VehicleSpec { alpha1: p.alpha1, alpha2: p.alpha2, speed: p.speed, eta: p.eta, beta: p.beta, horizon: p.horizon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub num_vertices: usize,
    pub num_users: usize,
    pub area_side: f64,
    pub channel: ChannelModel,
    pub vehicle: VehicleSpec,
    pub demand_min: f64,
    pub demand_max: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let c = ScenarioConfig::default();
        ScenarioSpec {
            num_vertices: c.num_vertices,
            num_users: c.num_users,
            area_side: c.area_side,
            channel: c.channel,
            vehicle: VehicleSpec::default(),
            demand_min: c.demand_min,
            demand_max: c.demand_max,
        }
    }
}

impl ScenarioSpec {
    pub fn config(&self, noise_dbm: f64) -> ScenarioConfig {
        let v = &self.vehicle;
        ScenarioConfig {
            num_vertices: self.num_vertices,
            num_users: self.num_users,
            area_side: self.area_side,
            channel: self.channel,
            params: PhysicalParams {
                alpha1: v.alpha1,
                alpha2: v.alpha2,
                speed: v.speed,
                eta: v.eta,
                beta: v.beta,
                noise_w: dbm_to_watts(noise_dbm),
                horizon: v.horizon,
            },
            demand_min: self.demand_min,
            demand_max: self.demand_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    pub neighborhood: usize,
    pub iterations: usize,
    pub cache: bool,
    pub tolerances: Tolerances,
}

impl Default for SearchSpec {
    fn default() -> Self {
        let c = SolverConfig::default();
        SearchSpec { neighborhood: c.neighborhood, iterations: c.iterations, cache: c.cache, tolerances: c.tolerances }
    }
}

impl SearchSpec {
    pub fn config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            neighborhood: self.neighborhood,
            iterations: self.iterations,
            seed,
            tolerances: self.tolerances,
            cache: self.cache,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub rows: String,
    pub aggregate: String,
    pub timing: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            rows: String::from("rows.csv"),
            aggregate: String::from("aggregate.csv"),
            timing: String::from("timing.csv"),
        }
    }
}

/// A sweep: `runs` random scenarios, each solved by every method at every
/// noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_noise_grid")]
    pub noise_grid_dbm: Vec<f64>,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub solver: SearchSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// File names, relative to the output directory.
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_runs() -> usize {
    20
}

pub fn default_noise_grid() -> Vec<f64> {
    (0..=6).map(|i| -120.0 + 10.0 * f64::from(i)).collect()
}

fn default_methods() -> Vec<Method> {
    vec![Method::Sls, Method::NoMove, Method::VisitAll]
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            schema_version: SPEC_SCHEMA,
            runs: default_runs(),
            master_seed: 0,
            noise_grid_dbm: default_noise_grid(),
            scenario: ScenarioSpec::default(),
            solver: SearchSpec::default(),
            methods: default_methods(),
            output: OutputSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ugv_plan_core::Error> {
        let invalid = |reason: &str| ugv_plan_core::Error::Invalid { what: "experiment spec", reason: reason.into() };
        if self.runs == 0 {
            return Err(invalid("runs must be at least 1"));
        }
        if self.noise_grid_dbm.is_empty() {
            return Err(invalid("noise grid must not be empty"));
        }
        if self.noise_grid_dbm.iter().any(|x| !x.is_finite()) {
            return Err(invalid("noise levels must be finite"));
        }
        if self.methods.is_empty() {
            return Err(invalid("at least one method is required"));
        }
        if self.methods.contains(&Method::Exhaustive) && self.scenario.num_vertices > EXHAUSTIVE_VERTEX_CAP {
            return Err(ugv_plan_core::Error::TooLarge {
                what: "exhaustive search",
                cap: EXHAUSTIVE_VERTEX_CAP,
                requested: self.scenario.num_vertices,
            });
        }
        for &dbm in &self.noise_grid_dbm {
            self.scenario.config(dbm).validate()?;
        }
        self.solver.config(0).validate()
    }
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, FileError> {
    let spec: ExperimentSpec = document::read(path, SPEC_SCHEMA)?;
    spec.validate().map_err(|source| FileError::Invalid { path: path.to_owned(), source })?;
    Ok(spec)
}

/// `(scenario seed, solver seed)` of run `run`.
pub fn run_seeds(master_seed: u64, run: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run as u64);
    (rng.next_u64(), rng.next_u64())
}

fn shortest<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn shortest_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_str(""),
    }
}

/// One method at one noise level of one run. Floats are written in
/// shortest round-trip form; infinities as `inf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub run: usize,
    pub scenario_seed: u64,
    pub solver_seed: u64,
    #[serde(serialize_with = "shortest")]
    pub noise_dbm: f64,
    #[serde(serialize_with = "shortest")]
    pub noise_w: f64,
    pub method: Method,
    #[serde(serialize_with = "shortest")]
    pub xi: f64,
    #[serde(serialize_with = "shortest")]
    pub energy_motion: f64,
    #[serde(serialize_with = "shortest")]
    pub energy_comm: f64,
    pub feasible: bool,
    pub certified: bool,
    /// Vertices in the selection, depot included.
    pub visited: usize,
    /// Candidates sampled by the local search; 0 for the other methods.
    pub iterations: usize,
    /// `local_optimum` or `iteration_cap` for the local search.
    pub exit: String,
    /// Largest demand shortfall of the stored allocation, recomputed from
    /// its times and energies (bit/Hz).
    #[serde(serialize_with = "shortest_opt")]
    pub qos_residual: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub run: usize,
    #[serde(serialize_with = "shortest")]
    pub noise_dbm: f64,
    pub method: Method,
    #[serde(serialize_with = "shortest")]
    pub wall_s: f64,
}

/// Mean over the rows of one `(noise, method)` cell that solved without
/// error, summed in run order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    #[serde(serialize_with = "shortest")]
    pub noise_dbm: f64,
    pub method: Method,
    pub runs: usize,
    pub feasible_runs: usize,
    #[serde(serialize_with = "shortest")]
    pub mean_xi: f64,
    #[serde(serialize_with = "shortest")]
    pub mean_energy_motion: f64,
    #[serde(serialize_with = "shortest")]
    pub mean_energy_comm: f64,
    #[serde(serialize_with = "shortest")]
    pub mean_visited: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub timings: Vec<TimingRow>,
}

fn qos_residual(scenario: &Scenario, outcome: &PlanOutcome) -> Option<f64> {
    let sol = outcome.solution.as_ref()?;
    let delivered = sol.allocation.delivered(&EffectiveGains::new(scenario, &outcome.selection));
    Some(delivered.iter().zip(scenario.demand()).map(|(d, g)| (g - d).max(0.0)).fold(0.0, f64::max))
}

fn run_one(spec: &ExperimentSpec, run: usize) -> (Vec<ResultRow>, Vec<TimingRow>) {
    let (scenario_seed, solver_seed) = run_seeds(spec.master_seed, run);
    let config = spec.solver.config(solver_seed);
    let base = generate_scenario(scenario_seed, &spec.scenario.config(spec.noise_grid_dbm[0]));
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &noise_dbm in &spec.noise_grid_dbm {
        let noise_w = dbm_to_watts(noise_dbm);
        let scenario = base.as_ref().map_err(Clone::clone).and_then(|s| s.with_noise(noise_w));
        for &method in &spec.methods {
            let mut row = ResultRow {
                run,
                scenario_seed,
                solver_seed,
                noise_dbm,
                noise_w,
                method,
                xi: f64::NAN,
                energy_motion: f64::NAN,
                energy_comm: f64::NAN,
                feasible: false,
                certified: false,
                visited: 0,
                iterations: 0,
                exit: String::new(),
                qos_residual: None,
                error: String::new(),
            };
            let start = Instant::now();
            let solved = scenario.as_ref().map_err(Clone::clone).and_then(|s| solve(s, method, &config));
            timings.push(TimingRow { run, noise_dbm, method, wall_s: start.elapsed().as_secs_f64() });
            match (&scenario, solved) {
                (Ok(s), Ok(solved)) => {
                    let o = &solved.outcome;
                    row.xi = o.xi;
                    row.energy_motion = o.energy_motion;
                    row.energy_comm = o.energy_comm;
                    row.feasible = o.is_feasible();
                    row.certified = o.certified;
                    row.visited = o.selection.count();
                    row.qos_residual = qos_residual(s, o);
                    if let Some(r) = &solved.search {
                        row.iterations = r.iterations_used;
                        row.exit = serde_json::to_value(r.exit)
                            .ok()
                            .and_then(|v| v.as_str().map(String::from))
                            .unwrap_or_default();
                    }
                }
                (_, Err(e)) => row.error = e.to_string(),
                (Err(e), _) => row.error = e.to_string(),
            }
            rows.push(row);
        }
    }
    (rows, timings)
}

pub fn aggregate(spec: &ExperimentSpec, rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &noise_dbm in &spec.noise_grid_dbm {
        for &method in &spec.methods {
            let cell: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.noise_dbm == noise_dbm && r.method == method && r.error.is_empty())
                .collect();
            let n = cell.len() as f64;
            let mean = |f: fn(&ResultRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n;
            out.push(AggregateRow {
                noise_dbm,
                method,
                runs: cell.len(),
                feasible_runs: cell.iter().filter(|r| r.feasible).count(),
                mean_xi: mean(|r| r.xi),
                mean_energy_motion: mean(|r| r.energy_motion),
                mean_energy_comm: mean(|r| r.energy_comm),
                mean_visited: mean(|r| r.visited as f64),
            });
        }
    }
    out
}

/// Runs the sweep. Runs execute in parallel; rows come back in run order.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutput, ugv_plan_core::Error> {
    spec.validate()?;
    let per_run: Vec<(Vec<ResultRow>, Vec<TimingRow>)> =
        (0..spec.runs).into_par_iter().map(|run| run_one(spec, run)).collect();
    let mut out = SweepOutput::default();
    for (rows, timings) in per_run {
        out.rows.extend(rows);
        out.timings.extend(timings);
    }
    out.aggregates = aggregate(spec, &out.rows);
    Ok(out)
}

/// Writes the rows, aggregate and timing CSVs plus the resolved spec
/// (`spec.json`) into `dir`.
pub fn write_sweep(dir: &Path, spec: &ExperimentSpec, out: &SweepOutput) -> Result<(), FileError> {
    document::write(&dir.join("spec.json"), spec)?;
    write_csv(&dir.join(&spec.output.rows), &out.rows)?;
    write_csv(&dir.join(&spec.output.aggregate), &out.aggregates)?;
    write_csv(&dir.join(&spec.output.timing), &out.timings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn tiny() -> ExperimentSpec {
        ExperimentSpec {
            runs: 3,
            noise_grid_dbm: vec![-100.0, -60.0],
            scenario: ScenarioSpec { num_vertices: 5, num_users: 2, ..Default::default() },
            solver: SearchSpec { iterations: 20, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn run_seeds_are_distinct_and_stable() {
        let a: Vec<_> = (0..50).map(|r| run_seeds(9, r)).collect();
        let mut all: Vec<u64> = a.iter().flat_map(|&(x, y)| [x, y]).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100);
        assert_eq!(run_seeds(9, 7), a[7]);
        assert_ne!(run_seeds(10, 7), a[7]);
    }

    #[test]
    fn minimal_spec_takes_defaults() {
        let spec: ExperimentSpec = document::parse(r#"{"schema_version": 1}"#, Path::new("x.json"), SPEC_SCHEMA).unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        assert_eq!(spec.noise_grid_dbm, vec![-120.0, -110.0, -100.0, -90.0, -80.0, -70.0, -60.0]);
    }

    #[test]
    fn bad_specs_are_refused() {
        assert!(ExperimentSpec { runs: 0, ..tiny() }.validate().is_err());
        assert!(ExperimentSpec { noise_grid_dbm: vec![], ..tiny() }.validate().is_err());
        let mut big = ExperimentSpec::default();
        big.methods.push(Method::Exhaustive);
        assert!(big.validate().is_err());
        let err = document::parse::<ExperimentSpec>(r#"{"schema_version": 1, "runz": 3}"#, Path::new("x.json"), 1);
        assert!(err.is_err());
    }

    #[test]
    fn sweep_shape_and_order() {
        let spec = tiny();
        let out = run_sweep(&spec).unwrap();
        assert_eq!(out.rows.len(), 3 * 2 * 3);
        assert_eq!(out.aggregates.len(), 2 * 3);
        assert_eq!(out.timings.len(), out.rows.len());
        let runs: Vec<usize> = out.rows.iter().map(|r| r.run).collect();
        assert!(runs.windows(2).all(|w| w[0] <= w[1]));
        for r in &out.rows {
            assert!(r.error.is_empty());
            if r.method == Method::NoMove {
                assert_eq!(r.energy_motion, 0.0);
            }
        }
    }

    #[test]
    fn parallel_and_serial_agree() {
        let spec = tiny();
        let par = run_sweep(&spec).unwrap();
        let serial: Vec<ResultRow> = (0..spec.runs).flat_map(|r| run_one(&spec, r).0).collect();
        assert_eq!(par.rows, serial);
    }
}
