//! Single-scenario solves and their output files.

use crate::document::{self, FileError};
use crate::real::{reals, Real};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use ugv_plan_core::allocation::KktReport;
use ugv_plan_core::planner::{
    baseline_no_move, baseline_visit_all, exhaustive_search, sls_optimize, BestSource, Infeasibility, PlanOutcome,
    SearchExit, SlsReport, SolverConfig,
};
use ugv_plan_core::scenario::Scenario;

pub const RESULT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sls,
    NoMove,
    /// Tour through every vertex; stands in for a fixed-path scheme.
    VisitAll,
    Exhaustive,
}

impl Method {
    pub const fn as_str(self) -> &'static str {
        match self {
            Method::Sls => "sls",
            Method::NoMove => "no_move",
            Method::VisitAll => "visit_all",
            Method::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Method::Sls, Method::NoMove, Method::VisitAll, Method::Exhaustive]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// A solved scenario; `search` is present for the local search only.
#[derive(Debug, Clone)]
pub struct Solved {
    pub method: Method,
    pub outcome: PlanOutcome,
    pub search: Option<SlsReport>,
}

pub fn solve(scenario: &Scenario, method: Method, config: &SolverConfig) -> Result<Solved, ugv_plan_core::Error> {
    let tol = &config.tolerances;
    let (outcome, search) = match method {
        Method::Sls => {
            let report = sls_optimize(scenario, config)?;
            (report.best.clone(), Some(report))
        }
        Method::NoMove => (baseline_no_move(scenario, tol), None),
        Method::VisitAll => (baseline_visit_all(scenario, tol), None),
        Method::Exhaustive => (exhaustive_search(scenario, tol)?, None),
    };
    Ok(Solved { method, outcome, search })
}

pub fn infeasibility_label(why: &Infeasibility) -> String {
    match why {
        Infeasibility::NoTour => String::from("no finite tour through the selection"),
        Infeasibility::TooLarge => String::from("selection exceeds the exact tour solver's cap"),
        Infeasibility::Allocation(inner) => inner.to_string(),
    }
}

#[derive(Debug, Serialize)]
pub struct SolverDoc {
    pub neighborhood: usize,
    pub iterations: usize,
    pub seed: u64,
    pub cache: bool,
}

#[derive(Debug, Serialize)]
pub struct TourDoc {
    pub order: Vec<usize>,
    pub length: Real,
    pub upsilon: Real,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Serialize)]
pub struct AllocationDoc {
    pub time: Vec<Vec<f64>>,
    pub energy: Vec<Vec<f64>>,
    pub power: Vec<Vec<f64>>,
    pub kkt: KktReport,
}

#[derive(Debug, Serialize)]
pub struct SearchDoc {
    pub exit: SearchExit,
    pub best_source: BestSource,
    pub iterations_used: usize,
    pub accepted_moves: usize,
    pub evaluations: usize,
    pub cache_hits: usize,
}

/// Result document written by `solve`. Vertex and user indices are
/// zero-based; vertex 0 is the depot.
#[derive(Debug, Serialize)]
pub struct ResultDoc {
    pub schema_version: u32,
    pub method: Method,
    pub scenario_seed: Option<u64>,
    pub solver: SolverDoc,
    pub speed: f64,
    pub noise_w: f64,
    pub noise_dbm: f64,
    pub feasible: bool,
    pub infeasibility: Option<String>,
    pub certified: bool,
    pub high_power: bool,
    pub xi: Real,
    pub energy_motion: Real,
    pub energy_comm: Real,
    pub selection: Vec<u8>,
    pub tour: Option<TourDoc>,
    pub allocation: Option<AllocationDoc>,
    pub trace: Vec<Real>,
    pub search: Option<SearchDoc>,
}

impl ResultDoc {
    pub fn new(scenario: &Scenario, config: &SolverConfig, solved: &Solved) -> Self {
        let o = &solved.outcome;
        let params = scenario.params();
        ResultDoc {
            schema_version: RESULT_SCHEMA,
            method: solved.method,
            scenario_seed: scenario.seed(),
            solver: SolverDoc {
                neighborhood: config.neighborhood,
                iterations: config.iterations,
                seed: config.seed,
                cache: config.cache,
            },
            speed: params.speed,
            noise_w: params.noise_w,
            noise_dbm: params.noise_dbm(),
            feasible: o.is_feasible(),
            infeasibility: o.infeasibility.as_ref().map(infeasibility_label),
            certified: o.certified,
            high_power: o.high_power(),
            xi: Real(o.xi),
            energy_motion: Real(o.energy_motion),
            energy_comm: Real(o.energy_comm),
            selection: o.selection.to_flags(),
            tour: o.tsp.plan.as_ref().map(|plan| TourDoc {
                order: plan.order().to_vec(),
                length: Real(o.tsp.tour_length),
                upsilon: Real(o.tsp.upsilon),
                edges: plan.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            }),
            allocation: o.solution.as_ref().map(|s| AllocationDoc {
                time: s.allocation.time.to_rows(),
                energy: s.allocation.energy.to_rows(),
                power: s.allocation.power.to_rows(),
                kkt: s.kkt.clone(),
            }),
            trace: solved.search.as_ref().map(|r| reals(&r.trace)).unwrap_or_default(),
            search: solved.search.as_ref().map(|r| SearchDoc {
                exit: r.exit,
                best_source: r.best_source,
                iterations_used: r.iterations_used,
                accepted_moves: r.accepted_moves,
                evaluations: r.evaluations,
                cache_hits: r.cache_hits,
            }),
        }
    }
}

pub fn write_result(path: &Path, doc: &ResultDoc) -> Result<(), FileError> {
    document::write(path, doc)
}

/// One-line human summary.
pub fn summary(solved: &Solved) -> String {
    let o = &solved.outcome;
    let visited: Vec<String> = o.selection.vertices().map(|v| v.to_string()).collect();
    let mut line = format!(
        "{}: xi={} J (motion {} J, comm {} J), stops [{}]",
        solved.method,
        o.xi,
        o.energy_motion,
        o.energy_comm,
        visited.join(" ")
    );
    if let Some(why) = &o.infeasibility {
        line.push_str(&format!(", infeasible: {}", infeasibility_label(why)));
    }
    if let Some(r) = &solved.search {
        let exit = match r.exit {
            SearchExit::LocalOptimum => "local optimum",
            SearchExit::IterationCap => "iteration-capped",
        };
        line.push_str(&format!(", {exit} after {} samples", r.iterations_used));
    }
    if o.high_power() {
        line.push_str(", warning: recovered power above 1 kW");
    }
    line
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, FileError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| FileError::Io { path: dir.to_owned(), source })?;
    }
    csv::Writer::from_path(path).map_err(|source| FileError::Csv { path: path.to_owned(), source })
}

pub(crate) fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), FileError> {
    let wrap = |source| FileError::Csv { path: path.to_owned(), source };
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|source| FileError::Io { path: path.to_owned(), source })
}

#[derive(Debug, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub xi: f64,
}

pub fn trace_rows(report: &SlsReport) -> Vec<TraceRow> {
    report.trace.iter().enumerate().map(|(i, &xi)| TraceRow { iteration: i + 1, xi }).collect()
}

pub fn write_trace(path: &Path, report: &SlsReport) -> Result<(), FileError> {
    write_csv(path, trace_rows(report))
}

/// One geometry record. Vertices and users fill `index`, `x`, `y`; tour
/// edges fill `index` (position along the tour), `from`, `to` and both
/// endpoints.
#[derive(Debug, Default, Serialize)]
pub struct GeometryRow {
    pub kind: &'static str,
    pub index: usize,
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub x: f64,
    pub y: f64,
    pub x2: Option<f64>,
    pub y2: Option<f64>,
    pub selected: Option<u8>,
}

pub fn geometry_rows(scenario: &Scenario, outcome: &PlanOutcome) -> Vec<GeometryRow> {
    let mut rows = Vec::new();
    for (i, p) in scenario.vertices().iter().enumerate() {
        rows.push(GeometryRow {
            kind: "vertex",
            index: i,
            x: p.x,
            y: p.y,
            selected: Some(u8::from(outcome.selection.contains(i))),
            ..Default::default()
        });
    }
    for (i, p) in scenario.users().iter().enumerate() {
        rows.push(GeometryRow { kind: "user", index: i, x: p.x, y: p.y, ..Default::default() });
    }
    if let Some(plan) = &outcome.tsp.plan {
        let v = scenario.vertices();
        for (i, (a, b)) in plan.edges().into_iter().enumerate() {
            rows.push(GeometryRow {
                kind: "edge",
                index: i,
                from: Some(a),
                to: Some(b),
                x: v[a].x,
                y: v[a].y,
                x2: Some(v[b].x),
                y2: Some(v[b].y),
                selected: None,
            });
        }
    }
    rows
}

pub fn write_geometry(path: &Path, scenario: &Scenario, outcome: &PlanOutcome) -> Result<(), FileError> {
    write_csv(path, geometry_rows(scenario, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ugv_plan_core::scenario::{dbm_to_watts, generate_scenario, ScenarioConfig};

    fn scenario() -> Scenario {
        generate_scenario(8, &ScenarioConfig { num_vertices: 6, num_users: 3, ..Default::default() })
            .unwrap()
            .with_noise(dbm_to_watts(-60.0))
            .unwrap()
    }

    #[test]
    fn methods_parse_and_print() {
        for m in [Method::Sls, Method::NoMove, Method::VisitAll, Method::Exhaustive] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("tabu".parse::<Method>().is_err());
    }

    #[test]
    fn no_move_geometry_has_no_edges() {
        let s = scenario();
        let solved = solve(&s, Method::NoMove, &SolverConfig::default()).unwrap();
        let rows = geometry_rows(&s, &solved.outcome);
        assert_eq!(rows.iter().filter(|r| r.kind == "edge").count(), 0);
        assert_eq!(rows.len(), 9);
    }

    #[test]
    fn tour_edges_chain_from_the_depot() {
        let s = scenario();
        let solved = solve(&s, Method::Exhaustive, &SolverConfig::default()).unwrap();
        let edges: Vec<_> = geometry_rows(&s, &solved.outcome).into_iter().filter(|r| r.kind == "edge").collect();
        assert!(!edges.is_empty());
        assert_eq!(edges[0].from, Some(0));
        assert_eq!(edges.last().unwrap().to, Some(0));
        for w in edges.windows(2) {
            assert_eq!(w[0].to, w[1].from);
        }
    }

    #[test]
    fn result_document_records_infinite_xi_as_text() {
        let s = scenario();
        let solved = solve(&s, Method::VisitAll, &SolverConfig::default()).unwrap();
        let doc = ResultDoc::new(&s, &SolverConfig::default(), &solved);
        let text = serde_json::to_string(&doc).unwrap();
        if solved.outcome.is_feasible() {
            assert!(!text.contains("\"xi\":\"inf\""));
        } else {
            assert!(text.contains("\"xi\":\"inf\""));
        }
    }
}
