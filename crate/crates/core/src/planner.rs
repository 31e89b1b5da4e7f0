//! The outer combinatorial layer.
//!
//! A candidate selection is scored by solving its tour exactly and then its
//! allocation, giving the total energy `xi(v)` (motion plus communication).
//! Successive local search walks the selection hypercube from the depot-only
//! start, sampling Hamming-ball neighbours and accepting any candidate that
//! is no worse. An exhaustive enumerator serves as an oracle on small maps.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocation::{solve_allocation, AllocationSolution, Infeasible, Tolerances};
use crate::mobility::{solve_tsp, Selection, TspResult};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Largest map [`exhaustive_search`] will enumerate.
pub const EXHAUSTIVE_VERTEX_CAP: usize = 12;

/// Largest neighbourhood [`Neighborhood`] will materialize.
pub const NEIGHBORHOOD_CAP: usize = 1 << 23;

/// Powers above this are flagged in outcomes (W).
pub const HIGH_POWER_WARNING: f64 = 1e3;

/// Tunables of the local search.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    /// Hamming radius `L` of the neighbourhood.
    pub neighborhood: usize,
    /// Number of sampled candidates; every sample counts.
    pub iterations: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Memoize outcomes by selection.
    pub cache: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            neighborhood: 3,
            iterations: 50,
            seed: 0,
            tolerances: Tolerances::default(),
            cache: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighborhood == 0 {
            return Err(Error::invalid("solver config", "neighbourhood size must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("solver config", "iteration cap must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasibility {
    /// No finite closed tour through the selection.
    NoTour,
    /// The selection exceeds the exact tour solver's cap.
    TooLarge,
    Allocation(Infeasible),
}

/// Score of one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub selection: Selection,
    pub tsp: TspResult,
    /// `None` when infeasible.
    pub solution: Option<AllocationSolution>,
    pub infeasibility: Option<Infeasibility>,
    /// `(alpha1 / a + alpha2) * tour_length` (J).
    pub energy_motion: f64,
    /// `sum Q` (J).
    pub energy_comm: f64,
    /// Total energy; `+inf` when infeasible.
    pub xi: f64,
    /// The allocation's KKT certificate met the configured tolerances.
    pub certified: bool,
}

impl PlanOutcome {
    pub fn is_feasible(&self) -> bool {
        self.infeasibility.is_none()
    }

    /// Some recovered power exceeds [`HIGH_POWER_WARNING`].
    pub fn high_power(&self) -> bool {
        self.solution
            .as_ref()
            .is_some_and(|s| s.allocation.max_power() > HIGH_POWER_WARNING)
    }
}

/// Scores `selection` from scratch: exact tour, then allocation over the
/// time the tour leaves.
pub fn evaluate_xi(scenario: &Scenario, selection: &Selection, tol: &Tolerances) -> PlanOutcome {
    let params = scenario.params();
    let infeasible = |tsp: TspResult, why: Infeasibility, energy_motion: f64| PlanOutcome {
        selection: *selection,
        tsp,
        solution: None,
        infeasibility: Some(why),
        energy_motion,
        energy_comm: f64::INFINITY,
        xi: f64::INFINITY,
        certified: false,
    };

    let tsp = match solve_tsp(selection, scenario.distances(), params) {
        Ok(tsp) => tsp,
        Err(_) => {
            let tsp = TspResult {
                plan: None,
                tour_length: f64::INFINITY,
                upsilon: f64::NEG_INFINITY,
            };
            return infeasible(tsp, Infeasibility::TooLarge, f64::INFINITY);
        }
    };
    if !tsp.is_feasible() {
        return infeasible(tsp, Infeasibility::NoTour, f64::INFINITY);
    }
    let energy_motion = if tsp.tour_length == 0.0 {
        0.0
    } else {
        params.motion_energy_per_metre() * tsp.tour_length
    };
    match solve_allocation(scenario, selection, tsp.upsilon) {
        Ok(solution) => {
            let certified = solution.kkt.satisfies(tol, tsp.upsilon);
            let energy_comm = solution.energy;
            PlanOutcome {
                selection: *selection,
                tsp,
                solution: Some(solution),
                infeasibility: None,
                energy_motion,
                energy_comm,
                xi: energy_motion + energy_comm,
                certified,
            }
        }
        Err(why) => infeasible(tsp, Infeasibility::Allocation(why), energy_motion),
    }
}

/// [`evaluate_xi`] with an optional memo table keyed by selection.
#[derive(Debug)]
pub struct Evaluator<'a> {
    scenario: &'a Scenario,
    tolerances: Tolerances,
    cache: Option<BTreeMap<u64, PlanOutcome>>,
    evaluations: usize,
    hits: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(scenario: &'a Scenario, tolerances: Tolerances, cache: bool) -> Self {
        Evaluator {
            scenario,
            tolerances,
            cache: cache.then(BTreeMap::new),
            evaluations: 0,
            hits: 0,
        }
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn evaluate(&mut self, selection: &Selection) -> PlanOutcome {
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&selection.bits())) {
            self.hits += 1;
            return hit.clone();
        }
        self.evaluations += 1;
        let outcome = evaluate_xi(self.scenario, selection, &self.tolerances);
        if let Some(cache) = self.cache.as_mut() {
            cache.insert(selection.bits(), outcome.clone());
        }
        outcome
    }

    /// Fresh solves performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Calls answered from the memo table.
    pub fn cache_hits(&self) -> usize {
        self.hits
    }
}

/// The Hamming ball of radius `L` around a selection (centre excluded, depot
/// fixed), drawn uniformly without replacement.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    center: Selection,
    remaining: Vec<u64>,
}

impl Neighborhood {
    pub fn new(center: Selection, radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::invalid("neighbourhood", "radius must be at least 1"));
        }
        let free = center.len() - 1;
        let max_flips = radius.min(free);
        let size: usize = (1..=max_flips).map(|d| binomial(free, d)).sum();
        if size > NEIGHBORHOOD_CAP {
            return Err(Error::invalid(
                "neighbourhood",
                format!("{size} members exceed the cap of {NEIGHBORHOOD_CAP}"),
            ));
        }
        let mut remaining = Vec::with_capacity(size);
        for flips in 1..=max_flips {
            // Gosper's hack over the `free` non-depot positions.
            let mut combo: u64 = (1u64 << flips) - 1;
            while combo < 1u64 << free {
                remaining.push(center.flipped(combo << 1).bits());
                let lowest = combo & combo.wrapping_neg();
                let ripple = combo + lowest;
                combo = (((ripple ^ combo) >> 2) / lowest) | ripple;
            }
        }
        Ok(Neighborhood { center, remaining })
    }

    pub fn center(&self) -> &Selection {
        &self.center
    }

    /// Members not yet drawn.
    pub fn remaining(&self) -> usize {
        self.remaining.len()
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining.is_empty()
    }

    /// Draws an undrawn member uniformly; `None` once exhausted.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Selection> {
        if self.remaining.is_empty() {
            return None;
        }
        let i = rng.random_range(0..self.remaining.len());
        let bits = self.remaining.swap_remove(i);
        Some(Selection::from_bits(bits, self.center.len()).expect("neighbours keep the depot"))
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// How the search loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SearchExit {
    /// A full neighbourhood sweep found nothing at least as good: the
    /// incumbent is a local optimum.
    LocalOptimum,
    /// The iteration cap was reached first.
    IterationCap,
}

/// Which evaluated point the returned plan came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BestSource {
    Search,
    NoMove,
    VisitAll,
}

#[derive(Debug, Clone)]
pub struct SlsReport {
    /// Best of the final incumbent and the two baselines.
    pub best: PlanOutcome,
    pub best_source: BestSource,
    /// Incumbent when the loop ended.
    pub incumbent: PlanOutcome,
    /// Incumbent objective after each iteration; always `iterations` long.
    /// After an early local-optimum exit the last value is repeated.
    pub trace: Vec<f64>,
    /// Candidates actually sampled.
    pub iterations_used: usize,
    pub accepted_moves: usize,
    pub exit: SearchExit,
    pub evaluations: usize,
    pub cache_hits: usize,
}

/// Successive local search from the depot-only selection.
///
/// Each iteration samples one not-yet-tried member of the incumbent's
/// neighbourhood and moves there if its objective is no larger. The
/// candidate pool is reset whenever the incumbent changes. The result is
/// compared against the no-move and visit-all baselines and the smallest
/// objective is returned, ties going to the search incumbent.
pub fn sls_optimize(scenario: &Scenario, config: &SolverConfig) -> Result<SlsReport> {
    config.validate()?;
    let mut eval = Evaluator::new(scenario, config.tolerances, config.cache);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = scenario.num_vertices();

    let mut current = eval.evaluate(&Selection::depot_only(m));
    let no_move = current.clone();
    let mut pool = Neighborhood::new(current.selection, config.neighborhood)?;
    let mut trace = Vec::with_capacity(config.iterations);
    let mut accepted_moves = 0;

    while trace.len() < config.iterations {
        let Some(candidate) = pool.draw(&mut rng) else {
            break;
        };
        let outcome = eval.evaluate(&candidate);
        if outcome.xi <= current.xi {
            current = outcome;
            pool = Neighborhood::new(current.selection, config.neighborhood)?;
            accepted_moves += 1;
        }
        trace.push(current.xi);
    }
    let iterations_used = trace.len();
    let exit = if pool.is_exhausted() {
        SearchExit::LocalOptimum
    } else {
        SearchExit::IterationCap
    };
    trace.resize(config.iterations, current.xi);

    let visit_all = eval.evaluate(&Selection::all(m));
    let mut best = current.clone();
    let mut best_source = BestSource::Search;
    for (source, outcome) in [(BestSource::NoMove, no_move), (BestSource::VisitAll, visit_all)] {
        if outcome.xi < best.xi {
            best = outcome;
            best_source = source;
        }
    }

    Ok(SlsReport {
        best,
        best_source,
        incumbent: current,
        trace,
        iterations_used,
        accepted_moves,
        exit,
        evaluations: eval.evaluations(),
        cache_hits: eval.cache_hits(),
    })
}

/// Global optimum over all `2^(M-1)` selections. Ties go to the smaller
/// selection, then to the lexicographically smaller 0/1 vector.
pub fn exhaustive_search(scenario: &Scenario, tol: &Tolerances) -> Result<PlanOutcome> {
    let m = scenario.num_vertices();
    if m > EXHAUSTIVE_VERTEX_CAP {
        return Err(Error::TooLarge {
            what: "exhaustive search",
            cap: EXHAUSTIVE_VERTEX_CAP,
            requested: m,
        });
    }
    let mut best: Option<PlanOutcome> = None;
    for free in 0..1u64 << (m - 1) {
        let selection = Selection::from_bits(free << 1 | 1, m)?;
        let outcome = evaluate_xi(scenario, &selection, tol);
        let better = match &best {
            None => true,
            Some(b) => match outcome.xi.partial_cmp(&b.xi) {
                Some(Ordering::Less) => true,
                Some(Ordering::Equal) => tie_key(&outcome.selection) < tie_key(&b.selection),
                _ => false,
            },
        };
        if better {
            best = Some(outcome);
        }
    }
    Ok(best.expect("at least the depot-only selection is evaluated"))
}

fn tie_key(s: &Selection) -> (usize, Vec<u8>) {
    (s.count(), s.to_flags())
}

/// The vehicle never leaves the depot.
pub fn baseline_no_move(scenario: &Scenario, tol: &Tolerances) -> PlanOutcome {
    evaluate_xi(scenario, &Selection::depot_only(scenario.num_vertices()), tol)
}

/// The vehicle tours every vertex.
pub fn baseline_visit_all(scenario: &Scenario, tol: &Tolerances) -> PlanOutcome {
    evaluate_xi(scenario, &Selection::all(scenario.num_vertices()), tol)
}

/// Selections of every member of the neighbourhood, for tests and tooling.
pub fn neighborhood_members(center: Selection, radius: usize) -> Result<Vec<Selection>> {
    let pool = Neighborhood::new(center, radius)?;
    Ok(pool
        .remaining
        .iter()
        .map(|&b| Selection::from_bits(b, center.len()).expect("valid neighbour"))
        .collect())
}
