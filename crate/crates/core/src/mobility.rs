//! Tours over the stopping-point graph: selection vectors, edge matrices,
//! motion time and energy, the exact travelling-salesman solver and a
//! verifier for the degree and Miller-Tucker-Zemlin subtour constraints.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::scenario::PhysicalParams;
use crate::{Error, Matrix, Result};

/// Largest graph a [`Selection`] can address.
pub const MAX_VERTICES: usize = 64;

/// Largest number of selected vertices [`solve_tsp`] accepts. The Held-Karp
/// table holds `2^(S-1) * (S-1)` entries for `S` selected vertices.
pub const TSP_VERTEX_CAP: usize = 24;

/// Big constant of the subtour-elimination inequalities; large enough that
/// the inequality is slack whenever one endpoint is not selected.
pub const MTZ_BIG_J: f64 = 1e6;

/// Binary vertex-selection vector with the depot bit always set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selection {
    bits: u64,
    len: usize,
}

impl Selection {
    /// Only the depot.
    pub fn depot_only(len: usize) -> Self {
        assert!((1..=MAX_VERTICES).contains(&len), "selection length {len} out of range");
        Selection { bits: 1, len }
    }

    /// Every vertex.
    pub fn all(len: usize) -> Self {
        assert!((1..=MAX_VERTICES).contains(&len), "selection length {len} out of range");
        Selection {
            bits: low_mask(len),
            len,
        }
    }

    /// Bit `m` of `bits` selects vertex `m`.
    pub fn from_bits(bits: u64, len: usize) -> Result<Self> {
        if !(1..=MAX_VERTICES).contains(&len) {
            return Err(Error::TooLarge {
                what: "selection",
                cap: MAX_VERTICES,
                requested: len,
            });
        }
        if bits & !low_mask(len) != 0 {
            return Err(Error::invalid("selection", format!("bits beyond vertex {len} are set")));
        }
        if bits & 1 == 0 {
            return Err(Error::invalid("selection", "the depot (vertex 0) must be selected"));
        }
        Ok(Selection { bits, len })
    }

    /// From a 0/1 vector.
    pub fn from_flags(flags: &[u8]) -> Result<Self> {
        let mut bits = 0u64;
        for (m, &f) in flags.iter().enumerate() {
            match f {
                0 => {}
                1 if m < MAX_VERTICES => bits |= 1 << m,
                1 => {
                    return Err(Error::TooLarge {
                        what: "selection",
                        cap: MAX_VERTICES,
                        requested: flags.len(),
                    })
                }
                other => return Err(Error::invalid("selection", format!("entry {m} is {other}, expected 0 or 1"))),
            }
        }
        Self::from_bits(bits, flags.len())
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: usize) -> bool {
        m < self.len && self.bits >> m & 1 == 1
    }

    /// Number of selected vertices, depot included.
    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Selected vertex indices in increasing order.
    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&m| self.contains(m))
    }

    pub fn to_flags(&self) -> Vec<u8> {
        (0..self.len).map(|m| self.contains(m) as u8).collect()
    }

    /// Number of differing entries.
    pub fn hamming(&self, other: &Selection) -> usize {
        (self.bits ^ other.bits).count_ones() as usize
    }

    /// Flips every vertex in `mask`; the depot bit is never touched.
    pub fn flipped(&self, mask: u64) -> Selection {
        Selection {
            bits: (self.bits ^ mask) & low_mask(self.len) | 1,
            len: self.len,
        }
    }
}

impl fmt::Debug for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Selection(")?;
        for m in 0..self.len {
            write!(f, "{}", self.contains(m) as u8)?;
        }
        write!(f, ")")
    }
}

fn low_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// A closed tour through the selected vertices.
///
/// `order` lists the visit sequence starting and ending at the depot, e.g.
/// `[0, 3, 1, 0]`; a depot-only plan has `order == [0]` and no edges.
/// `lambda` holds the subtour-elimination slacks (zero at the depot and at
/// unselected vertices).
#[derive(Debug, Clone, PartialEq)]
pub struct TourPlan {
    selection: Selection,
    edges: Vec<bool>,
    order: Vec<usize>,
    lambda: Option<Vec<f64>>,
}

impl TourPlan {
    /// Builds the plan for a visit order `[0, y2, ..., 0]` (or `[0]`).
    ///
    /// The order must start and end at the depot, visit every selected vertex
    /// exactly once and nothing else. Slacks are set to the visit position.
    pub fn from_order(selection: Selection, order: Vec<usize>) -> Result<Self> {
        let m = selection.len();
        let n = selection.count();
        let expected_len = if n == 1 { 1 } else { n + 1 };
        if order.len() != expected_len || order[0] != 0 || order[order.len() - 1] != 0 {
            return Err(Error::invalid(
                "tour order",
                format!("expected a closed depot tour over {n} vertices, got {order:?}"),
            ));
        }
        let mut seen = vec![false; m];
        seen[0] = true;
        let interior = if order.len() > 2 { &order[1..order.len() - 1] } else { &[][..] };
        for &v in interior {
            if v >= m || !selection.contains(v) || seen[v] {
                return Err(Error::invalid(
                    "tour order",
                    format!("vertex {v} is unselected, out of range or repeated in {order:?}"),
                ));
            }
            seen[v] = true;
        }
        let mut edges = vec![false; m * m];
        for w in order.windows(2) {
            edges[w[0] * m + w[1]] = true;
        }
        let mut lambda = vec![0.0; m];
        for (pos, &v) in order.iter().enumerate().skip(1) {
            if v != 0 {
                lambda[v] = pos as f64;
            }
        }
        Ok(TourPlan {
            selection,
            edges,
            order,
            lambda: Some(lambda),
        })
    }

    /// A plan given by its raw edge matrix, with no visit order and no
    /// slacks. Used to hand arbitrary (possibly invalid) edge sets to
    /// [`check_mtz`].
    pub fn from_edges(selection: Selection, edges: &[Vec<u8>]) -> Result<Self> {
        let m = selection.len();
        if edges.len() != m || edges.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension {
                what: "edge matrix",
                expected: m,
                found: edges.len(),
            });
        }
        let flat = edges.iter().flat_map(|r| r.iter().map(|&w| w != 0)).collect();
        Ok(TourPlan {
            selection,
            edges: flat,
            order: Vec::new(),
            lambda: None,
        })
    }

    /// Replaces the subtour-elimination slacks.
    pub fn with_lambda(mut self, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != self.selection.len() {
            return Err(Error::Dimension {
                what: "slack vector",
                expected: self.selection.len(),
                found: lambda.len(),
            });
        }
        self.lambda = Some(lambda);
        Ok(self)
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn lambda(&self) -> Option<&[f64]> {
        self.lambda.as_deref()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges[from * self.selection.len() + to]
    }

    /// `(from, to)` pairs in tour order when an order is known, otherwise
    /// row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        if !self.order.is_empty() {
            return self.order.windows(2).map(|w| (w[0], w[1])).collect();
        }
        let m = self.selection.len();
        (0..m * m).filter(|&i| self.edges[i]).map(|i| (i / m, i % m)).collect()
    }

    /// The 0/1 edge matrix.
    pub fn edge_matrix(&self) -> Vec<Vec<u8>> {
        let m = self.selection.len();
        (0..m).map(|i| (0..m).map(|j| self.has_edge(i, j) as u8).collect()).collect()
    }

    /// `Tr(D^T W)`: total length of the edges in the plan.
    pub fn length(&self, distances: &Matrix) -> f64 {
        self.edges().iter().map(|&(i, j)| distances[(i, j)]).sum()
    }
}

/// Driving time of a plan, `Tr(D^T W) / speed`. Infinite if the plan uses a
/// forbidden edge.
pub fn motion_time(plan: &TourPlan, distances: &Matrix, speed: f64) -> f64 {
    plan.length(distances) / speed
}

/// Motion energy of a plan, `(alpha1 / speed + alpha2) * Tr(D^T W)`.
pub fn motion_energy(plan: &TourPlan, distances: &Matrix, params: &PhysicalParams) -> f64 {
    let length = plan.length(distances);
    if length == 0.0 {
        0.0
    } else {
        params.motion_energy_per_metre() * length
    }
}

/// Optimal tour for a fixed selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TspResult {
    /// `None` when no finite closed tour exists.
    pub plan: Option<TourPlan>,
    /// Metres; `+inf` when infeasible.
    pub tour_length: f64,
    /// Time left for communication, `T - tour_length / speed`; `-inf` when
    /// no tour exists.
    pub upsilon: f64,
}

impl TspResult {
    pub fn is_feasible(&self) -> bool {
        self.tour_length.is_finite()
    }

    /// Driving time, `tour_length / speed`.
    pub fn motion_time(&self, speed: f64) -> f64 {
        self.tour_length / speed
    }
}

/// Shortest closed tour from the depot through exactly the selected vertices
/// (Held-Karp dynamic programming, `O(S^2 2^S)`).
///
/// Among tours of equal length the lexicographically smallest visit order
/// is returned. Directed (asymmetric) distances are supported; forbidden
/// edges are `+inf`.
pub fn solve_tsp(selection: &Selection, distances: &Matrix, params: &PhysicalParams) -> Result<TspResult> {
    let m = selection.len();
    if distances.rows() != m || distances.cols() != m {
        return Err(Error::Dimension {
            what: "distance matrix",
            expected: m,
            found: distances.rows(),
        });
    }
    let count = selection.count();
    if count > TSP_VERTEX_CAP {
        return Err(Error::TooLarge {
            what: "exact TSP",
            cap: TSP_VERTEX_CAP,
            requested: count,
        });
    }

    let stops: Vec<usize> = selection.vertices().skip(1).collect();
    let (tour_length, order) = held_karp(&stops, distances);
    if !tour_length.is_finite() {
        return Ok(TspResult {
            plan: None,
            tour_length: f64::INFINITY,
            upsilon: f64::NEG_INFINITY,
        });
    }
    let plan = TourPlan::from_order(*selection, order)?;
    Ok(TspResult {
        plan: Some(plan),
        tour_length,
        upsilon: params.horizon - tour_length / params.speed,
    })
}

/// Returns the optimal length and order over `stops` (depot excluded).
///
/// `cost[mask * n + j]` is the shortest path that starts at `stops[j]`,
/// visits every stop in `mask` (which excludes `j`) and ends at the depot.
/// Building costs towards the depot lets the order be rebuilt forwards, so
/// choosing the smallest feasible successor at each step yields the
/// lexicographically smallest optimal tour.
fn held_karp(stops: &[usize], d: &Matrix) -> (f64, Vec<usize>) {
    let n = stops.len();
    match n {
        0 => return (0.0, vec![0]),
        1 => {
            let s = stops[0];
            return (d[(0, s)] + d[(s, 0)], vec![0, s, 0]);
        }
        _ => {}
    }

    let full = (1usize << n) - 1;
    let mut cost = vec![f64::INFINITY; (full + 1) * n];
    for j in 0..n {
        cost[j] = d[(stops[j], 0)];
    }
    for mask in 1..=full {
        for j in 0..n {
            if mask >> j & 1 == 1 {
                continue;
            }
            let from = stops[j];
            let mut best = f64::INFINITY;
            let mut rest = mask;
            while rest != 0 {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let c = d[(from, stops[i])] + cost[(mask ^ (1 << i)) * n + i];
                if c < best {
                    best = c;
                }
            }
            cost[mask * n + j] = best;
        }
    }

    let mut best = f64::INFINITY;
    for j in 0..n {
        let c = d[(0, stops[j])] + cost[(full ^ (1 << j)) * n + j];
        if c < best {
            best = c;
        }
    }
    if !best.is_finite() {
        return (f64::INFINITY, Vec::new());
    }

    let mut order = Vec::with_capacity(n + 2);
    order.push(0);
    let mut current = 0;
    let mut remaining = full;
    let mut target = best;
    while remaining != 0 {
        let (j, next_target) = (0..n)
            .filter(|&j| remaining >> j & 1 == 1)
            .map(|j| (j, cost[(remaining ^ (1 << j)) * n + j]))
            .find(|&(j, tail)| d[(current, stops[j])] + tail == target)
            .expect("reconstruction follows an optimal chain");
        order.push(stops[j]);
        current = stops[j];
        remaining ^= 1 << j;
        target = next_target;
    }
    order.push(0);
    (best, order)
}

/// One violated tour constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum MtzViolation {
    /// An edge touches an unselected vertex or is a self-loop.
    StrayEdge { from: usize, to: usize },
    /// Out- or in-degree of a vertex differs from its selection bit.
    Degree {
        vertex: usize,
        out_degree: usize,
        in_degree: usize,
        expected: usize,
    },
    /// The edges form more than one cycle; each cycle is listed starting at
    /// its smallest vertex.
    Subtours { cycles: Vec<Vec<usize>> },
    /// A slack is outside `[v_m, (n - 1) v_m]`.
    SlackBound { vertex: usize, lambda: f64, lower: f64, upper: f64 },
    /// The pairwise subtour-elimination inequality fails for `(m, j)`.
    Inequality { m: usize, j: usize, lhs: f64, rhs: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MtzReport {
    pub violations: Vec<MtzViolation>,
}

impl MtzReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the degree constraints `sum_j W[m][j] = sum_j W[j][m] = v_m`, the
/// single-cycle structure, and the subtour-elimination inequalities
///
/// ```text
/// lambda_m - lambda_j + (n-1) W[m][j] + (n-3) W[j][m] <= n - 2 + J (2 - v_m - v_j)
/// v_m <= lambda_m <= (n-1) v_m
/// ```
///
/// for all non-depot `m != j`, with `n = sum v` and `J = 1e6`. The plan's
/// own slacks are used when present; otherwise they are built from the visit
/// order of the depot's cycle.
pub fn check_mtz(plan: &TourPlan) -> MtzReport {
    let sel = plan.selection();
    let m_count = sel.len();
    let n = sel.count() as f64;
    let mut violations = Vec::new();

    for i in 0..m_count {
        for j in 0..m_count {
            if plan.has_edge(i, j) && (i == j || !sel.contains(i) || !sel.contains(j)) {
                violations.push(MtzViolation::StrayEdge { from: i, to: j });
            }
        }
    }
    let mut degree_ok = true;
    for v in 0..m_count {
        let out_degree = (0..m_count).filter(|&j| plan.has_edge(v, j)).count();
        let in_degree = (0..m_count).filter(|&j| plan.has_edge(j, v)).count();
        let expected = if sel.count() == 1 { 0 } else { sel.contains(v) as usize };
        if out_degree != expected || in_degree != expected {
            degree_ok = false;
            violations.push(MtzViolation::Degree {
                vertex: v,
                out_degree,
                in_degree,
                expected,
            });
        }
    }

    let mut derived_lambda = None;
    if degree_ok && sel.count() > 1 {
        let cycles = cycles(plan);
        if cycles.len() > 1 {
            violations.push(MtzViolation::Subtours { cycles: cycles.clone() });
        }
        // Position along the depot's cycle.
        let mut lambda = vec![0.0; m_count];
        if let Some(depot_cycle) = cycles.iter().find(|c| c[0] == 0) {
            for (pos, &v) in depot_cycle.iter().enumerate().skip(1) {
                lambda[v] = pos as f64;
            }
        }
        derived_lambda = Some(lambda);
    }

    let lambda = plan.lambda().map(<[f64]>::to_vec).or(derived_lambda);
    if let Some(lambda) = lambda {
        let v = |i: usize| sel.contains(i) as u8 as f64;
        let w = |i: usize, j: usize| plan.has_edge(i, j) as u8 as f64;
        for (i, &l) in lambda.iter().enumerate().take(m_count).skip(1) {
            let lower = v(i);
            let upper = (n - 1.0) * v(i);
            if l < lower || l > upper {
                violations.push(MtzViolation::SlackBound {
                    vertex: i,
                    lambda: l,
                    lower,
                    upper,
                });
            }
        }
        for i in 1..m_count {
            for j in 1..m_count {
                if i == j {
                    continue;
                }
                let lhs = lambda[i] - lambda[j] + (n - 1.0) * w(i, j) + (n - 3.0) * w(j, i);
                let rhs = n - 2.0 + MTZ_BIG_J * (2.0 - v(i) - v(j));
                if lhs > rhs {
                    violations.push(MtzViolation::Inequality { m: i, j, lhs, rhs });
                }
            }
        }
    }

    MtzReport { violations }
}

/// Decomposes a degree-feasible edge set into cycles, each rotated to start
/// at its smallest vertex and listed in order of that vertex.
fn cycles(plan: &TourPlan) -> Vec<Vec<usize>> {
    let m = plan.selection().len();
    let successor = |i: usize| (0..m).find(|&j| plan.has_edge(i, j));
    let mut visited = vec![false; m];
    let mut out = Vec::new();
    for start in plan.selection().vertices() {
        if visited[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut cur = start;
        while !visited[cur] {
            visited[cur] = true;
            cycle.push(cur);
            match successor(cur) {
                Some(next) => cur = next,
                None => break,
            }
        }
        out.push(cycle);
    }
    out
}
