//! Reference oracles for the test suites.
//!
//! Everything here is deliberately slow and generic, and shares no solution
//! code with `ugv-plan-core`: tours are found by permutation enumeration and
//! allocations by water-filling over fixed stop times plus a generic
//! derivative-free search over the times.

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ugv_plan_core::mobility::Selection;
use ugv_plan_core::scenario::{Point, Scenario, PhysicalParams};
use ugv_plan_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative difference, safe at zero.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

/// Shortest closed depot tour through exactly the selected vertices, by
/// trying every ordering of the non-depot stops.
pub fn brute_force_tour(selection: &Selection, d: &Matrix) -> f64 {
    let stops: Vec<usize> = selection.vertices().filter(|&v| v != 0).collect();
    if stops.is_empty() {
        return 0.0;
    }
    stops
        .iter()
        .copied()
        .permutations(stops.len())
        .map(|perm| {
            let mut len = d[(0, perm[0])];
            for w in perm.windows(2) {
                len += d[(w[0], w[1])];
            }
            len + d[(perm[perm.len() - 1], 0)]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random points in a square and their Euclidean distance matrix.
pub fn random_metric(rng: &mut impl Rng, m: usize, side: f64) -> (Vec<Point>, Matrix) {
    let pts: Vec<Point> = (0..m)
        .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect();
    let d = Matrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { pts[i].distance(&pts[j]) });
    (pts, d)
}

/// Random asymmetric distances with a sprinkling of forbidden edges.
pub fn random_directed(rng: &mut impl Rng, m: usize, forbid: f64) -> Matrix {
    Matrix::from_fn(m, m, |i, j| {
        if i == j {
            0.0
        } else if rng.random::<f64>() < forbid {
            f64::INFINITY
        } else {
            1.0 + 9.0 * rng.random::<f64>()
        }
    })
}

/// Smallest total energy for one user when its stop times are fixed:
/// water-filling `p_m = max(0, w - 1 / A_m)` with the level `w` found by
/// bisection so that `sum_m t_m log2(1 + A_m p_m) = demand`.
///
/// Returns `+inf` if no stop with positive time and gain exists.
pub fn water_fill_energy(times: &[f64], gains: &[f64], demand: f64) -> f64 {
    if demand <= 0.0 {
        return 0.0;
    }
    let cells: Vec<(f64, f64)> = times
        .iter()
        .zip(gains)
        .filter(|(&t, &a)| t > 0.0 && a > 0.0)
        .map(|(&t, &a)| (t, a))
        .collect();
    if cells.is_empty() {
        return f64::INFINITY;
    }
    let delivered = |ln_w: f64| -> f64 {
        cells
            .iter()
            .map(|&(t, a)| t * ((a.ln() + ln_w) / std::f64::consts::LN_2).max(0.0))
            .sum()
    };
    // Level low enough to deliver nothing, then grow until enough.
    let mut lo = cells.iter().map(|&(_, a)| -a.ln()).fold(f64::INFINITY, f64::min);
    let mut hi = lo + 1.0;
    while delivered(hi) < demand {
        hi = lo + 2.0 * (hi - lo);
        if hi > 800.0 {
            return f64::INFINITY;
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delivered(mid) < demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = hi.exp();
    cells.iter().map(|&(t, a)| t * (w - 1.0 / a).max(0.0)).sum()
}

/// Total energy of a full time matrix (rows are users).
pub fn energy_for_times(times: &Matrix, gains: &Matrix, demand: &[f64]) -> f64 {
    (0..gains.rows())
        .map(|k| water_fill_energy(times.row(k), gains.row(k), demand[k]))
        .sum()
}

/// Minimum-energy allocation with the time budget as an inequality,
/// `sum t <= budget`, by pairwise coordinate descent over the stop times
/// plus an explicit slack, each pairwise transfer optimized by golden
/// section. Returns `(energy, unused time)`.
pub fn inequality_budget_oracle(gains: &Matrix, demand: &[f64], budget: f64) -> (f64, f64) {
    let (k_users, m_vertices) = (gains.rows(), gains.cols());
    let cells: Vec<(usize, usize)> = (0..k_users)
        .flat_map(|k| (0..m_vertices).map(move |m| (k, m)))
        .filter(|&(k, m)| gains[(k, m)] > 0.0)
        .collect();
    let n = cells.len();
    // Start half-used: the oracle is free to leave time on the table.
    let mut x = vec![0.5 * budget / n as f64; n + 1];
    x[n] = 0.5 * budget;

    let energy = |x: &[f64]| {
        let mut t = Matrix::zeros(k_users, m_vertices);
        for (i, &(k, m)) in cells.iter().enumerate() {
            t[(k, m)] = x[i];
        }
        energy_for_times(&t, gains, demand)
    };

    let mut current = energy(&x);
    for _sweep in 0..400 {
        let before = current;
        for i in 0..=n {
            for j in 0..=n {
                if i == j {
                    continue;
                }
                // Move delta in [0, x[j]] from j to i.
                let (lo, hi) = (0.0, x[j]);
                if hi <= 0.0 {
                    continue;
                }
                let at = |delta: f64, x: &mut Vec<f64>| {
                    let (xi, xj) = (x[i], x[j]);
                    x[i] = xi + delta;
                    x[j] = xj - delta;
                    let e = energy(x);
                    x[i] = xi;
                    x[j] = xj;
                    e
                };
                let delta = golden_min(lo, hi, 80, |d| at(d, &mut x));
                let e = at(delta, &mut x);
                if e < current {
                    x[i] += delta;
                    x[j] -= delta;
                    current = e;
                }
            }
        }
        if before - current <= 1e-13 * current {
            break;
        }
    }
    (current, x[n])
}

/// Golden-section minimizer of a unimodal function on `[lo, hi]`; also
/// compares against both endpoints.
pub fn golden_min(mut lo: f64, mut hi: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let (a0, b0) = (lo, hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    [(mid, f(mid)), (a0, f(a0)), (b0, f(b0))]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(x, _)| x)
        .unwrap()
}

/// Single user, single stop: the energy meeting `demand` in `budget`
/// seconds, by bisection on `Q` of the monotone rate `budget log2(1 + A Q / budget)`.
pub fn single_cell_energy_by_bisection(gain: f64, demand: f64, budget: f64) -> f64 {
    let delivered = |q: f64| budget * (1.0 + gain * q / budget).log2();
    let mut lo = 0.0;
    let mut hi = 1.0;
    while delivered(hi) < demand {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delivered(mid) < demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Random effective-gain matrix with entries spread over several decades.
pub fn random_gains(rng: &mut impl Rng, k: usize, m: usize) -> Matrix {
    Matrix::from_fn(k, m, |_, _| 10f64.powf(-2.0 + 4.0 * rng.random::<f64>()))
}

/// Parameters with `beta = eta = N0 = 1`, so raw gains are the SNR per watt.
pub fn unit_snr_params() -> PhysicalParams {
    PhysicalParams {
        beta: 1.0,
        eta: 1.0,
        noise_w: 1.0,
        ..PhysicalParams::default()
    }
}

/// Scenario with hand-picked distances and gains; positions are dummies.
pub fn scenario_from_parts(distances: Matrix, effective: Matrix, demand: Vec<f64>, params: PhysicalParams) -> Scenario {
    let m = distances.rows();
    let k = effective.rows();
    Scenario::new(
        vec![Point::default(); m],
        vec![Point::default(); k],
        distances,
        effective,
        demand,
        params,
    )
    .expect("valid test scenario")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn water_fill_single_cell_matches_bisection() {
        let e = water_fill_energy(&[50.0], &[1.0], 2.0);
        let b = single_cell_energy_by_bisection(1.0, 2.0, 50.0);
        assert!(rel_diff(e, b) < 1e-10, "{e} vs {b}");
    }

    #[test]
    fn brute_force_small() {
        let d = Matrix::from_rows(&[vec![0.0, 1.0, 10.0], vec![10.0, 0.0, 1.0], vec![1.0, 10.0, 0.0]]).unwrap();
        assert_eq!(brute_force_tour(&Selection::all(3), &d), 3.0);
        assert_eq!(brute_force_tour(&Selection::depot_only(3), &d), 0.0);
    }
}
