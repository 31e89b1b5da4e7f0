//! The continuous inner problem: for a fixed selection and a fixed amount of
//! communication time, split the time between users and stops and choose
//! the radiated energy so every user's data demand is met at minimum total
//! energy.
//!
//! With `Q = t * p` the rate constraint of user `k` becomes
//! `sum_m t log2(1 + A Q / t) >= gamma_k`, a sum of perspective functions
//! that is jointly concave in `(t, Q)`, so the allocation is a convex
//! program. Its KKT conditions give water-filling powers
//! `p = max(0, mu_k / ln 2 - 1 / A)` and a common price `nu` for time; for a
//! single user the marginal value of time is increasing in the gain, so
//! each user is served only from its best selected stop. What remains is a
//! one-dimensional search on `nu`, done here by bisection in log space.

use alloc::vec;
use alloc::vec::Vec;

use crate::mobility::Selection;
use crate::num::{self, LN_2};
use crate::scenario::Scenario;
use crate::{Error, Matrix, Result};

/// Achievable rate `log2(1 + A p)` in bit/s/Hz.
pub fn rate(gain: f64, power: f64) -> f64 {
    num::log2(1.0 + gain * power)
}

/// Perspective of the rate, `t log2(1 + A Q / t)`, extended by `0` at `t = 0`.
pub fn phi(t: f64, q: f64, gain: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        t * num::ln_1p(gain * q / t) / LN_2
    }
}

/// Partial derivative of [`phi`] in `t`:
/// `log2(1 + A Q / t) - A Q / ((t + A Q) ln 2)`.
pub fn phi_grad_t(t: f64, q: f64, gain: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Domain("the time derivative of phi needs t > 0"));
    }
    let aq = gain * q;
    Ok(num::ln_1p(aq / t) / LN_2 - aq / ((t + aq) * LN_2))
}

/// Per-(user, vertex) SNR per watt, zeroed at unselected vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGains(pub Matrix);

impl EffectiveGains {
    pub fn new(scenario: &Scenario, selection: &Selection) -> Self {
        let (k, m) = (scenario.num_users(), scenario.num_vertices());
        EffectiveGains(Matrix::from_fn(k, m, |u, v| {
            if selection.contains(v) {
                scenario.snr_per_watt(u, v)
            } else {
                0.0
            }
        }))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Stop times, energies and recovered powers, all `K x M`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Allocation {
    pub time: Matrix,
    pub energy: Matrix,
    pub power: Matrix,
}

impl Allocation {
    pub fn total_time(&self) -> f64 {
        self.time.sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.sum()
    }

    pub fn max_power(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    /// Data delivered to each user, `sum_m phi(t, Q; A)`.
    pub fn delivered(&self, gains: &EffectiveGains) -> Vec<f64> {
        let a = gains.matrix();
        (0..a.rows())
            .map(|k| (0..a.cols()).map(|m| phi(self.time[(k, m)], self.energy[(k, m)], a[(k, m)])).sum())
            .collect()
    }
}

/// Acceptance thresholds for the allocation certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tolerances {
    /// Largest admissible demand shortfall (bit/Hz).
    pub qos: f64,
    /// Largest admissible `|sum t - budget|` relative to the budget.
    pub time_rel: f64,
    /// Largest admissible relative KKT stationarity violation.
    pub stationarity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            qos: 1e-6,
            time_rel: 1e-8,
            stationarity: 1e-5,
        }
    }
}

/// KKT certificate of an allocation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KktReport {
    /// Largest demand shortfall (bit/Hz).
    pub primal_residual: f64,
    /// `|sum t - budget|` (s).
    pub time_residual: f64,
    /// Largest relative stationarity or dual-feasibility violation.
    pub stationarity_residual: f64,
    /// Per-user demand multipliers.
    pub mu: Vec<f64>,
    /// Price of time.
    pub nu: f64,
}

impl KktReport {
    pub fn satisfies(&self, tol: &Tolerances, budget: f64) -> bool {
        self.primal_residual <= tol.qos
            && self.time_residual <= tol.time_rel * budget
            && self.stationarity_residual <= tol.stationarity
            && self.mu.iter().all(|&m| m >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AllocationSolution {
    pub allocation: Allocation,
    pub kkt: KktReport,
    /// Total communication energy `sum Q` (J).
    pub energy: f64,
}

/// Why no allocation exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Infeasible {
    #[error("no time left for communication")]
    NoTime,
    #[error("user {0} has zero gain at every selected stop")]
    UnreachableUser(usize),
    #[error("required energy overflows f64")]
    EnergyOverflow,
}

/// Solves the allocation for `selection` with `budget` seconds of
/// communication time.
pub fn solve_allocation(
    scenario: &Scenario,
    selection: &Selection,
    budget: f64,
) -> core::result::Result<AllocationSolution, Infeasible> {
    solve_allocation_for_gains(&EffectiveGains::new(scenario, selection), scenario.demand(), budget)
}

/// Same as [`solve_allocation`] on raw gains. Zero demands are allowed here.
///
/// # Panics
///
/// If `demand.len()` differs from the number of gain rows.
pub fn solve_allocation_for_gains(
    gains: &EffectiveGains,
    demand: &[f64],
    budget: f64,
) -> core::result::Result<AllocationSolution, Infeasible> {
    let a = gains.matrix();
    let (k_users, m_vertices) = (a.rows(), a.cols());
    assert_eq!(demand.len(), k_users, "one demand per user");
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Infeasible::NoTime);
    }

    // Best stop per user; ties go to the lowest index.
    let mut best = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let (mut arg, mut gain) = (0, 0.0);
        for m in 0..m_vertices {
            if a[(k, m)] > gain {
                arg = m;
                gain = a[(k, m)];
            }
        }
        if demand[k] > 0.0 && gain <= 0.0 {
            return Err(Infeasible::UnreachableUser(k));
        }
        best.push((arg, gain));
    }

    let active: Vec<usize> = (0..k_users).filter(|&k| demand[k] > 0.0).collect();
    let mut time = Matrix::zeros(k_users, m_vertices);
    let mut energy = Matrix::zeros(k_users, m_vertices);
    let mut power = Matrix::zeros(k_users, m_vertices);

    if active.is_empty() {
        // Nothing to deliver: park all the time on user 0 at its best stop.
        time[(0, best[0].0)] = budget;
        let allocation = Allocation { time, energy, power };
        let kkt = certificate(gains, demand, budget, &allocation);
        return Ok(AllocationSolution {
            allocation,
            kkt,
            energy: 0.0,
        });
    }

    let shares = time_shares(&active, demand, &best, budget);
    for (&k, &tau) in active.iter().zip(&shares) {
        let (m, gain) = best[k];
        let x = demand[k] * LN_2 / tau;
        let q = tau * num::exp_m1(x) / gain;
        if !q.is_finite() {
            return Err(Infeasible::EnergyOverflow);
        }
        time[(k, m)] = tau;
        energy[(k, m)] = q;
        power[(k, m)] = q / tau;
    }

    let allocation = Allocation { time, energy, power };
    let kkt = certificate(gains, demand, budget, &allocation);
    let energy = allocation.total_energy();
    Ok(AllocationSolution {
        allocation,
        kkt,
        energy,
    })
}

/// Total times `tau_k` for the active users, summing to `budget`.
///
/// At the optimum every active user has the same marginal energy saving per
/// second, `phi(x_k) / B_k = nu` with `x_k = gamma_k ln 2 / tau_k`,
/// `phi(x) = 1 + (x - 1) e^x` and `B_k` the best gain. `sum_k tau_k(nu)` is
/// decreasing in `nu`; bisect `ln nu` until it equals the budget.
fn time_shares(active: &[usize], demand: &[f64], best: &[(usize, f64)], budget: f64) -> Vec<f64> {
    if active.len() == 1 {
        return vec![budget];
    }
    let n = active.len() as f64;
    let ln_gain: Vec<f64> = active.iter().map(|&k| num::ln(best[k].1)).collect();
    let shares_at = |ln_nu: f64| -> Vec<f64> {
        active
            .iter()
            .zip(&ln_gain)
            .map(|(&k, &lg)| demand[k] * LN_2 / inverse_ln_price(ln_nu + lg))
            .collect()
    };

    // At `lo` some user alone would take the whole budget; at `hi` every
    // user takes at most budget / n.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&k, &lg) in active.iter().zip(&ln_gain) {
        let x = demand[k] * LN_2 / budget;
        lo = lo.min(ln_price(x) - lg);
        hi = hi.max(ln_price(n * x) - lg);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let total: f64 = shares_at(mid).iter().sum();
        if total > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut shares = shares_at(0.5 * (lo + hi));
    let scale = budget / shares.iter().sum::<f64>();
    for s in &mut shares {
        *s *= scale;
    }
    shares
}

/// `ln(1 + (x - 1) e^x)` for `x > 0`, accurate near zero and for large `x`.
fn ln_price(x: f64) -> f64 {
    if x < 0.5 {
        // 1 + (x - 1) e^x = sum_{n >= 2} (n - 1) x^n / n!
        let mut term = x * x / 2.0;
        let mut sum = term;
        for n in 3..40 {
            term *= x / n as f64;
            let add = term * (n - 1) as f64;
            sum += add;
            if add < sum * 1e-18 {
                break;
            }
        }
        num::ln(sum)
    } else if x > 30.0 {
        x + num::ln(x - 1.0 + num::exp(-x))
    } else {
        num::ln(1.0 + (x - 1.0) * num::exp(x))
    }
}

/// Derivative of [`ln_price`]: `x e^x / (1 + (x - 1) e^x)`.
fn ln_price_slope(x: f64) -> f64 {
    x * num::exp(x - ln_price(x))
}

/// Solves `ln_price(x) = y` for `x > 0` by safeguarded Newton.
fn inverse_ln_price(y: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ln_price(hi) < y {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = ln_price(x) - y;
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - f / ln_price_slope(x);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 1e-15 * x || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Evaluates the KKT conditions of an allocation.
///
/// Multipliers are read off the served cells: `mu_k` from stationarity in
/// `Q`, `nu` as the mean of `mu_k * d phi / d t` over active users. The
/// residual covers stationarity in `Q` and `t` on served cells, and
/// nonnegativity of the reduced cost of time on unserved cells.
pub fn certificate(gains: &EffectiveGains, demand: &[f64], budget: f64, allocation: &Allocation) -> KktReport {
    let a = gains.matrix();
    let (k_users, m_vertices) = (a.rows(), a.cols());
    let delivered = allocation.delivered(gains);
    let primal_residual = (0..k_users).map(|k| (demand[k] - delivered[k]).max(0.0)).fold(0.0, f64::max);
    let time_residual = (allocation.total_time() - budget).abs();

    let served = |k: usize| {
        (0..m_vertices).find(|&m| allocation.time[(k, m)] > 0.0 && allocation.energy[(k, m)] > 0.0 && a[(k, m)] > 0.0)
    };

    let mut mu = vec![0.0; k_users];
    let mut nu_sum = 0.0;
    let mut nu_count = 0usize;
    for k in 0..k_users {
        if let Some(m) = served(k) {
            let g = a[(k, m)];
            let p = allocation.power[(k, m)];
            mu[k] = LN_2 * (1.0 + g * p) / g;
            let slope = phi_grad_t(allocation.time[(k, m)], allocation.energy[(k, m)], g).unwrap_or(0.0);
            nu_sum += mu[k] * slope;
            nu_count += 1;
        }
    }
    let nu = if nu_count > 0 { nu_sum / nu_count as f64 } else { 0.0 };

    let mut stationarity: f64 = 0.0;
    if nu > 0.0 {
        for k in 0..k_users {
            for m in 0..m_vertices {
                let g = a[(k, m)];
                if g <= 0.0 {
                    continue;
                }
                let t = allocation.time[(k, m)];
                let q = allocation.energy[(k, m)];
                if t > 0.0 && q > 0.0 {
                    let p = allocation.power[(k, m)];
                    let q_stat = (1.0 - mu[k] * g / (LN_2 * (1.0 + g * p))).abs();
                    let t_stat = (nu - mu[k] * phi_grad_t(t, q, g).unwrap_or(0.0)).abs() / nu;
                    stationarity = stationarity.max(q_stat).max(t_stat);
                } else {
                    // Cheapest way to use one more second here, priced by nu.
                    let p_star = (mu[k] / LN_2 - 1.0 / g).max(0.0);
                    let reduced = p_star - mu[k] * rate(g, p_star) + nu;
                    stationarity = stationarity.max((-reduced).max(0.0) / nu);
                }
            }
        }
    }

    KktReport {
        primal_residual,
        time_residual,
        stationarity_residual: stationarity,
        mu,
        nu,
    }
}

/// Gaussian tail probability `Q(x) = P(N(0, 1) > x)`.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * num::erfc(x / core::f64::consts::SQRT_2)
}

/// Modulation loss for bistatic FSK backscatter.
pub const BETA_FSK: f64 = 0.5;

/// Least-squares `beta` such that `log2(1 + beta x)` tracks the OOK success
/// curve `1 - Q(sqrt(x))` over the grid `x_i = grid_max * i / points`,
/// `i = 1..=points`.
pub fn fit_beta_ook(grid_max: f64, points: usize) -> Result<f64> {
    if !(grid_max.is_finite() && grid_max > 0.0) {
        return Err(Error::Domain("grid_max must be positive"));
    }
    if points < 10 {
        return Err(Error::Domain("the fit needs at least 10 grid points"));
    }
    let grid: Vec<(f64, f64)> = (1..=points)
        .map(|i| {
            let x = grid_max * i as f64 / points as f64;
            (x, 1.0 - gaussian_tail(num::sqrt(x)))
        })
        .collect();
    let loss = |beta: f64| -> f64 {
        grid.iter()
            .map(|&(x, target)| {
                let r = rate(beta, x) - target;
                r * r
            })
            .sum()
    };

    // Coarse log-spaced scan, then golden-section refinement around the best.
    let scan: Vec<f64> = (0..=400).map(|i| num::powf(10.0, -6.0 + 8.0 * i as f64 / 400.0)).collect();
    let best = (0..scan.len())
        .min_by(|&i, &j| loss(scan[i]).total_cmp(&loss(scan[j])))
        .unwrap_or(0);
    let mut lo = scan[best.saturating_sub(1)];
    let mut hi = scan[(best + 1).min(scan.len() - 1)];
    let inv_phi = (num::sqrt(5.0) - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (loss(c), loss(d));
    while hi - lo > 1e-12 * hi {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = loss(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = loss(d);
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(gain: f64) -> EffectiveGains {
        EffectiveGains(Matrix::from_rows(&[vec![gain]]).unwrap())
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(0.0, 123.0), 0.0);
        assert_eq!(rate(1.5, 2.0), 2.0);
        assert_eq!(rate(7.0, 0.0), 0.0);
    }

    #[test]
    fn phi_examples() {
        // t = 2, A Q / t = 3.
        assert!((phi(2.0, 6.0, 1.0) - 4.0).abs() < 1e-14);
        assert_eq!(phi(0.0, 5.0, 2.0), 0.0);
        assert!(phi(1e-12, 5.0, 2.0) < 1e-9);
        let (t, q, a) = (0.7, 1.9, 3.3);
        assert!((phi(4.0 * t, 4.0 * q, a) - 4.0 * phi(t, q, a)).abs() < 1e-12);
    }

    #[test]
    fn grad_domain_and_zero_energy() {
        assert!(phi_grad_t(0.0, 1.0, 1.0).is_err());
        assert_eq!(phi_grad_t(2.0, 0.0, 5.0).unwrap(), 0.0);
        assert!(phi_grad_t(2.0, 1.0, 5.0).unwrap() > 0.0);
    }

    #[test]
    fn ln_price_matches_direct_formula() {
        for &x in &[1e-4, 0.01, 0.3, 0.49, 0.5, 0.51, 1.0, 5.0, 29.9, 30.1, 100.0] {
            let direct = num::ln(1.0 + (x - 1.0) * num::exp(x));
            let tol = if x < 0.05 { 1e-6 } else { 1e-12 };
            assert!((ln_price(x) - direct).abs() <= tol * direct.abs().max(1.0), "x = {x}");
            let back = inverse_ln_price(ln_price(x));
            assert!((back - x).abs() <= 1e-12 * x, "x = {x}, back = {back}");
        }
    }

    #[test]
    fn single_user_single_stop_closed_form() {
        // Q = budget (2^(gamma / budget) - 1) / A with A = 1, gamma = 2, budget = 50.
        let sol = solve_allocation_for_gains(&single(1.0), &[2.0], 50.0).unwrap();
        assert_eq!(sol.allocation.time[(0, 0)], 50.0);
        assert!((sol.energy - 1.405_691_332_803_327).abs() < 1e-12, "{}", sol.energy);
        assert!((sol.allocation.power[(0, 0)] - 0.028_113_826_656_066_54).abs() < 1e-14);
        assert!(sol.kkt.satisfies(&Tolerances::default(), 50.0), "{:?}", sol.kkt);
    }

    #[test]
    fn zero_demand_costs_nothing() {
        let gains = EffectiveGains(Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.0]]).unwrap());
        let sol = solve_allocation_for_gains(&gains, &[0.0, 0.0], 10.0).unwrap();
        assert_eq!(sol.energy, 0.0);
        assert_eq!(sol.allocation.total_time(), 10.0);
    }

    #[test]
    fn infeasible_cases() {
        assert_eq!(solve_allocation_for_gains(&single(1.0), &[1.0], 0.0), Err(Infeasible::NoTime));
        assert_eq!(solve_allocation_for_gains(&single(1.0), &[1.0], -3.0), Err(Infeasible::NoTime));
        assert_eq!(
            solve_allocation_for_gains(&single(1.0), &[1.0], f64::NEG_INFINITY),
            Err(Infeasible::NoTime)
        );
        let gains = EffectiveGains(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
        assert_eq!(
            solve_allocation_for_gains(&gains, &[1.0, 1.0], 5.0),
            Err(Infeasible::UnreachableUser(1))
        );
        assert_eq!(
            solve_allocation_for_gains(&single(1e-30), &[4000.0], 1.0),
            Err(Infeasible::EnergyOverflow)
        );
    }

    #[test]
    fn best_stop_takes_all_time() {
        let gains = EffectiveGains(Matrix::from_rows(&[vec![0.5, 2.0]]).unwrap());
        let sol = solve_allocation_for_gains(&gains, &[3.0], 10.0).unwrap();
        assert_eq!(sol.allocation.time[(0, 0)], 0.0);
        assert_eq!(sol.allocation.time[(0, 1)], 10.0);
        let alone = solve_allocation_for_gains(&single(2.0), &[3.0], 10.0).unwrap();
        assert!((sol.energy - alone.energy).abs() <= 1e-12 * alone.energy);
        assert!(sol.kkt.satisfies(&Tolerances::default(), 10.0), "{:?}", sol.kkt);
    }

    #[test]
    fn unselected_columns_are_zero() {
        use crate::scenario::{generate_scenario, ScenarioConfig};
        let s = generate_scenario(4, &ScenarioConfig { num_vertices: 5, num_users: 3, ..Default::default() }).unwrap();
        let sel = Selection::from_flags(&[1, 0, 1, 0, 0]).unwrap();
        let g = EffectiveGains::new(&s, &sel);
        for k in 0..3 {
            for m in [1, 3, 4] {
                assert_eq!(g.matrix()[(k, m)], 0.0);
            }
        }
        let sol = solve_allocation(&s, &sel, 30.0).unwrap();
        for k in 0..3 {
            for m in [1, 3, 4] {
                assert_eq!(sol.allocation.time[(k, m)], 0.0);
                assert_eq!(sol.allocation.energy[(k, m)], 0.0);
            }
        }
    }

    #[test]
    fn fsk_beta() {
        assert_eq!(BETA_FSK, 0.5);
    }

    #[test]
    fn ook_beta_fit() {
        let beta = fit_beta_ook(10.0, 200).unwrap();
        assert!(beta > 0.0 && beta < 1.0, "{beta}");
        let finer = fit_beta_ook(10.0, 400).unwrap();
        assert!((beta - finer).abs() < 1e-3, "{beta} vs {finer}");
        assert!(fit_beta_ook(10.0, 5).is_err());
        assert!(fit_beta_ook(0.0, 50).is_err());
    }

    #[test]
    fn gaussian_tail_reference_values() {
        assert!((gaussian_tail(0.0) - 0.5).abs() < 1e-15);
        assert!((gaussian_tail(1.959_963_984_540_054) - 0.025).abs() < 1e-12);
    }
}
