//! Problem instances: stopping-point graph, user positions, channel gains and
//! the physical constants of the vehicle and the backscatter link.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::num;
use crate::{Error, Matrix, Result};

/// Converts a power in dBm to watts: `10^((dBm - 30) / 10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    num::powf(10.0, (dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * num::ln(watts) / num::ln(10.0) + 30.0
}

/// Vehicle and link constants.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhysicalParams {
    /// Motion energy per metre travelled (J/m).
    pub alpha1: f64,
    /// Motion power coefficient (J/m per m/s).
    pub alpha2: f64,
    /// Vehicle speed (m/s).
    pub speed: f64,
    /// Tag scattering efficiency, `0 < eta <= 1`.
    pub eta: f64,
    /// Modulation and coding loss, `0 < beta <= 1`.
    pub beta: f64,
    /// Receiver noise power (W).
    pub noise_w: f64,
    /// Mission time budget (s).
    pub horizon: f64,
}

impl Default for PhysicalParams {
    /// Pioneer 3-DX motion model, FSK backscatter, -70 dBm noise and a
    /// 50 s mission at 1 m/s.
    fn default() -> Self {
        PhysicalParams {
            alpha1: 0.29,
            alpha2: 7.4,
            speed: 1.0,
            eta: 0.78,
            beta: 0.5,
            noise_w: dbm_to_watts(-70.0),
            horizon: 50.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("speed", self.speed),
            ("eta", self.eta),
            ("beta", self.beta),
            ("noise_w", self.noise_w),
            ("horizon", self.horizon),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(
                    "physical parameters",
                    format!("{name} must be finite and strictly positive, got {value}"),
                ));
            }
        }
        if self.eta > 1.0 {
            return Err(Error::invalid("physical parameters", format!("eta must be <= 1, got {}", self.eta)));
        }
        if self.beta > 1.0 {
            return Err(Error::invalid("physical parameters", format!("beta must be <= 1, got {}", self.beta)));
        }
        Ok(())
    }

    /// Motion energy per metre of tour, `alpha1 / speed + alpha2`.
    pub fn motion_energy_per_metre(&self) -> f64 {
        self.alpha1 / self.speed + self.alpha2
    }

    pub fn noise_dbm(&self) -> f64 {
        watts_to_dbm(self.noise_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Fading {
    /// Independent `CN(0, rho)` uplink and downlink coefficients.
    Rayleigh,
    /// Deterministic `|g|^2 = |h|^2 = rho`.
    None,
}

/// Distance-dependent path loss `rho0 * (d / d0)^(-exponent)` plus fading.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelModel {
    pub rho0: f64,
    pub d0: f64,
    pub exponent: f64,
    pub fading: Fading,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            rho0: 1e-3,
            d0: 1.0,
            exponent: 2.5,
            fading: Fading::Rayleigh,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("rho0", self.rho0), ("d0", self.d0), ("exponent", self.exponent)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(
                    "channel model",
                    format!("{name} must be finite and strictly positive, got {value}"),
                ));
            }
        }
        Ok(())
    }
}

/// Mean channel power gain at distance `d` metres.
pub fn pathloss(d: f64, model: &ChannelModel) -> Result<f64> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::Domain("path-loss distance must be strictly positive"));
    }
    Ok(model.rho0 * num::powf(d / model.d0, -model.exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        num::hypot(self.x - other.x, self.y - other.y)
    }
}

/// A complete planning instance.
///
/// `distances` is the directed `M x M` travel-distance matrix with a zero
/// diagonal; `f64::INFINITY` marks a forbidden move. `gains` is the `K x M`
/// matrix of combined round-trip channel gains `|g|^2 |h|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    vertices: Vec<Point>,
    users: Vec<Point>,
    distances: Matrix,
    gains: Matrix,
    demand: Vec<f64>,
    params: PhysicalParams,
    channel: Option<ChannelModel>,
    seed: Option<u64>,
}

impl Scenario {
    /// Validates and assembles a scenario.
    pub fn new(
        vertices: Vec<Point>,
        users: Vec<Point>,
        distances: Matrix,
        gains: Matrix,
        demand: Vec<f64>,
        params: PhysicalParams,
    ) -> Result<Self> {
        let scenario = Scenario {
            vertices,
            users,
            distances,
            gains,
            demand,
            params,
            channel: None,
            seed: None,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Records how the instance was generated. Informational only.
    pub fn with_provenance(mut self, channel: Option<ChannelModel>, seed: Option<u64>) -> Self {
        self.channel = channel;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if let Some(channel) = &self.channel {
            channel.validate()?;
        }
        let m = self.vertices.len();
        let k = self.users.len();
        if m == 0 {
            return Err(Error::invalid("scenario", "at least one vertex (the depot) is required"));
        }
        if k == 0 {
            return Err(Error::invalid("scenario", "at least one user is required"));
        }
        if self.distances.rows() != m || self.distances.cols() != m {
            return Err(Error::Dimension {
                what: "distance matrix",
                expected: m,
                found: if self.distances.rows() != m { self.distances.rows() } else { self.distances.cols() },
            });
        }
        if self.gains.rows() != k || self.gains.cols() != m {
            return Err(Error::Dimension {
                what: "gain matrix",
                expected: if self.gains.rows() != k { k } else { m },
                found: if self.gains.rows() != k { self.gains.rows() } else { self.gains.cols() },
            });
        }
        if self.demand.len() != k {
            return Err(Error::Dimension {
                what: "demand vector",
                expected: k,
                found: self.demand.len(),
            });
        }
        for p in self.vertices.iter().chain(&self.users) {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::invalid("scenario", "positions must be finite"));
            }
        }
        for i in 0..m {
            for j in 0..m {
                let d = self.distances[(i, j)];
                if i == j && d != 0.0 {
                    return Err(Error::invalid(
                        "distance matrix",
                        format!("diagonal entry ({i}, {i}) must be zero, got {d}"),
                    ));
                }
                if d.is_nan() || d < 0.0 {
                    return Err(Error::invalid(
                        "distance matrix",
                        format!("entry ({i}, {j}) must be nonnegative or +inf, got {d}"),
                    ));
                }
            }
        }
        for u in 0..k {
            for v in 0..m {
                let g = self.gains[(u, v)];
                if !(g.is_finite() && g >= 0.0) {
                    return Err(Error::invalid(
                        "gain matrix",
                        format!("entry ({u}, {v}) must be finite and nonnegative, got {g}"),
                    ));
                }
            }
        }
        for (u, &gamma) in self.demand.iter().enumerate() {
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(Error::invalid(
                    "demand vector",
                    format!("demand of user {u} must be finite and positive, got {gamma}"),
                ));
            }
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn users(&self) -> &[Point] {
        &self.users
    }

    pub fn distances(&self) -> &Matrix {
        &self.distances
    }

    pub fn gains(&self) -> &Matrix {
        &self.gains
    }

    pub fn demand(&self) -> &[f64] {
        &self.demand
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn channel(&self) -> Option<&ChannelModel> {
        self.channel.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// SNR per watt of user `k` when served from vertex `m`, ignoring the
    /// selection: `beta * eta * |g|^2 |h|^2 / N0`.
    pub fn snr_per_watt(&self, k: usize, m: usize) -> f64 {
        self.params.beta * self.params.eta * self.gains[(k, m)] / self.params.noise_w
    }

    /// Same geometry and channels with different physical parameters.
    pub fn with_params(&self, params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        let mut s = self.clone();
        s.params = params;
        Ok(s)
    }

    /// Same geometry and channels with a different noise power.
    pub fn with_noise(&self, noise_w: f64) -> Result<Self> {
        self.with_params(PhysicalParams { noise_w, ..self.params })
    }

    /// Same instance with a different demand vector.
    pub fn with_demand(&self, demand: Vec<f64>) -> Result<Self> {
        let mut s = self.clone();
        s.demand = demand;
        s.validate()?;
        Ok(s)
    }
}

/// Everything needed to draw a random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioConfig {
    pub num_vertices: usize,
    pub num_users: usize,
    /// Side of the square map (m).
    pub area_side: f64,
    pub channel: ChannelModel,
    pub params: PhysicalParams,
    /// Per-user demand is drawn uniformly from `[demand_min, demand_max]` (bit/Hz).
    pub demand_min: f64,
    pub demand_max: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_vertices: 15,
            num_users: 10,
            area_side: 20.0,
            channel: ChannelModel::default(),
            params: PhysicalParams::default(),
            demand_min: 2.0,
            demand_max: 4.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_vertices == 0 || self.num_users == 0 {
            return Err(Error::invalid("scenario config", "need at least one vertex and one user"));
        }
        if !(self.area_side.is_finite() && self.area_side > 0.0) {
            return Err(Error::invalid("scenario config", "area side must be positive"));
        }
        if !(self.demand_min > 0.0 && self.demand_min <= self.demand_max && self.demand_max.is_finite()) {
            return Err(Error::invalid(
                "scenario config",
                format!("demand range [{}, {}] is not a positive interval", self.demand_min, self.demand_max),
            ));
        }
        self.channel.validate()?;
        self.params.validate()
    }
}

// Guards the path-loss pole for a user that lands exactly on a vertex.
const MIN_LINK_DISTANCE: f64 = 1e-6;

/// Draws a random instance: vertices and users uniform over the square map,
/// Euclidean complete-digraph distances, path-loss channels with optional
/// Rayleigh fading, and uniform demands. Deterministic in `seed`.
pub fn generate_scenario(seed: u64, cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = cfg.area_side;
    let draw_point = |rng: &mut ChaCha8Rng| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);

    let vertices: Vec<Point> = (0..cfg.num_vertices).map(|_| draw_point(&mut rng)).collect();
    let users: Vec<Point> = (0..cfg.num_users).map(|_| draw_point(&mut rng)).collect();

    let distances = Matrix::from_fn(cfg.num_vertices, cfg.num_vertices, |i, j| {
        if i == j {
            0.0
        } else {
            vertices[i].distance(&vertices[j])
        }
    });

    let mut gains = Matrix::zeros(cfg.num_users, cfg.num_vertices);
    for (k, user) in users.iter().enumerate() {
        for (m, vertex) in vertices.iter().enumerate() {
            let rho = pathloss(user.distance(vertex).max(MIN_LINK_DISTANCE), &cfg.channel)?;
            gains[(k, m)] = match cfg.channel.fading {
                Fading::None => rho * rho,
                Fading::Rayleigh => {
                    let g = complex_gaussian_power(&mut rng, rho);
                    let h = complex_gaussian_power(&mut rng, rho);
                    g * h
                }
            };
        }
    }

    let width = cfg.demand_max - cfg.demand_min;
    let demand = (0..cfg.num_users)
        .map(|_| cfg.demand_min + width * rng.random::<f64>())
        .collect();

    Ok(Scenario::new(vertices, users, distances, gains, demand, cfg.params)?
        .with_provenance(Some(cfg.channel), Some(seed)))
}

/// `|z|^2` for `z ~ CN(0, variance)`.
pub(crate) fn complex_gaussian_power<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> f64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    0.5 * variance * (re * re + im * im)
}
