//! Scenario documents.

use crate::document::{self, FileError};
use crate::real::{plain_rows, real_rows, Real};
use serde::{Deserialize, Serialize};
use std::path::Path;
use ugv_plan_core::scenario::{watts_to_dbm, ChannelModel, PhysicalParams, Point, Scenario};
use ugv_plan_core::Matrix;

pub const SCENARIO_SCHEMA: u32 = 1;

// Largest accepted gap between `noise_w` and its dBm echo.
const NOISE_ECHO_TOLERANCE_DB: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub alpha1: f64,
    pub alpha2: f64,
    pub speed: f64,
    pub eta: f64,
    pub beta: f64,
    pub noise_w: f64,
    /// Echo of `noise_w`; checked for consistency when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dbm: Option<f64>,
    pub horizon: f64,
}

impl From<&PhysicalParams> for ParamsDoc {
    fn from(p: &PhysicalParams) -> Self {
        ParamsDoc {
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            speed: p.speed,
            eta: p.eta,
            beta: p.beta,
            noise_w: p.noise_w,
            noise_dbm: Some(p.noise_dbm()),
            horizon: p.horizon,
        }
    }
}

impl ParamsDoc {
    pub fn to_params(&self) -> Result<PhysicalParams, ugv_plan_core::Error> {
        if let Some(dbm) = self.noise_dbm {
            if (dbm - watts_to_dbm(self.noise_w)).abs() > NOISE_ECHO_TOLERANCE_DB || dbm.is_nan() {
                return Err(ugv_plan_core::Error::Invalid {
                    what: "physical parameters",
                    reason: format!("noise_dbm {dbm} disagrees with noise_w {}", self.noise_w),
                });
            }
        }
        let params = PhysicalParams {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            speed: self.speed,
            eta: self.eta,
            beta: self.beta,
            noise_w: self.noise_w,
            horizon: self.horizon,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Positions {
    pub vertices: Vec<[f64; 2]>,
    pub users: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub schema_version: u32,
    pub params: ParamsDoc,
    pub channel_cfg: Option<ChannelModel>,
    pub positions: Positions,
    /// Row-major distances (m); `"inf"` marks a forbidden move.
    #[serde(rename = "dist_D")]
    pub dist_d: Vec<Vec<Real>>,
    pub gain_gh_sq: Vec<Vec<f64>>,
    pub demand_gamma: Vec<f64>,
    pub seed: Option<u64>,
}

fn points(p: &[Point]) -> Vec<[f64; 2]> {
    p.iter().map(|p| [p.x, p.y]).collect()
}

impl From<&Scenario> for ScenarioDoc {
    fn from(s: &Scenario) -> Self {
        ScenarioDoc {
            schema_version: SCENARIO_SCHEMA,
            params: ParamsDoc::from(s.params()),
            channel_cfg: s.channel().copied(),
            positions: Positions { vertices: points(s.vertices()), users: points(s.users()) },
            dist_d: real_rows(s.distances().to_rows()),
            gain_gh_sq: s.gains().to_rows(),
            demand_gamma: s.demand().to_vec(),
            seed: s.seed(),
        }
    }
}

impl ScenarioDoc {
    pub fn to_scenario(&self) -> Result<Scenario, ugv_plan_core::Error> {
        let to_points = |v: &[[f64; 2]]| v.iter().map(|&[x, y]| Point::new(x, y)).collect();
        let distances = matrix(&plain_rows(&self.dist_d), self.positions.vertices.len())?;
        let gains = matrix(&self.gain_gh_sq, self.positions.vertices.len())?;
        Ok(Scenario::new(
            to_points(&self.positions.vertices),
            to_points(&self.positions.users),
            distances,
            gains,
            self.demand_gamma.clone(),
            self.params.to_params()?,
        )?
        .with_provenance(self.channel_cfg, self.seed))
    }
}

// An empty row list still carries its column count.
fn matrix(rows: &[Vec<f64>], cols: usize) -> Result<Matrix, ugv_plan_core::Error> {
    if rows.is_empty() {
        Ok(Matrix::zeros(0, cols))
    } else {
        Matrix::from_rows(rows)
    }
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<(), FileError> {
    document::write(path, &ScenarioDoc::from(scenario))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, FileError> {
    let doc: ScenarioDoc = document::read(path, SCENARIO_SCHEMA)?;
    doc.to_scenario().map_err(|source| FileError::Invalid { path: path.to_owned(), source })
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario, FileError> {
    let doc: ScenarioDoc = document::parse(text, path, SCENARIO_SCHEMA)?;
    doc.to_scenario().map_err(|source| FileError::Invalid { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ugv_plan_core::scenario::{generate_scenario, ScenarioConfig};

    fn text(s: &Scenario) -> String {
        serde_json::to_string_pretty(&ScenarioDoc::from(s)).unwrap()
    }

    #[test]
    fn generated_scenarios_round_trip_bit_for_bit() {
        for seed in 0..20 {
            let s = generate_scenario(seed, &ScenarioConfig::default()).unwrap();
            let back = parse_scenario(&text(&s), Path::new("s.json")).unwrap();
            assert_eq!(back, s);
            for (a, b) in back.gains().iter().zip(s.gains().iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn forbidden_edges_survive() {
        let s = generate_scenario(1, &ScenarioConfig { num_vertices: 3, num_users: 1, ..Default::default() }).unwrap();
        let mut doc = ScenarioDoc::from(&s);
        doc.dist_d[0][2] = Real(f64::INFINITY);
        let t = serde_json::to_string(&doc).unwrap();
        assert!(t.contains("\"inf\""));
        let back = parse_scenario(&t, Path::new("s.json")).unwrap();
        assert_eq!(back.distances()[(0, 2)], f64::INFINITY);
        assert_eq!(back.distances()[(2, 0)], s.distances()[(2, 0)]);
    }

    #[test]
    fn negative_demand_is_a_validation_error() {
        let s = generate_scenario(2, &ScenarioConfig { num_vertices: 2, num_users: 2, ..Default::default() }).unwrap();
        let mut doc = ScenarioDoc::from(&s);
        doc.demand_gamma[1] = -1.0;
        let err = parse_scenario(&serde_json::to_string(&doc).unwrap(), Path::new("s.json")).unwrap_err();
        assert!(matches!(err, FileError::Invalid { .. }), "{err}");
    }

    #[test]
    fn malformed_field_is_named() {
        let s = generate_scenario(3, &ScenarioConfig { num_vertices: 2, num_users: 1, ..Default::default() }).unwrap();
        let t = text(&s).replace("\"alpha2\": 7.4", "\"alpha2\": \"fast\"");
        let err = parse_scenario(&t, Path::new("s.json")).unwrap_err();
        assert!(err.to_string().contains("params.alpha2"), "{err}");
    }

    #[test]
    fn inconsistent_noise_echo_is_rejected() {
        let s = generate_scenario(4, &ScenarioConfig { num_vertices: 2, num_users: 1, ..Default::default() }).unwrap();
        let mut doc = ScenarioDoc::from(&s);
        doc.params.noise_dbm = Some(-20.0);
        assert!(parse_scenario(&serde_json::to_string(&doc).unwrap(), Path::new("s.json")).is_err());
        doc.params.noise_dbm = None;
        assert!(parse_scenario(&serde_json::to_string(&doc).unwrap(), Path::new("s.json")).is_ok());
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let s = generate_scenario(5, &ScenarioConfig { num_vertices: 3, num_users: 2, ..Default::default() }).unwrap();
        let mut doc = ScenarioDoc::from(&s);
        doc.gain_gh_sq[1].pop();
        assert!(parse_scenario(&serde_json::to_string(&doc).unwrap(), Path::new("s.json")).is_err());
    }
}
