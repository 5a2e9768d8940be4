//! Scenario description: base station, vehicles and static clutter.

use crate::channel::{path_params, visible_centers, ClutterPoint, EchoPath, RadarParams, Vehicle};
use crate::detect::Truth;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};
use std::path::Path;

const BUNDLED: &str = include_str!("../scenarios/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(rename = "bs_position_m", default)]
    pub bs_position: Vec2,
    #[serde(default)]
    pub vehicles: Vec<Vehicle>,
    #[serde(default)]
    pub clutter: Vec<ClutterPoint>,
}

/// One visible reflection center with its echo and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub vehicle: String,
    pub center: usize,
    pub path: EchoPath,
    pub truth: Truth,
}

impl Scenario {
    /// The bundled street scene: five vehicles, nine visible centers.
    pub fn bundled() -> Scenario {
        Scenario::from_toml(BUNDLED).expect("bundled scenario parses")
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
            format: "toml",
            reason: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        Scenario::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            format: "toml",
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for vehicle in &self.vehicles {
            vehicle.validate()?;
            if (vehicle.position - self.bs_position).norm() == 0.0 {
                return Err(Error::ColocatedTarget);
            }
        }
        for point in &self.clutter {
            if !(point.rcs > 0.0) {
                return Err(Error::param("clutter.rcs_m2", "must be positive"));
            }
        }
        Ok(())
    }

    /// Visible reflection centers, in vehicle order.
    pub fn targets(&self, radar: &RadarParams) -> Result<Vec<Target>> {
        let mut targets = Vec::new();
        for vehicle in &self.vehicles {
            for c in visible_centers(vehicle, self.bs_position) {
                let path = path_params(self.bs_position, c.position, c.rcs, c.velocity, radar)?;
                let label = format!("{}{}", vehicle.id, c.index);
                targets.push(Target {
                    vehicle: vehicle.id.clone(),
                    center: c.index,
                    truth: Truth {
                        label,
                        range_m: path.range(),
                        velocity_mps: path.doppler * radar.wavelength() / 2.0,
                    },
                    path,
                });
            }
        }
        Ok(targets)
    }

    /// Zero-Doppler echoes of the static clutter points.
    pub fn clutter_paths(&self, radar: &RadarParams) -> Result<Vec<EchoPath>> {
        self.clutter
            .iter()
            .map(|p| path_params(self.bs_position, p.position, p.rcs, Vec2::default(), radar))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scene_has_nine_visible_centers() {
        let scene = Scenario::bundled();
        assert_eq!(scene.vehicles.len(), 5);
        let targets = scene.targets(&RadarParams::default()).unwrap();
        assert_eq!(targets.len(), 9);
        for v in &scene.vehicles {
            let count = targets.iter().filter(|t| t.vehicle == v.id).count();
            assert!((1..=2).contains(&count), "vehicle {} has {count} visible centers", v.id);
        }
    }

    #[test]
    fn toml_round_trip() {
        let scene = Scenario::bundled();
        let back = Scenario::from_toml(&scene.to_toml().unwrap()).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn closing_vehicle_has_positive_velocity() {
        let text = r#"
            bs_position_m = [0.0, 0.0]
            [[vehicles]]
            id = "X"
            position_m = [50.0, 0.0]
            velocity_mps = [-10.0, 0.0]
            heading_rad = 3.141592653589793
            [[vehicles.centers]]
            offset_m = [0.0, 0.0]
            rcs_m2 = 1.0
            visibility_center_rad = 0.0
            visibility_halfwidth_rad = 3.141592653589793
        "#;
        let scene = Scenario::from_toml(text).unwrap();
        let t = &scene.targets(&RadarParams::default()).unwrap()[0];
        assert!((t.truth.velocity_mps - 10.0).abs() < 1e-9);
        assert!((t.truth.range_m - 50.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Scenario::from_toml("bs_position = [0.0, 0.0]").is_err());
    }
}
