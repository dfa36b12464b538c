//! Scenario documents: JSON in, validated configuration out.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentParams, DropZone};
use crate::control::PlantParams;
use crate::coverage::ConvexRegion;
use crate::estimation::SensorModel;
use crate::geometry::{CameraIntrinsics, Vec3};
use crate::vision::{ColorClass, DetectorParams, RenderParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("cannot read scenario file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    pub fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: usize,
    /// Name of a color class; picks the render color as well.
    pub color: String,
    pub rgb: [u8; 3],
    #[serde(default = "default_diameter")]
    pub diameter: f64,
    #[serde(default = "yes")]
    pub ferrous: bool,
    pub position: [f64; 2],
    /// Constant ground velocity, m/s; omitted for static objects.
    #[serde(default)]
    pub velocity: [f64; 2],
}

fn default_diameter() -> f64 {
    0.3
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub arena: ConvexRegion,
    pub drop_zone: DropZone,
    pub objects: Vec<ObjectSpec>,
    /// Constant wind, expressed as an acceleration, m/s^2.
    #[serde(default)]
    pub wind: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub start: [f64; 3],
    pub region: ConvexRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkParams {
    pub latency: f64,
    pub drop_probability: f64,
    /// Broadcast rate, Hz.
    pub rate: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self { latency: 0.0, drop_probability: 0.0, rate: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub model: SensorModel,
    pub velocity_sigma: f64,
    pub accel_sigma: f64,
    /// Fix outages as `[start, end)` windows, s.
    pub gps_dropouts: Vec<[f64; 2]>,
    pub render: RenderParams,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            model: SensorModel::default(),
            velocity_sigma: 0.02,
            accel_sigma: 0.05,
            gps_dropouts: Vec::new(),
            render: RenderParams::default(),
        }
    }
}

fn default_classes() -> Vec<ColorClass> {
    vec![ColorClass::red(), ColorClass::blue(), ColorClass::yellow()]
}

/// Closed-loop mission scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    /// Camera frames are taken every this many ticks.
    #[serde(default = "default_perception_every")]
    pub perception_every: u32,
    pub world: WorldConfig,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub agent_params: AgentParams,
    #[serde(default = "default_classes")]
    pub classes: Vec<ColorClass>,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub network: NetworkParams,
    #[serde(default)]
    pub plant: PlantParams,
    /// End the run once every object is delivered.
    #[serde(default = "yes")]
    pub stop_when_done: bool,
}

fn default_dt() -> f64 {
    0.02
}

fn default_perception_every() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionEvalConfig {
    pub name: String,
    pub seed: u64,
    pub seeds: u32,
    pub side: f64,
    pub speed: f64,
    pub altitude: f64,
    pub model: SensorModel,
    /// Window used for the fix-outage check, `[start, end)` s.
    pub dropout: [f64; 2],
}

impl Default for FusionEvalConfig {
    fn default() -> Self {
        Self {
            name: "fusion-eval".into(),
            seed: 0,
            seeds: 20,
            side: 22.5,
            speed: 1.0,
            altitude: 2.0,
            model: SensorModel::default(),
            dropout: [40.0, 50.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionMapConfig {
    pub name: String,
    pub seed: u64,
    pub camera: CameraIntrinsics,
    pub altitudes: Vec<f64>,
    /// Grid cells per image axis.
    pub grid: [u32; 2],
    pub object_diameter: f64,
    pub rgb: [u8; 3],
    pub render: RenderParams,
    /// Defaults to the plain thresholded-blob pipeline being characterized.
    pub detector: DetectorParams,
    /// Noisy renders per cell; the cell reports the median error.
    pub repeats: u32,
}

impl Default for DetectionMapConfig {
    fn default() -> Self {
        Self {
            name: "detection-map".into(),
            seed: 0,
            camera: CameraIntrinsics::centered(800.0, 640, 480).expect("valid camera"),
            altitudes: vec![5.0, 7.5, 10.0],
            grid: [9, 7],
            object_diameter: 0.3,
            rgb: [220, 30, 30],
            render: RenderParams { vignetting: 0.85, noise_sigma: 4.0, ..RenderParams::default() },
            detector: DetectorParams { subpixel: false, ..DetectorParams::default() },
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Mission(ScenarioConfig),
    FusionEval(FusionEvalConfig),
    DetectionMap(DetectionMapConfig),
}

impl Scenario {
    pub fn name(&self) -> &str {
        match self {
            Scenario::Mission(c) => &c.name,
            Scenario::FusionEval(c) => &c.name,
            Scenario::DetectionMap(c) => &c.name,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Scenario::Mission(c) => c.seed = seed,
            Scenario::FusionEval(c) => c.seed = seed,
            Scenario::DetectionMap(c) => c.seed = seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::field("<root>", e.to_string()))?;
        let kind = value
            .as_object_mut()
            .ok_or_else(|| ConfigError::field("<root>", "expected a JSON object"))?
            .remove("kind")
            .ok_or_else(|| ConfigError::field("kind", "missing scenario kind"))?;
        let scenario = match kind.as_str() {
            Some("mission") => Scenario::Mission(parse_tracked(value)?),
            Some("fusion_eval") => Scenario::FusionEval(parse_tracked(value)?),
            Some("detection_map") => Scenario::DetectionMap(parse_tracked(value)?),
            _ => return Err(ConfigError::field("kind", "expected one of `mission`, `fusion_eval`, `detection_map`")),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            Scenario::Mission(c) => c.validate(),
            Scenario::FusionEval(c) => c.validate(),
            Scenario::DetectionMap(c) => c.validate(),
        }
    }
}

fn parse_tracked<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::field(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })
}

fn check(ok: bool, path: &str, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::field(path, message))
    }
}

fn check_sensor_model(m: &SensorModel, path: &str) -> Result<(), ConfigError> {
    check(m.odom_rate > 0.0 && m.gps_rate > 0.0, &format!("{path}.gps_rate"), "sensor rates must be positive")?;
    check(
        m.sigma_odom >= 0.0 && m.sigma_gps >= 0.0 && m.bias_walk >= 0.0 && m.latency >= 0.0,
        path,
        "noise levels and latency must be non-negative",
    )
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.dt > 0.0 && self.dt.is_finite(), "dt", "must be positive")?;
        check(self.duration >= 0.0 && self.duration.is_finite(), "duration", "must be non-negative")?;
        check(self.perception_every >= 1, "perception_every", "must be at least 1")?;
        check(!self.classes.is_empty(), "classes", "at least one color class is required")?;
        for (i, c) in self.classes.iter().enumerate() {
            c.validate().map_err(|m| ConfigError::field(format!("classes[{i}]"), m))?;
        }
        let w = &self.world;
        check(w.drop_zone.radius > 0.0, "world.drop_zone.radius", "must be positive")?;
        check(w.wind.iter().all(|v| v.is_finite()), "world.wind", "must be finite")?;
        let mut ids = std::collections::BTreeSet::new();
        for (i, o) in w.objects.iter().enumerate() {
            let path = format!("world.objects[{i}]");
            check(ids.insert(o.id), &format!("{path}.id"), "duplicate object id")?;
            check(o.diameter > 0.0, &format!("{path}.diameter"), "must be positive")?;
            check(self.classes.iter().any(|c| c.name == o.color), &format!("{path}.color"), "unknown color class")?;
            let p = Vec3::new(o.position[0], o.position[1], 0.0);
            check(w.arena.contains(&p.xy()), &format!("{path}.position"), "object must start inside the arena")?;
        }
        for (i, a) in self.agents.iter().enumerate() {
            check(a.start.iter().all(|v| v.is_finite()), &format!("agents[{i}].start"), "must be finite")?;
        }
        let p = &self.agent_params;
        p.camera.validate().map_err(|e| ConfigError::field("agent_params.camera", e.to_string()))?;
        p.avoidance.validate().map_err(|m| ConfigError::field("agent_params.avoidance", m))?;
        p.servo.validate().map_err(|m| ConfigError::field("agent_params.servo", m))?;
        p.gripper.validate().map_err(|m| ConfigError::field("agent_params.gripper", m))?;
        p.battery.validate().map_err(|m| ConfigError::field("agent_params.battery", m))?;
        check(
            p.mission.search_altitude > 0.0 && (0.0..1.0).contains(&p.mission.sweep_overlap),
            "agent_params.mission",
            "search altitude must be positive and overlap in [0, 1)",
        )?;
        check(p.gains.kp > 0.0 && p.gains.kv > 0.0 && p.gains.a_max > 0.0, "agent_params.gains", "gains must be positive")?;
        check_sensor_model(&self.sensors.model, "sensors.model")?;
        let n = &self.network;
        check((0.0..=1.0).contains(&n.drop_probability), "network.drop_probability", "must be in [0, 1]")?;
        check(n.latency >= 0.0, "network.latency", "must be non-negative")?;
        check(n.rate > 0.0, "network.rate", "must be positive")?;
        check(self.plant.v_max > 0.0 && self.plant.drag >= 0.0, "plant", "v_max must be positive and drag non-negative")?;
        Ok(())
    }
}

impl FusionEvalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.seeds >= 1, "seeds", "must be at least 1")?;
        check(self.side > 0.0 && self.speed > 0.0, "side", "side and speed must be positive")?;
        check(self.dropout[0] <= self.dropout[1], "dropout", "start must not exceed end")?;
        check_sensor_model(&self.model, "model")
    }
}

impl DetectionMapConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.camera.validate().map_err(|e| ConfigError::field("camera", e.to_string()))?;
        check(!self.altitudes.is_empty() && self.altitudes.iter().all(|a| *a > 0.0), "altitudes", "must be non-empty and positive")?;
        check(self.grid[0] >= 1 && self.grid[1] >= 1, "grid", "must have at least one cell per axis")?;
        check(self.object_diameter > 0.0, "object_diameter", "must be positive")?;
        check(self.repeats >= 1, "repeats", "must be at least 1")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let text = r#"{"kind": "fusion_eval", "seeds": 3, "bogus": 1}"#;
        let err = Scenario::from_json(text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let nested = r#"{"kind": "fusion_eval", "model": {"gps_rate": 5, "typo": 2}}"#;
        let err = Scenario::from_json(nested).unwrap_err().to_string();
        assert!(err.starts_with("model"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = Scenario::from_json(r#"{"kind": "fusion_eval", "seeds": 0}"#).unwrap_err().to_string();
        assert!(err.starts_with("seeds:"), "{err}");
    }

    #[test]
    fn experiment_round_trip() {
        let s = Scenario::DetectionMap(DetectionMapConfig::default());
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
}
