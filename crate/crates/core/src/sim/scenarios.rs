//! Built-in scenarios reproducing the reported experiments at desk scale.

use super::config::{
    AgentSpec, DetectionMapConfig, FusionEvalConfig, NetworkParams, ObjectSpec, Scenario, ScenarioConfig, SensorConfig,
    WorldConfig,
};
use crate::agent::{AgentParams, DropZone};
use crate::control::PlantParams;
use crate::coverage::ConvexRegion;
use crate::vision::ColorClass;

pub const NAMES: [&str; 6] = ["collision", "moving-pickup", "static-pickup", "fusion-eval", "detection-map", "full-arena"];

/// One-meter-per-second-class walking pace of the moving target, m/s.
pub const MOVING_OBJECT_SPEED: f64 = 1.0 / 3.6;

const RED: [u8; 3] = [220, 30, 30];
const BLUE: [u8; 3] = [30, 60, 200];
const YELLOW: [u8; 3] = [230, 210, 40];

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> ConvexRegion {
    ConvexRegion::rectangle(x0, y0, x1, y1).expect("static rectangle")
}

fn object(id: usize, color: &str, rgb: [u8; 3], position: [f64; 2], velocity: [f64; 2]) -> ObjectSpec {
    ObjectSpec { id, color: color.into(), rgb, diameter: 0.3, ferrous: true, position, velocity }
}

fn mission(name: &str, duration: f64, world: WorldConfig, agents: Vec<AgentSpec>, agent_params: AgentParams) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed: 0,
        dt: 0.02,
        duration,
        perception_every: 5,
        world,
        agents,
        agent_params,
        classes: vec![ColorClass::red(), ColorClass::blue(), ColorClass::yellow()],
        sensors: SensorConfig::default(),
        network: NetworkParams::default(),
        plant: PlantParams::default(),
        stop_when_done: true,
    }
}

/// Two agents converge on one object; the lower id has priority and holds
/// in the ball above it while the other keeps its distance.
pub fn collision() -> ScenarioConfig {
    let arena = rect(-10.0, -10.0, 10.0, 10.0);
    let world = WorldConfig {
        arena: arena.clone(),
        drop_zone: DropZone { center: [8.0, 8.0], radius: 1.5 },
        objects: vec![object(0, "red", RED, [0.0, 0.0], [0.0, 0.0])],
        wind: [0.0; 3],
    };
    let agents = vec![
        AgentSpec { start: [-3.0, 0.0, 0.0], region: arena.clone() },
        AgentSpec { start: [3.0, 0.0, 0.0], region: arena },
    ];
    let mut params = AgentParams::default();
    params.mission.claims_enabled = false;
    params.servo.engage_magnet = false;
    mission("collision", 30.0, world, agents, params)
}

/// One agent picks up an object crossing the arena at walking pace.
pub fn moving_pickup() -> ScenarioConfig {
    let arena = rect(-10.0, -10.0, 10.0, 10.0);
    let world = WorldConfig {
        arena: arena.clone(),
        drop_zone: DropZone { center: [-8.0, -8.0], radius: 2.0 },
        objects: vec![object(0, "red", RED, [-3.0, 2.0], [MOVING_OBJECT_SPEED, 0.0])],
        wind: [0.0; 3],
    };
    let agents = vec![AgentSpec { start: [0.0, -6.0, 0.0], region: arena }];
    let mut params = AgentParams::default();
    params.gripper.p_grasp = 1.0;
    mission("moving-pickup", 120.0, world, agents, params)
}

pub fn static_pickup() -> ScenarioConfig {
    let arena = rect(-10.0, -10.0, 10.0, 10.0);
    let world = WorldConfig {
        arena: arena.clone(),
        drop_zone: DropZone { center: [-8.0, -8.0], radius: 2.0 },
        objects: vec![object(0, "red", RED, [4.0, 3.0], [0.0, 0.0])],
        wind: [0.3, -0.2, 0.0],
    };
    let agents = vec![AgentSpec { start: [0.0, -6.0, 0.0], region: arena }];
    mission("static-pickup", 120.0, world, agents, AgentParams::default())
}

/// Three agents, three regions, static and moving objects of three colors.
pub fn full_arena() -> ScenarioConfig {
    let world = WorldConfig {
        arena: rect(0.0, -6.0, 45.0, 30.0),
        drop_zone: DropZone { center: [22.5, -3.0], radius: 2.5 },
        objects: vec![
            object(0, "red", RED, [6.0, 12.0], [0.0, 0.0]),
            object(1, "blue", BLUE, [24.0, 20.0], [0.0, 0.0]),
            object(2, "yellow", YELLOW, [38.0, 8.0], [0.0, 0.0]),
            object(3, "red", RED, [18.0, 26.0], [MOVING_OBJECT_SPEED, 0.0]),
            object(4, "blue", BLUE, [40.0, 24.0], [0.0, -MOVING_OBJECT_SPEED]),
        ],
        wind: [0.2, 0.1, 0.0],
    };
    let agents = vec![
        AgentSpec { start: [7.5, -4.0, 0.0], region: rect(0.0, 0.0, 15.0, 30.0) },
        AgentSpec { start: [16.0, -4.0, 0.0], region: rect(15.0, 0.0, 30.0, 30.0) },
        AgentSpec { start: [37.5, -4.0, 0.0], region: rect(30.0, 0.0, 45.0, 30.0) },
    ];
    let mut c = mission("full-arena", 180.0, world, agents, AgentParams::default());
    c.network = NetworkParams { latency: 0.05, drop_probability: 0.1, rate: 10.0 };
    c
}

pub fn builtin(name: &str) -> Option<Scenario> {
    Some(match name {
        "collision" => Scenario::Mission(collision()),
        "moving-pickup" => Scenario::Mission(moving_pickup()),
        "static-pickup" => Scenario::Mission(static_pickup()),
        "fusion-eval" => Scenario::FusionEval(FusionEvalConfig::default()),
        "detection-map" => Scenario::DetectionMap(DetectionMapConfig::default()),
        "full-arena" => Scenario::Mission(full_arena()),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_validates_and_round_trips() {
        for name in NAMES {
            let s = builtin(name).unwrap();
            s.validate().unwrap();
            assert_eq!(s.name(), name);
            assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        }
        assert!(builtin("nope").is_none());
    }

    #[test]
    fn full_arena_has_three_agents_and_regions() {
        let c = full_arena();
        assert_eq!(c.agents.len(), 3);
        let regions: std::collections::BTreeSet<String> = c.agents.iter().map(|a| format!("{:?}", a.region)).collect();
        assert_eq!(regions.len(), 3);
    }
}
