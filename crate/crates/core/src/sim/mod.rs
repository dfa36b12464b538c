//! Deterministic fixed-step simulator tying agents, world and network
//! together, plus the built-in scenarios and offline experiments.

mod config;
pub mod experiments;
mod log;
mod network;
pub mod scenarios;
mod world;

pub use config::{
    AgentSpec, ConfigError, DetectionMapConfig, FusionEvalConfig, NetworkParams, ObjectSpec, Scenario, ScenarioConfig,
    SensorConfig, WorldConfig,
};
pub use log::{CsvStream, Logs};
pub use network::BroadcastBus;
pub use world::{gripper_gap, reflect, ObjectState, ObjectStatus, World};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentConfig, AgentInput, AgentMessage, AgentOutput, EventKind, GripperReading, GripperState};
use crate::control::{step_dynamics, AgentKinematics};
use crate::coverage::{camera_footprint, ConvexRegion, Vec2};
use crate::estimation::{GpsFix, OdomReading};
use crate::geometry::{Pose, Rotation, Vec3};
use crate::vision::{render_scene, Image, SceneDisc};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot write outputs: {0}")]
    Io(#[from] std::io::Error),
}

/// Seeded generator for one purpose; every purpose gets its own stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    let mut g = || -> f64 { StandardNormal.sample(rng) };
    Vec3::new(g(), g(), g()) * sigma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub sim_time: f64,
    pub ticks: u64,
    pub agents: usize,
    pub objects: usize,
    pub objects_delivered: usize,
    /// Seconds from claiming an object to its delivery, per delivery.
    pub pickup_durations: Vec<f64>,
    pub delivery_times: Vec<f64>,
    /// Smallest true distance between any two agents; absent with fewer than two.
    pub min_pairwise_distance: Option<f64>,
    pub coverage_fraction: f64,
    pub detections: usize,
    pub grasp_attempts: usize,
    pub grasp_failures: usize,
    /// Relative track error at each contact, m.
    pub grasp_track_errors: Vec<f64>,
    pub hover_events: usize,
    pub landed_agents: usize,
    pub final_agent_positions: Vec<[f64; 3]>,
    pub final_object_positions: Vec<[f64; 3]>,
    pub messages_sent: u64,
    pub messages_delivered: u64,
}

#[derive(Debug, Clone)]
struct Body {
    kin: AgentKinematics,
    prev_position: Vec3,
    accel: Vec3,
    gripper: GripperState,
    contact: bool,
    odom_bias: Vec3,
}

#[derive(Debug, Clone)]
struct AgentRngs {
    odom: ChaCha8Rng,
    gps: ChaCha8Rng,
    imu: ChaCha8Rng,
    render: ChaCha8Rng,
    gripper: ChaCha8Rng,
}

#[derive(Debug, Clone)]
struct CoverageGrid {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    inside: Vec<bool>,
    seen: Vec<bool>,
}

impl CoverageGrid {
    fn new(regions: &[ConvexRegion], cell: f64) -> Self {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for r in regions {
            let (a, b) = r.bounding_box();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        if regions.is_empty() {
            return Self { origin: Vec2::zeros(), cell, nx: 0, ny: 0, inside: vec![], seen: vec![] };
        }
        let nx = ((hi.x - lo.x) / cell).ceil() as usize;
        let ny = ((hi.y - lo.y) / cell).ceil() as usize;
        let mut inside = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = lo + Vec2::new((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell);
                inside[j * nx + i] = regions.iter().any(|r| r.contains(&c));
            }
        }
        Self { origin: lo, cell, nx, ny, seen: vec![false; nx * ny], inside }
    }

    fn mark(&mut self, center: Vec2, half: f64) {
        if self.nx == 0 {
            return;
        }
        let to_index = |v: f64, o: f64, n: usize| (((v - o) / self.cell).floor().max(0.0) as usize).min(n);
        let (i0, i1) = (to_index(center.x - half, self.origin.x, self.nx), to_index(center.x + half, self.origin.x, self.nx - 1) + 1);
        let (j0, j1) = (to_index(center.y - half, self.origin.y, self.ny), to_index(center.y + half, self.origin.y, self.ny - 1) + 1);
        for j in j0..j1.min(self.ny) {
            for i in i0..i1.min(self.nx) {
                let c = self.origin + Vec2::new((i as f64 + 0.5) * self.cell, (j as f64 + 0.5) * self.cell);
                if (c.x - center.x).abs() <= half && (c.y - center.y).abs() <= half {
                    self.seen[j * self.nx + i] = true;
                }
            }
        }
    }

    fn fraction(&self) -> f64 {
        let total = self.inside.iter().filter(|v| **v).count();
        if total == 0 {
            return 0.0;
        }
        let seen = self.inside.iter().zip(&self.seen).filter(|(i, s)| **i && **s).count();
        seen as f64 / total as f64
    }
}

/// A complete, self-contained simulation state.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub world: World,
    pub agents: Vec<Agent>,
    pub logs: Logs,
    pub last_outputs: Vec<Option<AgentOutput>>,
    bodies: Vec<Body>,
    rngs: Vec<AgentRngs>,
    net_rng: ChaCha8Rng,
    bus: BroadcastBus<AgentMessage>,
    inboxes: Vec<Vec<AgentMessage>>,
    coverage: CoverageGrid,
    tick: u64,
    metrics: Metrics,
    claim_started: Vec<f64>,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let world = World::new(&config.world);
        let diameter = config.world.objects.first().map_or(0.3, |o| o.diameter);
        let mut agents = Vec::with_capacity(config.agents.len());
        for (id, spec) in config.agents.iter().enumerate() {
            let agent_config = AgentConfig {
                id,
                start: Vec3::from(spec.start),
                region: spec.region.clone(),
                drop_zone: config.world.drop_zone,
                classes: config.classes.clone(),
                object_diameter: diameter,
                start_sigma: config.sensors.model.sigma_gps.max(0.01),
                params: config.agent_params.clone(),
            };
            let agent = Agent::new(agent_config).map_err(|e| ConfigError::field(format!("agents[{id}].region"), e.to_string()))?;
            agents.push(agent);
        }
        let bodies = config
            .agents
            .iter()
            .map(|s| Body {
                kin: AgentKinematics::at(Vec3::from(s.start)),
                prev_position: Vec3::from(s.start),
                accel: Vec3::zeros(),
                gripper: GripperState::new(&config.agent_params.gripper),
                contact: false,
                odom_bias: Vec3::from(config.sensors.model.initial_bias),
            })
            .collect();
        let seed = config.seed;
        let rngs = (0..config.agents.len() as u64)
            .map(|a| {
                let base = 1 + a * 8;
                AgentRngs {
                    odom: stream_rng(seed, base),
                    gps: stream_rng(seed, base + 1),
                    imu: stream_rng(seed, base + 2),
                    render: stream_rng(seed, base + 3),
                    gripper: stream_rng(seed, base + 4),
                }
            })
            .collect();
        let regions: Vec<_> = config.agents.iter().map(|a| a.region.clone()).collect();
        let n = config.agents.len();
        let metrics = Metrics {
            scenario: config.name.clone(),
            seed,
            sim_time: 0.0,
            ticks: 0,
            agents: n,
            objects: config.world.objects.len(),
            objects_delivered: 0,
            pickup_durations: vec![],
            delivery_times: vec![],
            min_pairwise_distance: None,
            coverage_fraction: 0.0,
            detections: 0,
            grasp_attempts: 0,
            grasp_failures: 0,
            grasp_track_errors: vec![],
            hover_events: 0,
            landed_agents: 0,
            final_agent_positions: vec![],
            final_object_positions: vec![],
            messages_sent: 0,
            messages_delivered: 0,
        };
        Ok(Self {
            bus: BroadcastBus::new(config.network.latency, config.network.drop_probability),
            net_rng: stream_rng(seed, 0),
            inboxes: vec![Vec::new(); n],
            coverage: CoverageGrid::new(&regions, 0.5),
            last_outputs: vec![None; n],
            claim_started: vec![0.0; n],
            tick: 0,
            logs: Logs::default(),
            metrics,
            world,
            agents,
            bodies,
            rngs,
            config,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn total_ticks(&self) -> u64 {
        (self.config.duration / self.config.dt).round() as u64
    }

    pub fn true_kinematics(&self, agent: usize) -> AgentKinematics {
        self.bodies[agent].kin
    }

    pub fn finished(&self) -> bool {
        self.tick >= self.total_ticks() || (self.config.stop_when_done && self.world.all_delivered())
    }

    fn every(&self, period: f64) -> u64 {
        ((period / self.config.dt).round() as u64).max(1)
    }

    /// One tick: objects, sensors, agents, broadcast, dynamics, delivery, logs.
    pub fn step(&mut self) {
        let dt = self.config.dt;
        let t = self.time();
        let k = self.tick;
        if k > 0 {
            self.world.step_objects(dt);
        }

        let perceive = k.is_multiple_of(self.config.perception_every as u64);
        let gps_tick = k.is_multiple_of(self.every(1.0 / self.config.sensors.model.gps_rate));
        let broadcast_tick = k.is_multiple_of(self.every(1.0 / self.config.network.rate));
        let discs: Vec<SceneDisc> = self
            .world
            .objects
            .iter()
            .filter(|o| o.status == ObjectStatus::Ground)
            .map(|o| SceneDisc { center: o.position, diameter: o.spec.diameter, rgb: o.spec.rgb })
            .collect();

        let n = self.agents.len();
        let mut outputs = Vec::with_capacity(n);
        for a in 0..n {
            let (odom, fixes, velocity, accel) = self.sense(a, t, k, gps_tick);
            let image = perceive.then(|| self.render(a, &discs));
            let body = &self.bodies[a];
            let inbox = std::mem::take(&mut self.inboxes[a]);
            let input = AgentInput {
                t,
                dt,
                image: image.as_ref(),
                odom: &odom,
                fixes: &fixes,
                velocity,
                accel,
                gripper: GripperReading { flux: body.gripper.flux, contact: body.contact },
                inbox: &inbox,
            };
            let out = self.agents[a].step(&input);
            outputs.push(out);
        }

        if broadcast_tick {
            for agent in &self.agents {
                self.bus.send(agent.id(), t, agent.message(t));
            }
        }

        for (a, out) in outputs.iter().enumerate() {
            self.integrate(a, out, t, dt);
        }

        self.inboxes = self.bus.deliver(t, n, &mut self.net_rng);
        for (a, out) in outputs.iter().enumerate() {
            for e in &out.events {
                match e {
                    EventKind::Claim { .. } => self.claim_started[a] = t,
                    EventKind::Detect { .. } => self.metrics.detections += 1,
                    EventKind::Hover => self.metrics.hover_events += 1,
                    EventKind::GraspFailed => self.metrics.grasp_failures += 1,
                    _ => {}
                }
            }
        }
        if perceive {
            for body in &self.bodies {
                if body.kin.position.z > 1.0 {
                    let cam = body.kin.position + Vec3::new(0.0, 0.0, self.config.agent_params.camera_offset);
                    let fp = camera_footprint(&cam, self.config.agent_params.camera.min_fov());
                    self.coverage.mark(fp.center, fp.half_width);
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (self.bodies[i].kin.position - self.bodies[j].kin.position).norm();
                let m = &mut self.metrics.min_pairwise_distance;
                *m = Some(m.map_or(d, |v: f64| v.min(d)));
            }
        }
        self.log(t, perceive, &outputs);
        self.last_outputs = outputs.into_iter().map(Some).collect();
        self.tick += 1;
    }

    fn sense(&mut self, a: usize, t: f64, k: u64, gps_tick: bool) -> (Vec<OdomReading>, Vec<GpsFix>, Vec3, Vec3) {
        let model = self.config.sensors.model;
        let dt = self.config.dt;
        let body = &mut self.bodies[a];
        let rng = &mut self.rngs[a];
        let mut odom = Vec::new();
        if k > 0 {
            let sub = ((model.odom_rate * dt).round() as usize).max(1);
            let h = dt / sub as f64;
            let step = (body.kin.position - body.prev_position) / sub as f64;
            for j in 0..sub {
                let delta = step + body.odom_bias * h + gaussian3(&mut rng.odom, model.sigma_odom);
                odom.push(OdomReading { stamp: t - dt + (j + 1) as f64 * h, delta, sigma: model.sigma_odom });
                body.odom_bias += gaussian3(&mut rng.odom, model.bias_walk * h.sqrt());
            }
        }
        let mut fixes = Vec::new();
        let in_dropout = self.config.sensors.gps_dropouts.iter().any(|w| t >= w[0] && t < w[1]);
        if gps_tick && !in_dropout {
            let measured = body.kin.position - body.kin.velocity * model.latency;
            let position = measured + gaussian3(&mut rng.gps, model.sigma_gps);
            fixes.push(GpsFix { stamp: t, position, sigma: model.sigma_gps.max(1e-3), valid: true });
        }
        let velocity = body.kin.velocity + gaussian3(&mut rng.imu, self.config.sensors.velocity_sigma);
        let accel = body.accel + gaussian3(&mut rng.imu, self.config.sensors.accel_sigma);
        (odom, fixes, velocity, accel)
    }

    fn render(&mut self, a: usize, discs: &[SceneDisc]) -> Image {
        let p = &self.config.agent_params;
        let pose = Pose::new(Rotation::nadir(), self.bodies[a].kin.position + Vec3::new(0.0, 0.0, p.camera_offset));
        render_scene(discs, &pose, &p.camera, &self.config.sensors.render, &mut self.rngs[a].render)
    }

    fn integrate(&mut self, a: usize, out: &AgentOutput, t: f64, dt: f64) {
        let plant = self.config.plant;
        let wind = self.world.wind;
        let body = &mut self.bodies[a];
        body.prev_position = body.kin.position;
        let before = body.kin.velocity;
        if out.grounded && body.kin.position.z <= 1e-9 {
            body.kin.velocity = Vec3::zeros();
        } else {
            let airborne = body.kin.position.z > 1e-9;
            let w = if airborne { wind } else { Vec3::zeros() };
            let mut next = step_dynamics(&body.kin, &out.accel, &w, dt, &plant);
            if next.position.z < 0.0 {
                next.position.z = 0.0;
                next.velocity.z = next.velocity.z.max(0.0);
            }
            body.kin = next;
        }
        body.accel = (body.kin.velocity - before) / dt;

        let tip = body.kin.position;
        let nearest = self
            .world
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.status == ObjectStatus::Ground && o.spec.ferrous)
            .map(|(i, o)| (i, gripper_gap(&tip, o)))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        let held = body.gripper.attached;
        let gp = &self.config.agent_params.gripper;
        let event = body.gripper.update(out.epm, nearest, out.remagnetize, dt, gp, &mut self.rngs[a].gripper);
        body.contact = event.contact;

        if event.contact {
            self.metrics.grasp_attempts += 1;
            if let (Some(target), Some((i, _))) = (out.target, nearest) {
                let est = self.agents[a].filter.position();
                let obj = self.world.objects[i].position;
                let err = ((target.xy() - est.xy()) - (obj.xy() - tip.xy())).norm();
                self.metrics.grasp_track_errors.push(err);
            }
        }
        if let Some(i) = event.attached {
            self.world.objects[i].status = ObjectStatus::Attached(a);
        }
        if let Some(i) = held.filter(|_| self.bodies[a].gripper.attached.is_none()) {
            let o = &mut self.world.objects[i];
            o.position = Vec3::new(tip.x, tip.y, 0.0);
            o.velocity = Vec3::zeros();
            if self.world.drop_zone.contains(&o.position, 0.0) {
                o.status = ObjectStatus::Delivered;
                o.delivered_at = Some(t);
                self.metrics.delivery_times.push(t);
                self.metrics.pickup_durations.push(t - self.claim_started[a]);
                self.logs.events.row(t, format_args!("{a},delivered,object {}", o.spec.id));
            } else {
                o.status = ObjectStatus::Ground;
                self.logs.events.row(t, format_args!("{a},dropped,object {}", o.spec.id));
            }
        }
        if let Some(i) = self.bodies[a].gripper.attached {
            let o = &mut self.world.objects[i];
            o.position = tip;
            o.velocity = Vec3::zeros();
        }
    }

    fn log(&mut self, t: f64, perceive: bool, outputs: &[AgentOutput]) {
        for (a, (body, agent)) in self.bodies.iter().zip(&self.agents).enumerate() {
            let (p, v) = (body.kin.position, body.kin.velocity);
            self.logs.poses.row(t, format_args!("{a},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}", p.x, p.y, p.z, v.x, v.y, v.z));
            let (e, b) = (agent.filter.position(), agent.filter.bias());
            self.logs.estimates.row(t, format_args!("{a},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}", e.x, e.y, e.z, b.x, b.y, b.z));
            let r = &outputs[a].reference;
            self.logs.references.row(
                t,
                format_args!(
                    "{a},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    agent.state.name(),
                    r.position.x,
                    r.position.y,
                    r.position.z,
                    r.velocity.x,
                    r.velocity.y,
                    r.velocity.z
                ),
            );
            for ev in &outputs[a].events {
                self.logs.events.row(t, format_args!("{a},{ev}"));
            }
            if perceive {
                for tr in agent.tracker.tracks() {
                    let (p, v) = (tr.position(), tr.velocity());
                    self.logs.tracks.row(
                        t,
                        format_args!(
                            "{a},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                            tr.id, tr.color.0, p.x, p.y, p.z, v.x, v.y, tr.confirmed as u8
                        ),
                    );
                }
            }
        }
        if perceive {
            for o in &self.world.objects {
                let p = o.position;
                self.logs.objects.row(t, format_args!("{},{},{:.6},{:.6},{:.6}", o.spec.id, o.status.label(), p.x, p.y, p.z));
            }
        }
    }

    pub fn metrics(&self) -> Metrics {
        let mut m = self.metrics.clone();
        m.sim_time = self.time();
        m.ticks = self.tick;
        m.objects_delivered = self.world.delivered();
        m.coverage_fraction = self.coverage.fraction();
        m.landed_agents = self.agents.iter().filter(|a| a.state == crate::agent::FsmState::Grounded).count();
        m.final_agent_positions = self.bodies.iter().map(|b| b.kin.position.into()).collect();
        m.final_object_positions = self.world.objects.iter().map(|o| o.position.into()).collect();
        let (sent, delivered) = self.bus.counts();
        m.messages_sent = sent;
        m.messages_delivered = delivered;
        m
    }

    pub fn run_to_end(&mut self) -> Metrics {
        while !self.finished() {
            self.step();
        }
        self.metrics()
    }
}

/// Output files of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub metrics: PathBuf,
    pub files: Vec<PathBuf>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Runs a mission scenario to completion and optionally writes its logs.
pub fn run(config: ScenarioConfig, out: Option<&Path>) -> Result<(Metrics, Option<RunOutputs>), SimError> {
    let mut sim = Simulation::new(config)?;
    let metrics = sim.run_to_end();
    let Some(dir) = out else {
        return Ok((metrics, None));
    };
    let mut files = sim.logs.write_all(dir)?;
    let plans: String = std::iter::once("agent,x,y,z\n".to_string())
        .chain(sim.agents.iter().flat_map(|a| {
            a.plan.waypoints.iter().map(move |w| format!("{},{:.6},{:.6},{:.6}\n", a.id(), w.x, w.y, w.z))
        }))
        .collect();
    let plan_path = dir.join("plans.csv");
    std::fs::write(&plan_path, plans)?;
    files.push(plan_path);
    let metrics_path = dir.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    Ok((metrics, Some(RunOutputs { metrics: metrics_path, files })))
}

/// Result of any scenario kind, serialized as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Mission(Metrics),
    FusionEval(experiments::FusionReport),
    DetectionMap(experiments::DetectionMapReport),
}

/// Dispatches on the scenario kind and writes all outputs under `out`.
pub fn run_scenario(scenario: Scenario, out: &Path) -> Result<Report, SimError> {
    std::fs::create_dir_all(out)?;
    match scenario {
        Scenario::Mission(c) => Ok(Report::Mission(run(c, Some(out))?.0)),
        Scenario::FusionEval(c) => {
            let report = experiments::fusion_eval(&c)?;
            experiments::write_fusion_outputs(&c, &report, out)?;
            Ok(Report::FusionEval(report))
        }
        Scenario::DetectionMap(c) => {
            let report = experiments::detection_map(&c)?;
            std::fs::write(out.join("detection_map.csv"), experiments::detection_map_csv(&report))?;
            write_json(&out.join("metrics.json"), &report)?;
            Ok(Report::DetectionMap(report))
        }
    }
}
