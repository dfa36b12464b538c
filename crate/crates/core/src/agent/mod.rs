//! The decentralized mission state machine and its hardware models.
//!
//! An [`Agent`] sees only its own sensor readings and the broadcast messages
//! delivered to it; everything else about the world is hidden behind
//! [`AgentInput`].

mod battery;
mod gripper;
mod servo;

pub use battery::{battery_step, Battery, BatteryParams};
pub use gripper::{flux, GripperEvent, GripperParams, GripperState};
pub use servo::{check_ball, cone_height, inside_cone, servo_reference, ServoParams, ServoPhase};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::control::{
    avoid, carrot, track_reference, AgentKinematics, AvoidanceParams, DisturbanceObserver, ObstacleState, ReferencePoint,
    TrackingGains,
};
use crate::coverage::{plan_sweep, ConvexRegion, CoverageError, SweepParams, SweepPlan, Vec2};
use crate::estimation::{FusionFilter, FusionParams, GpsFix, OdomReading};
use crate::geometry::{CameraIntrinsics, Pose, Rotation, Vec3};
use crate::tracking::{KfParams, Track, Tracker};
use crate::vision::{detect_objects, ColorClass, DetectorParams, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropZone {
    pub center: [f64; 2],
    pub radius: f64,
}

impl DropZone {
    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        (p.xy() - Vec2::from(self.center)).norm() <= self.radius + margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionParams {
    pub search_altitude: f64,
    pub transit_altitude: f64,
    pub sweep_overlap: f64,
    pub cruise_speed: f64,
    pub waypoint_tolerance: f64,
    pub claims_enabled: bool,
    pub claim_radius: f64,
    pub claim_timeout: f64,
    /// Tracks this far outside the own region are still eligible, m.
    pub region_margin: f64,
    /// Climb above the grasp height before checking the hold, m.
    pub verify_height: f64,
    /// Release once within this fraction of the drop-zone radius.
    pub release_fraction: f64,
}

impl Default for MissionParams {
    fn default() -> Self {
        Self {
            search_altitude: 5.0,
            transit_altitude: 4.0,
            sweep_overlap: 0.2,
            cruise_speed: 2.0,
            waypoint_tolerance: 0.5,
            claims_enabled: true,
            claim_radius: 1.0,
            claim_timeout: 2.0,
            region_margin: 1.0,
            verify_height: 0.6,
            release_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverParams {
    pub beta: f64,
    pub cap: f64,
    pub enabled: bool,
}

impl Default for ObserverParams {
    fn default() -> Self {
        Self { beta: 1.0, cap: 2.0, enabled: true }
    }
}

/// Tunables shared by every agent of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentParams {
    pub mission: MissionParams,
    pub servo: ServoParams,
    pub gains: TrackingGains,
    pub avoidance: AvoidanceParams,
    pub observer: ObserverParams,
    pub fusion: FusionParams,
    pub kf: KfParams,
    pub detector: DetectorParams,
    pub gripper: GripperParams,
    pub battery: BatteryParams,
    pub camera: CameraIntrinsics,
    /// Camera height above the gripper tip, m.
    pub camera_offset: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            mission: MissionParams::default(),
            servo: ServoParams::default(),
            gains: TrackingGains::default(),
            avoidance: AvoidanceParams::default(),
            observer: ObserverParams::default(),
            fusion: FusionParams::default(),
            kf: KfParams::default(),
            detector: DetectorParams::default(),
            gripper: GripperParams::default(),
            battery: BatteryParams::default(),
            camera: CameraIntrinsics::centered(200.0, 320, 240).expect("valid default camera"),
            camera_offset: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub id: usize,
    pub start: Vec3,
    pub region: ConvexRegion,
    pub drop_zone: DropZone,
    pub classes: Vec<ColorClass>,
    pub object_diameter: f64,
    /// Standard deviation of the initial position knowledge, m.
    pub start_sigma: f64,
    pub params: AgentParams,
}

impl AgentConfig {
    pub fn sweep_params(&self) -> SweepParams {
        SweepParams {
            altitude: self.params.mission.search_altitude,
            fov: self.params.camera.min_fov(),
            overlap: self.params.mission.sweep_overlap,
            heading: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FsmState {
    TakeOff,
    Explore { cursor: usize },
    Servo { track: u64, phase: ServoPhase },
    Deliver { verified: bool },
    ReturnToSearch,
    Land,
    Grounded,
}

impl FsmState {
    pub fn name(&self) -> &'static str {
        match self {
            FsmState::TakeOff => "take_off",
            FsmState::Explore { .. } => "explore",
            FsmState::Servo { phase: ServoPhase::ConeDescent, .. } => "servo_cone",
            FsmState::Servo { phase: ServoPhase::CenterBall, .. } => "servo_ball",
            FsmState::Servo { phase: ServoPhase::MagnetApproach, .. } => "servo_approach",
            FsmState::Servo { phase: ServoPhase::Grasped, .. } => "servo_grasped",
            FsmState::Deliver { .. } => "deliver",
            FsmState::ReturnToSearch => "return_to_search",
            FsmState::Land => "land",
            FsmState::Grounded => "grounded",
        }
    }

    pub fn is_servo(&self) -> bool {
        matches!(self, FsmState::Servo { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    Transition { from: &'static str, to: &'static str },
    Detect { track: u64 },
    Claim { track: u64 },
    ClaimYield { track: u64 },
    TrackLost { track: u64 },
    MagnetOn,
    ApproachAbort,
    Contact,
    Grasp,
    GraspFailed,
    Release,
    LowBattery,
    Land,
    Hover,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Transition { from, to } => write!(f, "transition,{from}->{to}"),
            EventKind::Detect { track } => write!(f, "detect,track {track}"),
            EventKind::Claim { track } => write!(f, "claim,track {track}"),
            EventKind::ClaimYield { track } => write!(f, "claim_yield,track {track}"),
            EventKind::TrackLost { track } => write!(f, "track_lost,track {track}"),
            EventKind::MagnetOn => f.write_str("magnet_on,"),
            EventKind::ApproachAbort => f.write_str("approach_abort,"),
            EventKind::Contact => f.write_str("contact,"),
            EventKind::Grasp => f.write_str("grasp,"),
            EventKind::GraspFailed => f.write_str("grasp_failed,"),
            EventKind::Release => f.write_str("release,"),
            EventKind::LowBattery => f.write_str("low_battery,"),
            EventKind::Land => f.write_str("land,"),
            EventKind::Hover => f.write_str("hover,"),
        }
    }
}

/// State broadcast to every other agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub sender: usize,
    pub stamp: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub servoing: bool,
    /// World position of the object this agent is servoing on.
    pub claim: Option<Vec3>,
}

impl AgentMessage {
    /// True when `self` outranks an agent with the given flag and id.
    pub fn outranks(&self, servoing: bool, id: usize) -> bool {
        (self.servoing && !servoing) || (self.servoing == servoing && self.sender < id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GripperReading {
    pub flux: f64,
    pub contact: bool,
}

/// Everything an agent may observe during one tick.
#[derive(Debug, Clone, Copy)]
pub struct AgentInput<'a> {
    pub t: f64,
    pub dt: f64,
    pub image: Option<&'a Image>,
    pub odom: &'a [OdomReading],
    pub fixes: &'a [GpsFix],
    /// Body velocity from the odometry front end, world frame.
    pub velocity: Vec3,
    /// Accelerometer reading over the previous tick.
    pub accel: Vec3,
    pub gripper: GripperReading,
    pub inbox: &'a [AgentMessage],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutput {
    pub accel: Vec3,
    pub reference: ReferencePoint,
    pub epm: bool,
    pub remagnetize: bool,
    pub grounded: bool,
    pub hovering: bool,
    /// Servo target position, own estimated frame.
    pub target: Option<Vec3>,
    pub events: Vec<EventKind>,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub plan: SweepPlan,
    pub state: FsmState,
    pub tracker: Tracker,
    pub filter: FusionFilter,
    pub observer: DisturbanceObserver,
    pub battery: Battery,
    neighbors: BTreeMap<usize, AgentMessage>,
    velocity: Vec3,
    last_command: Vec3,
    last_perception: Option<f64>,
    reported: BTreeSet<u64>,
    resume_cursor: usize,
    epm: bool,
    last_pulse: f64,
    approach_start: f64,
    grasp_height: f64,
    grasp_xy: Vec2,
    hovering: bool,
}

impl Agent {
    pub fn new(config: AgentConfig) -> Result<Self, CoverageError> {
        let plan = plan_sweep(&config.region, &config.sweep_params(), config.id)?;
        let p = &config.params;
        let start_fix = GpsFix { stamp: 0.0, position: config.start, sigma: config.start_sigma, valid: true };
        let filter = FusionFilter::init(&start_fix, 0.0, p.fusion).expect("start fix is valid");
        let mut observer = DisturbanceObserver::new(p.observer.beta, p.observer.cap);
        observer.enabled = p.observer.enabled;
        Ok(Self {
            plan,
            state: FsmState::TakeOff,
            tracker: Tracker::new(p.kf),
            filter,
            observer,
            battery: Battery::new(p.battery),
            neighbors: BTreeMap::new(),
            velocity: Vec3::zeros(),
            last_command: Vec3::zeros(),
            last_perception: None,
            reported: BTreeSet::new(),
            resume_cursor: 0,
            epm: false,
            last_pulse: 0.0,
            approach_start: 0.0,
            grasp_height: 0.0,
            grasp_xy: Vec2::zeros(),
            hovering: false,
            config,
        })
    }

    pub fn id(&self) -> usize {
        self.config.id
    }

    /// Own estimated position and measured velocity.
    pub fn kinematics(&self) -> AgentKinematics {
        AgentKinematics { position: self.filter.position(), velocity: self.velocity }
    }

    pub fn camera_pose(&self) -> Pose {
        Pose::new(Rotation::nadir(), self.filter.position() + Vec3::new(0.0, 0.0, self.config.params.camera_offset))
    }

    fn servo_target(&self) -> Option<&Track> {
        match self.state {
            FsmState::Servo { track, .. } => self.tracker.get(track),
            _ => None,
        }
    }

    pub fn message(&self, t: f64) -> AgentMessage {
        let claim = if self.config.params.mission.claims_enabled {
            self.servo_target().map(|tr| tr.position())
        } else {
            None
        };
        AgentMessage {
            sender: self.id(),
            stamp: t,
            position: self.filter.position(),
            velocity: self.velocity,
            servoing: self.state.is_servo(),
            claim,
        }
    }

    pub fn neighbor(&self, id: usize) -> Option<&AgentMessage> {
        self.neighbors.get(&id)
    }

    pub fn step(&mut self, input: &AgentInput<'_>) -> AgentOutput {
        let mut events = Vec::new();
        self.estimate(input);
        if let Some(img) = input.image {
            self.perceive(img, input.t, &mut events);
        }
        let own_id = self.id();
        for m in input.inbox.iter().filter(|m| m.sender != own_id) {
            if self.neighbors.get(&m.sender).is_none_or(|old| old.stamp <= m.stamp) {
                self.neighbors.insert(m.sender, *m);
            }
        }
        let grounded = self.state == FsmState::Grounded;
        self.battery.step(input.dt, if grounded { 0.0 } else { 1.0 });

        let before = self.state;
        let (reference, remagnetize) = self.fsm_step(input, &mut events);
        if self.state != before {
            events.push(EventKind::Transition { from: before.name(), to: self.state.name() });
        }
        let target = self.servo_target().map(|t| t.position());

        if self.state == FsmState::Grounded {
            self.last_command = Vec3::zeros();
            return AgentOutput {
                accel: Vec3::zeros(),
                reference,
                epm: self.epm,
                remagnetize: false,
                grounded: true,
                hovering: false,
                target,
                events,
            };
        }
        let accel = self.control(&reference, input, &mut events);
        AgentOutput { accel, reference, epm: self.epm, remagnetize, grounded: false, hovering: self.hovering, target, events }
    }

    /// Tracks are re-anchored by whatever part of the estimate change the velocity sensor does not explain,
    /// so object offsets relative to the airframe stay free of estimator jitter.
    fn estimate(&mut self, input: &AgentInput<'_>) {
        self.velocity = input.velocity;
        let before = self.filter.position();
        let mut fixes = input.fixes.iter().peekable();
        for o in input.odom {
            if self.filter.propagate(o).is_err() {
                continue;
            }
            while let Some(f) = fixes.next_if(|f| f.stamp <= o.stamp + 1e-9) {
                let _ = self.filter.correct(f);
            }
        }
        for f in fixes {
            let _ = self.filter.correct(f);
        }
        if !input.odom.is_empty() || !input.fixes.is_empty() {
            let jump = self.filter.position() - before - input.velocity * input.dt;
            self.tracker.shift(&jump);
        }
    }

    fn perceive(&mut self, img: &Image, t: f64, events: &mut Vec<EventKind>) {
        let p = &self.config.params;
        let (detections, _) = detect_objects(img, &self.camera_pose(), &p.camera, &self.config.classes, self.config.object_diameter, t, &p.detector);
        let dt = self.last_perception.map_or(0.0, |last| t - last);
        self.last_perception = Some(t);
        self.tracker.step(&detections, dt);
        for tr in self.tracker.confirmed() {
            if self.reported.insert(tr.id) {
                events.push(EventKind::Detect { track: tr.id });
            }
        }
    }

    fn claimed_by_other(&self, position: &Vec3, t: f64, below_id: Option<usize>) -> bool {
        let m = &self.config.params.mission;
        if !m.claims_enabled {
            return false;
        }
        self.neighbors.values().any(|msg| {
            below_id.is_none_or(|id| msg.sender < id)
                && t - msg.stamp <= m.claim_timeout
                && msg.claim.is_some_and(|c| (c.xy() - position.xy()).norm() < m.claim_radius)
        })
    }

    /// Nearest eligible confirmed track.
    fn pick_target(&self, t: f64) -> Option<u64> {
        let m = &self.config.params.mission;
        let own = self.filter.position();
        self.tracker
            .confirmed()
            .filter(|tr| {
                let p = tr.position();
                self.config.region.distance(&p.xy()) <= m.region_margin
                    && !self.config.drop_zone.contains(&p, 1.0)
                    && !self.claimed_by_other(&p, t, None)
            })
            .min_by(|a, b| {
                let da = (a.position().xy() - own.xy()).norm();
                let db = (b.position().xy() - own.xy()).norm();
                da.total_cmp(&db).then(a.id.cmp(&b.id))
            })
            .map(|tr| tr.id)
    }

    fn start_servo(&mut self, track: u64, events: &mut Vec<EventKind>) {
        self.state = FsmState::Servo { track, phase: ServoPhase::ConeDescent };
        events.push(EventKind::Claim { track });
    }

    fn abandon(&mut self) {
        self.epm = false;
        self.state = FsmState::ReturnToSearch;
    }

    fn fsm_step(&mut self, input: &AgentInput<'_>, events: &mut Vec<EventKind>) -> (ReferencePoint, bool) {
        let t = input.t;
        let own = self.kinematics();
        let mission = self.config.params.mission;
        let servo = self.config.params.servo;
        let tol = mission.waypoint_tolerance;
        let mut remagnetize = false;

        if self.battery.low() && !matches!(self.state, FsmState::Deliver { .. } | FsmState::Land | FsmState::Grounded) {
            events.push(EventKind::LowBattery);
            self.epm = false;
            self.state = FsmState::Land;
        }

        if let FsmState::Explore { .. } | FsmState::ReturnToSearch = self.state {
            if let Some(track) = self.pick_target(t) {
                if let FsmState::Explore { cursor } = self.state {
                    self.resume_cursor = cursor;
                }
                self.start_servo(track, events);
            }
        }

        match self.state {
            FsmState::TakeOff => {
                let goal = Vec3::new(self.config.start.x, self.config.start.y, mission.search_altitude);
                if own.position.z >= mission.search_altitude - tol {
                    self.state = FsmState::Explore { cursor: 0 };
                }
                (ReferencePoint::hold(goal), false)
            }
            FsmState::Explore { mut cursor } => {
                if self.plan.waypoints.is_empty() {
                    return (ReferencePoint::hold(own.position), false);
                }
                if (self.plan.waypoints[cursor] - own.position).norm() < tol {
                    cursor = (cursor + 1) % self.plan.waypoints.len();
                    self.state = FsmState::Explore { cursor };
                }
                (ReferencePoint::hold(self.plan.waypoints[cursor]), false)
            }
            FsmState::ReturnToSearch => {
                let goal = self.plan.waypoints.get(self.resume_cursor).copied().unwrap_or(own.position);
                if (goal - own.position).norm() < tol {
                    self.state = FsmState::Explore { cursor: self.resume_cursor };
                }
                (ReferencePoint::hold(goal), false)
            }
            FsmState::Servo { track, mut phase } => {
                let Some(tr) = self.tracker.get(track).filter(|tr| tr.confirmed).cloned() else {
                    events.push(EventKind::TrackLost { track });
                    self.abandon();
                    return (ReferencePoint::hold(own.position), false);
                };
                if phase != ServoPhase::Grasped && self.claimed_by_other(&tr.position(), t, Some(self.id())) {
                    events.push(EventKind::ClaimYield { track });
                    self.abandon();
                    return (ReferencePoint::hold(own.position), false);
                }
                match phase {
                    ServoPhase::ConeDescent => {
                        if own.position.z - (tr.position().z + servo.ball_height) < 0.15 && inside_cone(&own, &tr, &servo) {
                            phase = ServoPhase::CenterBall;
                        }
                    }
                    ServoPhase::CenterBall => {
                        if servo.engage_magnet && check_ball(&own, &tr, &servo) {
                            self.epm = true;
                            remagnetize = true;
                            self.last_pulse = t;
                            self.approach_start = t;
                            events.push(EventKind::MagnetOn);
                            phase = ServoPhase::MagnetApproach;
                        }
                    }
                    ServoPhase::MagnetApproach => {
                        let offset = (own.position.xy() - tr.position().xy()).norm();
                        if input.gripper.contact {
                            events.push(EventKind::Contact);
                            phase = ServoPhase::Grasped;
                        } else if t - self.approach_start > servo.approach_timeout || offset > 2.0 * servo.ball_radius {
                            events.push(EventKind::ApproachAbort);
                            self.epm = false;
                            phase = ServoPhase::ConeDescent;
                        } else if t - self.last_pulse >= servo.remagnetize_period {
                            remagnetize = true;
                            self.last_pulse = t;
                        }
                    }
                    ServoPhase::Grasped => {
                        events.push(EventKind::Grasp);
                        self.grasp_height = own.position.z;
                        self.grasp_xy = own.position.xy();
                        self.state = FsmState::Deliver { verified: false };
                        let goal = Vec3::new(self.grasp_xy.x, self.grasp_xy.y, mission.transit_altitude);
                        return (ReferencePoint::hold(goal), false);
                    }
                }
                self.state = FsmState::Servo { track, phase };
                (servo_reference(&tr, &own, phase, &servo), remagnetize)
            }
            FsmState::Deliver { verified: false } => {
                let goal = Vec3::new(self.grasp_xy.x, self.grasp_xy.y, mission.transit_altitude);
                if own.position.z >= self.grasp_height + mission.verify_height {
                    let g = &self.config.params.gripper;
                    if input.gripper.flux - g.base > g.contact_threshold {
                        self.state = FsmState::Deliver { verified: true };
                    } else {
                        events.push(EventKind::GraspFailed);
                        self.abandon();
                    }
                }
                (ReferencePoint::hold(goal), false)
            }
            FsmState::Deliver { verified: true } => {
                let dz = self.config.drop_zone;
                let goal = Vec3::new(dz.center[0], dz.center[1], mission.transit_altitude);
                if (own.position.xy() - goal.xy()).norm() < dz.radius * mission.release_fraction {
                    events.push(EventKind::Release);
                    self.abandon();
                }
                (ReferencePoint::hold(goal), false)
            }
            FsmState::Land => {
                let home = self.config.start.xy();
                let z = if (own.position.xy() - home).norm() > tol {
                    own.position.z
                } else {
                    (own.position.z - servo.descent_step).max(0.0)
                };
                if own.position.z < 0.15 && own.velocity.norm() < 0.2 {
                    events.push(EventKind::Land);
                    self.state = FsmState::Grounded;
                }
                (ReferencePoint::hold(Vec3::new(home.x, home.y, z)), false)
            }
            FsmState::Grounded => (ReferencePoint::hold(own.position), false),
        }
    }

    /// Obstacles this agent must yield to: higher-priority neighbors that
    /// are, or might by now be, inside the soft radius.
    fn obstacles(&self, t: f64) -> Vec<ObstacleState> {
        let av = &self.config.params.avoidance;
        let own = self.filter.position();
        let servoing = self.state.is_servo();
        self.neighbors
            .values()
            .filter(|m| m.outranks(servoing, self.id()))
            .filter(|m| {
                let age = (t - m.stamp).max(0.0);
                (m.position - own).norm() - 2.0 * av.v_max * age < av.d_soft
            })
            .map(|m| ObstacleState { id: m.sender, position: m.position, velocity: m.velocity, stamp: m.stamp })
            .collect()
    }

    fn control(&mut self, reference: &ReferencePoint, input: &AgentInput<'_>, events: &mut Vec<EventKind>) -> Vec3 {
        let p = &self.config.params;
        let own = self.kinematics();
        let d = self.observer.update(&input.accel, &self.last_command, input.dt);
        let max_error = p.mission.cruise_speed * p.gains.kv / p.gains.kp;
        let desired = track_reference(&own, &carrot(&own.position, reference, max_error), &d, &p.gains);
        let obstacles = self.obstacles(input.t);
        let accel = match avoid(&desired, &own, &obstacles, input.t, input.dt, &p.avoidance) {
            Ok(a) => {
                self.hovering = false;
                a
            }
            Err(_) => {
                if !self.hovering {
                    events.push(EventKind::Hover);
                }
                self.hovering = true;
                track_reference(&own, &ReferencePoint::hold(own.position), &d, &p.gains)
            }
        };
        self.last_command = accel;
        accel
    }
}
