//! Reference tracking with disturbance compensation, reactive collision
//! avoidance, and the point-mass plant used by the simulator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("obstacle {id} state is {age:.3} s old")]
    StaleObstacle { id: usize, age: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentKinematics {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl AgentKinematics {
    pub fn at(position: Vec3) -> Self {
        Self { position, velocity: Vec3::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl ReferencePoint {
    pub fn hold(position: Vec3) -> Self {
        Self { position, velocity: Vec3::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub id: usize,
    pub position: Vec3,
    pub velocity: Vec3,
    pub stamp: f64,
}

impl ObstacleState {
    /// Constant-velocity extrapolation to time `t`.
    pub fn position_at(&self, t: f64) -> Vec3 {
        self.position + self.velocity * (t - self.stamp).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingGains {
    pub kp: f64,
    pub kv: f64,
    pub a_max: f64,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self { kp: 4.0, kv: 4.0, a_max: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AvoidanceParams {
    pub d_min: f64,
    pub d_soft: f64,
    pub k_rep: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Deceleration budget of the hard constraint, as a fraction of `a_max`.
    pub brake_fraction: f64,
    pub staleness: f64,
}

impl Default for AvoidanceParams {
    fn default() -> Self {
        Self { d_min: 1.0, d_soft: 2.5, k_rep: 9.0, v_max: 3.0, a_max: 4.0, brake_fraction: 0.5, staleness: 0.5 }
    }
}

impl AvoidanceParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.d_min > 0.0 && self.d_min < self.d_soft) {
            return Err("avoidance radii must satisfy 0 < d_min < d_soft");
        }
        if !(self.k_rep > 0.0 && self.v_max > 0.0 && self.a_max > 0.0 && self.staleness > 0.0) {
            return Err("avoidance gains must be positive");
        }
        if !(self.brake_fraction > 0.0 && self.brake_fraction <= 1.0) {
            return Err("brake_fraction must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    pub drag: f64,
    pub v_max: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self { drag: 0.3, v_max: 3.0 }
    }
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max && n > 0.0 {
        v * (max / n)
    } else {
        v
    }
}

/// PD acceleration toward `reference`, minus the disturbance estimate.
pub fn track_reference(state: &AgentKinematics, reference: &ReferencePoint, disturbance: &Vec3, gains: &TrackingGains) -> Vec3 {
    let a = (reference.position - state.position) * gains.kp + (reference.velocity - state.velocity) * gains.kv - disturbance;
    clamp_norm(a, gains.a_max)
}

/// Moves `reference` toward `position` so that the position error never
/// exceeds `max_error`, which bounds the steady approach speed at
/// `max_error * kp / kv`.
pub fn carrot(position: &Vec3, reference: &ReferencePoint, max_error: f64) -> ReferencePoint {
    ReferencePoint {
        position: position + clamp_norm(reference.position - position, max_error),
        velocity: reference.velocity,
    }
}

/// First-order estimate of the unmodeled acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceObserver {
    pub estimate: Vec3,
    pub beta: f64,
    pub cap: f64,
    pub enabled: bool,
}

impl Default for DisturbanceObserver {
    fn default() -> Self {
        Self::new(1.0, 2.0)
    }
}

impl DisturbanceObserver {
    pub fn new(beta: f64, cap: f64) -> Self {
        Self { estimate: Vec3::zeros(), beta, cap, enabled: true }
    }

    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn update(&mut self, measured: &Vec3, commanded: &Vec3, dt: f64) -> Vec3 {
        if self.enabled && dt > 0.0 {
            let d = self.estimate + ((measured - commanded) - self.estimate) * (self.beta * dt);
            self.estimate = clamp_norm(d, self.cap);
        }
        self.estimate
    }
}

pub fn estimate_disturbance(observer: &DisturbanceObserver, measured: &Vec3, commanded: &Vec3, dt: f64) -> DisturbanceObserver {
    let mut next = *observer;
    next.update(measured, commanded, dt);
    next
}

/// Adjusts `desired` so the agent keeps clear of `obstacles`.
///
/// Each obstacle within `d_soft` adds a repulsion along the separation
/// direction. The hard constraint then bounds the closing speed by the
/// speed from which `brake_fraction * a_max` can still stop before `d_min`,
/// and pushes straight out at full acceleration once inside `d_min`.
pub fn avoid(
    desired: &Vec3,
    state: &AgentKinematics,
    obstacles: &[ObstacleState],
    now: f64,
    dt: f64,
    params: &AvoidanceParams,
) -> Result<Vec3, ControlError> {
    if let Some(o) = obstacles.iter().find(|o| now - o.stamp > params.staleness) {
        return Err(ControlError::StaleObstacle { id: o.id, age: now - o.stamp });
    }
    let mut a = *desired;
    let mut constraints: Vec<(Vec3, f64)> = Vec::new();
    for o in obstacles {
        let r = state.position - o.position_at(now);
        let d = r.norm();
        if d >= params.d_soft {
            continue;
        }
        let n = if d > 1e-9 { r / d } else { fallback_normal(o.id) };
        a += n * (params.k_rep * (1.0 / d.max(1e-3) - 1.0 / params.d_soft));

        let closing = -(state.velocity - o.velocity).dot(&n);
        let lower = if d <= params.d_min {
            params.a_max
        } else {
            let allowed = (2.0 * params.brake_fraction * params.a_max * (d - params.d_min)).sqrt();
            ((closing - allowed) / dt).min(params.a_max)
        };
        constraints.push((n, lower));
    }
    if constraints.is_empty() {
        return Ok(a);
    }
    a = clamp_norm(a, params.a_max);
    for _ in 0..3 {
        for &(n, lower) in &constraints {
            let an = a.dot(&n);
            if an < lower {
                a += n * (lower - an);
                a = clamp_keeping_normal(a, &n, params.a_max);
            }
        }
    }
    Ok(a)
}

/// Deterministic separation direction for coincident agents.
fn fallback_normal(other: usize) -> Vec3 {
    let angle = other as f64 * 2.399_963;
    Vec3::new(angle.cos(), angle.sin(), 0.0)
}

/// Norm clamp that sacrifices the tangential part first.
fn clamp_keeping_normal(a: Vec3, n: &Vec3, max: f64) -> Vec3 {
    if a.norm() <= max {
        return a;
    }
    let an = a.dot(n).clamp(-max, max);
    let t = a - n * a.dot(n);
    let room = (max * max - an * an).max(0.0).sqrt();
    n * an + clamp_norm(t, room)
}

/// Double integrator with linear drag and a speed limit.
pub fn step_dynamics(state: &AgentKinematics, accel: &Vec3, wind: &Vec3, dt: f64, plant: &PlantParams) -> AgentKinematics {
    let v = state.velocity + (accel + wind - state.velocity * plant.drag) * dt;
    let v = clamp_norm(v, plant.v_max);
    AgentKinematics { position: state.position + v * dt, velocity: v }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_drag() -> PlantParams {
        PlantParams { drag: 0.0, v_max: 100.0 }
    }

    #[test]
    fn equilibrium_and_cancellation() {
        let s = AgentKinematics::at(Vec3::new(1.0, 2.0, 3.0));
        let r = ReferencePoint::hold(s.position);
        let g = TrackingGains::default();
        assert_eq!(track_reference(&s, &r, &Vec3::zeros(), &g), Vec3::zeros());
        assert_eq!(track_reference(&s, &r, &Vec3::new(0.0, 1.0, 0.0), &g), Vec3::new(0.0, -1.0, 0.0));
    }

    #[test]
    fn step_response_is_well_damped() {
        let g = TrackingGains::default();
        let r = ReferencePoint::hold(Vec3::new(1.0, 0.0, 0.0));
        let mut s = AgentKinematics::default();
        let dt = 1e-3;
        let mut peak: f64 = 0.0;
        let mut settled_at = None;
        for i in 0..5000 {
            let a = track_reference(&s, &r, &Vec3::zeros(), &g);
            s = step_dynamics(&s, &a, &Vec3::zeros(), dt, &no_drag());
            peak = peak.max(s.position.x);
            let t = (i + 1) as f64 * dt;
            if (s.position.x - 1.0).abs() > 0.02 {
                settled_at = None;
            } else if settled_at.is_none() {
                settled_at = Some(t);
            }
        }
        assert!(peak <= 1.05, "overshoot {peak}");
        assert!(settled_at.unwrap() < 3.0);
    }

    #[test]
    fn carrot_limits_error() {
        let r = ReferencePoint::hold(Vec3::new(10.0, 0.0, 0.0));
        let c = carrot(&Vec3::zeros(), &r, 2.0);
        assert_eq!(c.position, Vec3::new(2.0, 0.0, 0.0));
        let near = carrot(&Vec3::new(9.5, 0.0, 0.0), &r, 2.0);
        assert_eq!(near.position, r.position);
    }

    #[test]
    fn observer_behaviour() {
        let mut o = DisturbanceObserver::default();
        let a = Vec3::new(0.3, -0.2, 0.1);
        for _ in 0..100 {
            o.update(&a, &a, 0.02);
        }
        assert_eq!(o.estimate, Vec3::zeros());

        let w = Vec3::new(1.0, 0.0, 0.0);
        let mut o = DisturbanceObserver::new(1.0, 2.0);
        let dt = 0.001;
        for _ in 0..(5.0 / dt) as usize {
            o.update(&w, &Vec3::zeros(), dt);
        }
        // 1 - exp(-5) = 0.9933
        assert!((o.estimate.x - 1.0).abs() < 0.02);

        let mut o = DisturbanceObserver::new(1.0, 2.0);
        for _ in 0..10_000 {
            o.update(&Vec3::new(10.0, 0.0, 0.0), &Vec3::zeros(), 0.01);
        }
        assert!((o.estimate.norm() - 2.0).abs() < 1e-12);
    }

    fn hold_under_wind(observer: DisturbanceObserver) -> f64 {
        let g = TrackingGains::default();
        let plant = PlantParams::default();
        let r = ReferencePoint::hold(Vec3::zeros());
        let wind = Vec3::new(1.2, -0.5, 0.0);
        let mut o = observer;
        let mut s = AgentKinematics::default();
        let dt = 0.02;
        for _ in 0..1000 {
            let a = track_reference(&s, &r, &o.estimate, &g);
            let next = step_dynamics(&s, &a, &wind, dt, &plant);
            let measured = (next.velocity - s.velocity) / dt;
            o.update(&measured, &a, dt);
            s = next;
        }
        s.position.norm()
    }

    #[test]
    fn observer_removes_steady_state_offset() {
        let with = hold_under_wind(DisturbanceObserver::default());
        let without = hold_under_wind(DisturbanceObserver::disabled());
        assert!(with < 0.02, "{with}");
        assert!(without > 0.05, "{without}");
    }

    #[test]
    fn avoid_identity_cases() {
        let p = AvoidanceParams::default();
        let s = AgentKinematics::default();
        let a = Vec3::new(1.0, 2.0, 0.5);
        assert_eq!(avoid(&a, &s, &[], 0.0, 0.02, &p).unwrap(), a);
        let far = ObstacleState { id: 1, position: Vec3::new(p.d_soft + 1.0, 0.0, 0.0), velocity: Vec3::zeros(), stamp: 0.0 };
        assert_eq!(avoid(&a, &s, &[far], 0.0, 0.02, &p).unwrap(), a);
    }

    #[test]
    fn stale_obstacle_is_reported() {
        let p = AvoidanceParams::default();
        let o = ObstacleState { id: 4, position: Vec3::new(1.5, 0.0, 0.0), velocity: Vec3::zeros(), stamp: 0.0 };
        let err = avoid(&Vec3::zeros(), &AgentKinematics::default(), &[o], 0.6, 0.02, &p).unwrap_err();
        assert!(matches!(err, ControlError::StaleObstacle { id: 4, .. }));
    }

    #[test]
    fn soft_zone_pushes_away() {
        let p = AvoidanceParams::default();
        let o = ObstacleState { id: 1, position: Vec3::new(2.0, 0.0, 0.0), velocity: Vec3::zeros(), stamp: 0.0 };
        let a = avoid(&Vec3::zeros(), &AgentKinematics::default(), &[o], 0.0, 0.02, &p).unwrap();
        assert!(a.x < 0.0 && a.y == 0.0);
    }

    #[test]
    fn head_on_run_keeps_minimum_distance() {
        let p = AvoidanceParams::default();
        let g = TrackingGains::default();
        let plant = PlantParams::default();
        let dt = 0.02;
        let mut s = AgentKinematics { position: Vec3::new(-6.0, 0.0, 2.0), velocity: Vec3::new(3.0, 0.0, 0.0) };
        let wall = ObstacleState { id: 1, position: Vec3::new(0.0, 0.0, 2.0), velocity: Vec3::zeros(), stamp: 0.0 };
        let goal = ReferencePoint::hold(Vec3::new(0.0, 0.0, 2.0));
        let mut min_d = f64::INFINITY;
        for i in 0..1000 {
            let t = i as f64 * dt;
            let o = ObstacleState { stamp: t, ..wall };
            let a = avoid(&track_reference(&s, &goal, &Vec3::zeros(), &g), &s, &[o], t, dt, &p).unwrap();
            s = step_dynamics(&s, &a, &Vec3::zeros(), dt, &plant);
            min_d = min_d.min((s.position - wall.position).norm());
        }
        assert!(min_d >= 0.95 * p.d_min, "{min_d}");
    }

    #[test]
    fn plant_spot_values() {
        let s = AgentKinematics::default();
        assert_eq!(step_dynamics(&s, &Vec3::zeros(), &Vec3::zeros(), 0.02, &PlantParams::default()), s);
        let mut s = AgentKinematics::default();
        for _ in 0..1000 {
            s = step_dynamics(&s, &Vec3::x(), &Vec3::zeros(), 1e-3, &no_drag());
        }
        assert!((s.velocity - Vec3::x()).norm() < 1e-3);
        let plant = PlantParams { drag: 0.5, v_max: 100.0 };
        let mut s = AgentKinematics::default();
        for _ in 0..20_000 {
            s = step_dynamics(&s, &Vec3::x(), &Vec3::zeros(), 1e-3, &plant);
        }
        assert!((s.velocity.x - 2.0).abs() < 1e-3);
    }
}
