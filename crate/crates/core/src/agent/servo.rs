use serde::{Deserialize, Serialize};

use crate::control::{AgentKinematics, ReferencePoint};
use crate::geometry::Vec3;
use crate::tracking::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServoPhase {
    ConeDescent,
    CenterBall,
    MagnetApproach,
    Grasped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServoParams {
    /// Cone half-angle, rad.
    pub cone_half_angle: f64,
    pub ball_height: f64,
    pub ball_radius: f64,
    pub ball_speed: f64,
    pub approach_speed: f64,
    pub z_floor: f64,
    pub remagnetize_period: f64,
    /// How far below the current height a descending reference is placed, m.
    pub descent_step: f64,
    /// Abort the magnet approach after this long without contact, s.
    pub approach_timeout: f64,
    /// When false the agent holds in the ball instead of engaging the magnet.
    pub engage_magnet: bool,
}

impl Default for ServoParams {
    fn default() -> Self {
        Self {
            cone_half_angle: 25f64.to_radians(),
            ball_height: 1.2,
            ball_radius: 0.25,
            ball_speed: 0.3,
            approach_speed: 0.4,
            z_floor: 0.05,
            remagnetize_period: 1.0,
            descent_step: 0.5,
            approach_timeout: 8.0,
            engage_magnet: true,
        }
    }
}

impl ServoParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        let positive = [
            self.ball_height,
            self.ball_radius,
            self.ball_speed,
            self.approach_speed,
            self.z_floor,
            self.remagnetize_period,
            self.descent_step,
            self.approach_timeout,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err("servo parameters must be positive");
        }
        if !(self.cone_half_angle > 0.0 && self.cone_half_angle < std::f64::consts::FRAC_PI_2) {
            return Err("cone half-angle must be in (0, pi/2)");
        }
        Ok(())
    }

    pub fn ball_center(&self, track: &Track) -> Vec3 {
        let p = track.position();
        Vec3::new(p.x, p.y, p.z + self.ball_height)
    }
}

fn horizontal_offset(own: &AgentKinematics, track: &Track) -> f64 {
    let p = track.position();
    (own.position.xy() - p.xy()).norm()
}

/// Lowest height above the object at which `offset` is inside the cone.
pub fn cone_height(offset: f64, params: &ServoParams) -> f64 {
    offset / params.cone_half_angle.tan()
}

pub fn inside_cone(own: &AgentKinematics, track: &Track, params: &ServoParams) -> bool {
    horizontal_offset(own, track) <= (own.position.z - track.position().z) * params.cone_half_angle.tan()
}

/// Reference for the current servo phase, in the agent's own estimated frame.
///
/// Horizontally the reference sits on the track with its velocity fed
/// forward. In the cone phases the height reference only drops below the
/// current height while the agent is inside the cone, and never below the
/// ball; during the magnet approach it descends at the approach speed.
pub fn servo_reference(track: &Track, own: &AgentKinematics, phase: ServoPhase, params: &ServoParams) -> ReferencePoint {
    let p = track.position();
    let v = track.velocity();
    let velocity = Vec3::new(v.x, v.y, 0.0);
    match phase {
        ServoPhase::ConeDescent | ServoPhase::CenterBall => {
            let floor = (p.z + params.ball_height).max(params.z_floor);
            let cone = p.z + cone_height(horizontal_offset(own, track), params);
            let z = floor.max(cone).max(own.position.z - params.descent_step);
            ReferencePoint { position: Vec3::new(p.x, p.y, z), velocity }
        }
        ServoPhase::MagnetApproach => ReferencePoint {
            position: Vec3::new(p.x, p.y, own.position.z),
            velocity: Vec3::new(v.x, v.y, -params.approach_speed),
        },
        ServoPhase::Grasped => ReferencePoint { position: own.position, velocity: Vec3::zeros() },
    }
}

pub fn check_ball(own: &AgentKinematics, track: &Track, params: &ServoParams) -> bool {
    let v = track.velocity();
    let relative_speed = (own.velocity - Vec3::new(v.x, v.y, 0.0)).norm();
    (own.position - params.ball_center(track)).norm() <= params.ball_radius && relative_speed <= params.ball_speed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracking::{KfParams, State5};
    use crate::vision::{ColorId, Detection};

    fn track_at(p: Vec3, v: (f64, f64)) -> Track {
        let det = Detection { timestamp: 0.0, position: p, color: ColorId(0), blob_area: 100 };
        let mut t = Track::from_detection(0, &det, &KfParams::default());
        t.state = State5::new(p.x, p.y, p.z, v.0, v.1);
        t
    }

    #[test]
    fn descends_when_directly_above() {
        let params = ServoParams { cone_half_angle: 30f64.to_radians(), ..Default::default() };
        let t = track_at(Vec3::zeros(), (0.0, 0.0));
        let own = AgentKinematics::at(Vec3::new(0.0, 0.0, 5.0));
        let r = servo_reference(&t, &own, ServoPhase::ConeDescent, &params);
        assert!(r.position.z < 5.0);
        assert!(r.position.z >= params.ball_height);
    }

    #[test]
    fn outside_cone_blocks_descent() {
        let params = ServoParams { cone_half_angle: 30f64.to_radians(), ..Default::default() };
        let t = track_at(Vec3::zeros(), (0.0, 0.0));
        let own = AgentKinematics::at(Vec3::new(3.0, 0.0, 2.0));
        assert!(!inside_cone(&own, &t, &params));
        let r = servo_reference(&t, &own, ServoPhase::ConeDescent, &params);
        assert!(r.position.z >= 2.0);
        assert_eq!(r.position.xy(), t.position().xy());
    }

    #[test]
    fn velocity_is_fed_forward() {
        let t = track_at(Vec3::zeros(), (0.278, 0.0));
        let own = AgentKinematics::at(Vec3::new(0.0, 0.0, 3.0));
        for phase in [ServoPhase::ConeDescent, ServoPhase::CenterBall, ServoPhase::MagnetApproach] {
            let r = servo_reference(&t, &own, phase, &ServoParams::default());
            assert_eq!(r.velocity.x, 0.278);
        }
        let r = servo_reference(&t, &own, ServoPhase::MagnetApproach, &ServoParams::default());
        assert_eq!(r.velocity.z, -0.4);
    }

    #[test]
    fn ball_gate() {
        let p = ServoParams::default();
        let t = track_at(Vec3::new(1.0, 1.0, 0.0), (0.0, 0.0));
        let center = p.ball_center(&t);
        assert!(check_ball(&AgentKinematics::at(center), &t, &p));
        let fast = AgentKinematics { position: center, velocity: Vec3::new(2.0, 0.0, 0.0) };
        assert!(!check_ball(&fast, &t, &p));
        let off = AgentKinematics::at(center + Vec3::new(p.ball_radius + 0.01, 0.0, 0.0));
        assert!(!check_ball(&off, &t, &p));
    }
}
