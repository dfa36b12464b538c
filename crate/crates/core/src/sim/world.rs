//! Ground truth: arena, objects and their motion.

use serde::{Deserialize, Serialize};

use super::config::{ObjectSpec, WorldConfig};
use crate::agent::DropZone;
use crate::coverage::{ConvexRegion, Vec2};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectStatus {
    Ground,
    Attached(usize),
    Delivered,
}

impl ObjectStatus {
    pub fn label(&self) -> String {
        match self {
            ObjectStatus::Ground => "ground".into(),
            ObjectStatus::Attached(a) => format!("attached:{a}"),
            ObjectStatus::Delivered => "delivered".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    pub spec: ObjectSpec,
    pub position: Vec3,
    pub velocity: Vec3,
    pub status: ObjectStatus,
    pub delivered_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub arena: ConvexRegion,
    pub drop_zone: DropZone,
    pub wind: Vec3,
    pub objects: Vec<ObjectState>,
}

impl World {
    pub fn new(config: &WorldConfig) -> Self {
        let objects = config
            .objects
            .iter()
            .map(|o| ObjectState {
                spec: o.clone(),
                position: Vec3::new(o.position[0], o.position[1], 0.0),
                velocity: Vec3::new(o.velocity[0], o.velocity[1], 0.0),
                status: ObjectStatus::Ground,
                delivered_at: None,
            })
            .collect();
        Self { arena: config.arena.clone(), drop_zone: config.drop_zone, wind: Vec3::from(config.wind), objects }
    }

    /// Moves free objects and reflects them off the arena boundary.
    pub fn step_objects(&mut self, dt: f64) {
        for o in self.objects.iter_mut().filter(|o| o.status == ObjectStatus::Ground) {
            if o.velocity == Vec3::zeros() {
                continue;
            }
            let mut p = o.position.xy() + o.velocity.xy() * dt;
            let mut v = o.velocity.xy();
            reflect(&self.arena, &mut p, &mut v);
            o.position = Vec3::new(p.x, p.y, 0.0);
            o.velocity = Vec3::new(v.x, v.y, 0.0);
        }
    }

    pub fn all_delivered(&self) -> bool {
        !self.objects.is_empty() && self.objects.iter().all(|o| o.status == ObjectStatus::Delivered)
    }

    pub fn delivered(&self) -> usize {
        self.objects.iter().filter(|o| o.status == ObjectStatus::Delivered).count()
    }
}

/// Mirrors `p` back across every edge it crossed and flips the outward
/// velocity component.
pub fn reflect(region: &ConvexRegion, p: &mut Vec2, v: &mut Vec2) {
    let vs = region.vertices();
    for i in 0..vs.len() {
        let (a, b) = (vs[i], vs[(i + 1) % vs.len()]);
        let e = b - a;
        let n = Vec2::new(e.y, -e.x) / e.norm();
        let outside = (*p - a).dot(&n);
        if outside > 0.0 {
            *p -= n * (2.0 * outside);
            let vn = v.dot(&n);
            if vn > 0.0 {
                *v -= n * (2.0 * vn);
            }
        }
    }
}

/// Gap between the gripper tip at `tip` and the top face of a flat disc.
pub fn gripper_gap(tip: &Vec3, object: &ObjectState) -> f64 {
    let r = object.spec.diameter / 2.0;
    let h = (tip.xy() - object.position.xy()).norm();
    let dz = (tip.z - object.position.z).max(0.0);
    if h <= r {
        dz
    } else {
        ((h - r).powi(2) + dz * dz).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_flips_velocity() {
        let arena = ConvexRegion::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        let mut p = Vec2::new(10.2, 5.0);
        let mut v = Vec2::new(1.0, 0.5);
        reflect(&arena, &mut p, &mut v);
        assert!((p - Vec2::new(9.8, 5.0)).norm() < 1e-12);
        assert_eq!(v, Vec2::new(-1.0, 0.5));
    }

    #[test]
    fn inside_points_are_untouched() {
        let arena = ConvexRegion::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        let mut p = Vec2::new(3.0, 4.0);
        let mut v = Vec2::new(1.0, 1.0);
        reflect(&arena, &mut p, &mut v);
        assert_eq!((p, v), (Vec2::new(3.0, 4.0), Vec2::new(1.0, 1.0)));
    }
}
