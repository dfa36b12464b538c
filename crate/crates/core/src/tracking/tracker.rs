//! Multi-object track management: predict, gate, assign, update, spawn, prune.

use super::hungarian::hungarian;
use super::kalman::{kf_predict, kf_update, KfParams, Track};
use crate::geometry::Vec3;
use crate::vision::Detection;

/// Cost assigned to pairs that may not be matched.
const FORBIDDEN: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub params: KfParams,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(params: KfParams) -> Self {
        Self { params, tracks: Vec::new(), next_id: 0 }
    }

    /// Tracks in ascending id order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.confirmed)
    }

    pub fn get(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Propagates every track by `dt` without a measurement round.
    pub fn predict(&mut self, dt: f64) {
        for t in &mut self.tracks {
            *t = kf_predict(t, dt, &self.params);
        }
    }

    /// Translates every track, used when the observer's own pose estimate jumps.
    pub fn shift(&mut self, offset: &Vec3) {
        for t in &mut self.tracks {
            for i in 0..3 {
                t.state[i] += offset[i];
            }
        }
    }

    pub fn remove(&mut self, id: u64) {
        self.tracks.retain(|t| t.id != id);
    }

    /// One full association round.
    pub fn step(&mut self, detections: &[Detection], dt: f64) {
        self.predict(dt);
        let gate = self.params.gate;
        let cost: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .map(|t| {
                detections
                    .iter()
                    .map(|d| {
                        let dist = (t.position() - d.position).norm();
                        if d.color == t.color && dist <= gate {
                            dist
                        } else {
                            FORBIDDEN
                        }
                    })
                    .collect()
            })
            .collect();
        let mut det_used = vec![false; detections.len()];
        let mut track_hit = vec![false; self.tracks.len()];
        if !self.tracks.is_empty() && !detections.is_empty() {
            for (ti, di) in hungarian(&cost) {
                if cost[ti][di] < FORBIDDEN {
                    self.tracks[ti] = kf_update(&self.tracks[ti], &detections[di], &self.params);
                    det_used[di] = true;
                    track_hit[ti] = true;
                }
            }
        }
        for (t, hit) in self.tracks.iter_mut().zip(&track_hit) {
            if !hit {
                t.misses += 1;
            }
        }
        let max_misses = self.params.max_misses;
        self.tracks.retain(|t| t.misses <= max_misses);
        for (d, used) in detections.iter().zip(det_used) {
            if !used {
                self.tracks.push(Track::from_detection(self.next_id, d, &self.params));
                self.next_id += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::vision::ColorId;

    fn det(x: f64, y: f64, color: u16, t: f64) -> Detection {
        Detection { timestamp: t, position: Vec3::new(x, y, 0.0), color: ColorId(color), blob_area: 50 }
    }

    #[test]
    fn miss_is_counted() {
        let mut tr = Tracker::new(KfParams::default());
        tr.step(&[det(0.0, 0.0, 0, 0.0)], 0.1);
        tr.step(&[], 0.1);
        assert_eq!(tr.tracks().len(), 1);
        assert_eq!(tr.tracks()[0].misses, 1);
    }

    #[test]
    fn near_detection_matches() {
        let mut tr = Tracker::new(KfParams::default());
        tr.step(&[det(0.0, 0.0, 0, 0.0)], 0.1);
        tr.step(&[det(0.1, 0.0, 0, 0.1)], 0.1);
        assert_eq!(tr.tracks().len(), 1);
        assert_eq!(tr.tracks()[0].hits, 2);
    }

    #[test]
    fn color_and_gate_prevent_matching() {
        let mut tr = Tracker::new(KfParams::default());
        tr.step(&[det(0.0, 0.0, 0, 0.0)], 0.1);
        tr.step(&[det(0.1, 0.0, 1, 0.1), det(5.0, 0.0, 0, 0.1)], 0.1);
        assert_eq!(tr.tracks().len(), 3);
        assert_eq!(tr.tracks().iter().map(|t| t.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn stale_tracks_are_deleted_and_ids_not_reused() {
        let params = KfParams { max_misses: 2, ..Default::default() };
        let mut tr = Tracker::new(params);
        tr.step(&[det(0.0, 0.0, 0, 0.0)], 0.1);
        for _ in 0..3 {
            tr.step(&[], 0.1);
        }
        assert!(tr.tracks().is_empty());
        tr.step(&[det(0.0, 0.0, 0, 0.5)], 0.1);
        assert_eq!(tr.tracks()[0].id, 1);
    }

    #[test]
    fn confirmation_after_min_hits() {
        let mut tr = Tracker::new(KfParams::default());
        for k in 0..3 {
            assert_eq!(tr.confirmed().count(), 0);
            tr.step(&[det(0.0, 0.0, 0, k as f64 * 0.1)], 0.1);
        }
        assert_eq!(tr.confirmed().count(), 1);
    }
}
