use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperParams {
    /// Flux reading with the magnet off.
    pub base: f64,
    pub amplitude: f64,
    /// Distance at which the ferrous response halves, m.
    pub d0: f64,
    /// Rise above `base` that counts as contact.
    pub contact_threshold: f64,
    pub contact_distance: f64,
    pub p_grasp: f64,
    /// Time constant of the holding-force decay after a pulse, s.
    pub decay_tau: f64,
    pub decay_floor: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            base: 0.1,
            amplitude: 1.0,
            d0: 0.05,
            contact_threshold: 0.2,
            contact_distance: 0.02,
            p_grasp: 0.9,
            decay_tau: 3.0,
            decay_floor: 0.5,
        }
    }
}

impl GripperParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.amplitude > 0.0 && self.d0 > 0.0 && self.contact_threshold > 0.0 && self.contact_distance > 0.0) {
            return Err("gripper constants must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_grasp) {
            return Err("p_grasp must be in [0, 1]");
        }
        if !(self.decay_tau > 0.0 && (0.0..=1.0).contains(&self.decay_floor)) {
            return Err("gripper decay must have tau > 0 and floor in [0, 1]");
        }
        Ok(())
    }
}

/// Physical gripper: magnet state, Hall reading and the held object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub epm_on: bool,
    pub flux: f64,
    pub attached: Option<usize>,
    /// Time since the last magnetizing pulse, s.
    pub since_pulse: f64,
    in_contact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GripperEvent {
    pub contact: bool,
    /// Set on the step an object becomes attached.
    pub attached: Option<usize>,
}

impl GripperState {
    pub fn new(params: &GripperParams) -> Self {
        Self { epm_on: false, flux: params.base, attached: None, since_pulse: 0.0, in_contact: false }
    }

    pub fn strength(&self, params: &GripperParams) -> f64 {
        (-self.since_pulse / params.decay_tau).exp().max(params.decay_floor)
    }

    /// Advances the gripper by `dt` with the nearest ferrous object
    /// `(id, distance)`. Switching the magnet off drops any held object.
    pub fn update<R: Rng>(
        &mut self,
        epm_command: bool,
        nearest: Option<(usize, f64)>,
        remagnetize: bool,
        dt: f64,
        params: &GripperParams,
        rng: &mut R,
    ) -> GripperEvent {
        if !epm_command {
            *self = Self { since_pulse: self.since_pulse + dt, ..Self::new(params) };
            return GripperEvent::default();
        }
        if !self.epm_on || remagnetize {
            self.since_pulse = 0.0;
        } else {
            self.since_pulse += dt;
        }
        self.epm_on = true;

        let distance = match (self.attached, nearest) {
            (Some(_), _) => 0.0,
            (None, Some((_, d))) => d.max(0.0),
            (None, None) => f64::INFINITY,
        };
        self.flux = flux(distance, self.strength(params), params);

        let touching = self.flux - params.base > params.contact_threshold && distance < params.contact_distance;
        let mut event = GripperEvent::default();
        if touching && !self.in_contact {
            event.contact = true;
            if self.attached.is_none() {
                let draw: f64 = rng.random();
                if let Some((id, _)) = nearest.filter(|_| draw < params.p_grasp) {
                    self.attached = Some(id);
                    event.attached = Some(id);
                }
            }
        }
        self.in_contact = touching;
        event
    }
}

/// Hall reading with the magnet on at distance `d` from a ferrous surface.
pub fn flux(d: f64, strength: f64, params: &GripperParams) -> f64 {
    if !d.is_finite() {
        return params.base;
    }
    params.base + params.amplitude * strength / (1.0 + (d / params.d0).powi(3))
}
