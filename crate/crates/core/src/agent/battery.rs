use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryParams {
    pub full: f64,
    /// Discharge at unit load, V/s.
    pub rate: f64,
    pub land_threshold: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self { full: 16.8, rate: 0.004, land_threshold: 14.8 }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.rate >= 0.0 && self.land_threshold < self.full) {
            return Err("battery needs rate >= 0 and land_threshold < full");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub voltage: f64,
    pub params: BatteryParams,
}

impl Battery {
    pub fn new(params: BatteryParams) -> Self {
        Self { voltage: params.full, params }
    }

    pub fn step(&mut self, dt: f64, load: f64) {
        self.voltage -= self.params.rate * load.max(0.0) * dt.max(0.0);
    }

    pub fn low(&self) -> bool {
        self.voltage < self.params.land_threshold
    }
}

pub fn battery_step(battery: &Battery, dt: f64, load: f64) -> Battery {
    let mut b = *battery;
    b.step(dt, load);
    b
}
