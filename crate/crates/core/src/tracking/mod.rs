//! Detection-to-track association and constant-velocity filtering.

mod hungarian;
mod kalman;
mod tracker;

pub use hungarian::{assignment_cost, hungarian};
pub use kalman::{kf_predict, kf_update, Cov5, KfParams, State5, Track};
pub use tracker::Tracker;
