//! Decentralized multi-agent search, track, pickup and delivery of ground
//! objects by camera-equipped aerial agents, in a deterministic simulator.

pub mod geometry;
pub mod vision;
pub mod tracking;
pub mod coverage;
pub mod control;
pub mod estimation;
pub mod agent;
pub mod sim;
