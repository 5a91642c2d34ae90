//! Zero-shot assistance for agents whose goals and biases are unknown.

pub mod agent;
pub mod belief;
pub mod daytrip;
pub mod decision;
pub mod dist;
pub mod error;
pub mod harness;
pub mod inventory;
pub mod memo;
pub mod modes;
pub mod planner;
pub mod rng;
pub mod session;

pub use error::{Error, Result};
