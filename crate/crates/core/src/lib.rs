//! Cycle-accurate 2D-mesh wormhole NoC simulator with hybrid dimension-order
//! and Up*/Down* fault-tolerant routing.

pub mod error;
pub mod harness;
pub mod reconfig;
pub mod routing;
pub mod simcore;
pub mod topology;
pub mod traffic;

pub use error::{Error, Result};
