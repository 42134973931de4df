//! Rolling-horizon Stackelberg jamming games on multiagent consensus
//! networks.

pub mod analysis;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod game;
pub mod network;
pub mod rolling;
pub mod scenario;

pub use error::{GameError, Result};
