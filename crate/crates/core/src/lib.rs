//! Decentralized channel and power selection for co-located body sensor
//! networks.
//!
//! Every network is a selfish player that picks a channel and a transmit
//! power to minimize a cost trading SINR shortfall against power. Players
//! only see aggregate interference on each channel. Channel choice is learned
//! with regret matching; power is the closed-form best response. The
//! [`verify`] module holds brute-force oracles that certify the equilibria
//! the learning dynamics reach.

pub mod cli;
pub mod engine;
pub mod error;
pub mod game;
pub mod learning;
pub mod output;
pub mod radio;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
pub use scenario::{load_scenario, Scenario};
