//! Online control of a hybrid-energy OFDMA relay downlink.
//!
//! Each slot the controller admits traffic, allocates subcarriers, relays
//! and powers, and decides how the base station's demand is split between
//! the grid and a renewable-charged battery.

pub mod alloc;
pub mod energy;
pub mod env;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod phy;
pub mod report;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use metrics::{metrics, Summary, Window};
pub use model::{SystemConfig, ValidatedConfig};
pub use sim::{run, sweep, Policy, SweepAxis, Trace};
