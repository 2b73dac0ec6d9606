//! Distributed downlink beamforming for multi-cell OFDMA networks, driven by
//! an interference-pricing game between base stations.
//!
//! Each coordinated BS is a player. It maximises its users' utilities minus
//! the priced interference it leaks onto other users, solving its local
//! problem with a closed-form KKT update wrapped in a bisection on the power
//! multiplier. Round-robin better responses converge to a Nash equilibrium
//! when every utility has relative risk aversion in `[0, 2]`.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod game;
pub mod hermitian;
pub mod network;
pub mod solver;
pub mod distributed;
pub mod utility;

pub use error::{Error, Result};
