//! Market selection with Bayesian learning and relative-consumption habits.
//!
//! Agents differ in risk aversion, patience, habit strength and beliefs about a
//! mean-reverting dividend growth rate that is observed only through dividends and a
//! correlated signal. The crate simulates the economy, runs each agent's Kalman filter,
//! clears the market for the state price density, ranks agents by survival index and
//! checks the long-run limit results by Monte Carlo.

pub mod error;
pub mod rng;
pub mod paths;
pub mod filtering;
pub mod equilibrium;
pub mod selection;
pub mod asymptotics;
pub mod config;
pub mod commands;
pub mod report;

pub use error::{Error, Result};
pub use paths::{EconomyParams, MarketPath, PathGrid, WienerIncrements};
pub use filtering::{AgentBeliefs, FilterCoeffs, FilterPath, FilterSet, NuIntegral};
pub use equilibrium::{AgentPrefs, AgentSpec, EquilibriumPath, EquilibriumPoint, EquilibriumRun};
pub use selection::{Region, SurvivalReport};
pub use asymptotics::{FunctionalId, LimitEstimate};
pub use config::RunConfig;
