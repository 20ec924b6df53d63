//! Generative scenarios and rejection-rate simulations.

mod config;
mod scenario;
mod simulation;

pub use config::{DEFAULT_B, DEFAULT_NBOOT, DEFAULT_NPERM, DEFAULT_NSIM};
pub use scenario::{generate_scenario, NullLaw, ScenarioId, ScenarioSpec};
pub use simulation::{run_simulation, simulate_p_values, RejectionRow, RejectionTable, SimulationConfig};
