//! Discrete-time simulation of a modular multilevel converter (MMC) in a
//! back-to-back HVDC link, with two predictive modulation strategies:
//! conventional voltage-balancing sorting and a variant that caps the number
//! of submodule switching events per arm and step.

pub mod metrics;
pub mod model;
pub mod modulation;
pub mod sim;

pub use model::{ArmState, PhaseLegState, SwitchDecision, SystemParams};
pub use modulation::{Algorithm, ArmTargets, Selection, SelectionResult, SortedArm};
pub use sim::{run_scenario, DcModel, NswSchedule, Phase, ScenarioConfig, SimError, SimTrace};
