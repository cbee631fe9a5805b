//! Synthetic two-timescale testbed.
//!
//! A ground-truth thermal plant, a battery emulator, a grid-signal
//! emulator and a weather generator stand in for the real building
//! deployment, plus the market ledger that scores each day. The
//! [`experiment`] submodule wires them to the planner and controller for
//! closed-loop runs.

pub mod comfort;
pub mod ess;
pub mod experiment;
pub mod market;
pub mod plant;
pub mod signals;
pub mod thermostat;

pub use comfort::{comfort_metrics, ppd_from_pmv, ComfortReport, FangerParams};
pub use ess::{step_ess, EssParams, EssState};
pub use experiment::{
    gen_identification_data, read_ledger_csv, run_experiment, run_scenario_comparison,
    write_actuation_csv, write_ledger_csv, ActuationRow, ExperimentResult, ScenarioKind,
};
pub use market::{DayLedger, KahanSum, LedgerTotals, Prices};
pub use plant::{PlantModel, PlantParams, PlantState};
pub use signals::{gen_agc, gen_weather, scenario_library, AgcDay, AgcModel, WeatherDay, WeatherModel};
pub use thermostat::{default_thermostat, ThermostatState};
