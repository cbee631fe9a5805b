//! Default bang-bang building controller.

use crate::data::Mode;

use super::plant::{HP_MAX_COOLING_KW, HP_MAX_HEATING_KW, HP_MIN_KW};

/// Latch of the bang-bang rule; hysteresis needs memory of whether the
/// compressor is currently running.
#[derive(Clone, Copy, Debug, Default)]
pub struct ThermostatState {
    pub active: bool,
}

/// Full power when the temperature exceeds the hysteresis band on the
/// wrong side, ventilation-only otherwise.
pub fn default_thermostat(
    state: &mut ThermostatState,
    y_measured: f64,
    mode: Mode,
    setpoint: f64,
    hysteresis: f64,
) -> f64 {
    match mode {
        Mode::Cooling => {
            if y_measured > setpoint + hysteresis {
                state.active = true;
            } else if y_measured < setpoint - hysteresis {
                state.active = false;
            }
            if state.active {
                HP_MAX_COOLING_KW
            } else {
                HP_MIN_KW
            }
        }
        Mode::Heating => {
            if y_measured < setpoint - hysteresis {
                state.active = true;
            } else if y_measured > setpoint + hysteresis {
                state.active = false;
            }
            if state.active {
                HP_MAX_HEATING_KW
            } else {
                HP_MIN_KW
            }
        }
    }
}
