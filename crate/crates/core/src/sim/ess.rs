//! Battery emulator with asymmetric charge/discharge efficiency.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EssParams {
    pub capacity_kwh: f64,
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub efficiency: f64,
    pub soc_min_kwh: f64,
    pub soc_max_kwh: f64,
    /// Fine-timescale step \[s\].
    pub dt_fine_s: f64,
}

impl Default for EssParams {
    fn default() -> Self {
        Self {
            capacity_kwh: 5.0,
            p_min_kw: -5.0,
            p_max_kw: 5.0,
            efficiency: 0.95,
            soc_min_kwh: 0.25,
            soc_max_kwh: 5.0,
            dt_fine_s: 4.0,
        }
    }
}

impl EssParams {
    pub fn dt_fine_hours(&self) -> f64 {
        self.dt_fine_s / 3600.0
    }

    pub fn soc_ref_kwh(&self) -> f64 {
        0.5 * (self.soc_min_kwh + self.soc_max_kwh)
    }

    /// Power range deliverable for one fine step without leaving the SoC
    /// bounds: charging is derated by the efficiency, discharging is
    /// amplified by it.
    pub fn feasible_power(&self, soc: f64) -> (f64, f64) {
        let dt = self.dt_fine_hours();
        let max_charge = ((self.soc_max_kwh - soc) / (self.efficiency * dt)).max(0.0);
        let max_discharge = ((soc - self.soc_min_kwh) * self.efficiency / dt).max(0.0);
        (
            (-max_discharge).max(self.p_min_kw),
            max_charge.min(self.p_max_kw),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssState {
    pub soc_kwh: f64,
}

/// Advances the battery one fine step.
///
/// Positive power injects into the battery at the charge efficiency,
/// negative power extracts at the inverse efficiency. The request is
/// limited to the power bounds and to the SoC-feasible range; the power
/// actually exchanged is returned.
pub fn step_ess(params: &EssParams, state: &mut EssState, p_e_request: f64) -> f64 {
    let (lo, hi) = params.feasible_power(state.soc_kwh);
    let p = p_e_request.clamp(lo, hi);
    let dt = params.dt_fine_hours();
    let delta = if p >= 0.0 {
        params.efficiency * p * dt
    } else {
        p * dt / params.efficiency
    };
    state.soc_kwh = (state.soc_kwh + delta).clamp(params.soc_min_kwh, params.soc_max_kwh);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> EssParams {
        EssParams::default()
    }

    #[test]
    fn one_hour_charge_at_unit_power() {
        // 900 four-second steps at +1 kW: SoC gains 0.95 kWh.
        let p = params();
        let mut s = EssState { soc_kwh: 1.0 };
        for _ in 0..900 {
            let delivered = step_ess(&p, &mut s, 1.0);
            assert_abs_diff_eq!(delivered, 1.0);
        }
        assert_abs_diff_eq!(s.soc_kwh - 1.0, 0.95, epsilon = 1e-9);
    }

    #[test]
    fn one_hour_discharge_drains_more_than_delivered() {
        // Extracting 0.95 kW for an hour costs exactly 1.0 kWh of SoC.
        let p = params();
        let mut s = EssState { soc_kwh: 3.0 };
        for _ in 0..900 {
            let delivered = step_ess(&p, &mut s, -0.95);
            assert_abs_diff_eq!(delivered, -0.95);
        }
        assert_abs_diff_eq!(3.0 - s.soc_kwh, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn saturated_battery_delivers_nothing() {
        let p = params();
        let mut s = EssState {
            soc_kwh: p.soc_max_kwh,
        };
        let delivered = step_ess(&p, &mut s, 2.0);
        assert_abs_diff_eq!(delivered, 0.0);
        assert_abs_diff_eq!(s.soc_kwh, p.soc_max_kwh);
    }

    #[test]
    fn soc_never_leaves_bounds() {
        let p = params();
        let mut s = EssState { soc_kwh: 2.0 };
        // Alternate violent requests for a simulated hour.
        for i in 0..900 {
            let req = if i % 2 == 0 { 50.0 } else { -50.0 };
            step_ess(&p, &mut s, req);
            assert!(s.soc_kwh >= p.soc_min_kwh - 1e-12);
            assert!(s.soc_kwh <= p.soc_max_kwh + 1e-12);
        }
    }
}
