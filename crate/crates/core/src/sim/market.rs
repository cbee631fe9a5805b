//! Economic accounting for the ancillary-service participation.

use serde::{Deserialize, Serialize};

/// Price inputs. The defaults are documented stand-ins in the ballpark of
/// Swiss retail energy and secondary-reserve capacity prices; they are
/// configuration, not calibrated market data.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Prices {
    pub energy_chf_per_kwh: f64,
    /// Reward per kW of flexibility per day.
    pub bid_chf_per_kw_day: f64,
    /// Penalty per kWh of tracking-error energy.
    pub penalty_chf_per_kwh: f64,
    /// Battery capital cost per kWh of capacity.
    pub battery_cost_chf_per_kwh: f64,
    pub battery_lifespan_days: f64,
}

impl Default for Prices {
    fn default() -> Self {
        Self {
            energy_chf_per_kwh: 0.22,
            bid_chf_per_kw_day: 1.2,
            penalty_chf_per_kwh: 0.5,
            battery_cost_chf_per_kwh: 813.0,
            battery_lifespan_days: 3650.0,
        }
    }
}

impl Prices {
    /// Daily amortization of a battery of the given capacity.
    pub fn battery_amortization_per_day(&self, capacity_kwh: f64) -> f64 {
        self.battery_cost_chf_per_kwh * capacity_kwh / self.battery_lifespan_days
    }
}

/// Kahan compensated accumulator; the daily energy/penalty integrals sum
/// tens of thousands of fine steps and must stay exact to well below a
/// centime.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let y = value - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// One day of economic accounting.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DayLedger {
    pub day: u32,
    pub energy_cost_chf: f64,
    pub bid_reward_chf: f64,
    pub penalty_chf: f64,
    pub amortization_chf: f64,
    pub total_chf: f64,
    pub gamma_kw: f64,
    pub mean_ppd: f64,
    pub mean_y_c: f64,
    pub degraded: bool,
}

impl DayLedger {
    /// Seals the identity `total = energy - reward + penalty + amortization`.
    pub fn finalize(
        day: u32,
        energy_cost_chf: f64,
        bid_reward_chf: f64,
        penalty_chf: f64,
        amortization_chf: f64,
        gamma_kw: f64,
        mean_ppd: f64,
        mean_y_c: f64,
        degraded: bool,
    ) -> Self {
        Self {
            day,
            energy_cost_chf,
            bid_reward_chf,
            penalty_chf,
            amortization_chf,
            total_chf: energy_cost_chf - bid_reward_chf + penalty_chf + amortization_chf,
            gamma_kw,
            mean_ppd,
            mean_y_c,
            degraded,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct LedgerTotals {
    pub days: usize,
    pub mean_daily_total_chf: f64,
    pub mean_daily_energy_chf: f64,
    pub mean_daily_reward_chf: f64,
    pub mean_daily_penalty_chf: f64,
    pub mean_ppd: f64,
}

impl LedgerTotals {
    pub fn from_ledger(ledger: &[DayLedger]) -> Self {
        let n = ledger.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |f: fn(&DayLedger) -> f64| ledger.iter().map(f).sum::<f64>() / n as f64;
        Self {
            days: n,
            mean_daily_total_chf: mean(|d| d.total_chf),
            mean_daily_energy_chf: mean(|d| d.energy_cost_chf),
            mean_daily_reward_chf: mean(|d| d.bid_reward_chf),
            mean_daily_penalty_chf: mean(|d| d.penalty_chf),
            mean_ppd: mean(|d| d.mean_ppd),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_identity_holds() {
        let d = DayLedger::finalize(0, 10.0, 3.0, 0.5, 1.1, 2.5, 6.0, 24.0, false);
        assert_eq!(d.total_chf, 10.0 - 3.0 + 0.5 + 1.1);
    }

    #[test]
    fn kahan_survives_many_small_increments() {
        let mut k = KahanSum::default();
        let tiny = 0.22 / 21600.0;
        for _ in 0..21600 {
            k.add(tiny);
        }
        assert!((k.value() - 0.22).abs() < 1e-12);
    }

    #[test]
    fn default_amortization_matches_quoted_figures() {
        let p = Prices::default();
        let daily = p.battery_amortization_per_day(5.0);
        assert!((daily - 813.0 * 5.0 / 3650.0).abs() < 1e-12);
    }
}
