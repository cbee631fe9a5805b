//! Thermal-comfort indices from the Fanger heat-balance model.
//!
//! The predicted mean vote is computed with the standard iterative
//! clothing-surface-temperature solve; mean radiant temperature is taken
//! equal to air temperature (curtained windows, ceiling air distribution).

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct FangerParams {
    pub air_velocity_m_s: f64,
    pub relative_humidity_pct: f64,
    pub clothing_clo: f64,
    pub metabolic_met: f64,
    pub external_work_met: f64,
}

impl Default for FangerParams {
    fn default() -> Self {
        Self {
            air_velocity_m_s: 0.1,
            relative_humidity_pct: 50.0,
            clothing_clo: 0.5,
            metabolic_met: 1.2,
            external_work_met: 0.0,
        }
    }
}

/// Predicted mean vote at air temperature `t_air` (MRT = air temperature).
pub fn pmv(t_air: f64, p: &FangerParams) -> f64 {
    let m = p.metabolic_met * 58.15;
    let w = p.external_work_met * 58.15;
    let mw = m - w;
    let icl = 0.155 * p.clothing_clo;
    let fcl = if icl <= 0.078 {
        1.0 + 1.29 * icl
    } else {
        1.05 + 0.645 * icl
    };
    let pa = p.relative_humidity_pct * 10.0 * (16.6536 - 4030.183 / (t_air + 235.0)).exp();
    let t_r = t_air;
    let taa = t_air + 273.0;
    let tra = t_r + 273.0;

    // Clothing surface temperature by fixed-point iteration.
    let p1 = icl * fcl;
    let p2 = p1 * 3.96;
    let p3 = p1 * 100.0;
    let p4 = p1 * taa;
    let p5 = 308.7 - 0.028 * mw + p2 * (tra / 100.0).powi(4);
    let hcf = 12.1 * p.air_velocity_m_s.sqrt();
    let mut xn = taa / 100.0;
    let mut xf = xn;
    let mut hc = hcf;
    for _ in 0..200 {
        xf = (xf + xn) / 2.0;
        let hcn = 2.38 * (100.0 * xf - taa).abs().powf(0.25);
        hc = hcf.max(hcn);
        xn = (p5 + p4 * hc - p2 * xf.powi(4)) / (100.0 + p3 * hc);
        if (xn - xf).abs() <= 1e-6 {
            break;
        }
    }
    let tcl = 100.0 * xn - 273.0;

    let hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa);
    let hl2 = if mw > 58.15 { 0.42 * (mw - 58.15) } else { 0.0 };
    let hl3 = 1.7e-5 * m * (5867.0 - pa);
    let hl4 = 0.0014 * m * (34.0 - t_air);
    let hl5 = 3.96 * fcl * (xn.powi(4) - (tra / 100.0).powi(4));
    let hl6 = fcl * hc * (tcl - t_air);

    let sensitivity = 0.303 * (-0.036 * m).exp() + 0.028;
    sensitivity * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6)
}

/// Predicted percentage of dissatisfied occupants, in \[5, 100).
pub fn ppd_from_pmv(pmv: f64) -> f64 {
    100.0 - 95.0 * (-0.03353 * pmv.powi(4) - 0.2179 * pmv.powi(2)).exp()
}

#[derive(Clone, Debug)]
pub struct ComfortReport {
    pub pmv: Vec<f64>,
    pub ppd: Vec<f64>,
    pub mean_ppd: f64,
}

/// Comfort indices along an indoor-temperature trace.
pub fn comfort_metrics(y: &[f64], params: &FangerParams) -> ComfortReport {
    let pmv_series: Vec<f64> = y.iter().map(|&t| pmv(t, params)).collect();
    let ppd_series: Vec<f64> = pmv_series.iter().map(|&v| ppd_from_pmv(v)).collect();
    let mean_ppd = if ppd_series.is_empty() {
        0.0
    } else {
        ppd_series.iter().sum::<f64>() / ppd_series.len() as f64
    };
    ComfortReport {
        pmv: pmv_series,
        ppd: ppd_series,
        mean_ppd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ppd_at_neutral_vote_is_five_percent() {
        assert_abs_diff_eq!(ppd_from_pmv(0.0), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn ppd_is_even() {
        for i in 0..50 {
            let v = i as f64 * 0.06;
            assert_abs_diff_eq!(ppd_from_pmv(v), ppd_from_pmv(-v), epsilon = 1e-12);
        }
    }

    #[test]
    fn ppd_is_monotone_in_magnitude() {
        let mut prev = ppd_from_pmv(0.0);
        for i in 1..=100 {
            let v = i as f64 * 0.03;
            let cur = ppd_from_pmv(v);
            assert!(cur > prev, "PPD not increasing at |PMV| = {v}");
            prev = cur;
        }
    }

    #[test]
    fn pmv_increases_with_temperature() {
        let p = FangerParams::default();
        let mut prev = pmv(18.0, &p);
        for i in 1..=24 {
            let t = 18.0 + i as f64 * 0.5;
            let cur = pmv(t, &p);
            assert!(cur > prev, "PMV not increasing at {t} degC");
            prev = cur;
        }
    }

    #[test]
    fn summer_band_is_roughly_neutral() {
        // With 0.5 clo / 1.2 met the comfort band sits in the mid-20s.
        let p = FangerParams::default();
        let v24 = pmv(24.0, &p);
        assert!(v24.abs() < 0.6, "PMV(24) = {v24}");
        let v26 = pmv(26.0, &p);
        assert!(v26 > v24 && v26 < 1.0, "PMV(26) = {v26}");
        // Comfort bound from the European classroom standard.
        assert!(ppd_from_pmv(v24) < 10.0);
    }

    #[test]
    fn metrics_aggregate_means() {
        let p = FangerParams::default();
        let r = comfort_metrics(&[24.0, 25.0, 26.0], &p);
        assert_eq!(r.pmv.len(), 3);
        assert_eq!(r.ppd.len(), 3);
        let manual = (r.ppd[0] + r.ppd[1] + r.ppd[2]) / 3.0;
        assert_abs_diff_eq!(r.mean_ppd, manual, epsilon = 1e-12);
    }
}
