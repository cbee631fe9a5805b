//! Weather and grid-signal generators.
//!
//! Both are deterministic in `(seed, day)`: every day's trace is generated
//! from its own substream, so runs are reproducible and scenarios can be
//! drawn independently of the simulated days.

use crate::data::STEPS_PER_DAY;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plant::gaussian;

/// Fine steps per 15-minute control step (4-second sampling).
pub const FINE_STEPS_PER_SLOW: usize = 225;
/// Fine steps per day.
pub const FINE_STEPS_PER_DAY: usize = FINE_STEPS_PER_SLOW * STEPS_PER_DAY;

pub(crate) fn substream(seed: u64, tag: u64, day: u64) -> ChaCha8Rng {
    // SplitMix64-style mixing keeps the substreams decorrelated.
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(tag.wrapping_add(1)))
        .wrapping_add(0xbf58476d1ce4e5b9u64.wrapping_mul(day.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct WeatherModel {
    /// Daily mean outdoor temperature \[degC\].
    pub mean_c: f64,
    /// Half peak-to-trough swing \[degC\], warmest at `peak_hour`.
    pub amplitude_c: f64,
    pub peak_hour: f64,
    /// Slow AR(1) noise std on temperature \[degC\].
    pub noise_std_c: f64,
    /// Midday solar peak \[kW/m2\].
    pub solar_peak: f64,
    /// Forecast error half-widths (temperature, solar).
    pub forecast_radius: [f64; 2],
}

impl Default for WeatherModel {
    fn default() -> Self {
        Self {
            mean_c: 27.0,
            amplitude_c: 4.0,
            peak_hour: 15.0,
            noise_std_c: 0.4,
            solar_peak: 0.7,
            forecast_radius: [0.2, 0.05],
        }
    }
}

/// One day of weather on the 15-minute grid: per step
/// `(outdoor temperature, solar radiation)` truth and forecast, with
/// `|forecast - truth|` strictly inside the forecast radius.
#[derive(Clone, Debug)]
pub struct WeatherDay {
    pub truth: Vec<[f64; 2]>,
    pub forecast: Vec<[f64; 2]>,
}

pub fn gen_weather(model: &WeatherModel, seed: u64, day: u64) -> WeatherDay {
    let mut rng = substream(seed, 0x57ea, day);
    let day_offset = gaussian(&mut rng) * 0.8;
    let cloud_factor: f64 = rng.gen_range(0.75..1.0);
    let mut ar = 0.0;
    let mut truth = Vec::with_capacity(STEPS_PER_DAY);
    for step in 0..STEPS_PER_DAY {
        let hour = step as f64 * 0.25;
        let phase = 2.0 * std::f64::consts::PI * (hour - model.peak_hour) / 24.0;
        ar = 0.9 * ar + model.noise_std_c * gaussian(&mut rng) * (1.0 - 0.9f64.powi(2)).sqrt();
        let temp = model.mean_c + day_offset + model.amplitude_c * phase.cos() + ar;
        let solar = if (6.0..18.0).contains(&hour) {
            let s = model.solar_peak
                * cloud_factor
                * (std::f64::consts::PI * (hour - 6.0) / 12.0).sin();
            (s + 0.02 * gaussian(&mut rng)).max(0.0)
        } else {
            0.0
        };
        truth.push([temp, solar]);
    }
    let mut forecast = Vec::with_capacity(STEPS_PER_DAY);
    for t in &truth {
        let et = rng.gen_range(-0.95..0.95) * model.forecast_radius[0];
        let es = rng.gen_range(-0.95..0.95) * model.forecast_radius[1];
        // Solar forecasts stay nonnegative and exactly zero at night.
        let fs = if t[1] == 0.0 { 0.0 } else { (t[1] + es).max(0.0) };
        forecast.push([t[0] + et, fs]);
    }
    WeatherDay { truth, forecast }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AgcModel {
    /// Mean-reversion factor per 4-second step.
    pub mean_reversion: f64,
    /// Innovation std per step.
    pub noise_std: f64,
}

impl Default for AgcModel {
    fn default() -> Self {
        Self {
            mean_reversion: 0.9985,
            noise_std: 0.022,
        }
    }
}

/// One day of the normalized grid regulation signal: the 4-second trace
/// and its 15-minute block averages, all clipped to \[-1, 1\].
#[derive(Clone, Debug)]
pub struct AgcDay {
    pub fine: Vec<f64>,
    pub block_avg: Vec<f64>,
}

pub fn gen_agc(model: &AgcModel, seed: u64, day: u64) -> AgcDay {
    let mut rng = substream(seed, 0xa6c, day);
    let stationary_std =
        model.noise_std / (1.0 - model.mean_reversion * model.mean_reversion).sqrt();
    let mut alpha = (gaussian(&mut rng) * stationary_std).clamp(-1.0, 1.0);
    let mut fine = Vec::with_capacity(FINE_STEPS_PER_DAY);
    for _ in 0..FINE_STEPS_PER_DAY {
        alpha = (model.mean_reversion * alpha + model.noise_std * gaussian(&mut rng))
            .clamp(-1.0, 1.0);
        fine.push(alpha);
    }
    let block_avg = (0..STEPS_PER_DAY)
        .map(|b| {
            fine[b * FINE_STEPS_PER_SLOW..(b + 1) * FINE_STEPS_PER_SLOW]
                .iter()
                .sum::<f64>()
                / FINE_STEPS_PER_SLOW as f64
        })
        .collect();
    AgcDay { fine, block_avg }
}

/// Library of historical-day block-average scenarios for the planner.
pub fn scenario_library(model: &AgcModel, seed: u64, n_scen: usize) -> Vec<Vec<f64>> {
    (0..n_scen)
        .map(|j| gen_agc(model, seed, 1_000_000 + j as u64).block_avg)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weather_forecast_stays_inside_box() {
        let m = WeatherModel::default();
        for day in 0..5 {
            let w = gen_weather(&m, 7, day);
            for (t, f) in w.truth.iter().zip(&w.forecast) {
                assert!((f[0] - t[0]).abs() <= m.forecast_radius[0]);
                assert!((f[1] - t[1]).abs() <= m.forecast_radius[1]);
            }
        }
    }

    #[test]
    fn solar_is_zero_at_night() {
        let w = gen_weather(&WeatherModel::default(), 3, 0);
        for (step, t) in w.truth.iter().enumerate() {
            let hour = step as f64 * 0.25;
            if !(6.0..18.0).contains(&hour) {
                assert_eq!(t[1], 0.0);
                assert_eq!(w.forecast[step][1], 0.0);
            }
            assert!(t[1] >= 0.0);
        }
    }

    #[test]
    fn weather_is_reproducible() {
        let m = WeatherModel::default();
        let a = gen_weather(&m, 11, 4);
        let b = gen_weather(&m, 11, 4);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.forecast, b.forecast);
    }

    #[test]
    fn agc_is_clipped_and_reproducible() {
        let m = AgcModel::default();
        let a = gen_agc(&m, 5, 2);
        let b = gen_agc(&m, 5, 2);
        assert_eq!(a.fine, b.fine);
        assert!(a.fine.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(a.block_avg.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(a.block_avg.len(), STEPS_PER_DAY);
    }

    #[test]
    fn agc_long_run_mean_is_small() {
        let m = AgcModel::default();
        let mut sum = 0.0;
        let mut count = 0usize;
        for day in 0..30 {
            let a = gen_agc(&m, 13, day);
            sum += a.fine.iter().sum::<f64>();
            count += a.fine.len();
        }
        let mean = sum / count as f64;
        assert!(mean.abs() <= 0.05, "long-run mean {mean}");
    }
}
