use ddpc_core::data::{DdpHyper, Mode};
use ddpc_core::eval::{mae_eval, sensitivity_sweep, PredictorPolicy, SplitSpec, SweepGrid};
use ddpc_core::sim::{gen_weather, PlantModel, PlantParams, PlantState, WeatherModel};
use ddpc_core::data::OperationalDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plant_dataset(days: usize, params: &PlantParams, seed: u64) -> OperationalDataset {
    let plant = PlantModel::from_params(params);
    let weather = WeatherModel { noise_std_c: 2.0, ..WeatherModel::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = OperationalDataset::default();
    let w0 = gen_weather(&weather, seed, 0).truth[0];
    let mut state = PlantState { x: plant.steady_state(4.0, &w0, Mode::Cooling, 0), day: 0 };
    let mut t = 0i64;
    for day in 0..days {
        state.day = day as u32;
        let w_day = gen_weather(&weather, seed, day as u64);
        for step in 0..96 {
            let u = rng.gen_range(2.4..7.0);
            let w = w_day.truth[step];
            let (p_h, y) = plant.step(&mut state, u, &w, Mode::Cooling, &mut rng);
            dataset.push_sample(t, Mode::Cooling, p_h, &w, y);
            t += 1;
        }
    }
    dataset
}

#[test]
#[ignore]
fn probe_drift_96() {
    let params = PlantParams { drift_rate_per_day: 0.01, sigma_y: 0.05, sigma_u: 0.0, ..PlantParams::default() };
    let dataset = plant_dataset(40, &params, 17);
    let h = DdpHyper { data_len: 960, t_init: 12, horizon: 96, reg_weight: 0.01, state_order: 3, consistency_eta: 0.8 };
    let split = SplitSpec { build_days: 10, validation_days: 2, stride: 12 };
    let adaptive = mae_eval(&dataset, &h, Mode::Cooling, PredictorPolicy::AdaptiveDaily, &split).unwrap();
    println!("N=96 adaptive: mae {} accepted {} rejected {}", adaptive.test.mae, adaptive.updates_accepted, adaptive.updates_rejected);
    let fixed = mae_eval(&dataset, &h, Mode::Cooling, PredictorPolicy::Fixed, &split).unwrap();
    println!("N=96 fixed: mae {} ratio {:.3}", fixed.test.mae, adaptive.test.mae / fixed.test.mae);

    // plateau probe
    let params2 = PlantParams { sigma_y: 0.1, sigma_u: 0.0, ..PlantParams::default() };
    let d2 = plant_dataset(12, &params2, 23);
    let grid = SweepGrid { reg_weights: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0], data_lens: vec![480], t_inits: vec![12], horizon: 12 };
    let split2 = SplitSpec { build_days: 5, validation_days: 3, stride: 8 };
    let rows = sensitivity_sweep(&grid, &d2, Mode::Cooling, &DdpHyper { data_len: 480, t_init: 12, horizon: 12, reg_weight: 0.01, state_order: 3, consistency_eta: 0.8 }, &split2).unwrap();
    for r in rows {
        println!("e_g {:>8}: val {:.5} test {:.5}", r.e_g, r.mae_validation, r.mae_test);
    }
}
