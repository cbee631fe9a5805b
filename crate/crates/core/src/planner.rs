//! Day-ahead scenario planner.
//!
//! Once per day the planner maximizes the power flexibility it can bid,
//! subject to building comfort (through the data-driven predictor),
//! battery limits, and exact baseline tracking under every collected
//! grid-signal scenario. Intraday baseline corrections are anticipated by
//! a causal recursion that zeroes the accumulated signal, which keeps the
//! bid from being throttled by long one-sided signal runs.

use crate::data::InitWindow;
use crate::ddp::{adaptive_update, DdpPredictor, DdpState, RejectReason};
use crate::exec;
use crate::qp::{LinExpr, QpBuilder, QpError, QpSettings, VarId};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum PlannerError {
    #[error("no scenarios")]
    NoScenarios,
    #[error("scenario {index} has {len} steps, expected {expected}")]
    ScenarioLength {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("scenario value {0} outside [-1, 1]")]
    ScenarioOutOfRange(f64),
    #[error("planner needs at least one of building or storage")]
    NoDevices,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("solver: {0}")]
    Solver(#[from] QpError),
}

/// Historical grid-signal scenarios, one day each on the planning grid.
#[derive(Clone, Debug)]
pub struct ScenarioSet {
    rows: Vec<Vec<f64>>,
    pub provenance: String,
}

impl ScenarioSet {
    pub fn new(rows: Vec<Vec<f64>>, provenance: impl Into<String>) -> Result<Self, PlannerError> {
        if rows.is_empty() {
            return Err(PlannerError::NoScenarios);
        }
        let expected = rows[0].len();
        for (index, r) in rows.iter().enumerate() {
            if r.len() != expected {
                return Err(PlannerError::ScenarioLength {
                    index,
                    len: r.len(),
                    expected,
                });
            }
            if let Some(v) = r.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
                return Err(PlannerError::ScenarioOutOfRange(*v));
            }
        }
        Ok(Self {
            rows,
            provenance: provenance.into(),
        })
    }

    pub fn n_scen(&self) -> usize {
        self.rows.len()
    }

    pub fn steps(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    /// Per-step mean over all scenarios.
    pub fn mean_profile(&self) -> Vec<f64> {
        let steps = self.steps();
        let mut mean = vec![0.0; steps];
        for r in &self.rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.n_scen() as f64;
        }
        mean
    }

    /// Copy extended by one scenario (oracle tests shrink-check the bid).
    pub fn with_added(&self, row: Vec<f64>) -> Result<Self, PlannerError> {
        let mut rows = self.rows.clone();
        rows.push(row);
        Self::new(rows, self.provenance.clone())
    }
}

/// Causal intraday-transaction prediction for one scenario.
///
/// The first three steps are already committed (45-minute rule) and stay
/// zero. From step 4 on, the transaction is the unique value zeroing the
/// accumulated sum of past transactions plus signals: realized signals are
/// known up to the commitment lead, the scenario mean estimates the rest.
pub fn predict_intraday(alpha_scenario: &[f64], alpha_mean: &[f64]) -> Vec<f64> {
    assert_eq!(
        alpha_scenario.len(),
        alpha_mean.len(),
        "scenario and mean profiles must share the grid"
    );
    let steps = alpha_scenario.len();
    let mut p = vec![0.0; steps];
    if steps < 4 {
        return p;
    }
    // Running sum of the known part (a): transactions and realized signal
    // through step i-4.
    let mut known = 0.0;
    for i in 3..steps {
        if i >= 4 {
            known += p[i - 4] + alpha_scenario[i - 4];
        }
        let recent: f64 = (i - 3..i).map(|k| p[k] + alpha_mean[k]).sum();
        p[i] = -(known + recent + alpha_mean[i]);
    }
    p
}

/// Day-ahead result: flexibility bid and the per-step power baseline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SfcPlan {
    pub gamma_kw: f64,
    pub baseline_kw: Vec<f64>,
}

impl SfcPlan {
    /// `gamma_kw` header line followed by `step,baseline_kw` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "gamma_kw,{}", self.gamma_kw)?;
        writeln!(w, "step,baseline_kw")?;
        for (i, b) in self.baseline_kw.iter().enumerate() {
            writeln!(w, "{i},{b}")?;
        }
        Ok(())
    }
}

/// Linear storage model used inside the planning program.
#[derive(Clone, Copy, Debug)]
pub struct EssPlanModel {
    pub soc_init_kwh: f64,
    pub soc_min_kwh: f64,
    pub soc_max_kwh: f64,
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub dt_hours: f64,
}

/// Building block of the planning program.
pub struct BuildingPlanInput<'a> {
    pub predictor: &'a DdpPredictor,
    pub init: &'a InitWindow,
    /// Disturbance forecast over the planning horizon, `n_w` per step.
    pub w_forecast: &'a [f64],
    pub u_min_kw: f64,
    pub u_max_kw: f64,
    pub y_min_c: f64,
    pub y_max_c: f64,
}

pub struct PlannerInputs<'a> {
    pub building: Option<BuildingPlanInput<'a>>,
    pub ess: Option<EssPlanModel>,
    pub scenarios: &'a ScenarioSet,
    /// Previous day's baseline, anchoring the optional drift regularizer.
    pub previous_baseline: Option<&'a [f64]>,
}

#[derive(Clone, Copy, Debug)]
pub struct PlannerConfig {
    /// Weight of the baseline-drift regularizer (0 disables it).
    pub w_base: f64,
    /// Linear penalty per unit of comfort/storage bound violation.
    pub rho_slack: f64,
    pub settings: QpSettings,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            w_base: 0.0,
            rho_slack: 1e4,
            settings: QpSettings::default(),
        }
    }
}

/// Solves the day-ahead scenario program and returns the bid.
///
/// Decision variables are the flexibility, the baseline, and per-scenario
/// copies of the device trajectories; every scenario must be trackable
/// exactly, comfort and state-of-charge bounds are softened by penalized
/// slacks so the program stays feasible.
pub fn plan_day_ahead(
    inputs: &PlannerInputs,
    cfg: &PlannerConfig,
) -> Result<SfcPlan, PlannerError> {
    let scenarios = inputs.scenarios;
    let steps = scenarios.steps();
    if inputs.building.is_none() && inputs.ess.is_none() {
        return Err(PlannerError::NoDevices);
    }
    if let Some(b) = &inputs.building {
        if b.predictor.dims.horizon != steps {
            return Err(PlannerError::DimensionMismatch(format!(
                "predictor horizon {} vs scenario steps {}",
                b.predictor.dims.horizon, steps
            )));
        }
        if b.w_forecast.len() != steps * b.predictor.dims.n_w {
            return Err(PlannerError::DimensionMismatch(format!(
                "w_forecast length {} vs expected {}",
                b.w_forecast.len(),
                steps * b.predictor.dims.n_w
            )));
        }
    }
    if let Some(p) = inputs.previous_baseline {
        if p.len() != steps {
            return Err(PlannerError::DimensionMismatch(format!(
                "previous baseline length {} vs {steps}",
                p.len()
            )));
        }
    }

    // Transaction predictions are independent per scenario.
    let mean = scenarios.mean_profile();
    let jobs: Vec<usize> = (0..scenarios.n_scen()).collect();
    let p_int: Vec<Vec<f64>> =
        exec::map_collect(jobs, |j| predict_intraday(scenarios.row(j), &mean));

    // Nominal output trajectory shared by all scenarios (same init data
    // and weather forecast; only the input copies differ).
    let y_base: Option<DVector<f64>> = inputs.building.as_ref().map(|b| {
        let p = b.predictor;
        &p.p_y_init * DVector::from_column_slice(&b.init.y_init)
            + &p.p_u_init * DVector::from_column_slice(&b.init.u_init)
            + &p.p_w_init * DVector::from_column_slice(&b.init.w_init)
            + &p.p_w_pred * DVector::from_column_slice(b.w_forecast)
    });

    let mut qp = QpBuilder::new();
    let gamma = qp.add_var();
    qp.bound_var(gamma, Some(0.0), None);
    qp.add_linear_cost(&LinExpr::var(gamma), -1.0);
    let p_bar = qp.add_vars(steps);

    for j in 0..scenarios.n_scen() {
        let alpha = scenarios.row(j);
        let u_j: Option<Vec<VarId>> = inputs.building.as_ref().map(|b| {
            let vars = qp.add_vars(steps);
            for v in &vars {
                qp.bound_var(*v, Some(b.u_min_kw), Some(b.u_max_kw));
            }
            vars
        });
        let pe_j: Option<Vec<VarId>> = inputs.ess.map(|e| {
            let vars = qp.add_vars(steps);
            for v in &vars {
                qp.bound_var(*v, Some(e.p_min_kw), Some(e.p_max_kw));
            }
            vars
        });

        // Tracking: total power == baseline + transaction + gamma * alpha.
        for k in 0..steps {
            let mut lhs = LinExpr::zero();
            if let Some(u) = &u_j {
                lhs.add_term(u[k], 1.0);
            }
            if let Some(pe) = &pe_j {
                lhs.add_term(pe[k], 1.0);
            }
            lhs.add_term(p_bar[k], -1.0);
            lhs.add_term(gamma, -alpha[k]);
            qp.add_eq(&lhs, p_int[j][k]);
        }

        if let (Some(b), Some(u)) = (&inputs.building, &u_j) {
            let y0 = y_base.as_ref().expect("built alongside building input");
            for k in 0..steps {
                let slack = qp.add_var();
                qp.bound_var(slack, Some(0.0), None);
                qp.add_linear_cost(&LinExpr::var(slack), cfg.rho_slack);
                let mut y = LinExpr::constant(y0[k]);
                for (i, ui) in u.iter().enumerate() {
                    let c = b.predictor.p_u_pred[(k, i)];
                    if c != 0.0 {
                        y.add_term(*ui, c);
                    }
                }
                let mut upper = y.clone();
                upper.add_term(slack, -1.0);
                qp.add_le(&upper, b.y_max_c);
                let mut lower = y.times(-1.0);
                lower.add_term(slack, -1.0);
                qp.add_le(&lower, -b.y_min_c);
            }
        }

        if let (Some(e), Some(pe)) = (inputs.ess, &pe_j) {
            // Explicit per-step state variables keep the program sparse:
            // the recursion is bidiagonal instead of a growing sum.
            let mut prev: Option<VarId> = None;
            for pk in pe.iter().take(steps) {
                let soc = qp.add_var();
                let mut recursion = LinExpr::var(soc);
                recursion.add_term(*pk, -e.dt_hours);
                match prev {
                    Some(p) => {
                        recursion.add_term(p, -1.0);
                        qp.add_eq(&recursion, 0.0);
                    }
                    None => qp.add_eq(&recursion, e.soc_init_kwh),
                }
                let slack = qp.add_var();
                qp.bound_var(slack, Some(0.0), None);
                qp.add_linear_cost(&LinExpr::var(slack), cfg.rho_slack);
                let mut upper = LinExpr::var(soc);
                upper.add_term(slack, -1.0);
                qp.add_le(&upper, e.soc_max_kwh);
                let mut lower = LinExpr::scaled_var(soc, -1.0);
                lower.add_term(slack, -1.0);
                qp.add_le(&lower, -e.soc_min_kwh);
                prev = Some(soc);
            }
        }

        if cfg.w_base > 0.0 {
            if let Some(prev) = inputs.previous_baseline {
                for k in 0..steps {
                    // Total scenario power relative to yesterday's baseline.
                    let mut total = LinExpr::constant(-prev[k]);
                    if let Some(u) = &u_j {
                        total.add_term(u[k], 1.0);
                    }
                    if let Some(pe) = &pe_j {
                        total.add_term(pe[k], 1.0);
                    }
                    qp.add_quadratic_cost(&total, cfg.w_base);
                }
            }
        }
    }

    let sol = qp.solve(&cfg.settings)?;
    Ok(SfcPlan {
        gamma_kw: sol.x[gamma.0].max(0.0),
        baseline_kw: p_bar.iter().map(|v| sol.x[v.0]).collect(),
    })
}

/// State the planner carries between daily cycles.
pub struct PlannerCycleState {
    pub ddp: DdpState,
    pub previous_baseline: Option<Vec<f64>>,
}

pub struct PlannerCycleInputs<'a> {
    pub new_segments: &'a [crate::data::OperationalSegment],
    pub init: InitWindow,
    pub w_forecast: Vec<f64>,
    pub scenarios: &'a ScenarioSet,
    pub ess: Option<EssPlanModel>,
    pub u_min_kw: f64,
    pub u_max_kw: f64,
    pub y_min_c: f64,
    pub y_max_c: f64,
}

#[derive(Clone, Debug)]
pub struct PlannerCycleReport {
    pub update_attempted: bool,
    pub update_accepted: bool,
    pub update_reasons: Vec<RejectReason>,
}

/// Daily planner cycle: refresh the predictor from the latest data (a
/// rejected refresh is logged, not fatal), then solve the day-ahead
/// program with the surviving predictor.
pub fn run_planner_cycle(
    state: &mut PlannerCycleState,
    inputs: &PlannerCycleInputs,
    cfg: &PlannerConfig,
) -> Result<(SfcPlan, PlannerCycleReport), PlannerError> {
    let hyper = state.ddp.predictor.hyper;
    let mut report = PlannerCycleReport {
        update_attempted: false,
        update_accepted: false,
        update_reasons: Vec::new(),
    };
    if !inputs.new_segments.is_empty() {
        let outcome = adaptive_update(&state.ddp, inputs.new_segments, &hyper);
        report.update_attempted = true;
        report.update_accepted = outcome.accepted;
        report.update_reasons = outcome.reasons.clone();
        state.ddp = outcome.state;
    }
    let plan = plan_day_ahead(
        &PlannerInputs {
            building: Some(BuildingPlanInput {
                predictor: &state.ddp.predictor,
                init: &inputs.init,
                w_forecast: &inputs.w_forecast,
                u_min_kw: inputs.u_min_kw,
                u_max_kw: inputs.u_max_kw,
                y_min_c: inputs.y_min_c,
                y_max_c: inputs.y_max_c,
            }),
            ess: inputs.ess,
            scenarios: inputs.scenarios,
            previous_baseline: state.previous_baseline.as_deref(),
        },
        cfg,
    )?;
    state.previous_baseline = Some(plan.baseline_kw.clone());
    Ok((plan, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn intraday_zero_signal_gives_zero_transactions() {
        let zeros = vec![0.0; 96];
        let p = predict_intraday(&zeros, &zeros);
        assert!(p.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn intraday_accumulation_is_zeroed_each_step() {
        // Definition oracle: after choosing step i, the accumulated
        // objective |part(a) + part(b)| must be exactly zero.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let alpha: Vec<f64> = (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean: Vec<f64> = (0..96).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let p = predict_intraday(&alpha, &mean);
        assert_eq!(&p[..3], &[0.0, 0.0, 0.0]);
        for i in 3usize..96 {
            let part_a: f64 = (0..i.saturating_sub(3)).map(|k| p[k] + alpha[k]).sum();
            let part_b: f64 = (i - 3..=i).map(|k| p[k] + mean[k]).sum();
            assert!(
                (part_a + part_b).abs() <= 1e-12,
                "step {i}: accumulated {:.3e}",
                part_a + part_b
            );
        }
    }

    #[test]
    fn intraday_grid_search_oracle() {
        // At each step the closed form must beat every candidate on a
        // fine grid of alternative transactions.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let alpha: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean: Vec<f64> = (0..40).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let p = predict_intraday(&alpha, &mean);
            for i in 3usize..40 {
                let objective = |candidate: f64| -> f64 {
                    let part_a: f64 =
                        (0..i.saturating_sub(3)).map(|k| p[k] + alpha[k]).sum();
                    let mut part_b: f64 = (i - 3..i).map(|k| p[k] + mean[k]).sum();
                    part_b += candidate + mean[i];
                    (part_a + part_b).abs()
                };
                let best = objective(p[i]);
                for g in -40..=40 {
                    let candidate = p[i] + g as f64 * 0.1;
                    assert!(
                        best <= objective(candidate) + 1e-12,
                        "step {i}: closed form beaten at offset {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn intraday_hand_recursion_example() {
        let mut alpha = vec![0.0; 12];
        alpha[..4].fill(1.0);
        let mean = vec![0.0; 12];
        let p = predict_intraday(&alpha, &mean);
        let expected = [0.0, 0.0, 0.0, 0.0, -1.0, -1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        for (got, want) in p.iter().zip(&expected) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    fn ess_model(soc: f64) -> EssPlanModel {
        EssPlanModel {
            soc_init_kwh: soc,
            soc_min_kwh: 0.25,
            soc_max_kwh: 5.0,
            p_min_kw: -5.0,
            p_max_kw: 5.0,
            dt_hours: 0.25,
        }
    }

    /// Two opposite constant scenarios: transactions vanish (mean is zero)
    /// and the optimum is hand-computable.
    fn constant_scenarios(steps: usize) -> ScenarioSet {
        ScenarioSet::new(vec![vec![1.0; steps], vec![-1.0; steps]], "hand").unwrap()
    }

    #[test]
    fn storage_only_bid_matches_hand_optimum() {
        // With scenarios of +-1 on 4 steps, the battery energy band is the
        // binding limit: soc_init 2.625, dt 0.25 h => gamma* = 2.375.
        let scenarios = constant_scenarios(4);
        let plan = plan_day_ahead(
            &PlannerInputs {
                building: None,
                ess: Some(ess_model(2.625)),
                scenarios: &scenarios,
                previous_baseline: None,
            },
            &PlannerConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(plan.gamma_kw, 2.375, epsilon = 1e-5);
    }

    #[test]
    fn empty_scenarios_are_rejected() {
        assert!(matches!(
            ScenarioSet::new(vec![], "x"),
            Err(PlannerError::NoScenarios)
        ));
    }

    #[test]
    fn out_of_range_scenarios_are_rejected() {
        assert!(matches!(
            ScenarioSet::new(vec![vec![0.0, 1.4]], "x"),
            Err(PlannerError::ScenarioOutOfRange(_))
        ));
    }

    #[test]
    fn no_devices_is_an_error() {
        let scenarios = constant_scenarios(4);
        assert!(matches!(
            plan_day_ahead(
                &PlannerInputs {
                    building: None,
                    ess: None,
                    scenarios: &scenarios,
                    previous_baseline: None,
                },
                &PlannerConfig::default(),
            ),
            Err(PlannerError::NoDevices)
        ));
    }

    #[test]
    fn adding_a_scenario_never_raises_the_bid() {
        let scenarios = constant_scenarios(4);
        let cfg = PlannerConfig::default();
        let base = plan_day_ahead(
            &PlannerInputs {
                building: None,
                ess: Some(ess_model(2.625)),
                scenarios: &scenarios,
                previous_baseline: None,
            },
            &cfg,
        )
        .unwrap();
        // A harsher scenario: early sustained draw.
        let harsher = scenarios
            .with_added(vec![1.0, 1.0, 1.0, -1.0])
            .unwrap();
        let shrunk = plan_day_ahead(
            &PlannerInputs {
                building: None,
                ess: Some(ess_model(2.625)),
                scenarios: &harsher,
                previous_baseline: None,
            },
            &cfg,
        )
        .unwrap();
        assert!(shrunk.gamma_kw <= base.gamma_kw + 1e-6);
        assert!(shrunk.gamma_kw >= 0.0);
    }

    #[test]
    fn building_only_bid_matches_power_headroom() {
        // Wide output band: the building contributes pure power flex and
        // the hand optimum is half the input range.
        let plant = TestPlant::new();
        let (pred, init) = plant.predictor_and_init(4);
        let scenarios = constant_scenarios(4);
        let plan = plan_day_ahead(
            &PlannerInputs {
                building: Some(BuildingPlanInput {
                    predictor: &pred,
                    init: &init,
                    w_forecast: &vec![0.0; 4],
                    u_min_kw: 2.4,
                    u_max_kw: 8.4,
                    y_min_c: -1e3,
                    y_max_c: 1e3,
                }),
                ess: None,
                scenarios: &scenarios,
                previous_baseline: None,
            },
            &PlannerConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(plan.gamma_kw, 3.0, epsilon = 1e-5);
    }

    #[test]
    fn all_zero_scenarios_leave_the_bid_unbounded() {
        // With every scenario identically zero the bid multiplies nothing
        // and maximizing it is unbounded; the solver must say so.
        let scenarios = ScenarioSet::new(vec![vec![0.0; 4], vec![0.0; 4]], "zero").unwrap();
        let err = plan_day_ahead(
            &PlannerInputs {
                building: None,
                ess: Some(ess_model(2.625)),
                scenarios: &scenarios,
                previous_baseline: None,
            },
            &PlannerConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PlannerError::Solver(QpError::Unbounded)), "{err:?}");
    }

    #[test]
    fn slack_keeps_impossible_comfort_feasible() {
        // An output band the plant cannot reach: the program still solves
        // through the penalized slacks and the bid stays nonnegative.
        let plant = TestPlant::new();
        let (pred, init) = plant.predictor_and_init(4);
        let scenarios = constant_scenarios(4);
        let plan = plan_day_ahead(
            &PlannerInputs {
                building: Some(BuildingPlanInput {
                    predictor: &pred,
                    init: &init,
                    w_forecast: &vec![0.0; 4],
                    u_min_kw: 2.4,
                    u_max_kw: 8.4,
                    y_min_c: 500.0,
                    y_max_c: 501.0,
                }),
                ess: Some(ess_model(2.625)),
                scenarios: &scenarios,
                previous_baseline: None,
            },
            &PlannerConfig::default(),
        )
        .unwrap();
        assert!(plan.gamma_kw >= 0.0);
    }

    /// Tiny plant wrapper producing a predictor for planner desk tests.
    struct TestPlant {
        a: nalgebra::DMatrix<f64>,
        b_u: DVector<f64>,
        b_w: DVector<f64>,
        c: nalgebra::DMatrix<f64>,
    }

    impl TestPlant {
        fn new() -> Self {
            Self {
                a: nalgebra::DMatrix::from_row_slice(2, 2, &[0.7, 0.1, 0.0, 0.5]),
                b_u: DVector::from_column_slice(&[-0.4, -0.2]),
                b_w: DVector::from_column_slice(&[0.2, 0.1]),
                c: nalgebra::DMatrix::from_row_slice(1, 2, &[1.0, 0.5]),
            }
        }

        fn predictor_and_init(&self, horizon: usize) -> (DdpPredictor, InitWindow) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
            let len = 150;
            let mut x = DVector::zeros(2);
            let mut u = Vec::new();
            let mut w = Vec::new();
            let mut y = Vec::new();
            for _ in 0..len {
                let ut = rng.gen_range(2.0..8.0);
                let wt = rng.gen_range(-1.0..1.0);
                x = &self.a * x + &self.b_u * ut + &self.b_w * wt;
                u.push(ut);
                w.push(wt);
                y.push((&self.c * &x)[0]);
            }
            let seg = crate::data::OperationalSegment::new(0, crate::data::Mode::Cooling, 1, u, w, y)
                .unwrap();
            let hyper = crate::data::DdpHyper {
                data_len: len,
                t_init: 4,
                horizon,
                reg_weight: 1e-6,
                state_order: 2,
                consistency_eta: 0.8,
            };
            let set =
                crate::data::stack_segments(&[seg], &hyper, crate::data::Mode::Cooling).unwrap();
            let pred = crate::ddp::build_predictor(&set, &hyper).unwrap();
            let init = InitWindow {
                y_init: vec![0.0; 4],
                u_init: vec![0.0; 4],
                w_init: vec![0.0; 4],
            };
            (pred, init)
        }
    }

    #[test]
    fn planner_is_deterministic() {
        let scenarios = constant_scenarios(4);
        let cfg = PlannerConfig::default();
        let run = || {
            plan_day_ahead(
                &PlannerInputs {
                    building: None,
                    ess: Some(ess_model(2.0)),
                    scenarios: &scenarios,
                    previous_baseline: None,
                },
                &cfg,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_abs_diff_eq!(a.gamma_kw, b.gamma_kw, epsilon = 1e-12);
        for (x, y) in a.baseline_kw.iter().zip(&b.baseline_kw) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}
