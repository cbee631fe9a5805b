//! Prediction-quality metrics and hyperparameter sweeps.
//!
//! Rolling evaluation over an operational dataset: at each evaluation
//! time the init windows are assembled from the recorded data, the
//! predictor forecasts the horizon against the recorded inputs and
//! disturbances, and per-step absolute errors are aggregated. The
//! adaptive variant refreshes the Hankel set once per simulated day, the
//! fixed variant keeps the initial one.

use crate::data::{DdpHyper, Mode, OperationalDataset, STEPS_PER_DAY};
use crate::ddp::{adaptive_update, DdpError, DdpState};
use crate::exec;
use serde::Serialize;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Ddp(#[from] DdpError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Predictor refresh policy during evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictorPolicy {
    Fixed,
    AdaptiveDaily,
}

/// How the dataset is partitioned, in whole days: a build window for the
/// initial Hankel set, a validation span for tuning, the rest is test.
#[derive(Clone, Copy, Debug)]
pub struct SplitSpec {
    pub build_days: usize,
    pub validation_days: usize,
    /// Spacing between evaluation anchors, in steps.
    pub stride: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct MaeReport {
    pub mae: f64,
    pub per_step_mean: Vec<f64>,
    pub per_step_std: Vec<f64>,
    pub n_evaluations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MaeEvaluation {
    pub validation: MaeReport,
    pub test: MaeReport,
    pub updates_accepted: usize,
    pub updates_rejected: usize,
}

/// One predicted step of one evaluation anchor.
#[derive(Clone, Debug, Serialize)]
pub struct PredictionRow {
    /// Anchor time on the sample grid.
    pub t: i64,
    /// 1-based step into the horizon.
    pub step: usize,
    pub y_pred: f64,
    pub y_true: f64,
    pub abs_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct UpdateEvent {
    pub day: i64,
    pub accepted: bool,
    pub reasons: Vec<String>,
}

/// Full rolling-prediction trace plus the adaptive-update log.
#[derive(Clone, Debug)]
pub struct RollingOutput {
    pub rows: Vec<PredictionRow>,
    pub updates: Vec<UpdateEvent>,
    /// Anchors before this grid index belong to the validation span.
    pub validation_end: i64,
    pub horizon: usize,
}

struct ErrorAccumulator {
    horizon: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: usize,
}

impl ErrorAccumulator {
    fn new(horizon: usize) -> Self {
        Self {
            horizon,
            sum: vec![0.0; horizon],
            sum_sq: vec![0.0; horizon],
            count: 0,
        }
    }

    fn add(&mut self, abs_errors: &[f64]) {
        for (k, e) in abs_errors.iter().enumerate() {
            self.sum[k] += e;
            self.sum_sq[k] += e * e;
        }
        self.count += 1;
    }

    fn report(&self) -> MaeReport {
        if self.count == 0 {
            return MaeReport {
                per_step_mean: vec![0.0; self.horizon],
                per_step_std: vec![0.0; self.horizon],
                ..MaeReport::default()
            };
        }
        let n = self.count as f64;
        let per_step_mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let per_step_std: Vec<f64> = self
            .sum_sq
            .iter()
            .zip(&per_step_mean)
            .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt())
            .collect();
        MaeReport {
            mae: per_step_mean.iter().sum::<f64>() / self.horizon as f64,
            per_step_mean,
            per_step_std,
            n_evaluations: self.count,
        }
    }
}

/// Rolling prediction trace over a dataset.
///
/// Evaluation anchors advance by `split.stride`; anchors whose init or
/// prediction window leaves the recorded data (or the predictor's mode)
/// are skipped. Daily adaptive refreshes feed the previous day's segments
/// back into the Hankel set.
pub fn rolling_predict(
    dataset: &OperationalDataset,
    hyper: &DdpHyper,
    mode: Mode,
    policy: PredictorPolicy,
    split: &SplitSpec,
) -> Result<RollingOutput, EvalError> {
    hyper
        .validate()
        .map_err(|e| EvalError::InsufficientData(e.to_string()))?;
    let steps_per_day = STEPS_PER_DAY as i64;
    let end = dataset
        .end_index()
        .ok_or_else(|| EvalError::InsufficientData("empty dataset".into()))?;
    let build_end = split.build_days as i64 * steps_per_day;
    let validation_end = build_end + split.validation_days as i64 * steps_per_day;
    if validation_end >= end {
        return Err(EvalError::InsufficientData(format!(
            "dataset ends at step {end}, but build+validation span {validation_end}"
        )));
    }

    let mut state = DdpState::build(&dataset.segments_in(0, build_end), hyper, mode)?;
    let mut rows = Vec::new();
    let mut updates = Vec::new();

    let mut next_update_day = split.build_days as i64 + 1;
    let mut t = build_end + hyper.t_init as i64;
    while t + hyper.horizon as i64 <= end {
        if policy == PredictorPolicy::AdaptiveDaily {
            // Refresh once per crossed day boundary with that day's data.
            while t >= next_update_day * steps_per_day {
                let day_start = (next_update_day - 1) * steps_per_day;
                let fresh = dataset.segments_in(day_start, next_update_day * steps_per_day);
                if !fresh.is_empty() {
                    let outcome = adaptive_update(&state, &fresh, hyper);
                    updates.push(UpdateEvent {
                        day: next_update_day - 1,
                        accepted: outcome.accepted,
                        reasons: outcome.reasons.iter().map(|r| format!("{r:?}")).collect(),
                    });
                    state = outcome.state;
                }
                next_update_day += 1;
            }
        }
        if let Some(mut anchor_rows) = evaluate_at(dataset, &state, hyper, mode, t) {
            rows.append(&mut anchor_rows);
        }
        t += split.stride as i64;
    }
    if rows.is_empty() {
        return Err(EvalError::InsufficientData(
            "no usable evaluation windows".into(),
        ));
    }
    Ok(RollingOutput {
        rows,
        updates,
        validation_end,
        horizon: hyper.horizon,
    })
}

/// Aggregate MAE of a rolling evaluation, split into validation and test.
pub fn mae_eval(
    dataset: &OperationalDataset,
    hyper: &DdpHyper,
    mode: Mode,
    policy: PredictorPolicy,
    split: &SplitSpec,
) -> Result<MaeEvaluation, EvalError> {
    let rolling = rolling_predict(dataset, hyper, mode, policy, split)?;
    let mut validation = ErrorAccumulator::new(rolling.horizon);
    let mut test = ErrorAccumulator::new(rolling.horizon);
    let mut anchor_errs: Vec<f64> = Vec::with_capacity(rolling.horizon);
    let mut anchor_t = None;
    let mut flush = |t: i64, errs: &mut Vec<f64>| {
        if errs.is_empty() {
            return;
        }
        if t < rolling.validation_end {
            validation.add(errs);
        } else {
            test.add(errs);
        }
        errs.clear();
    };
    for row in &rolling.rows {
        if anchor_t != Some(row.t) {
            if let Some(prev) = anchor_t {
                flush(prev, &mut anchor_errs);
            }
            anchor_t = Some(row.t);
        }
        anchor_errs.push(row.abs_err);
    }
    if let Some(prev) = anchor_t {
        flush(prev, &mut anchor_errs);
    }
    Ok(MaeEvaluation {
        validation: validation.report(),
        test: test.report(),
        updates_accepted: rolling.updates.iter().filter(|u| u.accepted).count(),
        updates_rejected: rolling.updates.iter().filter(|u| !u.accepted).count(),
    })
}

fn evaluate_at(
    dataset: &OperationalDataset,
    state: &DdpState,
    hyper: &DdpHyper,
    mode: Mode,
    t: i64,
) -> Option<Vec<PredictionRow>> {
    let init = dataset.init_window(t, hyper.t_init)?;
    let mut u_pred = Vec::with_capacity(hyper.horizon);
    let mut w_pred = Vec::new();
    let mut y_true = Vec::with_capacity(hyper.horizon);
    for k in 0..hyper.horizon as i64 {
        let (u, w, y, m) = dataset.sample_at(t + k)?;
        if m != mode {
            return None;
        }
        u_pred.push(u);
        w_pred.extend_from_slice(w);
        y_true.push(y);
    }
    let y_pred = state
        .predictor
        .predict(&init.y_init, &init.u_init, &init.w_init, &u_pred, &w_pred)
        .ok()?;
    Some(
        y_pred
            .iter()
            .zip(&y_true)
            .enumerate()
            .map(|(k, (p, yt))| PredictionRow {
                t,
                step: k + 1,
                y_pred: *p,
                y_true: *yt,
                abs_err: (p - yt).abs(),
            })
            .collect(),
    )
}

/// Hyperparameter grid for the sensitivity sweep.
#[derive(Clone, Debug)]
pub struct SweepGrid {
    pub reg_weights: Vec<f64>,
    pub data_lens: Vec<usize>,
    pub t_inits: Vec<usize>,
    pub horizon: usize,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.reg_weights.is_empty() || self.data_lens.is_empty() || self.t_inits.is_empty() {
            return Err(EvalError::InvalidGrid("empty grid axis".into()));
        }
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]);
        if !sorted(&self.reg_weights) {
            return Err(EvalError::InvalidGrid("reg_weights must be sorted".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<(f64, usize, usize)> {
        let mut out = Vec::new();
        for &e in &self.reg_weights {
            for &t in &self.data_lens {
                for &i in &self.t_inits {
                    out.push((e, t, i));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub e_g: f64,
    pub t: usize,
    pub t_init: usize,
    pub n: usize,
    pub mae_validation: f64,
    pub mae_test: f64,
}

/// Cross-product sweep of `(e_g, T, t_init)` with daily adaptive updates;
/// points are independent and evaluated in parallel.
pub fn sensitivity_sweep(
    grid: &SweepGrid,
    dataset: &OperationalDataset,
    mode: Mode,
    base: &DdpHyper,
    split: &SplitSpec,
) -> Result<Vec<SweepRow>, EvalError> {
    grid.validate()?;
    let points = grid.points();
    let rows = exec::map_collect(points, |(e_g, data_len, t_init)| {
        let hyper = DdpHyper {
            data_len,
            t_init,
            horizon: grid.horizon,
            reg_weight: e_g,
            ..*base
        };
        mae_eval(dataset, &hyper, mode, PredictorPolicy::AdaptiveDaily, split).map(|r| SweepRow {
            e_g,
            t: data_len,
            t_init,
            n: grid.horizon,
            mae_validation: r.validation.mae,
            mae_test: r.test.mae,
        })
    });
    rows.into_iter().collect()
}
