//! The Hankel-based linear predictor and its adaptive update pipeline.
//!
//! Given stacked init/pred Hankel blocks, the predictor solves a
//! regularized least-squares fit of the initialization window subject to
//! matching the commanded future inputs and disturbances. Its optimality
//! system is linear, so the whole map from
//! `(y_init, u_init, w_init, u_pred, w_pred)` to the predicted outputs can
//! be condensed once into five coefficient matrices and then applied as a
//! single matrix-vector product per prediction.
//!
//! Two independent routes to the same prediction exist on purpose:
//! [`solve_ddp_qp`] assembles the full optimality system of the original
//! equality-constrained program each call, while [`build_predictor`]
//! condenses the reduced system and is what the control stack uses. Tests
//! play the two against each other.

use crate::data::{
    check_pe, stack_segments, DataError, DdpHyper, HankelDims, HankelSet, Mode,
    OperationalSegment,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Condition-estimate ceiling beyond which a predictor is refused.
const MAX_CONDITION: f64 = 1e14;

#[derive(Error, Debug)]
pub enum DdpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate Hankel data; refuse predictor (condition estimate {cond:.3e})")]
    DegenerateData { cond: f64 },
    #[error("internal solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// The condensed linear predictor.
///
/// `y_pred = p_y_init*y_init + p_u_init*u_init + p_w_init*w_init
///          + p_u_pred*u_pred + p_w_pred*w_pred`
/// for all conforming inputs; there is no affine term.
#[derive(Clone, Debug)]
pub struct DdpPredictor {
    pub hyper: DdpHyper,
    pub dims: HankelDims,
    pub mode: Mode,
    pub p_y_init: DMatrix<f64>,
    pub p_u_init: DMatrix<f64>,
    pub p_w_init: DMatrix<f64>,
    pub p_u_pred: DMatrix<f64>,
    pub p_w_pred: DMatrix<f64>,
    /// Hash of the Hankel set this predictor was condensed from.
    pub fingerprint: String,
}

impl DdpPredictor {
    /// Applies the predictor. Cost is one pass over the five blocks.
    pub fn predict(
        &self,
        y_init: &[f64],
        u_init: &[f64],
        w_init: &[f64],
        u_pred: &[f64],
        w_pred: &[f64],
    ) -> Result<Vec<f64>, DdpError> {
        let d = &self.dims;
        let expect = [
            (y_init.len(), d.t_init * d.n_y, "y_init"),
            (u_init.len(), d.t_init * d.n_u, "u_init"),
            (w_init.len(), d.t_init * d.n_w, "w_init"),
            (u_pred.len(), d.horizon * d.n_u, "u_pred"),
            (w_pred.len(), d.horizon * d.n_w, "w_pred"),
        ];
        for (got, want, name) in expect {
            if got != want {
                return Err(DdpError::DimensionMismatch(format!(
                    "{name}: expected {want}, got {got}"
                )));
            }
        }
        let mut y = &self.p_y_init * DVector::from_column_slice(y_init);
        y += &self.p_u_init * DVector::from_column_slice(u_init);
        y += &self.p_w_init * DVector::from_column_slice(w_init);
        y += &self.p_u_pred * DVector::from_column_slice(u_pred);
        y += &self.p_w_pred * DVector::from_column_slice(w_pred);
        Ok(y.iter().copied().collect())
    }
}

/// Stacked constraint rows below the regularized block: inputs and
/// disturbances over both windows, in the order the right-hand side
/// vectors are consumed.
fn constraint_stack(h: &HankelSet) -> DMatrix<f64> {
    let rows =
        h.u_init.nrows() + h.w_init.nrows() + h.u_pred.nrows() + h.w_pred.nrows();
    let mut m = DMatrix::zeros(rows, h.n_cols());
    let mut at = 0;
    for block in [&h.u_init, &h.w_init, &h.u_pred, &h.w_pred] {
        m.rows_mut(at, block.nrows()).copy_from(block);
        at += block.nrows();
    }
    m
}

/// Symmetric diagonal equilibration followed by an LU factorization.
///
/// The optimality matrix mixes squared-temperature magnitudes with raw
/// Hankel rows; scaling each row/column by its max magnitude keeps the
/// factorization accurate at small regularization weights. Solves must
/// scale the right-hand side by `d` and the solution by `d` again.
struct ScaledLu {
    d: DVector<f64>,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    scaled: DMatrix<f64>,
}

impl ScaledLu {
    fn new(g: &DMatrix<f64>) -> Self {
        let n = g.nrows();
        let d = DVector::from_fn(n, |i, _| {
            let m = g.row(i).amax();
            if m > 0.0 {
                1.0 / m.sqrt()
            } else {
                1.0
            }
        });
        let mut scaled = g.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= d[i] * d[j];
            }
        }
        let lu = nalgebra::linalg::LU::new(scaled.clone());
        Self { d, lu, scaled }
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let mut b = rhs.clone();
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                b[(i, j)] *= self.d[i];
            }
        }
        let mut x = self.lu.solve(&b)?;
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                x[(i, j)] *= self.d[i];
            }
        }
        Some(x)
    }
}

/// Power/inverse iteration estimate of the extreme singular values of a
/// symmetric matrix with an available factorization.
fn condition_estimate(
    g: &DMatrix<f64>,
    lu: &nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
) -> f64 {
    let n = g.nrows();
    let mut v = DVector::from_fn(n, |i, _| ((i as f64 * 0.7391).sin() + 0.5) / n as f64);
    v /= v.norm();
    let mut sigma_max = 0.0;
    for _ in 0..30 {
        v = g * v;
        sigma_max = v.norm();
        if sigma_max == 0.0 {
            return f64::INFINITY;
        }
        v /= sigma_max;
    }
    let mut w = DVector::from_fn(n, |i, _| ((i as f64 * 1.3113).cos() - 0.3) / n as f64);
    w /= w.norm();
    let mut inv_growth = 0.0;
    for _ in 0..30 {
        match lu.solve(&w) {
            Some(next) => {
                inv_growth = next.norm();
                if !inv_growth.is_finite() || inv_growth == 0.0 {
                    return f64::INFINITY;
                }
                w = next / inv_growth;
            }
            None => return f64::INFINITY,
        }
    }
    sigma_max * inv_growth
}

/// Condenses the predictor from the reduced optimality system.
///
/// The system matrix couples the data-fit normal block
/// `y_init' * y_init + e_g I` with the stacked equality rows; it is
/// factorized once and reused to extract all five coefficient blocks, so
/// subsequent predictions are matrix-vector products only.
pub fn build_predictor(h: &HankelSet, hyper: &DdpHyper) -> Result<DdpPredictor, DdpError> {
    hyper.validate()?;
    if h.dims.t_init != hyper.t_init || h.dims.horizon != hyper.horizon {
        return Err(DdpError::DimensionMismatch(
            "Hankel set depth disagrees with hyperparameters".into(),
        ));
    }
    let m1 = h.n_cols();
    let s = h.y_init.nrows();
    let hc = constraint_stack(h);
    let m2 = hc.nrows();
    if m1 < m2 {
        return Err(DdpError::DimensionMismatch(format!(
            "only {m1} Hankel columns for {m2} constraint rows; extend the data window"
        )));
    }
    let n = m1 + m2;

    let mut g = DMatrix::zeros(n, n);
    let yty = h.y_init.transpose() * &h.y_init;
    g.view_mut((0, 0), (m1, m1)).copy_from(&yty);
    for i in 0..m1 {
        g[(i, i)] += hyper.reg_weight;
    }
    g.view_mut((0, m1), (m1, m2)).copy_from(&hc.transpose());
    g.view_mut((m1, 0), (m2, m1)).copy_from(&hc);

    let factor = ScaledLu::new(&g);
    let cond = condition_estimate(&factor.scaled, &factor.lu);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(DdpError::DegenerateData { cond });
    }

    // Right-hand side basis: the y_init entries arrive premultiplied by
    // y_init', the remaining blocks verbatim.
    let mut rhs = DMatrix::zeros(n, s + m2);
    rhs.view_mut((0, 0), (m1, s)).copy_from(&h.y_init.transpose());
    for i in 0..m2 {
        rhs[(m1 + i, s + i)] = 1.0;
    }
    let x = factor
        .solve(&rhs)
        .ok_or(DdpError::DegenerateData { cond: f64::INFINITY })?;
    let coeff = &h.y_pred * x.rows(0, m1);

    let d = h.dims;
    let widths = [
        s,
        d.t_init * d.n_u,
        d.t_init * d.n_w,
        d.horizon * d.n_u,
        d.horizon * d.n_w,
    ];
    let mut at = 0;
    let mut blocks = Vec::with_capacity(5);
    for w in widths {
        blocks.push(coeff.columns(at, w).into_owned());
        at += w;
    }
    let mut it = blocks.into_iter();
    Ok(DdpPredictor {
        hyper: *hyper,
        dims: d,
        mode: h.mode,
        p_y_init: it.next().unwrap(),
        p_u_init: it.next().unwrap(),
        p_w_init: it.next().unwrap(),
        p_u_pred: it.next().unwrap(),
        p_w_pred: it.next().unwrap(),
        fingerprint: h.fingerprint(),
    })
}

/// Solves the prediction program directly as an equality-constrained QP.
///
/// Decision variables are the column weights and the init-window residual;
/// the full stationarity system (variables plus multipliers) is assembled
/// and solved per call. This is the reference route the condensed
/// predictor is validated against.
pub fn solve_ddp_qp(
    h: &HankelSet,
    hyper: &DdpHyper,
    y_init: &[f64],
    u_init: &[f64],
    w_init: &[f64],
    u_pred: &[f64],
    w_pred: &[f64],
) -> Result<Vec<f64>, DdpError> {
    hyper.validate()?;
    let m1 = h.n_cols();
    let s = h.y_init.nrows();
    let hc = constraint_stack(h);
    let m2 = hc.nrows();
    if y_init.len() != s {
        return Err(DdpError::DimensionMismatch(format!(
            "y_init: expected {s}, got {}",
            y_init.len()
        )));
    }
    let b: Vec<f64> = u_init
        .iter()
        .chain(w_init.iter())
        .chain(u_pred.iter())
        .chain(w_pred.iter())
        .copied()
        .collect();
    if b.len() != m2 {
        return Err(DdpError::DimensionMismatch(format!(
            "stacked constraint vector: expected {m2}, got {}",
            b.len()
        )));
    }

    // Variables z = (g, sigma); constraints
    //   y_init_block * g - sigma = y_init
    //   constraint_stack * g    = b
    let nz = m1 + s;
    let nc = s + m2;
    let n = nz + nc;
    let mut kkt = DMatrix::zeros(n, n);
    for i in 0..m1 {
        kkt[(i, i)] = hyper.reg_weight;
    }
    for i in 0..s {
        kkt[(m1 + i, m1 + i)] = 1.0;
    }
    let mut c = DMatrix::zeros(nc, nz);
    c.view_mut((0, 0), (s, m1)).copy_from(&h.y_init);
    for i in 0..s {
        c[(i, m1 + i)] = -1.0;
    }
    c.view_mut((s, 0), (m2, m1)).copy_from(&hc);
    kkt.view_mut((0, nz), (nz, nc)).copy_from(&c.transpose());
    kkt.view_mut((nz, 0), (nc, nz)).copy_from(&c);

    let mut rhs = DMatrix::zeros(n, 1);
    for (i, v) in y_init.iter().enumerate() {
        rhs[(nz + i, 0)] = *v;
    }
    for (i, v) in b.iter().enumerate() {
        rhs[(nz + s + i, 0)] = *v;
    }

    let factor = ScaledLu::new(&kkt);
    let sol = factor
        .solve(&rhs)
        .ok_or_else(|| DdpError::SolverFailure("optimality system is singular".into()))?;
    let g_weights = sol.view((0, 0), (m1, 1)).into_owned();
    let y = &h.y_pred * g_weights;
    Ok(y.iter().copied().collect())
}

/// Per-input-column physical-consistency indicators.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    /// One flag per future-input column of the predictor.
    pub per_input: Vec<bool>,
    pub fraction: f64,
    pub pass: bool,
}

/// Sign check on the future-input coefficient columns.
///
/// In cooling mode a power increase must lower the average predicted
/// temperature, so a column passes when its entries sum negative; heating
/// mirrors the sign. The report passes when at least an `eta` fraction of
/// columns agree.
pub fn check_consistency(pred: &DdpPredictor) -> ConsistencyReport {
    let n_inputs = pred.p_u_pred.ncols();
    let mut per_input = Vec::with_capacity(n_inputs);
    for i in 0..n_inputs {
        let col_sum: f64 = pred.p_u_pred.column(i).iter().sum();
        let ok = match pred.mode {
            Mode::Cooling => col_sum < 0.0,
            Mode::Heating => col_sum > 0.0,
        };
        per_input.push(ok);
    }
    let hits = per_input.iter().filter(|&&b| b).count();
    let fraction = if n_inputs == 0 {
        0.0
    } else {
        hits as f64 / n_inputs as f64
    };
    let pass = hits as f64 >= pred.hyper.consistency_eta * n_inputs as f64;
    ConsistencyReport {
        per_input,
        fraction,
        pass,
    }
}

/// A predictor together with the Hankel set it came from.
#[derive(Clone, Debug)]
pub struct DdpState {
    pub predictor: DdpPredictor,
    pub hankel: HankelSet,
}

impl DdpState {
    pub fn build(
        segments: &[OperationalSegment],
        hyper: &DdpHyper,
        mode: Mode,
    ) -> Result<Self, DdpError> {
        let hankel = stack_segments(segments, hyper, mode)?;
        let predictor = build_predictor(&hankel, hyper)?;
        Ok(Self { predictor, hankel })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    PersistentExcitation,
    Consistency,
}

/// Result of one adaptive-update attempt. Rejection is a normal outcome:
/// the previous state is returned untouched together with the reasons.
#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    pub state: DdpState,
    pub accepted: bool,
    pub reasons: Vec<RejectReason>,
}

/// Refreshes the Hankel set with new segments under the fixed column
/// budget, accepting the candidate only if it stays persistently exciting
/// and the rebuilt predictor passes the consistency test.
pub fn adaptive_update(
    state: &DdpState,
    new_segments: &[OperationalSegment],
    hyper: &DdpHyper,
) -> UpdateOutcome {
    let mut segments: Vec<OperationalSegment> = state.hankel.sources().to_vec();
    segments.extend(new_segments.iter().cloned());

    let reject = |reasons: Vec<RejectReason>| UpdateOutcome {
        state: state.clone(),
        accepted: false,
        reasons,
    };

    let candidate = match stack_segments(&segments, hyper, state.hankel.mode) {
        Ok(c) => c,
        Err(_) => return reject(vec![RejectReason::PersistentExcitation]),
    };
    let pe = check_pe(&candidate, hyper.state_order);
    if !pe.pass {
        return reject(vec![RejectReason::PersistentExcitation]);
    }
    // A conditioning failure despite a passing rank check is still a
    // data-informativity problem, so it lands in the same bucket.
    let predictor = match build_predictor(&candidate, hyper) {
        Ok(p) => p,
        Err(_) => return reject(vec![RejectReason::PersistentExcitation]),
    };
    let consistency = check_consistency(&predictor);
    if !consistency.pass {
        return reject(vec![RejectReason::Consistency]);
    }
    UpdateOutcome {
        state: DdpState {
            predictor,
            hankel: candidate,
        },
        accepted: true,
        reasons: Vec::new(),
    }
}
