//! Affine disturbance-feedback policies and exact box robustification.
//!
//! Decisions over the control horizon are affine functions of disturbance
//! deviations with a causal (block lower-triangular) structure. Because
//! the predictor and every constraint are linear, any constrained quantity
//! becomes an [`AffineExpr`]: an affine function of disturbance deviations
//! whose nominal value and coefficients are themselves affine in the QP
//! decision variables. Worst cases over a box then reduce exactly to
//! weighted absolute values of the coefficients (per-coordinate epigraph
//! variables), and equalities that must hold for every disturbance are
//! enforced by matching coefficients.

use crate::qp::{LinExpr, QpBuilder, VarId};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum RobustError {
    #[error("negative radius {0}")]
    NegativeRadius(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Axis-aligned box: `center + diag(half_width) * [-1, 1]^d`.
#[derive(Clone, Debug)]
pub struct BoxSet {
    pub center: DVector<f64>,
    pub half_width: DVector<f64>,
}

impl BoxSet {
    pub fn new(center: DVector<f64>, half_width: DVector<f64>) -> Result<Self, RobustError> {
        if center.len() != half_width.len() {
            return Err(RobustError::DimensionMismatch(format!(
                "center dim {} vs half_width dim {}",
                center.len(),
                half_width.len()
            )));
        }
        if let Some(r) = half_width.iter().find(|r| **r < 0.0) {
            return Err(RobustError::NegativeRadius(*r));
        }
        Ok(Self { center, half_width })
    }

    pub fn centered(half_width: DVector<f64>) -> Result<Self, RobustError> {
        let center = DVector::zeros(half_width.len());
        Self::new(center, half_width)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Vertex selected by a sign bitmask (bit k set => +half_width\[k\]).
    pub fn vertex(&self, mask: u64) -> DVector<f64> {
        DVector::from_fn(self.dim(), |k, _| {
            let sign = if mask >> k & 1 == 1 { 1.0 } else { -1.0 };
            self.center[k] + sign * self.half_width[k]
        })
    }

    pub fn n_vertices(&self) -> u64 {
        1u64 << self.dim()
    }
}

/// Coordinate layout of the disturbance-deviation basis: `horizon * n_w`
/// weather deviations followed by `horizon` grid-signal deviations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DisturbanceBasis {
    pub horizon: usize,
    pub n_w: usize,
}

impl DisturbanceBasis {
    pub fn dim(&self) -> usize {
        self.horizon * (self.n_w + 1)
    }

    /// Coordinate of weather channel `chan` at step `step` (0-based).
    pub fn w_coord(&self, step: usize, chan: usize) -> usize {
        step * self.n_w + chan
    }

    /// Coordinate of the grid-signal deviation at step `step` (0-based).
    pub fn alpha_coord(&self, step: usize) -> usize {
        self.horizon * self.n_w + step
    }

    /// Per-coordinate radii from constant per-channel bounds.
    pub fn radii(&self, w_radius: &[f64], a_radius: f64) -> Result<DVector<f64>, RobustError> {
        if w_radius.len() != self.n_w {
            return Err(RobustError::DimensionMismatch(format!(
                "w_radius has {} channels, basis has {}",
                w_radius.len(),
                self.n_w
            )));
        }
        let mut r = DVector::zeros(self.dim());
        for step in 0..self.horizon {
            for chan in 0..self.n_w {
                r[self.w_coord(step, chan)] = w_radius[chan];
            }
            r[self.alpha_coord(step)] = a_radius;
        }
        Ok(r)
    }
}

/// Affine function of disturbance deviations whose nominal part and
/// coefficients are linear expressions over QP decision variables.
#[derive(Clone, Debug)]
pub struct AffineExpr {
    pub nominal: LinExpr,
    pub coeffs: Vec<LinExpr>,
}

impl AffineExpr {
    pub fn zero(dim: usize) -> Self {
        Self {
            nominal: LinExpr::zero(),
            coeffs: vec![LinExpr::zero(); dim],
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            nominal: LinExpr::constant(c),
            coeffs: vec![LinExpr::zero(); dim],
        }
    }

    pub fn from_nominal(dim: usize, nominal: LinExpr) -> Self {
        Self {
            nominal,
            coeffs: vec![LinExpr::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) {
        debug_assert_eq!(self.dim(), other.dim());
        self.nominal.add_scaled(&other.nominal, scale);
        for (mine, theirs) in self.coeffs.iter_mut().zip(&other.coeffs) {
            mine.add_scaled(theirs, scale);
        }
    }

    pub fn plus(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn minus(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// Adds `delta` to the coefficient of one disturbance coordinate.
    pub fn add_coeff(&mut self, coord: usize, delta: &LinExpr) {
        self.coeffs[coord].add_scaled(delta, 1.0);
    }

    pub fn add_coeff_const(&mut self, coord: usize, delta: f64) {
        self.coeffs[coord].constant += delta;
    }

    /// Evaluates the expression at decision values `x` and deviation `delta`.
    pub fn value(&self, x: &[f64], delta: &[f64]) -> f64 {
        debug_assert_eq!(delta.len(), self.dim());
        self.nominal.value(x)
            + self
                .coeffs
                .iter()
                .zip(delta)
                .map(|(c, d)| c.value(x) * d)
                .sum::<f64>()
    }
}

/// Exact linear composition `out = offset + map * exprs`.
///
/// No approximation is involved: nominal parts and every disturbance
/// coefficient are combined symbolically.
pub fn compose_affine(
    map: &DMatrix<f64>,
    exprs: &[AffineExpr],
    offset: &DVector<f64>,
) -> Result<Vec<AffineExpr>, RobustError> {
    if map.ncols() != exprs.len() {
        return Err(RobustError::DimensionMismatch(format!(
            "map has {} columns, {} expressions given",
            map.ncols(),
            exprs.len()
        )));
    }
    if map.nrows() != offset.len() {
        return Err(RobustError::DimensionMismatch(format!(
            "map has {} rows, offset has {}",
            map.nrows(),
            offset.len()
        )));
    }
    let dim = exprs.first().map_or(0, AffineExpr::dim);
    let mut out = Vec::with_capacity(map.nrows());
    for i in 0..map.nrows() {
        let mut e = AffineExpr::constant(dim, offset[i]);
        for (j, src) in exprs.iter().enumerate() {
            let m = map[(i, j)];
            if m != 0.0 {
                e.add_scaled(src, m);
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// Causal structure of one decision channel: the decision at step `k`
/// (0-based) may read disturbance step `j` iff `j + delay <= k`.
///
/// `delay = 1` is the strict rule (only strictly past disturbances),
/// `delay = 0` additionally admits the current step, larger delays model
/// commitment lead times. The first row allowed to see disturbance step 1
/// is therefore row `delay + 1` in 1-based counting.
#[derive(Clone, Copy, Debug)]
pub struct PolicyStructure {
    pub rows: usize,
    pub w_delay: usize,
    pub a_delay: usize,
}

impl PolicyStructure {
    pub fn allows_w(&self, row: usize, step: usize) -> bool {
        step + self.w_delay <= row
    }

    pub fn allows_a(&self, row: usize, step: usize) -> bool {
        step + self.a_delay <= row
    }
}

/// Decision-variable-backed affine policy, one output per horizon step.
#[derive(Clone, Debug)]
pub struct PolicyVars {
    pub basis: DisturbanceBasis,
    pub structure: PolicyStructure,
    pub v: Vec<LinExpr>,
    m_w: Vec<Vec<LinExpr>>,
    m_a: Vec<Vec<LinExpr>>,
}

impl PolicyVars {
    /// Allocates gain and nominal variables honoring the causal structure.
    /// Entries outside the structure stay identically zero. `pinned_v`
    /// fixes selected nominal entries to constants (committed decisions).
    pub fn new(
        qp: &mut QpBuilder,
        basis: DisturbanceBasis,
        structure: PolicyStructure,
        pinned_v: &[(usize, f64)],
    ) -> Self {
        let mut v = Vec::with_capacity(structure.rows);
        for row in 0..structure.rows {
            match pinned_v.iter().find(|(r, _)| *r == row) {
                Some((_, value)) => v.push(LinExpr::constant(*value)),
                None => v.push(LinExpr::var(qp.add_var())),
            }
        }
        let mut m_w = Vec::with_capacity(structure.rows);
        let mut m_a = Vec::with_capacity(structure.rows);
        for row in 0..structure.rows {
            let mut wrow = vec![LinExpr::zero(); basis.horizon * basis.n_w];
            for step in 0..basis.horizon {
                if structure.allows_w(row, step) {
                    for chan in 0..basis.n_w {
                        wrow[step * basis.n_w + chan] = LinExpr::var(qp.add_var());
                    }
                }
            }
            let mut arow = vec![LinExpr::zero(); basis.horizon];
            for (step, slot) in arow.iter_mut().enumerate() {
                if structure.allows_a(row, step) {
                    *slot = LinExpr::var(qp.add_var());
                }
            }
            m_w.push(wrow);
            m_a.push(arow);
        }
        Self {
            basis,
            structure,
            v,
            m_w,
            m_a,
        }
    }

    /// Every free gain entry, for regularization terms.
    pub fn gain_exprs(&self) -> Vec<&LinExpr> {
        self.m_w
            .iter()
            .flatten()
            .chain(self.m_a.iter().flatten())
            .filter(|e| !e.terms.is_empty())
            .collect()
    }

    /// The channel outputs as affine expressions over the deviation basis.
    pub fn outputs(&self) -> Vec<AffineExpr> {
        let dim = self.basis.dim();
        (0..self.structure.rows)
            .map(|row| {
                let mut e = AffineExpr::from_nominal(dim, self.v[row].clone());
                for step in 0..self.basis.horizon {
                    for chan in 0..self.basis.n_w {
                        let src = &self.m_w[row][step * self.basis.n_w + chan];
                        if !src.terms.is_empty() {
                            e.add_coeff(self.basis.w_coord(step, chan), src);
                        }
                    }
                    let src = &self.m_a[row][step];
                    if !src.terms.is_empty() {
                        e.add_coeff(self.basis.alpha_coord(step), src);
                    }
                }
                e
            })
            .collect()
    }

    /// Instantiates the numeric policy from a solved variable vector.
    pub fn extract(&self, x: &[f64]) -> AffinePolicy {
        let rows = self.structure.rows;
        let m_w = DMatrix::from_fn(rows, self.basis.horizon * self.basis.n_w, |r, c| {
            self.m_w[r][c].value(x)
        });
        let m_a =
            DMatrix::from_fn(rows, self.basis.horizon, |r, c| self.m_a[r][c].value(x));
        let v = DVector::from_fn(rows, |r, _| self.v[r].value(x));
        AffinePolicy {
            m_w,
            m_a,
            v,
            w_delay: self.structure.w_delay,
            a_delay: self.structure.a_delay,
        }
    }
}

/// Numeric affine disturbance-feedback policy for one decision channel.
///
/// `decide(dw, da) = v + m_w * dw + m_a * da` where `dw`, `da` are the
/// deviations of weather and grid signal from their forecasts.
#[derive(Clone, Debug)]
pub struct AffinePolicy {
    pub m_w: DMatrix<f64>,
    pub m_a: DMatrix<f64>,
    pub v: DVector<f64>,
    pub w_delay: usize,
    pub a_delay: usize,
}

impl AffinePolicy {
    pub fn rows(&self) -> usize {
        self.v.len()
    }

    /// First 1-based row allowed to see disturbance step 1.
    pub fn causality_offset(&self) -> usize {
        self.w_delay.min(self.a_delay) + 1
    }

    pub fn decide(&self, dw: &[f64], da: &[f64]) -> DVector<f64> {
        &self.v
            + &self.m_w * DVector::from_column_slice(dw)
            + &self.m_a * DVector::from_column_slice(da)
    }
}

/// Shared epigraph machinery: returns the worst-case margin
/// `sum_k r_k |coeff_k|` as (linear-expression, constant) parts, adding
/// `t >= |coeff|` auxiliaries only where the coefficient involves
/// decision variables.
fn worst_case_margin(
    qp: &mut QpBuilder,
    expr: &AffineExpr,
    box_set: &BoxSet,
) -> Result<(LinExpr, f64), RobustError> {
    if box_set.dim() != expr.dim() {
        return Err(RobustError::DimensionMismatch(format!(
            "box dim {} vs expression dim {}",
            box_set.dim(),
            expr.dim()
        )));
    }
    let mut margin = LinExpr::zero();
    let mut margin_const = 0.0;
    for k in 0..expr.dim() {
        let r = box_set.half_width[k];
        if r < 0.0 {
            return Err(RobustError::NegativeRadius(r));
        }
        if r == 0.0 {
            continue;
        }
        let coeff = expr.coeffs[k].simplified();
        if coeff.terms.is_empty() {
            margin_const += r * coeff.constant.abs();
        } else {
            let t = qp.add_var();
            qp.add_le(&coeff.minus(&LinExpr::var(t)), 0.0);
            qp.add_le(&coeff.times(-1.0).minus(&LinExpr::var(t)), 0.0);
            margin.add_term(t, r);
        }
    }
    Ok((margin, margin_const))
}

/// Nominal value of `expr` at the box center (deviations need not be
/// centered at zero).
fn nominal_at_center(expr: &AffineExpr, box_set: &BoxSet) -> LinExpr {
    let mut nom = expr.nominal.clone();
    for (coeff, center) in expr.coeffs.iter().zip(box_set.center.iter()) {
        nom.add_scaled(coeff, *center);
    }
    nom
}

/// Enforces `expr <= bound` for every deviation in the box.
///
/// The worst case of an affine function over a box is attained at a
/// vertex and equals the nominal plus the weighted L1 norm of the
/// coefficients; this emits that counterpart exactly, two inequalities
/// per variable-bearing coordinate plus one aggregate.
pub fn robustify_leq(
    qp: &mut QpBuilder,
    expr: &AffineExpr,
    bound: f64,
    box_set: &BoxSet,
) -> Result<(), RobustError> {
    let (margin, margin_const) = worst_case_margin(qp, expr, box_set)?;
    let mut lhs = nominal_at_center(expr, box_set);
    lhs.add_scaled(&margin, 1.0);
    qp.add_le(&lhs, bound - margin_const);
    Ok(())
}

/// Enforces `expr >= bound` for every deviation in the box.
pub fn robustify_geq(
    qp: &mut QpBuilder,
    expr: &AffineExpr,
    bound: f64,
    box_set: &BoxSet,
) -> Result<(), RobustError> {
    let (margin, margin_const) = worst_case_margin(qp, expr, box_set)?;
    let mut lhs = nominal_at_center(expr, box_set).times(-1.0);
    lhs.add_scaled(&margin, 1.0);
    qp.add_le(&lhs, -bound - margin_const);
    Ok(())
}

/// Two-sided robust bound sharing the epigraph variables, with an
/// optional softening slack applied symmetrically.
pub fn robustify_range(
    qp: &mut QpBuilder,
    expr: &AffineExpr,
    lo: f64,
    hi: f64,
    box_set: &BoxSet,
    slack: Option<VarId>,
) -> Result<(), RobustError> {
    let (margin, margin_const) = worst_case_margin(qp, expr, box_set)?;
    let nom = nominal_at_center(expr, box_set);

    let mut upper = nom.clone();
    upper.add_scaled(&margin, 1.0);
    if let Some(s) = slack {
        upper.add_term(s, -1.0);
    }
    qp.add_le(&upper, hi - margin_const);

    let mut lower = nom.times(-1.0);
    lower.add_scaled(&margin, 1.0);
    if let Some(s) = slack {
        lower.add_term(s, -1.0);
    }
    qp.add_le(&lower, -lo - margin_const);
    Ok(())
}

/// Enforces `lhs == rhs` for every disturbance realization by equating
/// nominal parts and every disturbance coefficient.
pub fn enforce_equality_for_all(
    qp: &mut QpBuilder,
    lhs: &AffineExpr,
    rhs: &AffineExpr,
) -> Result<(), RobustError> {
    if lhs.dim() != rhs.dim() {
        return Err(RobustError::DimensionMismatch(format!(
            "lhs dim {} vs rhs dim {}",
            lhs.dim(),
            rhs.dim()
        )));
    }
    qp.add_eq(&lhs.nominal.minus(&rhs.nominal), 0.0);
    for (a, b) in lhs.coeffs.iter().zip(&rhs.coeffs) {
        let diff = a.minus(b).simplified();
        if diff.terms.is_empty() && diff.constant == 0.0 {
            continue;
        }
        qp.add_eq(&diff, 0.0);
    }
    Ok(())
}
