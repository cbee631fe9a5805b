//! Sparse convex-QP assembly and a thin solver wrapper.
//!
//! Every optimization problem in the stack (day-ahead planning, robust
//! intraday control, generic predictive control) is assembled through
//! [`QpBuilder`] as
//!
//! ```text
//!     minimize    1/2 x' P x + q' x
//!     subject to  A_eq x == b_eq,  A_in x <= b_in
//! ```
//!
//! and handed to an interior-point solver. Expressions are built from
//! [`LinExpr`], an affine function of decision variables, which is also
//! the currency the robustification layer trades in.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT::{NonnegativeConeT, ZeroConeT},
};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum QpError {
    #[error("problem is primal infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("solver failed: {0}")]
    NumericalFailure(String),
    #[error("empty problem: no decision variables")]
    Empty,
}

/// Index of a decision variable inside one [`QpBuilder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

/// Affine function of decision variables: `constant + sum coeff_i * x_i`.
#[derive(Clone, Debug, Default)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(id: VarId) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(id, 1.0)],
        }
    }

    pub fn scaled_var(id: VarId, coeff: f64) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(id, coeff)],
        }
    }

    pub fn add_term(&mut self, id: VarId, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((id, coeff));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.constant += scale * other.constant;
        for (id, c) in &other.terms {
            self.terms.push((*id, c * scale));
        }
    }

    pub fn plus(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn minus(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    pub fn times(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::constant(self.constant * scale);
        for (id, c) in &self.terms {
            out.add_term(*id, c * scale);
        }
        out
    }

    /// Merges duplicate variables and drops negligible coefficients.
    pub fn simplified(&self) -> LinExpr {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|(id, _)| id.0);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (id, c) in terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == id => *acc += c,
                _ => merged.push((id, c)),
            }
        }
        merged.retain(|(_, c)| c.abs() > 1e-300);
        LinExpr {
            constant: self.constant,
            terms: merged,
        }
    }

    /// True when no variable appears with a nonzero coefficient.
    pub fn is_constant(&self) -> bool {
        self.simplified().terms.is_empty()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(id, c)| c * x[id.0]).sum::<f64>()
    }
}

/// Solver knobs; tightened for small desk instances where tests assert
/// residuals well below the defaults.
#[derive(Clone, Copy, Debug)]
pub struct QpSettings {
    pub tol_feas: f64,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-9,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            max_iter: 200,
            verbose: false,
        }
    }
}

impl QpSettings {
    /// High-accuracy profile for small vertex-checked instances.
    pub fn tight() -> Self {
        Self {
            tol_feas: 1e-12,
            tol_gap_abs: 1e-12,
            tol_gap_rel: 1e-12,
            max_iter: 500,
            verbose: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Solver stopped at reduced accuracy (still usable, flagged for logs).
    pub reduced_accuracy: bool,
}

impl QpSolution {
    pub fn value_of(&self, expr: &LinExpr) -> f64 {
        expr.value(&self.x)
    }
}

/// Incremental assembly of one QP.
#[derive(Clone, Debug, Default)]
pub struct QpBuilder {
    n_vars: usize,
    quad: Vec<(usize, usize, f64)>,
    lin: Vec<f64>,
    obj_constant: f64,
    eq_rows: Vec<(Vec<(usize, f64)>, f64)>,
    ineq_rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl QpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_constraints(&self) -> usize {
        self.eq_rows.len() + self.ineq_rows.len()
    }

    pub fn add_var(&mut self) -> VarId {
        let id = VarId(self.n_vars);
        self.n_vars += 1;
        self.lin.push(0.0);
        id
    }

    pub fn add_vars(&mut self, n: usize) -> Vec<VarId> {
        (0..n).map(|_| self.add_var()).collect()
    }

    /// Adds `weight * expr` to the objective.
    pub fn add_linear_cost(&mut self, expr: &LinExpr, weight: f64) {
        self.obj_constant += weight * expr.constant;
        for (id, c) in &expr.terms {
            self.lin[id.0] += weight * c;
        }
    }

    /// Adds `weight * expr^2` to the objective.
    pub fn add_quadratic_cost(&mut self, expr: &LinExpr, weight: f64) {
        if weight == 0.0 {
            return;
        }
        let e = expr.simplified();
        self.obj_constant += weight * e.constant * e.constant;
        for (id, c) in &e.terms {
            self.lin[id.0] += 2.0 * weight * e.constant * c;
        }
        // The solver reads an upper-triangular P as symmetric, so x'Px
        // already doubles off-diagonal entries; every stored pair needs
        // the full 2 w c_i c_j.
        for (i, (id_i, c_i)) in e.terms.iter().enumerate() {
            for (id_j, c_j) in e.terms.iter().skip(i) {
                let (r, c) = if id_i.0 <= id_j.0 {
                    (id_i.0, id_j.0)
                } else {
                    (id_j.0, id_i.0)
                };
                self.quad.push((r, c, 2.0 * weight * c_i * c_j));
            }
        }
    }

    fn row_of(expr: &LinExpr) -> (Vec<(usize, f64)>, f64) {
        let e = expr.simplified();
        (
            e.terms.iter().map(|(id, c)| (id.0, *c)).collect(),
            -e.constant,
        )
    }

    /// Adds `expr == rhs`.
    pub fn add_eq(&mut self, expr: &LinExpr, rhs: f64) {
        let (row, shift) = Self::row_of(expr);
        self.eq_rows.push((row, rhs + shift));
    }

    /// Adds `expr <= rhs`.
    pub fn add_le(&mut self, expr: &LinExpr, rhs: f64) {
        let (row, shift) = Self::row_of(expr);
        self.ineq_rows.push((row, rhs + shift));
    }

    /// Adds `expr >= rhs`.
    pub fn add_ge(&mut self, expr: &LinExpr, rhs: f64) {
        self.add_le(&expr.times(-1.0), -rhs);
    }

    /// Box-bounds one variable.
    pub fn bound_var(&mut self, id: VarId, lo: Option<f64>, hi: Option<f64>) {
        let e = LinExpr::var(id);
        if let Some(h) = hi {
            self.add_le(&e, h);
        }
        if let Some(l) = lo {
            self.add_ge(&e, l);
        }
    }

    fn csc_from_rows(rows: &[(Vec<(usize, f64)>, f64)], n: usize) -> (CscMatrix<f64>, Vec<f64>) {
        let m = rows.len();
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::with_capacity(m);
        for (r, (row, rhs)) in rows.iter().enumerate() {
            for (c, v) in row {
                if *v != 0.0 {
                    triplets.push((r, *c, *v));
                }
            }
            b.push(*rhs);
        }
        (Self::csc_from_triplets(m, n, triplets), b)
    }

    fn csc_from_triplets(m: usize, n: usize, mut t: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
        t.sort_by_key(|&(r, c, _)| (c, r));
        let mut rowval = Vec::with_capacity(t.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(t.len());
        let mut col_count = vec![0usize; n];
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                col_count[c] += 1;
                last = Some((r, c));
            }
        }
        let mut colptr = vec![0usize; n + 1];
        for c in 0..n {
            colptr[c + 1] = colptr[c] + col_count[c];
        }
        CscMatrix::new(m, n, colptr, rowval, nzval)
    }

    pub fn solve(&self, settings: &QpSettings) -> Result<QpSolution, QpError> {
        let n = self.n_vars;
        if n == 0 {
            return Err(QpError::Empty);
        }
        // Upper-triangular P from accumulated symmetric quadratic terms.
        let p = Self::csc_from_triplets(n, n, self.quad.clone());
        let (a_eq, b_eq) = Self::csc_from_rows(&self.eq_rows, n);
        let (a_in, b_in) = Self::csc_from_rows(&self.ineq_rows, n);

        let m_total = a_eq.m + a_in.m;
        let mut triplets = Vec::new();
        for c in 0..n {
            for k in a_eq.colptr[c]..a_eq.colptr[c + 1] {
                triplets.push((a_eq.rowval[k], c, a_eq.nzval[k]));
            }
            for k in a_in.colptr[c]..a_in.colptr[c + 1] {
                triplets.push((a_eq.m + a_in.rowval[k], c, a_in.nzval[k]));
            }
        }
        let a = Self::csc_from_triplets(m_total, n, triplets);
        let mut b = b_eq;
        b.extend(b_in);

        let mut cones = Vec::new();
        if !self.eq_rows.is_empty() {
            cones.push(ZeroConeT(self.eq_rows.len()));
        }
        if !self.ineq_rows.is_empty() {
            cones.push(NonnegativeConeT(self.ineq_rows.len()));
        }

        let mut s = DefaultSettings::default();
        s.verbose = settings.verbose;
        s.max_iter = settings.max_iter;
        s.tol_feas = settings.tol_feas;
        s.tol_gap_abs = settings.tol_gap_abs;
        s.tol_gap_rel = settings.tol_gap_rel;

        let mut solver = DefaultSolver::new(&p, &self.lin, &a, &b, &cones, s)
            .map_err(|e| QpError::NumericalFailure(format!("{e:?}")))?;
        solver.solve();
        let status = solver.solution.status;
        let reduced = matches!(
            status,
            SolverStatus::AlmostSolved | SolverStatus::InsufficientProgress
        );
        match status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(QpSolution {
                x: solver.solution.x.clone(),
                objective: solver.solution.obj_val + self.obj_constant,
                reduced_accuracy: reduced,
            }),
            SolverStatus::InsufficientProgress if solution_usable(&solver) => Ok(QpSolution {
                x: solver.solution.x.clone(),
                objective: solver.solution.obj_val + self.obj_constant,
                reduced_accuracy: true,
            }),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Err(QpError::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                Err(QpError::Unbounded)
            }
            other => Err(QpError::NumericalFailure(format!("{other:?}"))),
        }
    }
}

fn solution_usable(solver: &DefaultSolver<f64>) -> bool {
    solver.solution.x.iter().all(|v| v.is_finite())
}
