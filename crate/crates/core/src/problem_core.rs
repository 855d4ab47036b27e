//! Problem abstractions consumed by the solvers.
//!
//! [`KOrderMarkovProblem`] describes a problem term by term: at every time
//! step `t` it maps the tuple `(x_{t-k}, .., x_t)` to cost, inequality and
//! equality vectors. [`flatten_problem`] turns it into a
//! [`ConstrainedProblem`] over the stacked decision vector
//! `(x_0; ..; x_T)`, with all Jacobians in row-shifted form.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rowshifted::{BandedSymmetricMatrix, RowShiftedMatrix};

/// Trajectory `x_{0:T}` stored row-major as `(T+1) × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    n: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(horizon: usize, n: usize) -> Self {
        Trajectory {
            n,
            values: vec![0.0; (horizon + 1) * n],
        }
    }

    /// `T+1` copies of `q`.
    pub fn constant(horizon: usize, q: &[f64]) -> Self {
        let mut values = Vec::with_capacity((horizon + 1) * q.len());
        for _ in 0..=horizon {
            values.extend_from_slice(q);
        }
        Trajectory { n: q.len(), values }
    }

    pub fn from_flat(values: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 || values.is_empty() || !values.len().is_multiple_of(n) {
            return Err(Error::Dimension {
                what: "trajectory",
                expected: n.max(1) * (values.len() / n.max(1)).max(1),
                got: values.len(),
            });
        }
        Ok(Trajectory { n, values })
    }

    pub fn config_dim(&self) -> usize {
        self.n
    }

    /// `T`, the index of the last configuration.
    pub fn horizon(&self) -> usize {
        self.values.len() / self.n - 1
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn config(&self, t: usize) -> &[f64] {
        &self.values[t * self.n..(t + 1) * self.n]
    }

    pub fn config_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.n..(t + 1) * self.n]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }
}

/// Row counts of one time step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TermDims {
    pub cost: usize,
    pub ineq: usize,
    pub eq: usize,
}

/// Output buffers for one term evaluation. Jacobians are row-major with
/// `(k+1)·n` columns; slot `j` of the tuple owns columns `j·n..(j+1)·n`.
#[derive(Debug, Clone, Default)]
pub struct TermEval {
    pub f: Vec<f64>,
    pub j_f: Vec<f64>,
    pub g: Vec<f64>,
    pub j_g: Vec<f64>,
    pub h: Vec<f64>,
    pub j_h: Vec<f64>,
}

impl TermEval {
    fn clear(&mut self) {
        self.f.clear();
        self.j_f.clear();
        self.g.clear();
        self.j_g.clear();
        self.h.clear();
        self.j_h.clear();
    }
}

/// k-order Markov problem: every term depends on `k+1` consecutive
/// configurations. The tuple handed to [`evaluate_term`] is ordered oldest
/// first, so `tuple[k]` is `x_t`.
///
/// Terms exist for `t = 0..=T`, and additionally for `t = T+1..=T+k` when a
/// postfix is set.
///
/// [`evaluate_term`]: KOrderMarkovProblem::evaluate_term
pub trait KOrderMarkovProblem {
    fn horizon(&self) -> usize;
    fn order(&self) -> usize;
    fn config_dim(&self) -> usize;
    /// `k × n`, row `0` is `x_{-k}`.
    fn prefix(&self) -> &[f64];
    /// `k × n`, row `0` is `x_{T+1}`.
    fn postfix(&self) -> Option<&[f64]> {
        None
    }
    fn term_dims(&self, t: usize) -> TermDims;
    fn evaluate_term(&self, t: usize, tuple: &[&[f64]], out: &mut TermEval) -> Result<()>;
}

impl<P: KOrderMarkovProblem + ?Sized> KOrderMarkovProblem for &P {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn order(&self) -> usize {
        (**self).order()
    }
    fn config_dim(&self) -> usize {
        (**self).config_dim()
    }
    fn prefix(&self) -> &[f64] {
        (**self).prefix()
    }
    fn postfix(&self) -> Option<&[f64]> {
        (**self).postfix()
    }
    fn term_dims(&self, t: usize) -> TermDims {
        (**self).term_dims(t)
    }
    fn evaluate_term(&self, t: usize, tuple: &[&[f64]], out: &mut TermEval) -> Result<()> {
        (**self).evaluate_term(t, tuple, out)
    }
}

/// Index of the last term time (`T`, or `T+k` with a postfix).
pub fn last_term(p: &impl KOrderMarkovProblem) -> usize {
    p.horizon() + if p.postfix().is_some() { p.order() } else { 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    /// Length of the decision vector.
    pub dim: usize,
    /// Stored columns per Jacobian row.
    pub packed_width: usize,
    pub cost: usize,
    pub ineq: usize,
    pub eq: usize,
}

/// Caller-owned evaluation buffers for a [`ConstrainedProblem`].
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub phi: Vec<f64>,
    pub j_phi: RowShiftedMatrix,
    pub g: Vec<f64>,
    pub j_g: RowShiftedMatrix,
    pub h: Vec<f64>,
    pub j_h: RowShiftedMatrix,
}

impl Evaluation {
    pub fn new(d: &ProblemDims) -> Self {
        Evaluation {
            phi: vec![0.0; d.cost],
            j_phi: RowShiftedMatrix::zeros(d.cost, d.packed_width, d.dim),
            g: vec![0.0; d.ineq],
            j_g: RowShiftedMatrix::zeros(d.ineq, d.packed_width, d.dim),
            h: vec![0.0; d.eq],
            j_h: RowShiftedMatrix::zeros(d.eq, d.packed_width, d.dim),
        }
    }

    pub fn for_problem<P: ConstrainedProblem + ?Sized>(p: &P) -> Self {
        Self::new(&p.dims())
    }

    /// `φᵀφ`.
    pub fn cost(&self) -> f64 {
        self.phi.iter().map(|v| v * v).sum()
    }

    /// `2·Jᵀφ`.
    pub fn cost_gradient(&self) -> Result<Vec<f64>> {
        let mut grad = self.j_phi.atx(&self.phi)?;
        grad.iter_mut().for_each(|v| *v *= 2.0);
        Ok(grad)
    }

    /// Gauss-Newton pseudo-Hessian `2·JᵀJ`; symmetric PSD by construction.
    pub fn pseudo_hessian(&self) -> Result<BandedSymmetricMatrix> {
        let mut h = self.j_phi.ata()?;
        h.scale(2.0);
        Ok(h)
    }

    pub fn max_ineq_violation(&self) -> f64 {
        self.g.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn max_eq_violation(&self) -> f64 {
        self.h.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }
}

/// `min φ(x)ᵀφ(x)  s.t.  g(x) ≤ 0, h(x) = 0` over one long vector.
pub trait ConstrainedProblem {
    fn dims(&self) -> ProblemDims;
    fn evaluate(&self, x: &[f64], out: &mut Evaluation) -> Result<()>;
}

impl<P: ConstrainedProblem + ?Sized> ConstrainedProblem for &P {
    fn dims(&self) -> ProblemDims {
        (**self).dims()
    }
    fn evaluate(&self, x: &[f64], out: &mut Evaluation) -> Result<()> {
        (**self).evaluate(x, out)
    }
}

/// Dense residuals and Jacobians for small problems. Jacobians are
/// row-major with `dim` columns.
#[derive(Debug, Clone, Default)]
pub struct DenseEval {
    pub phi: Vec<f64>,
    pub j_phi: Vec<f64>,
    pub g: Vec<f64>,
    pub j_g: Vec<f64>,
    pub h: Vec<f64>,
    pub j_h: Vec<f64>,
}

/// [`ConstrainedProblem`] from a closure returning dense Jacobians. Rows are
/// stored unshifted with `packed_width = dim`.
pub struct DenseProblem<F> {
    dims: ProblemDims,
    eval: F,
}

impl<F> DenseProblem<F>
where
    F: Fn(&[f64]) -> DenseEval,
{
    pub fn new(dim: usize, cost: usize, ineq: usize, eq: usize, eval: F) -> Self {
        DenseProblem {
            dims: ProblemDims {
                dim,
                packed_width: dim,
                cost,
                ineq,
                eq,
            },
            eval,
        }
    }
}

fn copy_dense(
    what: &'static str,
    rows: usize,
    cols: usize,
    v: &[f64],
    j: &[f64],
    out_v: &mut [f64],
    out_j: &mut RowShiftedMatrix,
) -> Result<()> {
    check_len(what, rows, v.len())?;
    check_len(what, rows * cols, j.len())?;
    out_v.copy_from_slice(v);
    for i in 0..rows {
        out_j.set_shift(i, 0);
        out_j.row_mut(i).copy_from_slice(&j[i * cols..(i + 1) * cols]);
    }
    Ok(())
}

impl<F> ConstrainedProblem for DenseProblem<F>
where
    F: Fn(&[f64]) -> DenseEval,
{
    fn dims(&self) -> ProblemDims {
        self.dims
    }

    fn evaluate(&self, x: &[f64], out: &mut Evaluation) -> Result<()> {
        let d = &self.dims;
        check_len("decision vector", d.dim, x.len())?;
        let e = (self.eval)(x);
        copy_dense("cost", d.cost, d.dim, &e.phi, &e.j_phi, &mut out.phi, &mut out.j_phi)?;
        copy_dense("ineq", d.ineq, d.dim, &e.g, &e.j_g, &mut out.g, &mut out.j_g)?;
        copy_dense("eq", d.eq, d.dim, &e.h, &e.j_h, &mut out.h, &mut out.j_h)?;
        Ok(())
    }
}

/// A [`KOrderMarkovProblem`] viewed as a [`ConstrainedProblem`] over
/// `(x_0; ..; x_T)`.
#[derive(Debug, Clone)]
pub struct MarkovProgram<P> {
    problem: P,
    dims: ProblemDims,
    term_dims: Vec<TermDims>,
}

/// Concatenates all terms: `φ = (f_0; ..; f_T)`, likewise `g` and `h`.
pub fn flatten_problem<P: KOrderMarkovProblem>(problem: P) -> Result<MarkovProgram<P>> {
    MarkovProgram::new(problem)
}

impl<P: KOrderMarkovProblem> MarkovProgram<P> {
    pub fn new(problem: P) -> Result<Self> {
        let n = problem.config_dim();
        let k = problem.order();
        check_len("prefix", k * n, problem.prefix().len())?;
        if let Some(post) = problem.postfix() {
            check_len("postfix", k * n, post.len())?;
        }
        let term_dims: Vec<TermDims> = (0..=last_term(&problem))
            .map(|t| problem.term_dims(t))
            .collect();
        let dims = ProblemDims {
            dim: (problem.horizon() + 1) * n,
            packed_width: (k + 1) * n,
            cost: term_dims.iter().map(|d| d.cost).sum(),
            ineq: term_dims.iter().map(|d| d.ineq).sum(),
            eq: term_dims.iter().map(|d| d.eq).sum(),
        };
        Ok(MarkovProgram {
            problem,
            dims,
            term_dims,
        })
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn term_dims(&self) -> &[TermDims] {
        &self.term_dims
    }

    /// True column of the first packed entry for rows of term `t`.
    pub fn row_shift(&self, t: usize) -> usize {
        t.saturating_sub(self.problem.order()) * self.problem.config_dim()
    }

    /// Row ranges `(cost, ineq, eq)` of term `t` within the stacked vectors.
    pub fn term_rows(&self, t: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
        let before = |sel: fn(&TermDims) -> usize| -> usize {
            self.term_dims[..t].iter().map(sel).sum()
        };
        let (c, i, e) = (before(|d| d.cost), before(|d| d.ineq), before(|d| d.eq));
        let d = self.term_dims[t];
        (c..c + d.cost, i..i + d.ineq, e..e + d.eq)
    }
}

/// Copies a term's dense `(k+1)n`-column block into packed rows, dropping
/// slots that refer to prefix or postfix configurations.
#[allow(clippy::too_many_arguments)]
fn place_rows(
    values: &[f64],
    jac: &[f64],
    first_row: usize,
    shift: usize,
    valid_slots: std::ops::Range<usize>,
    slot_offset: usize,
    n: usize,
    out_v: &mut [f64],
    out_j: &mut RowShiftedMatrix,
) {
    let width = out_j.packed_width();
    for (r, &v) in values.iter().enumerate() {
        let row = first_row + r;
        out_v[row] = v;
        out_j.set_shift(row, shift);
        let dst = out_j.row_mut(row);
        dst.iter_mut().for_each(|e| *e = 0.0);
        let src = &jac[r * width..(r + 1) * width];
        for slot in valid_slots.clone() {
            let from = slot * n;
            let to = (slot - slot_offset) * n;
            dst[to..to + n].copy_from_slice(&src[from..from + n]);
        }
    }
}

impl<P: KOrderMarkovProblem> ConstrainedProblem for MarkovProgram<P> {
    fn dims(&self) -> ProblemDims {
        self.dims
    }

    fn evaluate(&self, x: &[f64], out: &mut Evaluation) -> Result<()> {
        let p = &self.problem;
        let n = p.config_dim();
        let k = p.order();
        let horizon = p.horizon();
        check_len("decision vector", self.dims.dim, x.len())?;
        check_len("cost rows", self.dims.cost, out.phi.len())?;
        check_len("inequality rows", self.dims.ineq, out.g.len())?;
        check_len("equality rows", self.dims.eq, out.h.len())?;
        let width = self.dims.packed_width;
        let prefix = p.prefix();
        let postfix = p.postfix();

        let mut term = TermEval::default();
        let mut tuple: Vec<&[f64]> = Vec::with_capacity(k + 1);
        let (mut rc, mut ri, mut re) = (0, 0, 0);
        for (t, declared) in self.term_dims.iter().enumerate() {
            tuple.clear();
            let mut first_slot = 0;
            let mut end_slot = k + 1;
            for j in 0..=k {
                // time index of slot j is t - k + j
                let s = t as isize - k as isize + j as isize;
                let cfg = if s < 0 {
                    first_slot = j + 1;
                    let r = (s + k as isize) as usize;
                    &prefix[r * n..(r + 1) * n]
                } else if (s as usize) <= horizon {
                    let s = s as usize;
                    &x[s * n..(s + 1) * n]
                } else {
                    end_slot = end_slot.min(j);
                    let r = s as usize - horizon - 1;
                    let post = postfix.expect("terms beyond T require a postfix");
                    &post[r * n..(r + 1) * n]
                };
                tuple.push(cfg);
            }

            term.clear();
            p.evaluate_term(t, &tuple, &mut term)?;
            let shape = |what, expected, got| {
                if expected == got {
                    Ok(())
                } else {
                    Err(Error::TermShape { t, what, expected, got })
                }
            };
            shape("f", declared.cost, term.f.len())?;
            shape("J_f", declared.cost * width, term.j_f.len())?;
            shape("g", declared.ineq, term.g.len())?;
            shape("J_g", declared.ineq * width, term.j_g.len())?;
            shape("h", declared.eq, term.h.len())?;
            shape("J_h", declared.eq * width, term.j_h.len())?;

            let shift = self.row_shift(t);
            // packed column of slot j is (t-k+j)·n - shift
            let slot_offset = k.saturating_sub(t);
            let slots = first_slot..end_slot;
            place_rows(&term.f, &term.j_f, rc, shift, slots.clone(), slot_offset, n, &mut out.phi, &mut out.j_phi);
            place_rows(&term.g, &term.j_g, ri, shift, slots.clone(), slot_offset, n, &mut out.g, &mut out.j_g);
            place_rows(&term.h, &term.j_h, re, shift, slots, slot_offset, n, &mut out.h, &mut out.j_h);
            rc += declared.cost;
            ri += declared.ineq;
            re += declared.eq;
        }
        Ok(())
    }
}

/// Result of comparing an analytic Jacobian with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianCheck {
    pub passed: bool,
    /// Largest `|analytic - numeric| / (1 + |analytic|)`.
    pub max_error: f64,
    /// `(row, column)` of the largest error.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
}

/// Central-difference check of `eval`, which returns `(y, J)` with `J`
/// row-major `len(y) × len(x)`.
pub fn check_jacobian<F>(mut eval: F, x: &[f64], eps: f64, tol: f64) -> Result<JacobianCheck>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidOption {
            name: "eps".into(),
            reason: "must be positive".into(),
        });
    }
    let cols = x.len();
    let (y0, jac) = eval(x)?;
    let rows = y0.len();
    check_len("analytic jacobian", rows * cols, jac.len())?;

    let mut report = JacobianCheck {
        passed: true,
        max_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut xp = x.to_vec();
    for c in 0..cols {
        xp[c] = x[c] + eps;
        let (yp, _) = eval(&xp)?;
        xp[c] = x[c] - eps;
        let (ym, _) = eval(&xp)?;
        xp[c] = x[c];
        check_len("perturbed output", rows, yp.len())?;
        check_len("perturbed output", rows, ym.len())?;
        for r in 0..rows {
            let numeric = (yp[r] - ym[r]) / (2.0 * eps);
            let analytic = jac[r * cols + c];
            let err = (analytic - numeric).abs() / (1.0 + analytic.abs());
            if err > report.max_error || err.is_nan() {
                report.max_error = err;
                report.worst = Some((r, c));
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    report.passed = report.max_error <= tol;
    Ok(report)
}

/// Finite-difference checks of all three Jacobians of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemJacobianCheck {
    pub cost: JacobianCheck,
    pub ineq: JacobianCheck,
    pub eq: JacobianCheck,
}

impl ProblemJacobianCheck {
    pub fn passed(&self) -> bool {
        self.cost.passed && self.ineq.passed && self.eq.passed
    }
}

pub fn check_problem_jacobians<P: ConstrainedProblem + ?Sized>(
    p: &P,
    x: &[f64],
    eps: f64,
    tol: f64,
) -> Result<ProblemJacobianCheck> {
    let mut ev = Evaluation::for_problem(p);
    let mut part = |sel: fn(&Evaluation) -> (&Vec<f64>, &RowShiftedMatrix)| {
        check_jacobian(
            |x| {
                p.evaluate(x, &mut ev)?;
                let (v, j) = sel(&ev);
                Ok((v.clone(), j.unpack()?))
            },
            x,
            eps,
            tol,
        )
    };
    Ok(ProblemJacobianCheck {
        cost: part(|e| (&e.phi, &e.j_phi))?,
        ineq: part(|e| (&e.g, &e.j_g))?,
        eq: part(|e| (&e.h, &e.j_h))?,
    })
}
