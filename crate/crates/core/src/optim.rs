//! Damped Gauss-Newton with adaptive step size.
//!
//! Each iteration solves `(H + λ·I)·δ = -∇` with the banded Cholesky
//! factorization, where `H` is a positive semidefinite approximation of the
//! Hessian (`2·JᵀJ` for sums of squares). A trial step `x + α·δ` is accepted
//! under an Armijo-type sufficient decrease test; on acceptance `α` grows and
//! `λ` shrinks, on rejection the system is re-solved at the same `x` with a
//! smaller `α` and a larger `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::problem_core::{ConstrainedProblem, Evaluation};
use crate::rowshifted::{BandedSymmetricMatrix, RowShiftedMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussNewtonOptions {
    pub init_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub init_step: f64,
    pub step_increase: f64,
    pub step_decrease: f64,
    pub decrease_ratio: f64,
    /// Stop once the infinity norm of the applied step drops below this.
    pub stop_tol: f64,
    pub max_iters: usize,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        GaussNewtonOptions {
            init_damping: 1e-1,
            damping_increase: 10.0,
            damping_decrease: 0.2,
            init_step: 1.0,
            step_increase: 1.5,
            step_decrease: 0.5,
            decrease_ratio: 0.01,
            stop_tol: 1e-3,
            max_iters: 300,
        }
    }
}

fn invalid(name: &str, reason: &str) -> Error {
    Error::InvalidOption {
        name: name.to_string(),
        reason: reason.to_string(),
    }
}

impl GaussNewtonOptions {
    /// `init_damping` may be zero (undamped Gauss-Newton); every other bound
    /// is strict.
    pub fn validate(&self) -> Result<()> {
        if !(self.init_damping >= 0.0) {
            return Err(invalid("init_damping", "must be >= 0"));
        }
        if !(self.damping_increase > 1.0) {
            return Err(invalid("damping_increase", "must be > 1"));
        }
        if !(self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return Err(invalid("damping_decrease", "must be in (0, 1)"));
        }
        if !(self.init_step > 0.0 && self.init_step <= 1.0) {
            return Err(invalid("init_step", "must be in (0, 1]"));
        }
        if !(self.step_increase >= 1.0) {
            return Err(invalid("step_increase", "must be >= 1"));
        }
        if !(self.step_decrease > 0.0 && self.step_decrease < 1.0) {
            return Err(invalid("step_decrease", "must be in (0, 1)"));
        }
        if !(self.decrease_ratio > 0.0 && self.decrease_ratio < 1.0) {
            return Err(invalid("decrease_ratio", "must be in (0, 1)"));
        }
        if !(self.stop_tol > 0.0) {
            return Err(invalid("stop_tol", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Linear solves performed, accepted or not.
    pub iterations: usize,
    pub final_cost: f64,
    pub final_step_norm: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// Cost at the start and after every accepted step.
    pub cost_trace: Vec<f64>,
    /// False when `max_iters` ran out before the step-size test passed.
    pub converged: bool,
}

/// Solves `B·x = rhs` for symmetric positive definite banded `B`. A
/// non-positive pivot means the damping was too small.
pub fn banded_cholesky_solve(b: &BandedSymmetricMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    b.solve(rhs)
}

/// Objective for [`minimize`]: a value that may reject points outside its
/// domain, and a gradient with a PSD banded Hessian approximation.
pub trait NewtonObjective {
    fn dim(&self) -> usize;
    /// `None` when `x` lies outside the domain; such trial steps are rejected.
    fn value(&mut self, x: &[f64]) -> Result<Option<f64>>;
    fn linearize(&mut self, x: &[f64]) -> Result<(Vec<f64>, BandedSymmetricMatrix)>;
}

/// Residual vector with a row-shifted Jacobian.
pub trait SumOfSquares {
    fn dim(&self) -> usize;
    fn packed_width(&self) -> usize;
    fn residual_count(&self) -> usize;
    fn residuals(
        &mut self,
        x: &[f64],
        phi: &mut [f64],
        jac: Option<&mut RowShiftedMatrix>,
    ) -> Result<()>;
}

/// The cost part `φ` of a constrained problem, constraints ignored.
pub struct CostTerms<'a, P: ?Sized> {
    problem: &'a P,
    eval: Evaluation,
}

impl<'a, P: ConstrainedProblem + ?Sized> CostTerms<'a, P> {
    pub fn new(problem: &'a P) -> Self {
        CostTerms {
            eval: Evaluation::for_problem(problem),
            problem,
        }
    }
}

impl<P: ConstrainedProblem + ?Sized> SumOfSquares for CostTerms<'_, P> {
    fn dim(&self) -> usize {
        self.problem.dims().dim
    }

    fn packed_width(&self) -> usize {
        self.problem.dims().packed_width
    }

    fn residual_count(&self) -> usize {
        self.problem.dims().cost
    }

    fn residuals(
        &mut self,
        x: &[f64],
        phi: &mut [f64],
        jac: Option<&mut RowShiftedMatrix>,
    ) -> Result<()> {
        self.problem.evaluate(x, &mut self.eval)?;
        phi.copy_from_slice(&self.eval.phi);
        if let Some(j) = jac {
            *j = self.eval.j_phi.clone();
        }
        Ok(())
    }
}

struct SquaredNorm<'a, S: ?Sized> {
    problem: &'a mut S,
    phi: Vec<f64>,
    jac: RowShiftedMatrix,
}

impl<S: SumOfSquares + ?Sized> NewtonObjective for SquaredNorm<'_, S> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&mut self, x: &[f64]) -> Result<Option<f64>> {
        self.problem.residuals(x, &mut self.phi, None)?;
        Ok(Some(self.phi.iter().map(|v| v * v).sum()))
    }

    fn linearize(&mut self, x: &[f64]) -> Result<(Vec<f64>, BandedSymmetricMatrix)> {
        self.problem.residuals(x, &mut self.phi, Some(&mut self.jac))?;
        let mut grad = self.jac.atx(&self.phi)?;
        grad.iter_mut().for_each(|g| *g *= 2.0);
        let mut hess = self.jac.ata()?;
        hess.scale(2.0);
        Ok((grad, hess))
    }
}

/// Minimizes `φ(x)ᵀφ(x)` from `x0`.
pub fn gauss_newton<S: SumOfSquares + ?Sized>(
    problem: &mut S,
    x0: &[f64],
    opts: &GaussNewtonOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let rows = problem.residual_count();
    let jac = RowShiftedMatrix::zeros(rows, problem.packed_width(), problem.dim());
    let mut obj = SquaredNorm {
        problem,
        phi: vec![0.0; rows],
        jac,
    };
    minimize(&mut obj, x0, opts)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const DAMPING_FLOOR: f64 = 1e-8;

/// Damped Newton iterations on a generic [`NewtonObjective`]. Running out of
/// iterations is reported through [`SolveReport::converged`], not an error.
pub fn minimize<O: NewtonObjective + ?Sized>(
    obj: &mut O,
    x0: &[f64],
    opts: &GaussNewtonOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    check_len("initial point", obj.dim(), x0.len())?;
    let mut x = x0.to_vec();
    let mut cost = obj
        .value(&x)?
        .ok_or_else(|| Error::Unsupported("initial point outside the objective's domain".into()))?;
    let (mut grad, mut hess) = obj.linearize(&x)?;

    let mut report = SolveReport {
        iterations: 0,
        final_cost: cost,
        final_step_norm: f64::INFINITY,
        accepted: 0,
        rejected: 0,
        cost_trace: vec![cost],
        converged: false,
    };
    let mut damping = opts.init_damping;
    let mut alpha = opts.init_step;
    let mut trial = vec![0.0; x.len()];
    let neg_grad: fn(&[f64]) -> Vec<f64> = |g| g.iter().map(|v| -v).collect();

    while report.iterations < opts.max_iters {
        report.iterations += 1;
        let mut system = hess.clone();
        system.add_diagonal(damping);
        let delta = match system.solve(&neg_grad(&grad)) {
            Ok(d) => d,
            Err(Error::NotPositiveDefinite { .. }) => {
                report.rejected += 1;
                damping = damping.max(DAMPING_FLOOR) * opts.damping_increase;
                continue;
            }
            Err(e) => return Err(e),
        };
        let slope: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
        for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&delta) {
            *t = xi + alpha * di;
        }
        let step_norm = alpha * inf_norm(&delta);
        let accepted = match obj.value(&trial)? {
            Some(c) if c <= cost + opts.decrease_ratio * alpha * slope => Some(c),
            _ => None,
        };
        match accepted {
            Some(c) => {
                std::mem::swap(&mut x, &mut trial);
                cost = c;
                report.accepted += 1;
                report.cost_trace.push(c);
                report.final_step_norm = step_norm;
                alpha = (alpha * opts.step_increase).min(1.0);
                damping *= opts.damping_decrease;
                if step_norm < opts.stop_tol {
                    report.converged = true;
                    break;
                }
                (grad, hess) = obj.linearize(&x)?;
            }
            None => {
                report.rejected += 1;
                alpha *= opts.step_decrease;
                damping = damping.max(DAMPING_FLOOR) * opts.damping_increase;
                if step_norm < opts.stop_tol {
                    report.converged = true;
                    break;
                }
            }
        }
    }
    report.final_cost = cost;
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense residual helper for small tests.
    struct Residuals<F> {
        dim: usize,
        rows: usize,
        f: F,
    }

    impl<F: FnMut(&[f64]) -> (Vec<f64>, Vec<f64>)> SumOfSquares for Residuals<F> {
        fn dim(&self) -> usize {
            self.dim
        }
        fn packed_width(&self) -> usize {
            self.dim
        }
        fn residual_count(&self) -> usize {
            self.rows
        }
        fn residuals(
            &mut self,
            x: &[f64],
            phi: &mut [f64],
            jac: Option<&mut RowShiftedMatrix>,
        ) -> Result<()> {
            let (v, j) = (self.f)(x);
            phi.copy_from_slice(&v);
            if let Some(jac) = jac {
                for r in 0..self.rows {
                    jac.row_mut(r).copy_from_slice(&j[r * self.dim..(r + 1) * self.dim]);
                }
            }
            Ok(())
        }
    }

    #[allow(clippy::type_complexity)]
    fn identity_residual(dim: usize) -> Residuals<impl FnMut(&[f64]) -> (Vec<f64>, Vec<f64>)> {
        Residuals {
            dim,
            rows: dim,
            f: move |x: &[f64]| {
                let mut j = vec![0.0; dim * dim];
                for i in 0..dim {
                    j[i * dim + i] = 1.0;
                }
                (x.to_vec(), j)
            },
        }
    }

    #[test]
    fn identity_residual_one_undamped_step() {
        let opts = GaussNewtonOptions {
            init_damping: 0.0,
            max_iters: 1,
            ..Default::default()
        };
        let (x, rep) = gauss_newton(&mut identity_residual(3), &[1.0, -2.0, 5.0], &opts).unwrap();
        assert!(inf_norm(&x) < 1e-14, "{x:?}");
        assert_eq!(rep.accepted, 1);
        assert!(rep.final_cost < 1e-28);
    }

    #[test]
    fn identity_residual_converges_with_defaults() {
        let (x, rep) =
            gauss_newton(&mut identity_residual(4), &[3.0, -1.0, 0.5, 8.0], &Default::default())
                .unwrap();
        assert!(rep.converged);
        assert!(inf_norm(&x) < 1e-3, "{x:?}");
    }

    #[test]
    fn rosenbrock_residuals() {
        let mut p = Residuals {
            dim: 2,
            rows: 2,
            f: |x: &[f64]| {
                (
                    vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]],
                    vec![-20.0 * x[0], 10.0, -1.0, 0.0],
                )
            },
        };
        let (x, rep) = gauss_newton(&mut p, &[-1.0, 1.0], &Default::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?}");
        assert!(rep.final_cost.sqrt() < 1e-6);
        assert!(rep.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn starved_solver_reports_not_converged() {
        let opts = GaussNewtonOptions {
            max_iters: 1,
            ..Default::default()
        };
        let (_, rep) = gauss_newton(&mut identity_residual(2), &[10.0, 10.0], &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn options_are_validated() {
        let bad = GaussNewtonOptions {
            damping_decrease: 1.5,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidOption { .. })));
        assert!(GaussNewtonOptions::default().validate().is_ok());
    }

    #[test]
    fn wrong_initial_dimension() {
        let err = gauss_newton(&mut identity_residual(2), &[1.0], &Default::default()).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
