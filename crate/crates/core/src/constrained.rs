//! Constrained solvers on top of the Gauss-Newton core.
//!
//! The Augmented Lagrangian keeps the inner problem a sum of squares: for an
//! active inequality, `μ·g² + λ·g = (√μ·g + λ/(2√μ))² - λ²/(4μ)`, so each
//! constraint contributes one extra residual row with Jacobian `√μ·∇g`. The
//! dropped constant does not depend on `x`. Equalities are handled the same
//! way. The log-barrier solver uses [`minimize`] with a domain-restricted
//! objective so every accepted iterate stays strictly feasible.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::optim::{gauss_newton, minimize, GaussNewtonOptions, NewtonObjective, SolveReport, SumOfSquares};
use crate::problem_core::{ConstrainedProblem, Evaluation};
use crate::rowshifted::{BandedSymmetricMatrix, RowShiftedMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AulaState {
    pub mu: f64,
    pub lambda_g: Vec<f64>,
    pub lambda_h: Vec<f64>,
    pub outer_iter: usize,
}

impl AulaState {
    pub fn new(mu: f64, ineq: usize, eq: usize) -> Self {
        AulaState {
            mu,
            lambda_g: vec![0.0; ineq],
            lambda_h: vec![0.0; eq],
            outer_iter: 0,
        }
    }
}

/// First-order optimality diagnostics. All entries are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktReport {
    /// `max(0, max_i g_i)`
    pub ineq_violation: f64,
    /// `max_j |h_j|`
    pub eq_violation: f64,
    /// `|∇f + J_gᵀλ_g + J_hᵀλ_h|∞` with `∇f = 2·Jᵀφ`
    pub stationarity: f64,
    /// `max_i |λ_g,i · g_i|`
    pub complementarity: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.ineq_violation.max(self.eq_violation)
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.ineq_violation <= tol
            && self.eq_violation <= tol
            && self.stationarity <= tol
            && self.complementarity <= tol
    }
}

fn kkt_from_eval(ev: &Evaluation, lambda_g: &[f64], lambda_h: &[f64]) -> Result<KktReport> {
    check_len("inequality multipliers", ev.g.len(), lambda_g.len())?;
    check_len("equality multipliers", ev.h.len(), lambda_h.len())?;
    let mut grad = ev.cost_gradient()?;
    for (acc, v) in grad.iter_mut().zip(ev.j_g.atx(lambda_g)?) {
        *acc += v;
    }
    for (acc, v) in grad.iter_mut().zip(ev.j_h.atx(lambda_h)?) {
        *acc += v;
    }
    Ok(KktReport {
        ineq_violation: ev.max_ineq_violation(),
        eq_violation: ev.max_eq_violation(),
        stationarity: grad.iter().fold(0.0, |m, v| m.max(v.abs())),
        complementarity: ev
            .g
            .iter()
            .zip(lambda_g)
            .fold(0.0, |m, (g, l)| m.max((g * l).abs())),
    })
}

/// Evaluates the four KKT diagnostics at `x` with the multipliers in `state`.
pub fn kkt_report<P: ConstrainedProblem + ?Sized>(
    p: &P,
    x: &[f64],
    state: &AulaState,
) -> Result<KktReport> {
    let mut ev = Evaluation::for_problem(p);
    p.evaluate(x, &mut ev)?;
    kkt_from_eval(&ev, &state.lambda_g, &state.lambda_h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AulaOptions {
    pub mu_init: f64,
    pub mu_increase: f64,
    /// `μ` grows unless the max violation shrank by at least this factor.
    pub violation_ratio: f64,
    pub kkt_tol: f64,
    pub outer_max: usize,
    pub inner: GaussNewtonOptions,
}

impl Default for AulaOptions {
    fn default() -> Self {
        AulaOptions {
            mu_init: 1.0,
            mu_increase: 5.0,
            violation_ratio: 0.5,
            kkt_tol: 1e-3,
            outer_max: 30,
            inner: GaussNewtonOptions::default(),
        }
    }
}

impl AulaOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidOption {
                name: name.into(),
                reason: reason.into(),
            })
        };
        if !(self.mu_init > 0.0) {
            return bad("mu_init", "must be > 0");
        }
        if !(self.mu_increase > 1.0) {
            return bad("mu_increase", "must be > 1");
        }
        if !(self.violation_ratio > 0.0 && self.violation_ratio < 1.0) {
            return bad("violation_ratio", "must be in (0, 1)");
        }
        if !(self.kkt_tol > 0.0) {
            return bad("kkt_tol", "must be > 0");
        }
        self.inner.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AulaStatus {
    Converged,
    /// Outer iterations ran out; `x` is the least-violating iterate seen.
    InfeasibleOrStalled,
}

/// One outer iteration of the Augmented Lagrangian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    /// Max constraint violation after the inner solve.
    pub violation: f64,
    /// Penalty used for the inner solve.
    pub mu: f64,
    pub mu_increased: bool,
    pub inner: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AulaResult {
    pub x: Vec<f64>,
    pub state: AulaState,
    pub kkt: KktReport,
    pub status: AulaStatus,
    pub steps: Vec<OuterStep>,
}

impl AulaResult {
    pub fn converged(&self) -> bool {
        self.status == AulaStatus::Converged
    }

    /// Inner solves that ran out of iterations.
    pub fn inner_exhausted(&self) -> usize {
        self.steps.iter().filter(|s| !s.inner.converged).count()
    }
}

/// Inner sum of squares: `φ` followed by one penalty row per constraint.
struct AulaResiduals<'a, P: ?Sized> {
    problem: &'a P,
    mu: f64,
    lambda_g: &'a [f64],
    lambda_h: &'a [f64],
    eval: Evaluation,
}

impl<P: ConstrainedProblem + ?Sized> SumOfSquares for AulaResiduals<'_, P> {
    fn dim(&self) -> usize {
        self.problem.dims().dim
    }

    fn packed_width(&self) -> usize {
        self.problem.dims().packed_width
    }

    fn residual_count(&self) -> usize {
        let d = self.problem.dims();
        d.cost + d.ineq + d.eq
    }

    fn residuals(
        &mut self,
        x: &[f64],
        phi: &mut [f64],
        jac: Option<&mut RowShiftedMatrix>,
    ) -> Result<()> {
        self.problem.evaluate(x, &mut self.eval)?;
        let ev = &self.eval;
        let (nc, ni) = (ev.phi.len(), ev.g.len());
        let sq = self.mu.sqrt();
        phi[..nc].copy_from_slice(&ev.phi);
        let active: Vec<bool> = ev
            .g
            .iter()
            .zip(self.lambda_g)
            .map(|(&g, &l)| g > 0.0 || l > 0.0)
            .collect();
        for (i, (&g, &l)) in ev.g.iter().zip(self.lambda_g).enumerate() {
            phi[nc + i] = if active[i] { sq * g + l / (2.0 * sq) } else { 0.0 };
        }
        for (j, (&h, &l)) in ev.h.iter().zip(self.lambda_h).enumerate() {
            phi[nc + ni + j] = sq * h + l / (2.0 * sq);
        }

        if let Some(jac) = jac {
            let mut stacked = ev.j_phi.clone();
            let mut jg = ev.j_g.clone();
            for (i, &a) in active.iter().enumerate() {
                jg.scale_row(i, if a { sq } else { 0.0 });
            }
            stacked.append(&jg)?;
            let mut jh = ev.j_h.clone();
            for j in 0..jh.rows() {
                jh.scale_row(j, sq);
            }
            stacked.append(&jh)?;
            *jac = stacked;
        }
        Ok(())
    }
}

/// Augmented Lagrangian over the Gauss-Newton core. `warm` resumes from a
/// previous state (multipliers and penalty).
pub fn augmented_lagrangian<P: ConstrainedProblem + ?Sized>(
    p: &P,
    x0: &[f64],
    opts: &AulaOptions,
    warm: Option<AulaState>,
) -> Result<AulaResult> {
    opts.validate()?;
    let d = p.dims();
    check_len("initial point", d.dim, x0.len())?;
    let mut state = match warm {
        Some(s) => {
            check_len("inequality multipliers", d.ineq, s.lambda_g.len())?;
            check_len("equality multipliers", d.eq, s.lambda_h.len())?;
            s
        }
        None => AulaState::new(opts.mu_init, d.ineq, d.eq),
    };

    let mut x = x0.to_vec();
    let mut ev = Evaluation::new(&d);
    let mut steps: Vec<OuterStep> = Vec::new();
    let mut best: Option<(f64, Vec<f64>, AulaState, KktReport)> = None;
    let mut kkt = KktReport::default();
    let mut status = AulaStatus::InfeasibleOrStalled;

    for _ in 0..opts.outer_max {
        let mu = state.mu;
        let mut inner = AulaResiduals {
            problem: p,
            mu,
            lambda_g: &state.lambda_g,
            lambda_h: &state.lambda_h,
            eval: Evaluation::new(&d),
        };
        let (xn, report) = gauss_newton(&mut inner, &x, &opts.inner)?;
        x = xn;
        p.evaluate(&x, &mut ev)?;
        for (l, &g) in state.lambda_g.iter_mut().zip(&ev.g) {
            *l = (*l + 2.0 * mu * g).max(0.0);
        }
        for (l, &h) in state.lambda_h.iter_mut().zip(&ev.h) {
            *l += 2.0 * mu * h;
        }
        state.outer_iter += 1;
        kkt = kkt_from_eval(&ev, &state.lambda_g, &state.lambda_h)?;
        let violation = kkt.max_violation();

        let mu_increased = match steps.last() {
            Some(prev) => violation > opts.violation_ratio * prev.violation,
            None => false,
        };
        if mu_increased {
            state.mu *= opts.mu_increase;
        }
        log::debug!(
            "aula outer {}: violation {:.3e}, mu {}, inner iters {}",
            state.outer_iter,
            violation,
            mu,
            report.iterations
        );
        steps.push(OuterStep {
            violation,
            mu,
            mu_increased,
            inner: report,
        });

        if best.as_ref().is_none_or(|b| violation <= b.0) {
            best = Some((violation, x.clone(), state.clone(), kkt));
        }
        if kkt.satisfied(opts.kkt_tol) {
            status = AulaStatus::Converged;
            break;
        }
    }

    if status == AulaStatus::InfeasibleOrStalled && kkt.max_violation() > opts.kkt_tol {
        if let Some((_, bx, bs, bk)) = best {
            x = bx;
            state = bs;
            kkt = bk;
        }
    }
    Ok(AulaResult {
        x,
        state,
        kkt,
        status,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptions {
    pub barrier_init: f64,
    pub barrier_decrease: f64,
    pub barrier_tol: f64,
    pub inner: GaussNewtonOptions,
}

impl Default for BarrierOptions {
    /// The inner stop tolerance is far below the Gauss-Newton default: near
    /// the boundary the central path moves by amounts of order `ν`.
    fn default() -> Self {
        BarrierOptions {
            barrier_init: 1.0,
            barrier_decrease: 0.1,
            barrier_tol: 1e-6,
            inner: GaussNewtonOptions {
                stop_tol: 1e-9,
                ..GaussNewtonOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierResult {
    pub x: Vec<f64>,
    /// Diagnostics with the multiplier estimate `λ_i = ν / (-g_i)`.
    pub kkt: KktReport,
    pub multipliers: Vec<f64>,
    /// Final barrier weight `ν`.
    pub barrier: f64,
    /// Largest `g_i` over every point the inner solver accepted as in-domain.
    pub max_interior_g: f64,
    pub inner: Vec<SolveReport>,
}

impl BarrierResult {
    pub fn converged(&self) -> bool {
        self.inner.iter().all(|r| r.converged)
    }
}

struct BarrierObjective<'a, P: ?Sized> {
    problem: &'a P,
    nu: f64,
    eval: Evaluation,
    max_interior_g: f64,
}

impl<P: ConstrainedProblem + ?Sized> NewtonObjective for BarrierObjective<'_, P> {
    fn dim(&self) -> usize {
        self.problem.dims().dim
    }

    fn value(&mut self, x: &[f64]) -> Result<Option<f64>> {
        self.problem.evaluate(x, &mut self.eval)?;
        if self.eval.g.iter().any(|&g| !(g < 0.0)) {
            return Ok(None);
        }
        let g_max = self.eval.g.iter().fold(f64::NEG_INFINITY, |m, &g| m.max(g));
        self.max_interior_g = self.max_interior_g.max(g_max);
        let barrier: f64 = self.eval.g.iter().map(|&g| (-g).ln()).sum();
        Ok(Some(self.eval.cost() - self.nu * barrier))
    }

    fn linearize(&mut self, x: &[f64]) -> Result<(Vec<f64>, BandedSymmetricMatrix)> {
        self.problem.evaluate(x, &mut self.eval)?;
        let ev = &self.eval;
        let mut grad = ev.cost_gradient()?;
        let weights: Vec<f64> = ev.g.iter().map(|&g| self.nu / -g).collect();
        for (acc, v) in grad.iter_mut().zip(ev.j_g.atx(&weights)?) {
            *acc += v;
        }
        let mut hess = ev.pseudo_hessian()?;
        // ν/g² · ∇g∇gᵀ, dropping the curvature of g itself
        let mut scaled = ev.j_g.clone();
        for (i, &g) in ev.g.iter().enumerate() {
            scaled.scale_row(i, self.nu.sqrt() / -g);
        }
        hess.add_scaled(1.0, &scaled.ata()?)?;
        Ok((grad, hess))
    }
}

/// Log-barrier method from a strictly feasible `x0`.
pub fn log_barrier<P: ConstrainedProblem + ?Sized>(
    p: &P,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Result<BarrierResult> {
    opts.inner.validate()?;
    if !(opts.barrier_init > 0.0
        && opts.barrier_decrease > 0.0
        && opts.barrier_decrease < 1.0
        && opts.barrier_tol > 0.0)
    {
        return Err(Error::InvalidOption {
            name: "barrier".into(),
            reason: "need barrier_init > 0, barrier_decrease in (0, 1), barrier_tol > 0".into(),
        });
    }
    let d = p.dims();
    if d.eq > 0 {
        return Err(Error::Unsupported(format!(
            "log-barrier does not handle equality constraints ({} given)",
            d.eq
        )));
    }
    check_len("initial point", d.dim, x0.len())?;
    let mut ev = Evaluation::new(&d);
    p.evaluate(x0, &mut ev)?;
    let violated: Vec<usize> = ev
        .g
        .iter()
        .enumerate()
        .filter(|(_, &g)| !(g < 0.0))
        .map(|(i, _)| i)
        .collect();
    if !violated.is_empty() {
        return Err(Error::Infeasible { indices: violated });
    }

    let mut obj = BarrierObjective {
        problem: p,
        nu: opts.barrier_init,
        eval: Evaluation::new(&d),
        max_interior_g: f64::NEG_INFINITY,
    };
    let mut x = x0.to_vec();
    let mut inner = Vec::new();
    let mut nu = opts.barrier_init;
    loop {
        obj.nu = nu;
        let (xn, report) = minimize(&mut obj, &x, &opts.inner)?;
        log::debug!("barrier nu {nu:e}: cost {:.6e}, iters {}", report.final_cost, report.iterations);
        x = xn;
        inner.push(report);
        // slack keeps ν = barrier_tol itself from being skipped by rounding
        if nu * opts.barrier_decrease < opts.barrier_tol * (1.0 - 1e-9) {
            break;
        }
        nu *= opts.barrier_decrease;
    }

    p.evaluate(&x, &mut ev)?;
    let multipliers: Vec<f64> = ev.g.iter().map(|&g| nu / -g).collect();
    let kkt = kkt_from_eval(&ev, &multipliers, &[])?;
    Ok(BarrierResult {
        x,
        kkt,
        multipliers,
        barrier: nu,
        max_interior_g: obj.max_interior_g,
        inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_core::{DenseEval, DenseProblem};

    /// min x² s.t. 1 - x ≤ 0
    fn halfspace() -> DenseProblem<impl Fn(&[f64]) -> DenseEval> {
        DenseProblem::new(1, 1, 1, 0, |x: &[f64]| DenseEval {
            phi: vec![x[0]],
            j_phi: vec![1.0],
            g: vec![1.0 - x[0]],
            j_g: vec![-1.0],
            ..Default::default()
        })
    }

    /// min |x|² s.t. x1 + x2 = 1
    fn line() -> DenseProblem<impl Fn(&[f64]) -> DenseEval> {
        DenseProblem::new(2, 2, 0, 1, |x: &[f64]| DenseEval {
            phi: x.to_vec(),
            j_phi: vec![1.0, 0.0, 0.0, 1.0],
            h: vec![x[0] + x[1] - 1.0],
            j_h: vec![1.0, 1.0],
            ..Default::default()
        })
    }

    /// min (x-2)² s.t. x ≤ 1
    fn active_bound() -> DenseProblem<impl Fn(&[f64]) -> DenseEval> {
        DenseProblem::new(1, 1, 1, 0, |x: &[f64]| DenseEval {
            phi: vec![x[0] - 2.0],
            j_phi: vec![1.0],
            g: vec![x[0] - 1.0],
            j_g: vec![1.0],
            ..Default::default()
        })
    }

    fn tight() -> AulaOptions {
        AulaOptions {
            kkt_tol: 1e-6,
            outer_max: 100,
            inner: GaussNewtonOptions {
                stop_tol: 1e-9,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn aula_halfspace() {
        let r = augmented_lagrangian(&halfspace(), &[0.0], &tight(), None).unwrap();
        assert!(r.converged());
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.state.lambda_g[0] - 2.0).abs() < 1e-3, "{:?}", r.state);
    }

    #[test]
    fn aula_equality() {
        let r = augmented_lagrangian(&line(), &[0.0, 0.0], &tight(), None).unwrap();
        assert!(r.converged());
        assert!((r.x[0] - 0.5).abs() < 1e-4 && (r.x[1] - 0.5).abs() < 1e-4, "{:?}", r.x);
        // stationarity: 2x + λ = 0
        assert!((r.state.lambda_h[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn aula_default_options() {
        let r = augmented_lagrangian(&halfspace(), &[0.0], &AulaOptions::default(), None).unwrap();
        assert!(r.converged());
        assert!(r.kkt.satisfied(1e-3));
        assert!((r.x[0] - 1.0).abs() < 1e-3);
        for w in r.steps.windows(2) {
            assert!(w[1].violation <= w[0].violation || w[1].mu_increased);
        }
    }

    #[test]
    fn aula_multipliers_stay_nonnegative() {
        // inactive constraint: min (x-2)² s.t. x ≤ 5
        let p = DenseProblem::new(1, 1, 1, 0, |x: &[f64]| DenseEval {
            phi: vec![x[0] - 2.0],
            j_phi: vec![1.0],
            g: vec![x[0] - 5.0],
            j_g: vec![1.0],
            ..Default::default()
        });
        let r = augmented_lagrangian(&p, &[10.0], &AulaOptions::default(), None).unwrap();
        assert!(r.state.lambda_g.iter().all(|&l| l >= 0.0));
        assert!((r.x[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn aula_stalls_on_infeasible_problem() {
        // x ≤ -1 and x ≥ 1 cannot both hold
        let p = DenseProblem::new(1, 1, 2, 0, |x: &[f64]| DenseEval {
            phi: vec![x[0]],
            j_phi: vec![1.0],
            g: vec![x[0] + 1.0, 1.0 - x[0]],
            j_g: vec![1.0, -1.0],
            ..Default::default()
        });
        let opts = AulaOptions {
            outer_max: 8,
            ..Default::default()
        };
        let r = augmented_lagrangian(&p, &[0.3], &opts, None).unwrap();
        assert_eq!(r.status, AulaStatus::InfeasibleOrStalled);
        assert!(r.kkt.max_violation() > 0.5);
    }

    #[test]
    fn barrier_halfspace_follows_central_path() {
        let r = log_barrier(&halfspace(), &[2.0], &BarrierOptions::default()).unwrap();
        assert!(r.barrier <= 1e-6 * (1.0 + 1e-9) && r.barrier > 1e-7, "{}", r.barrier);
        assert!((r.x[0] - 1.0).abs() < 1e-3, "{:?}", r.x);
        assert!(r.x[0] > 1.0);
        assert!(r.max_interior_g < 0.0);
    }

    #[test]
    fn barrier_active_bound_stays_below() {
        let r = log_barrier(&active_bound(), &[0.0], &BarrierOptions::default()).unwrap();
        assert!(r.x[0] < 1.0);
        assert!(1.0 - r.x[0] < 1e-3, "{:?}", r.x);
        assert!(r.kkt.stationarity < 1e-3, "{:?}", r.kkt);
    }

    #[test]
    fn barrier_rejects_infeasible_start() {
        let err = log_barrier(&halfspace(), &[0.5], &BarrierOptions::default()).unwrap_err();
        assert_eq!(err, Error::Infeasible { indices: vec![0] });
    }

    #[test]
    fn barrier_rejects_equalities() {
        let err = log_barrier(&line(), &[0.0, 0.0], &BarrierOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn kkt_at_unconstrained_minimum() {
        let p = DenseProblem::new(2, 2, 0, 0, |x: &[f64]| DenseEval {
            phi: vec![x[0] - 1.0, x[1] + 2.0],
            j_phi: vec![1.0, 0.0, 0.0, 1.0],
            ..Default::default()
        });
        let k = kkt_report(&p, &[1.0, -2.0], &AulaState::new(1.0, 0, 0)).unwrap();
        assert!(k.satisfied(1e-10), "{k:?}");
    }

    #[test]
    fn kkt_at_analytic_halfspace_point() {
        let state = AulaState {
            mu: 1.0,
            lambda_g: vec![2.0],
            lambda_h: vec![],
            outer_iter: 0,
        };
        let k = kkt_report(&halfspace(), &[1.0], &state).unwrap();
        assert!(k.stationarity <= 1e-3 && k.complementarity <= 1e-3, "{k:?}");
    }
}
