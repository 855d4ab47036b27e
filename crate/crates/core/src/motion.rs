//! Tasks, motion problems and their assembly into a k-order Markov problem.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kinematics::{FrameSet, KinematicWorld, TaskMap};
use crate::problem_core::{
    flatten_problem, KOrderMarkovProblem, MarkovProgram, TermDims, TermEval, Trajectory,
};
use crate::rowshifted::BandedSymmetricMatrix;

/// A per-component, per-timeslice table stored in one of the broadcast forms
/// `1×1`, `1×(T+1)`, `d×1` or `d×(T+1)`. Missing dimensions are constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Schedule {
    pub fn scalar(v: f64) -> Self {
        Schedule {
            rows: 1,
            cols: 1,
            values: vec![v],
        }
    }

    /// `1×(T+1)`, one value per time step.
    pub fn per_time(values: Vec<f64>) -> Self {
        Schedule {
            rows: 1,
            cols: values.len(),
            values,
        }
    }

    /// `d×1`, one value per component.
    pub fn per_component(values: Vec<f64>) -> Self {
        Schedule {
            rows: values.len(),
            cols: 1,
            values,
        }
    }

    /// Row-major `rows × cols` table.
    pub fn table(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_len("schedule table", rows * cols, values.len())?;
        if rows == 0 || cols == 0 {
            return Err(Error::Broadcast {
                rows,
                cols,
                dim: 0,
                steps: 0,
            });
        }
        Ok(Schedule { rows, cols, values })
    }

    /// Zero everywhere except time step `t`, where it is `v`.
    pub fn only_at(horizon: usize, t: usize, v: f64) -> Self {
        let mut values = vec![0.0; horizon + 1];
        values[t] = v;
        Self::per_time(values)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Checks that this schedule broadcasts to `dim × steps`.
    pub fn check(&self, dim: usize, steps: usize) -> Result<()> {
        if (self.rows == 1 || self.rows == dim) && (self.cols == 1 || self.cols == steps) {
            Ok(())
        } else {
            Err(Error::Broadcast {
                rows: self.rows,
                cols: self.cols,
                dim,
                steps,
            })
        }
    }

    /// Value at component `i`, time `t`. Assumes [`check`](Self::check) passed.
    pub fn at(&self, i: usize, t: usize) -> f64 {
        let r = if self.rows == 1 { 0 } else { i };
        let c = if self.cols == 1 { 0 } else { t };
        self.values[r * self.cols + c]
    }

    /// Materializes the full row-major `dim × steps` table.
    pub fn expand(&self, dim: usize, steps: usize) -> Result<Vec<f64>> {
        self.check(dim, steps)?;
        let mut out = Vec::with_capacity(dim * steps);
        for i in 0..dim {
            out.extend((0..steps).map(|t| self.at(i, t)));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Cost,
    Inequality,
    Equality,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Cost => "cost",
            Mode::Inequality => "ineq",
            Mode::Equality => "eq",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub map: Arc<dyn TaskMap>,
    pub mode: Mode,
    pub rho: Schedule,
    pub target: Schedule,
}

impl Task {
    pub fn new(
        name: impl Into<String>,
        map: Arc<dyn TaskMap>,
        mode: Mode,
        rho: Schedule,
        target: Schedule,
    ) -> Self {
        Task {
            name: name.into(),
            map,
            mode,
            rho,
            target,
        }
    }

    /// A cost task with scalar precision, except that a negative precision
    /// turns it into an inequality with unit scaling.
    pub fn with_signed_precision(
        name: impl Into<String>,
        map: Arc<dyn TaskMap>,
        precision: f64,
        target: Schedule,
    ) -> Self {
        if precision < 0.0 {
            Self::new(name, map, Mode::Inequality, Schedule::scalar(1.0), target)
        } else {
            Self::new(name, map, Mode::Cost, Schedule::scalar(precision), target)
        }
    }

    pub fn order(&self) -> usize {
        self.map.order()
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    /// Active at `t` iff any precision component is nonzero.
    pub fn active_at(&self, t: usize) -> bool {
        (0..self.dim()).any(|i| self.rho.at(i, t) != 0.0)
    }
}

/// `ŷ = diag(ρ_t)(y − y*_t)` and `Ĵ = diag(ρ_t) J` in place; `jac` is
/// row-major with `y.len()` rows.
pub fn transformed_map(task: &Task, t: usize, y: &mut [f64], jac: &mut [f64]) -> Result<()> {
    let d = y.len();
    let steps = t + 1;
    for s in [&task.rho, &task.target] {
        if !(s.rows == 1 || s.rows == d) || !(s.cols == 1 || s.cols >= steps) {
            return Err(Error::Broadcast {
                rows: s.rows,
                cols: s.cols,
                dim: d,
                steps,
            });
        }
    }
    let width = jac.len().checked_div(d).unwrap_or(0);
    for i in 0..d {
        let rho = task.rho.at(i, t);
        y[i] = rho * (y[i] - task.target.at(i, t));
        jac[i * width..(i + 1) * width].iter_mut().for_each(|v| *v *= rho);
    }
    Ok(())
}

/// A linear stencil over `order + 1` consecutive configurations:
/// `f = Σ_j B_j x_{t-order+j} + b`.
#[derive(Debug, Clone)]
pub struct StencilMap {
    n: usize,
    rows: usize,
    /// One row-major `rows × n` block per slot, oldest first.
    blocks: Vec<Vec<f64>>,
    bias: Vec<f64>,
    label: String,
}

impl StencilMap {
    /// Scalar coefficients applied to the identity on each slot.
    pub fn scalar(label: &str, n: usize, coeffs: &[f64]) -> Self {
        let blocks = coeffs
            .iter()
            .map(|&c| {
                let mut b = vec![0.0; n * n];
                (0..n).for_each(|i| b[i * n + i] = c);
                b
            })
            .collect();
        StencilMap {
            n,
            rows: n,
            blocks,
            bias: vec![0.0; n],
            label: label.into(),
        }
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

impl TaskMap for StencilMap {
    fn order(&self) -> usize {
        self.blocks.len() - 1
    }
    fn dim(&self) -> usize {
        self.rows
    }
    fn name(&self) -> String {
        self.label.clone()
    }
    fn eval(&self, _world: &KinematicWorld, frames: &[&FrameSet], y: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let n = self.n;
        let width = self.blocks.len() * n;
        y.copy_from_slice(&self.bias);
        for (j, (block, f)) in self.blocks.iter().zip(frames).enumerate() {
            for r in 0..self.rows {
                let brow = &block[r * n..(r + 1) * n];
                y[r] += brow.iter().zip(&f.q).map(|(a, b)| a * b).sum::<f64>();
                jac[r * width + j * n..r * width + (j + 1) * n].copy_from_slice(brow);
            }
        }
        Ok(())
    }
}

/// `x_t − x_{t−1}`.
pub fn velocity_map(n: usize) -> StencilMap {
    StencilMap::scalar("vel", n, &[-1.0, 1.0])
}

/// `x_t − 2x_{t−1} + x_{t−2}`.
pub fn acceleration_map(n: usize) -> StencilMap {
    StencilMap::scalar("acc", n, &[1.0, -2.0, 1.0])
}

/// `x_t − 3x_{t−1} + 3x_{t−2} − x_{t−3}`.
pub fn jerk_map(n: usize) -> StencilMap {
    StencilMap::scalar("jerk", n, &[-1.0, 3.0, -3.0, 1.0])
}

/// Finite-difference stencil of the given order (1 velocity, 2 acceleration,
/// 3 jerk).
pub fn transition_map(n: usize, order: usize) -> Result<StencilMap> {
    match order {
        1 => Ok(velocity_map(n)),
        2 => Ok(acceleration_map(n)),
        3 => Ok(jerk_map(n)),
        _ => Err(Error::InvalidOption {
            name: "k".into(),
            reason: format!("transition order must be 1, 2 or 3, got {order}"),
        }),
    }
}

/// `√H (M·(x_t − 2x_{t−1} + x_{t−2}) + F)` with `√H = Lᵀ` for `H = L Lᵀ`,
/// so that `fᵀf = uᵀ H u`.
pub fn torque_map(n: usize, m: &[f64], f: &[f64], h: &[f64]) -> Result<StencilMap> {
    check_len("mass matrix", n * n, m.len())?;
    check_len("bias vector", n, f.len())?;
    check_len("cost metric", n * n, h.len())?;
    for i in 0..n {
        for j in 0..i {
            if m[i * n + j] != m[j * n + i] || h[i * n + j] != h[j * n + i] {
                return Err(Error::Config("torque map needs symmetric M and H".into()));
            }
        }
    }
    let chol = BandedSymmetricMatrix::from_dense(h, n, n)?.cholesky()?;
    // sqrt_h = Lᵀ, upper triangular
    let mut sqrt_h = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            sqrt_h[i * n + j] = chol.l(j, i);
        }
    }
    let mut lm = vec![0.0; n * n];
    let mut bias = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            lm[i * n + j] = (0..n).map(|l| sqrt_h[i * n + l] * m[l * n + j]).sum();
        }
        bias[i] = (0..n).map(|l| sqrt_h[i * n + l] * f[l]).sum();
    }
    let scaled = |c: f64| lm.iter().map(|v| c * v).collect::<Vec<_>>();
    Ok(StencilMap {
        n,
        rows: n,
        blocks: vec![scaled(1.0), scaled(-2.0), scaled(1.0)],
        bias,
        label: "torque".into(),
    })
}

/// `(T, tasks, prefix)` over a kinematic world.
#[derive(Debug, Clone)]
pub struct MotionProblem {
    world: KinematicWorld,
    horizon: usize,
    order: usize,
    prefix: Vec<f64>,
    postfix: Option<Vec<f64>>,
    tasks: Vec<Task>,
}

impl MotionProblem {
    pub fn new(
        world: KinematicWorld,
        horizon: usize,
        order: usize,
        prefix: Vec<f64>,
        tasks: Vec<Task>,
    ) -> Result<Self> {
        let n = world.dim();
        check_len("prefix", order * n, prefix.len())?;
        if tasks.is_empty() {
            return Err(Error::Config("a motion problem needs at least one task".into()));
        }
        for task in &tasks {
            if task.order() > order {
                return Err(Error::Config(format!(
                    "task `{}` has order {} above the problem order {order}",
                    task.name,
                    task.order()
                )));
            }
            task.rho.check(task.dim(), horizon + 1)?;
            task.target.check(task.dim(), horizon + 1)?;
            if task.rho.values.iter().any(|r| !(*r >= 0.0)) {
                return Err(Error::Config(format!(
                    "task `{}` has a negative precision",
                    task.name
                )));
            }
        }
        Ok(MotionProblem {
            world,
            horizon,
            order,
            prefix,
            postfix: None,
            tasks,
        })
    }

    /// Adds `k` fixed configurations after `T`; transition tasks are then
    /// also charged on the steps that reach into them.
    pub fn with_postfix(mut self, postfix: Vec<f64>) -> Result<Self> {
        check_len("postfix", self.order * self.world.dim(), postfix.len())?;
        self.postfix = Some(postfix);
        Ok(self)
    }

    pub fn world(&self) -> &KinematicWorld {
        &self.world
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    /// Flattened program over `(x_0; ..; x_T)`.
    pub fn assemble(&self) -> Result<MarkovProgram<&MotionProblem>> {
        flatten_problem(self)
    }

    fn schedule_time(&self, t: usize) -> usize {
        t.min(self.horizon)
    }

    /// Whether `task` contributes rows to term `t`.
    fn contributes(&self, task: &Task, t: usize) -> bool {
        // beyond T an order-0 task only sees postfix constants
        if t > self.horizon && t - self.horizon > task.order() {
            return false;
        }
        task.active_at(self.schedule_time(t))
    }

    /// Transformed output of one task at term `t`; `jac` gets `(k+1)·n`
    /// columns with the task's slots right-aligned.
    fn task_rows(
        &self,
        task: &Task,
        t: usize,
        frames: &[FrameSet],
        y: &mut Vec<f64>,
        jac: &mut Vec<f64>,
    ) -> Result<()> {
        let n = self.world.dim();
        let k = self.order;
        let d = task.dim();
        let kc = task.order();
        let local_w = (kc + 1) * n;
        let width = (k + 1) * n;
        let refs: Vec<&FrameSet> = frames[k - kc..].iter().collect();
        y.clear();
        y.resize(d, 0.0);
        let mut local = vec![0.0; d * local_w];
        task.map.eval(&self.world, &refs, y, &mut local)?;
        transformed_map(task, self.schedule_time(t), y, &mut local)?;
        jac.clear();
        jac.resize(d * width, 0.0);
        let pad = (k - kc) * n;
        for r in 0..d {
            jac[r * width + pad..(r + 1) * width].copy_from_slice(&local[r * local_w..(r + 1) * local_w]);
        }
        Ok(())
    }

    fn frames(&self, tuple: &[&[f64]]) -> Result<Vec<FrameSet>> {
        tuple.iter().map(|q| self.world.set_joint_state(q)).collect()
    }

    /// Per-task costs or violations of trajectory `x`.
    pub fn cost_report(&self, x: &Trajectory) -> Result<CostReport> {
        let n = self.world.dim();
        check_len("trajectory width", n, x.config_dim())?;
        check_len("trajectory steps", self.horizon + 1, x.steps())?;
        let last = crate::problem_core::last_term(self);
        let mut rows: Vec<TaskCost> = self
            .tasks
            .iter()
            .map(|task| TaskCost {
                name: task.name.clone(),
                mode: task.mode,
                total: 0.0,
                per_t: vec![0.0; last + 1],
            })
            .collect();
        let (mut y, mut jac) = (Vec::new(), Vec::new());
        for t in 0..=last {
            let tuple = self.tuple(x, t);
            let frames = self.frames(&tuple)?;
            for (task, row) in self.tasks.iter().zip(rows.iter_mut()) {
                if !self.contributes(task, t) {
                    continue;
                }
                self.task_rows(task, t, &frames, &mut y, &mut jac)?;
                let v = match task.mode {
                    Mode::Cost => y.iter().map(|v| v * v).sum(),
                    Mode::Inequality => y.iter().fold(0.0f64, |m, v| m.max(*v)),
                    Mode::Equality => y.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                };
                row.per_t[t] = v;
            }
        }
        for row in &mut rows {
            row.total = match row.mode {
                Mode::Cost => row.per_t.iter().sum(),
                _ => row.per_t.iter().fold(0.0, |m: f64, v| m.max(*v)),
            };
        }
        Ok(CostReport::new(rows))
    }

    fn tuple<'a>(&'a self, x: &'a Trajectory, t: usize) -> Vec<&'a [f64]> {
        let n = self.world.dim();
        let k = self.order;
        (0..=k)
            .map(|j| {
                let s = t as isize - k as isize + j as isize;
                if s < 0 {
                    let r = (s + k as isize) as usize;
                    &self.prefix[r * n..(r + 1) * n]
                } else if s as usize <= self.horizon {
                    x.config(s as usize)
                } else {
                    let r = s as usize - self.horizon - 1;
                    &self.postfix.as_ref().expect("postfix")[r * n..(r + 1) * n]
                }
            })
            .collect()
    }
}

impl KOrderMarkovProblem for MotionProblem {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn order(&self) -> usize {
        self.order
    }

    fn config_dim(&self) -> usize {
        self.world.dim()
    }

    fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    fn postfix(&self) -> Option<&[f64]> {
        self.postfix.as_deref()
    }

    fn term_dims(&self, t: usize) -> TermDims {
        let mut d = TermDims::default();
        for task in self.tasks.iter().filter(|task| self.contributes(task, t)) {
            match task.mode {
                Mode::Cost => d.cost += task.dim(),
                Mode::Inequality => d.ineq += task.dim(),
                Mode::Equality => d.eq += task.dim(),
            }
        }
        d
    }

    fn evaluate_term(&self, t: usize, tuple: &[&[f64]], out: &mut TermEval) -> Result<()> {
        let frames = self.frames(tuple)?;
        let (mut y, mut jac) = (Vec::new(), Vec::new());
        for task in self.tasks.iter().filter(|task| self.contributes(task, t)) {
            self.task_rows(task, t, &frames, &mut y, &mut jac)?;
            let (v, j) = match task.mode {
                Mode::Cost => (&mut out.f, &mut out.j_f),
                Mode::Inequality => (&mut out.g, &mut out.j_g),
                Mode::Equality => (&mut out.h, &mut out.j_h),
            };
            v.extend_from_slice(&y);
            j.extend_from_slice(&jac);
        }
        Ok(())
    }
}

/// Cost or violation of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCost {
    pub name: String,
    pub mode: Mode,
    /// Sum of `|ŷ_t|²` for costs, max violation over `t` for constraints.
    pub total: f64,
    pub per_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub tasks: Vec<TaskCost>,
    /// Sum of all cost-mode totals; equals `φᵀφ` of the assembled problem.
    pub total_cost: f64,
    pub max_violation: f64,
}

impl CostReport {
    fn new(tasks: Vec<TaskCost>) -> Self {
        let total_cost = tasks
            .iter()
            .filter(|t| t.mode == Mode::Cost)
            .map(|t| t.total)
            .sum();
        let max_violation = tasks
            .iter()
            .filter(|t| t.mode != Mode::Cost)
            .fold(0.0, |m: f64, t| m.max(t.total));
        CostReport {
            tasks,
            total_cost,
            max_violation,
        }
    }

    pub fn task(&self, name: &str) -> Option<&TaskCost> {
        self.tasks.iter().find(|t| t.name == name)
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:<5} {:>24}", "task", "mode", "total")?;
        for t in &self.tasks {
            writeln!(f, "{:<24} {:<5} {:>24e}", t.name, t.mode, t.total)?;
        }
        writeln!(f, "{:<24} {:<5} {:>24e}", "TOTAL", "cost", self.total_cost)?;
        writeln!(f, "{:<24} {:<5} {:>24e}", "MAX", "viol", self.max_violation)?;
        writeln!(f)?;
        writeln!(f, "# per-step breakdown: t followed by one column per task")?;
        let steps = self.tasks.first().map_or(0, |t| t.per_t.len());
        for s in 0..steps {
            write!(f, "{s}")?;
            for t in &self.tasks {
                write!(f, " {:e}", t.per_t[s])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
