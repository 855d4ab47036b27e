use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::constrained::{
    augmented_lagrangian, kkt_report, log_barrier, AulaOptions, AulaState, BarrierOptions,
    KktReport,
};
use crate::error::{Error, Result};
use crate::kinematics::{
    joint_limits_map, orientation_map, position_map, proximity_map, AffineMap, KinematicWorld,
    TaskMap, Topology,
};
use crate::motion::{
    acceleration_map, transition_map, velocity_map, CostReport, Mode, MotionProblem, Schedule, Task,
};
use crate::optim::SolveReport;
use crate::problem_core::{ConstrainedProblem, Evaluation, KOrderMarkovProblem, Trajectory};

use super::params::{aula_options, ParameterStore};

/// Wall times of the particle benchmark, as fractions of `T`.
const WALL_STEPS: [usize; 4] = [1, 2, 3, 4];

fn wall_times(horizon: usize) -> [usize; 4] {
    WALL_STEPS.map(|q| q * horizon / 4)
}

/// Point particle in the plane that starts at the origin, pays a k-th order
/// finite-difference cost, and must pass `x0 ≥ 1` at `T/4` and `3T/4` and
/// `x0 ≤ -1` at `T/2` and `T`.
pub fn particle_around_walls(horizon: usize, k: usize) -> Result<MotionProblem> {
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidOption {
            name: "k".into(),
            reason: format!("must be 1, 2 or 3, got {k}"),
        });
    }
    if horizon < 4 * k {
        return Err(Error::InvalidOption {
            name: "T".into(),
            reason: format!("must be at least 4k = {}, got {horizon}", 4 * k),
        });
    }
    let world = KinematicWorld::particle(2)?;
    let walls = wall_times(horizon);
    let at = |ts: &[usize]| {
        let mut v = vec![0.0; horizon + 1];
        ts.iter().for_each(|&t| v[t] = 1.0);
        Schedule::per_time(v)
    };
    let tasks = vec![
        Task::new(
            "transition",
            Arc::new(transition_map(2, k)?),
            Mode::Cost,
            Schedule::scalar(1.0),
            Schedule::scalar(0.0),
        ),
        // 1 - x0 <= 0
        Task::new(
            "wall_right",
            Arc::new(AffineMap::new("right", 2, vec![-1.0, 0.0], vec![1.0])?),
            Mode::Inequality,
            at(&[walls[0], walls[2]]),
            Schedule::scalar(0.0),
        ),
        // x0 + 1 <= 0
        Task::new(
            "wall_left",
            Arc::new(AffineMap::new("left", 2, vec![1.0, 0.0], vec![1.0])?),
            Mode::Inequality,
            at(&[walls[1], walls[3]]),
            Schedule::scalar(0.0),
        ),
    ];
    MotionProblem::new(world, horizon, k, vec![0.0; 2 * k], tasks)
}

/// Strictly feasible start for [`particle_around_walls`]: piecewise linear
/// through `±1.5` at the wall times.
pub fn particle_feasible_init(horizon: usize) -> Trajectory {
    let walls = wall_times(horizon);
    let knots = [(0, 0.0), (walls[0], 1.5), (walls[1], -1.5), (walls[2], 1.5), (walls[3], -1.5)];
    let mut x = Trajectory::zeros(horizon, 2);
    for win in knots.windows(2) {
        let ((t0, a), (t1, b)) = (win[0], win[1]);
        for t in t0..=t1 {
            let s = (t - t0) as f64 / (t1 - t0) as f64;
            x.config_mut(t)[0] = a + s * (b - a);
        }
    }
    x
}

/// Everything a benchmark run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub name: String,
    pub trajectory: Trajectory,
    pub costs: CostReport,
    /// Objective `φᵀφ` at the returned trajectory.
    pub final_cost: f64,
    pub solves: Vec<SolveReport>,
    pub kkt: KktReport,
    pub converged: bool,
    pub wall_time_s: f64,
}

impl BenchmarkResult {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    AugmentedLagrangian,
    LogBarrier,
}

/// Solves `mp` from `x0`, running the Augmented Lagrangian `iterate` times
/// with warm restarts.
pub fn solve_motion(
    name: &str,
    mp: &MotionProblem,
    x0: &Trajectory,
    method: Method,
    aula: &AulaOptions,
    barrier: &BarrierOptions,
    iterate: usize,
) -> Result<BenchmarkResult> {
    let start = Instant::now();
    let prog = mp.assemble()?;
    let mut solves = Vec::new();
    let (x, kkt, converged) = match method {
        Method::AugmentedLagrangian => {
            let mut x = x0.as_flat().to_vec();
            let mut warm: Option<AulaState> = None;
            let mut last = None;
            for round in 0..iterate.max(1) {
                let r = augmented_lagrangian(&prog, &x, aula, warm.take())?;
                info!(
                    "{name}: round {round} status {:?} after {} outer steps, violation {:e}",
                    r.status,
                    r.steps.len(),
                    r.kkt.max_violation()
                );
                solves.extend(r.steps.iter().map(|s| s.inner.clone()));
                x = r.x.clone();
                warm = Some(r.state.clone());
                last = Some(r);
            }
            let r = last.expect("at least one round");
            // the last subproblem must itself have converged, otherwise the
            // KKT test only saw an intermediate point
            let last_inner_ok = r.steps.last().is_some_and(|s| s.inner.converged);
            let ok = r.converged() && last_inner_ok;
            (r.x, r.kkt, ok)
        }
        Method::LogBarrier => {
            let r = log_barrier(&prog, x0.as_flat(), barrier)?;
            let ok = r.converged() && r.kkt.satisfied(aula.kkt_tol);
            solves.extend(r.inner.iter().cloned());
            (r.x, r.kkt, ok)
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut ev = Evaluation::for_problem(&prog);
    prog.evaluate(&x, &mut ev)?;
    let trajectory = Trajectory::from_flat(x, mp.world().dim())?;
    let costs = mp.cost_report(&trajectory)?;
    Ok(BenchmarkResult {
        name: name.to_string(),
        trajectory,
        costs,
        final_cost: ev.cost(),
        solves,
        kkt,
        converged,
        wall_time_s,
    })
}

/// KKT diagnostics of an arbitrary trajectory with zero multipliers.
pub fn feasibility(mp: &MotionProblem, x: &Trajectory) -> Result<KktReport> {
    let prog = mp.assemble()?;
    let d = prog.dims();
    kkt_report(&prog, x.as_flat(), &AulaState::new(1.0, d.ineq, d.eq))
}

/// Parameters of [`move_to`] with their default values.
pub const MOVE_TO_DEFAULTS: [(&str, f64); 5] = [
    ("KOMO/moveTo/precision", 1e3),
    ("KOMO/moveTo/collisionPrecision", -1e0),
    ("KOMO/moveTo/collisionMargin", 0.1),
    ("KOMO/moveTo/finalVelocityZeroPrecision", 1e1),
    ("KOMO/moveTo/alignPrecision", 1e3),
];

/// Builds the reaching problem: acceleration costs, endeffector position at
/// `T`, zero final velocity, optional orientation alignment, and collision
/// and joint-limit constraints.
pub fn move_to_problem(
    world: &KinematicWorld,
    endeff: &str,
    target: &str,
    align: u8,
    params: &mut ParameterStore,
) -> Result<MotionProblem> {
    if !matches!(world.topology(), Topology::PlanarChain { .. }) {
        return Err(Error::Config("moveTo needs a planar chain world".into()));
    }
    let [pos_prec, col_prec, margin, zero_vel_prec, align_prec] =
        MOVE_TO_DEFAULTS.map(|(k, d)| params.get(k, d));
    let (pos_prec, col_prec, margin, zero_vel_prec, align_prec) =
        (pos_prec?, col_prec?, margin?, zero_vel_prec?, align_prec?);
    let horizon: usize = params.get("KOMO/moveTo/T", 40)?;
    if horizon == 0 {
        return Err(Error::InvalidOption {
            name: "KOMO/moveTo/T".into(),
            reason: "must be >= 1".into(),
        });
    }

    let n = world.dim();
    world.require_shape(endeff)?;
    let g = world.require_shape(target)?;
    let start = world.set_joint_state(world.q())?;
    let goal = start.positions[g];

    let mut tasks = vec![
        Task::new(
            "transition",
            Arc::new(acceleration_map(n)),
            Mode::Cost,
            Schedule::scalar(1.0),
            Schedule::scalar(0.0),
        ),
        Task::new(
            "endeff_position",
            Arc::new(position_map(world, endeff)?),
            Mode::Cost,
            Schedule::only_at(horizon, horizon, pos_prec),
            Schedule::per_component(goal.to_vec()),
        ),
        Task::new(
            "final_velocity",
            Arc::new(velocity_map(n)),
            Mode::Cost,
            Schedule::only_at(horizon, horizon, zero_vel_prec),
            Schedule::scalar(0.0),
        ),
    ];
    if align & 1 != 0 {
        tasks.push(Task::new(
            "align",
            Arc::new(orientation_map(world, endeff)?),
            Mode::Cost,
            Schedule::only_at(horizon, horizon, align_prec),
            Schedule::scalar(start.angles[g]),
        ));
    }
    if align & !1 != 0 {
        warn!("axis alignment bits {:#04b} have no planar meaning and are ignored", align & !1);
    }
    let prox = proximity_map(world, margin)?;
    if prox.dim() > 0 && col_prec != 0.0 {
        tasks.push(Task::with_signed_precision(
            "collision",
            Arc::new(prox),
            col_prec,
            Schedule::scalar(0.0),
        ));
    }
    if let Some(l) = world.limits() {
        tasks.push(Task::new(
            "joint_limits",
            Arc::new(joint_limits_map(world, &l.lower, &l.upper)?),
            Mode::Inequality,
            Schedule::scalar(1.0),
            Schedule::scalar(0.0),
        ));
    }
    let prefix = [world.q(), world.q()].concat();
    MotionProblem::new(world.clone(), horizon, 2, prefix, tasks)
}

/// Moves `endeff` to the position of `target`, starting and resting at the
/// world's current configuration. Options come from `params`.
pub fn move_to(
    world: &KinematicWorld,
    endeff: &str,
    target: &str,
    align: u8,
    iterate: usize,
    params: &mut ParameterStore,
) -> Result<(MotionProblem, BenchmarkResult)> {
    let mp = move_to_problem(world, endeff, target, align, params)?;
    let aula = aula_options(params)?;
    let x0 = Trajectory::constant(mp.horizon(), world.q());
    let result = solve_motion(
        "moveTo",
        &mp,
        &x0,
        Method::AugmentedLagrangian,
        &aula,
        &BarrierOptions::default(),
        iterate,
    )?;
    if result.costs.max_violation > aula.kkt_tol {
        warn!("moveTo ended infeasible:\n{}", result.costs);
    }
    Ok((mp, result))
}
