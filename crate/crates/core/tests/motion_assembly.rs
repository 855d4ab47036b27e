use std::sync::Arc;

use korder::cli::{particle_around_walls, particle_feasible_init};
use korder::constrained::{augmented_lagrangian, log_barrier, AulaOptions, BarrierOptions};
use korder::kinematics::{AffineMap, KinematicWorld, TaskMap};
use korder::motion::{acceleration_map, velocity_map, Mode, MotionProblem, Schedule, Task};
use korder::problem_core::{
    check_problem_jacobians, ConstrainedProblem, Evaluation, KOrderMarkovProblem, Trajectory,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_traj(rng: &mut StdRng, horizon: usize, n: usize) -> Vec<f64> {
    (0..(horizon + 1) * n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn schedule_strategy(d: usize, steps: usize) -> impl Strategy<Value = Schedule> {
    (0usize..4).prop_flat_map(move |form| {
        let (r, c) = [(1, 1), (1, steps), (d, 1), (d, steps)][form];
        prop::collection::vec(0.0f64..5.0, r * c)
            .prop_map(move |v| Schedule::table(r, c, v).unwrap())
    })
}

proptest! {
    #[test]
    fn broadcast_matches_materialization(
        (d, steps, s) in (1usize..5, 1usize..8).prop_flat_map(|(d, st)| (Just(d), Just(st), schedule_strategy(d, st)))
    ) {
        let full = s.expand(d, steps).unwrap();
        let (r, c) = s.shape();
        for i in 0..d {
            for t in 0..steps {
                let src = s.values()[if r == 1 { 0 } else { i } * c + if c == 1 { 0 } else { t }];
                prop_assert_eq!(full[i * steps + t], src);
                prop_assert_eq!(s.at(i, t), src);
            }
        }
    }

    #[test]
    fn scaling_precision_scales_cost_quadratically(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = StdRng::seed_from_u64(seed);
        let horizon = 6;
        let rho: Vec<f64> = (0..=horizon).map(|_| rng.gen_range(0.0..3.0)).collect();
        let build = |scale: f64| {
            let w = KinematicWorld::particle(2).unwrap();
            let tasks = vec![
                Task::new("vel", Arc::new(velocity_map(2)), Mode::Cost, Schedule::scalar(1.0), Schedule::scalar(0.0)),
                Task::new(
                    "q",
                    Arc::new(AffineMap::identity(2)),
                    Mode::Cost,
                    Schedule::per_time(rho.iter().map(|r| r * scale).collect()),
                    Schedule::per_component(vec![0.5, -0.5]),
                ),
            ];
            MotionProblem::new(w, horizon, 1, vec![0.0; 2], tasks).unwrap()
        };
        let x = Trajectory::from_flat(random_traj(&mut rng, horizon, 2), 2).unwrap();
        let (a, b) = (build(1.0), build(c));
        let (ra, rb) = (a.cost_report(&x).unwrap(), b.cost_report(&x).unwrap());
        let (qa, qb) = (ra.task("q").unwrap().total, rb.task("q").unwrap().total);
        prop_assert!((qb - c * c * qa).abs() <= 1e-10 * (1.0 + qb));
        prop_assert_eq!(ra.task("vel").unwrap(), rb.task("vel").unwrap());

        // rows of the unscaled task stay bit-identical
        let (pa, pb) = (a.assemble().unwrap(), b.assemble().unwrap());
        let (mut ea, mut eb) = (Evaluation::for_problem(&pa), Evaluation::for_problem(&pb));
        pa.evaluate(x.as_flat(), &mut ea).unwrap();
        pb.evaluate(x.as_flat(), &mut eb).unwrap();
        let mut row = 0;
        for t in 0..=horizon {
            prop_assert_eq!(&ea.phi[row..row + 2], &eb.phi[row..row + 2]);
            row += pa.term_dims()[t].cost;
        }
    }
}

#[test]
fn zero_precision_slices_have_no_rows() {
    let horizon = 8;
    let rho: Vec<f64> = (0..=horizon).map(|t| if t % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let w = KinematicWorld::particle(2).unwrap();
    let q = Task::new("q", Arc::new(AffineMap::identity(2)), Mode::Cost, Schedule::per_time(rho.clone()), Schedule::scalar(0.0));
    let mp = MotionProblem::new(w, horizon, 0, vec![], vec![q]).unwrap();
    for (t, r) in rho.iter().enumerate() {
        assert_eq!(mp.term_dims(t).cost, if *r != 0.0 { 2 } else { 0 });
    }
}

/// Direct summation of the particle benchmark objective, without packing.
fn particle_cost_oracle(x: &[f64], horizon: usize, k: usize) -> f64 {
    let coeffs: &[f64] = match k {
        1 => &[-1.0, 1.0],
        2 => &[1.0, -2.0, 1.0],
        _ => &[-1.0, 3.0, -3.0, 1.0],
    };
    let at = |t: isize, i: usize| if t < 0 { 0.0 } else { x[t as usize * 2 + i] };
    let mut total = 0.0;
    for t in 0..=horizon as isize {
        for i in 0..2 {
            let f: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c * at(t - k as isize + j as isize, i))
                .sum();
            total += f * f;
        }
    }
    total
}

#[test]
fn particle_cost_matches_direct_sum() {
    let mut rng = StdRng::seed_from_u64(5);
    for k in 1..=3 {
        let horizon = 40;
        let mp = particle_around_walls(horizon, k).unwrap();
        let prog = mp.assemble().unwrap();
        let mut ev = Evaluation::for_problem(&prog);
        for _ in 0..10 {
            let x = random_traj(&mut rng, horizon, 2);
            prog.evaluate(&x, &mut ev).unwrap();
            let oracle = particle_cost_oracle(&x, horizon, k);
            assert!((ev.cost() - oracle).abs() <= 1e-12 * (1.0 + oracle));
        }
    }
}

#[test]
fn flattened_rows_stay_in_their_window() {
    let (horizon, k, n) = (12, 2, 2);
    let mp = particle_around_walls(horizon, k).unwrap();
    let prog = mp.assemble().unwrap();
    let mut ev = Evaluation::for_problem(&prog);
    let mut rng = StdRng::seed_from_u64(6);
    prog.evaluate(&random_traj(&mut rng, horizon, n), &mut ev).unwrap();
    let dense = ev.j_phi.unpack().unwrap();
    let width = (horizon + 1) * n;
    let mut row = 0;
    for t in 0..=horizon {
        let lo = t.saturating_sub(k) * n;
        let hi = ((t + 1) * n).min(width);
        for _ in 0..prog.term_dims()[t].cost {
            for c in 0..width {
                if !(lo..hi).contains(&c) {
                    assert_eq!(dense[row * width + c], 0.0, "t={t} col={c}");
                }
            }
            row += 1;
        }
    }
    assert_eq!(ev.j_phi.ata().unwrap().bandwidth(), (k + 1) * n);
}

#[test]
fn assembled_problems_pass_finite_differences() {
    let mut rng = StdRng::seed_from_u64(8);
    for k in 1..=3 {
        let mp = particle_around_walls(20, k).unwrap();
        let prog = mp.assemble().unwrap();
        for _ in 0..20 {
            let x = random_traj(&mut rng, 20, 2);
            assert!(check_problem_jacobians(&prog, &x, 1e-6, 1e-4).unwrap().passed());
        }
    }
}

#[test]
fn aula_on_particle_keeps_invariants() {
    let mp = particle_around_walls(100, 2).unwrap();
    let prog = mp.assemble().unwrap();
    let r = augmented_lagrangian(&prog, &vec![0.0; 202], &AulaOptions::default(), None).unwrap();
    assert!(r.converged());
    assert!(r.kkt.ineq_violation <= 1e-3);
    assert!(r.state.lambda_g.iter().all(|l| *l >= 0.0));
    for w in r.steps.windows(2) {
        assert!(w[1].violation <= w[0].violation || w[1].mu_increased);
    }
    for s in &r.steps {
        assert!(s.inner.cost_trace.windows(2).all(|c| c[1] <= c[0]));
    }
}

#[test]
fn barrier_on_particle_stays_interior() {
    let horizon = 100;
    let mp = particle_around_walls(horizon, 2).unwrap();
    let prog = mp.assemble().unwrap();
    let x0 = particle_feasible_init(horizon);
    let mut ev = Evaluation::for_problem(&prog);
    prog.evaluate(x0.as_flat(), &mut ev).unwrap();
    assert!(ev.g.iter().all(|g| *g < 0.0));
    let r = log_barrier(&prog, x0.as_flat(), &BarrierOptions::default()).unwrap();
    assert!(r.max_interior_g < 0.0);
    prog.evaluate(&r.x, &mut ev).unwrap();
    assert!(ev.g.iter().all(|g| *g < 0.0));
    assert!(r.kkt.stationarity < 1e-2, "{:?}", r.kkt);
}

/// Sum of squared k-th differences of a particle trajectory from the origin.
fn difference_cost(x: &[f64], horizon: usize, k: usize) -> f64 {
    particle_cost_oracle(x, horizon, k)
}

#[test]
fn velocity_versus_acceleration_solutions() {
    let horizon = 60;
    let solve = |k| {
        let mp = particle_around_walls(horizon, k).unwrap();
        let prog = mp.assemble().unwrap();
        let r = augmented_lagrangian(&prog, &vec![0.0; (horizon + 1) * 2], &AulaOptions::default(), None).unwrap();
        assert!(r.kkt.ineq_violation <= 1e-3);
        r.x
    };
    let (x1, x2) = (solve(1), solve(2));
    let v1 = difference_cost(&x1, horizon, 1);
    let v2 = difference_cost(&x2, horizon, 1);
    assert!(v2 > v1, "{v2} <= {v1}");
    let a2 = difference_cost(&x2, horizon, 2);
    assert!(a2.is_finite() && a2 < difference_cost(&x1, horizon, 2));
}

#[test]
fn task_maps_are_shared_between_problems() {
    let acc: Arc<dyn TaskMap> = Arc::new(acceleration_map(2));
    let t = Task::new("acc", acc.clone(), Mode::Cost, Schedule::scalar(1.0), Schedule::scalar(0.0));
    let w = KinematicWorld::particle(2).unwrap();
    let a = MotionProblem::new(w.clone(), 5, 2, vec![0.0; 4], vec![t.clone()]).unwrap();
    let b = MotionProblem::new(w, 9, 2, vec![0.0; 4], vec![t]).unwrap();
    assert_eq!(a.term_dims(3), b.term_dims(3));
    assert_eq!(Arc::strong_count(&acc), 3);
}
