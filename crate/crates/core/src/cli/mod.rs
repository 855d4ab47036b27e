//! Command-line front end.
//!
//! ```text
//! korder [--out DIR] bench particle --T 100 --k 2 [--solver aula|barrier]
//! korder [--out DIR] moveto --world arm.world --endeff tip --target goal
//! korder [--out DIR] solve --world w.world --tasks t.tasks --T 50 --k 2
//! korder check-jacobians --world arm.world [--points 1000] [--seed 0]
//! ```
//!
//! Any `--a/b value` argument (a key containing `/`) overrides the parameter
//! `a/b`. Parameters are otherwise read from the file named by `KORDER_CFG`
//! (default `./motion.cfg`).

mod benchmarks;
mod files;
mod params;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub use benchmarks::{
    feasibility, move_to, move_to_problem, particle_around_walls, particle_feasible_init,
    solve_motion, BenchmarkResult, Method, MOVE_TO_DEFAULTS,
};
pub use files::{
    parse_map_spec, parse_table, parse_tasks, parse_world, read_trajectory_csv, read_world,
    write_trajectory_csv,
};
pub use params::{
    aula_options, barrier_options, gauss_newton_options, parse_config, ParamRecord,
    ParameterStore, Source,
};

use crate::error::{Error, Result};
use crate::kinematics::{
    check_task_map, joint_limits_map, orientation_map, position_map, proximity_map, AffineMap,
    KinematicWorld, TaskMap, Topology,
};
use crate::motion::{transition_map, MotionProblem};
use crate::problem_core::{check_problem_jacobians, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "korder", version, about = "Banded k-order Markov trajectory optimization")]
struct Cli {
    /// Directory for trajectory.csv, costs.txt, params.log and result.json.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Solver {
    Aula,
    Barrier,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Built-in benchmark problems.
    Bench {
        #[command(subcommand)]
        problem: Bench,
    },
    /// Reach a target shape with a planar arm.
    Moveto {
        /// World description file.
        #[arg(long)]
        world: PathBuf,
        /// Shape that should reach the target.
        #[arg(long)]
        endeff: String,
        /// Shape whose position is the goal.
        #[arg(long)]
        target: String,
        /// Axis alignment bits; only bit 0 (planar angle) is supported.
        #[arg(long, default_value_t = 0)]
        align: u8,
        /// Warm-restarted solver rounds.
        #[arg(long, default_value_t = 1)]
        iterate: usize,
    },
    /// Solve a task file over a world file.
    Solve {
        /// World description file.
        #[arg(long)]
        world: PathBuf,
        /// Task file, one `task` line per task.
        #[arg(long)]
        tasks: PathBuf,
        /// Number of time steps after t = 0.
        #[arg(long = "T")]
        horizon: usize,
        /// Markov order.
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Solver::Aula)]
        solver: Solver,
    },
    /// Finite-difference check of every task map of a world.
    CheckJacobians {
        /// World description file.
        #[arg(long)]
        world: PathBuf,
        /// Random points per map.
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

#[derive(Debug, Subcommand)]
enum Bench {
    /// Point particle passing alternating walls.
    Particle {
        /// Number of time steps after t = 0.
        #[arg(long = "T", default_value_t = 100)]
        horizon: usize,
        /// Markov order, 1 to 3.
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Solver::Aula)]
        solver: Solver,
    },
}

type Overrides = Vec<(String, String)>;

/// Splits `--key/with/slash value` overrides from the arguments clap sees.
fn split_overrides(args: Vec<OsString>) -> std::result::Result<(Vec<OsString>, Overrides), String> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let key = a
            .to_str()
            .and_then(|s| s.strip_prefix("--"))
            .filter(|s| s.contains('/'))
            .map(str::to_owned);
        match key {
            Some(k) => match k.split_once('=') {
                Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
                None => {
                    let v = it
                        .next()
                        .and_then(|v| v.into_string().ok())
                        .ok_or_else(|| format!("missing value for --{k}"))?;
                    overrides.push((k, v));
                }
            },
            None => rest.push(a),
        }
    }
    Ok((rest, overrides))
}

fn load_params(overrides: Vec<(String, String)>) -> Result<ParameterStore> {
    let mut store = ParameterStore::new();
    match std::env::var_os("KORDER_CFG") {
        Some(path) => store.load_file(Path::new(&path))?,
        None => {
            let default = Path::new("motion.cfg");
            if default.exists() {
                store.load_file(default)?;
            }
        }
    }
    for (k, v) in overrides {
        store.set_cmdline(k, v);
    }
    Ok(store)
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let (args, overrides) = match split_overrides(args) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, overrides) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn execute(cli: Cli, overrides: Vec<(String, String)>) -> Result<i32> {
    let mut params = load_params(overrides)?;
    std::fs::create_dir_all(&cli.out)?;
    let outcome = match cli.command {
        Command::Bench {
            problem: Bench::Particle { horizon, k, solver },
        } => {
            let mp = particle_around_walls(horizon, k)?;
            let x0 = match solver {
                Solver::Aula => Trajectory::zeros(horizon, 2),
                Solver::Barrier => particle_feasible_init(horizon),
            };
            Some(solve_with(&mut params, "particle", &mp, &x0, solver, 1)?)
        }
        Command::Moveto {
            world,
            endeff,
            target,
            align,
            iterate,
        } => {
            let world = read_world(&world)?;
            let (_, result) = move_to(&world, &endeff, &target, align, iterate, &mut params)?;
            Some(result)
        }
        Command::Solve {
            world,
            tasks,
            horizon,
            k,
            solver,
        } => {
            let w = read_world(&world)?;
            let text = std::fs::read_to_string(&tasks)
                .map_err(|e| Error::Io(format!("{}: {e}", tasks.display())))?;
            let base = tasks.parent().unwrap_or(Path::new("."));
            let list = parse_tasks(&text, &w, base)?;
            let prefix = w.q().repeat(k);
            let x0 = Trajectory::constant(horizon, w.q());
            let mp = MotionProblem::new(w, horizon, k, prefix, list)?;
            Some(solve_with(&mut params, "solve", &mp, &x0, solver, 1)?)
        }
        Command::CheckJacobians {
            world,
            points,
            seed,
            tol,
        } => {
            let w = read_world(&world)?;
            let ok = check_world_jacobians(&w, points, seed, tol, &mut std::io::stdout())?;
            write_params(&cli.out, &params)?;
            return Ok(if ok { EXIT_OK } else { EXIT_NOT_CONVERGED });
        }
    };

    let result = outcome.expect("every solving command yields a result");
    write_outputs(&cli.out, &result, &params)?;
    for key in params.unused_keys() {
        warn!("parameter `{key}` was supplied but never used");
    }
    println!(
        "{}: cost {:e}, max violation {:e}, {} in {:.3} s",
        result.name,
        result.final_cost,
        result.kkt.max_violation(),
        if result.converged { "converged" } else { "NOT converged" },
        result.wall_time_s
    );
    Ok(if result.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn solve_with(
    params: &mut ParameterStore,
    name: &str,
    mp: &MotionProblem,
    x0: &Trajectory,
    solver: Solver,
    iterate: usize,
) -> Result<BenchmarkResult> {
    let aula = aula_options(params)?;
    let (method, barrier) = match solver {
        Solver::Aula => (Method::AugmentedLagrangian, Default::default()),
        Solver::Barrier => (Method::LogBarrier, barrier_options(params)?),
    };
    solve_motion(name, mp, x0, method, &aula, &barrier, iterate)
}

fn write_params(dir: &Path, params: &ParameterStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("params.log"))?);
    params.write_log(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes `trajectory.csv`, `costs.txt`, `params.log` and `result.json`.
pub fn write_outputs(dir: &Path, result: &BenchmarkResult, params: &ParameterStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("trajectory.csv"))?);
    write_trajectory_csv(&mut w, &result.trajectory)?;
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("costs.txt"))?);
    writeln!(w, "# {}", result.name)?;
    writeln!(w, "# objective {:e}", result.final_cost)?;
    writeln!(
        w,
        "# kkt ineq {:e} eq {:e} stationarity {:e} complementarity {:e}",
        result.kkt.ineq_violation,
        result.kkt.eq_violation,
        result.kkt.stationarity,
        result.kkt.complementarity
    )?;
    writeln!(w, "# converged {}", result.converged)?;
    write!(w, "{}", result.costs)?;
    w.flush()?;

    write_params(dir, params)?;
    std::fs::write(dir.join("result.json"), result.to_json()?)?;
    info!("outputs written to {}", dir.display());
    Ok(())
}

/// Every task map a world supports, labeled.
pub fn world_task_maps(world: &KinematicWorld) -> Result<Vec<Box<dyn TaskMap>>> {
    let n = world.dim();
    let mut maps: Vec<Box<dyn TaskMap>> = vec![Box::new(AffineMap::identity(n))];
    for k in 1..=3 {
        maps.push(Box::new(transition_map(n, k)?));
    }
    for s in world.shapes() {
        maps.push(Box::new(position_map(world, &s.name)?));
        if matches!(world.topology(), Topology::PlanarChain { .. }) {
            maps.push(Box::new(orientation_map(world, &s.name)?));
        }
    }
    maps.push(Box::new(proximity_map(world, 0.1)?));
    if let Some(l) = world.limits() {
        maps.push(Box::new(joint_limits_map(world, &l.lower, &l.upper)?));
    }
    Ok(maps)
}

/// Checks every map of [`world_task_maps`] at `points` random tuples and
/// prints one line per map. Returns whether all passed.
pub fn check_world_jacobians<W: Write>(
    world: &KinematicWorld,
    points: usize,
    seed: u64,
    tol: f64,
    out: &mut W,
) -> Result<bool> {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = world.dim();
    let (lo, hi): (Vec<f64>, Vec<f64>) = match world.limits() {
        Some(l) => (l.lower.clone(), l.upper.clone()),
        None => (vec![-3.0; n], vec![3.0; n]),
    };
    let mut all = true;
    for map in world_task_maps(world)? {
        let slots = map.order() + 1;
        let mut worst = 0.0f64;
        let mut failures = 0;
        for _ in 0..points {
            let x: Vec<f64> = (0..slots * n).map(|i| rng.gen_range(lo[i % n]..hi[i % n])).collect();
            let c = check_task_map(map.as_ref(), world, &x, 1e-6, tol)?;
            worst = worst.max(c.max_error);
            failures += usize::from(!c.passed);
        }
        all &= failures == 0;
        writeln!(
            out,
            "{:<16} {} max error {:e} ({failures}/{points} failed)",
            map.name(),
            if failures == 0 { "PASS" } else { "FAIL" },
            worst
        )?;
    }
    Ok(all)
}

/// Flattened finite-difference check of an assembled problem at `x`.
pub fn check_motion_problem(mp: &MotionProblem, x: &[f64], tol: f64) -> Result<bool> {
    let prog = mp.assemble()?;
    Ok(check_problem_jacobians(&prog, x, 1e-6, tol)?.passed())
}
