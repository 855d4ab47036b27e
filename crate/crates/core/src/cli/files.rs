use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kinematics::{
    joint_limits_map, orientation_map, position_map, proximity_map, AffineMap, KinematicWorld,
    Parent, Shape, ShapeKind, TaskMap, Topology,
};
use crate::motion::{transition_map, Mode, Schedule, Task};
use crate::problem_core::Trajectory;

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn number(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| perr(line, format!("expected a number, got `{s}`")))
}

fn numbers(line: usize, items: &[&str]) -> Result<Vec<f64>> {
    items.iter().map(|s| number(line, s)).collect()
}

/// Parses a world description:
///
/// ```text
/// chain <L1> <L2> ...          # or: particle <dim>
/// base <x> <y> <theta>         # chain base pose, optional
/// q <q1> ...                   # initial configuration, optional
/// shape <name> <link|world> <dx> <dy> [disc <r>]
/// obstacle <cx> <cy> <r>
/// limits <lo...> <hi...>
/// ```
pub fn parse_world(text: &str) -> Result<KinematicWorld> {
    let mut world: Option<KinematicWorld> = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let words: Vec<&str> = line.split_whitespace().collect();
        let Some((&head, args)) = words.split_first() else {
            continue;
        };
        match head {
            "chain" | "particle" => {
                if world.is_some() {
                    return Err(perr(ln, "topology declared twice"));
                }
                let w = if head == "chain" {
                    KinematicWorld::planar_chain(numbers(ln, args)?)
                } else {
                    let [d] = args else {
                        return Err(perr(ln, "usage: particle <dim>"));
                    };
                    let d = d.parse().map_err(|_| perr(ln, "particle dimension must be an integer"))?;
                    KinematicWorld::particle(d)
                };
                world = Some(w.map_err(|e| perr(ln, e.to_string()))?);
            }
            _ => {
                let w = world
                    .as_mut()
                    .ok_or_else(|| perr(ln, "`chain` or `particle` must come first"))?;
                world_line(w, ln, head, args)?;
            }
        }
    }
    world.ok_or_else(|| perr(0, "no `chain` or `particle` line"))
}

fn world_line(w: &mut KinematicWorld, ln: usize, head: &str, args: &[&str]) -> Result<()> {
    let wrap = |e: Error| perr(ln, e.to_string());
    match head {
        "base" => {
            let v = numbers(ln, args)?;
            let [x, y, th] = v[..] else {
                return Err(perr(ln, "usage: base <x> <y> <theta>"));
            };
            let Topology::PlanarChain { link_lengths, .. } = w.topology().clone() else {
                return Err(perr(ln, "`base` needs a chain"));
            };
            let mut nw = KinematicWorld::new(Topology::PlanarChain {
                link_lengths,
                base: [x, y, th],
            })
            .map_err(wrap)?;
            for s in w.shapes() {
                nw.add_shape(s.clone()).map_err(wrap)?;
            }
            for o in w.obstacles() {
                nw.add_obstacle(o.center, o.radius).map_err(wrap)?;
            }
            if let Some(l) = w.limits() {
                nw.set_limits(l.lower.clone(), l.upper.clone()).map_err(wrap)?;
            }
            nw.set_q(w.q().to_vec()).map_err(wrap)?;
            *w = nw;
        }
        "q" => w.set_q(numbers(ln, args)?).map_err(wrap)?,
        "shape" => {
            let (name, link, dx, dy, rest) = match args {
                [name, link, dx, dy, rest @ ..] => (*name, *link, *dx, *dy, rest),
                _ => return Err(perr(ln, "usage: shape <name> <link> <dx> <dy> [disc <r>]")),
            };
            let parent = match link {
                "world" | "-1" => Parent::World,
                l => Parent::Link(
                    l.parse()
                        .map_err(|_| perr(ln, format!("bad link index `{l}`")))?,
                ),
            };
            let kind = match rest {
                [] => ShapeKind::Marker,
                ["disc", r] => ShapeKind::Disc {
                    radius: number(ln, r)?,
                },
                _ => return Err(perr(ln, "shape kind must be empty or `disc <r>`")),
            };
            w.add_shape(Shape {
                name: name.to_string(),
                parent,
                offset: [number(ln, dx)?, number(ln, dy)?],
                kind,
            })
            .map_err(wrap)?;
        }
        "obstacle" => {
            let v = numbers(ln, args)?;
            let [cx, cy, r] = v[..] else {
                return Err(perr(ln, "usage: obstacle <cx> <cy> <r>"));
            };
            w.add_obstacle([cx, cy], r).map_err(wrap)?;
        }
        "limits" => {
            let v = numbers(ln, args)?;
            let n = w.dim();
            if v.len() != 2 * n {
                return Err(perr(ln, format!("expected {} limit values, got {}", 2 * n, v.len())));
            }
            w.set_limits(v[..n].to_vec(), v[n..].to_vec()).map_err(wrap)?;
        }
        other => return Err(perr(ln, format!("unknown directive `{other}`"))),
    }
    Ok(())
}

pub fn read_world(path: &Path) -> Result<KinematicWorld> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_world(&text)
}

/// Builds a task map from a spec such as `pos:tip`, `angle:tip`,
/// `prox:0.1`, `limits`, `q`, `vel`, `acc` or `jerk`.
pub fn parse_map_spec(world: &KinematicWorld, spec: &str) -> Result<Arc<dyn TaskMap>> {
    let n = world.dim();
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let map: Arc<dyn TaskMap> = match (kind, arg) {
        ("pos", s) => Arc::new(position_map(world, s)?),
        ("angle", s) => Arc::new(orientation_map(world, s)?),
        ("prox", m) => Arc::new(proximity_map(
            world,
            m.parse()
                .map_err(|_| Error::Config(format!("bad margin in `{spec}`")))?,
        )?),
        ("limits", "") => {
            let l = world
                .limits()
                .ok_or_else(|| Error::Config("`limits` map needs world limits".into()))?;
            Arc::new(joint_limits_map(world, &l.lower, &l.upper)?)
        }
        ("q", "") => Arc::new(AffineMap::identity(n)),
        ("vel", "") => Arc::new(transition_map(n, 1)?),
        ("acc", "") => Arc::new(transition_map(n, 2)?),
        ("jerk", "") => Arc::new(transition_map(n, 3)?),
        _ => return Err(Error::Config(format!("unknown map spec `{spec}`"))),
    };
    Ok(map)
}

/// Whitespace-separated numeric table; rows are lines.
pub fn parse_table(text: &str) -> Result<Schedule> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        rows.push(numbers(i + 1, &words)?);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(perr(0, "schedule table rows differ in length"));
    }
    Schedule::table(rows.len(), cols, rows.concat())
}

fn parse_schedule(ln: usize, value: &str, base_dir: &Path) -> Result<Schedule> {
    if let Some(file) = value.strip_prefix('@') {
        let path = base_dir.join(file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        return parse_table(&text);
    }
    let v = numbers(ln, &value.split(',').collect::<Vec<_>>())?;
    Ok(if v.len() == 1 {
        Schedule::scalar(v[0])
    } else {
        Schedule::per_component(v)
    })
}

/// Parses task lines
/// `task <name> <map-spec> <cost|ineq|eq> rho=<scalar|@file> target=<v1,v2,..|@file>`.
/// `@file` paths are relative to `base_dir`.
pub fn parse_tasks(text: &str, world: &KinematicWorld, base_dir: &Path) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let &["task", name, spec, mode, ref rest @ ..] = &words[..] else {
            return Err(perr(ln, "usage: task <name> <map-spec> <mode> rho=.. target=.."));
        };
        let mode = match mode {
            "cost" => Mode::Cost,
            "ineq" => Mode::Inequality,
            "eq" => Mode::Equality,
            m => return Err(perr(ln, format!("unknown mode `{m}`"))),
        };
        let map = parse_map_spec(world, spec).map_err(|e| perr(ln, e.to_string()))?;
        let mut rho = Schedule::scalar(1.0);
        let mut target = Schedule::scalar(0.0);
        for kv in rest {
            match kv.split_once('=') {
                Some(("rho", v)) => rho = parse_schedule(ln, v, base_dir)?,
                Some(("target", v)) => target = parse_schedule(ln, v, base_dir)?,
                _ => return Err(perr(ln, format!("unexpected `{kv}`"))),
            }
        }
        tasks.push(Task::new(name, map, mode, rho, target));
    }
    Ok(tasks)
}

/// Header `t,q0,..,q{n-1}`, one row per step, shortest round-trip decimals.
pub fn write_trajectory_csv<W: Write>(mut w: W, x: &Trajectory) -> io::Result<()> {
    write!(w, "t")?;
    for i in 0..x.config_dim() {
        write!(w, ",q{i}")?;
    }
    writeln!(w)?;
    for t in 0..x.steps() {
        write!(w, "{t}")?;
        for v in x.config(t) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<Trajectory> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| perr(1, "empty file"))??;
    let n = header.split(',').count().saturating_sub(1);
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n + 1 {
            return Err(perr(i + 2, "row width differs from header"));
        }
        values.extend(numbers(i + 2, &cells[1..])?);
    }
    Trajectory::from_flat(values, n)
}
