//! Planar kinematic engine and the task maps defined on it.
//!
//! A [`KinematicWorld`] is either a free point particle or a planar chain of
//! revolute joints. [`KinematicWorld::set_joint_state`] computes a fresh
//! [`FrameSet`] holding every shape's world position and orientation, which
//! is all the task maps need.

use std::f64::consts::PI;
use std::fmt::Debug;

use crate::error::{check_len, Error, Result};
use crate::problem_core::{check_jacobian, JacobianCheck};

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Particle { dim: usize },
    /// Joint `i` sits at the tip of link `i-1` (the base for `i = 0`).
    PlanarChain { link_lengths: Vec<f64>, base: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    Marker,
    Disc { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parent {
    World,
    Link(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub name: String,
    pub parent: Parent,
    /// Offset in the parent frame.
    pub offset: [f64; 2],
    pub kind: ShapeKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicWorld {
    topology: Topology,
    shapes: Vec<Shape>,
    obstacles: Vec<Obstacle>,
    limits: Option<JointLimits>,
    q: Vec<f64>,
}

impl KinematicWorld {
    pub fn new(topology: Topology) -> Result<Self> {
        let n = match &topology {
            Topology::Particle { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("particle dimension must be >= 1".into()));
                }
                *dim
            }
            Topology::PlanarChain { link_lengths, .. } => {
                if link_lengths.is_empty() {
                    return Err(Error::Config("a chain needs at least one link".into()));
                }
                link_lengths.len()
            }
        };
        Ok(KinematicWorld {
            topology,
            shapes: Vec::new(),
            obstacles: Vec::new(),
            limits: None,
            q: vec![0.0; n],
        })
    }

    pub fn particle(dim: usize) -> Result<Self> {
        Self::new(Topology::Particle { dim })
    }

    pub fn planar_chain(link_lengths: Vec<f64>) -> Result<Self> {
        Self::new(Topology::PlanarChain {
            link_lengths,
            base: [0.0; 3],
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Joint-space dimension `n`.
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn links(&self) -> usize {
        match &self.topology {
            Topology::Particle { .. } => 1,
            Topology::PlanarChain { link_lengths, .. } => link_lengths.len(),
        }
    }

    pub fn add_shape(&mut self, shape: Shape) -> Result<usize> {
        if let Parent::Link(l) = shape.parent {
            if l >= self.links() {
                return Err(Error::Config(format!(
                    "shape `{}` attached to link {l}, world has {} links",
                    shape.name,
                    self.links()
                )));
            }
        }
        if let ShapeKind::Disc { radius } = shape.kind {
            if !(radius > 0.0) {
                return Err(Error::Config(format!("shape `{}` needs a positive radius", shape.name)));
            }
        }
        if self.shape_index(&shape.name).is_some() {
            return Err(Error::Config(format!("duplicate shape `{}`", shape.name)));
        }
        self.shapes.push(shape);
        Ok(self.shapes.len() - 1)
    }

    pub fn add_obstacle(&mut self, center: [f64; 2], radius: f64) -> Result<()> {
        if !(radius > 0.0) {
            return Err(Error::Config("obstacle radius must be positive".into()));
        }
        self.obstacles.push(Obstacle { center, radius });
        Ok(())
    }

    pub fn set_limits(&mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<()> {
        check_len("lower limits", self.dim(), lower.len())?;
        check_len("upper limits", self.dim(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config("joint limits need lower < upper".into()));
        }
        self.limits = Some(JointLimits { lower, upper });
        Ok(())
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn limits(&self) -> Option<&JointLimits> {
        self.limits.as_ref()
    }

    pub fn shape_index(&self, name: &str) -> Option<usize> {
        self.shapes.iter().position(|s| s.name == name)
    }

    pub fn require_shape(&self, name: &str) -> Result<usize> {
        self.shape_index(name)
            .ok_or_else(|| Error::UnknownShape(name.to_string()))
    }

    /// Current (initial) joint state.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn set_q(&mut self, q: Vec<f64>) -> Result<()> {
        check_len("joint state", self.dim(), q.len())?;
        self.q = q;
        Ok(())
    }

    /// Forward kinematics for every shape at `q`.
    pub fn set_joint_state(&self, q: &[f64]) -> Result<FrameSet> {
        check_len("joint state", self.dim(), q.len())?;
        let mut joints = Vec::new();
        let mut link_angles = Vec::new();
        let mut link_origin = Vec::new();
        match &self.topology {
            Topology::Particle { .. } => {
                let origin = [q[0], q.get(1).copied().unwrap_or(0.0)];
                link_origin.push(origin);
                link_angles.push(0.0);
            }
            Topology::PlanarChain { link_lengths, base } => {
                let mut p = [base[0], base[1]];
                let mut theta = base[2];
                for (len, qi) in link_lengths.iter().zip(q) {
                    theta += qi;
                    joints.push(p);
                    link_origin.push(p);
                    link_angles.push(theta);
                    p = [p[0] + len * theta.cos(), p[1] + len * theta.sin()];
                }
            }
        }
        let (positions, angles) = self
            .shapes
            .iter()
            .map(|s| match s.parent {
                Parent::World => (s.offset, 0.0),
                Parent::Link(l) => {
                    let (o, th) = (link_origin[l], link_angles[l]);
                    let (c, sn) = (th.cos(), th.sin());
                    (
                        [
                            o[0] + c * s.offset[0] - sn * s.offset[1],
                            o[1] + sn * s.offset[0] + c * s.offset[1],
                        ],
                        th,
                    )
                }
            })
            .unzip();
        Ok(FrameSet {
            q: q.to_vec(),
            joints,
            positions,
            angles,
        })
    }
}

/// Precomputed frames of all shapes at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub q: Vec<f64>,
    /// World position of each revolute joint (empty for a particle).
    pub joints: Vec<[f64; 2]>,
    pub positions: Vec<[f64; 2]>,
    pub angles: Vec<f64>,
}

impl FrameSet {
    /// Writes `∂p/∂q` (row-major `2 × n`) of shape `s` into `out`.
    pub fn position_jacobian(&self, world: &KinematicWorld, s: usize, out: &mut [f64]) {
        let n = world.dim();
        out[..2 * n].iter_mut().for_each(|v| *v = 0.0);
        let Parent::Link(link) = world.shapes[s].parent else {
            return;
        };
        let p = self.positions[s];
        match world.topology {
            Topology::Particle { dim } => {
                out[0] = 1.0;
                if dim >= 2 {
                    out[n + 1] = 1.0;
                }
            }
            Topology::PlanarChain { .. } => {
                for (i, j) in self.joints.iter().enumerate().take(link + 1) {
                    out[i] = -(p[1] - j[1]);
                    out[n + i] = p[0] - j[0];
                }
            }
        }
    }

    /// Writes `∂θ/∂q` (length `n`) of shape `s` into `out`.
    pub fn angle_jacobian(&self, world: &KinematicWorld, s: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if let (Topology::PlanarChain { .. }, Parent::Link(link)) =
            (&world.topology, world.shapes[s].parent)
        {
            out[..=link].iter_mut().for_each(|v| *v = 1.0);
        }
    }
}

/// A differentiable map from `order + 1` consecutive frame sets to `R^d`.
///
/// `jac` is row-major `d × (order+1)·n`; tuple slot `j` (oldest first) owns
/// columns `j·n..(j+1)·n`. Both output buffers arrive zeroed.
pub trait TaskMap: Debug + Send + Sync {
    fn order(&self) -> usize;
    fn dim(&self) -> usize;
    fn name(&self) -> String;
    fn eval(
        &self,
        world: &KinematicWorld,
        frames: &[&FrameSet],
        y: &mut [f64],
        jac: &mut [f64],
    ) -> Result<()>;
}

/// World position of one shape.
#[derive(Debug, Clone)]
pub struct PositionMap {
    shape: usize,
    label: String,
}

pub fn position_map(world: &KinematicWorld, shape: &str) -> Result<PositionMap> {
    Ok(PositionMap {
        shape: world.require_shape(shape)?,
        label: format!("pos:{shape}"),
    })
}

impl TaskMap for PositionMap {
    fn order(&self) -> usize {
        0
    }
    fn dim(&self) -> usize {
        2
    }
    fn name(&self) -> String {
        self.label.clone()
    }
    fn eval(&self, world: &KinematicWorld, frames: &[&FrameSet], y: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let f = frames[0];
        y.copy_from_slice(&f.positions[self.shape]);
        f.position_jacobian(world, self.shape, jac);
        Ok(())
    }
}

/// Planar orientation angle of one shape.
#[derive(Debug, Clone)]
pub struct OrientationMap {
    shape: usize,
    label: String,
}

pub fn orientation_map(world: &KinematicWorld, shape: &str) -> Result<OrientationMap> {
    Ok(OrientationMap {
        shape: world.require_shape(shape)?,
        label: format!("angle:{shape}"),
    })
}

impl TaskMap for OrientationMap {
    fn order(&self) -> usize {
        0
    }
    fn dim(&self) -> usize {
        1
    }
    fn name(&self) -> String {
        self.label.clone()
    }
    fn eval(&self, world: &KinematicWorld, frames: &[&FrameSet], y: &mut [f64], jac: &mut [f64]) -> Result<()> {
        y[0] = frames[0].angles[self.shape];
        frames[0].angle_jacobian(world, self.shape, jac);
        Ok(())
    }
}

/// Normalized clearance violation for every (robot disc, obstacle) pair:
/// `y = (margin - clearance) / margin`, so `y ≤ 0` iff clearance ≥ margin.
/// Coincident centers give the maximal `y` with a zero Jacobian.
#[derive(Debug, Clone)]
pub struct ProximityMap {
    margin: f64,
    pairs: Vec<(usize, usize)>,
}

pub fn proximity_map(world: &KinematicWorld, margin: f64) -> Result<ProximityMap> {
    if !(margin > 0.0) {
        return Err(Error::Config("collision margin must be positive".into()));
    }
    let mut pairs = Vec::new();
    for (s, shape) in world.shapes.iter().enumerate() {
        if matches!(shape.kind, ShapeKind::Disc { .. }) && shape.parent != Parent::World {
            pairs.extend((0..world.obstacles.len()).map(|o| (s, o)));
        }
    }
    Ok(ProximityMap { margin, pairs })
}

impl ProximityMap {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

impl TaskMap for ProximityMap {
    fn order(&self) -> usize {
        0
    }
    fn dim(&self) -> usize {
        self.pairs.len()
    }
    fn name(&self) -> String {
        format!("prox:{}", self.margin)
    }
    fn eval(&self, world: &KinematicWorld, frames: &[&FrameSet], y: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let f = frames[0];
        let n = world.dim();
        let mut jp = vec![0.0; 2 * n];
        for (r, &(s, o)) in self.pairs.iter().enumerate() {
            let ShapeKind::Disc { radius } = world.shapes[s].kind else {
                unreachable!("proximity pairs hold discs only")
            };
            let obs = world.obstacles[o];
            let p = f.positions[s];
            let d = [p[0] - obs.center[0], p[1] - obs.center[1]];
            let dist = d[0].hypot(d[1]);
            y[r] = (self.margin - dist + radius + obs.radius) / self.margin;
            if dist == 0.0 {
                continue;
            }
            f.position_jacobian(world, s, &mut jp);
            let (ux, uy) = (d[0] / dist, d[1] / dist);
            for c in 0..n {
                jac[r * n + c] = -(ux * jp[c] + uy * jp[n + c]) / self.margin;
            }
        }
        Ok(())
    }
}

/// `((lower - q); (q - upper))`, nonpositive iff within limits.
#[derive(Debug, Clone)]
pub struct JointLimitsMap {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

pub fn joint_limits_map(world: &KinematicWorld, lower: &[f64], upper: &[f64]) -> Result<JointLimitsMap> {
    check_len("lower limits", world.dim(), lower.len())?;
    check_len("upper limits", world.dim(), upper.len())?;
    if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::Config("joint limits need lower < upper".into()));
    }
    Ok(JointLimitsMap {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    })
}

impl TaskMap for JointLimitsMap {
    fn order(&self) -> usize {
        0
    }
    fn dim(&self) -> usize {
        2 * self.lower.len()
    }
    fn name(&self) -> String {
        "limits".into()
    }
    fn eval(&self, _world: &KinematicWorld, frames: &[&FrameSet], y: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let q = &frames[0].q;
        let n = q.len();
        for i in 0..n {
            y[i] = self.lower[i] - q[i];
            y[n + i] = q[i] - self.upper[i];
            jac[i * n + i] = -1.0;
            jac[(n + i) * n + i] = 1.0;
        }
        Ok(())
    }
}

/// `A·q + b` on the current configuration.
#[derive(Debug, Clone)]
pub struct AffineMap {
    rows: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    label: String,
}

impl AffineMap {
    pub fn new(label: impl Into<String>, n: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let rows = b.len();
        check_len("affine map matrix", rows * n, a.len())?;
        Ok(AffineMap {
            rows,
            a,
            b,
            label: label.into(),
        })
    }

    /// `y = q`.
    pub fn identity(n: usize) -> Self {
        let mut a = vec![0.0; n * n];
        (0..n).for_each(|i| a[i * n + i] = 1.0);
        AffineMap {
            rows: n,
            a,
            b: vec![0.0; n],
            label: "q".into(),
        }
    }
}

impl TaskMap for AffineMap {
    fn order(&self) -> usize {
        0
    }
    fn dim(&self) -> usize {
        self.rows
    }
    fn name(&self) -> String {
        self.label.clone()
    }
    fn eval(&self, _world: &KinematicWorld, frames: &[&FrameSet], y: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let q = &frames[0].q;
        let n = q.len();
        for ((y, row), b) in y.iter_mut().zip(self.a.chunks_exact(n)).zip(&self.b) {
            *y = b + row.iter().zip(q).map(|(a, x)| a * x).sum::<f64>();
        }
        jac[..self.rows * n].copy_from_slice(&self.a);
        Ok(())
    }
}

/// Central-difference check of a task map at the stacked tuple `configs`
/// (`(order+1)·n` values, oldest first).
pub fn check_task_map(
    map: &dyn TaskMap,
    world: &KinematicWorld,
    configs: &[f64],
    eps: f64,
    tol: f64,
) -> Result<JacobianCheck> {
    let n = world.dim();
    let slots = map.order() + 1;
    check_len("task map tuple", slots * n, configs.len())?;
    check_jacobian(
        |x| {
            let frames = x
                .chunks(n)
                .map(|q| world.set_joint_state(q))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&FrameSet> = frames.iter().collect();
            let mut y = vec![0.0; map.dim()];
            let mut jac = vec![0.0; map.dim() * slots * n];
            map.eval(world, &refs, &mut y, &mut jac)?;
            Ok((y, jac))
        },
        configs,
        eps,
        tol,
    )
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}
