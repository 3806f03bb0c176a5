//! Benchmark problems: initial fields, energy sources, boundary conditions
//! and reference solutions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::bernstein::{thermo_to_kin_corner, THERMO_DOFS};
use crate::error::{Result, SolverError};
use crate::mesh::MovingMesh;
use crate::residuals::{EnergySource, ShockDirection, ViscosityMode};
use crate::state::{Discretization, MaterialModel, StageState};
use crate::timestepper::{apply_velocity_bc, BoundaryConditions, BoundaryKind};
use crate::Vec2;

/// Total blast energy of the Sedov quarter domain.
pub const SEDOV_ENERGY: f64 = 0.244816;
/// Background pressure of the Sedov problem.
pub const SEDOV_BACKGROUND_PRESSURE: f64 = 1e-6;
/// Relative distance a corner sample is moved towards the cell centroid, so
/// that fields with jumps on cell edges are sampled from the owning cell.
const CORNER_NUDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    TaylorGreen,
    Gresho,
    Sedov,
    Noh,
    TriplePoint,
    /// Uniform state; used for free-stream checks.
    Uniform,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 6] = [
        ProblemKind::TaylorGreen,
        ProblemKind::Gresho,
        ProblemKind::Sedov,
        ProblemKind::Noh,
        ProblemKind::TriplePoint,
        ProblemKind::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::TaylorGreen => "taylor-green",
            ProblemKind::Gresho => "gresho",
            ProblemKind::Sedov => "sedov",
            ProblemKind::Noh => "noh",
            ProblemKind::TriplePoint => "triple-point",
            ProblemKind::Uniform => "uniform",
        }
    }

    pub fn spec(self) -> ProblemSpec {
        match self {
            ProblemKind::TaylorGreen => make_taylor_green(),
            ProblemKind::Gresho => make_gresho(),
            ProblemKind::Sedov => make_sedov(),
            ProblemKind::Noh => make_noh(),
            ProblemKind::TriplePoint => make_triple_point(),
            ProblemKind::Uniform => make_uniform(Vec2::new(1.0, 0.5), 1.0, 1.0),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SolverError::config("problem", format!("unknown problem '{s}'")))
    }
}

pub type VectorField = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

/// Reference solution at a physical point and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactState {
    pub rho: f64,
    pub u: Vec2,
    pub p: f64,
}

pub type ExactSolution = fn(Vec2, f64) -> ExactState;

/// How kinematic DOFs are initialized from the velocity field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityInit {
    /// Interpolate at the Q2 Lagrange nodes and convert to Bernstein
    /// coefficients.
    Interpolate,
    /// Evaluate at the control points directly.
    Sample,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// `[xmin, ymin, xmax, ymax]`
    pub bbox: [f64; 4],
    pub gamma: f64,
    pub velocity: VectorField,
    pub density: ScalarField,
    pub pressure: ScalarField,
    pub velocity_init: VelocityInit,
    pub bcs: BoundaryConditions,
    pub source: Option<EnergySource>,
    pub exact: Option<ExactSolution>,
    /// Blast energy deposited in the cell at the origin.
    pub origin_energy: Option<f64>,
    /// Origin for radial scatter data.
    pub origin: Vec2,
    pub t_end: f64,
    pub nx: usize,
    pub ny: usize,
    pub viscosity: ViscosityMode,
    pub shock_dir: ShockDirection,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("kind", &self.kind)
            .field("bbox", &self.bbox)
            .field("gamma", &self.gamma)
            .field("bcs", &self.bcs)
            .field("t_end", &self.t_end)
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("viscosity", &self.viscosity)
            .field("shock_dir", &self.shock_dir)
            .finish_non_exhaustive()
    }
}

pub fn taylor_green_velocity(x: Vec2) -> Vec2 {
    Vec2::new((PI * x.x).sin() * (PI * x.y).cos(), -(PI * x.x).cos() * (PI * x.y).sin())
}

pub fn taylor_green_pressure(x: Vec2) -> f64 {
    0.25 * ((2.0 * PI * x.x).cos() + (2.0 * PI * x.y).cos()) + 1.0
}

pub fn taylor_green_source(x: Vec2) -> f64 {
    3.0 * PI / 8.0 * ((3.0 * PI * x.x).cos() * (PI * x.y).cos() - (PI * x.x).cos() * (3.0 * PI * x.y).cos())
}

fn taylor_green_exact(x: Vec2, _t: f64) -> ExactState {
    ExactState { rho: 1.0, u: taylor_green_velocity(x), p: taylor_green_pressure(x) }
}

pub fn make_taylor_green() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::TaylorGreen,
        bbox: [0.0, 0.0, 1.0, 1.0],
        gamma: 5.0 / 3.0,
        velocity: Arc::new(taylor_green_velocity),
        density: Arc::new(|_| 1.0),
        pressure: Arc::new(taylor_green_pressure),
        velocity_init: VelocityInit::Interpolate,
        bcs: BoundaryConditions::uniform(BoundaryKind::Wall),
        source: Some(taylor_green_source),
        exact: Some(taylor_green_exact),
        origin_energy: None,
        origin: Vec2::zeros(),
        t_end: 1.25,
        nx: 16,
        ny: 16,
        viscosity: ViscosityMode::None,
        shock_dir: ShockDirection::VelocityFluctuation,
    }
}

const GRESHO_CENTER: Vec2 = Vec2::new(0.5, 0.5);

pub fn gresho_angular_velocity(r: f64) -> f64 {
    if r < 0.2 {
        5.0 * r
    } else if r < 0.4 {
        2.0 - 5.0 * r
    } else {
        0.0
    }
}

pub fn gresho_pressure_radial(r: f64) -> f64 {
    if r < 0.2 {
        5.0 + 12.5 * r * r
    } else if r < 0.4 {
        9.0 - 4.0 * 0.2f64.ln() + 12.5 * r * r - 20.0 * r + 4.0 * r.ln()
    } else {
        3.0 + 4.0 * 2.0f64.ln()
    }
}

pub fn gresho_velocity(x: Vec2) -> Vec2 {
    let d = x - GRESHO_CENTER;
    let r = d.norm();
    if r == 0.0 {
        return Vec2::zeros();
    }
    Vec2::new(-d.y, d.x) * (gresho_angular_velocity(r) / r)
}

fn gresho_exact(x: Vec2, _t: f64) -> ExactState {
    ExactState { rho: 1.0, u: gresho_velocity(x), p: gresho_pressure_radial((x - GRESHO_CENTER).norm()) }
}

pub fn make_gresho() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Gresho,
        bbox: [0.0, 0.0, 1.0, 1.0],
        gamma: 5.0 / 3.0,
        velocity: Arc::new(gresho_velocity),
        density: Arc::new(|_| 1.0),
        pressure: Arc::new(|x| gresho_pressure_radial((x - GRESHO_CENTER).norm())),
        velocity_init: VelocityInit::Interpolate,
        bcs: BoundaryConditions::uniform(BoundaryKind::Wall),
        source: None,
        exact: Some(gresho_exact),
        origin_energy: None,
        origin: GRESHO_CENTER,
        t_end: 0.65,
        nx: 16,
        ny: 16,
        viscosity: ViscosityMode::Mars,
        shock_dir: ShockDirection::VelocityFluctuation,
    }
}

pub fn make_sedov() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Sedov,
        bbox: [0.0, 0.0, 1.2, 1.2],
        gamma: 1.4,
        velocity: Arc::new(|_| Vec2::zeros()),
        density: Arc::new(|_| 1.0),
        pressure: Arc::new(|_| SEDOV_BACKGROUND_PRESSURE),
        velocity_init: VelocityInit::Sample,
        bcs: BoundaryConditions::uniform(BoundaryKind::Wall),
        source: None,
        exact: None,
        origin_energy: Some(SEDOV_ENERGY),
        origin: Vec2::zeros(),
        t_end: 1.0,
        nx: 16,
        ny: 16,
        viscosity: ViscosityMode::Mars,
        shock_dir: ShockDirection::Radial,
    }
}

/// Origin-cell pressure of the Sedov problem.
pub fn sedov_origin_pressure(gamma: f64, rho0: f64, origin_volume: f64) -> f64 {
    (gamma - 1.0) * rho0 * SEDOV_ENERGY / origin_volume
}

pub fn noh_velocity(x: Vec2) -> Vec2 {
    let r = x.norm();
    if r == 0.0 {
        Vec2::zeros()
    } else {
        -x / r
    }
}

/// Self-similar Noh solution for `gamma = 5/3`.
pub fn noh_exact(x: Vec2, t: f64) -> ExactState {
    let r = x.norm();
    if r < t / 3.0 {
        ExactState { rho: 16.0, u: Vec2::zeros(), p: 16.0 / 3.0 }
    } else {
        let rho = if r > 0.0 { 1.0 + t / r } else { 1.0 };
        ExactState { rho, u: noh_velocity(x), p: 0.0 }
    }
}

pub fn make_noh() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Noh,
        bbox: [0.0, 0.0, 1.0, 1.0],
        gamma: 5.0 / 3.0,
        velocity: Arc::new(noh_velocity),
        density: Arc::new(|_| 1.0),
        pressure: Arc::new(|_| 0.0),
        velocity_init: VelocityInit::Sample,
        bcs: BoundaryConditions {
            sides: [BoundaryKind::Wall, BoundaryKind::FixedVelocity, BoundaryKind::Wall, BoundaryKind::FixedVelocity],
        },
        source: None,
        exact: Some(noh_exact),
        origin_energy: None,
        origin: Vec2::zeros(),
        t_end: 0.6,
        nx: 50,
        ny: 50,
        viscosity: ViscosityMode::Mars,
        shock_dir: ShockDirection::Radial,
    }
}

/// `(rho, e)` of the triple-point regions.
pub fn triple_point_region(x: Vec2) -> (f64, f64) {
    if x.x < 1.0 {
        (1.0, 2.0)
    } else if x.y >= 1.5 {
        (0.125, 1.6)
    } else {
        (1.0, 0.25)
    }
}

pub fn make_triple_point() -> ProblemSpec {
    let gamma = 1.4;
    ProblemSpec {
        kind: ProblemKind::TriplePoint,
        bbox: [0.0, 0.0, 7.0, 3.0],
        gamma,
        velocity: Arc::new(|_| Vec2::zeros()),
        density: Arc::new(|x| triple_point_region(x).0),
        pressure: Arc::new(move |x| {
            let (rho, e) = triple_point_region(x);
            (gamma - 1.0) * rho * e
        }),
        velocity_init: VelocityInit::Sample,
        bcs: BoundaryConditions::uniform(BoundaryKind::Wall),
        source: None,
        exact: None,
        origin_energy: None,
        origin: Vec2::zeros(),
        t_end: 3.0,
        nx: 56,
        ny: 24,
        viscosity: ViscosityMode::Mars,
        shock_dir: ShockDirection::VelocityFluctuation,
    }
}

/// Uniform flow on the unit square with free boundaries.
pub fn make_uniform(u: Vec2, rho: f64, p: f64) -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Uniform,
        bbox: [0.0, 0.0, 1.0, 1.0],
        gamma: 1.4,
        velocity: Arc::new(move |_| u),
        density: Arc::new(move |_| rho),
        pressure: Arc::new(move |_| p),
        velocity_init: VelocityInit::Sample,
        bcs: BoundaryConditions::uniform(BoundaryKind::Free),
        source: None,
        exact: Some(|_, _| ExactState { rho: f64::NAN, u: Vec2::repeat(f64::NAN), p: f64::NAN }),
        origin_energy: None,
        origin: Vec2::zeros(),
        t_end: 0.1,
        nx: 8,
        ny: 8,
        viscosity: ViscosityMode::Rusanov,
        shock_dir: ShockDirection::VelocityFluctuation,
    }
}

/// Discretization and initial state of a problem on an `nx` x `ny` mesh.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub disc: Discretization,
    pub state: StageState,
}

impl ProblemSpec {
    pub fn initialize(&self, nx: usize, ny: usize) -> Result<InitialData> {
        if !(self.gamma > 1.0) {
            return Err(SolverError::config("gamma", format!("must exceed 1, got {}", self.gamma)));
        }
        let mesh = MovingMesh::build_cartesian(nx, ny, self.bbox)?;
        let n_thermo = mesh.num_thermo_dofs();
        let mut rho0 = vec![0.0; n_thermo];
        let mut eps = vec![0.0; n_thermo];
        for cell in 0..mesh.num_cells() {
            let xs = mesh.cell_positions(cell, &mesh.initial_positions);
            let centroid = 0.25 * (xs[0] + xs[2] + xs[6] + xs[8]);
            for (l, &g) in mesh.element_to_thermo(cell).iter().enumerate() {
                let corner = xs[thermo_to_kin_corner(l)];
                let x = corner + (centroid - corner) * CORNER_NUDGE;
                let rho = (self.density)(x);
                let p = (self.pressure)(x);
                if !(rho > 0.0) || !p.is_finite() {
                    return Err(SolverError::config(
                        "problem",
                        format!("invalid initial state rho={rho}, p={p} at {x:?}"),
                    ));
                }
                rho0[g] = rho;
                eps[g] = p / ((self.gamma - 1.0) * rho);
            }
        }
        if let Some(energy) = self.origin_energy {
            let cell = mesh.cell_index(0, 0);
            let [xmin, ymin, xmax, ymax] = self.bbox;
            let volume = (xmax - xmin) / nx as f64 * (ymax - ymin) / ny as f64;
            for g in mesh.element_to_thermo(cell) {
                let p = sedov_origin_pressure(self.gamma, rho0[g], volume);
                debug_assert!((p / ((self.gamma - 1.0) * rho0[g]) - energy / (rho0[g] * volume)).abs() < 1e-9 * p);
                eps[g] = p / ((self.gamma - 1.0) * rho0[g]);
            }
        }

        let mut velocity = match self.velocity_init {
            VelocityInit::Sample => mesh.initial_positions.iter().map(|&x| (self.velocity)(x)).collect(),
            VelocityInit::Interpolate => interpolate_q2(&mesh, &*self.velocity),
        };
        apply_velocity_bc(&mut velocity, &mesh, &self.bcs, None);

        let material = MaterialModel::new(self.gamma)?;
        let disc = Discretization::new(mesh, material, &rho0)?;
        let state = StageState { positions: disc.mesh.initial_positions.clone(), velocity, eps, time: 0.0 };
        debug_assert_eq!(state.eps.len(), disc.mesh.num_cells() * THERMO_DOFS);
        Ok(InitialData { disc, state })
    }
}

/// Q2 interpolation of `f` converted to Bernstein control values. Along each
/// edge `c_mid = 2 f_mid - (f_0 + f_1) / 2`, applied in x and then in y.
fn interpolate_q2(mesh: &MovingMesh, f: &dyn Fn(Vec2) -> Vec2) -> Vec<Vec2> {
    let ncols = 2 * mesh.nx + 1;
    let nrows = 2 * mesh.ny + 1;
    let nodal: Vec<Vec2> = mesh.initial_positions.iter().map(|&x| f(x)).collect();
    let mut rows = nodal.clone();
    for j in 0..nrows {
        for i in (1..ncols).step_by(2) {
            let k = j * ncols + i;
            rows[k] = 2.0 * nodal[k] - 0.5 * (nodal[k - 1] + nodal[k + 1]);
        }
    }
    let mut out = rows.clone();
    for j in (1..nrows).step_by(2) {
        for i in 0..ncols {
            let k = j * ncols + i;
            out[k] = 2.0 * rows[k] - 0.5 * (rows[k - ncols] + rows[k + ncols]);
        }
    }
    out
}
