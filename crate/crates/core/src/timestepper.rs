//! Two-stage deferred-correction time stepping, boundary conditions, time
//! step control and the run loop.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::bernstein::{KIN_DOFS, QUAD_POINTS, THERMO_DOFS};
use crate::conservation::{correction_term, element_energy, global_totals, ConservationLedger, Correction, LedgerRow};
use crate::error::{Result, SolverError};
use crate::io;
use crate::mesh::{jacobian, min_edge_length, MovingMesh, Side};
use crate::problems::{ProblemKind, ProblemSpec};
use crate::residuals::{
    compute_spatial, distribution_and_limit, first_order_set, spacetime_residuals, ElementResidualSet, ResidualConfig,
    ShockDirection, SpatialResiduals, ViscosityMode,
};
use crate::state::{Discretization, StageState};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// `u . n = 0`
    Wall,
    /// Velocity held at its initial value.
    FixedVelocity,
    Free,
}

/// Boundary condition per side of the initial box, indexed by [`Side::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryConditions {
    pub sides: [BoundaryKind; 4],
}

impl BoundaryConditions {
    pub fn uniform(kind: BoundaryKind) -> Self {
        BoundaryConditions { sides: [kind; 4] }
    }

    pub fn get(&self, side: Side) -> BoundaryKind {
        self.sides[side.index()]
    }
}

/// Imposes the velocity boundary conditions on every boundary DOF.
///
/// Fixed sides are applied first (when `initial` is given), walls second, so
/// a DOF shared by a wall and a fixed side keeps a zero normal component.
pub fn apply_velocity_bc(velocity: &mut [Vec2], mesh: &MovingMesh, bcs: &BoundaryConditions, initial: Option<&[Vec2]>) {
    for (dof, u) in velocity.iter_mut().enumerate() {
        let tags = mesh.kin_sides[dof];
        if !tags.iter().any(|&t| t) {
            continue;
        }
        if let Some(init) = initial {
            if Side::ALL.iter().any(|s| tags[s.index()] && bcs.get(*s) == BoundaryKind::FixedVelocity) {
                *u = init[dof];
            }
        }
        for s in Side::ALL {
            if tags[s.index()] && bcs.get(s) == BoundaryKind::Wall {
                u[s.normal_component()] = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeOrder {
    /// Forward Euler with the Rusanov residuals used directly.
    First,
    /// Two-stage scheme with limited residuals.
    Second,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub nx: usize,
    pub ny: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub viscosity: ViscosityMode,
    pub shock_dir: ShockDirection,
    /// Snapshot every this many steps; 0 writes only the initial and final
    /// states.
    pub output_every: usize,
    pub output_dir: Option<PathBuf>,
    pub dt_max: f64,
    pub order: TimeOrder,
    pub max_steps: usize,
    /// Add per-thermodynamic-DOF rows to the scatter files.
    pub scatter_dofs: bool,
}

pub const DEFAULT_CFL: f64 = 0.25;
pub const DEFAULT_DT_MAX: f64 = 1e-2;

impl RunConfig {
    pub fn for_problem(problem: ProblemKind) -> Self {
        let spec = problem.spec();
        RunConfig {
            problem,
            nx: spec.nx,
            ny: spec.ny,
            cfl: DEFAULT_CFL,
            t_end: spec.t_end,
            viscosity: spec.viscosity,
            shock_dir: spec.shock_dir,
            output_every: 0,
            output_dir: None,
            dt_max: DEFAULT_DT_MAX,
            order: TimeOrder::Second,
            max_steps: 1_000_000,
            scatter_dofs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SolverError::config("cfl", format!("must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(SolverError::config("t_end", format!("must be finite and nonnegative, got {}", self.t_end)));
        }
        if !(self.dt_max > 0.0) {
            return Err(SolverError::config("dt_max", format!("must be positive, got {}", self.dt_max)));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(SolverError::config("nx", "mesh sizes must be positive"));
        }
        Ok(())
    }

    pub fn residual_config(&self, spec: &ProblemSpec) -> ResidualConfig {
        ResidualConfig { viscosity: self.viscosity, shock_dir: self.shock_dir, source: spec.source }
    }
}

/// `dt = min(dt_max, cfl min_K l_K / (c_K + |u|_K))`.
pub fn compute_dt(disc: &Discretization, stage: &StageState, cfl: f64, dt_max: f64) -> Result<f64> {
    let mesh = &disc.mesh;
    let re = &disc.re;
    let per_cell: Vec<f64> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|cell| -> Result<f64> {
            let x0 = mesh.cell_positions(cell, &mesh.initial_positions);
            let xs = mesh.cell_positions(cell, &stage.positions);
            let mut c_max: f64 = 0.0;
            for q in 0..QUAD_POINTS {
                let det0 = jacobian(&x0, &re.kin_grads[q]).determinant();
                let p = disc.eval_with_tables(
                    cell,
                    &re.kin_values[q],
                    &re.kin_grads[q],
                    &re.thermo_values[q],
                    det0,
                    stage,
                )?;
                c_max = c_max.max(p.c);
            }
            let u_max = stage.cell_velocity(mesh, cell).iter().map(|u| u.norm()).fold(0.0, f64::max);
            let denom = c_max + u_max;
            Ok(if denom < 1e-14 { f64::INFINITY } else { cfl * min_edge_length(&xs) / denom })
        })
        .collect::<Result<_>>()?;
    let dt = per_cell.into_iter().fold(dt_max, f64::min);
    if !(dt > 0.0) {
        return Err(SolverError::State(format!("nonpositive time step {dt:e}")));
    }
    Ok(dt)
}

/// Diagnostics of one step (both stages).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub dt: f64,
    pub min_det_j: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// `max |sum_i beta_i - 1|` per element and component.
    pub beta_sum_error: f64,
    /// `max |sum_i limited_i - total| / max(|total|, tiny)`.
    pub limited_sum_error: f64,
    /// Largest per-element `sum r` over both stages.
    pub max_sum_r: f64,
    /// Number of (element, stage) pairs with `sum r > 1e-12 alpha_K |u|^2`.
    pub entropy_sign_violations: usize,
    /// `max |sum r + D_K| / scale_K` in first-order mode, `D_K` the dissipation.
    pub entropy_identity_error: f64,
    /// Stage-0 dissipation `sum_K sum_i alpha_i |u_i - u_tilde|^2`.
    pub dissipation: f64,
    /// Stage-0 `sum_K alpha_K sum_i |u_i - u_mean|^2`.
    pub rusanov_dissipation: f64,
    /// Energy leaving through the boundary during the step.
    pub boundary_flux: f64,
    /// Energy injected by the source during the step.
    pub source: f64,
    /// Energy injected by prescribed-velocity boundaries during the step.
    pub bc_work: f64,
    /// `|dE + flux - source - bc_work| / |E|` for the step.
    pub energy_residual: f64,
}

impl StepDiagnostics {
    fn new(dt: f64) -> Self {
        StepDiagnostics {
            dt,
            min_det_j: f64::INFINITY,
            beta_min: f64::INFINITY,
            beta_max: f64::NEG_INFINITY,
            beta_sum_error: 0.0,
            limited_sum_error: 0.0,
            max_sum_r: f64::NEG_INFINITY,
            entropy_sign_violations: 0,
            entropy_identity_error: 0.0,
            dissipation: 0.0,
            rusanov_dissipation: 0.0,
            boundary_flux: 0.0,
            source: 0.0,
            bc_work: 0.0,
            energy_residual: 0.0,
        }
    }

    fn record_sets(&mut self, sets: &[ElementResidualSet], order: TimeOrder) {
        if order == TimeOrder::First {
            return;
        }
        for s in sets {
            for comp in 0..2 {
                let mut sum = 0.0;
                let mut lim = 0.0;
                for i in 0..KIN_DOFS {
                    let b = s.beta_v[i][comp];
                    self.beta_min = self.beta_min.min(b);
                    self.beta_max = self.beta_max.max(b);
                    sum += b;
                    lim += s.phi_limited[i][comp];
                }
                self.beta_sum_error = self.beta_sum_error.max((sum - 1.0).abs());
                let total = s.st.phi_st_total[comp];
                self.limited_sum_error = self.limited_sum_error.max((lim - total).abs() / total.abs().max(1e-300));
            }
            let sum: f64 = s.beta_e.iter().sum();
            for &b in &s.beta_e {
                self.beta_min = self.beta_min.min(b);
                self.beta_max = self.beta_max.max(b);
            }
            self.beta_sum_error = self.beta_sum_error.max((sum - 1.0).abs());
            let lim: f64 = s.psi_limited.iter().sum();
            let total = s.st.psi_st_total;
            self.limited_sum_error = self.limited_sum_error.max((lim - total).abs() / total.abs().max(1e-300));
        }
    }
}

/// State and frozen data of a running simulation.
#[derive(Debug, Clone)]
pub struct Solver {
    pub disc: Discretization,
    pub state: StageState,
    pub initial_velocity: Vec<Vec2>,
    pub bcs: BoundaryConditions,
    pub residual_cfg: ResidualConfig,
    pub order: TimeOrder,
    pub step: usize,
    /// Accumulated `boundary flux - source - bc work`.
    pub boundary_flux_accum: f64,
}

struct StageOutput {
    state: StageState,
    flux: f64,
    source: f64,
    bc_work: f64,
}

impl Solver {
    pub fn new(
        disc: Discretization,
        state: StageState,
        bcs: BoundaryConditions,
        residual_cfg: ResidualConfig,
        order: TimeOrder,
    ) -> Self {
        Solver {
            initial_velocity: state.velocity.clone(),
            disc,
            state,
            bcs,
            residual_cfg,
            order,
            step: 0,
            boundary_flux_accum: 0.0,
        }
    }

    pub fn from_spec(
        spec: &ProblemSpec,
        nx: usize,
        ny: usize,
        residual_cfg: ResidualConfig,
        order: TimeOrder,
    ) -> Result<Self> {
        let init = spec.initialize(nx, ny)?;
        Ok(Solver::new(init.disc, init.state, spec.bcs, residual_cfg, order))
    }

    pub fn compute_dt(&self, cfl: f64, dt_max: f64) -> Result<f64> {
        compute_dt(&self.disc, &self.state, cfl, dt_max)
    }

    pub fn total_energy(&self) -> f64 {
        lumped_energy(&self.disc, &self.state)
    }

    fn tangled(&self, e: SolverError) -> SolverError {
        match e {
            SolverError::InvertedElement { cell, det_j } => {
                SolverError::Tangled { step: self.step + 1, time: self.state.time, cell, det_j }
            }
            other => other,
        }
    }

    /// Advances the state by `dt`.
    pub fn advance_step(&mut self, dt: f64) -> Result<StepDiagnostics> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SolverError::Usage(format!("time step must be positive and finite, got {dt}")));
        }
        let mut diag = StepDiagnostics::new(dt);
        let e_before = self.total_energy();
        let s0 = self.state.clone();
        let sp0 = compute_spatial(&self.disc, &s0, &self.residual_cfg).map_err(|e| self.tangled(e))?;
        diag.dissipation = sp0.iter().map(|s| s.dissipation).sum();
        diag.rusanov_dissipation = sp0.iter().map(|s| s.rusanov_dissipation).sum();

        let out = match self.order {
            TimeOrder::First => self.stage(0, &s0, &sp0, &s0, &sp0, dt, &mut diag)?,
            TimeOrder::Second => {
                let s1 = self.stage(0, &s0, &sp0, &s0, &sp0, dt, &mut diag)?.state;
                let sp1 = compute_spatial(&self.disc, &s1, &self.residual_cfg).map_err(|e| self.tangled(e))?;
                self.stage(1, &s0, &sp0, &s1, &sp1, dt, &mut diag)?
            }
        };
        self.state = out.state;
        self.state.time = s0.time + dt;
        self.step += 1;

        diag.boundary_flux = dt * out.flux;
        diag.source = dt * out.source;
        diag.bc_work = out.bc_work;
        self.boundary_flux_accum += diag.boundary_flux - diag.source - diag.bc_work;
        let e_after = self.total_energy();
        diag.energy_residual = (e_after - e_before + diag.boundary_flux - diag.source - diag.bc_work).abs()
            / e_before.abs().max(f64::MIN_POSITIVE);
        Ok(diag)
    }

    /// One stage: limited space-time residuals from stages 0 and k, velocity,
    /// positions, conservation correction, energy.
    #[allow(clippy::too_many_arguments)]
    fn stage(
        &self,
        k: usize,
        s0: &StageState,
        sp0: &[SpatialResiduals],
        sk: &StageState,
        spk: &[SpatialResiduals],
        dt: f64,
        diag: &mut StepDiagnostics,
    ) -> Result<StageOutput> {
        let disc = &self.disc;
        let mesh = &disc.mesh;
        let masses = &disc.masses;
        let order = self.order;
        let ncells = mesh.num_cells();

        let sets: Vec<ElementResidualSet> = (0..ncells)
            .into_par_iter()
            .map(|cell| {
                let (du, de) = if k == 0 {
                    ([Vec2::zeros(); KIN_DOFS], [0.0; THERMO_DOFS])
                } else {
                    let u0 = s0.cell_velocity(mesh, cell);
                    let uk = sk.cell_velocity(mesh, cell);
                    let e0 = s0.cell_eps(mesh, cell);
                    let ek = sk.cell_eps(mesh, cell);
                    (std::array::from_fn(|i| uk[i] - u0[i]), std::array::from_fn(|i| ek[i] - e0[i]))
                };
                let st = spacetime_residuals(disc, cell, &sp0[cell], &spk[cell], &du, &de, dt, k)?;
                Ok(match order {
                    TimeOrder::First => first_order_set(st),
                    TimeOrder::Second => distribution_and_limit(st),
                })
            })
            .collect::<Result<_>>()?;
        diag.record_sets(&sets, order);

        let mut assembled = vec![Vec2::zeros(); mesh.num_kin_dofs()];
        for (cell, set) in sets.iter().enumerate() {
            for (l, &g) in mesh.element_to_kin[cell].iter().enumerate() {
                assembled[g] += set.phi_limited[l];
            }
        }
        let mut velocity: Vec<Vec2> =
            sk.velocity.iter().zip(&assembled).zip(&masses.kin_global).map(|((u, r), c)| u - r * (dt / c)).collect();
        apply_velocity_bc(&mut velocity, mesh, &self.bcs, Some(&self.initial_velocity));

        let positions: Vec<Vec2> = s0
            .positions
            .iter()
            .zip(&s0.velocity)
            .zip(&sk.velocity)
            .map(|((x, u0), uk)| x + (u0 + uk) * (0.5 * dt))
            .collect();

        let weights: Vec<Vec2> = match order {
            TimeOrder::First => s0.velocity.clone(),
            TimeOrder::Second => sk.velocity.iter().zip(&velocity).map(|(a, b)| 0.5 * (a + b)).collect(),
        };
        let corrections: Vec<Correction> = (0..ncells)
            .into_par_iter()
            .map(|cell| {
                let kin = &mesh.element_to_kin[cell];
                let w: [Vec2; KIN_DOFS] = std::array::from_fn(|i| weights[kin[i]]);
                let increment = if k == 0 {
                    0.0
                } else {
                    element_energy(disc, cell, &sk.cell_velocity(mesh, cell), &sk.cell_eps(mesh, cell))
                        - element_energy(disc, cell, &s0.cell_velocity(mesh, cell), &s0.cell_eps(mesh, cell))
                };
                correction_term(&sets[cell], &sp0[cell], &spk[cell], &w, increment, dt)
            })
            .collect();

        let mut eps = sk.eps.clone();
        for (cell, c) in corrections.iter().enumerate() {
            for (l, g) in mesh.element_to_thermo(cell).into_iter().enumerate() {
                eps[g] -= dt * c.psi_corrected[l] / masses.thermo_global[g];
            }
        }

        let vscale = weights.iter().map(|w| w.norm_squared()).fold(0.0, f64::max);
        for (cell, c) in corrections.iter().enumerate() {
            diag.max_sum_r = diag.max_sum_r.max(c.sum_r);
            let alpha = sp0[cell].alpha_k.max(spk[cell].alpha_k);
            if c.sum_r > 1e-12 * alpha * vscale {
                diag.entropy_sign_violations += 1;
            }
            if order == TimeOrder::First {
                let err = (c.sum_r + sp0[cell].dissipation).abs() / c.scale.max(f64::MIN_POSITIVE);
                diag.entropy_identity_error = diag.entropy_identity_error.max(err);
            }
        }

        // Kinetic energy injected where the boundary projection overrode the
        // momentum update (zero up to roundoff for walls and free sides).
        let mut bc_work = 0.0;
        for g in 0..velocity.len() {
            let c = masses.kin_global[g];
            bc_work += 0.5 * c * (velocity[g].norm_squared() - sk.velocity[g].norm_squared())
                + dt * weights[g].dot(&assembled[g]);
        }

        let flux: f64 = (0..ncells).map(|c| 0.5 * (sp0[c].boundary_flux_energy + spk[c].boundary_flux_energy)).sum();
        let source: f64 = (0..ncells).map(|c| 0.5 * (sp0[c].source_integral + spk[c].source_integral)).sum();

        let state = StageState { positions, velocity, eps, time: s0.time + dt };
        let step = self.step + 1;
        let time = state.time;
        if state.velocity.iter().any(|u| !(u.x.is_finite() && u.y.is_finite())) {
            return Err(SolverError::NonFinite { step, time, field: "velocity" });
        }
        if state.eps.iter().any(|e| !e.is_finite()) {
            return Err(SolverError::NonFinite { step, time, field: "eps" });
        }
        if state.positions.iter().any(|x| !(x.x.is_finite() && x.y.is_finite())) {
            return Err(SolverError::NonFinite { step, time, field: "positions" });
        }
        let quality = mesh.mesh_quality(&state.positions, &disc.re);
        if !(quality.min_det_j > 0.0) {
            return Err(SolverError::Tangled { step, time, cell: quality.min_det_cell, det_j: quality.min_det_j });
        }
        diag.min_det_j = diag.min_det_j.min(quality.min_det_j);
        Ok(StageOutput { state, flux, source, bc_work })
    }

    pub fn ledger_row(&self, max_entropy_violation: f64) -> Result<LedgerRow> {
        Ok(LedgerRow {
            t: self.state.time,
            totals: global_totals(&self.disc, &self.state)?,
            boundary_flux_accum: self.boundary_flux_accum,
            max_entropy_violation,
        })
    }
}

/// Lumped total energy of a state.
pub fn lumped_energy(disc: &Discretization, state: &StageState) -> f64 {
    let m = &disc.masses;
    let kin: f64 = m.kin_global.iter().zip(&state.velocity).map(|(c, u)| 0.5 * c * u.norm_squared()).sum();
    let int: f64 = m.thermo_global.iter().zip(&state.eps).map(|(c, e)| c * e).sum();
    kin + int
}

/// Aggregated diagnostics of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub final_time: f64,
    pub min_det_j: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_sum_error: f64,
    pub limited_sum_error: f64,
    pub max_sum_r: f64,
    pub entropy_sign_violations: usize,
    pub entropy_identity_error: f64,
    /// `sum_steps` of the stage-0 dissipation of the active viscosity.
    pub dissipation_sum: f64,
    /// `sum_steps` of the stage-0 Rusanov reference dissipation.
    pub rusanov_dissipation_sum: f64,
    /// Time-integrated versions of the two sums above.
    pub dissipation_integral: f64,
    pub rusanov_dissipation_integral: f64,
    pub max_energy_residual: f64,
}

impl Default for RunDiagnostics {
    fn default() -> Self {
        RunDiagnostics {
            steps: 0,
            final_time: 0.0,
            min_det_j: f64::INFINITY,
            beta_min: f64::INFINITY,
            beta_max: f64::NEG_INFINITY,
            beta_sum_error: 0.0,
            limited_sum_error: 0.0,
            max_sum_r: f64::NEG_INFINITY,
            entropy_sign_violations: 0,
            entropy_identity_error: 0.0,
            dissipation_sum: 0.0,
            rusanov_dissipation_sum: 0.0,
            dissipation_integral: 0.0,
            rusanov_dissipation_integral: 0.0,
            max_energy_residual: 0.0,
        }
    }
}

impl RunDiagnostics {
    pub fn record(&mut self, d: &StepDiagnostics) {
        self.steps += 1;
        self.min_det_j = self.min_det_j.min(d.min_det_j);
        self.beta_min = self.beta_min.min(d.beta_min);
        self.beta_max = self.beta_max.max(d.beta_max);
        self.beta_sum_error = self.beta_sum_error.max(d.beta_sum_error);
        self.limited_sum_error = self.limited_sum_error.max(d.limited_sum_error);
        self.max_sum_r = self.max_sum_r.max(d.max_sum_r);
        self.entropy_sign_violations += d.entropy_sign_violations;
        self.entropy_identity_error = self.entropy_identity_error.max(d.entropy_identity_error);
        self.dissipation_sum += d.dissipation;
        self.rusanov_dissipation_sum += d.rusanov_dissipation;
        self.dissipation_integral += d.dt * d.dissipation;
        self.rusanov_dissipation_integral += d.dt * d.rusanov_dissipation;
        self.max_energy_residual = self.max_energy_residual.max(d.energy_residual);
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub spec: ProblemSpec,
    pub solver: Solver,
    pub ledger: ConservationLedger,
    pub diagnostics: RunDiagnostics,
    pub snapshots: Vec<PathBuf>,
    /// Why the run stopped before `t_end`, if it did.
    pub aborted: Option<String>,
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_with_spec(&config.problem.spec(), config)
}

/// Steps from `t = 0` to `t_end`, the last step clipped to land exactly on
/// `t_end`. Tangling and non-finite values are returned as errors.
pub fn run_with_spec(spec: &ProblemSpec, config: &RunConfig) -> Result<RunOutput> {
    match run_recorded_with_spec(spec, config)? {
        (_, Some(e)) => Err(e),
        (out, None) => Ok(out),
    }
}

pub fn run_recorded(config: &RunConfig) -> Result<(RunOutput, Option<SolverError>)> {
    run_recorded_with_spec(&config.problem.spec(), config)
}

/// Like [`run_with_spec`], but a run that stops early (tangling, NaN, step
/// limit) still returns its history up to the last completed step, next to
/// the error that stopped it. Only setup and I/O failures are `Err`.
pub fn run_recorded_with_spec(spec: &ProblemSpec, config: &RunConfig) -> Result<(RunOutput, Option<SolverError>)> {
    config.validate()?;
    let mut solver = Solver::from_spec(spec, config.nx, config.ny, config.residual_config(spec), config.order)?;
    let mut ledger = ConservationLedger::default();
    let mut diagnostics = RunDiagnostics::default();
    let mut snapshots = Vec::new();
    diagnostics.min_det_j = solver.disc.mesh.mesh_quality(&solver.state.positions, &solver.disc.re).min_det_j;

    ledger.push(solver.ledger_row(0.0)?);
    let write = |solver: &Solver, snapshots: &mut Vec<PathBuf>| -> Result<()> {
        if let Some(dir) = &config.output_dir {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}_{:06}.vtk", spec.kind.name(), solver.step));
            io::write_snapshot(&solver.disc, &solver.state, spec.origin, &path, config.scatter_dofs)?;
            snapshots.push(path);
        }
        Ok(())
    };
    write(&solver, &mut snapshots)?;

    let t_end = config.t_end;
    let mut abort = None;
    while solver.state.time < t_end {
        if solver.step >= config.max_steps {
            abort = Some(SolverError::State(format!(
                "step limit {} reached at t = {}",
                config.max_steps, solver.state.time
            )));
            break;
        }
        let remaining = t_end - solver.state.time;
        let mut dt = match solver.compute_dt(config.cfl, config.dt_max) {
            Ok(dt) => dt,
            Err(e) => {
                abort = Some(solver.tangled(e));
                break;
            }
        };
        let last = dt >= remaining * (1.0 - 1e-12);
        if last {
            dt = remaining;
        }
        let d = match solver.advance_step(dt) {
            Ok(d) => d,
            Err(e) => {
                abort = Some(e);
                break;
            }
        };
        if last {
            solver.state.time = t_end;
        }
        diagnostics.record(&d);
        ledger.push(solver.ledger_row(d.max_sum_r.max(0.0))?);
        if config.output_every > 0 && solver.step % config.output_every == 0 && !last {
            write(&solver, &mut snapshots)?;
        }
    }
    diagnostics.final_time = solver.state.time;
    if solver.step > 0 {
        write(&solver, &mut snapshots)?;
    }
    if let Some(dir) = &config.output_dir {
        let path = dir.join(format!("{}_conservation.csv", spec.kind.name()));
        std::fs::write(&path, io::conservation_report(&ledger))?;
    }
    let aborted = abort.as_ref().map(|e| e.to_string());
    Ok((RunOutput { spec: spec.clone(), solver, ledger, diagnostics, snapshots, aborted }, abort))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_noh, make_taylor_green, make_uniform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_mesh(n: usize) -> MovingMesh {
        MovingMesh::build_cartesian(n, n, [0.0, 0.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn wall_examples() {
        let mesh = unit_mesh(2);
        let bcs = BoundaryConditions::uniform(BoundaryKind::Wall);
        let mut u = vec![Vec2::new(3.0, 2.0); mesh.num_kin_dofs()];
        apply_velocity_bc(&mut u, &mesh, &bcs, None);
        // DOF 5 sits on x = 0 (row 1, column 0)
        assert_eq!(u[5], Vec2::new(0.0, 2.0));
        assert_eq!(u[0], Vec2::zeros());
        assert_eq!(u[6], Vec2::new(3.0, 2.0));
    }

    #[test]
    fn fixed_velocity_resets_to_initial() {
        let spec = make_noh();
        let init = spec.initialize(4, 4).unwrap();
        let mesh = &init.disc.mesh;
        let mut u = vec![Vec2::new(5.0, 5.0); mesh.num_kin_dofs()];
        apply_velocity_bc(&mut u, mesh, &spec.bcs, Some(&init.state.velocity));
        let last = mesh.num_kin_dofs() - 1;
        let x = mesh.initial_positions[last - 3];
        assert!((u[last - 3] + x / x.norm()).norm() < 1e-15);
        // (1, 0) is on the fixed right side and the bottom wall
        let corner = 2 * 4;
        assert_eq!(u[corner], Vec2::new(-1.0, 0.0));
        let free = BoundaryConditions::uniform(BoundaryKind::Free);
        let mut v = vec![Vec2::new(5.0, 5.0); mesh.num_kin_dofs()];
        apply_velocity_bc(&mut v, mesh, &free, Some(&init.state.velocity));
        assert!(v.iter().all(|w| *w == Vec2::new(5.0, 5.0)));
    }

    #[test]
    fn dt_examples() {
        // c = 1, u = 0, l = 0.1
        let gamma = 1.4;
        let p = 1.0 / gamma;
        let spec = make_uniform(Vec2::zeros(), 1.0, p);
        let init = spec.initialize(10, 10).unwrap();
        let dt = compute_dt(&init.disc, &init.state, 0.25, 1.0).unwrap();
        assert!((dt - 0.025).abs() < 1e-15);
        // Noh init, l = 0.02
        let init = make_noh().initialize(50, 50).unwrap();
        let dt = compute_dt(&init.disc, &init.state, 0.25, 1.0).unwrap();
        assert!((dt - 0.005).abs() < 1e-15);
        // cold static
        let init = make_uniform(Vec2::zeros(), 1.0, 0.0).initialize(4, 4).unwrap();
        assert_eq!(compute_dt(&init.disc, &init.state, 0.25, 0.123).unwrap(), 0.123);
    }

    fn solver_for(spec: &ProblemSpec, n: usize, visc: ViscosityMode, order: TimeOrder) -> Solver {
        let cfg =
            ResidualConfig { viscosity: visc, shock_dir: ShockDirection::VelocityFluctuation, source: spec.source };
        Solver::from_spec(spec, n, n, cfg, order).unwrap()
    }

    #[test]
    fn uniform_state_translates() {
        let spec = make_uniform(Vec2::new(0.3, -0.2), 1.0, 1.0);
        for visc in [ViscosityMode::None, ViscosityMode::Rusanov, ViscosityMode::Mars] {
            let mut s = solver_for(&spec, 3, visc, TimeOrder::Second);
            let x0 = s.state.positions.clone();
            for _ in 0..5 {
                s.advance_step(0.01).unwrap();
            }
            for (x, x0) in s.state.positions.iter().zip(&x0) {
                assert!((x - x0 - Vec2::new(0.3, -0.2) * 0.05).norm() < 1e-14);
            }
            assert!(s.state.eps.iter().all(|e| (e - 2.5).abs() < 1e-13));
        }
    }

    #[test]
    fn zero_pressure_motion_is_ballistic() {
        let spec = make_noh();
        let cfg = ResidualConfig { viscosity: ViscosityMode::Mars, shock_dir: ShockDirection::Radial, source: None };
        let mut s = Solver::from_spec(&spec, 6, 6, cfg, TimeOrder::Second).unwrap();
        let start = s.state.clone();
        let dt = 0.01;
        s.advance_step(dt).unwrap();
        for g in 0..start.velocity.len() {
            assert_eq!(s.state.velocity[g], start.velocity[g]);
            assert!((s.state.positions[g] - start.positions[g] - start.velocity[g] * dt).norm() < 1e-15);
        }
        assert!(s.state.eps.iter().all(|e| e.abs() < 1e-15));
    }

    #[test]
    fn static_state_stays_put() {
        let spec = make_uniform(Vec2::zeros(), 1.0, 1.0);
        let mut s = solver_for(&spec, 3, ViscosityMode::Mars, TimeOrder::Second);
        let before = s.state.clone();
        s.advance_step(0.01).unwrap();
        assert!(s.state.positions.iter().zip(&before.positions).all(|(a, b)| (a - b).norm() < 1e-15));
        assert!(s.state.velocity.iter().all(|u| u.norm() < 1e-15));
        assert!(s.state.eps.iter().zip(&before.eps).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn energy_identity_on_random_two_cell_state() {
        // Direct evaluation: E(n+1) - E(n) + dt * flux - dt * source = 0 with
        // free boundaries, random velocities and energies.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mesh = MovingMesh::build_cartesian(2, 1, [0.0, 0.0, 2.0, 1.0]).unwrap();
        let rho0: Vec<f64> = (0..mesh.num_thermo_dofs()).map(|_| rng.gen_range(0.5..2.0)).collect();
        let disc = Discretization::new(mesh, crate::state::MaterialModel::new(1.4).unwrap(), &rho0).unwrap();
        let state = StageState {
            positions: disc.mesh.initial_positions.clone(),
            velocity: (0..disc.mesh.num_kin_dofs())
                .map(|_| Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)))
                .collect(),
            eps: (0..disc.mesh.num_thermo_dofs()).map(|_| rng.gen_range(0.5..2.0)).collect(),
            time: 0.0,
        };
        for visc in [ViscosityMode::Rusanov, ViscosityMode::Mars] {
            let cfg = ResidualConfig { viscosity: visc, shock_dir: ShockDirection::VelocityFluctuation, source: None };
            let mut s = Solver::new(
                disc.clone(),
                state.clone(),
                BoundaryConditions::uniform(BoundaryKind::Free),
                cfg,
                TimeOrder::Second,
            );
            let e0 = s.total_energy();
            let d = s.advance_step(0.01).unwrap();
            let e1 = s.total_energy();
            assert!((e1 - e0 + d.boundary_flux).abs() < 1e-12 * e0, "{visc:?}");
            assert!(d.energy_residual < 1e-12);
            assert!(d.bc_work.abs() < 1e-14);
        }
    }

    #[test]
    fn closed_box_conserves_energy() {
        let spec = crate::problems::make_gresho();
        let mut s = solver_for(&spec, 4, ViscosityMode::Mars, TimeOrder::Second);
        let e0 = s.total_energy();
        for _ in 0..10 {
            let dt = s.compute_dt(0.25, 1e-2).unwrap();
            let d = s.advance_step(dt).unwrap();
            assert!(d.boundary_flux.abs() < 1e-14);
        }
        assert!((s.total_energy() - e0).abs() < 1e-13 * e0);
    }

    #[test]
    fn taylor_green_step_balances_source() {
        let spec = make_taylor_green();
        let mut s = solver_for(&spec, 4, ViscosityMode::None, TimeOrder::Second);
        let e0 = s.total_energy();
        let d = s.advance_step(0.01).unwrap();
        let e1 = s.total_energy();
        assert!((e1 - e0 + d.boundary_flux - d.source).abs() < 1e-12 * e0);
    }

    #[test]
    fn run_lands_on_t_end() {
        let mut cfg = RunConfig::for_problem(ProblemKind::TaylorGreen);
        cfg.nx = 4;
        cfg.ny = 4;
        cfg.t_end = 0.0337;
        let out = run(&cfg).unwrap();
        assert_eq!(out.solver.state.time, 0.0337);
        cfg.t_end = 0.0;
        let out = run(&cfg).unwrap();
        assert_eq!(out.solver.step, 0);
        assert_eq!(out.ledger.rows.len(), 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = RunConfig::for_problem(ProblemKind::Sedov);
        cfg.cfl = 1.5;
        assert_eq!(run(&cfg).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn tangling_is_reported() {
        let spec = make_uniform(Vec2::zeros(), 1.0, 1.0);
        let mut s = solver_for(&spec, 2, ViscosityMode::None, TimeOrder::Second);
        // Crush the center DOF across the opposite corner.
        let center = 2 * 5 + 2;
        s.state.velocity[center] = Vec2::new(-100.0, -100.0);
        let err = s.advance_step(0.01).unwrap_err();
        assert!(matches!(err, SolverError::Tangled { .. }), "{err:?}");
        assert_eq!(err.exit_code(), 2);
    }
}
