//! The verification suite: free-stream, conservation, entropy, distribution
//! coefficients, benchmark metrics and oracle equivalences.
//!
//! Benchmark runs are shared between checks and computed at most once per
//! process.

use std::fmt;
use std::sync::OnceLock;

use crate::bernstein::{kin_basis, LocalFace, KIN_DOFS};
use crate::error::Result;
use crate::io::{cell_means, error_norms, ConvergenceRow, ErrorNorms};
use crate::mesh::{face_points, jacobian, MovingMesh};
use crate::problems::{make_taylor_green, make_uniform, ProblemKind};
use crate::residuals::{ResidualConfig, ShockDirection, ViscosityMode};
use crate::state::{Discretization, MaterialModel, StageState};
use crate::timestepper::{run, run_recorded, RunConfig, RunOutput, Solver, TimeOrder};
use crate::Vec2;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} [{status}] {}: {}", self.id, self.name, self.detail)
    }
}

fn result(id: usize, name: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult { id, name, passed, detail }
}

type Cached = OnceLock<std::result::Result<RunOutput, String>>;

/// Runs are recorded even when they stop early; see [`RunOutput::aborted`].
fn cached(cell: &'static Cached, make: impl FnOnce() -> RunConfig) -> std::result::Result<&'static RunOutput, String> {
    cell.get_or_init(|| run_recorded(&make()).map(|(out, _)| out).map_err(|e| e.to_string()))
        .as_ref()
        .map_err(|e| e.clone())
}

/// The run, or the reason it did not reach its end time.
fn completed(r: std::result::Result<&'static RunOutput, String>) -> std::result::Result<&'static RunOutput, String> {
    let out = r?;
    match &out.aborted {
        Some(e) => Err(format!("aborted after {} steps: {e}", out.diagnostics.steps)),
        None => Ok(out),
    }
}

fn benchmark(kind: ProblemKind, n: Option<(usize, usize)>, edit: impl FnOnce(&mut RunConfig)) -> RunConfig {
    let mut cfg = RunConfig::for_problem(kind);
    if let Some((nx, ny)) = n {
        cfg.nx = nx;
        cfg.ny = ny;
    }
    edit(&mut cfg);
    cfg
}

pub fn sedov16() -> std::result::Result<&'static RunOutput, String> {
    static C: Cached = OnceLock::new();
    cached(&C, || benchmark(ProblemKind::Sedov, Some((16, 16)), |_| {}))
}

pub fn sedov32() -> std::result::Result<&'static RunOutput, String> {
    static C: Cached = OnceLock::new();
    cached(&C, || benchmark(ProblemKind::Sedov, Some((32, 32)), |_| {}))
}

/// CFL number of the first-order configuration: the directly applied
/// Rusanov term relaxes the interior DOF of a cell at the rate
/// `alpha_K / C_i ~ 36 c / h`, so explicit stability needs a CFL below
/// about 0.055.
pub const FIRST_ORDER_CFL: f64 = 0.02;

pub fn sedov16_first_order() -> std::result::Result<&'static RunOutput, String> {
    static C: Cached = OnceLock::new();
    cached(&C, || {
        benchmark(ProblemKind::Sedov, Some((16, 16)), |c| {
            c.order = TimeOrder::First;
            c.cfl = FIRST_ORDER_CFL;
            c.viscosity = ViscosityMode::Rusanov;
        })
    })
}

pub fn noh50() -> std::result::Result<&'static RunOutput, String> {
    static C: Cached = OnceLock::new();
    cached(&C, || benchmark(ProblemKind::Noh, Some((50, 50)), |_| {}))
}

pub fn gresho16() -> std::result::Result<&'static RunOutput, String> {
    static C: Cached = OnceLock::new();
    cached(&C, || benchmark(ProblemKind::Gresho, Some((16, 16)), |_| {}))
}

pub fn triple_point(viscosity: ViscosityMode) -> std::result::Result<&'static RunOutput, String> {
    static RUS: Cached = OnceLock::new();
    static MARS: Cached = OnceLock::new();
    let cell = if viscosity == ViscosityMode::Mars { &MARS } else { &RUS };
    cached(cell, || benchmark(ProblemKind::TriplePoint, Some((56, 24)), |c| c.viscosity = viscosity))
}

/// CFL number of the Taylor-Green convergence study, small enough that the
/// spatial error dominates on all three meshes.
pub const CONVERGENCE_CFL: f64 = 0.01;

/// Runs Taylor-Green on each `n x n` mesh to `t_end` without viscosity and
/// returns the final error norms with the L1 convergence tables of `u_x` and
/// `u_y`.
pub fn taylor_green_convergence(meshes: &[usize], t_end: f64, cfl: f64) -> Result<ConvergenceStudy> {
    let spec = make_taylor_green();
    let mut norms = Vec::new();
    for &n in meshes {
        let cfg = benchmark(ProblemKind::TaylorGreen, Some((n, n)), |c| {
            c.t_end = t_end;
            c.cfl = cfl;
            c.viscosity = ViscosityMode::None;
        });
        let out = run(&cfg)?;
        norms.push(error_norms(&out.solver.disc, &out.solver.state, spec.exact)?);
    }
    let h: Vec<f64> = meshes.iter().map(|&n| 1.0 / n as f64).collect();
    let ux = crate::io::convergence_table(&h.iter().zip(&norms).map(|(h, e)| (*h, e.l1[0])).collect::<Vec<_>>())?;
    let uy = crate::io::convergence_table(&h.iter().zip(&norms).map(|(h, e)| (*h, e.l1[1])).collect::<Vec<_>>())?;
    Ok((norms, ux, uy))
}

/// Per-mesh norms and the `u_x`, `u_y` rate tables.
pub type ConvergenceStudy = (Vec<ErrorNorms>, Vec<ConvergenceRow>, Vec<ConvergenceRow>);

fn tgv_convergence_cached() -> std::result::Result<&'static ConvergenceStudy, String> {
    static C: OnceLock<std::result::Result<ConvergenceStudy, String>> = OnceLock::new();
    C.get_or_init(|| taylor_green_convergence(&[8, 16, 32], 0.5, CONVERGENCE_CFL).map_err(|e| e.to_string()))
        .as_ref()
        .map_err(|e| e.clone())
}

/// Cell-mean densities with centroid radii and cell coordinates.
pub fn density_profile(out: &RunOutput) -> Result<Vec<(usize, usize, f64, f64)>> {
    let disc = &out.solver.disc;
    (0..disc.mesh.num_cells())
        .map(|cell| {
            let (rho, _, _, c) = cell_means(disc, &out.solver.state, cell)?;
            let (ix, iy) = disc.mesh.cell_coords(cell);
            Ok((ix, iy, (c - out.spec.origin).norm(), rho))
        })
        .collect()
}

/// Max cell density, and the centroid radius of the densest diagonal cell.
pub fn sedov_metrics(out: &RunOutput) -> Result<(f64, f64)> {
    let prof = density_profile(out)?;
    let peak = prof.iter().map(|p| p.3).fold(f64::NEG_INFINITY, f64::max);
    let front = prof.iter().filter(|p| p.0 == p.1).max_by(|a, b| a.3.total_cmp(&b.3)).map(|p| p.2).unwrap_or(f64::NAN);
    Ok((peak, front))
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Plateau density (median over centroid radii in (0.05, 0.15)) and shock
/// radius: cells are binned by radius with the mesh width; scanning inward,
/// the first bin whose median reaches `(16 + 4) / 2` locates the shock,
/// interpolated linearly against the next bin out.
pub fn noh_metrics(out: &RunOutput) -> Result<(f64, f64)> {
    let prof = density_profile(out)?;
    let mut plateau: Vec<f64> = prof.iter().filter(|p| p.2 > 0.05 && p.2 < 0.15).map(|p| p.3).collect();
    let plateau = median(&mut plateau);
    let h = (out.spec.bbox[2] - out.spec.bbox[0]) / out.solver.disc.mesh.nx as f64;
    let nbins = (prof.iter().map(|p| p.2).fold(0.0, f64::max) / h) as usize + 1;
    let mut bins = vec![Vec::new(); nbins];
    for p in &prof {
        bins[((p.2 / h) as usize).min(nbins - 1)].push(p.3);
    }
    let medians: Vec<(f64, f64)> = bins
        .iter_mut()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(i, b)| ((i as f64 + 0.5) * h, median(b)))
        .collect();
    let threshold = 10.0;
    let mut radius = f64::NAN;
    for w in medians.windows(2).rev() {
        let ((r0, d0), (r1, d1)) = (w[0], w[1]);
        if d0 >= threshold && d1 < threshold {
            radius = r0 + (d0 - threshold) / (d0 - d1) * (r1 - r0);
            break;
        }
    }
    Ok((plateau, radius))
}

pub fn criterion_1() -> CriterionResult {
    let name = "free-stream preservation";
    let mut worst: f64 = 0.0;
    let mut worst_x: f64 = 0.0;
    let u0 = Vec2::new(0.7, -0.3);
    let spec = make_uniform(u0, 1.3, 0.8);
    for visc in [ViscosityMode::None, ViscosityMode::Rusanov, ViscosityMode::Mars] {
        let cfg = ResidualConfig { viscosity: visc, shock_dir: ShockDirection::VelocityFluctuation, source: None };
        let mut s = match Solver::from_spec(&spec, 8, 8, cfg, TimeOrder::Second) {
            Ok(s) => s,
            Err(e) => return result(1, name, false, e.to_string()),
        };
        let start = s.state.clone();
        let mut t = 0.0;
        for _ in 0..100 {
            let step = s.compute_dt(0.25, 1e-2).and_then(|dt| s.advance_step(dt).map(|_| dt));
            match step {
                Ok(dt) => t += dt,
                Err(e) => return result(1, name, false, e.to_string()),
            }
        }
        for (a, b) in s.state.velocity.iter().zip(&start.velocity) {
            worst = worst.max((a - b).amax());
        }
        for (a, b) in s.state.eps.iter().zip(&start.eps) {
            worst = worst.max((a - b).abs());
        }
        for (x, x0) in s.state.positions.iter().zip(&start.positions) {
            worst_x = worst_x.max((x - x0 - u0 * t).amax());
        }
    }
    result(
        1,
        name,
        worst < 1e-12 && worst_x < 1e-12,
        format!("max |du|,|deps| = {worst:.3e}, max rigid-translation error = {worst_x:.3e} (tol 1e-12)"),
    )
}

pub fn criterion_2() -> CriterionResult {
    let name = "energy and mass conservation";
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, run) in [("sedov 16x16", sedov16()), ("noh 50x50", noh50())] {
        match run {
            Ok(out) => {
                let e = out.ledger.energy_drift();
                let m = out.ledger.mass_drift();
                ok &= e <= 1e-10 && m <= 1e-12 && out.aborted.is_none();
                let reach = match &out.aborted {
                    Some(a) => format!(" up to t = {:.4e}, end time not reached ({a})", out.diagnostics.final_time),
                    None => String::new(),
                };
                parts.push(format!("{label}: energy drift {e:.3e}, mass drift {m:.3e}{reach}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    result(2, name, ok, parts.join("; ") + " (tol 1e-10 / 1e-12)")
}

pub fn criterion_3() -> CriterionResult {
    let name = "first-order entropy sign";
    match sedov16_first_order() {
        Ok(out) => {
            let d = &out.diagnostics;
            let ok = d.steps > 0 && d.entropy_sign_violations == 0 && d.entropy_identity_error <= 1e-12;
            let reach = match &out.aborted {
                Some(a) => {
                    format!("; checked on every stage up to t = {:.4e}, where the run stopped ({a})", d.final_time)
                }
                None => String::new(),
            };
            result(
                3,
                name,
                ok,
                format!(
                    "sign violations {}, max sum r {:.3e}, identity error {:.3e} (tol 1e-12), {} steps{reach}",
                    d.entropy_sign_violations, d.max_sum_r, d.entropy_identity_error, d.steps
                ),
            )
        }
        Err(e) => result(3, name, false, e),
    }
}

pub fn criterion_4() -> CriterionResult {
    let name = "distribution coefficients";
    let runs = [
        ("sedov16", sedov16()),
        ("sedov32", sedov32()),
        ("noh50", noh50()),
        ("gresho16", gresho16()),
        ("triple-rusanov", triple_point(ViscosityMode::Rusanov)),
        ("triple-mars", triple_point(ViscosityMode::Mars)),
    ];
    let (mut bmin, mut bmax, mut sum_err, mut lim_err) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut failed = Vec::new();
    let mut partial = Vec::new();
    for (label, r) in runs {
        match r {
            Ok(out) => {
                if out.aborted.is_some() {
                    partial.push(format!("{label} (to t = {:.3e})", out.diagnostics.final_time));
                }
                let d = &out.diagnostics;
                bmin = bmin.min(d.beta_min);
                bmax = bmax.max(d.beta_max);
                sum_err = sum_err.max(d.beta_sum_error);
                lim_err = lim_err.max(d.limited_sum_error);
            }
            Err(e) => failed.push(format!("{label}: {e}")),
        }
    }
    let ok = failed.is_empty() && bmin >= 0.0 && bmax <= 1.0 && sum_err <= 1e-12 && lim_err <= 1e-12;
    let mut detail = format!("beta in [{bmin:.3e}, {bmax:.3e}], max |sum beta - 1| {sum_err:.3e}, max rel |sum limited - total| {lim_err:.3e}");
    if !partial.is_empty() {
        detail += &format!("; stopped early, checked on the completed steps: {}", partial.join(", "));
    }
    if !failed.is_empty() {
        detail += &format!("; failed runs: {}", failed.join(", "));
    }
    result(4, name, ok, detail)
}

pub fn criterion_5() -> CriterionResult {
    let name = "Taylor-Green convergence";
    match tgv_convergence_cached() {
        Ok((norms, ux, uy)) => {
            let rates: Vec<f64> = ux.iter().chain(uy.iter()).filter_map(|r| r.rate).collect();
            let ok = rates.iter().all(|r| (1.6..=2.4).contains(r));
            let errs: Vec<String> = norms.iter().map(|n| format!("({:.3e}, {:.3e})", n.l1[0], n.l1[1])).collect();
            result(
                5,
                name,
                ok,
                format!(
                    "L1 (u_x, u_y) on 8/16/32: {}; rates u_x {:?}, u_y {:?} (need [1.6, 2.4])",
                    errs.join(" "),
                    fmt_rates(ux),
                    fmt_rates(uy)
                ),
            )
        }
        Err(e) => result(5, name, false, e),
    }
}

fn fmt_rates(rows: &[ConvergenceRow]) -> Vec<String> {
    rows.iter().filter_map(|r| r.rate).map(|r| format!("{r:.3}")).collect()
}

pub fn criterion_6() -> CriterionResult {
    let name = "Sedov peaks";
    let (a, b) = match (completed(sedov16()), completed(sedov32())) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return result(6, name, false, e),
    };
    match (sedov_metrics(a), sedov_metrics(b)) {
        (Ok((p16, r16)), Ok((p32, r32))) => {
            let ok =
                (4.4..=5.4).contains(&p16) && (0.90..=1.05).contains(&r16) && (4.9..=6.0).contains(&p32) && p32 > p16;
            result(
                6,
                name,
                ok,
                format!("16x16 peak {p16:.4} (need [4.4, 5.4]), front {r16:.4} (need [0.90, 1.05]); 32x32 peak {p32:.4} (need [4.9, 6.0], > 16x16), front {r32:.4}"),
            )
        }
        (Err(e), _) | (_, Err(e)) => result(6, name, false, e.to_string()),
    }
}

pub fn criterion_7() -> CriterionResult {
    let name = "Noh plateau and shock";
    match completed(noh50()).and_then(|o| noh_metrics(o).map_err(|e| e.to_string())) {
        Ok((plateau, radius)) => {
            let ok = (13.0..=16.5).contains(&plateau) && (0.17..=0.23).contains(&radius);
            result(7, name, ok, format!("plateau median density {plateau:.4} (need [13, 16.5]), shock radius {radius:.4} (need [0.17, 0.23])"))
        }
        Err(e) => result(7, name, false, e),
    }
}

pub fn criterion_8() -> CriterionResult {
    let name = "Gresho robustness";
    match completed(gresho16()) {
        Ok(out) => {
            let d = &out.diagnostics;
            let drift = out.ledger.energy_drift();
            let ok = d.min_det_j > 0.0 && drift <= 1e-10 && (out.solver.state.time - 0.65).abs() < 1e-14;
            result(
                8,
                name,
                ok,
                format!(
                    "exit 0, {} steps, min detJ {:.3e}, energy drift {drift:.3e} (tol 1e-10)",
                    d.steps, d.min_det_j
                ),
            )
        }
        Err(e) => result(8, name, false, e),
    }
}

pub fn criterion_9() -> CriterionResult {
    let name = "triple point robustness and dissipation";
    match (completed(triple_point(ViscosityMode::Rusanov)), completed(triple_point(ViscosityMode::Mars))) {
        (Ok(r), Ok(m)) => {
            let (dr, dm) = (r.diagnostics.dissipation_sum, m.diagnostics.dissipation_sum);
            let (ir, im) = (r.diagnostics.dissipation_integral, m.diagnostics.dissipation_integral);
            result(
                9,
                name,
                dm < dr,
                format!("both exit 0; accumulated dissipation mars {dm:.4e} vs rusanov {dr:.4e} (dt-weighted {im:.4e} vs {ir:.4e})"),
            )
        }
        (r, m) => {
            let msg = [("rusanov", r.err()), ("mars", m.err())]
                .into_iter()
                .filter_map(|(l, e)| e.map(|e| format!("{l}: {e}")))
                .collect::<Vec<_>>()
                .join("; ");
            result(9, name, false, msg)
        }
    }
}

/// Smoothly perturbed control points of a unit-square mesh.
fn wavy(mesh: &MovingMesh, amp: f64) -> Vec<Vec2> {
    mesh.initial_positions
        .iter()
        .map(|p| {
            p + amp
                * Vec2::new(
                    (7.1 * p.x + 3.3 * p.y).sin() * (2.0 * p.y).cos(),
                    (5.3 * p.y - 2.9 * p.x).cos() * (4.0 * p.x).sin(),
                )
        })
        .collect()
}

fn eval_x_u(xs: &[Vec2; KIN_DOFS], us: &[Vec2; KIN_DOFS], r: [f64; 2]) -> (Vec2, Vec2) {
    let (phi, _) = kin_basis(r);
    let mut x = Vec2::zeros();
    let mut u = Vec2::zeros();
    for l in 0..KIN_DOFS {
        x += xs[l] * phi[l];
        u += us[l] * phi[l];
    }
    (x, u)
}

/// Max relative deviations of (Jacobian, velocity gradient) from central
/// finite differences.
pub fn fd_jacobian_check() -> Result<(f64, f64)> {
    let mesh = MovingMesh::build_cartesian(3, 3, [0.0, 0.0, 1.0, 1.0])?;
    let positions = wavy(&mesh, 0.03);
    let velocity: Vec<Vec2> = mesh
        .initial_positions
        .iter()
        .map(|p| Vec2::new((3.0 * p.y).sin() + p.x * p.x, (2.0 * p.x).cos() * p.y))
        .collect();
    let rho0 = vec![1.0; mesh.num_thermo_dofs()];
    let disc = Discretization::new(mesh, MaterialModel::new(1.4)?, &rho0)?;
    let stage =
        StageState { positions: positions.clone(), velocity, eps: vec![1.0; disc.mesh.num_thermo_dofs()], time: 0.0 };
    let h = 1e-6;
    let (mut ej, mut eg): (f64, f64) = (0.0, 0.0);
    for cell in 0..disc.mesh.num_cells() {
        let xs = disc.mesh.cell_positions(cell, &positions);
        let us = stage.cell_velocity(&disc.mesh, cell);
        for &r in &[[0.2, 0.3], [0.5, 0.5], [0.85, 0.1], [0.6, 0.95]] {
            let g = disc.mesh.geometry_at(cell, r, &positions);
            let (xp, up) = eval_x_u(&xs, &us, [r[0] + h, r[1]]);
            let (xm, um) = eval_x_u(&xs, &us, [r[0] - h, r[1]]);
            let (yp, vp) = eval_x_u(&xs, &us, [r[0], r[1] + h]);
            let (ym, vm) = eval_x_u(&xs, &us, [r[0], r[1] - h]);
            let mut jfd = crate::Mat2::zeros();
            jfd.set_column(0, &((xp - xm) / (2.0 * h)));
            jfd.set_column(1, &((yp - ym) / (2.0 * h)));
            let mut dudxi = crate::Mat2::zeros();
            dudxi.set_column(0, &((up - um) / (2.0 * h)));
            dudxi.set_column(1, &((vp - vm) / (2.0 * h)));
            ej = ej.max((g.jac - jfd).norm() / jfd.norm());
            let grad_fd = dudxi * jfd.try_inverse().unwrap_or_else(crate::Mat2::zeros);
            let s = disc.eval_state_at(cell, r, &stage)?;
            eg = eg.max((s.grad_u - grad_fd).norm() / grad_fd.norm());
        }
    }
    Ok((ej, eg))
}

/// Max relative deviation of curved face lengths from a Richardson-extrapolated
/// polyline length.
pub fn face_length_check() -> Result<f64> {
    let mesh = MovingMesh::build_cartesian(2, 2, [0.0, 0.0, 1.0, 1.0])?;
    let positions = wavy(&mesh, 0.04);
    let re = crate::bernstein::ReferenceElement::new();
    let mut worst: f64 = 0.0;
    for cell in 0..mesh.num_cells() {
        let xs = mesh.cell_positions(cell, &positions);
        for face in LocalFace::ALL {
            let quad: f64 = face_points(&xs, face, &re)?.iter().map(|p| p.measure).sum();
            let poly = |n: usize| -> f64 {
                let pt = |i: usize| {
                    let r = face.ref_point(i as f64 / n as f64);
                    eval_x_u(&xs, &xs, r).0
                };
                (0..n).map(|i| (pt(i + 1) - pt(i)).norm()).sum()
            };
            let (a, b) = (poly(2000), poly(4000));
            let oracle = b + (b - a) / 3.0;
            worst = worst.max((quad - oracle).abs() / oracle);
        }
    }
    Ok(worst)
}

/// Relative deviation of the L1 norms from an 8x8-subcell Gauss oracle on a
/// perturbed Taylor-Green state.
pub fn l1_refined_check() -> Result<f64> {
    let spec = make_taylor_green();
    let init = spec.initialize(4, 4)?;
    let disc = &init.disc;
    let mut state = init.state.clone();
    state.positions = wavy(&disc.mesh, 0.02);
    for (i, u) in state.velocity.iter_mut().enumerate() {
        *u += Vec2::new(0.3 + 0.05 * (i as f64 * 0.37).sin(), -0.3 + 0.05 * (i as f64 * 0.91).cos());
    }
    for (i, e) in state.eps.iter_mut().enumerate() {
        *e *= 1.5 + 0.1 * (i as f64 * 1.3).sin();
    }
    state.time = 0.1;
    let exact = spec.exact.expect("Taylor-Green has a reference solution");
    let fast = error_norms(disc, &state, Some(exact))?;

    let m = 8;
    let (gp, gw) = crate::bernstein::gauss3_unit();
    let mut l1 = [0.0; 3];
    let mut area = 0.0;
    for cell in 0..disc.mesh.num_cells() {
        let xs = disc.mesh.cell_positions(cell, &state.positions);
        for si in 0..m {
            for sj in 0..m {
                for (a, wa) in gp.iter().zip(&gw) {
                    for (b, wb) in gp.iter().zip(&gw) {
                        let r = [(si as f64 + a) / m as f64, (sj as f64 + b) / m as f64];
                        let s = disc.eval_state_at(cell, r, &state)?;
                        let (_, g) = kin_basis(r);
                        let det = jacobian(&xs, &g).determinant();
                        let w = wa * wb / (m * m) as f64 * det;
                        let ex = exact(s.x, state.time);
                        l1[0] += w * (s.u.x - ex.u.x).abs();
                        l1[1] += w * (s.u.y - ex.u.y).abs();
                        l1[2] += w * (s.p - ex.p).abs();
                        area += w;
                    }
                }
            }
        }
    }
    Ok((0..3).map(|f| (fast.l1[f] - l1[f] / area).abs() / (l1[f] / area)).fold(0.0, f64::max))
}

pub fn criterion_10() -> CriterionResult {
    let name = "oracle equivalences";
    match (fd_jacobian_check(), face_length_check(), l1_refined_check()) {
        (Ok((ej, eg)), Ok(ef), Ok(el)) => result(
            10,
            name,
            ej <= 1e-5 && eg <= 1e-5 && ef <= 1e-6 && el <= 1e-3,
            format!("jacobian vs FD {ej:.2e}, grad u vs FD {eg:.2e} (tol 1e-5); face length vs polyline {ef:.2e} (tol 1e-6); L1 vs refined quadrature {el:.2e} (tol 1e-3)"),
        ),
        (a, b, c) => {
            let e = a.err().or(b.err()).or(c.err()).map(|e| e.to_string()).unwrap_or_default();
            result(10, name, false, e)
        }
    }
}

pub fn criterion(id: usize) -> Option<CriterionResult> {
    Some(match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(),
        10 => criterion_10(),
        _ => return None,
    })
}

/// Runs every benchmark the suite needs concurrently, filling the caches.
pub fn warm_up() {
    std::thread::scope(|s| {
        s.spawn(|| drop(sedov16()));
        s.spawn(|| drop(sedov32()));
        s.spawn(|| drop(sedov16_first_order()));
        s.spawn(|| drop(noh50()));
        s.spawn(|| drop(gresho16()));
        s.spawn(|| drop(triple_point(ViscosityMode::Rusanov)));
        s.spawn(|| drop(triple_point(ViscosityMode::Mars)));
        s.spawn(|| drop(tgv_convergence_cached()));
    });
}

pub fn run_suite() -> Vec<CriterionResult> {
    warm_up();
    (1..=10).filter_map(criterion).collect()
}
