//! Per-element residuals: Galerkin and total residuals of the momentum and
//! internal-energy equations, Rusanov/MARS artificial viscosity, space-time
//! residuals of the two-stage scheme, and the limited (distributed) residuals.
//!
//! Viscosity only ever enters through the distribution coefficients: every
//! viscosity term sums to zero over an element, so the element totals are
//! viscosity free and the high-order residuals are `beta_i * total`.

use rayon::prelude::*;

use crate::bernstein::{thermo_to_kin_corner, FACE_POINTS, KIN_DOFS, QUAD_POINTS, THERMO_DOFS};
use crate::error::{Result, SolverError};
use crate::mesh::{face_points, jacobian, FacePoint};
use crate::state::{Discretization, StageState};
use crate::Vec2;

/// Guard below which a norm or a sum of viscosity weights is treated as zero.
const VISC_TINY: f64 = 1e-14;
/// Relative guard on the element total used by the distribution coefficients.
const TOTAL_TINY: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViscosityMode {
    None,
    Rusanov,
    Mars,
}

/// How MARS picks the shock direction `e_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShockDirection {
    /// `(u_i - u_mean) / |u_i - u_mean|`
    VelocityFluctuation,
    /// `u_i / |u_i|`, for radially symmetric flows.
    Radial,
}

/// Scalar energy source `s(x)` of a manufactured solution.
pub type EnergySource = fn(Vec2) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct ResidualConfig {
    pub viscosity: ViscosityMode,
    pub shock_dir: ShockDirection,
    pub source: Option<EnergySource>,
}

/// Centered pressure flux at a face point. Boundary faces pass the mirrored
/// interior trace as `p_plus`, which makes the flux equal to `p_minus`.
#[inline]
pub fn pressure_flux(p_minus: f64, p_plus: f64) -> f64 {
    0.5 * (p_minus + p_plus)
}

/// Residuals of one element at one stage, including the viscosity terms.
#[derive(Debug, Clone)]
pub struct SpatialResiduals {
    pub phi_galerkin: [Vec2; KIN_DOFS],
    pub psi_galerkin: [f64; THERMO_DOFS],
    pub phi_total: Vec2,
    pub psi_total: f64,
    /// `oint p_hat (u . n) dsigma` over the element boundary.
    pub boundary_flux_energy: f64,
    /// `int_K s dx` of the manufactured energy source.
    pub source_integral: f64,
    pub alpha_k: f64,
    pub visc_u: [Vec2; KIN_DOFS],
    pub visc_eps: [f64; THERMO_DOFS],
    /// MARS per-DOF weights (Rusanov: `alpha_k` everywhere, none: zeros).
    pub alpha_i: [f64; KIN_DOFS],
    /// `sum_i alpha_i |u_i - u_tilde|^2` for the active viscosity.
    pub dissipation: f64,
    /// `alpha_k sum_i |u_i - u_mean|^2`, the Rusanov reference value.
    pub rusanov_dissipation: f64,
    /// Sum of the magnitudes of the energy-work terms, for relative checks.
    pub energy_scale: f64,
    pub perimeter: f64,
    pub max_rho: f64,
    pub max_c: f64,
}

impl SpatialResiduals {
    pub fn phi_rusanov(&self, i: usize) -> Vec2 {
        self.phi_galerkin[i] + self.visc_u[i]
    }

    pub fn psi_rusanov(&self, i: usize) -> f64 {
        self.psi_galerkin[i] + self.visc_eps[i]
    }
}

struct CellFields {
    xs: [Vec2; KIN_DOFS],
    us: [Vec2; KIN_DOFS],
    es: [f64; THERMO_DOFS],
    rho0: [f64; THERMO_DOFS],
    x0: [Vec2; KIN_DOFS],
    gamma: f64,
}

impl CellFields {
    fn gather(disc: &Discretization, stage: &StageState, cell: usize) -> Self {
        let mesh = &disc.mesh;
        let td = mesh.element_to_thermo(cell);
        CellFields {
            xs: mesh.cell_positions(cell, &stage.positions),
            us: stage.cell_velocity(mesh, cell),
            es: stage.cell_eps(mesh, cell),
            rho0: std::array::from_fn(|l| disc.masses.initial_density_dofs[td[l]]),
            x0: mesh.cell_positions(cell, &mesh.initial_positions),
            gamma: disc.material.gamma(cell),
        }
    }

    /// Pressure trace at a face quadrature point, seen from this cell.
    fn face_pressure(&self, disc: &Discretization, cell: usize, face: usize, k: usize) -> Result<f64> {
        let re = &disc.re;
        let g = &re.face_kin_grads[face][k];
        let det = jacobian(&self.xs, g).determinant();
        if !(det > 0.0) {
            return Err(SolverError::InvertedElement { cell, det_j: det });
        }
        let det0 = jacobian(&self.x0, g).determinant();
        let psi = &re.face_thermo_values[face][k];
        let rho0: f64 = (0..THERMO_DOFS).map(|l| self.rho0[l] * psi[l]).sum();
        let eps: f64 = (0..THERMO_DOFS).map(|l| self.es[l] * psi[l]).sum();
        Ok((self.gamma - 1.0) * rho0 * det0 / det * eps)
    }
}

/// Galerkin, total and viscosity residuals of every element at one stage.
pub fn compute_spatial(
    disc: &Discretization,
    stage: &StageState,
    cfg: &ResidualConfig,
) -> Result<Vec<SpatialResiduals>> {
    (0..disc.mesh.num_cells()).into_par_iter().map(|cell| element_spatial(disc, stage, cfg, cell)).collect()
}

pub fn element_spatial(
    disc: &Discretization,
    stage: &StageState,
    cfg: &ResidualConfig,
    cell: usize,
) -> Result<SpatialResiduals> {
    let re = &disc.re;
    let mesh = &disc.mesh;
    let f = CellFields::gather(disc, stage, cell);

    let mut r = SpatialResiduals {
        phi_galerkin: [Vec2::zeros(); KIN_DOFS],
        psi_galerkin: [0.0; THERMO_DOFS],
        phi_total: Vec2::zeros(),
        psi_total: 0.0,
        boundary_flux_energy: 0.0,
        source_integral: 0.0,
        alpha_k: 0.0,
        visc_u: [Vec2::zeros(); KIN_DOFS],
        visc_eps: [0.0; THERMO_DOFS],
        alpha_i: [0.0; KIN_DOFS],
        dissipation: 0.0,
        rusanov_dissipation: 0.0,
        energy_scale: 0.0,
        perimeter: 0.0,
        max_rho: 0.0,
        max_c: 0.0,
    };
    let mut kin_normals = [Vec2::zeros(); KIN_DOFS];
    let mut thermo_normals = [Vec2::zeros(); THERMO_DOFS];
    let mut max_rho_c: f64 = 0.0;

    for q in 0..QUAD_POINTS {
        let grads = &re.kin_grads[q];
        let jac = jacobian(&f.xs, grads);
        let det = jac.determinant();
        if !(det > 0.0) {
            return Err(SolverError::InvertedElement { cell, det_j: det });
        }
        let jinv_t = jac.try_inverse().ok_or(SolverError::InvertedElement { cell, det_j: det })?.transpose();
        let det0 = jacobian(&f.x0, grads).determinant();
        let phi = &re.kin_values[q];
        let psi = &re.thermo_values[q];
        let rho0: f64 = (0..THERMO_DOFS).map(|l| f.rho0[l] * psi[l]).sum();
        let rho = rho0 * det0 / det;
        let eps: f64 = (0..THERMO_DOFS).map(|l| f.es[l] * psi[l]).sum();
        let p = (f.gamma - 1.0) * rho * eps;
        let c = (f.gamma * p.max(0.0) / rho).sqrt();
        let dv = re.quad_weights[q] * det;

        let mut div_u = 0.0;
        let mut x = Vec2::zeros();
        for l in 0..KIN_DOFS {
            let gx = jinv_t * grads[l];
            div_u += f.us[l].dot(&gx);
            r.energy_scale += (p * f.us[l].dot(&gx) * dv).abs();
            x += f.xs[l] * phi[l];
            r.phi_galerkin[l] -= gx * (p * dv);
            kin_normals[l] += gx * dv;
        }
        for l in 0..THERMO_DOFS {
            thermo_normals[l] += jinv_t * re.thermo_grads[q][l] * dv;
        }
        let s = cfg.source.map_or(0.0, |src| src(x));
        let work = (p * div_u - s) * dv;
        for l in 0..THERMO_DOFS {
            r.psi_galerkin[l] += psi[l] * work;
        }
        r.psi_total += work;
        r.energy_scale += (s * dv).abs();
        r.source_integral += s * dv;
        r.max_rho = r.max_rho.max(rho);
        r.max_c = r.max_c.max(c);
        max_rho_c = max_rho_c.max(rho * c);
    }

    for (lf_idx, &face_id) in mesh.cell_faces[cell].iter().enumerate() {
        let face = &mesh.faces[face_id];
        let owner = face.left;
        let sign = if owner == cell { 1.0 } else { -1.0 };
        let (pts, phat, u_face) = face_values(disc, stage, face_id)?;
        for k in 0..FACE_POINTS {
            let FacePoint { measure, normal, .. } = pts[k];
            let flux = normal * (sign * phat[k] * measure);
            let phi = &re.face_kin_values[lf_idx][k];
            for l in 0..KIN_DOFS {
                r.phi_galerkin[l] += flux * phi[l];
                r.energy_scale += (f.us[l].dot(&flux) * phi[l]).abs();
            }
            r.phi_total += flux;
            r.boundary_flux_energy += u_face[k].dot(&flux);
            r.perimeter += measure;
        }
    }

    r.alpha_k = r.perimeter * max_rho_c;
    let mean_u: Vec2 = f.us.iter().sum::<Vec2>() / KIN_DOFS as f64;
    r.rusanov_dissipation = r.alpha_k * f.us.iter().map(|u| (u - mean_u).norm_squared()).sum::<f64>();

    let mut visc_eps_scale = 0.0;
    match cfg.viscosity {
        ViscosityMode::None => {}
        ViscosityMode::Rusanov => {
            let mean_e = f.es.iter().sum::<f64>() / THERMO_DOFS as f64;
            for l in 0..KIN_DOFS {
                r.visc_u[l] = (f.us[l] - mean_u) * r.alpha_k;
                r.alpha_i[l] = r.alpha_k;
            }
            for l in 0..THERMO_DOFS {
                r.visc_eps[l] = r.alpha_k * (f.es[l] - mean_e);
                visc_eps_scale += r.alpha_k * f.es[l].abs();
            }
            r.dissipation = r.rusanov_dissipation;
        }
        ViscosityMode::Mars => {
            let s = 0.5 * (f.gamma + 1.0);
            let weight = |u: Vec2, normal: Vec2| -> f64 {
                let du = u - mean_u;
                let dir = match cfg.shock_dir {
                    ShockDirection::VelocityFluctuation => du,
                    ShockDirection::Radial => u,
                };
                let norm = dir.norm();
                if norm < VISC_TINY {
                    return 0.0;
                }
                let impedance = r.max_rho * (r.max_c + s * du.norm());
                impedance * (dir / norm).dot(&normal).abs()
            };
            for l in 0..KIN_DOFS {
                r.alpha_i[l] = weight(f.us[l], kin_normals[l]);
            }
            let alpha_e: [f64; THERMO_DOFS] =
                std::array::from_fn(|l| weight(f.us[thermo_to_kin_corner(l)], thermo_normals[l]));

            let sum_a: f64 = r.alpha_i.iter().sum();
            if sum_a >= VISC_TINY {
                let u_tilde = (0..KIN_DOFS).map(|l| f.us[l] * r.alpha_i[l]).sum::<Vec2>() / sum_a;
                for l in 0..KIN_DOFS {
                    let d = f.us[l] - u_tilde;
                    r.visc_u[l] = d * r.alpha_i[l];
                    r.dissipation += r.alpha_i[l] * d.norm_squared();
                }
            } else {
                r.alpha_i = [0.0; KIN_DOFS];
            }
            let sum_e: f64 = alpha_e.iter().sum();
            if sum_e >= VISC_TINY {
                let e_tilde = (0..THERMO_DOFS).map(|l| f.es[l] * alpha_e[l]).sum::<f64>() / sum_e;
                for l in 0..THERMO_DOFS {
                    r.visc_eps[l] = alpha_e[l] * (f.es[l] - e_tilde);
                    visc_eps_scale += alpha_e[l] * f.es[l].abs();
                }
            }
        }
    }
    r.energy_scale += (0..KIN_DOFS).map(|l| r.alpha_i[l] * f.us[l].norm_squared()).sum::<f64>();
    r.energy_scale += visc_eps_scale;
    Ok(r)
}

/// Face quadrature on the face owner's geometry, centered pressure flux, and
/// the (continuous) velocity trace. Both neighbours call this with the same
/// inputs, so the shared flux is bitwise identical on either side.
fn face_values(
    disc: &Discretization,
    stage: &StageState,
    face_id: usize,
) -> Result<([FacePoint; FACE_POINTS], [f64; FACE_POINTS], [Vec2; FACE_POINTS])> {
    let re = &disc.re;
    let face = &disc.mesh.faces[face_id];
    let left = CellFields::gather(disc, stage, face.left);
    let lf = face.left_face.index();
    let pts = face_points(&left.xs, face.left_face, re)?;
    let right = face.right.map(|(c, rf)| (c, rf.index(), CellFields::gather(disc, stage, c)));
    let mut phat = [0.0; FACE_POINTS];
    let mut u = [Vec2::zeros(); FACE_POINTS];
    for k in 0..FACE_POINTS {
        let pm = left.face_pressure(disc, face.left, lf, k)?;
        let pp = match &right {
            Some((c, rf, fields)) => fields.face_pressure(disc, *c, *rf, k)?,
            None => pm,
        };
        phat[k] = pressure_flux(pm, pp);
        let phi = &re.face_kin_values[lf][k];
        u[k] = (0..KIN_DOFS).map(|l| left.us[l] * phi[l]).sum();
    }
    Ok((pts, phat, u))
}

/// Space-time Rusanov residuals of one element and their totals.
#[derive(Debug, Clone)]
pub struct SpaceTimeResiduals {
    pub phi_st_rus: [Vec2; KIN_DOFS],
    pub psi_st_rus: [f64; THERMO_DOFS],
    pub phi_st_total: Vec2,
    pub psi_st_total: f64,
}

/// Space-time residuals for stage `k`.
///
/// `delta_u`/`delta_eps` are the element DOFs of `u(1) - u(0)` and
/// `eps(1) - eps(0)`; they are ignored for `k = 0`. The time-increment
/// integral uses the frozen consistent element mass, which equals
/// `int_K rho phi_i phi_j dx` on every stage geometry.
#[allow(clippy::too_many_arguments)]
pub fn spacetime_residuals(
    disc: &Discretization,
    cell: usize,
    stage0: &SpatialResiduals,
    stagek: &SpatialResiduals,
    delta_u: &[Vec2; KIN_DOFS],
    delta_eps: &[f64; THERMO_DOFS],
    dt: f64,
    k: usize,
) -> Result<SpaceTimeResiduals> {
    if k > 1 {
        return Err(SolverError::Usage(format!("stage index must be 0 or 1, got {k}")));
    }
    if !(dt > 0.0) {
        return Err(SolverError::Usage(format!("time step must be positive, got {dt}")));
    }
    let mk = &disc.masses.kin_consistent[cell];
    let me = &disc.masses.thermo_consistent[cell];
    let mut out = SpaceTimeResiduals {
        phi_st_rus: [Vec2::zeros(); KIN_DOFS],
        psi_st_rus: [0.0; THERMO_DOFS],
        phi_st_total: Vec2::zeros(),
        psi_st_total: 0.0,
    };
    for i in 0..KIN_DOFS {
        let mut v = 0.5 * (stage0.phi_rusanov(i) + stagek.phi_rusanov(i));
        if k == 1 {
            for j in 0..KIN_DOFS {
                v += delta_u[j] * (mk[i][j] / dt);
            }
        }
        out.phi_st_rus[i] = v;
        out.phi_st_total += v;
    }
    for i in 0..THERMO_DOFS {
        let mut v = 0.5 * (stage0.psi_rusanov(i) + stagek.psi_rusanov(i));
        if k == 1 {
            for j in 0..THERMO_DOFS {
                v += me[i][j] * delta_eps[j] / dt;
            }
        }
        out.psi_st_rus[i] = v;
        out.psi_st_total += v;
    }
    Ok(out)
}

/// Distribution coefficients and limited residuals of one scalar component.
///
/// `beta_i = max(r_i / R, 0) / sum_j max(r_j / R, 0)` with `R = sum_j r_j`;
/// a vanishing total (relative to the residual magnitudes) falls back to a
/// uniform split.
pub fn distribute<const N: usize>(residuals: &[f64; N]) -> ([f64; N], [f64; N]) {
    let total: f64 = residuals.iter().sum();
    let mag: f64 = residuals.iter().map(|r| r.abs()).sum();
    let mut beta = [1.0 / N as f64; N];
    if total.abs() >= TOTAL_TINY * (mag + 1e-300) {
        let pos: [f64; N] = std::array::from_fn(|i| (residuals[i] / total).max(0.0));
        let denom: f64 = pos.iter().sum();
        if denom > 0.0 {
            beta = std::array::from_fn(|i| pos[i] / denom);
        }
    }
    (beta, std::array::from_fn(|i| beta[i] * total))
}

/// Full residual set of one element for one stage.
#[derive(Debug, Clone)]
pub struct ElementResidualSet {
    pub st: SpaceTimeResiduals,
    /// Per-component coefficients of each kinematic DOF.
    pub beta_v: [Vec2; KIN_DOFS],
    pub beta_e: [f64; THERMO_DOFS],
    pub phi_limited: [Vec2; KIN_DOFS],
    pub psi_limited: [f64; THERMO_DOFS],
}

/// Limited residuals `beta_i * total`, computed per velocity component and
/// for the energy.
pub fn distribution_and_limit(st: SpaceTimeResiduals) -> ElementResidualSet {
    let mut beta_v = [Vec2::zeros(); KIN_DOFS];
    let mut phi_limited = [Vec2::zeros(); KIN_DOFS];
    for comp in 0..2 {
        let r: [f64; KIN_DOFS] = std::array::from_fn(|i| st.phi_st_rus[i][comp]);
        let (b, lim) = distribute(&r);
        for i in 0..KIN_DOFS {
            beta_v[i][comp] = b[i];
            phi_limited[i][comp] = lim[i];
        }
    }
    let (beta_e, psi_limited) = distribute(&st.psi_st_rus);
    ElementResidualSet { st, beta_v, beta_e, phi_limited, psi_limited }
}

/// First-order variant: the Rusanov space-time residuals are used directly.
pub fn first_order_set(st: SpaceTimeResiduals) -> ElementResidualSet {
    ElementResidualSet {
        beta_v: [Vec2::repeat(f64::NAN); KIN_DOFS],
        beta_e: [f64::NAN; THERMO_DOFS],
        phi_limited: st.phi_st_rus,
        psi_limited: st.psi_st_rus,
        st,
    }
}
