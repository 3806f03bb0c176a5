//! Field storage and constitutive evaluation.
//!
//! Density is never stored as a DOF array: it is reconstructed pointwise from
//! the strong mass equation `rho * det J = rho0 * det J0`, with `rho0` held in
//! the thermodynamic space. Cell masses are therefore conserved exactly.

use crate::bernstein::{kin_basis, thermo_basis, ReferenceElement, KIN_DOFS, QUAD_POINTS, THERMO_DOFS};
use crate::error::{Result, SolverError};
use crate::mesh::{jacobian, MovingMesh};
use crate::{Mat2, Vec2};

/// Ideal-gas closure `p = (gamma - 1) rho eps`.
#[derive(Debug, Clone)]
pub struct MaterialModel {
    pub gamma: f64,
    /// Optional per-cell override of `gamma`.
    pub cell_gamma: Option<Vec<f64>>,
}

impl MaterialModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(SolverError::config("gamma", format!("must exceed 1, got {gamma}")));
        }
        Ok(MaterialModel { gamma, cell_gamma: None })
    }

    pub fn with_cell_gamma(mut self, cell_gamma: Vec<f64>) -> Result<Self> {
        if let Some(g) = cell_gamma.iter().find(|g| !(**g > 1.0)) {
            return Err(SolverError::config("gamma", format!("must exceed 1, got {g}")));
        }
        self.cell_gamma = Some(cell_gamma);
        Ok(self)
    }

    #[inline]
    pub fn gamma(&self, cell: usize) -> f64 {
        match &self.cell_gamma {
            Some(g) => g[cell],
            None => self.gamma,
        }
    }
}

/// Pressure and sound speed. Negative pressure is returned as is; only the
/// sound speed clamps it at zero.
#[inline]
pub fn eos_eval(rho: f64, eps: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0) {
        return Err(SolverError::State(format!("nonpositive density {rho:e}")));
    }
    let p = (gamma - 1.0) * rho * eps;
    Ok((p, (gamma * p.max(0.0) / rho).sqrt()))
}

/// Kinematic and thermodynamic DOFs at one stage of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    /// Control-point positions (the stage geometry).
    pub positions: Vec<Vec2>,
    pub velocity: Vec<Vec2>,
    pub eps: Vec<f64>,
    pub time: f64,
}

impl StageState {
    pub fn cell_velocity(&self, mesh: &MovingMesh, cell: usize) -> [Vec2; KIN_DOFS] {
        let d = &mesh.element_to_kin[cell];
        std::array::from_fn(|l| self.velocity[d[l]])
    }

    pub fn cell_eps(&self, mesh: &MovingMesh, cell: usize) -> [f64; THERMO_DOFS] {
        let d = mesh.element_to_thermo(cell);
        std::array::from_fn(|l| self.eps[d[l]])
    }
}

/// Diagonal (lumped) mass matrices plus the element consistent blocks used by
/// the stage-increment terms. All of it is frozen at t = 0.
#[derive(Debug, Clone)]
pub struct LumpedMasses {
    pub kin_global: Vec<f64>,
    pub thermo_global: Vec<f64>,
    pub kin_per_element: Vec<[f64; KIN_DOFS]>,
    pub thermo_per_element: Vec<[f64; THERMO_DOFS]>,
    pub initial_density_dofs: Vec<f64>,
    pub kin_consistent: Vec<[[f64; KIN_DOFS]; KIN_DOFS]>,
    pub thermo_consistent: Vec<[[f64; THERMO_DOFS]; THERMO_DOFS]>,
}

pub fn init_lumped_masses(mesh: &MovingMesh, re: &ReferenceElement, rho0: &[f64]) -> Result<LumpedMasses> {
    if rho0.len() != mesh.num_thermo_dofs() {
        return Err(SolverError::config("rho0", "initial density has the wrong length"));
    }
    if let Some(r) = rho0.iter().find(|r| !(**r > 0.0)) {
        return Err(SolverError::config("rho0", format!("initial density must be positive, got {r}")));
    }
    let n = mesh.num_cells();
    let mut m = LumpedMasses {
        kin_global: vec![0.0; mesh.num_kin_dofs()],
        thermo_global: vec![0.0; mesh.num_thermo_dofs()],
        kin_per_element: vec![[0.0; KIN_DOFS]; n],
        thermo_per_element: vec![[0.0; THERMO_DOFS]; n],
        initial_density_dofs: rho0.to_vec(),
        kin_consistent: vec![[[0.0; KIN_DOFS]; KIN_DOFS]; n],
        thermo_consistent: vec![[[0.0; THERMO_DOFS]; THERMO_DOFS]; n],
    };
    for cell in 0..n {
        let xs = mesh.cell_positions(cell, &mesh.initial_positions);
        let td = mesh.element_to_thermo(cell);
        for q in 0..QUAD_POINTS {
            let det0 = jacobian(&xs, &re.kin_grads[q]).determinant();
            if !(det0 > 0.0) {
                return Err(SolverError::InvertedElement { cell, det_j: det0 });
            }
            let psi = &re.thermo_values[q];
            let rho: f64 = (0..THERMO_DOFS).map(|l| rho0[td[l]] * psi[l]).sum();
            let dm = re.quad_weights[q] * rho * det0;
            let phi = &re.kin_values[q];
            for i in 0..KIN_DOFS {
                m.kin_per_element[cell][i] += dm * phi[i];
                for j in 0..KIN_DOFS {
                    m.kin_consistent[cell][i][j] += dm * phi[i] * phi[j];
                }
            }
            for i in 0..THERMO_DOFS {
                m.thermo_per_element[cell][i] += dm * psi[i];
                for j in 0..THERMO_DOFS {
                    m.thermo_consistent[cell][i][j] += dm * psi[i] * psi[j];
                }
            }
        }
        for (l, &g) in mesh.element_to_kin[cell].iter().enumerate() {
            m.kin_global[g] += m.kin_per_element[cell][l];
        }
        for (l, &g) in td.iter().enumerate() {
            m.thermo_global[g] += m.thermo_per_element[cell][l];
        }
    }
    if let Some(c) = m.kin_global.iter().chain(&m.thermo_global).find(|c| !(**c > 0.0)) {
        return Err(SolverError::config("masses", format!("nonpositive lumped mass {c:e}")));
    }
    Ok(m)
}

/// Everything frozen after initialization: reference element, connectivity,
/// material, masses.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub re: ReferenceElement,
    pub mesh: MovingMesh,
    pub material: MaterialModel,
    pub masses: LumpedMasses,
}

/// Pointwise state on a cell.
#[derive(Debug, Clone, Copy)]
pub struct PointState {
    pub x: Vec2,
    pub u: Vec2,
    /// `grad_u[(a, b)] = d u_a / d x_b`
    pub grad_u: Mat2,
    pub eps: f64,
    pub rho: f64,
    pub p: f64,
    pub c: f64,
    pub det_j: f64,
}

impl Discretization {
    pub fn new(mesh: MovingMesh, material: MaterialModel, rho0: &[f64]) -> Result<Self> {
        let re = ReferenceElement::new();
        let masses = init_lumped_masses(&mesh, &re, rho0)?;
        Ok(Discretization { re, mesh, material, masses })
    }

    /// `rho0_h(X) det J0 / det J` at a reference point of `cell`.
    pub fn density_at(&self, cell: usize, ref_point: [f64; 2], positions: &[Vec2]) -> Result<f64> {
        let (_, g) = kin_basis(ref_point);
        let (psi, _) = thermo_basis(ref_point);
        let det0 = jacobian(&self.mesh.cell_positions(cell, &self.mesh.initial_positions), &g).determinant();
        let det = jacobian(&self.mesh.cell_positions(cell, positions), &g).determinant();
        self.density_from(cell, &psi, det0, det)
    }

    #[inline]
    pub(crate) fn density_from(&self, cell: usize, psi: &[f64; THERMO_DOFS], det0: f64, det: f64) -> Result<f64> {
        if !(det > 0.0) {
            return Err(SolverError::InvertedElement { cell, det_j: det });
        }
        let td = self.mesh.element_to_thermo(cell);
        let rho0: f64 = (0..THERMO_DOFS).map(|l| self.masses.initial_density_dofs[td[l]] * psi[l]).sum();
        Ok(rho0 * det0 / det)
    }

    pub fn eval_state_at(&self, cell: usize, ref_point: [f64; 2], stage: &StageState) -> Result<PointState> {
        let (v, g) = kin_basis(ref_point);
        let (psi, _) = thermo_basis(ref_point);
        let x0 = self.mesh.cell_positions(cell, &self.mesh.initial_positions);
        let det0 = jacobian(&x0, &g).determinant();
        self.eval_with_tables(cell, &v, &g, &psi, det0, stage)
    }

    pub(crate) fn eval_with_tables(
        &self,
        cell: usize,
        phi: &[f64; KIN_DOFS],
        grads: &[Vec2; KIN_DOFS],
        psi: &[f64; THERMO_DOFS],
        det0: f64,
        stage: &StageState,
    ) -> Result<PointState> {
        let xs = self.mesh.cell_positions(cell, &stage.positions);
        let us = stage.cell_velocity(&self.mesh, cell);
        let es = stage.cell_eps(&self.mesh, cell);
        let jac = jacobian(&xs, grads);
        let det = jac.determinant();
        let rho = self.density_from(cell, psi, det0, det)?;
        let jinv = jac.try_inverse().ok_or(SolverError::InvertedElement { cell, det_j: det })?;
        let mut x = Vec2::zeros();
        let mut u = Vec2::zeros();
        let mut du_dxi = Mat2::zeros();
        for l in 0..KIN_DOFS {
            x += xs[l] * phi[l];
            u += us[l] * phi[l];
            du_dxi += us[l] * grads[l].transpose();
        }
        let eps: f64 = (0..THERMO_DOFS).map(|l| es[l] * psi[l]).sum();
        let (p, c) = eos_eval(rho, eps, self.material.gamma(cell))?;
        Ok(PointState { x, u, grad_u: du_dxi * jinv, eps, rho, p, c, det_j: det })
    }

    /// Cell mass `int_K rho dx` by quadrature on the given geometry.
    pub fn cell_mass(&self, cell: usize, positions: &[Vec2]) -> Result<f64> {
        let re = &self.re;
        let x0 = self.mesh.cell_positions(cell, &self.mesh.initial_positions);
        let xs = self.mesh.cell_positions(cell, positions);
        let mut m = 0.0;
        for q in 0..QUAD_POINTS {
            let det0 = jacobian(&x0, &re.kin_grads[q]).determinant();
            let det = jacobian(&xs, &re.kin_grads[q]).determinant();
            m += re.quad_weights[q] * self.density_from(cell, &re.thermo_values[q], det0, det)? * det;
        }
        Ok(m)
    }
}
