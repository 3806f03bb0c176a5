//! Total-energy conservation correction and entropy diagnostics.
//!
//! Per element and stage, a uniform correction `r` is added to the limited
//! energy residuals so that the lumped total energy changes only through the
//! element boundary fluxes (and the manufactured source). Summed over the
//! mesh the fluxes telescope to the domain boundary.

use crate::bernstein::{KIN_DOFS, THERMO_DOFS};
use crate::residuals::{ElementResidualSet, SpatialResiduals};
use crate::state::{Discretization, StageState};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction {
    /// Value added to each thermodynamic residual of the element.
    pub r: f64,
    /// `sum_e r_e = N_E r`.
    pub sum_r: f64,
    /// Magnitude of the terms that make up `sum_r`, for relative checks.
    pub scale: f64,
    pub psi_corrected: [f64; THERMO_DOFS],
}

/// Lumped element energy `sum_i C_i |u_i|^2 / 2 + sum_e C_e eps_e`.
pub fn element_energy(disc: &Discretization, cell: usize, u: &[Vec2; KIN_DOFS], eps: &[f64; THERMO_DOFS]) -> f64 {
    let mk = &disc.masses.kin_per_element[cell];
    let me = &disc.masses.thermo_per_element[cell];
    let kin: f64 = (0..KIN_DOFS).map(|i| 0.5 * mk[i] * u[i].norm_squared()).sum();
    let int: f64 = (0..THERMO_DOFS).map(|e| me[e] * eps[e]).sum();
    kin + int
}

/// Conservation correction of one element.
///
/// `u_weight` is the velocity the kinetic-energy change is measured with
/// (`(u(k) + u(k+1)) / 2` for the two-stage scheme), `energy_increment` is
/// `E_K(k) - E_K(0)` in lumped form (zero at the first stage). The boundary
/// flux and source are the stage averages of `stage0` and `stagek`.
pub fn correction_term(
    set: &ElementResidualSet,
    stage0: &SpatialResiduals,
    stagek: &SpatialResiduals,
    u_weight: &[Vec2; KIN_DOFS],
    energy_increment: f64,
    dt: f64,
) -> Correction {
    let flux = 0.5 * (stage0.boundary_flux_energy + stagek.boundary_flux_energy);
    let source = 0.5 * (stage0.source_integral + stagek.source_integral);
    let mut kinetic = 0.0;
    let mut scale =
        flux.abs() + source.abs() + (energy_increment / dt).abs() + 0.5 * (stage0.energy_scale + stagek.energy_scale);
    for i in 0..KIN_DOFS {
        let w = u_weight[i].dot(&set.phi_limited[i]);
        kinetic += w;
        scale += w.abs();
    }
    let internal: f64 = set.psi_limited.iter().sum();
    scale += set.psi_limited.iter().map(|p| p.abs()).sum::<f64>();
    let sum_r = flux - source - kinetic - internal + energy_increment / dt;
    let r = sum_r / THERMO_DOFS as f64;
    Correction { r, sum_r, scale, psi_corrected: std::array::from_fn(|e| set.psi_limited[e] + r) }
}

/// Per-step entropy summary over all elements.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntropyReport {
    pub sum_r: Vec<f64>,
    pub positive_count: usize,
    pub max_sum_r: f64,
    /// `sum_K D_K(active) / sum_K D_K(Rusanov)` of the stage-0 viscosity.
    pub dissipation_ratio: f64,
}

pub fn entropy_diagnostic(corrections: &[Correction], spatial: &[SpatialResiduals]) -> EntropyReport {
    let sum_r: Vec<f64> = corrections.iter().map(|c| c.sum_r).collect();
    let active: f64 = spatial.iter().map(|s| s.dissipation).sum();
    let rusanov: f64 = spatial.iter().map(|s| s.rusanov_dissipation).sum();
    EntropyReport {
        positive_count: sum_r.iter().filter(|&&s| s > 0.0).count(),
        max_sum_r: sum_r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        dissipation_ratio: if rusanov > 0.0 { active / rusanov } else { 0.0 },
        sum_r,
    }
}

/// Global lumped totals of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalTotals {
    pub mass: f64,
    pub momentum: Vec2,
    pub kinetic: f64,
    pub internal: f64,
}

impl GlobalTotals {
    pub fn total(&self) -> f64 {
        self.kinetic + self.internal
    }
}

/// Mass by quadrature on the current geometry; momentum and energies in
/// lumped form.
pub fn global_totals(disc: &Discretization, stage: &StageState) -> crate::Result<GlobalTotals> {
    let m = &disc.masses;
    let mut mass = 0.0;
    for cell in 0..disc.mesh.num_cells() {
        mass += disc.cell_mass(cell, &stage.positions)?;
    }
    let mut momentum = Vec2::zeros();
    let mut kinetic = 0.0;
    for (c, u) in m.kin_global.iter().zip(&stage.velocity) {
        momentum += u * *c;
        kinetic += 0.5 * c * u.norm_squared();
    }
    let internal = m.thermo_global.iter().zip(&stage.eps).map(|(c, e)| c * e).sum();
    Ok(GlobalTotals { mass, momentum, kinetic, internal })
}

/// One row of the conservation report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub totals: GlobalTotals,
    /// Net energy that left the domain so far: boundary flux, minus source,
    /// minus work done by prescribed-velocity boundaries.
    pub boundary_flux_accum: f64,
    pub max_entropy_violation: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConservationLedger {
    pub rows: Vec<LedgerRow>,
}

impl ConservationLedger {
    pub fn push(&mut self, row: LedgerRow) {
        self.rows.push(row);
    }

    /// `max |E(t) - E(0)| / E(0)` of the lumped total energy.
    pub fn energy_drift(&self) -> f64 {
        self.drift(|r| r.totals.total())
    }

    /// Drift of `E + boundary_flux_accum`, constant for the exact scheme.
    pub fn balance_drift(&self) -> f64 {
        self.drift(|r| r.totals.total() + r.boundary_flux_accum)
    }

    pub fn mass_drift(&self) -> f64 {
        self.drift(|r| r.totals.mass)
    }

    fn drift(&self, f: impl Fn(&LedgerRow) -> f64) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        let e0 = f(first);
        self.rows.iter().map(|r| (f(r) - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE)
    }
}
