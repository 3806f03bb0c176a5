#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgh_rd::bernstein::{KIN_DOFS, QUAD_POINTS};
use sgh_rd::conservation::correction_term;
use sgh_rd::mesh::MovingMesh;
use sgh_rd::problems::make_uniform;
use sgh_rd::residuals::{
    compute_spatial, distribution_and_limit, first_order_set, spacetime_residuals, ResidualConfig, ShockDirection,
    ViscosityMode,
};
use sgh_rd::state::{Discretization, MaterialModel, StageState};
use sgh_rd::timestepper::{Solver, TimeOrder};
use sgh_rd::Vec2;

const N: usize = 3;

fn disc(seed: u64) -> Discretization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = MovingMesh::build_cartesian(N, N, [0.0, 0.0, 1.0, 1.0]).unwrap();
    let rho0: Vec<f64> = (0..mesh.num_thermo_dofs()).map(|_| rng.gen_range(0.5..2.0)).collect();
    Discretization::new(mesh, MaterialModel::new(1.4).unwrap(), &rho0).unwrap()
}

/// Random state on a geometry perturbed by at most `amp` cell sizes.
fn random_state(d: &Discretization, seed: u64, amp: f64) -> StageState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / N as f64;
    StageState {
        positions: d
            .mesh
            .initial_positions
            .iter()
            .map(|p| p + Vec2::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)) * h)
            .collect(),
        velocity: (0..d.mesh.num_kin_dofs())
            .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
        eps: (0..d.mesh.num_thermo_dofs()).map(|_| rng.gen_range(0.1..3.0)).collect(),
        time: 0.0,
    }
}

fn cfg(viscosity: ViscosityMode) -> ResidualConfig {
    ResidualConfig { viscosity, shock_dir: ShockDirection::VelocityFluctuation, source: None }
}

fn mode(i: u8) -> ViscosityMode {
    [ViscosityMode::None, ViscosityMode::Rusanov, ViscosityMode::Mars][i as usize % 3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cell_mass_is_invariant_under_deformation(seed in any::<u64>(), amp in 0.0f64..0.1) {
        let d = disc(seed);
        let s = random_state(&d, seed ^ 1, amp);
        for cell in 0..d.mesh.num_cells() {
            let m0 = d.cell_mass(cell, &d.mesh.initial_positions).unwrap();
            let m = d.cell_mass(cell, &s.positions).unwrap();
            prop_assert!((m - m0).abs() <= 1e-12 * m0);
        }
    }

    #[test]
    fn lumped_masses_do_not_depend_on_geometry(seed in any::<u64>(), amp in 0.0f64..0.1) {
        let d = disc(seed);
        let s = random_state(&d, seed ^ 2, amp);
        let mut recomputed = vec![0.0; d.mesh.num_kin_dofs()];
        for cell in 0..d.mesh.num_cells() {
            for q in 0..QUAD_POINTS {
                let pt = d.re.quad_points[q];
                let g = d.mesh.geometry_at(cell, pt, &s.positions);
                let rho = d.density_at(cell, pt, &s.positions).unwrap();
                for l in 0..KIN_DOFS {
                    recomputed[d.mesh.element_to_kin[cell][l]] += d.re.quad_weights[q] * rho * d.re.kin_values[q][l] * g.det_j;
                }
            }
        }
        for (c, r) in d.masses.kin_global.iter().zip(&recomputed) {
            prop_assert!(*c > 0.0);
            prop_assert!((c - r).abs() <= 1e-10 * c);
        }
    }

    #[test]
    fn viscosity_is_zero_sum_and_dissipative(seed in any::<u64>(), m in 0u8..3) {
        let d = disc(seed);
        let s = random_state(&d, seed ^ 3, 0.05);
        for r in compute_spatial(&d, &s, &cfg(mode(m))).unwrap() {
            let vu: Vec2 = r.visc_u.iter().sum();
            let ve: f64 = r.visc_eps.iter().sum();
            let su: f64 = r.visc_u.iter().map(|v| v.norm()).sum::<f64>().max(1.0);
            let se: f64 = r.visc_eps.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!(vu.norm() <= 1e-13 * su);
            prop_assert!(ve.abs() <= 1e-13 * se);
            prop_assert!(r.dissipation >= 0.0);
            let sp: Vec2 = r.phi_galerkin.iter().sum();
            prop_assert!((sp - r.phi_total).norm() <= 1e-12 * r.phi_galerkin.iter().map(|v| v.norm()).sum::<f64>().max(1.0));
        }
    }

    #[test]
    fn limited_residuals_conserve_and_beta_is_bounded(seed in any::<u64>(), m in 0u8..3, dt in 1e-3f64..1e-1) {
        let d = disc(seed);
        let s0 = random_state(&d, seed ^ 4, 0.05);
        let s1 = random_state(&d, seed ^ 5, 0.05);
        let c = cfg(mode(m));
        let sp0 = compute_spatial(&d, &s0, &c).unwrap();
        let sp1 = compute_spatial(&d, &s1, &c).unwrap();
        for cell in 0..d.mesh.num_cells() {
            let u0 = s0.cell_velocity(&d.mesh, cell);
            let u1 = s1.cell_velocity(&d.mesh, cell);
            let e0 = s0.cell_eps(&d.mesh, cell);
            let e1 = s1.cell_eps(&d.mesh, cell);
            let du = std::array::from_fn(|i| u1[i] - u0[i]);
            let de = std::array::from_fn(|i| e1[i] - e0[i]);
            let st = spacetime_residuals(&d, cell, &sp0[cell], &sp1[cell], &du, &de, dt, 1).unwrap();
            let set = distribution_and_limit(st.clone());
            let mag_u: f64 = st.phi_st_rus.iter().map(|v| v.norm()).sum::<f64>().max(1e-300);
            let mag_e: f64 = st.psi_st_rus.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
            let lim: Vec2 = set.phi_limited.iter().sum();
            prop_assert!((lim - st.phi_st_total).norm() <= 1e-12 * mag_u);
            let lim_e: f64 = set.psi_limited.iter().sum();
            prop_assert!((lim_e - st.psi_st_total).abs() <= 1e-12 * mag_e);
            for comp in 0..2 {
                let sum: f64 = set.beta_v.iter().map(|b| b[comp]).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                prop_assert!(set.beta_v.iter().all(|b| (0.0..=1.0).contains(&b[comp])));
            }
            prop_assert!((set.beta_e.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(set.beta_e.iter().all(|b| (0.0..=1.0).contains(b)));
        }
    }

    #[test]
    fn first_order_entropy_identity(seed in any::<u64>(), mars in any::<bool>(), dt in 1e-3f64..1e-1) {
        let d = disc(seed);
        let s = random_state(&d, seed ^ 6, 0.05);
        let c = cfg(if mars { ViscosityMode::Mars } else { ViscosityMode::Rusanov });
        let sp = compute_spatial(&d, &s, &c).unwrap();
        for cell in 0..d.mesh.num_cells() {
            let st = spacetime_residuals(&d, cell, &sp[cell], &sp[cell], &[Vec2::zeros(); KIN_DOFS], &[0.0; 4], dt, 0).unwrap();
            let set = first_order_set(st);
            let u = s.cell_velocity(&d.mesh, cell);
            let corr = correction_term(&set, &sp[cell], &sp[cell], &u, 0.0, dt);
            let oracle = if mars {
                let w: f64 = sp[cell].alpha_i.iter().sum();
                if w > 0.0 {
                    let ut: Vec2 = (0..KIN_DOFS).map(|i| u[i] * sp[cell].alpha_i[i]).sum::<Vec2>() / w;
                    -(0..KIN_DOFS).map(|i| sp[cell].alpha_i[i] * (u[i] - ut).norm_squared()).sum::<f64>()
                } else {
                    0.0
                }
            } else {
                let ub: Vec2 = u.iter().sum::<Vec2>() / KIN_DOFS as f64;
                -sp[cell].alpha_k * u.iter().map(|v| (v - ub).norm_squared()).sum::<f64>()
            };
            prop_assert!((corr.sum_r - oracle).abs() <= 1e-12 * corr.scale, "{} vs {}", corr.sum_r, oracle);
            prop_assert!(corr.sum_r <= 1e-12 * corr.scale);
        }
    }

    #[test]
    fn free_stream_is_preserved(ux in -1.0f64..1.0, uy in -1.0f64..1.0, rho in 0.5f64..2.0, p in 0.1f64..2.0, m in 0u8..3) {
        let u = Vec2::new(ux, uy);
        let spec = make_uniform(u, rho, p);
        let mut s = Solver::from_spec(&spec, 3, 3, cfg(mode(m)), TimeOrder::Second).unwrap();
        let start = s.state.clone();
        let dt = s.compute_dt(0.25, 1.0).unwrap();
        s.advance_step(dt).unwrap();
        for g in 0..start.velocity.len() {
            prop_assert!((s.state.velocity[g] - u).norm() < 1e-12);
            prop_assert!((s.state.positions[g] - start.positions[g] - u * dt).norm() < 1e-12);
        }
        for (e, e0) in s.state.eps.iter().zip(&start.eps) {
            prop_assert!((e - e0).abs() < 1e-12 * e0.abs().max(1.0));
        }
    }
}
