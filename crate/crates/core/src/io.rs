//! Configuration files, snapshots, error norms and report tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bernstein::{thermo_dof_ref_point, QUAD_POINTS, THERMO_DOFS};
use crate::conservation::ConservationLedger;
use crate::error::{Result, SolverError};
use crate::mesh::jacobian;
use crate::problems::{ExactSolution, ProblemKind};
use crate::residuals::{ShockDirection, ViscosityMode};
use crate::state::{Discretization, StageState};
use crate::timestepper::{RunConfig, TimeOrder};
use crate::Vec2;

pub const CONFIG_KEYS: [&str; 12] = [
    "problem",
    "nx",
    "ny",
    "cfl",
    "t_end",
    "viscosity",
    "shock_dir",
    "output_every",
    "output_dir",
    "dt_max",
    "order",
    "scatter_dofs",
];

/// Splits `key=value` tokens (whitespace or newline separated, `#` starts a
/// comment).
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for token in line.split_whitespace() {
            let (k, v) = token.split_once('=').ok_or_else(|| SolverError::config(token, "expected key=value"))?;
            if !CONFIG_KEYS.contains(&k) {
                return Err(SolverError::config(k, "unknown key"));
            }
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| SolverError::config(key, format!("cannot parse '{v}'")))
}

pub fn parse_viscosity(v: &str) -> Result<ViscosityMode> {
    match v {
        "none" => Ok(ViscosityMode::None),
        "rusanov" => Ok(ViscosityMode::Rusanov),
        "mars" => Ok(ViscosityMode::Mars),
        _ => Err(SolverError::config("viscosity", format!("expected none|rusanov|mars, got '{v}'"))),
    }
}

pub fn parse_shock_dir(v: &str) -> Result<ShockDirection> {
    match v {
        "fluctuation" => Ok(ShockDirection::VelocityFluctuation),
        "radial" => Ok(ShockDirection::Radial),
        _ => Err(SolverError::config("shock_dir", format!("expected fluctuation|radial, got '{v}'"))),
    }
}

/// Builds a run configuration from `key=value` entries; later entries
/// override earlier ones and unspecified keys take the problem defaults.
pub fn build_run_config(entries: &[(String, String)]) -> Result<RunConfig> {
    let problem: ProblemKind = entries
        .iter()
        .rev()
        .find(|(k, _)| k == "problem")
        .ok_or_else(|| SolverError::config("problem", "missing"))?
        .1
        .parse()?;
    let mut cfg = RunConfig::for_problem(problem);
    for (k, v) in entries {
        match k.as_str() {
            "problem" => {}
            "nx" => cfg.nx = parse_value(k, v)?,
            "ny" => cfg.ny = parse_value(k, v)?,
            "cfl" => cfg.cfl = parse_value(k, v)?,
            "t_end" => cfg.t_end = parse_value(k, v)?,
            "viscosity" => cfg.viscosity = parse_viscosity(v)?,
            "shock_dir" => cfg.shock_dir = parse_shock_dir(v)?,
            "output_every" => cfg.output_every = parse_value(k, v)?,
            "output_dir" => cfg.output_dir = Some(PathBuf::from(v)),
            "dt_max" => cfg.dt_max = parse_value(k, v)?,
            "order" => {
                cfg.order = match v.as_str() {
                    "1" | "first" => TimeOrder::First,
                    "2" | "second" => TimeOrder::Second,
                    _ => return Err(SolverError::config(k, format!("expected first|second, got '{v}'"))),
                }
            }
            "scatter_dofs" => cfg.scatter_dofs = parse_value(k, v)?,
            _ => return Err(SolverError::config(k, "unknown key")),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    build_run_config(&parse_config_text(text)?)
}

/// One row of the radial scatter output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub radius: f64,
    pub density: f64,
    pub pressure: f64,
}

/// Cell-averaged view of a state, as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// Cell corner positions.
    pub points: Vec<Vec2>,
    pub cells: Vec<[usize; 4]>,
    pub velocity: Vec<Vec2>,
    pub density: Vec<f64>,
    pub pressure: Vec<f64>,
    pub eps: Vec<f64>,
    pub scatter: Vec<ScatterRow>,
    pub dof_scatter: Vec<ScatterRow>,
}

/// Volume averages of density, pressure and eps, and the centroid, of a cell.
pub fn cell_means(disc: &Discretization, state: &StageState, cell: usize) -> Result<(f64, f64, f64, Vec2)> {
    let re = &disc.re;
    let x0 = disc.mesh.cell_positions(cell, &disc.mesh.initial_positions);
    let mut area = 0.0;
    let (mut m, mut p, mut e) = (0.0, 0.0, 0.0);
    let mut centroid = Vec2::zeros();
    for q in 0..QUAD_POINTS {
        let det0 = jacobian(&x0, &re.kin_grads[q]).determinant();
        let s = disc.eval_with_tables(cell, &re.kin_values[q], &re.kin_grads[q], &re.thermo_values[q], det0, state)?;
        let dv = re.quad_weights[q] * s.det_j;
        area += dv;
        m += s.rho * dv;
        p += s.p * dv;
        e += s.eps * dv;
        centroid += s.x * dv;
    }
    Ok((m / area, p / area, e / area, centroid / area))
}

impl Snapshot {
    pub fn from_state(disc: &Discretization, state: &StageState, origin: Vec2, dof_rows: bool) -> Result<Self> {
        let mesh = &disc.mesh;
        let ncols = 2 * mesh.nx + 1;
        let corner = |g: usize| (g / ncols / 2) * (mesh.nx + 1) + (g % ncols) / 2;
        let mut points = vec![Vec2::zeros(); (mesh.nx + 1) * (mesh.ny + 1)];
        let mut velocity = vec![Vec2::zeros(); points.len()];
        let mut cells = Vec::with_capacity(mesh.num_cells());
        let n = mesh.num_cells();
        let (mut density, mut pressure, mut eps) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let mut scatter = Vec::with_capacity(n);
        let mut dof_scatter = Vec::new();
        for cell in 0..n {
            let kin = &mesh.element_to_kin[cell];
            let quad = [kin[0], kin[2], kin[8], kin[6]];
            for &g in &quad {
                points[corner(g)] = state.positions[g];
                velocity[corner(g)] = state.velocity[g];
            }
            cells.push(quad.map(corner));
            let (rho, p, e, c) = cell_means(disc, state, cell)?;
            density.push(rho);
            pressure.push(p);
            eps.push(e);
            scatter.push(ScatterRow { radius: (c - origin).norm(), density: rho, pressure: p });
            if dof_rows {
                for l in 0..THERMO_DOFS {
                    let s = disc.eval_state_at(cell, thermo_dof_ref_point(l), state)?;
                    dof_scatter.push(ScatterRow { radius: (s.x - origin).norm(), density: s.rho, pressure: s.p });
                }
            }
        }
        Ok(Snapshot { time: state.time, points, cells, velocity, density, pressure, eps, scatter, dof_scatter })
    }

    pub fn to_vtk(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0\nsgh-rd t={:e}\nASCII\nDATASET UNSTRUCTURED_GRID", self.time);
        let _ = writeln!(s, "POINTS {} double", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{:e} {:e} 0", p.x, p.y);
        }
        let _ = writeln!(s, "CELLS {} {}", self.cells.len(), 5 * self.cells.len());
        for c in &self.cells {
            let _ = writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]);
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.cells.len());
        for _ in &self.cells {
            let _ = writeln!(s, "9");
        }
        let _ = writeln!(s, "POINT_DATA {}\nVECTORS velocity double", self.points.len());
        for u in &self.velocity {
            let _ = writeln!(s, "{:e} {:e} 0", u.x, u.y);
        }
        let _ = writeln!(s, "CELL_DATA {}", self.cells.len());
        for (name, data) in [("density", &self.density), ("pressure", &self.pressure), ("eps", &self.eps)] {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in data.iter() {
                let _ = writeln!(s, "{v:e}");
            }
        }
        s
    }

    pub fn from_vtk(text: &str) -> Result<Self> {
        let bad = |m: &str| SolverError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string()));
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| bad("unexpected end of file"));
        let f = |t: &str| t.parse::<f64>().map_err(|_| bad("bad number"));
        let u = |t: &str| t.parse::<usize>().map_err(|_| bad("bad integer"));
        next()?;
        let title = next()?;
        let time = f(title.rsplit("t=").next().unwrap_or(""))?;
        next()?;
        next()?;
        let header_count = |line: &str, key: &str| -> Result<usize> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(&format!("expected {key}")));
            }
            u(it.next().unwrap_or(""))
        };
        let np = header_count(next()?, "POINTS")?;
        let mut points = Vec::with_capacity(np);
        for _ in 0..np {
            let v: Vec<&str> = next()?.split_whitespace().collect();
            points.push(Vec2::new(f(v[0])?, f(v[1])?));
        }
        let nc = header_count(next()?, "CELLS")?;
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let v: Vec<usize> = next()?.split_whitespace().map(u).collect::<Result<_>>()?;
            cells.push([v[1], v[2], v[3], v[4]]);
        }
        header_count(next()?, "CELL_TYPES")?;
        for _ in 0..nc {
            next()?;
        }
        header_count(next()?, "POINT_DATA")?;
        next()?;
        let mut velocity = Vec::with_capacity(np);
        for _ in 0..np {
            let v: Vec<&str> = next()?.split_whitespace().collect();
            velocity.push(Vec2::new(f(v[0])?, f(v[1])?));
        }
        header_count(next()?, "CELL_DATA")?;
        let mut fields = Vec::new();
        for _ in 0..3 {
            next()?;
            next()?;
            let mut data = Vec::with_capacity(nc);
            for _ in 0..nc {
                data.push(f(next()?.trim())?);
            }
            fields.push(data);
        }
        let eps = fields.pop().unwrap_or_default();
        let pressure = fields.pop().unwrap_or_default();
        let density = fields.pop().unwrap_or_default();
        Ok(Snapshot {
            time,
            points,
            cells,
            velocity,
            density,
            pressure,
            eps,
            scatter: Vec::new(),
            dof_scatter: Vec::new(),
        })
    }
}

pub fn scatter_csv(rows: &[ScatterRow]) -> String {
    let mut s = String::from("radius,density,pressure\n");
    for r in rows {
        let _ = writeln!(s, "{:e},{:e},{:e}", r.radius, r.density, r.pressure);
    }
    s
}

/// Path of the scatter file written next to a snapshot.
pub fn scatter_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Writes a legacy-VTK snapshot and its `*.scatter.csv` sibling (plus
/// `*.scatter_dofs.csv` with one row per thermodynamic DOF if requested).
pub fn write_snapshot(
    disc: &Discretization,
    state: &StageState,
    origin: Vec2,
    path: &Path,
    dof_rows: bool,
) -> Result<Snapshot> {
    let snap = Snapshot::from_state(disc, state, origin, dof_rows)?;
    std::fs::write(path, snap.to_vtk())?;
    std::fs::write(scatter_path(path, "scatter"), scatter_csv(&snap.scatter))?;
    if dof_rows {
        std::fs::write(scatter_path(path, "scatter_dofs"), scatter_csv(&snap.dof_scatter))?;
    }
    Ok(snap)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    Snapshot::from_vtk(&std::fs::read_to_string(path)?)
}

/// Error norms of `u_x`, `u_y` and `p`, in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// Normalized by the current domain area.
    pub l1: [f64; 3],
    /// Maximum over quadrature points.
    pub linf: [f64; 3],
}

/// L1 and max-norm errors against a reference solution evaluated at the
/// current physical quadrature points.
pub fn error_norms(disc: &Discretization, state: &StageState, exact: Option<ExactSolution>) -> Result<ErrorNorms> {
    let exact = exact.ok_or_else(|| SolverError::Unsupported("problem has no reference solution".into()))?;
    let re = &disc.re;
    let mut l1 = [0.0; 3];
    let mut linf: [f64; 3] = [0.0; 3];
    let mut area = 0.0;
    for cell in 0..disc.mesh.num_cells() {
        let x0 = disc.mesh.cell_positions(cell, &disc.mesh.initial_positions);
        for q in 0..QUAD_POINTS {
            let det0 = jacobian(&x0, &re.kin_grads[q]).determinant();
            let s =
                disc.eval_with_tables(cell, &re.kin_values[q], &re.kin_grads[q], &re.thermo_values[q], det0, state)?;
            let ex = exact(s.x, state.time);
            let dv = re.quad_weights[q] * s.det_j;
            let err = [(s.u.x - ex.u.x).abs(), (s.u.y - ex.u.y).abs(), (s.p - ex.p).abs()];
            for f in 0..3 {
                l1[f] += err[f] * dv;
                linf[f] = linf[f].max(err[f]);
            }
            area += dv;
        }
    }
    Ok(ErrorNorms { l1: l1.map(|e| e / area), linf })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error: f64,
    /// Rate against the previous row.
    pub rate: Option<f64>,
}

/// `rate_i = log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn convergence_table(rows: &[(f64, f64)]) -> Result<Vec<ConvergenceRow>> {
    if rows.len() < 2 {
        return Err(SolverError::Usage("a convergence table needs at least two rows".into()));
    }
    if rows.windows(2).any(|w| !(w[1].0 < w[0].0)) || rows.iter().any(|r| !(r.0 > 0.0)) {
        return Err(SolverError::Usage("mesh sizes must be positive and decreasing".into()));
    }
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, &(h, error))| {
            let rate = (i > 0).then(|| {
                let (h0, e0) = rows[i - 1];
                if error == 0.0 {
                    f64::INFINITY
                } else {
                    (e0 / error).ln() / (h0 / h).ln()
                }
            });
            ConvergenceRow { h, error, rate }
        })
        .collect())
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("h,error,rate\n");
    for r in rows {
        let rate = match r.rate {
            None => String::new(),
            Some(x) if x.is_infinite() => "inf".into(),
            Some(x) => format!("{x:.6}"),
        };
        let _ = writeln!(s, "{:e},{:e},{rate}", r.h, r.error);
    }
    s
}

pub fn conservation_report(ledger: &ConservationLedger) -> String {
    let mut s = String::from("t,mass,mom_x,mom_y,kinetic,internal,total,boundary_flux_accum,max_entropy_violation\n");
    for r in &ledger.rows {
        let t = &r.totals;
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t,
            t.mass,
            t.momentum.x,
            t.momentum.y,
            t.kinetic,
            t.internal,
            t.total(),
            r.boundary_flux_accum,
            r.max_entropy_violation
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_uniform, ExactState};

    #[test]
    fn config_examples() {
        let cfg = parse_config("problem=sedov nx=16 ny=16 viscosity=mars").unwrap();
        assert_eq!(cfg.problem, ProblemKind::Sedov);
        assert_eq!((cfg.nx, cfg.ny), (16, 16));
        assert_eq!(cfg.viscosity, ViscosityMode::Mars);
        assert_eq!(cfg.t_end, 1.0);
        let err = parse_config("problem=sedov viscosity=foo").unwrap_err();
        assert!(err.to_string().contains("viscosity"));
        assert_eq!(err.exit_code(), 4);
        let err = parse_config("problem=sedov colour=red").unwrap_err();
        assert!(err.to_string().contains("colour"));
        let err = parse_config("problem=sedov nx=abc").unwrap_err();
        assert!(err.to_string().contains("nx"));
        let cfg =
            parse_config("# comment\nproblem=noh\nt_end=0.1 # short\nshock_dir=fluctuation\norder=first").unwrap();
        assert_eq!(cfg.t_end, 0.1);
        assert_eq!(cfg.shock_dir, ShockDirection::VelocityFluctuation);
        assert_eq!(cfg.order, TimeOrder::First);
    }

    #[test]
    fn convergence_examples() {
        let t = convergence_table(&[(0.1, 4e-3), (0.05, 1e-3)]).unwrap();
        assert!((t[1].rate.unwrap() - 2.0).abs() < 1e-12);
        let t = convergence_table(&[(0.1, 1e-3), (0.05, 1e-3)]).unwrap();
        assert_eq!(t[1].rate.unwrap(), 0.0);
        let t = convergence_table(&[(0.1, 8e-3), (0.05, 1e-3)]).unwrap();
        assert!((t[1].rate.unwrap() - 3.0).abs() < 1e-12);
        let t = convergence_table(&[(0.1, 8e-3), (0.05, 0.0)]).unwrap();
        assert!(convergence_csv(&t).contains("inf"));
        assert!(convergence_table(&[(0.1, 1.0)]).is_err());
        assert!(convergence_table(&[(0.05, 1.0), (0.1, 1.0)]).is_err());
    }

    #[test]
    fn norms_of_exact_and_offset_states() {
        let spec = make_uniform(Vec2::new(0.25, 0.0), 1.0, 1.0);
        let init = spec.initialize(3, 3).unwrap();
        let ex: ExactSolution = |_, _| ExactState { rho: 1.0, u: Vec2::new(0.25, 0.0), p: 1.0 };
        let n = error_norms(&init.disc, &init.state, Some(ex)).unwrap();
        assert!(n.l1.iter().all(|&e| e < 1e-15));
        let off: ExactSolution = |_, _| ExactState { rho: 1.0, u: Vec2::new(0.75, 0.0), p: 1.0 };
        let n = error_norms(&init.disc, &init.state, Some(off)).unwrap();
        assert!((n.l1[0] - 0.5).abs() < 1e-14);
        assert!(error_norms(&init.disc, &init.state, None).is_err());
    }
}
