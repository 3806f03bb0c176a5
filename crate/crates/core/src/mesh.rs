//! Moving curvilinear quadrilateral mesh.
//!
//! Geometry is isoparametric: the current position map of a cell is the
//! biquadratic Bernstein combination of its nine kinematic control points,
//! so curved cells are carried by the kinematic DOF positions alone. A
//! "stage geometry" is simply a slice of control-point positions, one per
//! kinematic DOF; the mesh itself only stores connectivity and the frozen
//! Lagrangian (t = 0) positions.

use crate::bernstein::{kin_basis, LocalFace, ReferenceElement, FACE_POINTS, KIN_DOFS, THERMO_DOFS};
use crate::error::{Result, SolverError};
use crate::{Mat2, Vec2};

/// Side of the rectangular initial domain a boundary face lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// x = xmin
    Left,
    /// x = xmax
    Right,
    /// y = ymin
    Bottom,
    /// y = ymax
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }

    /// Velocity component normal to this (initially axis-aligned) side.
    pub fn normal_component(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Cell the normal points out of; for boundary faces, the only cell.
    pub left: usize,
    pub left_face: LocalFace,
    pub right: Option<(usize, LocalFace)>,
    pub side: Option<Side>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

/// Quadrature point on a face: position, quadrature weight times the
/// tangent length, and unit normal pointing out of the face's left cell.
#[derive(Debug, Clone, Copy)]
pub struct FacePoint {
    pub x: Vec2,
    pub measure: f64,
    pub normal: Vec2,
}

#[derive(Debug, Clone, Copy)]
pub struct GeometryPoint {
    pub x: Vec2,
    /// Derivative of the current position with respect to the reference
    /// coordinate: column j is dx/d(xi_j).
    pub jac: Mat2,
    pub det_j: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MeshQuality {
    pub min_det_j: f64,
    pub min_det_cell: usize,
    pub min_edge_length: f64,
}

#[derive(Debug, Clone)]
pub struct MovingMesh {
    pub nx: usize,
    pub ny: usize,
    pub bbox: [f64; 4],
    /// Lagrangian coordinates: the control-point positions at t = 0.
    pub initial_positions: Vec<Vec2>,
    pub element_to_kin: Vec<[usize; KIN_DOFS]>,
    pub faces: Vec<Face>,
    /// Face index of each local face of each cell.
    pub cell_faces: Vec<[usize; 4]>,
    /// For each kinematic DOF, the boundary sides it lies on.
    pub kin_sides: Vec<[bool; 4]>,
}

impl MovingMesh {
    pub fn build_cartesian(nx: usize, ny: usize, bbox: [f64; 4]) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(SolverError::config("nx/ny", "mesh sizes must be positive"));
        }
        let [xmin, ymin, xmax, ymax] = bbox;
        if !(xmax > xmin && ymax > ymin) || bbox.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::config("bbox", format!("degenerate box {bbox:?}")));
        }
        let ncols = 2 * nx + 1;
        let nrows = 2 * ny + 1;
        let hx = (xmax - xmin) / nx as f64;
        let hy = (ymax - ymin) / ny as f64;

        let mut initial_positions = Vec::with_capacity(ncols * nrows);
        let mut kin_sides = Vec::with_capacity(ncols * nrows);
        for j in 0..nrows {
            for i in 0..ncols {
                // Pin the last row/column to the box so boundaries are exact.
                let x = if i == ncols - 1 { xmax } else { xmin + 0.5 * hx * i as f64 };
                let y = if j == nrows - 1 { ymax } else { ymin + 0.5 * hy * j as f64 };
                initial_positions.push(Vec2::new(x, y));
                kin_sides.push([i == 0, i == ncols - 1, j == 0, j == nrows - 1]);
            }
        }

        let cell = |ex: usize, ey: usize| ey * nx + ex;
        let mut element_to_kin = Vec::with_capacity(nx * ny);
        for ey in 0..ny {
            for ex in 0..nx {
                let mut dofs = [0; KIN_DOFS];
                for b in 0..3 {
                    for a in 0..3 {
                        dofs[3 * b + a] = (2 * ey + b) * ncols + 2 * ex + a;
                    }
                }
                element_to_kin.push(dofs);
            }
        }

        let mut faces = Vec::new();
        let mut cell_faces = vec![[usize::MAX; 4]; nx * ny];
        let mut push = |faces: &mut Vec<Face>, f: Face| {
            let id = faces.len();
            cell_faces[f.left][f.left_face.index()] = id;
            if let Some((r, rf)) = f.right {
                cell_faces[r][rf.index()] = id;
            }
            faces.push(f);
        };
        for ey in 0..ny {
            for ex in 0..nx {
                if ex + 1 < nx {
                    push(
                        &mut faces,
                        Face {
                            left: cell(ex, ey),
                            left_face: LocalFace::Right,
                            right: Some((cell(ex + 1, ey), LocalFace::Left)),
                            side: None,
                        },
                    );
                }
                if ey + 1 < ny {
                    push(
                        &mut faces,
                        Face {
                            left: cell(ex, ey),
                            left_face: LocalFace::Top,
                            right: Some((cell(ex, ey + 1), LocalFace::Bottom)),
                            side: None,
                        },
                    );
                }
            }
        }
        for ey in 0..ny {
            for (ex, lf, side) in [(0, LocalFace::Left, Side::Left), (nx - 1, LocalFace::Right, Side::Right)] {
                push(&mut faces, Face { left: cell(ex, ey), left_face: lf, right: None, side: Some(side) });
            }
        }
        for ex in 0..nx {
            for (ey, lf, side) in [(0, LocalFace::Bottom, Side::Bottom), (ny - 1, LocalFace::Top, Side::Top)] {
                push(&mut faces, Face { left: cell(ex, ey), left_face: lf, right: None, side: Some(side) });
            }
        }

        Ok(MovingMesh { nx, ny, bbox, initial_positions, element_to_kin, faces, cell_faces, kin_sides })
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_kin_dofs(&self) -> usize {
        self.initial_positions.len()
    }

    pub fn num_thermo_dofs(&self) -> usize {
        THERMO_DOFS * self.num_cells()
    }

    /// Thermodynamic DOFs are cell-local and numbered cell by cell.
    pub fn element_to_thermo(&self, cell: usize) -> [usize; THERMO_DOFS] {
        let base = THERMO_DOFS * cell;
        [base, base + 1, base + 2, base + 3]
    }

    pub fn cell_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.nx + ex
    }

    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_positions(&self, cell: usize, positions: &[Vec2]) -> [Vec2; KIN_DOFS] {
        let dofs = &self.element_to_kin[cell];
        std::array::from_fn(|l| positions[dofs[l]])
    }

    pub fn geometry_at(&self, cell: usize, ref_point: [f64; 2], positions: &[Vec2]) -> GeometryPoint {
        let xs = self.cell_positions(cell, positions);
        let (v, g) = kin_basis(ref_point);
        map_point(&xs, &v, &g)
    }

    /// Face quadrature on the given stage geometry.
    pub fn face_quadrature(
        &self,
        face: usize,
        positions: &[Vec2],
        re: &ReferenceElement,
    ) -> Result<[FacePoint; FACE_POINTS]> {
        let f = &self.faces[face];
        let xs = self.cell_positions(f.left, positions);
        face_points(&xs, f.left_face, re)
    }

    /// Minimum det J over every cell quadrature point, and the minimum
    /// corner-to-corner edge chord.
    pub fn mesh_quality(&self, positions: &[Vec2], re: &ReferenceElement) -> MeshQuality {
        let mut q = MeshQuality { min_det_j: f64::INFINITY, min_det_cell: 0, min_edge_length: f64::INFINITY };
        for cell in 0..self.num_cells() {
            let xs = self.cell_positions(cell, positions);
            let d = min_det_j(&xs, re);
            if d < q.min_det_j || d.is_nan() {
                q.min_det_j = d;
                q.min_det_cell = cell;
            }
            q.min_edge_length = q.min_edge_length.min(min_edge_length(&xs));
        }
        q
    }

    /// Area of each cell on the given geometry.
    pub fn cell_area(&self, cell: usize, positions: &[Vec2], re: &ReferenceElement) -> f64 {
        let xs = self.cell_positions(cell, positions);
        (0..re.quad_weights.len()).map(|q| re.quad_weights[q] * jacobian(&xs, &re.kin_grads[q]).determinant()).sum()
    }
}

pub(crate) fn jacobian(xs: &[Vec2; KIN_DOFS], grads: &[Vec2; KIN_DOFS]) -> Mat2 {
    let mut j = Mat2::zeros();
    for l in 0..KIN_DOFS {
        j += xs[l] * grads[l].transpose();
    }
    j
}

pub(crate) fn map_point(xs: &[Vec2; KIN_DOFS], values: &[f64; KIN_DOFS], grads: &[Vec2; KIN_DOFS]) -> GeometryPoint {
    let mut x = Vec2::zeros();
    for l in 0..KIN_DOFS {
        x += xs[l] * values[l];
    }
    let jac = jacobian(xs, grads);
    GeometryPoint { x, jac, det_j: jac.determinant() }
}

pub(crate) fn min_det_j(xs: &[Vec2; KIN_DOFS], re: &ReferenceElement) -> f64 {
    re.kin_grads.iter().map(|g| jacobian(xs, g).determinant()).fold(f64::INFINITY, |a, b| {
        if b.is_nan() {
            f64::NAN
        } else {
            a.min(b)
        }
    })
}

/// Shortest of the four corner-to-corner chords of a cell.
pub(crate) fn min_edge_length(xs: &[Vec2; KIN_DOFS]) -> f64 {
    LocalFace::ALL
        .iter()
        .map(|f| {
            let [a, b] = f.corner_dofs();
            (xs[b] - xs[a]).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn face_points(
    xs: &[Vec2; KIN_DOFS],
    face: LocalFace,
    re: &ReferenceElement,
) -> Result<[FacePoint; FACE_POINTS]> {
    let fi = face.index();
    let rt = face.ref_tangent();
    let rt = Vec2::new(rt[0], rt[1]);
    let scale = xs.iter().map(|x| x.norm()).fold(1.0, f64::max);
    let mut out = [FacePoint { x: Vec2::zeros(), measure: 0.0, normal: Vec2::zeros() }; FACE_POINTS];
    for k in 0..FACE_POINTS {
        let g = map_point(xs, &re.face_kin_values[fi][k], &re.face_kin_grads[fi][k]);
        let tangent = g.jac * rt;
        let len = tangent.norm();
        if !(len > 1e-14 * scale) {
            return Err(SolverError::Geometry(format!("zero-length face (tangent {len:e}) on local face {face:?}")));
        }
        let normal = face.orientation() * Vec2::new(tangent.y, -tangent.x) / len;
        out[k] = FacePoint { x: g.x, measure: re.face_weights[k] * len, normal };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn perturbed(mesh: &MovingMesh, amp: f64, seed: u64) -> Vec<Vec2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        mesh.initial_positions
            .iter()
            .map(|p| p + Vec2::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)))
            .collect()
    }

    #[test]
    fn counts() {
        let m = MovingMesh::build_cartesian(1, 1, [0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!((m.num_cells(), m.num_kin_dofs(), m.num_thermo_dofs()), (1, 9, 4));
        let m = MovingMesh::build_cartesian(16, 16, [0.0, 0.0, 1.2, 1.2]).unwrap();
        assert_eq!(m.num_cells(), 256);
        assert_eq!(m.num_kin_dofs(), 33 * 33);
        assert!(MovingMesh::build_cartesian(0, 3, [0.0, 0.0, 1.0, 1.0]).is_err());
        assert!(MovingMesh::build_cartesian(2, 3, [0.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn shared_edge_has_three_common_dofs() {
        let m = MovingMesh::build_cartesian(2, 1, [0.0, 0.0, 2.0, 1.0]).unwrap();
        let a = m.element_to_kin[0];
        let b = m.element_to_kin[1];
        let common = a.iter().filter(|d| b.contains(d)).count();
        assert_eq!(common, 3);
        for (la, lb) in LocalFace::Right.kin_dofs().iter().zip(LocalFace::Left.kin_dofs()) {
            assert_eq!(a[*la], b[lb]);
        }
    }

    #[test]
    fn interior_faces_have_opposite_normals() {
        let m = MovingMesh::build_cartesian(3, 2, [0.0, 0.0, 3.0, 2.0]).unwrap();
        let re = ReferenceElement::new();
        let pos = perturbed(&m, 0.1, 3);
        for f in m.faces.iter().filter(|f| !f.is_boundary()) {
            let (r, rf) = f.right.unwrap();
            let lp = face_points(&m.cell_positions(f.left, &pos), f.left_face, &re).unwrap();
            let rp = face_points(&m.cell_positions(r, &pos), rf, &re).unwrap();
            for k in 0..FACE_POINTS {
                assert!((lp[k].x - rp[k].x).norm() < 1e-13);
                assert!((lp[k].normal + rp[k].normal).norm() < 1e-13);
                assert!((lp[k].measure - rp[k].measure).abs() < 1e-13);
            }
        }
        // every cell face slot is filled
        assert!(m.cell_faces.iter().flatten().all(|&f| f < m.faces.len()));
        assert_eq!(m.faces.iter().filter(|f| f.is_boundary()).count(), 2 * (3 + 2));
    }

    #[test]
    fn undeformed_geometry() {
        let m = MovingMesh::build_cartesian(4, 4, [0.0, 0.0, 0.4, 0.4]).unwrap();
        let g = m.geometry_at(5, [0.3, 0.7], &m.initial_positions);
        assert!((g.det_j - 0.01).abs() < 1e-15);
        let shift = Vec2::new(3.0, -1.0);
        let moved: Vec<_> = m.initial_positions.iter().map(|p| p + shift).collect();
        let g2 = m.geometry_at(5, [0.3, 0.7], &moved);
        assert!((g2.jac - g.jac).norm() < 1e-14);
        assert!((g2.x - g.x - shift).norm() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = MovingMesh::build_cartesian(1, 1, [0.0, 0.0, 1.0, 1.0]).unwrap();
        for seed in 0..20 {
            let pos = perturbed(&m, 0.15, seed);
            let p = [0.23 + 0.02 * seed as f64, 0.61];
            let g = m.geometry_at(0, p, &pos);
            let h = 1e-6;
            for dir in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[dir] += h;
                pm[dir] -= h;
                let fd = (m.geometry_at(0, pp, &pos).x - m.geometry_at(0, pm, &pos).x) / (2.0 * h);
                let col = g.jac.column(dir).into_owned();
                assert!((fd - col).norm() / col.norm() < 1e-5);
            }
        }
    }

    #[test]
    fn straight_face_measure_and_normal() {
        let m = MovingMesh::build_cartesian(1, 1, [0.0, 0.0, 0.5, 0.5]).unwrap();
        let re = ReferenceElement::new();
        let left = m.cell_faces[0][LocalFace::Left.index()];
        let pts = m.face_quadrature(left, &m.initial_positions, &re).unwrap();
        let len: f64 = pts.iter().map(|p| p.measure).sum();
        assert!((len - 0.5).abs() < 1e-15);
        for p in &pts {
            assert!((p.normal - Vec2::new(-1.0, 0.0)).norm() < 1e-15);
        }
        let mut closed = Vec2::zeros();
        for &f in &m.cell_faces[0] {
            for p in m.face_quadrature(f, &m.initial_positions, &re).unwrap() {
                closed += p.normal * p.measure;
            }
        }
        assert!(closed.norm() < 1e-14);
    }

    #[test]
    fn zero_length_face_is_an_error() {
        let m = MovingMesh::build_cartesian(1, 1, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let re = ReferenceElement::new();
        let mut pos = m.initial_positions.clone();
        for &d in &LocalFace::Bottom.kin_dofs() {
            pos[m.element_to_kin[0][d]] = Vec2::new(0.5, 0.0);
        }
        let bottom = m.cell_faces[0][LocalFace::Bottom.index()];
        assert!(matches!(m.face_quadrature(bottom, &pos, &re), Err(SolverError::Geometry(_))));
    }

    #[test]
    fn curved_edge_length_matches_refined_polyline() {
        let m = MovingMesh::build_cartesian(1, 1, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let re = ReferenceElement::new();
        let mut pos = m.initial_positions.clone();
        // bend the bottom edge into a gentle arc
        pos[m.element_to_kin[0][1]] = Vec2::new(0.5, -0.08);
        let bottom = m.cell_faces[0][LocalFace::Bottom.index()];
        let quad: f64 = m.face_quadrature(bottom, &pos, &re).unwrap().iter().map(|p| p.measure).sum();
        let polyline = |n: usize| -> f64 {
            (0..n)
                .map(|i| {
                    let a = m.geometry_at(0, [i as f64 / n as f64, 0.0], &pos).x;
                    let b = m.geometry_at(0, [(i + 1) as f64 / n as f64, 0.0], &pos).x;
                    (b - a).norm()
                })
                .sum()
        };
        // Richardson-extrapolated chord sums (error ~ n^-2)
        let (l1, l2) = (polyline(4096), polyline(8192));
        let oracle = (4.0 * l2 - l1) / 3.0;
        assert!((quad - oracle).abs() < 1e-6, "{quad} vs {oracle}");
    }

    #[test]
    fn quality_reports() {
        let m = MovingMesh::build_cartesian(10, 10, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let re = ReferenceElement::new();
        let q = m.mesh_quality(&m.initial_positions, &re);
        assert!((q.min_edge_length - 0.1).abs() < 1e-14);
        assert!((q.min_det_j - 0.01).abs() < 1e-15);
        let unit = MovingMesh::build_cartesian(1, 1, [0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((unit.mesh_quality(&unit.initial_positions, &re).min_det_j - 1.0).abs() < 1e-15);
        let mut pos = unit.initial_positions.clone();
        pos[unit.element_to_kin[0][8]] = Vec2::new(-0.5, -0.5);
        assert!(unit.mesh_quality(&pos, &re).min_det_j < 0.0);
    }

    #[test]
    fn c0_continuity_across_faces() {
        let m = MovingMesh::build_cartesian(3, 3, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let pos = perturbed(&m, 0.05, 11);
        for f in m.faces.iter().filter(|f| !f.is_boundary()) {
            let (r, rf) = f.right.unwrap();
            for t in [0.0, 0.2, 0.5, 0.93, 1.0] {
                let a = m.geometry_at(f.left, f.left_face.ref_point(t), &pos).x;
                let b = m.geometry_at(r, rf.ref_point(t), &pos).x;
                assert!((a - b).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn straight_cells_have_closed_boundaries() {
        // affine perturbation keeps faces straight
        let m = MovingMesh::build_cartesian(3, 2, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let re = ReferenceElement::new();
        let a = Mat2::new(1.1, 0.3, -0.2, 0.9);
        let pos: Vec<_> = m.initial_positions.iter().map(|p| a * p).collect();
        for cell in 0..m.num_cells() {
            let mut s = Vec2::zeros();
            for &f in &m.cell_faces[cell] {
                let sign = if m.faces[f].left == cell { 1.0 } else { -1.0 };
                for p in m.face_quadrature(f, &pos, &re).unwrap() {
                    s += sign * p.normal * p.measure;
                }
            }
            assert!(s.norm() < 1e-13);
        }
    }
}
