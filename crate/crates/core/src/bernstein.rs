//! Reference-element machinery on the unit square.
//!
//! Both discrete spaces use tensorized one-dimensional Bernstein polynomials:
//! the kinematic space is continuous biquadratic (9 control points per cell),
//! the thermodynamic space is discontinuous bilinear (4 per cell). Bernstein
//! functions are nonnegative on the element and form a partition of unity,
//! which is what makes every lumped mass strictly positive.
//!
//! Local numbering is lexicographic with `xi` fastest: kinematic DOF `(a, b)`
//! has local index `3 * b + a`, thermodynamic DOF `(a, b)` has `2 * b + a`.

use crate::error::{Result, SolverError};
use crate::Vec2;

pub const KIN_DOFS: usize = 9;
pub const THERMO_DOFS: usize = 4;
pub const QUAD_POINTS: usize = 9;
pub const FACE_POINTS: usize = 3;

const DOMAIN_TOL: f64 = 1e-12;

/// Which discrete space a basis belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Kinematic,
    Thermo,
}

impl Space {
    pub fn dofs(self) -> usize {
        match self {
            Space::Kinematic => KIN_DOFS,
            Space::Thermo => THERMO_DOFS,
        }
    }
}

/// Edges of the reference square, counter-clockwise from the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalFace {
    Bottom,
    Right,
    Top,
    Left,
}

impl LocalFace {
    pub const ALL: [LocalFace; 4] = [LocalFace::Bottom, LocalFace::Right, LocalFace::Top, LocalFace::Left];

    pub fn index(self) -> usize {
        match self {
            LocalFace::Bottom => 0,
            LocalFace::Right => 1,
            LocalFace::Top => 2,
            LocalFace::Left => 3,
        }
    }

    /// Reference point at face parameter `t`. Bottom/top faces are
    /// parametrized by `xi`, left/right faces by `eta`, so the two cells
    /// sharing a face see the same parameter at the same physical point.
    pub fn ref_point(self, t: f64) -> [f64; 2] {
        match self {
            LocalFace::Bottom => [t, 0.0],
            LocalFace::Right => [1.0, t],
            LocalFace::Top => [t, 1.0],
            LocalFace::Left => [0.0, t],
        }
    }

    /// Derivative of the reference point with respect to the face parameter.
    pub fn ref_tangent(self) -> [f64; 2] {
        match self {
            LocalFace::Bottom | LocalFace::Top => [1.0, 0.0],
            LocalFace::Right | LocalFace::Left => [0.0, 1.0],
        }
    }

    /// +1 when increasing the face parameter walks the boundary
    /// counter-clockwise, -1 otherwise.
    pub fn orientation(self) -> f64 {
        match self {
            LocalFace::Bottom | LocalFace::Right => 1.0,
            LocalFace::Top | LocalFace::Left => -1.0,
        }
    }

    /// Local kinematic DOFs on this face, ordered by increasing face parameter.
    pub fn kin_dofs(self) -> [usize; 3] {
        match self {
            LocalFace::Bottom => [0, 1, 2],
            LocalFace::Right => [2, 5, 8],
            LocalFace::Top => [6, 7, 8],
            LocalFace::Left => [0, 3, 6],
        }
    }

    /// Local corner kinematic DOFs at the two ends of the face.
    pub fn corner_dofs(self) -> [usize; 2] {
        let d = self.kin_dofs();
        [d[0], d[2]]
    }
}

/// Values and derivatives of the 1D Bernstein polynomials of `degree` (1 or 2).
pub fn bernstein_1d(degree: usize, t: f64) -> ([f64; 3], [f64; 3]) {
    let s = 1.0 - t;
    match degree {
        1 => ([s, t, 0.0], [-1.0, 1.0, 0.0]),
        2 => ([s * s, 2.0 * t * s, t * t], [-2.0 * s, 2.0 - 4.0 * t, 2.0 * t]),
        _ => panic!("unsupported Bernstein degree {degree}"),
    }
}

pub(crate) fn kin_basis(p: [f64; 2]) -> ([f64; KIN_DOFS], [Vec2; KIN_DOFS]) {
    let (bx, dx) = bernstein_1d(2, p[0]);
    let (by, dy) = bernstein_1d(2, p[1]);
    let mut v = [0.0; KIN_DOFS];
    let mut g = [Vec2::zeros(); KIN_DOFS];
    for b in 0..3 {
        for a in 0..3 {
            let l = 3 * b + a;
            v[l] = bx[a] * by[b];
            g[l] = Vec2::new(dx[a] * by[b], bx[a] * dy[b]);
        }
    }
    (v, g)
}

pub(crate) fn thermo_basis(p: [f64; 2]) -> ([f64; THERMO_DOFS], [Vec2; THERMO_DOFS]) {
    let (bx, dx) = bernstein_1d(1, p[0]);
    let (by, dy) = bernstein_1d(1, p[1]);
    let mut v = [0.0; THERMO_DOFS];
    let mut g = [Vec2::zeros(); THERMO_DOFS];
    for b in 0..2 {
        for a in 0..2 {
            let l = 2 * b + a;
            v[l] = bx[a] * by[b];
            g[l] = Vec2::new(dx[a] * by[b], bx[a] * dy[b]);
        }
    }
    (v, g)
}

/// Reference location of a thermodynamic DOF (the cell corners).
pub fn thermo_dof_ref_point(l: usize) -> [f64; 2] {
    [(l % 2) as f64, (l / 2) as f64]
}

/// Reference location of a kinematic control point.
pub fn kin_dof_ref_point(l: usize) -> [f64; 2] {
    [0.5 * (l % 3) as f64, 0.5 * (l / 3) as f64]
}

/// Kinematic local DOF sitting at the same corner as thermodynamic DOF `l`.
pub fn thermo_to_kin_corner(l: usize) -> usize {
    [0, 2, 6, 8][l]
}

/// Basis values and reference gradients at a single point.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub ref_gradients: Vec<Vec2>,
}

pub fn eval_basis(space: Space, point: [f64; 2]) -> Result<BasisEval> {
    let inside = |c: f64| (-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&c);
    if !(inside(point[0]) && inside(point[1])) {
        return Err(SolverError::Domain(point[0], point[1]));
    }
    Ok(match space {
        Space::Kinematic => {
            let (v, g) = kin_basis(point);
            BasisEval { values: v.to_vec(), ref_gradients: g.to_vec() }
        }
        Space::Thermo => {
            let (v, g) = thermo_basis(point);
            BasisEval { values: v.to_vec(), ref_gradients: g.to_vec() }
        }
    })
}

/// Three-point Gauss-Legendre rule mapped to [0, 1].
pub fn gauss3_unit() -> ([f64; 3], [f64; 3]) {
    let d = 0.5 * (0.6f64).sqrt();
    ([0.5 - d, 0.5, 0.5 + d], [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Companion rule on a reference face, in the face parameter.
    pub face_points: Vec<f64>,
    pub face_weights: Vec<f64>,
}

/// 3x3 tensor Gauss rule on the unit square plus the 3-point face rule.
pub fn quadrature_rule() -> QuadratureRule {
    let (x, w) = gauss3_unit();
    let mut points = Vec::with_capacity(QUAD_POINTS);
    let mut weights = Vec::with_capacity(QUAD_POINTS);
    for j in 0..3 {
        for i in 0..3 {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    QuadratureRule { points, weights, face_points: x.to_vec(), face_weights: w.to_vec() }
}

/// Precomputed basis tables at the cell and face quadrature points.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub kinematic_degree: usize,
    pub thermo_degree: usize,
    pub quad_points: [[f64; 2]; QUAD_POINTS],
    pub quad_weights: [f64; QUAD_POINTS],
    pub face_params: [f64; FACE_POINTS],
    pub face_weights: [f64; FACE_POINTS],
    /// `[qp][dof]`
    pub kin_values: [[f64; KIN_DOFS]; QUAD_POINTS],
    pub kin_grads: [[Vec2; KIN_DOFS]; QUAD_POINTS],
    pub thermo_values: [[f64; THERMO_DOFS]; QUAD_POINTS],
    pub thermo_grads: [[Vec2; THERMO_DOFS]; QUAD_POINTS],
    /// `[local face][face point][dof]`
    pub face_kin_values: [[[f64; KIN_DOFS]; FACE_POINTS]; 4],
    pub face_kin_grads: [[[Vec2; KIN_DOFS]; FACE_POINTS]; 4],
    pub face_thermo_values: [[[f64; THERMO_DOFS]; FACE_POINTS]; 4],
}

impl Default for ReferenceElement {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceElement {
    pub fn new() -> Self {
        let rule = quadrature_rule();
        let mut quad_points = [[0.0; 2]; QUAD_POINTS];
        let mut quad_weights = [0.0; QUAD_POINTS];
        let mut kin_values = [[0.0; KIN_DOFS]; QUAD_POINTS];
        let mut kin_grads = [[Vec2::zeros(); KIN_DOFS]; QUAD_POINTS];
        let mut thermo_values = [[0.0; THERMO_DOFS]; QUAD_POINTS];
        let mut thermo_grads = [[Vec2::zeros(); THERMO_DOFS]; QUAD_POINTS];
        for q in 0..QUAD_POINTS {
            quad_points[q] = rule.points[q];
            quad_weights[q] = rule.weights[q];
            (kin_values[q], kin_grads[q]) = kin_basis(rule.points[q]);
            (thermo_values[q], thermo_grads[q]) = thermo_basis(rule.points[q]);
        }
        let mut face_params = [0.0; FACE_POINTS];
        let mut face_weights = [0.0; FACE_POINTS];
        face_params.copy_from_slice(&rule.face_points);
        face_weights.copy_from_slice(&rule.face_weights);

        let mut face_kin_values = [[[0.0; KIN_DOFS]; FACE_POINTS]; 4];
        let mut face_kin_grads = [[[Vec2::zeros(); KIN_DOFS]; FACE_POINTS]; 4];
        let mut face_thermo_values = [[[0.0; THERMO_DOFS]; FACE_POINTS]; 4];
        for face in LocalFace::ALL {
            let f = face.index();
            for (k, &t) in face_params.iter().enumerate() {
                let p = face.ref_point(t);
                (face_kin_values[f][k], face_kin_grads[f][k]) = kin_basis(p);
                face_thermo_values[f][k] = thermo_basis(p).0;
            }
        }

        ReferenceElement {
            kinematic_degree: 2,
            thermo_degree: 1,
            quad_points,
            quad_weights,
            face_params,
            face_weights,
            kin_values,
            kin_grads,
            thermo_values,
            thermo_grads,
            face_kin_values,
            face_kin_grads,
            face_thermo_values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn quadratic_factor_at_midpoint() {
        let (v, _) = bernstein_1d(2, 0.5);
        assert_eq!(&v, &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn corner_interpolation() {
        let e = eval_basis(Space::Kinematic, [0.0, 0.0]).unwrap();
        assert_eq!(e.values[0], 1.0);
        assert!(e.values[1..].iter().all(|&v| v == 0.0));
        let e = eval_basis(Space::Thermo, [1.0, 1.0]).unwrap();
        assert_eq!(e.values, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn partition_of_unity_at_fixed_point() {
        let e = eval_basis(Space::Kinematic, [0.37, 0.81]).unwrap();
        assert_eq!(e.values.len(), 9);
        assert!((e.values.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn outside_point_is_rejected() {
        assert!(matches!(eval_basis(Space::Thermo, [1.1, 0.5]), Err(SolverError::Domain(..))));
        assert!(eval_basis(Space::Thermo, [1.0 + 1e-13, -1e-13]).is_ok());
    }

    #[test]
    fn gauss_rule_exactness() {
        let (x, w) = gauss3_unit();
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert_relative_eq!(int, 1.0 / 3.0, epsilon = 1e-15);
        let rule = quadrature_rule();
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let int: f64 = rule.points.iter().zip(&rule.weights).map(|(p, w)| w * p[0].powi(2) * p[1].powi(3)).sum();
        assert!((int - 1.0 / 12.0).abs() < 1e-14);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        // degree 5 in each direction
        let int: f64 = rule.points.iter().zip(&rule.weights).map(|(p, w)| w * p[0].powi(5) * p[1].powi(5)).sum();
        assert!((int - 1.0 / 36.0).abs() < 1e-14);
    }

    #[test]
    fn face_tables_match_pointwise_evaluation() {
        let re = ReferenceElement::new();
        for face in LocalFace::ALL {
            for (k, &t) in re.face_params.iter().enumerate() {
                let (v, _) = kin_basis(face.ref_point(t));
                assert_eq!(v, re.face_kin_values[face.index()][k]);
                // only the three face DOFs are active on the face
                let on_face: f64 = face.kin_dofs().iter().map(|&l| v[l]).sum();
                assert!((on_face - 1.0).abs() < 1e-15);
            }
        }
    }

    fn check_fd(space: Space, p: [f64; 2]) {
        let h = 1e-6;
        let e = eval_basis(space, p).unwrap();
        for dir in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[dir] += h;
            pm[dir] -= h;
            let (vp, vm) = match space {
                Space::Kinematic => (kin_basis(pp).0.to_vec(), kin_basis(pm).0.to_vec()),
                Space::Thermo => (thermo_basis(pp).0.to_vec(), thermo_basis(pm).0.to_vec()),
            };
            for l in 0..space.dofs() {
                let fd = (vp[l] - vm[l]) / (2.0 * h);
                let an = e.ref_gradients[l][dir];
                let scale = an.abs().max(1.0);
                assert!((fd - an).abs() / scale < 1e-6, "dof {l} dir {dir}: fd {fd} vs {an}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn partition_of_unity_and_positivity(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            for space in [Space::Kinematic, Space::Thermo] {
                let e = eval_basis(space, [x, y]).unwrap();
                prop_assert_eq!(e.values.len(), space.dofs());
                prop_assert!(e.values.iter().all(|&v| v >= 0.0));
                prop_assert!((e.values.iter().sum::<f64>() - 1.0).abs() < 1e-13);
                let g: Vec2 = e.ref_gradients.iter().sum();
                prop_assert!(g.norm() < 1e-13);
            }
        }

        #[test]
        fn gradients_match_finite_differences(x in 0.01f64..0.99, y in 0.01f64..0.99) {
            check_fd(Space::Kinematic, [x, y]);
            check_fd(Space::Thermo, [x, y]);
        }
    }
}
