//! Affine 2-plane sections `ι(x, y) = p₀ + x e₁ + y e₂` of `ℝᴺ` and the
//! restricted function `f = ε∘ι`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::lattice::{self, DirectionClass, Lattice};
use crate::linalg::{self, dot, irreducible_vectors, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlaneDirection {
    /// Field direction `B` (`N = 3`); the plane is `B^⊥`.
    Field(Vec<f64>),
    /// Two vectors spanning the plane direction `ξ ∈ G(N, 2)`.
    Grassmann(Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct PlaneSection {
    lattice: Lattice,
    frame: [Vec<f64>; 2],
    normals: Vec<Vec<f64>>,
    field: Option<Vec<f64>>,
    shift: Vec<f64>,
    class: OnceLock<DirectionClass>,
}

impl PlaneSection {
    pub fn build(direction: &PlaneDirection, shift: &[f64], lattice: &Lattice) -> Result<Self> {
        let dim = lattice.dim();
        if shift.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: shift.len(),
            });
        }
        let (frame, normals, field) = match direction {
            PlaneDirection::Field(b) => {
                if dim != 3 || b.len() != 3 {
                    return Err(Error::DegenerateDirection(
                        "a field direction needs N = 3; use a Grassmann direction".into(),
                    ));
                }
                let b = linalg::normalized(b)
                    .ok_or_else(|| Error::DegenerateDirection("zero field vector".into()))?;
                // reference axis: the one least aligned with B (first on ties)
                let mut axis = 0;
                for i in 1..3 {
                    if b[i].abs() < b[axis].abs() {
                        axis = i;
                    }
                }
                let mut r = vec![0.0; 3];
                r[axis] = 1.0;
                let e1 = linalg::orthonormalize_against(&r, &[b.clone()])
                    .ok_or_else(|| Error::DegenerateDirection("frame construction failed".into()))?;
                let e2 = linalg::cross3(&b, &e1).to_vec();
                ([e1, e2], vec![b.clone()], Some(b))
            }
            PlaneDirection::Grassmann(u, v) => {
                if u.len() != dim || v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: u.len().min(v.len()),
                    });
                }
                let e1 = linalg::normalized(u)
                    .ok_or_else(|| Error::DegenerateDirection("zero spanning vector".into()))?;
                let e2 = linalg::orthonormalize_against(v, &[e1.clone()])
                    .ok_or_else(|| Error::DegenerateDirection("spanning vectors are dependent".into()))?;
                let mut basis = vec![e1.clone(), e2.clone()];
                let mut normals = Vec::new();
                for i in 0..dim {
                    let mut r = vec![0.0; dim];
                    r[i] = 1.0;
                    if let Some(n) = linalg::orthonormalize_against(&r, &basis) {
                        if n.iter().all(|x| x.is_finite()) && normals.len() < dim - 2 {
                            basis.push(n.clone());
                            normals.push(n);
                        }
                    }
                }
                let field = (dim == 3).then(|| linalg::cross3(&e1, &e2).to_vec());
                ([e1, e2], normals, field)
            }
        };
        Ok(Self {
            lattice: lattice.clone(),
            frame,
            normals,
            field,
            shift: shift.to_vec(),
            class: OnceLock::new(),
        })
    }

    pub fn field(b: &[f64], shift: &[f64], lattice: &Lattice) -> Result<Self> {
        Self::build(&PlaneDirection::Field(b.to_vec()), shift, lattice)
    }

    pub fn grassmann(u: &[f64], v: &[f64], shift: &[f64], lattice: &Lattice) -> Result<Self> {
        Self::build(&PlaneDirection::Grassmann(u.to_vec(), v.to_vec()), shift, lattice)
    }

    /// Same plane direction through another shift; the cached class is kept.
    pub fn with_shift(&self, shift: &[f64]) -> Self {
        let mut s = self.clone();
        s.shift = shift.to_vec();
        s
    }

    /// Same plane with the second frame vector reversed (left-handed frame).
    pub fn mirrored(&self) -> Self {
        let mut s = self.clone();
        s.frame[1] = linalg::scale(&s.frame[1], -1.0);
        s
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn frame(&self) -> &[Vec<f64>; 2] {
        &self.frame
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    /// Unit field direction (`N = 3`).
    pub fn field_direction(&self) -> Option<&[f64]> {
        self.field.as_deref()
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// `+1` when `e₁ × e₂ = B̂`, `−1` for a mirrored frame, `+1` for `N ≠ 3`.
    pub fn handedness(&self) -> f64 {
        match &self.field {
            Some(b) => dot(&linalg::cross3(&self.frame[0], &self.frame[1]), b).signum(),
            None => 1.0,
        }
    }

    pub fn embed(&self, x: f64, y: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.shift[i] + x * self.frame[0][i] + y * self.frame[1][i])
            .collect()
    }

    /// In-plane coordinates of the orthogonal projection of `p`.
    pub fn project(&self, p: &[f64]) -> [f64; 2] {
        let d = linalg::sub(p, &self.shift);
        [dot(&d, &self.frame[0]), dot(&d, &self.frame[1])]
    }

    /// Plane coordinates of an ambient vector (no shift).
    pub fn project_vector(&self, v: &[f64]) -> [f64; 2] {
        [dot(v, &self.frame[0]), dot(v, &self.frame[1])]
    }

    pub fn lift_vector(&self, d: [f64; 2]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| d[0] * self.frame[0][i] + d[1] * self.frame[1][i])
            .collect()
    }

    /// Classification of the normal direction (`N = 3`), computed once with
    /// the default bound and tolerance.
    pub fn direction_class(&self) -> &DirectionClass {
        self.class.get_or_init(|| match &self.field {
            Some(b) if self.dim() == 3 => {
                lattice::classify_direction(b, &self.lattice, lattice::DEFAULT_Q, lattice::DEFAULT_TOL_DIR)
            }
            _ => {
                let g = GrassmannDirection::analyze(self, lattice::DEFAULT_Q, 1e-9);
                let kind = match g.in_plane.len() {
                    0 => lattice::DirectionKind::Generic,
                    1 => lattice::DirectionKind::PartiallyIrrational,
                    _ => lattice::DirectionKind::Rational,
                };
                DirectionClass {
                    kind,
                    witness: g.in_plane.first().cloned(),
                    bound: lattice::DEFAULT_Q,
                    tol: 1e-9,
                }
            }
        })
    }

    pub fn set_direction_class(&self, class: DirectionClass) {
        let _ = self.class.set(class);
    }

    /// Reciprocal-lattice vectors (integer coordinates) lying in the plane
    /// direction, up to `bound`, with their in-plane translation.
    pub fn in_plane_periods(&self, bound: i64, tol: f64) -> Vec<(Vec<i64>, [f64; 2])> {
        let mut out: Vec<(Vec<i64>, [f64; 2])> = irreducible_vectors(self.dim(), bound)
            .filter_map(|w| {
                let v = self.lattice.reciprocal_combination(&w);
                let t = self.project_vector(&v);
                let off: f64 = self.normals.iter().map(|n| dot(n, &v).powi(2)).sum::<f64>().sqrt();
                (off <= tol * norm(&v)).then_some((w, t))
            })
            .collect();
        out.sort_by(|a, b| {
            let la = a.1[0].hypot(a.1[1]);
            let lb = b.1[0].hypot(b.1[1]);
            la.total_cmp(&lb).then(a.0.cmp(&b.0))
        });
        out
    }
}

/// Rationality data of a plane direction `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrassmannDirection {
    pub dim: usize,
    pub spanning: [Vec<f64>; 2],
    /// Irreducible reciprocal-lattice vectors contained in `ξ`.
    pub in_plane: Vec<Vec<i64>>,
    /// Irreducible direct-lattice vectors orthogonal to `ξ`: if any exists,
    /// `ξ` lies in a rational hyperplane.
    pub hyperplane_normals: Vec<Vec<i64>>,
    pub bound: i64,
    pub tol: f64,
}

impl GrassmannDirection {
    pub fn analyze(section: &PlaneSection, bound: i64, tol: f64) -> Self {
        let lat = section.lattice();
        let [e1, e2] = section.frame();
        let mut in_plane = Vec::new();
        let mut hyperplane_normals = Vec::new();
        for w in irreducible_vectors(lat.dim(), bound) {
            let v = lat.reciprocal_combination(&w);
            let nv = norm(&v);
            let off: f64 = section.normals().iter().map(|n| dot(n, &v).powi(2)).sum::<f64>().sqrt();
            if off <= tol * nv {
                in_plane.push(w.clone());
            }
            let l = lat.direct_combination(&w);
            let nl = norm(&l);
            if dot(&l, e1).abs() <= tol * nl && dot(&l, e2).abs() <= tol * nl {
                hyperplane_normals.push(w);
            }
        }
        in_plane.sort_by_key(|w| (linalg::inf_norm(w), w.clone()));
        hyperplane_normals.sort_by_key(|w| (linalg::inf_norm(w), w.clone()));
        Self {
            dim: lat.dim(),
            spanning: section.frame().clone(),
            in_plane,
            hyperplane_normals,
            bound,
            tol,
        }
    }

    pub fn in_rational_hyperplane(&self) -> bool {
        !self.hyperplane_normals.is_empty()
    }
}

/// `ε` restricted to a plane, with per-term phases precomputed so that one
/// evaluation costs one `sin_cos` per Fourier term.
#[derive(Debug, Clone)]
pub struct RestrictedFunction {
    constant: f64,
    /// (α, β, φ, cos coefficient, sin coefficient)
    terms: Vec<[f64; 5]>,
}

impl RestrictedFunction {
    pub fn new(model: &DispersionModel, section: &PlaneSection) -> Self {
        let [e1, e2] = section.frame();
        let terms = model
            .terms()
            .iter()
            .map(|t| [dot(&t.q, e1), dot(&t.q, e2), dot(&t.q, section.shift()), t.cos_coef, t.sin_coef])
            .collect();
        Self {
            constant: model.constant(),
            terms,
        }
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let mut f = self.constant;
        for &[a, b, phi, cc, sc] in &self.terms {
            let (s, c) = (phi + a * x + b * y).sin_cos();
            f += cc * c + sc * s;
        }
        f
    }

    #[inline]
    pub fn value_grad(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let mut f = self.constant;
        let mut g = [0.0; 2];
        for &[a, b, phi, cc, sc] in &self.terms {
            let (s, c) = (phi + a * x + b * y).sin_cos();
            f += cc * c + sc * s;
            let w = -cc * s + sc * c;
            g[0] += w * a;
            g[1] += w * b;
        }
        (f, g)
    }

    /// Value, gradient and Hessian `[fxx, fxy, fyy]`.
    pub fn value_grad_hess(&self, x: f64, y: f64) -> (f64, [f64; 2], [f64; 3]) {
        let mut f = self.constant;
        let mut g = [0.0; 2];
        let mut h = [0.0; 3];
        for &[a, b, phi, cc, sc] in &self.terms {
            let (s, c) = (phi + a * x + b * y).sin_cos();
            let v = cc * c + sc * s;
            f += v;
            let w = -cc * s + sc * c;
            g[0] += w * a;
            g[1] += w * b;
            h[0] -= v * a * a;
            h[1] -= v * a * b;
            h[2] -= v * b * b;
        }
        (f, g, h)
    }
}

/// `f(x, y) = ε(ι(x, y))`.
pub fn restrict(model: &DispersionModel, section: &PlaneSection, x: f64, y: f64) -> f64 {
    model.evaluate(&section.embed(x, y))
}

/// `(⟨∇ε, e₁⟩, ⟨∇ε, e₂⟩)` at `ι(x, y)`.
pub fn in_plane_gradient(model: &DispersionModel, section: &PlaneSection, x: f64, y: f64) -> [f64; 2] {
    section.project_vector(&model.gradient(&section.embed(x, y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn cubic() -> Lattice {
        Lattice::cubic(3)
    }

    #[test]
    fn axis_field_gives_axis_frame() {
        let s = PlaneSection::field(&[0.0, 0.0, 1.0], &[0.0; 3], &cubic()).unwrap();
        assert_eq!(s.frame()[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(s.frame()[1], vec![0.0, 1.0, 0.0]);
        assert_eq!(s.handedness(), 1.0);
        assert_eq!(s.mirrored().handedness(), -1.0);
    }

    #[test]
    fn frames_are_orthonormal_and_right_handed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if norm(&b) < 1e-3 {
                continue;
            }
            let s = PlaneSection::field(&b, &[0.0; 3], &cubic()).unwrap();
            let [e1, e2] = s.frame();
            let bh = linalg::normalized(&b).unwrap();
            assert_abs_diff_eq!(dot(e1, e1), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dot(e2, e2), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dot(e1, e2), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dot(e1, &bh), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dot(e2, &bh), 0.0, epsilon = 1e-12);
            let c = linalg::cross3(e1, e2);
            for i in 0..3 {
                assert_abs_diff_eq!(c[i], bh[i], epsilon = 1e-12);
            }
        }
        let s = PlaneSection::field(&[1.0, 1.0, 1.0], &[0.0; 3], &cubic()).unwrap();
        assert_abs_diff_eq!(dot(&s.frame()[0], &[1.0, 1.0, 1.0]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn grassmann_frame_is_an_isometry() {
        let l = Lattice::cubic(4);
        let s = PlaneSection::grassmann(&[1.0, 0.0, 0.0, 0.3], &[0.0, 1.0, -0.2, 0.0], &[0.1, 0.2, 0.3, 0.4], &l)
            .unwrap();
        for n in s.normals() {
            assert_abs_diff_eq!(dot(n, &s.frame()[0]), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dot(n, &s.frame()[1]), 0.0, epsilon = 1e-12);
        }
        assert_eq!(s.normals().len(), 2);
        for (x, y) in [(1.0, 2.0), (-3.5, 0.25), (0.0, 0.0)] {
            let d = linalg::sub(&s.embed(x, y), s.shift());
            assert_abs_diff_eq!(norm(&d), f64::hypot(x, y), epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_directions_are_rejected() {
        assert!(PlaneSection::field(&[0.0; 3], &[0.0; 3], &cubic()).is_err());
        let l = Lattice::cubic(4);
        assert!(PlaneSection::grassmann(&[1.0, 0.0, 0.0, 0.0], &[2.0, 0.0, 0.0, 0.0], &[0.0; 4], &l).is_err());
    }

    #[test]
    fn restriction_examples() {
        let planes = DispersionModel::builtin("planes").unwrap();
        let s = PlaneSection::field(&[0.0, 0.0, 1.0], &[0.0; 3], &cubic()).unwrap();
        assert_abs_diff_eq!(restrict(&planes, &s, 0.0, 0.0), 1.0, epsilon = 1e-15);
        let cs = DispersionModel::builtin("cos-sum").unwrap();
        let h = 0.77;
        let s = PlaneSection::field(&[0.0, 0.0, 1.0], &[0.0, 0.0, h], &cubic()).unwrap();
        let f = RestrictedFunction::new(&cs, &s);
        for (x, y) in [(0.3, -1.2), (5.0, 2.0)] {
            let expect = f64::cos(x) + f64::cos(y) + h.cos();
            assert_abs_diff_eq!(restrict(&cs, &s, x, y), expect, epsilon = 1e-14);
            assert_abs_diff_eq!(f.value(x, y), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn restricted_function_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for name in ["cos-sum", "cos-product", "planes"] {
            let m = DispersionModel::builtin(name).unwrap();
            for _ in 0..50 {
                let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let p0: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..TAU)).collect();
                let s = PlaneSection::field(&b, &p0, &cubic()).unwrap();
                let f = RestrictedFunction::new(&m, &s);
                let (x, y) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
                let (v, g) = f.value_grad(x, y);
                assert_abs_diff_eq!(v, restrict(&m, &s, x, y), epsilon = 1e-13);
                let g2 = in_plane_gradient(&m, &s, x, y);
                assert_abs_diff_eq!(g[0], g2[0], epsilon = 1e-13);
                assert_abs_diff_eq!(g[1], g2[1], epsilon = 1e-13);
                // 2D finite differences
                let hstep = 1e-5;
                let fx = (f.value(x + hstep, y) - f.value(x - hstep, y)) / (2.0 * hstep);
                let fy = (f.value(x, y + hstep) - f.value(x, y - hstep)) / (2.0 * hstep);
                assert!((fx - g[0]).abs() < 1e-6 && (fy - g[1]).abs() < 1e-6);
                let (_, _, hess) = f.value_grad_hess(x, y);
                let gxp = f.value_grad(x + hstep, y).1;
                let gxm = f.value_grad(x - hstep, y).1;
                assert!(((gxp[0] - gxm[0]) / (2.0 * hstep) - hess[0]).abs() < 1e-6);
                assert!(((gxp[1] - gxm[1]) / (2.0 * hstep) - hess[1]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn in_plane_gradient_examples() {
        let cs = DispersionModel::builtin("cos-sum").unwrap();
        let s = PlaneSection::field(&[0.0, 0.0, 1.0], &[0.0; 3], &cubic()).unwrap();
        let g = in_plane_gradient(&cs, &s, FRAC_PI_2, 0.0);
        assert_abs_diff_eq!(g[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
        let g = in_plane_gradient(&cs, &s, 0.0, 0.0);
        assert!(g[0].abs() < 1e-15 && g[1].abs() < 1e-15);
    }

    #[test]
    fn rational_sections_are_periodic_and_irrational_ones_are_not() {
        let cs = DispersionModel::builtin("cos-sum").unwrap();
        let s = PlaneSection::field(&[1.0, 2.0, 0.0], &[0.3, 0.1, 0.7], &cubic()).unwrap();
        let periods = s.in_plane_periods(5, 1e-9);
        assert!(periods.len() >= 2);
        let f = RestrictedFunction::new(&cs, &s);
        for (_, t) in periods.iter().take(2) {
            for (x, y) in [(0.1, 0.2), (-2.0, 1.5)] {
                assert_abs_diff_eq!(f.value(x, y), f.value(x + t[0], y + t[1]), epsilon = 1e-12);
            }
        }
        let g = PlaneSection::field(&[1.0, 2f64.sqrt(), 3f64.sqrt()], &[0.0; 3], &cubic()).unwrap();
        assert!(g.in_plane_periods(8, 1e-9).is_empty());
    }

    #[test]
    fn grassmann_rationality_data() {
        let l = Lattice::cubic(4);
        let s = PlaneSection::grassmann(&[0.0, 0.0, 1.0, 0.0], &[1.0, 2f64.sqrt(), 0.0, 3f64.sqrt()], &[0.0; 4], &l)
            .unwrap();
        let g = GrassmannDirection::analyze(&s, 6, 1e-9);
        assert_eq!(g.in_plane, vec![vec![0, 0, 1, 0]]);
        assert!(!g.in_rational_hyperplane());
        let s = PlaneSection::grassmann(&[1.0, 0.3, 0.0, 0.0], &[0.0, 0.5, 2f64.sqrt(), 0.0], &[0.0; 4], &l).unwrap();
        let g = GrassmannDirection::analyze(&s, 6, 1e-9);
        assert_eq!(g.hyperplane_normals, vec![vec![0, 0, 0, 1]]);
    }
}
