//! Direct and reciprocal Bravais lattices, direction classification and
//! integer-vector searches.
//!
//! Conventions: `ħ = 1`, `e/c = 1`. The direct basis `l₁…l_N` and the
//! reciprocal basis `a₁…a_N` satisfy `⟨aᵢ, lⱼ⟩ = 2π δᵢⱼ`. The dispersion
//! function is periodic under the reciprocal lattice; its Fourier
//! wavevectors are direct-lattice vectors.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, irreducible_vectors, line_sine, norm};

pub const DEFAULT_TOL_DIR: f64 = 1e-9;
pub const DEFAULT_Q: i64 = 20;
pub const DEFAULT_M_MAX: i64 = 12;

/// A rank-`N` lattice. Only the direct basis is stored as input; the
/// reciprocal basis is always derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    direct: Vec<Vec<f64>>,
    reciprocal: Vec<Vec<f64>>,
    /// Inverse of the matrix whose columns are the reciprocal vectors.
    reciprocal_inverse: DMatrix<f64>,
}

impl Lattice {
    /// Build from direct basis vectors `l₁…l_N` (one per row).
    pub fn new(direct: Vec<Vec<f64>>) -> Result<Self> {
        let n = direct.len();
        if n == 0 {
            return Err(Error::UnsupportedDimension(0));
        }
        if let Some(row) = direct.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        let cols = DMatrix::from_fn(n, n, |i, j| direct[j][i]);
        let recip = reciprocal_basis(&cols)?;
        let reciprocal: Vec<Vec<f64>> = (0..n)
            .map(|j| recip.column(j).iter().copied().collect())
            .collect();
        let reciprocal_inverse = recip
            .clone()
            .try_inverse()
            .ok_or(Error::SingularBasis { det: 0.0 })?;
        Ok(Self {
            direct,
            reciprocal,
            reciprocal_inverse,
        })
    }

    /// Unit cubic lattice: `lᵢ = eᵢ`, `aᵢ = 2π eᵢ`.
    pub fn cubic(dim: usize) -> Self {
        Self::scaled_cubic(dim, 1.0)
    }

    pub fn scaled_cubic(dim: usize, spacing: f64) -> Self {
        let direct = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { spacing } else { 0.0 }).collect())
            .collect();
        Self::new(direct).expect("cubic lattice is nonsingular")
    }

    pub fn dim(&self) -> usize {
        self.direct.len()
    }

    pub fn direct(&self) -> &[Vec<f64>] {
        &self.direct
    }

    pub fn reciprocal(&self) -> &[Vec<f64>] {
        &self.reciprocal
    }

    /// `Σ mᵢ lᵢ`
    pub fn direct_combination(&self, m: &[i64]) -> Vec<f64> {
        combine(&self.direct, m)
    }

    /// `Σ nᵢ aᵢ`
    pub fn reciprocal_combination(&self, n: &[i64]) -> Vec<f64> {
        combine(&self.reciprocal, n)
    }

    /// Coordinates `u` with `p = Σ uᵢ aᵢ`.
    pub fn reciprocal_coords(&self, p: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.reciprocal_inverse[(i, j)] * p[j]).sum())
            .collect()
    }

    /// Mean length of the reciprocal basis vectors: the natural "one period"
    /// length scale of the dispersion function (2π for the unit cubic lattice).
    pub fn period_length(&self) -> f64 {
        self.reciprocal.iter().map(|a| norm(a)).sum::<f64>() / self.dim() as f64
    }
}

fn combine(basis: &[Vec<f64>], coeffs: &[i64]) -> Vec<f64> {
    let n = basis.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (b, &c) in basis.iter().zip(coeffs) {
        if c != 0 {
            out.iter_mut().zip(b).for_each(|(o, x)| *o += c as f64 * x);
        }
    }
    out
}

/// Reciprocal basis `2π (L⁻¹)ᵀ` for a direct basis given as matrix columns.
/// Column `i` of the result is `aᵢ`.
pub fn reciprocal_basis(direct_columns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = direct_columns.nrows();
    if direct_columns.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: direct_columns.ncols(),
        });
    }
    let det = direct_columns.determinant();
    let scale: f64 = direct_columns.column_iter().map(|c| c.norm()).product();
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::SingularBasis { det });
    }
    let inv = direct_columns
        .clone()
        .try_inverse()
        .ok_or(Error::SingularBasis { det })?;
    Ok(inv.transpose() * TAU)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DirectionKind {
    Rational,
    PartiallyIrrational,
    Generic,
}

/// Bound-relative classification of a direction. The witness is a direct
/// lattice vector for `Rational` and a reciprocal lattice vector for
/// `PartiallyIrrational`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionClass {
    pub kind: DirectionKind,
    pub witness: Option<Vec<i64>>,
    pub bound: i64,
    pub tol: f64,
}

/// Classify a unit direction `b` as rational / partially irrational / generic
/// relative to the coefficient bound `q` and cosine tolerance `tol`.
pub fn classify_direction(b: &[f64], lattice: &Lattice, q: i64, tol: f64) -> DirectionClass {
    let dim = lattice.dim();
    let q = q.max(1);
    let mut rational = None;
    let mut orthogonal: Vec<Vec<i64>> = Vec::new();
    for w in irreducible_vectors(dim, q) {
        let l = lattice.direct_combination(&w);
        if rational.is_none() && line_sine(b, &l) <= tol {
            rational = Some(w.clone());
        }
        let a = lattice.reciprocal_combination(&w);
        if dot(b, &a).abs() <= tol * norm(b) * norm(&a) {
            orthogonal.push(w);
        }
    }
    let class = |kind, witness| DirectionClass {
        kind,
        witness,
        bound: q,
        tol,
    };
    if let Some(w) = rational {
        return class(DirectionKind::Rational, Some(w));
    }
    if orthogonal.is_empty() {
        return class(DirectionKind::Generic, None);
    }
    orthogonal.sort_by_key(|w| (linalg::inf_norm(w), w.clone()));
    if dim == 3 && linalg::integer_rank(&orthogonal) >= 2 {
        // two independent reciprocal vectors orthogonal to b: b is parallel to
        // their cross product, a direct-lattice vector beyond the search box
        let (n1, n2) = (&orthogonal[0], orthogonal.iter().find(|v| {
            linalg::integer_rank(&[orthogonal[0].clone(), (*v).clone()]) == 2
        }).expect("rank ≥ 2"));
        let w = [
            n1[1] * n2[2] - n1[2] * n2[1],
            n1[2] * n2[0] - n1[0] * n2[2],
            n1[0] * n2[1] - n1[1] * n2[0],
        ];
        return class(DirectionKind::Rational, Some(linalg::primitive(&w)));
    }
    class(DirectionKind::PartiallyIrrational, Some(orthogonal.swap_remove(0)))
}

/// Irreducible sign-normalized `m` with `angle(Σ mᵢ lᵢ, target) ≤ tol_angle`,
/// sorted by `‖m‖∞` then by angle. Orientation of `target` is ignored, since
/// the returned tuples are only defined up to sign.
pub fn integer_vector_search(
    target: &[f64],
    lattice: &Lattice,
    m_max: i64,
    tol_angle: f64,
) -> Vec<Vec<i64>> {
    let mut hits: Vec<(i64, f64, Vec<i64>)> = irreducible_vectors(lattice.dim(), m_max.max(1))
        .filter_map(|m| {
            let angle = linalg::line_angle(&lattice.direct_combination(&m), target);
            (angle <= tol_angle).then(|| (linalg::inf_norm(&m), angle, m))
        })
        .collect();
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    hits.into_iter().map(|(_, _, m)| m).collect()
}

/// Integer basis of the 2D sublattice `{n ∈ ℤ³ : n·w = 0}` for a primitive
/// `w`. Returned vectors satisfy `n₁ × n₂ = ±w`.
pub fn orthogonal_sublattice_basis(w: &[i64]) -> Option<[Vec<i64>; 2]> {
    if w.len() != 3 || w.iter().all(|&x| x == 0) {
        return None;
    }
    let w = linalg::primitive(w);
    let bound = linalg::inf_norm(&w).max(1);
    let mut kernel: Vec<Vec<i64>> = irreducible_vectors(3, bound)
        .filter(|n| n.iter().zip(&w).map(|(a, b)| a * b).sum::<i64>() == 0)
        .collect();
    kernel.sort_by_key(|n| (n.iter().map(|x| x * x).sum::<i64>(), n.clone()));
    for (i, a) in kernel.iter().enumerate() {
        for b in &kernel[i + 1..] {
            let c = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            if c.iter().zip(&w).all(|(x, y)| *x == *y) || c.iter().zip(&w).all(|(x, y)| *x == -*y) {
                return Some([a.clone(), b.clone()]);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        linalg::normalized(v).unwrap()
    }

    #[test]
    fn unit_cube_is_self_dual_up_to_two_pi() {
        let l = Lattice::cubic(3);
        for (i, a) in l.reciprocal().iter().enumerate() {
            for j in 0..3 {
                let expect = if i == j { TAU } else { 0.0 };
                assert_relative_eq!(a[j], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn sheared_basis_matches_cross_products() {
        let l = Lattice::new(vec![vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let expected = [[TAU, -TAU, 0.0], [0.0, TAU, 0.0], [0.0, 0.0, TAU]];
        // cross-product oracle: a1 = 2π l2×l3 / (l1·(l2×l3)) and cyclic
        let d = l.direct();
        let vol = dot(&d[0], &linalg::cross3(&d[1], &d[2]));
        for i in 0..3 {
            let c = linalg::cross3(&d[(i + 1) % 3], &d[(i + 2) % 3]);
            for j in 0..3 {
                assert_relative_eq!(l.reciprocal()[i][j], TAU * c[j] / vol, epsilon = 1e-14);
                assert_relative_eq!(l.reciprocal()[i][j], expected[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn scaling_inverts_reciprocal_length() {
        let l = Lattice::scaled_cubic(3, 2.5);
        assert_relative_eq!(l.reciprocal()[1][1], TAU / 2.5, epsilon = 1e-14);
    }

    #[test]
    fn singular_basis_is_rejected() {
        let r = Lattice::new(vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert!(matches!(r, Err(Error::SingularBasis { .. })));
    }

    #[test]
    fn axis_direction_is_rational() {
        let c = classify_direction(&[0.0, 0.0, 1.0], &Lattice::cubic(3), 10, DEFAULT_TOL_DIR);
        assert_eq!(c.kind, DirectionKind::Rational);
        assert_eq!(c.witness, Some(vec![0, 0, 1]));
    }

    #[test]
    fn one_irrational_ratio_is_partially_irrational() {
        let b = unit(&[1.0, 2f64.sqrt(), 0.0]);
        let c = classify_direction(&b, &Lattice::cubic(3), 50, DEFAULT_TOL_DIR);
        assert_eq!(c.kind, DirectionKind::PartiallyIrrational);
        assert_eq!(c.witness, Some(vec![0, 0, 1]));
        // exhaustive oracle: the only orthogonal reciprocal vectors are ±a3 multiples
        let l = Lattice::cubic(3);
        let hits: Vec<_> = irreducible_vectors(3, 50)
            .filter(|n| dot(&b, &l.reciprocal_combination(n)).abs() <= 1e-9 * TAU * norm(&n.iter().map(|&x| x as f64).collect::<Vec<_>>()))
            .collect();
        assert_eq!(hits, vec![vec![0, 0, 1]]);
    }

    #[test]
    fn generic_direction_has_no_witness() {
        let b = unit(&[1.0, 2f64.sqrt(), 3f64.sqrt()]);
        let c = classify_direction(&b, &Lattice::cubic(3), 50, DEFAULT_TOL_DIR);
        assert_eq!(c.kind, DirectionKind::Generic);
        assert_eq!(c.witness, None);
        assert_eq!(c.bound, 50);
    }

    #[test]
    fn rational_beyond_bound_is_recovered_from_orthogonal_pair() {
        // (27, 6, −13) = (1, 2, 3) × (4, −5, 6)
        let b = unit(&[27.0, 6.0, -13.0]);
        let c = classify_direction(&b, &Lattice::cubic(3), 20, DEFAULT_TOL_DIR);
        assert_eq!(c.kind, DirectionKind::Rational);
        assert_eq!(c.witness, Some(vec![27, 6, -13]));
        // only one orthogonal reciprocal vector inside the box
        let b = unit(&[1.0, 30.0, 0.0]);
        let c = classify_direction(&b, &Lattice::cubic(3), 20, DEFAULT_TOL_DIR);
        assert_eq!(c.kind, DirectionKind::PartiallyIrrational);
        assert_eq!(c.witness, Some(vec![0, 0, 1]));
    }

    #[test]
    fn integer_search_examples() {
        let l = Lattice::cubic(3);
        assert_eq!(integer_vector_search(&[1.0, 0.0, 0.0], &l, 5, 1e-6), vec![vec![1, 0, 0]]);
        let d = unit(&[1.0, 1.0, 0.0]);
        assert_eq!(integer_vector_search(&d, &l, 5, 1e-6), vec![vec![1, 1, 0]]);
        assert_eq!(integer_vector_search(&[0.6, 0.8, 0.0], &l, 5, 1e-6), vec![vec![3, 4, 0]]);
        // brute force oracle over |m_i| ≤ 5 without the irreducible filter
        let mut brute = vec![];
        for a in -5i64..=5 {
            for b in -5i64..=5 {
                for c in -5i64..=5 {
                    let m = [a as f64, b as f64, c as f64];
                    if (a, b, c) != (0, 0, 0) && linalg::line_angle(&m, &[0.6, 0.8, 0.0]) <= 1e-6 {
                        brute.push(linalg::primitive(&[a, b, c]));
                    }
                }
            }
        }
        brute.dedup();
        assert_eq!(brute, vec![vec![3, 4, 0]]);
    }

    #[test]
    fn orthogonal_sublattice_of_axis() {
        let [a, b] = orthogonal_sublattice_basis(&[0, 0, 1]).unwrap();
        assert_eq!(linalg::integer_rank(&[a.clone(), b.clone()]), 2);
        assert_eq!(a[2], 0);
        assert_eq!(b[2], 0);
        let [a, b] = orthogonal_sublattice_basis(&[1, 2, 3]).unwrap();
        let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        assert_eq!(linalg::primitive(&c), vec![1, 2, 3]);
    }

    fn basis_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn duality_holds_for_random_bases(rows in basis_strategy()) {
            let cols = DMatrix::from_fn(3, 3, |i, j| rows[j][i]);
            let scale: f64 = cols.column_iter().map(|c| c.norm()).product();
            prop_assume!(cols.determinant().abs() > 1e-3 * scale);
            let l = Lattice::new(rows).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if i == j { TAU } else { 0.0 };
                    let got = dot(&l.reciprocal()[i], &l.direct()[j]);
                    prop_assert!((got - expect).abs() <= 1e-12 * TAU * norm(&l.reciprocal()[i]) * norm(&l.direct()[j]));
                }
            }
        }

        #[test]
        fn classification_is_sign_stable(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let v = [x, y, z];
            prop_assume!(norm(&v) > 0.1);
            let b = unit(&v);
            let nb: Vec<f64> = b.iter().map(|t| -t).collect();
            let l = Lattice::cubic(3);
            prop_assert_eq!(classify_direction(&b, &l, 6, 1e-9), classify_direction(&nb, &l, 6, 1e-9));
        }

        #[test]
        fn search_is_scale_invariant(x in -1.0f64..1.0, y in -1.0f64..1.0, s in 0.01f64..100.0) {
            let t = [x, y, 0.5];
            let st: Vec<f64> = t.iter().map(|v| v * s).collect();
            let l = Lattice::cubic(3);
            prop_assert_eq!(integer_vector_search(&t, &l, 6, 0.05), integer_vector_search(&st, &l, 6, 0.05));
        }
    }
}
