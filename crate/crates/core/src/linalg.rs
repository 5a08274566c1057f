//! Small dense-vector and integer helpers used throughout the crate.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| scale(a, 1.0 / n))
}

pub fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Sine of the angle between two lines (orientation ignored), computed from
/// the rejection so that it stays accurate for nearly parallel vectors.
pub fn line_sine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let c = dot(a, b) / (na * nb);
    let rej: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (y / nb - c * x / na).powi(2))
        .sum();
    rej.sqrt().min(1.0)
}

/// Angle in `[0, π/2]` between the lines spanned by `a` and `b`.
pub fn line_angle(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let c = (dot(a, b) / (na * nb)).abs().min(1.0);
    line_sine(a, b).atan2(c)
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn gcd_all(v: &[i64]) -> i64 {
    v.iter().fold(0, |g, &x| gcd(g, x))
}

pub fn is_irreducible(v: &[i64]) -> bool {
    gcd_all(v) == 1
}

/// Flip `v` so its first nonzero component is positive.
pub fn sign_normalize(v: &mut [i64]) {
    if let Some(&first) = v.iter().find(|&&x| x != 0) {
        if first < 0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

pub fn is_sign_normalized(v: &[i64]) -> bool {
    v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

/// Divide by the gcd and sign-normalize; zero vectors are returned as is.
pub fn primitive(v: &[i64]) -> Vec<i64> {
    let g = gcd_all(v);
    let mut out: Vec<i64> = if g > 1 { v.iter().map(|x| x / g).collect() } else { v.to_vec() };
    sign_normalize(&mut out);
    out
}

pub fn inf_norm(v: &[i64]) -> i64 {
    v.iter().map(|x| x.abs()).max().unwrap_or(0)
}

/// Rank of an integer matrix given as rows, by fraction-free elimination.
pub fn integer_rank(rows: &[Vec<i64>]) -> usize {
    let Some(width) = rows.first().map(Vec::len) else {
        return 0;
    };
    let mut m: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x as i128).collect())
        .collect();
    let mut rank = 0;
    for col in 0..width {
        let Some(pivot) = (rank..m.len()).find(|&r| m[r][col] != 0) else {
            continue;
        };
        m.swap(rank, pivot);
        for r in 0..m.len() {
            if r != rank && m[r][col] != 0 {
                let (a, b) = (m[rank][col], m[r][col]);
                let g = gcd_i128(a, b);
                let (fa, fb) = (b / g, a / g);
                for c in 0..width {
                    m[r][c] = m[r][c] * fb - m[rank][c] * fa;
                }
                let rg = m[r].iter().fold(0i128, |g, &x| gcd_i128(g, x));
                if rg > 1 {
                    m[r].iter_mut().for_each(|x| *x /= rg);
                }
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

fn gcd_i128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Every irreducible, sign-normalized integer vector of dimension `dim` with
/// `‖v‖∞ ≤ bound`, in odometer order.
pub fn irreducible_vectors(dim: usize, bound: i64) -> impl Iterator<Item = Vec<i64>> {
    let mut cur = vec![-bound; dim];
    let mut done = dim == 0 || bound < 1;
    std::iter::from_fn(move || loop {
        if done {
            return None;
        }
        let out = cur.clone();
        // advance odometer
        let mut i = dim;
        loop {
            if i == 0 {
                done = true;
                break;
            }
            i -= 1;
            if cur[i] < bound {
                cur[i] += 1;
                break;
            }
            cur[i] = -bound;
        }
        if is_sign_normalized(&out) && is_irreducible(&out) {
            return Some(out);
        }
    })
}

/// Gram–Schmidt: orthonormalize `v` against the orthonormal set `basis`.
pub fn orthonormalize_against(v: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut w = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let c = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    let n = norm(&w);
    (n > 1e-10 * norm(v).max(1e-300)).then(|| scale(&w, 1.0 / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_small_integer_matrices() {
        assert_eq!(integer_rank(&[]), 0);
        assert_eq!(integer_rank(&[vec![0, 0, 0]]), 0);
        assert_eq!(integer_rank(&[vec![1, 1, 0], vec![1, -1, 0], vec![2, 0, 0]]), 2);
        assert_eq!(integer_rank(&[vec![1, 0, 0], vec![0, 1, 0], vec![3, 5, 7]]), 3);
    }

    #[test]
    fn irreducible_enumeration_counts() {
        // brute-force count of primitive sign-normalized vectors in the box
        let mut brute = 0;
        for a in -3i64..=3 {
            for b in -3i64..=3 {
                let v = [a, b];
                if is_sign_normalized(&v) && gcd_all(&v) == 1 {
                    brute += 1;
                }
            }
        }
        assert_eq!(irreducible_vectors(2, 3).count(), brute);
        assert!(irreducible_vectors(3, 2).all(|v| is_irreducible(&v) && is_sign_normalized(&v)));
    }

    #[test]
    fn primitive_and_sign() {
        assert_eq!(primitive(&[0, -4, 6]), vec![0, 2, -3]);
        assert_eq!(primitive(&[-3, 0, 0]), vec![1, 0, 0]);
    }

    #[test]
    fn line_angle_ignores_orientation() {
        let a = [1.0, 0.0, 0.0];
        let b = [-1.0, 1e-12, 0.0];
        assert!(line_angle(&a, &b) < 1e-11);
        assert!((line_angle(&a, &[0.0, 2.0, 0.0]) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
