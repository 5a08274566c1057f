//! The periodic function `ε(p)` as a finite real Fourier series.
//!
//! Each stored term pairs `k` with `−k`, so the series is real by
//! construction: `c e^{i⟨q,p⟩} + c̄ e^{−i⟨q,p⟩} = 2Re c·cos⟨q,p⟩ − 2Im c·sin⟨q,p⟩`
//! where `q = Σ kᵢ lᵢ` is a direct-lattice vector, so `ε` is periodic under
//! the reciprocal lattice.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homology::{independent_generators, PeriodicUnionFind};
use crate::lattice::Lattice;
use crate::linalg::{self, dot};

pub const DEFAULT_TERM_CAP: usize = 10_000;
const REALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FourierTerm {
    /// Sign-normalized integer wavevector.
    pub k: Vec<i64>,
    /// Ambient wavevector `Σ kᵢ lᵢ`.
    pub q: Vec<f64>,
    pub cos_coef: f64,
    pub sin_coef: f64,
}

#[derive(Debug, Clone)]
pub struct DispersionModel {
    name: String,
    lattice: Lattice,
    constant: f64,
    terms: Vec<FourierTerm>,
}

impl DispersionModel {
    /// Build from complex coefficients `(k, c_k)`. A missing partner `−k` is
    /// implied as `conj(c_k)`; a present partner must match it.
    pub fn from_coefficients(
        name: impl Into<String>,
        lattice: Lattice,
        coefficients: &[(Vec<i64>, Complex64)],
    ) -> Result<Self> {
        Self::from_coefficients_capped(name, lattice, coefficients, DEFAULT_TERM_CAP)
    }

    pub fn from_coefficients_capped(
        name: impl Into<String>,
        lattice: Lattice,
        coefficients: &[(Vec<i64>, Complex64)],
        cap: usize,
    ) -> Result<Self> {
        let dim = lattice.dim();
        let mut raw: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (k, c) in coefficients {
            if k.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: k.len(),
                });
            }
            *raw.entry(k.clone()).or_default() += c;
        }
        let mut constant = 0.0;
        let mut paired: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (k, &c) in &raw {
            if k.iter().all(|&x| x == 0) {
                if c.im.abs() > REALITY_TOL {
                    return Err(Error::RealityViolation(format!(
                        "constant term has imaginary part {}",
                        c.im
                    )));
                }
                constant = c.re;
                continue;
            }
            let minus: Vec<i64> = k.iter().map(|x| -x).collect();
            if let Some(&partner) = raw.get(&minus) {
                if (partner - c.conj()).norm() > REALITY_TOL * (1.0 + c.norm()) {
                    return Err(Error::RealityViolation(format!(
                        "c{k:?} = {c} but c{minus:?} = {partner}"
                    )));
                }
            }
            // represent the ±k pair by its sign-normalized member
            let (rep, coef) = if linalg::is_sign_normalized(k) { (k.clone(), c) } else { (minus, c.conj()) };
            paired.insert(rep, coef);
        }
        if paired.len() > cap {
            return Err(Error::TooManyTerms {
                count: paired.len(),
                cap,
            });
        }
        let terms = paired
            .into_iter()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(k, c)| FourierTerm {
                q: lattice.direct_combination(&k),
                k,
                cos_coef: 2.0 * c.re,
                sin_coef: -2.0 * c.im,
            })
            .collect();
        Ok(Self {
            name: name.into(),
            lattice,
            constant,
            terms,
        })
    }

    /// Sum of `amplitude·cos⟨q_k, p⟩` terms.
    pub fn from_cosines(name: impl Into<String>, lattice: Lattice, cosines: &[(Vec<i64>, f64)]) -> Result<Self> {
        let coefs: Vec<_> = cosines
            .iter()
            .map(|(k, a)| (k.clone(), Complex64::new(a / 2.0, 0.0)))
            .collect();
        Self::from_coefficients(name, lattice, &coefs)
    }

    /// Built-in models on the unit cubic lattice.
    pub fn builtin(name: &str) -> Option<Self> {
        let e = |dim: usize, i: usize| -> Vec<i64> { (0..dim).map(|j| i64::from(i == j)).collect() };
        let cos = |dim, list: Vec<(Vec<i64>, f64)>| Self::from_cosines(name, Lattice::cubic(dim), &list).ok();
        match name {
            "cos-sum" => cos(3, (0..3).map(|i| (e(3, i), 1.0)).collect()),
            // cos x cos y = ½ cos(x+y) + ½ cos(x−y), and cyclic
            "cos-product" => cos(
                3,
                vec![
                    (vec![1, 1, 0], 0.5),
                    (vec![1, -1, 0], 0.5),
                    (vec![0, 1, 1], 0.5),
                    (vec![0, 1, -1], 0.5),
                    (vec![1, 0, 1], 0.5),
                    (vec![1, 0, -1], 0.5),
                ],
            ),
            "planes" => cos(3, vec![(e(3, 0), 1.0)]),
            "planes4" => cos(4, vec![(e(4, 0), 1.0)]),
            "planes4-perturbed" => cos(
                4,
                vec![(e(4, 0), 1.0), (e(4, 1), 0.1), (e(4, 2), 0.1), (e(4, 3), 0.1)],
            ),
            "cos-sum4" => cos(4, (0..4).map(|i| (e(4, i), 1.0)).collect()),
            "cos2-4" => cos(4, vec![(e(4, 0), 1.0), (e(4, 1), 1.0)]),
            _ => None,
        }
    }

    pub const BUILTIN_NAMES: [&'static str; 7] = [
        "cos-sum",
        "cos-product",
        "planes",
        "planes4",
        "planes4-perturbed",
        "cos-sum4",
        "cos2-4",
    ];

    /// Parse a coefficient file: lines `k1 … kN re im`, `#` comments.
    pub fn parse_coefficients(name: &str, lattice: Lattice, text: &str) -> Result<Self> {
        let dim = lattice.dim();
        let mut coefs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {} fields, found {}", dim + 2, fields.len()),
                });
            }
            let parse_err = |msg: String| Error::Parse { line: lineno + 1, msg };
            let k = fields[..dim]
                .iter()
                .map(|s| s.parse::<i64>().map_err(|e| parse_err(format!("{s}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let re = fields[dim].parse::<f64>().map_err(|e| parse_err(e.to_string()))?;
            let im = fields[dim + 1].parse::<f64>().map_err(|e| parse_err(e.to_string()))?;
            coefs.push((k, Complex64::new(re, im)));
        }
        Self::from_coefficients(name, lattice, &coefs)
    }

    pub fn load(path: &Path, lattice: Lattice) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("file");
        Self::parse_coefficients(name, lattice, &text)
    }

    /// Serialize as a coefficient file (one line per stored `k`, partner implied).
    pub fn to_coefficient_text(&self) -> String {
        let mut out = format!("# {}\n", self.name);
        if self.constant != 0.0 {
            let zeros = vec!["0"; self.dim()].join(" ");
            out.push_str(&format!("{zeros} {:e} 0\n", self.constant));
        }
        for t in &self.terms {
            let ks: Vec<String> = t.k.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("{} {:e} {:e}\n", ks.join(" "), t.cos_coef / 2.0, -t.sin_coef / 2.0));
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    pub fn evaluate(&self, p: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| {
                    let (s, c) = dot(&t.q, p).sin_cos();
                    t.cos_coef * c + t.sin_coef * s
                })
                .sum::<f64>()
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for t in &self.terms {
            let (s, c) = dot(&t.q, p).sin_cos();
            let w = -t.cos_coef * s + t.sin_coef * c;
            g.iter_mut().zip(&t.q).for_each(|(gi, qi)| *gi += w * qi);
        }
        g
    }

    /// Row-major `N×N` Hessian.
    pub fn hessian(&self, p: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut h = vec![0.0; n * n];
        for t in &self.terms {
            let (s, c) = dot(&t.q, p).sin_cos();
            let w = -t.cos_coef * c - t.sin_coef * s;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += w * t.q[i] * t.q[j];
                }
            }
        }
        h
    }

    /// Upper bound on the spectral norm of the Hessian.
    pub fn curvature_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.cos_coef.hypot(t.sin_coef) * dot(&t.q, &t.q))
            .sum()
    }

    /// Point of the fundamental domain with reciprocal coordinates `u`.
    pub fn point_at(&self, u: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        for (a, &ui) in self.lattice.reciprocal().iter().zip(u) {
            p.iter_mut().zip(a).for_each(|(pi, ai)| *pi += ui * ai);
        }
        p
    }

    /// `(ε_min, ε_max)` over an `n^N` grid, polished by gradient steps.
    pub fn value_range(&self, n: usize) -> (f64, f64) {
        let n = n.max(16);
        let dim = self.dim();
        let total = n.pow(dim as u32);
        const KEEP: usize = 8;
        let mut lows: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut highs: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut u = vec![0.0; dim];
        for idx in 0..total {
            let mut r = idx;
            for ui in u.iter_mut() {
                *ui = (r % n) as f64 / n as f64;
                r /= n;
            }
            let p = self.point_at(&u);
            let v = self.evaluate(&p);
            keep_best(&mut lows, v, &p, KEEP, |a, b| a < b);
            keep_best(&mut highs, v, &p, KEEP, |a, b| a > b);
        }
        let step = 1.0 / self.curvature_bound().max(1e-300);
        let polish = |start: &[f64], sign: f64| {
            let mut p = start.to_vec();
            let mut best = self.evaluate(&p);
            for _ in 0..20 {
                let g = self.gradient(&p);
                let cand = linalg::axpy(&p, sign * step, &g);
                let v = self.evaluate(&cand);
                if sign * (v - best) > 0.0 {
                    best = v;
                    p = cand;
                } else {
                    break;
                }
            }
            best
        };
        let lo = lows.iter().map(|(_, p)| polish(p, -1.0)).fold(f64::INFINITY, f64::min);
        let hi = highs.iter().map(|(_, p)| polish(p, 1.0)).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Topological rank of the level surface `ε = level` (`N = 3` only).
    pub fn topological_rank(&self, level: f64, n: usize) -> Result<LevelSurfaceRank> {
        if self.dim() != 3 {
            return Err(Error::UnsupportedDimension(self.dim()));
        }
        topological_rank_grid(self, level, n)
    }
}

fn keep_best(list: &mut Vec<(f64, Vec<f64>)>, v: f64, p: &[f64], keep: usize, better: impl Fn(f64, f64) -> bool) {
    if list.len() < keep || better(v, list.last().unwrap().0) {
        let pos = list.iter().position(|(w, _)| better(v, *w)).unwrap_or(list.len());
        list.insert(pos, (v, p.to_vec()));
        list.truncate(keep);
    }
}

/// Rank of the image of `H₁(level surface) → H₁(T³)`, estimated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSurfaceRank {
    pub level: f64,
    pub rank: usize,
    pub resolution: usize,
    /// One entry per surface component that wraps around the torus; each
    /// holds an independent set of translation vectors (reciprocal-lattice
    /// coordinates).
    pub component_generators: Vec<Vec<Vec<i64>>>,
}

/// The surface is sampled on a cell-centred `n³` grid of the reciprocal cell.
/// Its graph has one vertex per grid edge crossed by the level and one arc
/// per contour segment on a grid face; ambiguous faces are split by the sign
/// of the face-centre value. Cycles of this graph that wrap around the torus
/// carry integer translation vectors whose span has the surface's rank.
fn topological_rank_grid(model: &DispersionModel, level: f64, n: usize) -> Result<LevelSurfaceRank> {
    let n = n.max(4);
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let mut values = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let u = [
                    (i as f64 + 0.5) / n as f64,
                    (j as f64 + 0.5) / n as f64,
                    (k as f64 + 0.5) / n as f64,
                ];
                values[idx(i, j, k)] = model.evaluate(&model.point_at(&u)) - level;
            }
        }
    }
    // degenerate cells: all eight corners on the level
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let flat = (0..8).all(|c| {
                    let (a, b, d) = ((i + (c & 1)) % n, (j + ((c >> 1) & 1)) % n, (k + ((c >> 2) & 1)) % n);
                    values[idx(a, b, d)].abs() < 1e-12
                });
                if flat {
                    return Err(Error::DegenerateLevel { level });
                }
            }
        }
    }
    let positive = |v: f64| v >= 0.0;
    // edge id = node * 3 + axis
    let edge_id = |node: usize, axis: usize| node * 3 + axis;
    let mut uf = PeriodicUnionFind::new(3 * n * n * n);
    let step = |c: [usize; 3], axis: usize| -> ([usize; 3], [i32; 4]) {
        let mut out = c;
        let mut wrap = [0i32; 4];
        out[axis] += 1;
        if out[axis] == n {
            out[axis] = 0;
            wrap[axis] = 1;
        }
        (out, wrap)
    };
    let node_of = |c: [usize; 3]| idx(c[0], c[1], c[2]);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let c0 = [i, j, k];
                for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
                    let (ca, wa) = step(c0, a);
                    let (cb, wb) = step(c0, b);
                    let (cab, wab_a) = step(ca, b);
                    let wab = [wa[0] + wab_a[0], wa[1] + wab_a[1], wa[2] + wab_a[2], 0];
                    let corners = [(c0, [0i32; 4]), (ca, wa), (cab, wab), (cb, wb)];
                    let vals: Vec<f64> = corners.iter().map(|(c, _)| values[node_of(*c)]).collect();
                    // face edges in cyclic order: (c0,a), (ca,b), (cb,a), (c0,b)
                    let edges = [
                        (edge_id(node_of(c0), a), [0i32; 4]),
                        (edge_id(node_of(ca), b), wa),
                        (edge_id(node_of(cb), a), wb),
                        (edge_id(node_of(c0), b), [0i32; 4]),
                    ];
                    let crossing = |e: usize| match e {
                        0 => positive(vals[0]) != positive(vals[1]),
                        1 => positive(vals[1]) != positive(vals[2]),
                        2 => positive(vals[3]) != positive(vals[2]),
                        _ => positive(vals[0]) != positive(vals[3]),
                    };
                    let crossed: Vec<usize> = (0..4).filter(|&e| crossing(e)).collect();
                    let mut link = |e1: usize, e2: usize| {
                        let (id1, w1) = edges[e1];
                        let (id2, w2) = edges[e2];
                        let t = [w2[0] - w1[0], w2[1] - w1[1], w2[2] - w1[2], 0];
                        uf.union(id1, id2, t);
                    };
                    match crossed.len() {
                        2 => link(crossed[0], crossed[1]),
                        4 => {
                            let centre = positive(vals.iter().sum::<f64>() / 4.0);
                            // isolate each corner whose sign differs from the centre
                            // corner c touches face edges (c-1 mod 4, c)
                            let touching = [(3usize, 0usize), (0, 1), (1, 2), (2, 3)];
                            for (c, &(e1, e2)) in touching.iter().enumerate() {
                                if positive(vals[c]) != centre {
                                    link(e1, e2);
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    let comps = uf.cycles_by_component();
    let mut component_generators = Vec::new();
    let mut rank = 0;
    for cycles in comps.values() {
        let gens = independent_generators(cycles, 3);
        rank = rank.max(gens.len());
        component_generators.push(gens);
    }
    Ok(LevelSurfaceRank {
        level,
        rank,
        resolution: n,
        component_generators,
    })
}
