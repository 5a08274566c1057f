//! Union–find over a periodic graph with integer lift offsets.
//!
//! Nodes live in a fundamental domain; every edge carries the integer
//! translation between the lift of its endpoints. Closing a cycle whose
//! accumulated translation is nonzero records a homology class in `ℤᴺ`.

use std::collections::BTreeMap;

use crate::linalg::integer_rank;

pub type Shift = [i32; 4];

fn add(a: &Shift, b: &Shift) -> Shift {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn neg(a: &Shift) -> Shift {
    [-a[0], -a[1], -a[2], -a[3]]
}

pub fn shift_from(v: &[i64]) -> Shift {
    let mut s = [0; 4];
    for (o, &x) in s.iter_mut().zip(v) {
        *o = x as i32;
    }
    s
}

#[derive(Debug, Clone)]
pub struct PeriodicUnionFind {
    parent: Vec<u32>,
    /// lift(node) = lift(parent) + offset
    offset: Vec<Shift>,
    size: Vec<u32>,
    cycles: Vec<(u32, Shift)>,
}

impl PeriodicUnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            offset: vec![[0; 4]; n],
            size: vec![1; n],
            cycles: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Root of `x` and the offset `lift(x) − lift(root)`.
    pub fn find(&mut self, x: usize) -> (usize, Shift) {
        let mut path = Vec::new();
        let mut cur = x;
        while self.parent[cur] as usize != cur {
            path.push(cur);
            cur = self.parent[cur] as usize;
        }
        let root = cur;
        // path compression, accumulating offsets from the root downwards
        let mut acc = [0; 4];
        for &node in path.iter().rev() {
            acc = add(&acc, &self.offset[node]);
            self.offset[node] = acc;
            self.parent[node] = root as u32;
        }
        (root, if path.is_empty() { [0; 4] } else { self.offset[x] })
    }

    /// Connect `u` and `v` with `lift(v) = lift(u) + t`. Returns the cycle
    /// class when the edge closes a cycle with nonzero translation.
    pub fn union(&mut self, u: usize, v: usize, t: Shift) -> Option<Shift> {
        let (ru, ou) = self.find(u);
        let (rv, ov) = self.find(v);
        if ru == rv {
            let cycle = add(&add(&ou, &t), &neg(&ov));
            if cycle != [0; 4] {
                self.cycles.push((ru as u32, cycle));
                return Some(cycle);
            }
            return None;
        }
        // lift(rv) = lift(ru) + ou + t − ov
        let rel = add(&add(&ou, &t), &neg(&ov));
        if self.size[ru] >= self.size[rv] {
            self.parent[rv] = ru as u32;
            self.offset[rv] = rel;
            self.size[ru] += self.size[rv];
        } else {
            self.parent[ru] = rv as u32;
            self.offset[ru] = neg(&rel);
            self.size[rv] += self.size[ru];
        }
        None
    }

    pub fn connected(&mut self, u: usize, v: usize) -> bool {
        self.find(u).0 == self.find(v).0
    }

    /// Nonzero cycle classes grouped by the final component root.
    pub fn cycles_by_component(&mut self) -> BTreeMap<usize, Vec<Shift>> {
        let cycles = std::mem::take(&mut self.cycles);
        let mut out: BTreeMap<usize, Vec<Shift>> = BTreeMap::new();
        for (r, c) in &cycles {
            let root = self.find(*r as usize).0;
            out.entry(root).or_default().push(*c);
        }
        self.cycles = cycles;
        out
    }

    pub fn has_cycles(&self) -> bool {
        !self.cycles.is_empty()
    }
}

/// Greedy maximal independent subset of integer vectors (first `dim` coords).
pub fn independent_generators(vectors: &[Shift], dim: usize) -> Vec<Vec<i64>> {
    let mut basis: Vec<Vec<i64>> = Vec::new();
    for v in vectors {
        if basis.len() == dim {
            break;
        }
        let cand: Vec<i64> = v[..dim].iter().map(|&x| i64::from(x)).collect();
        let mut trial = basis.clone();
        trial.push(cand.clone());
        if integer_rank(&trial) > basis.len() {
            basis.push(cand);
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_around_a_circle_records_its_winding() {
        // 4 nodes on a circle of period 1 in the first coordinate
        let mut uf = PeriodicUnionFind::new(4);
        assert_eq!(uf.union(0, 1, [0; 4]), None);
        assert_eq!(uf.union(1, 2, [0; 4]), None);
        assert_eq!(uf.union(2, 3, [0; 4]), None);
        assert_eq!(uf.union(3, 0, [1, 0, 0, 0]), Some([1, 0, 0, 0]));
        let comps = uf.cycles_by_component();
        assert_eq!(comps.len(), 1);
    }

    #[test]
    fn contractible_cycles_are_not_recorded() {
        let mut uf = PeriodicUnionFind::new(3);
        uf.union(0, 1, [1, 0, 0, 0]);
        uf.union(1, 2, [0, 1, 0, 0]);
        assert_eq!(uf.union(2, 0, [-1, -1, 0, 0]), None);
        assert!(!uf.has_cycles());
    }

    #[test]
    fn offsets_survive_merging_by_size() {
        let mut uf = PeriodicUnionFind::new(5);
        uf.union(0, 1, [0, 1, 0, 0]);
        uf.union(2, 3, [0, 0, 1, 0]);
        uf.union(3, 4, [0, 0, 1, 0]);
        uf.union(1, 4, [2, 0, 0, 0]);
        // lift(0)=0, lift(1)=(0,1,0), lift(4)=(2,1,0), lift(3)=(2,1,-1), lift(2)=(2,1,-2)
        let c = uf.union(0, 2, [0, 0, 0, 0]).unwrap();
        assert_eq!(c, [-2, -1, 2, 0]);
        let (r0, o0) = uf.find(0);
        let (r2, o2) = uf.find(2);
        assert_eq!(r0, r2);
        assert_eq!(add(&o2, &neg(&o0)), [2, 1, -2, 0]);
    }
}
