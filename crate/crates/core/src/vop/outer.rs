use std::collections::HashSet;

use crate::error::Result;
use crate::geometry::dd::Dd;
use crate::geometry::linalg::{dot, null_and_range, scale};
use crate::geometry::{irredundant, lex_cmp, max_normalize, Halfspace, OrderingCone, Polyhedron};

/// Outer polyhedral approximation of an upper image, refined by cuts.
///
/// The lineality space of the ordering cone is factored out, so the
/// double description runs on a pointed cone.
pub(crate) struct OuterApprox {
    q: usize,
    lines: Vec<Vec<f64>>,
    basis: Vec<Vec<f64>>,
    dd: Dd,
    cuts: Vec<Halfspace>,
    cone: OrderingCone,
    verified: HashSet<Vec<u64>>,
}

fn key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

impl OuterApprox {
    pub fn new(cone: &OrderingCone, initial: Vec<Halfspace>) -> Result<Self> {
        let q = cone.dim();
        let (lines, basis) = null_and_range(cone.dual_generators(), q);
        let qr = basis.len();
        let mut rows = Vec::with_capacity(initial.len() + 1);
        let mut t = vec![0.0; qr + 1];
        t[qr] = 1.0;
        rows.push(t);
        for h in &initial {
            rows.push(reduce(&basis, h));
        }
        let dd = Dd::new(qr + 1, Some(qr), &rows)?;
        Ok(OuterApprox {
            q,
            lines,
            basis,
            dd,
            cuts: initial,
            cone: cone.clone(),
            verified: HashSet::new(),
        })
    }

    fn lift(&self, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.q];
        for (k, b) in self.basis.iter().enumerate() {
            for i in 0..self.q {
                y[i] += z[k] * b[i];
            }
        }
        y
    }

    /// Current vertices in a stable order.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let qr = self.basis.len();
        self.dd
            .rays()
            .iter()
            .filter(|r| r.v[qr] == 1.0)
            .map(|r| self.lift(&r.v[..qr]))
            .collect()
    }

    pub fn first_unverified(&self) -> Option<Vec<f64>> {
        self.vertices()
            .into_iter()
            .find(|v| !self.verified.contains(&key(v)))
    }

    pub fn mark_verified(&mut self, v: &[f64]) {
        self.verified.insert(key(v));
    }

    pub fn add_cut(&mut self, h: Halfspace) {
        let r = reduce(&self.basis, &h);
        self.dd.add(r);
        self.cuts.push(h);
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn to_polyhedron(&self) -> Polyhedron {
        let qr = self.basis.len();
        let mut vertices = Vec::new();
        let mut directions = Vec::new();
        for r in self.dd.rays() {
            let y = self.lift(&r.v[..qr]);
            if r.v[qr] == 1.0 {
                vertices.push(y);
            } else {
                directions.push(max_normalize(&y));
            }
        }
        for l in &self.lines {
            let l = max_normalize(l);
            directions.push(scale(&l, -1.0));
            directions.push(l);
        }
        vertices.sort_by(|a, b| lex_cmp(a, b));
        let hs = irredundant(self.cuts.clone(), &vertices, &directions, self.q);
        Polyhedron::from_parts_unchecked(hs, vertices, directions, self.cone.clone())
    }
}

fn reduce(basis: &[Vec<f64>], h: &Halfspace) -> Vec<f64> {
    let mut r: Vec<f64> = basis.iter().map(|b| dot(&h.normal, b)).collect();
    r.push(-h.offset);
    r
}
