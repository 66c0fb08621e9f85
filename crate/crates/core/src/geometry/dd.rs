//! Double description method for pointed polyhedral cones `{x : A x >= 0}`.

use fixedbitset::FixedBitSet;

use super::linalg::{canonical_sign, dot, inverse, norm2, null_and_range, scale};
use crate::error::{Error, Result};

const ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct Ray {
    pub v: Vec<f64>,
    pub zeros: FixedBitSet,
}

/// Incremental double description of a pointed cone.
///
/// When `homog` is set, that coordinate plays the role of the
/// homogenising variable: rays with a positive value there are scaled so
/// that it equals one, other rays are scaled to unit length.
#[derive(Debug, Clone)]
pub(crate) struct Dd {
    dim: usize,
    homog: Option<usize>,
    normals: Vec<Vec<f64>>,
    rays: Vec<Ray>,
}

fn is_zero(c: &[f64], v: &[f64], val: f64) -> bool {
    let mag: f64 = c.iter().zip(v).map(|(a, b)| (a * b).abs()).sum();
    val.abs() <= ZERO_TOL * (1.0 + mag)
}

impl Dd {
    /// Starts from the constraints in `rows`, which must have full rank.
    pub fn new(dim: usize, homog: Option<usize>, rows: &[Vec<f64>]) -> Result<Dd> {
        let mut chosen: Vec<usize> = Vec::new();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if chosen.len() == dim {
                break;
            }
            let n = norm2(r);
            if n == 0.0 {
                continue;
            }
            let mut w = scale(r, 1.0 / n);
            for b in &basis {
                let d = dot(&w, b);
                for k in 0..dim {
                    w[k] -= d * b[k];
                }
            }
            let wn = norm2(&w);
            if wn > 1e-9 {
                basis.push(scale(&w, 1.0 / wn));
                chosen.push(i);
            }
        }
        if chosen.len() < dim {
            return Err(Error::NumericFailure(format!(
                "cone is not pointed: constraint rank {} < {}",
                chosen.len(),
                dim
            )));
        }
        let a: Vec<Vec<f64>> = chosen.iter().map(|&i| rows[i].clone()).collect();
        let inv = inverse(&a)
            .ok_or_else(|| Error::NumericFailure("singular initial constraint block".into()))?;
        let mut dd = Dd {
            dim,
            homog,
            normals: a.clone(),
            rays: Vec::new(),
        };
        for j in 0..dim {
            let v: Vec<f64> = (0..dim).map(|i| inv[i][j]).collect();
            let mut zeros = FixedBitSet::with_capacity(dim);
            for k in 0..dim {
                if k != j {
                    zeros.insert(k);
                }
            }
            let v = dd.rescale(v);
            dd.rays.push(Ray { v, zeros });
        }
        for (i, r) in rows.iter().enumerate() {
            if !chosen.contains(&i) {
                dd.add(r.clone());
            }
        }
        Ok(dd)
    }

    fn rescale(&self, v: Vec<f64>) -> Vec<f64> {
        if let Some(h) = self.homog {
            let scale_ref = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if v[h] > 1e-13 * scale_ref.max(1e-300) {
                let t = v[h];
                let mut w = scale(&v, 1.0 / t);
                w[h] = 1.0;
                return w;
            }
            let mut w = v;
            w[h] = 0.0;
            let n = norm2(&w);
            return scale(&w, 1.0 / n);
        }
        let n = norm2(&v);
        scale(&v, 1.0 / n)
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    /// Intersects the cone with `{x : c^T x >= 0}`.
    pub fn add(&mut self, c: Vec<f64>) {
        let idx = self.normals.len();
        let vals: Vec<f64> = self.rays.iter().map(|r| dot(&c, &r.v)).collect();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut zero = Vec::new();
        for (i, r) in self.rays.iter().enumerate() {
            if is_zero(&c, &r.v, vals[i]) {
                zero.push(i);
            } else if vals[i] > 0.0 {
                pos.push(i);
            } else {
                neg.push(i);
            }
        }
        let cap = idx + 1;
        let mut next: Vec<Ray> = Vec::with_capacity(self.rays.len());
        if !neg.is_empty() {
            for &p in &pos {
                for &n in &neg {
                    if !self.adjacent(p, n) {
                        continue;
                    }
                    let rp = &self.rays[p];
                    let rn = &self.rays[n];
                    let (vp, vn) = (vals[p], -vals[n]);
                    let v: Vec<f64> = (0..self.dim)
                        .map(|k| vp * rn.v[k] + vn * rp.v[k])
                        .collect();
                    let mut zeros = rp.zeros.clone();
                    zeros.intersect_with(&rn.zeros);
                    zeros.grow(cap);
                    zeros.insert(idx);
                    let v = self.rescale(v);
                    next.push(Ray { v, zeros });
                }
            }
        }
        let mut kept: Vec<Ray> = Vec::with_capacity(pos.len() + zero.len() + next.len());
        for (i, r) in self.rays.iter().enumerate() {
            let z = zero.contains(&i);
            if z || pos.contains(&i) {
                let mut r = r.clone();
                r.zeros.grow(cap);
                if z {
                    r.zeros.insert(idx);
                }
                kept.push(r);
            }
        }
        kept.extend(next);
        self.normals.push(c);
        self.rays = merge_duplicates(kept);
    }

    fn adjacent(&self, p: usize, n: usize) -> bool {
        let mut common = self.rays[p].zeros.clone();
        common.intersect_with(&self.rays[n].zeros);
        if common.count_ones(..) + 2 < self.dim {
            return false;
        }
        for (k, r) in self.rays.iter().enumerate() {
            if k != p && k != n && common.is_subset(&r.zeros) {
                return false;
            }
        }
        true
    }
}

fn merge_duplicates(rays: Vec<Ray>) -> Vec<Ray> {
    let mut out: Vec<Ray> = Vec::with_capacity(rays.len());
    'outer: for r in rays {
        for o in out.iter_mut() {
            let scale_ref = 1.0 + o.v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let diff = o.v.iter().zip(&r.v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if diff <= 1e-10 * scale_ref {
                o.zeros.union_with(&r.zeros);
                continue 'outer;
            }
        }
        out.push(r);
    }
    out
}

/// Generators of a general cone `{x : rows x >= 0}`: extreme rays of its
/// pointed part together with an orthonormal basis of its lineality space.
pub(crate) struct ConeGenerators {
    pub rays: Vec<Vec<f64>>,
    pub lines: Vec<Vec<f64>>,
}

/// Computes the generators of `{x in R^dim : r^T x >= 0 for r in rows}`.
///
/// With `homog = Some(h)`, coordinate `h` is kept as an explicit axis of
/// the reduced space so ray scaling can refer to it.
pub(crate) fn cone_generators(
    rows: &[Vec<f64>],
    dim: usize,
    homog: Option<usize>,
) -> Result<ConeGenerators> {
    let (lines, range) = null_and_range(rows, dim);
    let lines: Vec<Vec<f64>> = lines.into_iter().map(canonical_sign).collect();
    if range.is_empty() {
        return Ok(ConeGenerators {
            rays: Vec::new(),
            lines,
        });
    }
    // Basis of the reduced space.
    let basis: Vec<Vec<f64>> = match homog {
        None => range,
        Some(h) => {
            let mut b: Vec<Vec<f64>> = Vec::new();
            for v in range {
                let mut w = v.clone();
                w[h] = 0.0;
                for u in &b {
                    let d = dot(&w, u);
                    for k in 0..dim {
                        w[k] -= d * u[k];
                    }
                }
                let n = norm2(&w);
                if n > 1e-9 {
                    b.push(scale(&w, 1.0 / n));
                }
            }
            let mut e = vec![0.0; dim];
            e[h] = 1.0;
            b.push(e);
            b
        }
    };
    let rdim = basis.len();
    let reduced: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| basis.iter().map(|b| dot(r, b)).collect())
        .collect();
    let rh = homog.map(|_| rdim - 1);
    let dd = Dd::new(rdim, rh, &reduced)?;
    let mut rays = Vec::with_capacity(dd.rays().len());
    for r in dd.rays() {
        let mut v = vec![0.0; dim];
        for (k, b) in basis.iter().enumerate() {
            for i in 0..dim {
                v[i] += r.v[k] * b[i];
            }
        }
        if let Some(h) = homog {
            if r.v[rdim - 1] == 1.0 {
                v[h] = 1.0;
            } else {
                v[h] = 0.0;
                let n = norm2(&v);
                v = scale(&v, 1.0 / n);
            }
        } else {
            let n = norm2(&v);
            v = scale(&v, 1.0 / n);
        }
        rays.push(v);
    }
    Ok(ConeGenerators { rays, lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthant_has_unit_rays() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let g = cone_generators(&rows, 3, None).unwrap();
        assert_eq!(g.rays.len(), 3);
        assert!(g.lines.is_empty());
    }

    #[test]
    fn square_pyramid_has_four_rays() {
        // Cone over the square [-1,1]^2 at height 1.
        let rows = vec![
            vec![1.0, 0.0, 1.0],
            vec![-1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![0.0, -1.0, 1.0],
        ];
        let g = cone_generators(&rows, 3, Some(2)).unwrap();
        assert_eq!(g.rays.len(), 4);
        for r in &g.rays {
            assert!((r[2] - 1.0).abs() < 1e-12);
            assert!((r[0].abs() - 1.0).abs() < 1e-12 && (r[1].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn halfspace_has_a_line() {
        let g = cone_generators(&[vec![1.0, 1.0]], 2, None).unwrap();
        assert_eq!(g.lines.len(), 1);
        assert_eq!(g.rays.len(), 1);
        assert!((g.rays[0][0] - g.rays[0][1]).abs() < 1e-12);
    }
}
