use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

/// Exponents above this value are continued linearly when building cuts.
const EXP_CAP: f64 = 600.0;

/// A convex function of the decision vector.
pub trait ConvexFn: Send + Sync + Debug {
    /// Exact value.
    fn value(&self, x: &[f64]) -> f64;

    /// Value and sparse gradient at `x` of a convex minorant that agrees
    /// with the function wherever it is finite and moderate. The affine map
    /// `v + g^T (y - x)` must underestimate the function everywhere.
    fn linearize(&self, x: &[f64]) -> (f64, Vec<(usize, f64)>);

    /// Variables the function depends on.
    fn support(&self) -> Vec<usize>;
}

/// Sparse affine expression `sum c_j x_j + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        LinExpr { terms, constant }.compact()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(j: usize) -> Self {
        LinExpr {
            terms: vec![(j, 1.0)],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(j, v)| v * x[*j]).sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|(j, v)| (*j, v * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn plus(&self, other: &LinExpr) -> LinExpr {
        let mut t = self.terms.clone();
        t.extend_from_slice(&other.terms);
        LinExpr::new(t, self.constant + other.constant)
    }

    /// `sum_k w_k e_k`.
    pub fn combination(parts: &[(f64, &LinExpr)]) -> LinExpr {
        let mut t = Vec::new();
        let mut c = 0.0;
        for (w, e) in parts {
            if *w == 0.0 {
                continue;
            }
            t.extend(e.terms.iter().map(|(j, v)| (*j, v * w)));
            c += w * e.constant;
        }
        LinExpr::new(t, c)
    }

    /// Merges repeated variables and drops zero coefficients.
    fn compact(self) -> Self {
        let mut m: BTreeMap<usize, f64> = BTreeMap::new();
        for (j, v) in self.terms {
            *m.entry(j).or_insert(0.0) += v;
        }
        LinExpr {
            terms: m.into_iter().filter(|(_, v)| *v != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }
}

/// `coef * exp(arg(x))` with `coef >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerm {
    pub coef: f64,
    pub arg: LinExpr,
}

/// `sum_k coef_k exp(arg_k(x)) + linear(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSum {
    pub terms: Vec<ExpTerm>,
    pub linear: LinExpr,
}

impl ExpSum {
    pub fn new(terms: Vec<ExpTerm>, linear: LinExpr) -> Self {
        assert!(terms.iter().all(|t| t.coef >= 0.0), "negative exponential weight");
        ExpSum { terms, linear }
    }

    pub fn is_constant(&self) -> bool {
        self.linear.is_constant() && self.terms.iter().all(|t| t.arg.is_constant())
    }
}

impl ConvexFn for ExpSum {
    fn value(&self, x: &[f64]) -> f64 {
        self.linear.eval(x)
            + self
                .terms
                .iter()
                .map(|t| t.coef * t.arg.eval(x).exp())
                .sum::<f64>()
    }

    fn linearize(&self, x: &[f64]) -> (f64, Vec<(usize, f64)>) {
        let mut grad: Vec<(usize, f64)> = self.linear.terms.clone();
        let mut v = self.linear.eval(x);
        for t in &self.terms {
            let z = t.arg.eval(x);
            let (val, slope) = if z <= EXP_CAP {
                let e = z.exp();
                (e, e)
            } else {
                let e = EXP_CAP.exp();
                (e * (1.0 + z - EXP_CAP), e)
            };
            v += t.coef * val;
            let s = t.coef * slope;
            if s != 0.0 {
                grad.extend(t.arg.terms.iter().map(|(j, c)| (*j, c * s)));
            }
        }
        (v, LinExpr::new(grad, 0.0).terms)
    }

    fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.linear.terms.iter().map(|t| t.0).collect();
        for t in &self.terms {
            s.extend(t.arg.terms.iter().map(|p| p.0));
        }
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// `sum_i (x_{vars_i} - center_i)^2 - radius^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredNorm {
    pub vars: Vec<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl ConvexFn for SquaredNorm {
    fn value(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(&self.center)
            .map(|(j, c)| (x[*j] - c).powi(2))
            .sum::<f64>()
            - self.radius * self.radius
    }

    fn linearize(&self, x: &[f64]) -> (f64, Vec<(usize, f64)>) {
        let g = self
            .vars
            .iter()
            .zip(&self.center)
            .map(|(j, c)| (*j, 2.0 * (x[*j] - c)))
            .collect();
        (self.value(x), g)
    }

    fn support(&self) -> Vec<usize> {
        self.vars.clone()
    }
}

/// `sum_k w_k f_k(x) + linear(x)` with `w_k >= 0`.
#[derive(Debug, Clone)]
pub struct WeightedSum {
    parts: Vec<(f64, Arc<dyn ConvexFn>)>,
    linear: LinExpr,
}

impl WeightedSum {
    pub fn new(parts: Vec<(f64, Arc<dyn ConvexFn>)>, linear: LinExpr) -> Self {
        assert!(parts.iter().all(|p| p.0 >= 0.0));
        WeightedSum { parts, linear }
    }
}

impl ConvexFn for WeightedSum {
    fn value(&self, x: &[f64]) -> f64 {
        self.linear.eval(x) + self.parts.iter().map(|(w, f)| w * f.value(x)).sum::<f64>()
    }

    fn linearize(&self, x: &[f64]) -> (f64, Vec<(usize, f64)>) {
        let mut v = self.linear.eval(x);
        let mut g = self.linear.terms.clone();
        for (w, f) in &self.parts {
            let (fv, fg) = f.linearize(x);
            v += w * fv;
            g.extend(fg.into_iter().map(|(j, c)| (j, c * w)));
        }
        (v, LinExpr::new(g, 0.0).terms)
    }

    fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.linear.terms.iter().map(|t| t.0).collect();
        for (_, f) in &self.parts {
            s.extend(f.support());
        }
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_cut_is_a_minorant() {
        let f = ExpSum::new(
            vec![ExpTerm {
                coef: 2.0,
                arg: LinExpr::new(vec![(0, -1.0)], 0.5),
            }],
            LinExpr::new(vec![(1, 1.0)], -1.0),
        );
        let x0 = [0.3, 0.0];
        let (v, g) = f.linearize(&x0);
        assert!((v - f.value(&x0)).abs() < 1e-12);
        for k in -20..20 {
            let y = [k as f64 * 0.37, k as f64 * -0.11];
            let lin = v + g.iter().map(|(j, c)| c * (y[*j] - x0[*j])).sum::<f64>();
            assert!(lin <= f.value(&y) + 1e-9);
        }
    }

    #[test]
    fn overflow_safe_linearization() {
        let f = ExpSum::new(
            vec![ExpTerm {
                coef: 1.0,
                arg: LinExpr::var(0),
            }],
            LinExpr::default(),
        );
        let (v, g) = f.linearize(&[2000.0]);
        assert!(v.is_finite() && g[0].1.is_finite());
    }
}
