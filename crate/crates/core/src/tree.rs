//! Recombining multinomial event trees for correlated log-normal assets.
//!
//! Asset 0 is a bond; assets `1..d` are risky. Each step draws a shock
//! vector from the finite grid `{-nu, -nu + 2 nu/(n-1), ..., nu}^(d-1)`
//! with probabilities equal to the Gaussian mass of the surrounding box.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Compounding {
    #[default]
    Continuous,
    Simple,
}

/// Parameters of the tree. Vectors indexed by risky asset have length
/// `d - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub d: usize,
    pub steps: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    pub branches: usize,
    pub nu: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub rho: Option<Vec<Vec<f64>>>,
    pub s0: Vec<f64>,
    pub rate: f64,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub compounding: Compounding,
}

fn one() -> f64 {
    1.0
}

impl TreeParams {
    pub fn risky(&self) -> usize {
        self.d - 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn correlation(&self) -> Vec<Vec<f64>> {
        let k = self.risky();
        match &self.rho {
            Some(r) => r.clone(),
            None => (0..k)
                .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameters(m.to_string()));
        if self.d < 2 {
            return bad("need at least one risky asset");
        }
        if self.steps == 0 {
            return bad("number of steps must be positive");
        }
        if self.branches < 2 {
            return bad("need at least two branches per asset");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("grid half-width must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        let k = self.risky();
        if self.mu.len() != k || self.sigma.len() != k || self.s0.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "mu, sigma and s0 need {k} entries"
            )));
        }
        if !self.gamma.is_empty() && self.gamma.len() != k {
            return Err(Error::DimensionMismatch(format!("gamma needs {k} entries")));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("volatilities must be positive");
        }
        if self.s0.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("initial prices must be positive");
        }
        if self.gamma.iter().any(|g| !(*g >= 0.0 && *g < 1.0)) {
            return bad("transaction cost rates must lie in [0, 1)");
        }
        if !self.rate.is_finite() || self.mu.iter().any(|m| !m.is_finite()) {
            return bad("rates must be finite");
        }
        let rho = self.correlation();
        if rho.len() != k || rho.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("correlation matrix shape".into()));
        }
        for i in 0..k {
            if (rho[i][i] - 1.0).abs() > 1e-12 {
                return bad("correlation matrix needs a unit diagonal");
            }
            for j in 0..k {
                if (rho[i][j] - rho[j][i]).abs() > 1e-12 {
                    return bad("correlation matrix must be symmetric");
                }
            }
        }
        if cholesky(&rho).is_none() {
            return bad("correlation matrix must be positive definite");
        }
        if self.compounding == Compounding::Simple && 1.0 + self.rate * self.horizon <= 0.0 {
            return bad("bond price must stay positive");
        }
        Ok(())
    }

    pub fn gamma_of(&self, i: usize) -> f64 {
        self.gamma.get(i).copied().unwrap_or(0.0)
    }
}

/// Grid points of one coordinate.
pub fn grid(n: usize, nu: f64) -> Vec<f64> {
    (0..n)
        .map(|j| -nu + 2.0 * nu * j as f64 / (n as f64 - 1.0))
        .collect()
}

/// All shock vectors for `d - 1` risky assets, in lexicographic order of
/// grid indices with the first asset most significant.
pub fn scenario_set(n: usize, nu: f64, d: usize) -> Vec<Vec<f64>> {
    let g = grid(n, nu);
    let k = d - 1;
    let count = n.pow(k as u32);
    (0..count)
        .map(|s| digits(s, n, k).iter().map(|&j| g[j]).collect())
        .collect()
}

fn digits(mut s: usize, n: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    for i in (0..k).rev() {
        out[i] = s % n;
        s /= n;
    }
    out
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = a.len();
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                let v = a[i][i] - s;
                if v <= 1e-12 {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = z;
    }
    (x, w)
}

/// Gaussian mass of an axis-aligned box under a correlation matrix.
struct BoxIntegrator {
    l: Vec<Vec<f64>>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const TRUNC: f64 = 10.0;
const PANEL: f64 = 0.5;

impl BoxIntegrator {
    fn new(rho: &[Vec<f64>]) -> Option<Self> {
        let l = cholesky(rho)?;
        let (nodes, weights) = gauss_legendre(16);
        Some(BoxIntegrator { l, nodes, weights })
    }

    fn mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut z = Vec::with_capacity(lo.len());
        self.rec(lo, hi, &mut z)
    }

    fn rec(&self, lo: &[f64], hi: &[f64], z: &mut Vec<f64>) -> f64 {
        let i = z.len();
        let shift: f64 = (0..i).map(|j| self.l[i][j] * z[j]).sum();
        let a = (lo[i] - shift) / self.l[i][i];
        let b = (hi[i] - shift) / self.l[i][i];
        if i + 1 == lo.len() {
            return if b > 0.0 && a > 0.0 {
                0.5 * (erfc(a / std::f64::consts::SQRT_2) - erfc(b / std::f64::consts::SQRT_2))
            } else {
                normal_cdf(b) - normal_cdf(a)
            };
        }
        let a = a.max(-TRUNC);
        let b = b.min(TRUNC);
        if a >= b {
            return 0.0;
        }
        let panels = ((b - a) / PANEL).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let c = a + h * (p as f64 + 0.5);
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                let zi = c + 0.5 * h * x;
                z.push(zi);
                total += 0.5 * h * w * normal_pdf(zi) * self.rec(lo, hi, z);
                z.pop();
            }
        }
        total
    }
}

/// Probability of each scenario: the mass of the box around its grid point
/// bounded by midpoints to the neighbouring grid points, with the outer
/// boxes extending to infinity. The masses are renormalized to sum to one.
pub fn box_probabilities(n: usize, nu: f64, rho: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = rho.len();
    if k == 0 || k > 2 {
        return Err(Error::Unsupported(format!(
            "box probabilities for {k} risky assets"
        )));
    }
    let g = grid(n, nu);
    let mut cuts = vec![f64::NEG_INFINITY];
    for j in 0..n - 1 {
        cuts.push(0.5 * (g[j] + g[j + 1]));
    }
    cuts.push(f64::INFINITY);
    let raw: Vec<f64> = if k == 1 {
        (0..n)
            .map(|j| {
                let (a, b) = (cuts[j], cuts[j + 1]);
                if a > 0.0 {
                    0.5 * (erfc(a / std::f64::consts::SQRT_2) - erfc(b / std::f64::consts::SQRT_2))
                } else {
                    normal_cdf(b) - normal_cdf(a)
                }
            })
            .collect()
    } else {
        let integ = BoxIntegrator::new(rho)
            .ok_or_else(|| Error::InvalidParameters("correlation matrix not positive definite".into()))?;
        (0..n * n)
            .map(|s| {
                let dg = digits(s, n, 2);
                let lo: Vec<f64> = dg.iter().map(|&j| cuts[j]).collect();
                let hi: Vec<f64> = dg.iter().map(|&j| cuts[j + 1]).collect();
                integ.mass(&lo, &hi)
            })
            .collect()
    };
    if raw.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::NumericFailure("scenario with zero probability".into()));
    }
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// Identifier of a node: time and flat index within its time slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub time: usize,
    pub index: usize,
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.time, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    /// Cumulative grid index per risky asset.
    pub state: Vec<usize>,
    pub mid: Vec<f64>,
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
    pub bond: f64,
    /// Children at the next time, in scenario order; empty at maturity.
    pub successors: Vec<usize>,
}

/// The recombining tree. Transition probabilities are the same at every
/// node and listed once in scenario order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub params: TreeParams,
    pub scenarios: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub layers: Vec<Vec<TreeNode>>,
}

impl Tree {
    pub fn steps(&self) -> usize {
        self.params.steps
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.layers[id.time][id.index]
    }

    pub fn root(&self) -> &TreeNode {
        &self.layers[0][0]
    }

    pub fn layer(&self, t: usize) -> &[TreeNode] {
        &self.layers[t]
    }

    pub fn num_scenarios(&self) -> usize {
        self.probabilities.len()
    }

    /// Node reached from `id` under scenario `s`.
    pub fn child(&self, id: NodeId, s: usize) -> NodeId {
        NodeId {
            time: id.time + 1,
            index: self.node(id).successors[s],
        }
    }

    /// A scenario sequence from the root reaching `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<usize> {
        let n = self.params.branches;
        let k = self.params.risky();
        let mut left = self.node(id).state.clone();
        let mut path = Vec::with_capacity(id.time);
        for _ in 0..id.time {
            let digits: Vec<usize> = left.iter().map(|c| (*c).min(n - 1)).collect();
            for i in 0..k {
                left[i] -= digits[i];
            }
            path.push(digits.iter().fold(0, |acc, j| acc * n + j));
        }
        path
    }

    /// Nodes visited along a sequence of scenario indices from the root.
    pub fn follow(&self, path: &[usize]) -> Result<Vec<NodeId>> {
        if path.len() > self.steps() {
            return Err(Error::InvalidParameters(format!(
                "path has {} steps, tree has {}",
                path.len(),
                self.steps()
            )));
        }
        let mut ids = vec![NodeId { time: 0, index: 0 }];
        for &s in path {
            if s >= self.num_scenarios() {
                return Err(Error::InvalidParameters(format!("scenario index {s} out of range")));
            }
            let cur = *ids.last().expect("nonempty");
            ids.push(self.child(cur, s));
        }
        Ok(ids)
    }
}

/// Builds the recombining tree.
pub fn build_tree(p: &TreeParams) -> Result<Tree> {
    p.validate()?;
    let k = p.risky();
    let n = p.branches;
    let dt = p.dt();
    let rho = p.correlation();
    let probabilities = box_probabilities(n, p.nu, &rho)?;
    let scenarios = scenario_set(n, p.nu, p.d);
    let step = 2.0 * p.nu / (n as f64 - 1.0);
    let mut layers = Vec::with_capacity(p.steps + 1);
    for t in 0..=p.steps {
        let base = t * (n - 1) + 1;
        let count = base.pow(k as u32);
        let bond = match p.compounding {
            Compounding::Continuous => (p.rate * t as f64 * dt).exp(),
            Compounding::Simple => 1.0 + p.rate * t as f64 * dt,
        };
        let mut layer = Vec::with_capacity(count);
        for idx in 0..count {
            let state = digits(idx, base, k);
            let mid: Vec<f64> = (0..k)
                .map(|i| {
                    let shocks = -p.nu * t as f64 + step * state[i] as f64;
                    let drift = (p.mu[i] - 0.5 * p.sigma[i] * p.sigma[i]) * dt * t as f64;
                    p.s0[i] * (drift + p.sigma[i] * dt.sqrt() * shocks).exp()
                })
                .collect();
            if mid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::NumericFailure(format!(
                    "price overflow at time {t}; reduce nu, sigma or the number of steps"
                )));
            }
            let bid = (0..k).map(|i| mid[i] * (1.0 - p.gamma_of(i))).collect();
            let ask = (0..k).map(|i| mid[i] * (1.0 + p.gamma_of(i))).collect();
            let successors = if t < p.steps {
                let nb = base + n - 1;
                (0..n.pow(k as u32))
                    .map(|s| {
                        let dg = digits(s, n, k);
                        (0..k).fold(0, |acc, i| acc * nb + state[i] + dg[i])
                    })
                    .collect()
            } else {
                Vec::new()
            };
            layer.push(TreeNode {
                id: NodeId { time: t, index: idx },
                state,
                mid,
                bid,
                ask,
                bond,
                successors,
            });
        }
        layers.push(layer);
    }
    Ok(Tree {
        params: p.clone(),
        scenarios,
        probabilities,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, n: usize) -> TreeParams {
        TreeParams {
            d,
            steps: 2,
            horizon: 1.0,
            branches: n,
            nu: 1.0,
            mu: vec![0.1; d - 1],
            sigma: vec![0.3; d - 1],
            rho: None,
            s0: vec![1.0; d - 1],
            rate: 0.05,
            gamma: vec![0.01; d - 1],
            compounding: Compounding::Continuous,
        }
    }

    #[test]
    fn grid_example() {
        let s = scenario_set(3, 2.0, 2);
        assert_eq!(s, vec![vec![-2.0], vec![0.0], vec![2.0]]);
    }

    #[test]
    fn binomial_probabilities_are_halves() {
        let p = box_probabilities(2, 1.0, &[vec![1.0]]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn univariate_boxes_match_cdf_differences() {
        let p = box_probabilities(5, 2.0, &[vec![1.0]]).unwrap();
        let cuts = [-1.5, -0.5, 0.5, 1.5];
        let phi = |x: f64| normal_cdf(x);
        let expect = [
            phi(cuts[0]),
            phi(cuts[1]) - phi(cuts[0]),
            phi(cuts[2]) - phi(cuts[1]),
            phi(cuts[3]) - phi(cuts[2]),
            1.0 - phi(cuts[3]),
        ];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bivariate_quadrants() {
        // Orthant probability 1/4 + asin(rho) / (2 pi).
        let rho = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        let p = box_probabilities(2, 1.0, &rho).unwrap();
        let same = 0.25 + (0.5f64).asin() / (2.0 * std::f64::consts::PI);
        let diff = 0.5 - same;
        let expect = [same, diff, diff, same];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recombining_node_counts() {
        for (d, n) in [(2, 2), (2, 5), (3, 2), (3, 3)] {
            let tree = build_tree(&params(d, n)).unwrap();
            for t in 0..=2 {
                assert_eq!(tree.layer(t).len(), (t * (n - 1) + 1).pow((d - 1) as u32));
            }
        }
    }

    #[test]
    fn prices_and_bond() {
        let tree = build_tree(&params(2, 2)).unwrap();
        let dt: f64 = 0.5;
        let up = ((0.1 - 0.045) * dt + 0.3 * dt.sqrt()).exp();
        let child = tree.node(tree.child(NodeId { time: 0, index: 0 }, 1));
        assert!((child.mid[0] - up).abs() < 1e-14);
        assert!((child.ask[0] - up * 1.01).abs() < 1e-14);
        assert!((child.bid[0] - up * 0.99).abs() < 1e-14);
        assert!((child.bond - (0.05 * dt).exp()).abs() < 1e-15);
        // Up then down equals down then up.
        let a = tree.follow(&[1, 0]).unwrap();
        let b = tree.follow(&[0, 1]).unwrap();
        assert_eq!(a[2], b[2]);
        for node in tree.layer(2) {
            assert_eq!(*tree.follow(&tree.path_to(node.id)).unwrap().last().unwrap(), node.id);
        }
    }

    #[test]
    fn discounted_mid_is_nearly_a_martingale() {
        for (n, tol) in [(2, 0.10), (5, 0.02), (9, 0.02)] {
            let mut p = params(2, n);
            p.mu = vec![p.rate];
            p.gamma = vec![0.0];
            let tree = build_tree(&p).unwrap();
            let root = tree.root();
            let mut e = 0.0;
            for s in 0..tree.num_scenarios() {
                let c = tree.node(tree.child(root.id, s));
                e += tree.probabilities[s] * c.mid[0] / c.bond;
            }
            assert!((e - root.mid[0]).abs() <= tol * root.mid[0], "n={n}: {e}");
        }
    }

    #[test]
    fn three_point_grid_probabilities() {
        let p = box_probabilities(3, 1.0, &[vec![1.0]]).unwrap();
        let a = normal_cdf(-0.5);
        assert!((p[0] - a).abs() < 1e-15 && (p[2] - a).abs() < 1e-15);
        assert!((p[0] - 0.3085).abs() < 1e-4 && (p[1] - 0.3829).abs() < 1e-4);
        assert!(box_probabilities(2, 1.0, &vec![vec![1.0, 0.0, 0.0]; 3]).is_err());
    }

    #[test]
    fn invalid_parameters() {
        let mut p = params(2, 2);
        p.sigma = vec![-1.0];
        assert!(build_tree(&p).is_err());
        let mut p = params(3, 2);
        p.rho = Some(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(build_tree(&p).is_err());
        let mut p = params(2, 1);
        p.branches = 1;
        assert!(build_tree(&p).is_err());
    }
}
