//! Market frictions: proportional-cost solvency cones, convex solvency
//! regions and polyhedral trading constraints.
//!
//! Asset 0 is the bond and plays the role of cash: every exchange between
//! risky assets goes through it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::linalg::dot;
use crate::geometry::OrderingCone;
use crate::lp::{Constraint, LinearProgram, LpStatus, Relation, Simplex};
use crate::tree::TreeNode;
use crate::vop::{ConvexFn, ExpSum, ExpTerm, LinExpr};

/// Exponents are clamped here when evaluating the convex region.
const EXP_CLAMP: f64 = 700.0;

/// Cone generated by the bid/ask trade columns and the unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvencyCone {
    generators: Vec<Vec<f64>>,
}

impl SolvencyCone {
    /// Raw generators: the trade columns followed by the unit vectors.
    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    /// Buy and sell columns, two per risky asset.
    pub fn trade_generators(&self) -> &[Vec<f64>] {
        let d = self.dim();
        &self.generators[..2 * (d - 1)]
    }

    pub fn dim(&self) -> usize {
        self.generators[0].len()
    }

    pub fn ordering_cone(&self) -> Result<OrderingCone> {
        OrderingCone::from_generators(&self.generators)
    }
}

/// Solvency cone for bid and ask prices quoted in cash and bond price `bond`.
pub fn proportional_cone(bid: &[f64], ask: &[f64], bond: f64) -> Result<SolvencyCone> {
    if bid.len() != ask.len() || bid.is_empty() {
        return Err(Error::DimensionMismatch("bid and ask prices".into()));
    }
    if !(bond > 0.0) || bid.iter().chain(ask).any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidParameters("prices must be positive".into()));
    }
    if bid.iter().zip(ask).any(|(b, a)| b > a) {
        return Err(Error::InvalidParameters("bid above ask".into()));
    }
    let d = bid.len() + 1;
    let mut generators = Vec::with_capacity(3 * d - 2);
    for i in 0..d - 1 {
        let mut buy = vec![0.0; d];
        buy[0] = ask[i] / bond;
        buy[i + 1] = -1.0;
        generators.push(buy);
    }
    for i in 0..d - 1 {
        let mut sell = vec![0.0; d];
        sell[0] = -bid[i] / bond;
        sell[i + 1] = 1.0;
        generators.push(sell);
    }
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        generators.push(e);
    }
    Ok(SolvencyCone { generators })
}

/// Convex solvency region of a bond and one risky asset. Buying risky
/// units with cash saturates at `theta[1]` units, selling saturates at
/// `theta[0]` units of cash.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexRegion {
    pub theta: [f64; 2],
    pub bid: f64,
    pub ask: f64,
}

impl ConvexRegion {
    pub fn new(theta: [f64; 2], bid: f64, ask: f64) -> Result<Self> {
        if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameters("theta must be positive".into()));
        }
        if !(bid > 0.0 && ask >= bid && ask.is_finite()) {
            return Err(Error::InvalidParameters("need 0 < bid <= ask".into()));
        }
        Ok(ConvexRegion { theta, bid, ask })
    }

    /// The two dual maps; `k` is solvent iff both are nonnegative.
    pub fn eval(&self, k: [f64; 2]) -> [f64; 2] {
        let [t0, t1] = self.theta;
        let e0 = (-self.bid * k[1] / t0).min(EXP_CLAMP).exp_m1();
        let e1 = (-k[0] / (self.ask * t1)).min(EXP_CLAMP).exp_m1();
        [k[0] - t0 * e0, k[1] - t1 * e1]
    }

    pub fn contains(&self, k: [f64; 2], tol: f64) -> bool {
        let v = self.eval(k);
        v[0] >= -tol && v[1] >= -tol
    }

    /// Constraints `g(k) <= 0` equivalent to membership, for affine `k`.
    pub fn constraints(&self, k: &[LinExpr; 2]) -> [ExpSum; 2] {
        let [t0, t1] = self.theta;
        let g0 = ExpSum::new(
            vec![ExpTerm {
                coef: t0,
                arg: k[1].scaled(-self.bid / t0),
            }],
            k[0].scaled(-1.0).plus(&LinExpr::constant(-t0)),
        );
        let g1 = ExpSum::new(
            vec![ExpTerm {
                coef: t1,
                arg: k[0].scaled(-1.0 / (self.ask * t1)),
            }],
            k[1].scaled(-1.0).plus(&LinExpr::constant(-t1)),
        );
        [g0, g1]
    }
}

/// Polyhedral set `{k : a^T k >= b}` of admissible trades.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TradingConstraint {
    pub rows: Vec<(Vec<f64>, f64)>,
}

impl TradingConstraint {
    /// `|k_i| <= bound` for every asset.
    pub fn max_norm(d: usize, bound: f64) -> Self {
        let mut rows = Vec::with_capacity(2 * d);
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut a = vec![0.0; d];
                a[i] = s;
                rows.push((a, -bound));
            }
        }
        TradingConstraint { rows }
    }

    pub fn contains(&self, k: &[f64], tol: f64) -> bool {
        self.rows.iter().all(|(a, b)| dot(a, k) >= b - tol)
    }

    pub fn linear_rows(&self, k: &[LinExpr]) -> Vec<(LinExpr, f64)> {
        self.rows
            .iter()
            .map(|(a, b)| {
                let parts: Vec<(f64, &LinExpr)> = a.iter().copied().zip(k.iter()).collect();
                (LinExpr::combination(&parts), *b)
            })
            .collect()
    }
}

/// Market model selected for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarketModel {
    #[default]
    None,
    /// Proportional costs from the tree's bid/ask prices.
    Cone {
        #[serde(default)]
        trading: Option<TradingConstraint>,
    },
    /// Convex costs for one risky asset, with the tree's bid/ask prices.
    ConvexRegion {
        theta: [f64; 2],
        #[serde(default)]
        trading: Option<TradingConstraint>,
    },
}

impl MarketModel {
    pub fn is_none(&self) -> bool {
        matches!(self, MarketModel::None)
    }

    pub fn is_convex(&self) -> bool {
        matches!(self, MarketModel::ConvexRegion { .. })
    }
}

/// Market constraints at one node, ready to be added to the node problem.
#[derive(Debug, Clone)]
pub enum MarketSet {
    None,
    /// Trades are absorbed into the ordering cone.
    Cone(SolvencyCone),
    /// Trades `k = G alpha`, `alpha >= 0`, restricted to `D`.
    ConeWithTrading(SolvencyCone, TradingConstraint),
    Convex(ConvexRegion, Option<TradingConstraint>),
}

impl MarketSet {
    pub fn is_none(&self) -> bool {
        matches!(self, MarketSet::None)
    }

    /// Whether the node problem carries an explicit trade variable.
    pub fn has_trade(&self) -> bool {
        matches!(self, MarketSet::ConeWithTrading(..) | MarketSet::Convex(..))
    }

    /// Whether `k` is an admissible trade, within `tol`.
    pub fn contains_trade(&self, k: &[f64], tol: f64) -> bool {
        match self {
            MarketSet::None => k.iter().all(|v| v.abs() <= tol),
            MarketSet::Cone(c) => cone_contains(c, k, tol),
            MarketSet::ConeWithTrading(c, d) => cone_contains(c, k, tol) && d.contains(k, tol),
            MarketSet::Convex(r, d) => {
                k.len() == 2
                    && r.contains([k[0], k[1]], tol)
                    && d.as_ref().is_none_or(|d| d.contains(k, tol))
            }
        }
    }

    /// Count of (convex, linear) constraints the bundle adds.
    pub fn constraint_counts(&self) -> (usize, usize) {
        match self {
            MarketSet::None | MarketSet::Cone(_) => (0, 0),
            MarketSet::ConeWithTrading(_, d) => (0, d.rows.len()),
            MarketSet::Convex(_, d) => (2, d.as_ref().map_or(0, |d| d.rows.len())),
        }
    }
}

fn cone_contains(c: &SolvencyCone, k: &[f64], tol: f64) -> bool {
    match c.ordering_cone() {
        Ok(oc) => oc.contains(k, tol),
        Err(_) => false,
    }
}

/// Builds the market constraints at `node`.
pub fn market_set(node: &TreeNode, model: &MarketModel) -> Result<MarketSet> {
    match model {
        MarketModel::None => Ok(MarketSet::None),
        MarketModel::Cone { trading } => {
            let cone = proportional_cone(&node.bid, &node.ask, node.bond)?;
            match trading {
                None => Ok(MarketSet::Cone(cone)),
                Some(d) => {
                    check_rows(d, cone.dim())?;
                    if !cone_meets(&cone, d)? {
                        return Err(Error::InvalidParameters(format!(
                            "trading constraint misses the solvency cone at node {}",
                            node.id
                        )));
                    }
                    Ok(MarketSet::ConeWithTrading(cone, d.clone()))
                }
            }
        }
        MarketModel::ConvexRegion { theta, trading } => {
            if node.mid.len() != 1 {
                return Err(Error::InvalidParameters(
                    "convex solvency regions need exactly one risky asset".into(),
                ));
            }
            let bond = node.bond;
            let region = ConvexRegion::new(*theta, node.bid[0] / bond, node.ask[0] / bond)?;
            if let Some(d) = trading {
                check_rows(d, 2)?;
                if !region_meets(&region, d)? {
                    return Err(Error::InvalidParameters(format!(
                        "trading constraint misses the solvency region at node {}",
                        node.id
                    )));
                }
            }
            Ok(MarketSet::Convex(region, trading.clone()))
        }
    }
}

fn check_rows(d: &TradingConstraint, dim: usize) -> Result<()> {
    if d.rows.iter().any(|(a, b)| a.len() != dim || !b.is_finite()) {
        return Err(Error::DimensionMismatch("trading constraint rows".into()));
    }
    Ok(())
}

fn cone_meets(cone: &SolvencyCone, d: &TradingConstraint) -> Result<bool> {
    let g = cone.generators();
    let dim = cone.dim();
    let mut lp = LinearProgram::new(g.len());
    for j in 0..g.len() {
        lp.set_bounds(j, 0.0, f64::INFINITY);
    }
    for (a, b) in &d.rows {
        let coeffs: Vec<(usize, f64)> = g
            .iter()
            .enumerate()
            .map(|(j, gj)| (j, (0..dim).map(|i| a[i] * gj[i]).sum::<f64>()))
            .collect();
        lp.add(Constraint::new(coeffs, Relation::Ge, *b));
    }
    match crate::lp::solve(&lp) {
        LpStatus::Optimal(_) => Ok(true),
        LpStatus::Infeasible => Ok(false),
        LpStatus::Unbounded => Ok(true),
        LpStatus::NumericFailure(e) => Err(Error::NumericFailure(e)),
    }
}

fn region_meets(region: &ConvexRegion, d: &TradingConstraint) -> Result<bool> {
    let k = [LinExpr::var(0), LinExpr::var(1)];
    let gs: Vec<Arc<dyn ConvexFn>> = region
        .constraints(&k)
        .into_iter()
        .map(|g| Arc::new(g) as Arc<dyn ConvexFn>)
        .collect();
    let mut lp = LinearProgram::new(2);
    for (a, b) in &d.rows {
        lp.add(Constraint::dense(a, Relation::Ge, *b));
    }
    // The region lies in the proportional cone with the same prices.
    lp.add(Constraint::dense(&[1.0, region.ask], Relation::Ge, 0.0));
    lp.add(Constraint::dense(&[1.0, region.bid], Relation::Ge, 0.0));
    let mut sx = Simplex::new(&lp);
    for _ in 0..500 {
        let x = match sx.solve() {
            LpStatus::Optimal(s) => s.x,
            LpStatus::Infeasible => return Ok(false),
            LpStatus::Unbounded => return Ok(true),
            LpStatus::NumericFailure(e) => return Err(Error::NumericFailure(e)),
        };
        let mut cut = false;
        for g in &gs {
            if g.value(&x) > 1e-12 {
                let (v, grad) = g.linearize(&x);
                let rhs = grad.iter().map(|(j, c)| c * x[*j]).sum::<f64>() - v;
                sx.add_row(&grad, f64::NEG_INFINITY, rhs);
                cut = true;
            }
        }
        if !cut {
            return Ok(true);
        }
    }
    Err(Error::NumericFailure("trading constraint feasibility check".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_cone_examples() {
        let c = proportional_cone(&[70.0], &[130.0], 1.0).unwrap();
        assert_eq!(c.trade_generators(), &[vec![130.0, -1.0], vec![-70.0, 1.0]]);
        let c = proportional_cone(&[0.95, 0.95], &[1.05, 1.05], 1.0).unwrap();
        let t = c.trade_generators();
        assert_eq!(t[0], vec![1.05, -1.0, 0.0]);
        assert_eq!(t[1], vec![1.05, 0.0, -1.0]);
        assert_eq!(t[2], vec![-0.95, 1.0, 0.0]);
        assert_eq!(t[3], vec![-0.95, 0.0, 1.0]);
        assert_eq!(c.generators().len(), 7);
    }

    #[test]
    fn frictionless_cone_is_a_halfspace() {
        let c = proportional_cone(&[100.0], &[100.0], 1.0).unwrap();
        let oc = c.ordering_cone().unwrap();
        // One line, listed in both orientations.
        assert_eq!(oc.lineality().len(), 2);
        assert!(oc.contains(&[-100.0, 1.0], 1e-12));
        assert!(oc.contains(&[100.0, -1.0], 1e-12));
        assert!(!oc.contains(&[-100.0, 0.99], 1e-9));
    }

    #[test]
    fn duals_nonnegative_on_generators() {
        let c = proportional_cone(&[0.9, 2.0], &[1.2, 2.5], 1.1).unwrap();
        let oc = c.ordering_cone().unwrap();
        for w in oc.dual_generators() {
            for g in c.generators() {
                assert!(dot(w, g) >= -1e-12);
            }
        }
    }

    #[test]
    fn region_basics() {
        let r = ConvexRegion::new([500.0, 500.0], 0.95, 1.05).unwrap();
        assert_eq!(r.eval([0.0, 0.0]), [0.0, 0.0]);
        assert!(r.contains([3.0, 0.5], 0.0));
        assert!(!r.contains([-1.0, 0.0], 0.0));
        let big = r.eval([-1e6, 1e6]);
        assert!(big.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn region_boundary_by_root_finding() {
        // On the boundary the first map vanishes: k0 = -t0 (1 - exp(-b k1 / t0)).
        let r = ConvexRegion::new([500.0, 500.0], 0.95, 1.05).unwrap();
        for k1 in [0.1, 1.0, 10.0, 200.0] {
            let (mut lo, mut hi) = (-1000.0, 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if r.eval([mid, k1])[0] >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let expect = -500.0 * (1.0 - (-0.95 * k1 / 500.0f64).exp());
            assert!((hi - expect).abs() < 1e-9);
            assert!(r.eval([hi, k1])[1] > 0.0);
        }
    }

    #[test]
    fn region_constraints_match_eval() {
        let r = ConvexRegion::new([3.0, 7.0], 0.8, 1.3).unwrap();
        let k = [LinExpr::var(0), LinExpr::var(1)];
        let gs = r.constraints(&k);
        for p in [[0.3, -0.2], [-1.0, 2.0], [4.0, -3.0]] {
            let e = r.eval(p);
            assert!((gs[0].value(&p) + e[0]).abs() < 1e-12);
            assert!((gs[1].value(&p) + e[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn region_slope_approaches_cone() {
        let (b, a) = (0.95, 1.05);
        let r = ConvexRegion::new([1e9, 1e9], b, a).unwrap();
        let h = 1e-4;
        // Selling h risky units: cash needed on the boundary is b h.
        let mut lo = -1.0;
        let mut hi = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if r.contains([mid, h], 0.0) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((hi / h + b).abs() < 1e-3);
        let cone = proportional_cone(&[b], &[a], 1.0).unwrap().ordering_cone().unwrap();
        assert!(cone.contains(&[hi, h], 1e-9));
    }

    #[test]
    fn market_bundle_counts() {
        let node = TreeNode {
            id: crate::tree::NodeId { time: 0, index: 0 },
            state: vec![0],
            mid: vec![1.0],
            bid: vec![0.95],
            ask: vec![1.05],
            bond: 1.0,
            successors: vec![],
        };
        let model = MarketModel::ConvexRegion {
            theta: [500.0, 500.0],
            trading: Some(TradingConstraint::max_norm(2, 10.0)),
        };
        let set = market_set(&node, &model).unwrap();
        assert_eq!(set.constraint_counts(), (2, 4));
        let model = MarketModel::Cone { trading: None };
        assert!(matches!(market_set(&node, &model).unwrap(), MarketSet::Cone(_)));
        let away = TradingConstraint {
            rows: vec![(vec![-1.0, 0.0], 10.0), (vec![0.0, -1.0], 10.0)],
        };
        let model = MarketModel::Cone { trading: Some(away) };
        assert!(market_set(&node, &model).is_err());
    }
}
