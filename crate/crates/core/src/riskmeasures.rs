//! Risk measure catalog and the per-node vector problems built from it.
//!
//! A node problem has the image variable `y` (coordinates in the eligible
//! space `M`), one holding `Z(w')` per successor, measure-specific
//! auxiliaries and, for markets with explicit trades, a trade `k`. The
//! objective is `y` or `y + k`. The upper image of the problem is the
//! node's risk set.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::linalg::{dot, rank};
use crate::geometry::{OrderingCone, Polyhedron};
use crate::lp::{Constraint, Relation};
use crate::market::MarketSet;
use crate::vop::{ConvexFn, ConvexVop, ExpSum, ExpTerm, LinExpr, LinearVop};

/// One-step risk measure and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskKind {
    WorstCase,
    RelaxedWorstCase {
        epsilon: Vec<f64>,
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
    },
    Avar {
        lambda: Vec<f64>,
    },
    Entropic {
        lambda: Vec<f64>,
        #[serde(rename = "C_dual")]
        c_dual: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMeasureSpec {
    #[serde(flatten)]
    pub kind: RiskKind,
    /// Basis of the eligible space; the full space when absent.
    #[serde(default, rename = "M_basis", skip_serializing_if = "Option::is_none")]
    pub m_basis: Option<Vec<Vec<f64>>>,
}

impl RiskMeasureSpec {
    pub fn new(kind: RiskKind) -> Self {
        RiskMeasureSpec { kind, m_basis: None }
    }

    pub fn is_convex(&self) -> bool {
        matches!(self.kind, RiskKind::Entropic { .. })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            RiskKind::WorstCase => "worst_case",
            RiskKind::RelaxedWorstCase { .. } => "relaxed_worst_case",
            RiskKind::Avar { .. } => "avar",
            RiskKind::Entropic { .. } => "entropic",
        }
    }

    pub fn eligible(&self, d: usize) -> Result<EligibleSpace> {
        match &self.m_basis {
            None => Ok(EligibleSpace::full(d)),
            Some(b) => EligibleSpace::new(d, b.clone()),
        }
    }

    /// Checks parameters against the asset count `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        let len = |v: &[f64], what: &str| -> Result<()> {
            if v.len() != d {
                return Err(Error::DimensionMismatch(format!("{what} needs {d} entries")));
            }
            Ok(())
        };
        match &self.kind {
            RiskKind::WorstCase => {}
            RiskKind::RelaxedWorstCase { epsilon, g } => {
                len(epsilon, "epsilon")?;
                if epsilon.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                    return bad("epsilon must be nonnegative".into());
                }
                if g.is_empty() || g.iter().any(|v| v.len() != d) {
                    return Err(Error::DimensionMismatch("G generators".into()));
                }
                let cone = OrderingCone::from_generators(g)
                    .map_err(|e| Error::InvalidParameters(format!("G: {e}")))?;
                if cone.dual_generators().iter().flatten().any(|w| *w < -1e-12) {
                    return bad("G must contain the nonnegative orthant".into());
                }
            }
            RiskKind::Avar { lambda } => {
                len(lambda, "lambda")?;
                if lambda.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
                    return bad("AV@R levels must lie in (0, 1)".into());
                }
            }
            RiskKind::Entropic { lambda, c_dual } => {
                len(lambda, "lambda")?;
                if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return bad("risk aversion must be positive".into());
                }
                if c_dual.is_empty() || c_dual.iter().any(|w| w.len() != d) {
                    return Err(Error::DimensionMismatch("C_dual generators".into()));
                }
                for w in c_dual {
                    if w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                        return bad("C_dual generators must be nonnegative".into());
                    }
                    if w.iter().all(|x| *x == 0.0) {
                        return bad("C_dual generator is zero".into());
                    }
                }
            }
        }
        self.eligible(d).map(|_| ())
    }
}

/// Eligible subspace `M` of `R^d`, given by a basis. Risk sets live in
/// basis coordinates; `M_+` is the nonnegative part of `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibleSpace {
    d: usize,
    basis: Vec<Vec<f64>>,
    full: bool,
}

impl EligibleSpace {
    pub fn full(d: usize) -> Self {
        let basis = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
        EligibleSpace {
            d,
            basis,
            full: true,
        }
    }

    pub fn new(d: usize, basis: Vec<Vec<f64>>) -> Result<Self> {
        if basis.is_empty() || basis.iter().any(|b| b.len() != d) {
            return Err(Error::DimensionMismatch("M basis vectors".into()));
        }
        if rank(&basis, d) != basis.len() {
            return Err(Error::InvalidParameters("M basis is linearly dependent".into()));
        }
        let full = basis.len() == d
            && basis
                .iter()
                .enumerate()
                .all(|(i, b)| b.iter().enumerate().all(|(j, v)| *v == if i == j { 1.0 } else { 0.0 }));
        let space = EligibleSpace { d, basis, full };
        space.cone()?;
        Ok(space)
    }

    pub fn ambient(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Point of `R^d` with coordinates `y`.
    pub fn embed(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        for (b, c) in self.basis.iter().zip(y) {
            for i in 0..self.d {
                x[i] += c * b[i];
            }
        }
        x
    }

    pub fn embed_exprs(&self, y: &[LinExpr]) -> Vec<LinExpr> {
        (0..self.d)
            .map(|i| {
                let parts: Vec<(f64, &LinExpr)> =
                    self.basis.iter().zip(y).map(|(b, e)| (b[i], e)).collect();
                LinExpr::combination(&parts)
            })
            .collect()
    }

    /// `M_+` in basis coordinates.
    pub fn cone(&self) -> Result<OrderingCone> {
        if self.full {
            return Ok(OrderingCone::orthant(self.d));
        }
        let q = self.dim();
        let rows: Vec<Vec<f64>> = (0..self.d)
            .map(|i| self.basis.iter().map(|b| b[i]).collect::<Vec<f64>>())
            .filter(|r: &Vec<f64>| r.iter().any(|v| *v != 0.0))
            .collect();
        if rows.is_empty() {
            return Err(Error::InvalidParameters("M basis is zero".into()));
        }
        OrderingCone::from_dual_generators(&rows).map_err(|e| {
            Error::InvalidParameters(format!("nonnegative part of M in {q} coordinates: {e}"))
        })
    }
}

/// How successor sets enter the node problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChildEncoding {
    /// Convex combination of vertices plus conic combination of directions.
    #[default]
    Vertices,
    /// Free point subject to the halfspace rows.
    Halfspaces,
}

/// The vector problem at one node.
#[derive(Debug, Clone)]
pub enum NodeVop {
    Linear(LinearVop),
    Convex(ConvexVop),
}

impl NodeVop {
    pub fn num_vars(&self) -> usize {
        match self {
            NodeVop::Linear(v) => v.num_vars,
            NodeVop::Convex(v) => v.num_vars,
        }
    }

    pub fn cone(&self) -> &OrderingCone {
        match self {
            NodeVop::Linear(v) => &v.cone,
            NodeVop::Convex(v) => &v.cone,
        }
    }

    pub fn constraints(&self) -> &[Constraint] {
        match self {
            NodeVop::Linear(v) => &v.constraints,
            NodeVop::Convex(v) => &v.constraints,
        }
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        match self {
            NodeVop::Linear(v) => &v.bounds,
            NodeVop::Convex(v) => &v.bounds,
        }
    }

    pub fn convex(&self) -> &[Arc<dyn ConvexFn>] {
        match self {
            NodeVop::Linear(_) => &[],
            NodeVop::Convex(v) => &v.convex,
        }
    }
}

/// A node problem together with the maps from its variables back to the
/// quantities the forward pass needs.
#[derive(Debug, Clone)]
pub struct NodeProblem {
    pub vop: NodeVop,
    /// Successor holdings in eligible coordinates; empty at maturity.
    pub successors: Vec<Vec<LinExpr>>,
    /// `Y` in eligible coordinates.
    pub y: Vec<LinExpr>,
    /// Explicit trade in `R^d`, when the market has one.
    pub trade: Option<Vec<LinExpr>>,
}

/// Decoded solution point.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub successors: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub trade: Option<Vec<f64>>,
}

impl NodeProblem {
    pub fn decode(&self, x: &[f64]) -> Decoded {
        let ev = |es: &[LinExpr]| es.iter().map(|e| e.eval(x)).collect::<Vec<f64>>();
        Decoded {
            successors: self.successors.iter().map(|z| ev(z)).collect(),
            y: ev(&self.y),
            trade: self.trade.as_ref().map(|k| ev(k)),
        }
    }
}

/// Successor set and conditional probability.
#[derive(Debug, Clone, Copy)]
pub struct Child<'a> {
    pub set: &'a Polyhedron,
    pub probability: f64,
}

struct Builder {
    n: usize,
    bounds: Vec<(f64, f64)>,
    rows: Vec<Constraint>,
    convex: Vec<ExpSum>,
}

const CONST_TOL: f64 = 1e-9;

impl Builder {
    fn new() -> Self {
        Builder {
            n: 0,
            bounds: Vec::new(),
            rows: Vec::new(),
            convex: Vec::new(),
        }
    }

    fn var(&mut self, lo: f64, up: f64) -> LinExpr {
        self.bounds.push((lo, up));
        self.n += 1;
        LinExpr::var(self.n - 1)
    }

    fn vars(&mut self, k: usize, lo: f64, up: f64) -> Vec<LinExpr> {
        (0..k).map(|_| self.var(lo, up)).collect()
    }

    /// `e >= rhs`.
    fn ge(&mut self, e: &LinExpr, rhs: f64) -> Result<()> {
        let rhs = rhs - e.constant;
        if e.is_constant() {
            if rhs > CONST_TOL * (1.0 + rhs.abs()) {
                return Err(Error::Infeasible(format!(
                    "constant constraint violated by {rhs:.3e}"
                )));
            }
            return Ok(());
        }
        self.rows
            .push(Constraint::new(e.terms.clone(), Relation::Ge, rhs));
        Ok(())
    }

    fn eq(&mut self, e: &LinExpr, rhs: f64) -> Result<()> {
        let rhs = rhs - e.constant;
        if e.is_constant() {
            if rhs.abs() > CONST_TOL * (1.0 + rhs.abs()) {
                return Err(Error::Infeasible("constant equation violated".into()));
            }
            return Ok(());
        }
        self.rows
            .push(Constraint::new(e.terms.clone(), Relation::Eq, rhs));
        Ok(())
    }

    /// `f <= 0`.
    fn convex(&mut self, f: ExpSum) -> Result<()> {
        if f.is_constant() {
            let v = f.value(&[]);
            if v > CONST_TOL * (1.0 + v.abs()) {
                return Err(Error::Infeasible(format!(
                    "constant convex constraint violated by {v:.3e}"
                )));
            }
            return Ok(());
        }
        self.convex.push(f);
        Ok(())
    }
}

/// Encodes a successor set; returns its point in eligible coordinates.
fn encode_child(b: &mut Builder, set: &Polyhedron, enc: ChildEncoding) -> Result<Vec<LinExpr>> {
    let q = set.dim();
    match enc {
        ChildEncoding::Vertices => {
            let verts = set.vertices();
            if verts.is_empty() {
                return Err(Error::Infeasible("successor set has no vertex".into()));
            }
            let mut point: Vec<LinExpr> = vec![LinExpr::default(); q];
            if verts.len() == 1 {
                point = verts[0].iter().map(|c| LinExpr::constant(*c)).collect();
            } else {
                let lam = b.vars(verts.len(), 0.0, f64::INFINITY);
                let sum = LinExpr::combination(&lam.iter().map(|l| (1.0, l)).collect::<Vec<_>>());
                b.eq(&sum, 1.0)?;
                for i in 0..q {
                    let parts: Vec<(f64, &LinExpr)> = verts.iter().map(|v| v[i]).zip(lam.iter()).collect();
                    point[i] = LinExpr::combination(&parts);
                }
            }
            for dir in set.directions() {
                let mu = b.var(0.0, f64::INFINITY);
                let j = mu.terms[0].0;
                for i in 0..q {
                    if dir[i] != 0.0 {
                        point[i] = point[i].plus(&LinExpr::new(vec![(j, dir[i])], 0.0));
                    }
                }
            }
            Ok(point)
        }
        ChildEncoding::Halfspaces => {
            let z = b.vars(q, f64::NEG_INFINITY, f64::INFINITY);
            for h in set.halfspaces() {
                let parts: Vec<(f64, &LinExpr)> = h.normal.iter().copied().zip(z.iter()).collect();
                b.ge(&LinExpr::combination(&parts), h.offset)?;
            }
            Ok(z)
        }
    }
}

/// Problem for the terminal node with payoff `x` (in `R^d`).
pub fn terminal_problem(spec: &RiskMeasureSpec, x: &[f64], market: &MarketSet) -> Result<NodeProblem> {
    let d = x.len();
    spec.validate(d)?;
    let mut b = Builder::new();
    let z: Vec<LinExpr> = x.iter().map(|v| LinExpr::constant(-v)).collect();
    build(spec, &mut b, d, vec![(z, 1.0)], Vec::new(), market)
}

/// Problem at an interior node from its successor sets, aligned with the
/// node's successors.
pub fn onestep_problem(
    spec: &RiskMeasureSpec,
    d: usize,
    children: &[Child],
    market: &MarketSet,
    enc: ChildEncoding,
) -> Result<NodeProblem> {
    spec.validate(d)?;
    let space = spec.eligible(d)?;
    if children.is_empty() {
        return Err(Error::InvalidParameters("node has no successors".into()));
    }
    let total: f64 = children.iter().map(|c| c.probability).sum();
    if children.iter().any(|c| !(c.probability > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameters(
            "successor probabilities must be positive and sum to one".into(),
        ));
    }
    let mut b = Builder::new();
    let mut zs = Vec::with_capacity(children.len());
    let mut coords = Vec::with_capacity(children.len());
    for c in children {
        if c.set.dim() != space.dim() {
            return Err(Error::DimensionMismatch("successor set dimension".into()));
        }
        let zc = encode_child(&mut b, c.set, enc)?;
        zs.push((space.embed_exprs(&zc), c.probability));
        coords.push(zc);
    }
    build(spec, &mut b, d, zs, coords, market)
}

fn build(
    spec: &RiskMeasureSpec,
    b: &mut Builder,
    d: usize,
    zs: Vec<(Vec<LinExpr>, f64)>,
    coords: Vec<Vec<LinExpr>>,
    market: &MarketSet,
) -> Result<NodeProblem> {
    let space = spec.eligible(d)?;
    if !market.is_none() && !space.is_full() {
        return Err(Error::InvalidParameters(
            "market models need the full eligible space".into(),
        ));
    }
    let q = space.dim();
    let yc = b.vars(q, f64::NEG_INFINITY, f64::INFINITY);
    let y = space.embed_exprs(&yc);
    match &spec.kind {
        RiskKind::WorstCase => {
            for (z, _) in &zs {
                for i in 0..d {
                    b.ge(&y[i].plus(&z[i].scaled(-1.0)), 0.0)?;
                }
            }
        }
        RiskKind::RelaxedWorstCase { epsilon, g } => {
            let gcone = OrderingCone::from_generators(g)?;
            for (z, _) in &zs {
                let diff: Vec<LinExpr> = (0..d).map(|i| y[i].plus(&z[i].scaled(-1.0))).collect();
                for i in 0..d {
                    b.ge(&diff[i], -epsilon[i])?;
                }
                for w in gcone.dual_generators() {
                    let parts: Vec<(f64, &LinExpr)> = w.iter().copied().zip(diff.iter()).collect();
                    b.ge(&LinExpr::combination(&parts), 0.0)?;
                }
            }
        }
        RiskKind::Avar { lambda } => {
            let zz = b.vars(d, f64::NEG_INFINITY, f64::INFINITY);
            let mut expect = vec![LinExpr::default(); d];
            for (z, p) in &zs {
                let aux = b.vars(d, 0.0, f64::INFINITY);
                for i in 0..d {
                    let e = z[i].scaled(-1.0).plus(&aux[i]).plus(&zz[i].scaled(-1.0));
                    b.ge(&e, 0.0)?;
                    expect[i] = expect[i].plus(&aux[i].scaled(*p));
                }
            }
            for i in 0..d {
                let e = y[i].plus(&expect[i].scaled(-1.0 / lambda[i])).plus(&zz[i]);
                b.ge(&e, 0.0)?;
            }
        }
        RiskKind::Entropic { lambda, c_dual } => {
            for w in c_dual {
                let mut terms = Vec::new();
                let mut constant = 0.0;
                for i in 0..d {
                    if w[i] == 0.0 {
                        continue;
                    }
                    constant -= w[i] / lambda[i];
                    for (z, p) in &zs {
                        let arg = y[i].plus(&z[i].scaled(-1.0)).scaled(-lambda[i]);
                        terms.push(ExpTerm {
                            coef: p * w[i] / lambda[i],
                            arg,
                        });
                    }
                }
                b.convex(ExpSum::new(terms, LinExpr::constant(constant)))?;
            }
        }
    }
    let mut cone = space.cone()?;
    let mut trade: Option<Vec<LinExpr>> = None;
    let mut trade_repair = false;
    match market {
        MarketSet::None => {}
        MarketSet::Cone(k) => {
            cone = k.ordering_cone()?;
        }
        MarketSet::ConeWithTrading(k, dset) => {
            let alpha = b.vars(k.generators().len(), 0.0, f64::INFINITY);
            let kexpr: Vec<LinExpr> = (0..d)
                .map(|i| {
                    let parts: Vec<(f64, &LinExpr)> =
                        k.generators().iter().map(|g| g[i]).zip(alpha.iter()).collect();
                    LinExpr::combination(&parts)
                })
                .collect();
            for (e, rhs) in dset.linear_rows(&kexpr) {
                b.ge(&e, rhs)?;
            }
            trade = Some(kexpr);
        }
        MarketSet::Convex(region, dset) => {
            if d != 2 {
                return Err(Error::DimensionMismatch("convex region needs two assets".into()));
            }
            let kv = b.vars(2, f64::NEG_INFINITY, f64::INFINITY);
            let [g0, g1] = region.constraints(&[kv[0].clone(), kv[1].clone()]);
            b.convex(g0)?;
            b.convex(g1)?;
            if let Some(dset) = dset {
                for (e, rhs) in dset.linear_rows(&kv) {
                    b.ge(&e, rhs)?;
                }
            } else {
                trade_repair = true;
            }
            trade = Some(kv);
        }
    }
    let objective: Vec<Vec<(usize, f64)>> = (0..q)
        .map(|i| {
            let mut e = yc[i].clone();
            if let Some(k) = &trade {
                e = e.plus(&k[i]);
            }
            e.terms
        })
        .collect();
    let n = b.n;
    let vop = if b.convex.is_empty() {
        let mut v = LinearVop::new(n, objective, cone);
        v.constraints = std::mem::take(&mut b.rows);
        v.bounds = std::mem::take(&mut b.bounds);
        NodeVop::Linear(v)
    } else {
        let m = cone.interior_direction();
        let mut v = ConvexVop::new(n, objective, cone);
        v.constraints = std::mem::take(&mut b.rows);
        v.bounds = std::mem::take(&mut b.bounds);
        v.convex = b
            .convex
            .drain(..)
            .map(|f| Arc::new(f) as Arc<dyn ConvexFn>)
            .collect();
        let mut dir = vec![0.0; n];
        for (e, mi) in yc.iter().zip(&m) {
            dir[e.terms[0].0] = *mi;
        }
        if trade_repair {
            if let Some(k) = &trade {
                for e in k {
                    dir[e.terms[0].0] = 1.0;
                }
            }
        }
        v.repair_direction = Some(dir);
        NodeVop::Convex(v)
    };
    Ok(NodeProblem {
        vop,
        successors: coords,
        y: yc,
        trade,
    })
}

/// Scalar AV@R of the outcomes `x` with probabilities `p` at level
/// `lambda`: the negative mean of the worst `lambda` tail.
pub fn scalar_avar(x: &[f64], p: &[f64], lambda: f64) -> f64 {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut left = lambda;
    let mut acc = 0.0;
    for i in idx {
        let take = p[i].min(left);
        acc += take * x[i];
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    -acc / lambda
}

/// Scalar entropic risk `(1/lambda) ln E[exp(-lambda x)]`.
pub fn scalar_entropic(x: &[f64], p: &[f64], lambda: f64) -> f64 {
    let m = x.iter().map(|v| -lambda * v).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x
        .iter()
        .zip(p)
        .map(|(v, q)| q * (-lambda * v - m).exp())
        .sum();
    (m + s.ln()) / lambda
}

/// Checks `y` against the measure constraints for fixed successor holdings
/// (all in `R^d`): whether `y` lies in the one-step risk set of `-Z`.
pub fn accepts(spec: &RiskMeasureSpec, y: &[f64], zs: &[(Vec<f64>, f64)], tol: f64) -> bool {
    let d = y.len();
    match &spec.kind {
        RiskKind::WorstCase => zs
            .iter()
            .all(|(z, _)| (0..d).all(|i| y[i] - z[i] >= -tol)),
        RiskKind::RelaxedWorstCase { epsilon, g } => {
            let Ok(gc) = OrderingCone::from_generators(g) else {
                return false;
            };
            zs.iter().all(|(z, _)| {
                let diff: Vec<f64> = (0..d).map(|i| y[i] - z[i]).collect();
                (0..d).all(|i| diff[i] >= -epsilon[i] - tol) && gc.contains(&diff, tol)
            })
        }
        RiskKind::Avar { lambda } => (0..d).all(|i| {
            let xs: Vec<f64> = zs.iter().map(|(z, _)| -z[i]).collect();
            let ps: Vec<f64> = zs.iter().map(|(_, p)| *p).collect();
            y[i] >= scalar_avar(&xs, &ps, lambda[i]) - tol
        }),
        RiskKind::Entropic { lambda, c_dual } => c_dual.iter().all(|w| {
            let mut s = 0.0;
            for (z, p) in zs {
                for i in 0..d {
                    if w[i] != 0.0 {
                        s += p * w[i] * (-(-lambda[i] * (y[i] - z[i])).exp_m1()) / lambda[i];
                    }
                }
            }
            s >= -tol * (1.0 + dot(w, w).sqrt())
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::includes;
    use crate::market::proportional_cone;
    use crate::vop::{solve_convex, solve_linear, VopOptions};

    fn solve_set(p: &NodeProblem, eps: f64) -> Polyhedron {
        match &p.vop {
            NodeVop::Linear(v) => solve_linear(v, &VopOptions::default()).unwrap().upper_image,
            NodeVop::Convex(v) => solve_convex(v, eps, &VopOptions::default()).unwrap().upper_image,
        }
    }

    fn orth(v: &[f64]) -> Polyhedron {
        Polyhedron::shifted_cone(v, &OrderingCone::orthant(v.len())).unwrap()
    }

    fn same(a: &Polyhedron, b: &Polyhedron, tol: f64) -> bool {
        includes(a, b, tol) && includes(b, a, tol)
    }

    #[test]
    fn worst_case_terminal() {
        let spec = RiskMeasureSpec::new(RiskKind::WorstCase);
        let p = terminal_problem(&spec, &[-1.0, 2.0], &MarketSet::None).unwrap();
        assert!(same(&solve_set(&p, 0.0), &orth(&[1.0, -2.0]), 1e-9));
    }

    #[test]
    fn avar_terminal_is_worst_case() {
        let spec = RiskMeasureSpec::new(RiskKind::Avar { lambda: vec![0.3, 0.3] });
        let p = terminal_problem(&spec, &[0.7, -1.5], &MarketSet::None).unwrap();
        assert!(same(&solve_set(&p, 0.0), &orth(&[-0.7, 1.5]), 1e-9));
    }

    #[test]
    fn relaxed_terminal_vertices() {
        let g = vec![
            vec![1.0, -0.25, -0.25],
            vec![-0.25, 1.0, -0.25],
            vec![-0.25, -0.25, 1.0],
        ];
        let spec = RiskMeasureSpec::new(RiskKind::RelaxedWorstCase {
            epsilon: vec![0.25; 3],
            g: g.clone(),
        });
        let p = terminal_problem(&spec, &[0.0; 3], &MarketSet::None).unwrap();
        let set = solve_set(&p, 0.0);
        // Oracle: enumerate {u >= -eps} intersected with G directly.
        let gc = OrderingCone::from_generators(&g).unwrap();
        let mut hs = Vec::new();
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            hs.push(crate::geometry::Halfspace::new(e, -0.25).unwrap());
        }
        for w in gc.dual_generators() {
            hs.push(crate::geometry::Halfspace::new(w.clone(), 0.0).unwrap());
        }
        let oracle = crate::geometry::vertex_enum(hs, &OrderingCone::orthant(3)).unwrap();
        assert!(same(&set, &oracle, 1e-8));
        assert!(set.vertices().len() > 1);
    }

    #[test]
    fn worst_case_onestep_is_supremum() {
        let spec = RiskMeasureSpec::new(RiskKind::WorstCase);
        let a = orth(&[1.0, -2.0]);
        let b = orth(&[-0.5, 3.0]);
        let ch = [
            Child { set: &a, probability: 0.4 },
            Child { set: &b, probability: 0.6 },
        ];
        for enc in [ChildEncoding::Vertices, ChildEncoding::Halfspaces] {
            let p = onestep_problem(&spec, 2, &ch, &MarketSet::None, enc).unwrap();
            assert!(same(&solve_set(&p, 0.0), &orth(&[1.0, 3.0]), 1e-9));
        }
    }

    #[test]
    fn scalar_avar_example() {
        // d = 1, lambda = 1/2, outcomes (0, -1) equally likely: AV@R = 1.
        let spec = RiskMeasureSpec::new(RiskKind::Avar { lambda: vec![0.5] });
        let a = orth(&[0.0]);
        let b = orth(&[1.0]);
        let ch = [
            Child { set: &a, probability: 0.5 },
            Child { set: &b, probability: 0.5 },
        ];
        let p = onestep_problem(&spec, 1, &ch, &MarketSet::None, ChildEncoding::Vertices).unwrap();
        let s = solve_set(&p, 0.0);
        assert_eq!(s.vertices().len(), 1);
        assert!((s.vertices()[0][0] - 1.0).abs() < 1e-9);
        assert!((scalar_avar(&[0.0, -1.0], &[0.5, 0.5], 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_entropic_example() {
        let spec = RiskMeasureSpec::new(RiskKind::Entropic {
            lambda: vec![0.1],
            c_dual: vec![vec![1.0]],
        });
        let x = 3.0;
        let a = orth(&[0.0]);
        let b = orth(&[x]);
        let ch = [
            Child { set: &a, probability: 0.5 },
            Child { set: &b, probability: 0.5 },
        ];
        let p = onestep_problem(&spec, 1, &ch, &MarketSet::None, ChildEncoding::Vertices).unwrap();
        let eps = 1e-4;
        let s = solve_set(&p, eps);
        let u = (0.5 * (1.0 + (0.1 * x).exp())).ln() / 0.1;
        let v = s.vertices()[0][0];
        assert!(v <= u + 1e-9 && u <= v + eps + 1e-9, "{v} vs {u}");
        assert!((scalar_entropic(&[0.0, -x], &[0.5, 0.5], 0.1) - u).abs() < 1e-12);
    }

    #[test]
    fn translativity() {
        let spec = RiskMeasureSpec::new(RiskKind::Avar { lambda: vec![0.4, 0.2] });
        let a = Polyhedron::from_generators(
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            &[],
            &OrderingCone::orthant(2),
        )
        .unwrap();
        let b = orth(&[0.5, 0.5]);
        let shift = [0.3, -1.2];
        let (a2, b2) = (a.translate(&shift), b.translate(&shift));
        let solve = |x: &Polyhedron, y: &Polyhedron| {
            let ch = [
                Child { set: x, probability: 0.3 },
                Child { set: y, probability: 0.7 },
            ];
            solve_set(
                &onestep_problem(&spec, 2, &ch, &MarketSet::None, ChildEncoding::Vertices).unwrap(),
                0.0,
            )
        };
        let s = solve(&a, &b);
        let t = solve(&a2, &b2);
        assert!(same(&s.translate(&shift), &t, 1e-7));
    }

    #[test]
    fn eligible_subspace_embedding() {
        let spec = RiskMeasureSpec {
            kind: RiskKind::WorstCase,
            m_basis: Some(vec![vec![1.0, 0.0]]),
        };
        // Only the first asset is eligible: the second must already be covered.
        let p = terminal_problem(&spec, &[-1.0, 0.5], &MarketSet::None).unwrap();
        let s = solve_set(&p, 0.0);
        assert_eq!(s.dim(), 1);
        assert!((s.vertices()[0][0] - 1.0).abs() < 1e-12);
        assert!(matches!(
            terminal_problem(&spec, &[-1.0, -0.5], &MarketSet::None),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn cone_market_terminal() {
        let k = proportional_cone(&[70.0], &[130.0], 1.0).unwrap();
        let spec = RiskMeasureSpec::new(RiskKind::WorstCase);
        let p = terminal_problem(&spec, &[0.0, 0.0], &MarketSet::Cone(k.clone())).unwrap();
        let s = solve_set(&p, 0.0);
        assert_eq!(s.vertices().len(), 1);
        let kc = k.ordering_cone().unwrap();
        assert!(s.cone().same_as(&kc, 1e-9));
        assert!(s.contains(&[130.0, -1.0], 1e-9) && !s.contains(&[-1.0, 0.0], 1e-9));
    }

    #[test]
    fn validation() {
        let bad = RiskMeasureSpec::new(RiskKind::Entropic {
            lambda: vec![0.1, 0.1],
            c_dual: vec![vec![1.0, -0.9]],
        });
        assert!(bad.validate(2).is_err());
        let bad = RiskMeasureSpec::new(RiskKind::Avar { lambda: vec![1.0, 0.5] });
        assert!(bad.validate(2).is_err());
        let bad = RiskMeasureSpec::new(RiskKind::RelaxedWorstCase {
            epsilon: vec![0.1, 0.1],
            g: vec![vec![1.0, 1.0], vec![1.0, -0.1]],
        });
        assert!(bad.validate(2).is_err());
    }
}
