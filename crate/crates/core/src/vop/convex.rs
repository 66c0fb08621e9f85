use log::{debug, warn};

use super::benson::{shift_lp, weighted_objective};
use super::outer::OuterApprox;
use super::{direction_for, ConvexVop, SolutionPoint, VopOptions, VopSolution};
use crate::error::{Error, Result};
use crate::geometry::linalg::{dot, norm_inf};
use crate::geometry::{Halfspace, Polyhedron};
use crate::lp::{LinearProgram, LpStatus, Simplex};

/// Cut count that triggers a rebuild of the LP.
const MAX_CUTS: usize = 64;
const KEEP_RECENT: usize = 8;

enum Goal<'a> {
    Weighted(&'a [f64]),
    Shift(&'a [f64]),
}

struct Scalar {
    lower: f64,
    upper: f64,
    point: Vec<f64>,
    duals: Vec<f64>,
}

/// Cutting-plane solver for the scalar subproblems of one convex problem.
///
/// Linearisations of the convex constraints are kept across subproblems;
/// each is a valid global underestimator, so they tighten every later LP.
struct Kelley<'a> {
    vop: &'a ConvexVop,
    n: usize,
    duals: Vec<Vec<f64>>,
    m: Vec<f64>,
    sx: Simplex,
    base: LinearProgram,
    /// Cuts `a^T x <= b` currently in the LP, after the base rows.
    cuts: Vec<(Vec<(usize, f64)>, f64)>,
    rows: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    slater: Option<Vec<f64>>,
    max_iter: usize,
}

impl<'a> Kelley<'a> {
    fn new(vop: &'a ConvexVop, m: Vec<f64>, opts: &VopOptions) -> Self {
        let n = vop.num_vars;
        let bounds: Vec<(f64, f64)> = vop
            .bounds
            .iter()
            .map(|&(l, u)| (l.max(-opts.box_bound), u.min(opts.box_bound)))
            .collect();
        let duals = vop.cone.dual_generators().to_vec();
        let (lp, rows) = shift_lp(n, &vop.objective, &vop.constraints, &bounds, &duals, &m);
        let mut sx = Simplex::new(&lp);
        for &r in &rows {
            sx.set_row_bounds(r, f64::NEG_INFINITY, f64::INFINITY);
        }
        Kelley {
            vop,
            n,
            duals,
            m,
            sx,
            base: lp,
            cuts: Vec::new(),
            rows,
            bounds,
            slater: None,
            max_iter: opts.max_inner_iterations,
        }
    }

    fn add_cut(&mut self, x: &[f64], g: &dyn super::ConvexFn) -> Result<()> {
        let (v, grad) = g.linearize(x);
        let scale = grad.iter().fold(0.0f64, |m, (_, c)| m.max(c.abs()));
        if scale == 0.0 || !scale.is_finite() {
            if v > 0.0 {
                return Err(Error::Infeasible("convex constraint violated everywhere".into()));
            }
            return Ok(());
        }
        let rhs = grad.iter().map(|(j, c)| c * x[*j]).sum::<f64>() - v;
        let coeffs: Vec<(usize, f64)> = grad.iter().map(|(j, c)| (*j, c / scale)).collect();
        self.sx.add_row(&coeffs, f64::NEG_INFINITY, rhs / scale);
        self.cuts.push((coeffs, rhs / scale));
        Ok(())
    }

    /// Rebuilds the LP keeping the cuts tight at `x` and the newest ones.
    fn purge(&mut self, x: &[f64]) {
        let keep_recent = self.cuts.len().saturating_sub(KEEP_RECENT);
        let kept: Vec<(Vec<(usize, f64)>, f64)> = std::mem::take(&mut self.cuts)
            .into_iter()
            .enumerate()
            .filter(|(i, (a, b))| {
                let act: f64 = a.iter().map(|(j, c)| c * x[*j]).sum();
                *i >= keep_recent || b - act <= 1e-7 * (1.0 + b.abs())
            })
            .map(|(_, c)| c)
            .collect();
        let mut lp = self.base.clone();
        for (a, b) in &kept {
            lp.add(crate::lp::Constraint::new(a.clone(), crate::lp::Relation::Le, *b));
        }
        self.sx = Simplex::new(&lp);
        self.cuts = kept;
        debug!("cut pool purged to {} rows", self.cuts.len());
    }

    fn shift_value(&self, y: &[f64], v: &[f64]) -> f64 {
        // Smallest s with y <= v + s m in the cone order.
        self.duals
            .iter()
            .map(|w| (dot(w, y) - dot(w, v)) / dot(w, &self.m))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn feasible(&self, x: &[f64]) -> bool {
        self.vop.convex.iter().all(|g| g.value(x) <= 0.0)
    }

    fn in_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    fn linear_ok(&self, x: &[f64]) -> bool {
        self.vop
            .constraints
            .iter()
            .all(|c| c.violation(x) <= 1e-9 * (1.0 + c.rhs.abs()))
    }

    /// Strictly feasible point along the repair direction from `x`.
    fn push_inside(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.vop.repair_direction.as_ref()?;
        let mut t = 1e-9 * (1.0 + norm_inf(x));
        for _ in 0..200 {
            let p: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
            if !self.in_box(&p) {
                return None;
            }
            if self.vop.convex.iter().all(|g| g.value(&p) < 0.0) {
                return self.linear_ok(&p).then_some(p);
            }
            t *= 2.0;
        }
        None
    }

    /// Linearly feasible points in growing boxes, pushed inside.
    fn quick_slater(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let outer = self.bounds.iter().fold(0.0f64, |m, (l, u)| m.max(l.abs()).max(u.abs()));
        let mut r = 1e2;
        while r < outer {
            let mut lp = LinearProgram::new(n);
            for (j, b) in self.bounds.iter().enumerate() {
                lp.set_bounds(j, b.0.max(-r), b.1.min(r));
            }
            for c in &self.vop.constraints {
                lp.add(c.clone());
            }
            if let LpStatus::Optimal(sol) = crate::lp::solve(&lp) {
                if let Some(p) = self.push_inside(&sol.x) {
                    return Some(p);
                }
            }
            r *= 10.0;
        }
        None
    }

    /// Strictly feasible point, found by maximising a uniform slack.
    fn slater_point(&mut self) -> Result<Vec<f64>> {
        if let Some(p) = &self.slater {
            return Ok(p.clone());
        }
        if let Some(p) = self.quick_slater() {
            self.slater = Some(p.clone());
            return Ok(p);
        }
        let n = self.n;
        let mut lp = LinearProgram::new(n + 1);
        for (j, b) in self.bounds.iter().enumerate() {
            lp.set_bounds(j, b.0, b.1);
        }
        lp.set_bounds(n, f64::NEG_INFINITY, 1.0);
        for c in &self.vop.constraints {
            lp.add(c.clone());
        }
        let mut obj = vec![0.0; n + 1];
        obj[n] = -1.0;
        lp.objective = obj;
        let mut sx = Simplex::new(&lp);
        for _ in 0..self.max_iter {
            let sol = match sx.solve() {
                LpStatus::Optimal(s) => s,
                LpStatus::Infeasible => {
                    return Err(Error::Infeasible("linear constraints are inconsistent".into()))
                }
                st => return Err(Error::NumericFailure(format!("interior point search: {st:?}"))),
            };
            let x = sol.x[..n].to_vec();
            if self.vop.convex.iter().all(|g| g.value(&x) < 0.0) {
                self.slater = Some(x.clone());
                return Ok(x);
            }
            if sol.x[n] <= 1e-12 {
                return Err(Error::NoInteriorPoint(
                    "convex constraints admit no strictly feasible point".into(),
                ));
            }
            for g in &self.vop.convex {
                if g.value(&x) >= 0.0 {
                    let (v, grad) = g.linearize(&x);
                    let scale = grad.iter().fold(1.0f64, |m, (_, c)| m.max(c.abs()));
                    let rhs = grad.iter().map(|(j, c)| c * x[*j]).sum::<f64>() - v;
                    let mut coeffs: Vec<(usize, f64)> =
                        grad.iter().map(|(j, c)| (*j, c / scale)).collect();
                    coeffs.push((n, 1.0 / scale));
                    sx.add_row(&coeffs, f64::NEG_INFINITY, rhs / scale);
                }
            }
        }
        Err(Error::NumericFailure("interior point search did not finish".into()))
    }

    /// Moves an LP point into the feasible set, preferring the repair
    /// direction and falling back to the segment towards an interior point.
    fn repair(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = self.vop.repair_direction.clone() {
            let at = |t: f64| -> Vec<f64> { x.iter().zip(&d).map(|(a, b)| a + t * b).collect() };
            let mut hi = 1e-9 * (1.0 + norm_inf(x));
            let mut found = false;
            for _ in 0..200 {
                let p = at(hi);
                if !self.in_box(&p) {
                    break;
                }
                if self.feasible(&p) {
                    found = true;
                    break;
                }
                hi *= 2.0;
            }
            if found {
                let mut lo = 0.0;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.feasible(&at(mid)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let p = at(hi);
                if self.linear_ok(&p) {
                    return Ok(p);
                }
            }
        }
        let s = self.slater_point()?;
        let at = |a: f64| -> Vec<f64> { x.iter().zip(&s).map(|(p, q)| p + a * (q - p)).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.feasible(&at(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(at(hi))
    }

    fn set_goal(&mut self, goal: &Goal) {
        let n = self.n;
        match goal {
            Goal::Weighted(w) => {
                let mut c = weighted_objective(&self.vop.objective, w, n);
                c.push(0.0);
                self.sx.set_objective(&c);
                for &r in &self.rows {
                    self.sx.set_row_bounds(r, f64::NEG_INFINITY, f64::INFINITY);
                }
            }
            Goal::Shift(v) => {
                let mut c = vec![0.0; n + 1];
                c[n] = 1.0;
                self.sx.set_objective(&c);
                let rows = self.rows.clone();
                for (w, r) in self.duals.clone().iter().zip(rows) {
                    let rhs = dot(w, v) - dot(w, &self.vop.offset);
                    self.sx.set_row_bounds(r, f64::NEG_INFINITY, rhs);
                }
            }
        }
    }

    fn objective_at(&self, goal: &Goal, x: &[f64]) -> f64 {
        let y = self.vop.image(x);
        match goal {
            Goal::Weighted(w) => dot(w, &y),
            Goal::Shift(v) => self.shift_value(&y, v),
        }
    }

    /// Runs cutting planes until the bound gap is below `gap`, or the
    /// feasible upper value drops below `accept`.
    fn run(&mut self, goal: Goal, gap: f64, accept: f64) -> Result<Scalar> {
        let n = self.n;
        if self.cuts.len() > MAX_CUTS {
            let x = self.sx.point().to_vec();
            self.purge(&x);
        }
        self.set_goal(&goal);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..self.max_iter {
            if self.cuts.len() > 2 * MAX_CUTS {
                let x = self.sx.point().to_vec();
                self.purge(&x);
                self.set_goal(&goal);
            }
            let sol = match self.sx.solve() {
                LpStatus::Optimal(s) => s,
                LpStatus::Infeasible => {
                    return Err(Error::Infeasible("convex problem has no feasible point".into()))
                }
                LpStatus::Unbounded => {
                    return Err(Error::Unbounded("scalar subproblem".into()))
                }
                LpStatus::NumericFailure(e) => return Err(Error::NumericFailure(e)),
            };
            let x = sol.x[..n].to_vec();
            let lower = match goal {
                Goal::Weighted(w) => sol.value + dot(w, &self.vop.offset),
                Goal::Shift(_) => sol.value,
            };
            let duals: Vec<f64> = self.rows.iter().map(|&r| sol.duals[r]).collect();
            let violated: Vec<usize> = (0..self.vop.convex.len())
                .filter(|&j| self.vop.convex[j].value(&x) > 0.0)
                .collect();
            if violated.is_empty() {
                let up = self.objective_at(&goal, &x);
                return Ok(Scalar {
                    lower,
                    upper: up.max(lower),
                    point: x,
                    duals,
                });
            }
            let fixed = self.repair(&x)?;
            let up = self.objective_at(&goal, &fixed);
            if best.as_ref().is_none_or(|(b, _)| up < *b) {
                best = Some((up, fixed.clone()));
            }
            let (bu, bp) = best.clone().expect("best point");
            if bu - lower <= gap || bu <= accept {
                return Ok(Scalar {
                    lower,
                    upper: bu,
                    point: bp,
                    duals,
                });
            }
            for j in violated {
                let g = self.vop.convex[j].clone();
                let b = boundary_point(g.as_ref(), &fixed, &x);
                let (gb, grad) = g.linearize(&b);
                let gain = gb + grad.iter().map(|(k, c)| c * (x[*k] - b[*k])).sum::<f64>();
                if g.value(&fixed) < 0.0 && gain > 0.0 {
                    self.add_cut(&b, g.as_ref())?;
                } else {
                    self.add_cut(&x, g.as_ref())?;
                }
            }
            // Tangents at the repaired boundary point support the feasible set.
            for j in 0..self.vop.convex.len() {
                let g = self.vop.convex[j].clone();
                if g.value(&fixed) >= -1e-7 {
                    self.add_cut(&fixed, g.as_ref())?;
                }
            }
        }
        Err(Error::NumericFailure(
            "cutting-plane iteration limit in scalar subproblem".into(),
        ))
    }
}

/// Point where `g` crosses zero on the segment from feasible `a` to `x`.
fn boundary_point(g: &dyn super::ConvexFn, a: &[f64], x: &[f64]) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> { a.iter().zip(x).map(|(p, q)| p + t * (q - p)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g.value(&at(mid)) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// Computes an `eps`-approximation of the upper image of a convex problem.
pub fn solve_convex(vop: &ConvexVop, eps: f64, opts: &VopOptions) -> Result<VopSolution> {
    vop.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameters("tolerance must be positive".into()));
    }
    let cone = vop.cone.clone();
    let m = direction_for(&cone, opts)?;
    let mut kel = Kelley::new(vop, m.clone(), opts);
    let gap = eps / 10.0;
    let mut initial = Vec::new();
    let mut points: Vec<SolutionPoint> = Vec::new();
    for w in cone.dual_generators() {
        let r = kel.run(Goal::Weighted(w), gap * dot(w, &m), f64::NEG_INFINITY)?;
        initial.push(Halfspace::new(w.clone(), r.lower)?);
        points.push(SolutionPoint {
            image: vop.image(&r.point),
            preimage: r.point,
        });
    }
    let mut outer = OuterApprox::new(&cone, initial)?;
    let mut achieved: f64 = 0.0;
    let mut converged = true;
    while let Some(v) = outer.first_unverified() {
        if outer.num_cuts() > opts.max_cuts {
            warn!("cut limit reached; stopping with achieved tolerance {achieved:.3e}");
            converged = false;
            break;
        }
        let r = kel.run(Goal::Shift(&v), gap, eps)?;
        points.push(SolutionPoint {
            image: vop.image(&r.point),
            preimage: r.point.clone(),
        });
        if r.upper <= eps {
            achieved = achieved.max(r.upper);
            outer.mark_verified(&v);
            continue;
        }
        if r.lower <= 1e-12 * (1.0 + norm_inf(&v)) {
            warn!("vertex could not be separated; accepting with gap {:.3e}", r.upper);
            achieved = achieved.max(r.upper);
            converged = false;
            outer.mark_verified(&v);
            continue;
        }
        let mut w = vec![0.0; cone.dim()];
        for (wj, d) in kel.duals.iter().zip(&r.duals) {
            let u = -d;
            if u > 0.0 {
                for i in 0..w.len() {
                    w[i] += u * wj[i];
                }
            }
        }
        let offset = dot(&w, &v) + r.lower * dot(&w, &m);
        debug!("convex cut at {:?}: shift in [{:.3e}, {:.3e}]", v, r.lower, r.upper);
        outer.add_cut(Halfspace::new(w, offset)?);
    }
    let upper_image = outer.to_polyhedron();
    let points = prune_points(points, &cone);
    Ok(VopSolution {
        points,
        directions: upper_image.directions().to_vec(),
        direction: m,
        upper_image,
        epsilon: eps,
        achieved_epsilon: achieved,
        converged,
    })
}

/// Keeps the points whose images are vertices of their generated set.
fn prune_points(points: Vec<SolutionPoint>, cone: &crate::geometry::OrderingCone) -> Vec<SolutionPoint> {
    let imgs: Vec<Vec<f64>> = points.iter().map(|p| p.image.clone()).collect();
    let Ok(hull) = Polyhedron::from_generators(&imgs, &[], cone) else {
        return points;
    };
    let mut kept: Vec<SolutionPoint> = Vec::new();
    for v in hull.vertices() {
        let found = points.iter().find(|p| {
            p.image
                .iter()
                .zip(v)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()))
        });
        if let Some(p) = found {
            kept.push(p.clone());
        }
    }
    if kept.is_empty() {
        return points;
    }
    kept
}
