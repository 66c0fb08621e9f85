use log::debug;

use super::outer::OuterApprox;
use super::{direction_for, LinearVop, SolutionPoint, VopOptions, VopSolution};
use crate::error::{Error, Result};
use crate::geometry::linalg::{dot, norm_inf};
use crate::geometry::Halfspace;
use crate::lp::{LinearProgram, LpStatus, Simplex};

/// Weighted objective `w^T P` as a dense vector over the variables.
pub(crate) fn weighted_objective(objective: &[Vec<(usize, f64)>], w: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n];
    for (row, wi) in objective.iter().zip(w) {
        if *wi == 0.0 {
            continue;
        }
        for (j, v) in row {
            c[*j] += wi * v;
        }
    }
    c
}

/// LP over `(x, s)` with one row `w_j^T P x - (w_j^T m) s <= w_j^T (v - offset)`
/// per dual generator; the rows start free.
pub(crate) fn shift_lp(
    n: usize,
    objective: &[Vec<(usize, f64)>],
    constraints: &[crate::lp::Constraint],
    bounds: &[(f64, f64)],
    duals: &[Vec<f64>],
    m: &[f64],
) -> (LinearProgram, Vec<usize>) {
    let mut lp = LinearProgram::new(n + 1);
    for (j, b) in bounds.iter().enumerate() {
        lp.set_bounds(j, b.0, b.1);
    }
    for c in constraints {
        lp.add(c.clone());
    }
    let mut rows = Vec::with_capacity(duals.len());
    for w in duals {
        let mut coeffs: Vec<(usize, f64)> = weighted_objective(objective, w, n)
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        coeffs.push((n, -dot(w, m)));
        let idx = lp.add(crate::lp::Constraint::new(
            coeffs,
            crate::lp::Relation::Le,
            0.0,
        ));
        rows.push(idx);
    }
    (lp, rows)
}

fn status_error(st: LpStatus, what: &str) -> Error {
    match st {
        LpStatus::Infeasible => Error::Infeasible(format!("{what}: feasible set is empty")),
        LpStatus::Unbounded => Error::Unbounded(what.to_string()),
        LpStatus::NumericFailure(e) => Error::NumericFailure(format!("{what}: {e}")),
        LpStatus::Optimal(_) => Error::NumericFailure(format!("{what}: unexpected optimum")),
    }
}

/// Computes the upper image of a linear vector optimisation problem.
pub fn solve_linear(vop: &LinearVop, opts: &VopOptions) -> Result<VopSolution> {
    vop.validate()?;
    let n = vop.num_vars;
    let cone = &vop.cone;
    let m = direction_for(cone, opts)?;
    let duals = cone.dual_generators().to_vec();
    let (lp, rows) = shift_lp(n, &vop.objective, &vop.constraints, &vop.bounds, &duals, &m);
    let mut sx = Simplex::new(&lp);
    for &r in &rows {
        sx.set_row_bounds(r, f64::NEG_INFINITY, f64::INFINITY);
    }
    let mut initial = Vec::with_capacity(duals.len());
    for w in &duals {
        let mut c = weighted_objective(&vop.objective, w, n);
        c.push(0.0);
        sx.set_objective(&c);
        match sx.solve() {
            LpStatus::Optimal(sol) => {
                let h = sol.value + dot(w, &vop.offset);
                initial.push(Halfspace::new(w.clone(), h)?);
            }
            st => return Err(status_error(st, "weighted-sum problem")),
        }
    }
    let mut outer = OuterApprox::new(cone, initial)?;
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    sx.set_objective(&c);
    let mut points: Vec<SolutionPoint> = Vec::new();
    while let Some(v) = outer.first_unverified() {
        if outer.num_cuts() > opts.max_cuts {
            return Err(Error::NumericFailure("cut limit reached".into()));
        }
        for (w, &r) in duals.iter().zip(&rows) {
            let rhs = dot(w, &v) - dot(w, &vop.offset);
            sx.set_row_bounds(r, f64::NEG_INFINITY, rhs);
        }
        let sol = match sx.solve() {
            LpStatus::Optimal(sol) => sol,
            st => return Err(status_error(st, "vertex shift problem")),
        };
        let s = sol.value;
        let tol = opts.tol * (1.0 + norm_inf(&v));
        let x = sol.x[..n].to_vec();
        if s <= tol {
            outer.mark_verified(&v);
            points.push(SolutionPoint {
                image: vop.image(&x),
                preimage: x,
            });
            continue;
        }
        let mut w = vec![0.0; cone.dim()];
        for (wj, &r) in duals.iter().zip(&rows) {
            let u = -sol.duals[r];
            if u > 0.0 {
                for i in 0..w.len() {
                    w[i] += u * wj[i];
                }
            }
        }
        let offset = dot(&w, &v) + s * dot(&w, &m);
        debug!("cut at vertex {:?} with shift {s:.3e}", v);
        outer.add_cut(Halfspace::new(w, offset)?);
    }
    let upper_image = outer.to_polyhedron();
    // Keep one point per final vertex.
    let mut kept: Vec<SolutionPoint> = Vec::new();
    for v in upper_image.vertices() {
        if let Some(p) = points
            .iter()
            .rev()
            .find(|p| upper_image_point_matches(&p.image, v, &upper_image))
        {
            kept.push(p.clone());
        }
    }
    Ok(VopSolution {
        points: kept,
        directions: upper_image.directions().to_vec(),
        direction: m,
        upper_image,
        epsilon: 0.0,
        achieved_epsilon: 0.0,
        converged: true,
    })
}

/// Image `y` represents vertex `v` up to lines of the cone.
fn upper_image_point_matches(y: &[f64], v: &[f64], p: &crate::geometry::Polyhedron) -> bool {
    let lines = p.cone().lineality();
    let mut d: Vec<f64> = y.iter().zip(v).map(|(a, b)| a - b).collect();
    if !lines.is_empty() {
        let (_, range) = crate::geometry::linalg::null_and_range(p.cone().dual_generators(), v.len());
        let mut proj = vec![0.0; v.len()];
        for b in &range {
            let c = dot(&d, b);
            for i in 0..v.len() {
                proj[i] += c * b[i];
            }
        }
        d = proj;
    }
    norm_inf(&d) <= 1e-7 * (1.0 + norm_inf(v))
}
