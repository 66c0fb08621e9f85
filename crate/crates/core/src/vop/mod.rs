//! Vector optimisation: upper images of linear and convex problems.
//!
//! Both solvers are outer approximation schemes. The outer polyhedron is
//! refined by supporting halfspaces obtained from the scalar problem
//! "shift a vertex along a fixed interior direction `m` until it reaches the
//! upper image". Linear problems are solved exactly; convex problems
//! are solved up to a tolerance `eps` in the sense that
//! `outer + eps * m` lies inside the true upper image.

mod benson;
mod convex;
mod functions;
mod outer;

use std::sync::Arc;

pub use benson::solve_linear;
pub use convex::solve_convex;
pub use functions::{ConvexFn, ExpSum, ExpTerm, LinExpr, SquaredNorm, WeightedSum};

use crate::error::{Error, Result};
use crate::geometry::{OrderingCone, Polyhedron};
use crate::lp::Constraint;

/// `min_C P x + offset` subject to linear rows and bounds.
#[derive(Debug, Clone)]
pub struct LinearVop {
    pub num_vars: usize,
    /// One sparse row per image coordinate.
    pub objective: Vec<Vec<(usize, f64)>>,
    pub offset: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
    pub cone: OrderingCone,
}

impl LinearVop {
    pub fn new(num_vars: usize, objective: Vec<Vec<(usize, f64)>>, cone: OrderingCone) -> Self {
        let q = objective.len();
        LinearVop {
            num_vars,
            objective,
            offset: vec![0.0; q],
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
            cone,
        }
    }

    pub fn image_dim(&self) -> usize {
        self.objective.len()
    }

    pub fn image(&self, x: &[f64]) -> Vec<f64> {
        image_of(&self.objective, &self.offset, x)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        validate_common(
            self.num_vars,
            &self.objective,
            &self.offset,
            &self.constraints,
            &self.bounds,
            &self.cone,
        )
    }
}

/// `min_C P x + offset` subject to linear rows, bounds and convex
/// constraints `g_j(x) <= 0`.
#[derive(Debug, Clone)]
pub struct ConvexVop {
    pub num_vars: usize,
    pub objective: Vec<Vec<(usize, f64)>>,
    pub offset: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
    pub convex: Vec<Arc<dyn ConvexFn>>,
    pub cone: OrderingCone,
    /// Optional variable-space direction along which every convex
    /// constraint strictly decreases while linear rows stay satisfied.
    pub repair_direction: Option<Vec<f64>>,
}

impl ConvexVop {
    pub fn new(num_vars: usize, objective: Vec<Vec<(usize, f64)>>, cone: OrderingCone) -> Self {
        let q = objective.len();
        ConvexVop {
            num_vars,
            objective,
            offset: vec![0.0; q],
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
            convex: Vec::new(),
            cone,
            repair_direction: None,
        }
    }

    /// Problem with a convex image map `psi` (componentwise convex), in
    /// epigraph form: the variables are `x` followed by the `q` image
    /// variables, with `w^T (psi(x) - y) <= 0` for every dual generator `w`
    /// of the cone. Requires nonnegative dual generators.
    pub fn with_convex_image(
        num_vars: usize,
        psi: Vec<Arc<dyn ConvexFn>>,
        cone: OrderingCone,
    ) -> Result<Self> {
        let q = psi.len();
        if q != cone.dim() {
            return Err(Error::DimensionMismatch("image map and cone".into()));
        }
        let n = num_vars + q;
        let objective: Vec<Vec<(usize, f64)>> = (0..q).map(|i| vec![(num_vars + i, 1.0)]).collect();
        let mut vop = ConvexVop::new(n, objective, cone.clone());
        for w in cone.dual_generators() {
            if w.iter().any(|x| *x < -1e-12) {
                return Err(Error::InvalidParameters(
                    "convex image map needs a cone containing the orthant".into(),
                ));
            }
            let mut parts: Vec<(f64, Arc<dyn ConvexFn>)> = Vec::new();
            for (i, p) in psi.iter().enumerate() {
                if w[i] > 0.0 {
                    parts.push((w[i], p.clone()));
                }
            }
            let lin = LinExpr::new((0..q).map(|i| (num_vars + i, -w[i])).collect(), 0.0);
            vop.convex.push(Arc::new(WeightedSum::new(parts, lin)));
        }
        let mut dir = vec![0.0; n];
        let m = cone.interior_direction();
        dir[num_vars..].copy_from_slice(&m);
        vop.repair_direction = Some(dir);
        Ok(vop)
    }

    pub fn image_dim(&self) -> usize {
        self.objective.len()
    }

    pub fn image(&self, x: &[f64]) -> Vec<f64> {
        image_of(&self.objective, &self.offset, x)
    }

    /// Largest convex constraint value at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.convex
            .iter()
            .map(|g| g.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        validate_common(
            self.num_vars,
            &self.objective,
            &self.offset,
            &self.constraints,
            &self.bounds,
            &self.cone,
        )?;
        if let Some(d) = &self.repair_direction {
            if d.len() != self.num_vars {
                return Err(Error::DimensionMismatch("repair direction".into()));
            }
        }
        Ok(())
    }
}

fn image_of(objective: &[Vec<(usize, f64)>], offset: &[f64], x: &[f64]) -> Vec<f64> {
    objective
        .iter()
        .zip(offset)
        .map(|(row, o)| o + row.iter().map(|(j, v)| v * x[*j]).sum::<f64>())
        .collect()
}

fn validate_common(
    n: usize,
    objective: &[Vec<(usize, f64)>],
    offset: &[f64],
    constraints: &[Constraint],
    bounds: &[(f64, f64)],
    cone: &OrderingCone,
) -> Result<()> {
    if objective.len() != cone.dim() || offset.len() != cone.dim() {
        return Err(Error::DimensionMismatch(format!(
            "image dimension {} vs cone dimension {}",
            objective.len(),
            cone.dim()
        )));
    }
    if bounds.len() != n {
        return Err(Error::DimensionMismatch("bounds length".into()));
    }
    let bad = objective
        .iter()
        .flatten()
        .chain(constraints.iter().flat_map(|c| c.coeffs.iter()))
        .any(|(j, v)| *j >= n || !v.is_finite());
    if bad {
        return Err(Error::DimensionMismatch(
            "coefficient refers to a missing variable or is not finite".into(),
        ));
    }
    Ok(())
}

/// A feasible point of the problem and its image.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPoint {
    pub preimage: Vec<f64>,
    pub image: Vec<f64>,
}

/// Result of a vector optimisation.
///
/// For linear problems `upper_image` is exact and every vertex is the image
/// of a returned point. For convex problems `upper_image` is the outer
/// approximation and the images of `points` generate an inner one with
/// `upper_image + epsilon * direction` contained in it.
#[derive(Debug, Clone)]
pub struct VopSolution {
    pub points: Vec<SolutionPoint>,
    pub directions: Vec<Vec<f64>>,
    pub upper_image: Polyhedron,
    pub direction: Vec<f64>,
    pub epsilon: f64,
    pub achieved_epsilon: f64,
    pub converged: bool,
}

impl VopSolution {
    /// Polyhedron generated by the solution images and the cone.
    pub fn inner(&self) -> Result<Polyhedron> {
        let imgs: Vec<Vec<f64>> = self.points.iter().map(|p| p.image.clone()).collect();
        Polyhedron::from_generators(&imgs, &[], self.upper_image.cone())
    }
}

/// Solver controls shared by the linear and convex variants.
#[derive(Debug, Clone)]
pub struct VopOptions {
    /// Interior direction of the ordering cone; defaults to the normalised
    /// sum of its generators.
    pub direction: Option<Vec<f64>>,
    /// Vertex acceptance tolerance of the linear solver.
    pub tol: f64,
    /// Bound applied to otherwise unbounded variables of convex problems.
    pub box_bound: f64,
    pub max_cuts: usize,
    pub max_inner_iterations: usize,
}

impl Default for VopOptions {
    fn default() -> Self {
        VopOptions {
            direction: None,
            tol: 1e-7,
            box_bound: 1e6,
            max_cuts: 20_000,
            max_inner_iterations: 2_000,
        }
    }
}

pub(crate) fn direction_for(cone: &OrderingCone, opts: &VopOptions) -> Result<Vec<f64>> {
    let m = match &opts.direction {
        Some(m) => m.clone(),
        None => cone.interior_direction(),
    };
    if m.len() != cone.dim() {
        return Err(Error::DimensionMismatch("direction length".into()));
    }
    let ok = cone
        .dual_generators()
        .iter()
        .all(|w| w.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() > 1e-12);
    if !ok {
        return Err(Error::InvalidParameters(
            "direction is not interior to the ordering cone".into(),
        ));
    }
    Ok(m)
}
