//! Linear programming.
//!
//! A bounded-variable revised simplex method with an explicit basis inverse,
//! primal and dual iterations, and warm starts after changes to bounds,
//! objective, or after appending rows. Results are deterministic.

mod simplex;

pub use simplex::Simplex;

/// Sense of a linear constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

/// A sparse row `sum coeffs[k].1 * x[coeffs[k].0]  (rel)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Constraint {
            coeffs,
            relation,
            rhs,
        }
    }

    /// Builds a row from a dense coefficient vector, dropping zeros.
    pub fn dense(coeffs: &[f64], relation: Relation, rhs: f64) -> Self {
        let coeffs = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        Constraint::new(coeffs, relation, rhs)
    }

    /// Row activity at `x`.
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(j, v)| v * x[*j]).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.relation {
            Relation::Ge => (self.rhs - a).max(0.0),
            Relation::Le => (a - self.rhs).max(0.0),
            Relation::Eq => (a - self.rhs).abs(),
        }
    }

    pub(crate) fn bounds(&self) -> (f64, f64) {
        match self.relation {
            Relation::Ge => (self.rhs, f64::INFINITY),
            Relation::Le => (f64::NEG_INFINITY, self.rhs),
            Relation::Eq => (self.rhs, self.rhs),
        }
    }
}

/// `min c^T x` subject to rows and variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A program over `n` free variables with zero objective.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn with_objective(mut self, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), self.objective.len());
        self.objective = c;
        self
    }

    pub fn add(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.bounds[j] = (lo, hi);
    }

    pub fn nonnegative(mut self) -> Self {
        for b in &mut self.bounds {
            *b = (0.0, f64::INFINITY);
        }
        self
    }
}

/// Optimal primal point with its multipliers.
///
/// `duals[i]` is the multiplier of row `i` with the sign convention of a
/// minimisation: nonnegative on `Ge` rows, nonpositive on `Le` rows.
/// `reduced_costs[j] = c_j - duals^T A_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
    NumericFailure(String),
}

impl LpStatus {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpStatus::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, LpStatus::Optimal(_))
    }
}

/// Solves `lp` from a cold start.
pub fn solve(lp: &LinearProgram) -> LpStatus {
    Simplex::new(lp).solve()
}

/// Dual objective `sum_i duals_i * rhs_i + sum_j d_j * (active bound of x_j)`.
pub fn dual_value(lp: &LinearProgram, sol: &LpSolution) -> f64 {
    let mut v = 0.0;
    for (c, y) in lp.constraints.iter().zip(&sol.duals) {
        v += y * c.rhs;
    }
    for (j, d) in sol.reduced_costs.iter().enumerate() {
        let (lo, hi) = lp.bounds[j];
        if *d > 0.0 && lo.is_finite() {
            v += d * lo;
        } else if *d < 0.0 && hi.is_finite() {
            v += d * hi;
        } else if d.abs() > 0.0 {
            v += d * sol.x[j];
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(lp: &LinearProgram) -> LpSolution {
        match solve(lp) {
            LpStatus::Optimal(s) => s,
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn small_maximisation() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x,y >= 0
        let mut lp = LinearProgram::new(2).nonnegative().with_objective(vec![-1.0, -1.0]);
        lp.add(Constraint::dense(&[1.0, 2.0], Relation::Le, 4.0));
        lp.add(Constraint::dense(&[3.0, 1.0], Relation::Le, 6.0));
        let s = opt(&lp);
        assert!((s.x[0] - 1.6).abs() < 1e-9);
        assert!((s.x[1] - 1.2).abs() < 1e-9);
        assert!((s.value + 2.8).abs() < 1e-9);
        assert!((dual_value(&lp, &s) - s.value).abs() < 1e-9);
        assert!(s.duals.iter().all(|d| *d <= 1e-12));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1).nonnegative().with_objective(vec![1.0]);
        lp.add(Constraint::dense(&[1.0], Relation::Le, -1.0));
        assert_eq!(solve(&lp), LpStatus::Infeasible);

        let mut lp = LinearProgram::new(2).with_objective(vec![1.0, 0.0]);
        lp.add(Constraint::dense(&[1.0, 1.0], Relation::Ge, 0.0));
        assert_eq!(solve(&lp), LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min x + y s.t. x - y = 1, x + y >= 3
        let mut lp = LinearProgram::new(2).with_objective(vec![1.0, 1.0]);
        lp.add(Constraint::dense(&[1.0, -1.0], Relation::Eq, 1.0));
        lp.add(Constraint::dense(&[1.0, 1.0], Relation::Ge, 3.0));
        let s = opt(&lp);
        assert!((s.value - 3.0).abs() < 1e-9);
        assert!(s.duals[1] >= -1e-12);
        assert!((dual_value(&lp, &s) - s.value).abs() < 1e-9);
    }

    #[test]
    fn ge_row_dual_sign() {
        let mut lp = LinearProgram::new(1).with_objective(vec![1.0]);
        lp.add(Constraint::dense(&[1.0], Relation::Ge, 3.0));
        let s = opt(&lp);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn warm_start_rhs_change_and_added_row() {
        let mut lp = LinearProgram::new(2).nonnegative().with_objective(vec![-1.0, -1.0]);
        lp.add(Constraint::dense(&[1.0, 2.0], Relation::Le, 4.0));
        lp.add(Constraint::dense(&[3.0, 1.0], Relation::Le, 6.0));
        let mut sx = Simplex::new(&lp);
        let first = sx.solve().optimal().unwrap();
        assert!((first.value + 2.8).abs() < 1e-9);
        sx.set_row_bounds(0, f64::NEG_INFINITY, 2.0);
        let second = sx.solve().optimal().unwrap();
        lp.constraints[0].rhs = 2.0;
        let cold = opt(&lp);
        assert!((second.value - cold.value).abs() < 1e-9);
        sx.add_row(&[(0, 1.0)], f64::NEG_INFINITY, 0.5);
        let third = sx.solve().optimal().unwrap();
        lp.add(Constraint::dense(&[1.0], Relation::Le, 0.5));
        let cold = opt(&lp);
        assert!((third.value - cold.value).abs() < 1e-9);
        sx.set_objective(&[1.0, -2.0]);
        let fourth = sx.solve().optimal().unwrap();
        lp.objective = vec![1.0, -2.0];
        assert!((fourth.value - opt(&lp).value).abs() < 1e-9);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example for Dantzig's rule without anti-cycling.
        let mut lp = LinearProgram::new(4)
            .nonnegative()
            .with_objective(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add(Constraint::dense(&[0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0));
        lp.add(Constraint::dense(&[0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0));
        lp.add(Constraint::dense(&[0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0));
        let s = opt(&lp);
        assert!((s.value + 0.05).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
            (2usize..6, 1usize..6).prop_flat_map(|(n, m)| {
                (
                    proptest::collection::vec(-3.0f64..3.0, n),
                    proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, n), m),
                    proptest::collection::vec(0.0f64..5.0, m),
                )
            })
        }

        proptest! {
            #[test]
            fn strong_duality((c, a, b) in instance()) {
                // Feasible at the origin and bounded by the box.
                let n = c.len();
                let mut lp = LinearProgram::new(n).with_objective(c);
                for j in 0..n {
                    lp.set_bounds(j, 0.0, 10.0);
                }
                for (row, rhs) in a.iter().zip(&b) {
                    lp.add(Constraint::dense(row, Relation::Le, *rhs));
                }
                let s = opt(&lp);
                prop_assert!(lp.constraints.iter().all(|r| r.violation(&s.x) <= 1e-8));
                prop_assert!(s.x.iter().all(|x| *x >= -1e-9 && *x <= 10.0 + 1e-9));
                prop_assert!(s.duals.iter().all(|y| *y <= 1e-9));
                prop_assert!((dual_value(&lp, &s) - s.value).abs() <= 1e-7 * (1.0 + s.value.abs()));
            }
        }
    }
}
