//! Forward pass: holdings, injections and trades along a realized path,
//! reconstructed from the solution points stored at each node.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::linalg::{add, dot, norm_inf, sub};
use crate::geometry::OrderingCone;
use crate::lp::{solve, Constraint, LinearProgram, LpStatus, Relation};
use crate::market::MarketSet;
use crate::recursion::{NodeRiskSet, RiskRun, RunMode};
use crate::riskmeasures::{accepts, RiskKind};
use crate::tree::{NodeId, Tree};

/// Holdings, injections and trades along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTrace {
    pub path: Vec<NodeId>,
    /// Holdings before trading, in `R^d`.
    pub z: Vec<Vec<f64>>,
    /// Holdings in eligible coordinates.
    pub z_coords: Vec<Vec<f64>>,
    /// Injections; `u[0] = z[0]`.
    pub u: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    /// Weights on the node's solution points.
    pub lambda: Vec<Vec<f64>>,
    /// Extra capital along the node direction needed to reach the inner
    /// approximation; zero for exact runs.
    pub lift: Vec<f64>,
    pub cost: Vec<f64>,
    pub seed: Option<u64>,
}

/// Outcome of [`verify_trace`].
#[derive(Debug, Clone, Default)]
pub struct TraceReport {
    pub checks: usize,
    pub violations: Vec<String>,
}

impl TraceReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(what());
        }
    }
}

fn lp_error(st: LpStatus, what: &str) -> Error {
    match st {
        LpStatus::Infeasible => Error::Infeasible(format!("{what}: point outside the set")),
        LpStatus::Unbounded => Error::Unbounded(what.into()),
        LpStatus::NumericFailure(e) => Error::NumericFailure(format!("{what}: {e}")),
        LpStatus::Optimal(_) => Error::NumericFailure(what.into()),
    }
}

/// Rows `sum_i lambda_i w^T y_i <= w^T z` per dual generator and
/// `sum lambda = 1`; an optional extra column `-w^T m` shifts `z` along `m`.
fn weight_lp(z: &[f64], images: &[Vec<f64>], cone: &OrderingCone, shift: Option<&[f64]>) -> LinearProgram {
    let n = images.len();
    let mut lp = LinearProgram::new(n + shift.is_some() as usize).nonnegative();
    for w in cone.dual_generators() {
        let mut row: Vec<f64> = images.iter().map(|y| dot(w, y)).collect();
        if let Some(m) = shift {
            row.push(-dot(w, m));
        }
        lp.add(Constraint::dense(&row, Relation::Le, dot(w, z)));
    }
    lp.add(Constraint::new((0..n).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0));
    lp
}

fn clean_weights(mut x: Vec<f64>, n: usize) -> Vec<f64> {
    x.truncate(n);
    for v in &mut x {
        *v = v.max(0.0);
    }
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

/// Weights `lambda` minimizing `cost^T sum_i lambda_i y_i` subject to
/// `z - sum_i lambda_i y_i` in `cone`.
pub fn choose_weights(z: &[f64], images: &[Vec<f64>], cone: &OrderingCone, cost: &[f64]) -> Result<Vec<f64>> {
    if images.is_empty() {
        return Err(Error::Infeasible("node has no solution points".into()));
    }
    if images.iter().any(|y| y.len() != z.len()) || cost.len() != z.len() {
        return Err(Error::DimensionMismatch("weights: vector lengths".into()));
    }
    let obj: Vec<f64> = images.iter().map(|y| dot(cost, y)).collect();
    let lp = weight_lp(z, images, cone, None).with_objective(obj);
    match solve(&lp) {
        LpStatus::Optimal(s) => Ok(clean_weights(s.x, images.len())),
        st => Err(lp_error(st, "weight problem")),
    }
}

/// Smallest `s >= 0` with `z + s m` in the set generated by `images` and
/// `cone`.
pub fn lift_needed(z: &[f64], images: &[Vec<f64>], cone: &OrderingCone, m: &[f64]) -> Result<f64> {
    let n = images.len();
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let lp = weight_lp(z, images, cone, Some(m)).with_objective(obj);
    match solve(&lp) {
        LpStatus::Optimal(s) => Ok(s.x[n].max(0.0)),
        st => Err(lp_error(st, "lift problem")),
    }
}

fn combine(lambda: &[f64], vs: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for (l, v) in lambda.iter().zip(vs) {
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        for (o, x) in out.iter_mut().zip(&v) {
            *o += l * x;
        }
    }
    out
}

/// Scenario choices from `time` to maturity drawn from the tree
/// probabilities.
pub fn sample_path(tree: &Tree, time: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = WeightedIndex::new(&tree.probabilities).expect("positive probabilities");
    (time..tree.steps()).map(|_| dist.sample(&mut rng)).collect()
}

/// Runs the forward pass from `start` with holdings `z0` (eligible
/// coordinates), following `branches` (one scenario per remaining step).
/// `cost` is a vector in `R^d`.
pub fn forward_pass(
    run: &RiskRun,
    tree: &Tree,
    start: NodeId,
    branches: &[usize],
    z0: &[f64],
    cost: &[f64],
) -> Result<StrategyTrace> {
    let d = tree.params.d;
    let space = &run.space;
    if branches.len() != tree.steps() - start.time {
        return Err(Error::DimensionMismatch(format!(
            "path needs {} branch choices",
            tree.steps() - start.time
        )));
    }
    if z0.len() != space.dim() || cost.len() != d {
        return Err(Error::DimensionMismatch("initial holdings or cost length".into()));
    }
    if cost.iter().any(|c| *c < 0.0) || cost.iter().all(|c| *c == 0.0) {
        return Err(Error::InvalidParameters("cost must be nonnegative and nonzero".into()));
    }
    let cost_q: Vec<f64> = space.basis().iter().map(|b| dot(b, cost)).collect();
    if let Some(b) = branches.iter().find(|&&b| b >= tree.num_scenarios()) {
        return Err(Error::InvalidParameters(format!("branch {b} out of range")));
    }
    let mut path = vec![start];
    for &b in branches {
        path.push(tree.child(*path.last().unwrap(), b));
    }
    let mut trace = StrategyTrace {
        path: path.clone(),
        z: Vec::new(),
        z_coords: Vec::new(),
        u: Vec::new(),
        k: Vec::new(),
        lambda: Vec::new(),
        lift: Vec::new(),
        cost: cost.to_vec(),
        seed: None,
    };
    let mut z = z0.to_vec();
    for (step, &id) in path.iter().enumerate() {
        let ns = run.node(id);
        let images: Vec<Vec<f64>> = ns.solution.iter().map(|p| p.image.clone()).collect();
        let cone = ns.set.cone();
        let lift = match run.mode {
            RunMode::Convex { .. } => lift_needed(&z, &images, cone, &ns.direction)?,
            RunMode::Linear => 0.0,
        };
        if lift > 0.0 {
            z = add(&z, &ns.direction.iter().map(|m| lift * m).collect::<Vec<_>>());
        }
        let lambda = choose_weights(&z, &images, cone, &cost_q)?;
        let k = trade_of(ns, &lambda, &z, &images, d);
        let zd = space.embed(&z);
        let u = match trace.z.last() {
            None => zd.clone(),
            Some(prev) => add(&sub(&zd, prev), trace.k.last().unwrap()),
        };
        trace.z.push(zd);
        trace.z_coords.push(z.clone());
        trace.u.push(u);
        trace.k.push(k);
        trace.lift.push(lift);
        if step < branches.len() {
            z = combine(
                &lambda,
                ns.solution.iter().map(|p| p.successors[branches[step]].clone()),
            );
        }
        trace.lambda.push(lambda);
    }
    Ok(trace)
}

fn trade_of(ns: &NodeRiskSet, lambda: &[f64], z: &[f64], images: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut k = if ns.market.has_trade() {
        combine(lambda, ns.solution.iter().map(|p| p.trade.clone().unwrap_or_default()))
    } else {
        vec![0.0; d]
    };
    if let MarketSet::Cone(_) = ns.market {
        k = add(&k, &sub(z, &combine(lambda, images.iter().cloned())));
    }
    k
}

/// Successor holdings in `R^d` implied by the weights at step `t`.
fn successor_holdings(run: &RiskRun, trace: &StrategyTrace, t: usize, n: usize) -> Vec<Vec<f64>> {
    let ns = run.node(trace.path[t]);
    (0..n)
        .map(|s| {
            run.space.embed(&combine(
                &trace.lambda[t],
                ns.solution.iter().map(|p| p.successors[s].clone()),
            ))
        })
        .collect()
}

/// Checks the optimality inclusions along `trace`. `payoff` is indexed by
/// terminal node. With `truncation`, the pass is rerun from every
/// intermediate node and its terminal checks are repeated.
pub fn verify_trace(
    trace: &StrategyTrace,
    run: &RiskRun,
    tree: &Tree,
    payoff: &[Vec<f64>],
    truncation: bool,
    tol: f64,
) -> TraceReport {
    let mut rep = TraceReport::default();
    let spec = &run.spec;
    let last = trace.path.len() - 1;
    let scaled = |v: &[f64]| tol * (1.0 + norm_inf(v));
    for (t, &id) in trace.path.iter().enumerate() {
        let ns = run.node(id);
        let z = &trace.z[t];
        let zc = &trace.z_coords[t];
        let k = &trace.k[t];
        rep.check(ns.set.contains(zc, scaled(zc)), || format!("I1 at {id}: holdings outside the set"));
        let lsum: f64 = trace.lambda[t].iter().sum();
        rep.check(
            trace.lambda[t].iter().all(|l| *l >= 0.0) && (lsum - 1.0).abs() <= 1e-9,
            || format!("weights at {id} are not convex"),
        );
        rep.check(ns.market.contains_trade(k, scaled(k)), || format!("trade at {id} is not admissible"));
        let lift_bound = ns.epsilon_step * (1.0 + 1e-6) + tol;
        rep.check(trace.lift[t] <= lift_bound, || {
            format!("lift {:.3e} at {id} exceeds the node tolerance", trace.lift[t])
        });
        let after = sub(z, k);
        if t < last {
            let n = tree.num_scenarios();
            let mut next = successor_holdings(run, trace, t, n);
            let realized = tree.node(id).successors.iter().position(|&c| c == trace.path[t + 1].index);
            let lifted = {
                let nn = run.node(trace.path[t + 1]);
                let m: Vec<f64> = nn.direction.iter().map(|m| trace.lift[t + 1] * m).collect();
                run.space.embed(&m)
            };
            if let Some(s) = realized {
                next[s] = sub(&trace.z[t + 1], &lifted);
            }
            let zs: Vec<(Vec<f64>, f64)> = next.into_iter().zip(tree.probabilities.iter().copied()).collect();
            rep.check(accepts(spec, &after, &zs, scaled(&after)), || {
                format!("I2 at {id}: holdings after trading do not cover the next step")
            });
            let mut us: Vec<(Vec<f64>, f64)> = zs.iter().map(|(zn, p)| (sub(zn, &after), *p)).collect();
            if let Some(s) = realized {
                us[s].0 = sub(&trace.u[t + 1], &lifted);
            }
            let zero = vec![0.0; z.len()];
            rep.check(accepts(spec, &zero, &us, scaled(z)), || {
                format!("I3 at {id}: next injection is not acceptable")
            });
        } else {
            terminal_checks(&mut rep, run, id, &after, &payoff[id.index], tol);
        }
    }
    let mut tele = trace.z[0].clone();
    for t in 1..=last {
        tele = add(&tele, &sub(&trace.u[t], &trace.k[t - 1]));
    }
    rep.check(
        norm_inf(&sub(&tele, &trace.z[last])) <= 1e-9 * (1.0 + norm_inf(&trace.z[last])),
        || "injections do not telescope to the terminal holdings".into(),
    );
    if truncation {
        for t in 1..last {
            let branches = branches_of(tree, &trace.path[t..]);
            match forward_pass(run, tree, trace.path[t], &branches, &trace.z_coords[t], &trace.cost) {
                Ok(rest) => {
                    let sub_rep = verify_trace(&rest, run, tree, payoff, false, tol);
                    rep.check(sub_rep.is_ok(), || {
                        format!("continuation from {} fails: {}", trace.path[t], sub_rep.violations.join("; "))
                    });
                }
                Err(e) => rep.check(false, || format!("continuation from {} fails: {e}", trace.path[t])),
            }
        }
    }
    rep
}

fn terminal_checks(rep: &mut TraceReport, run: &RiskRun, id: NodeId, after: &[f64], x: &[f64], tol: f64) {
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let scale = tol * (1.0 + norm_inf(after).max(norm_inf(x)));
    rep.check(accepts(&run.spec, after, &[(neg_x, 1.0)], scale), || {
        format!("terminal position at {id} is not acceptable")
    });
    let slack = match &run.spec.kind {
        RiskKind::WorstCase => vec![0.0; x.len()],
        RiskKind::RelaxedWorstCase { epsilon, .. } => epsilon.clone(),
        _ => return,
    };
    rep.check(
        (0..x.len()).all(|i| x[i] + after[i] >= -slack[i] - scale),
        || format!("terminal position at {id} is not solvent"),
    );
}

/// Scenario indices leading along consecutive nodes of `path`.
pub fn branches_of(tree: &Tree, path: &[NodeId]) -> Vec<usize> {
    path.windows(2)
        .map(|w| {
            tree.node(w[0])
                .successors
                .iter()
                .position(|&c| c == w[1].index)
                .expect("consecutive path nodes")
        })
        .collect()
}
