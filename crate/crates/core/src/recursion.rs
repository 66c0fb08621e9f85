//! Backward induction of node risk sets on a recombining tree.
//!
//! Terminal nodes solve the terminal problem of the payoff; every other
//! node solves the one-step problem whose successor holdings range over the
//! successors' sets. Nodes of one time slice are independent and may be
//! solved in parallel; slices are processed from maturity to the root.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polyhedron;
use crate::market::{market_set, MarketModel, MarketSet};
use crate::riskmeasures::{
    onestep_problem, terminal_problem, Child, ChildEncoding, EligibleSpace, NodeVop,
    RiskMeasureSpec,
};
use crate::tree::{NodeId, Tree};
use crate::vop::{solve_convex, solve_linear, VopOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Linear,
    /// Convex problems are solved to tolerance `epsilon` per node.
    Convex { epsilon: f64 },
}

impl RunMode {
    pub fn epsilon(&self) -> f64 {
        match self {
            RunMode::Linear => 0.0,
            RunMode::Convex { epsilon } => *epsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecursionOptions {
    pub mode: RunMode,
    pub encoding: ChildEncoding,
    /// Worker threads; 0 uses all available cores.
    pub jobs: usize,
    pub vop: VopOptions,
}

impl Default for RecursionOptions {
    fn default() -> Self {
        RecursionOptions {
            mode: RunMode::Linear,
            encoding: ChildEncoding::Vertices,
            jobs: 1,
            vop: VopOptions::default(),
        }
    }
}

/// One stored solution of a node problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePoint {
    /// Holding at each successor, in eligible coordinates; empty at maturity.
    pub successors: Vec<Vec<f64>>,
    /// Capital requirement before trading, in eligible coordinates.
    pub y: Vec<f64>,
    /// Explicit trade in `R^d` for markets that carry one.
    pub trade: Option<Vec<f64>>,
    /// Image of the point: `y`, or `y + trade`.
    pub image: Vec<f64>,
}

/// The computed risk set at one node.
#[derive(Debug, Clone)]
pub struct NodeRiskSet {
    pub node: NodeId,
    /// Exact set, or its outer approximation in convex mode.
    pub set: Polyhedron,
    pub solution: Vec<NodePoint>,
    /// Tolerance of this node's own solve; zero when exact.
    pub epsilon_step: f64,
    /// Accumulated tolerance including all later nodes.
    pub epsilon_total: f64,
    /// Interior direction used for the tolerance.
    pub direction: Vec<f64>,
    pub market: MarketSet,
}

/// Risk sets of every node of a tree.
#[derive(Debug, Clone)]
pub struct RiskRun {
    pub spec: RiskMeasureSpec,
    pub space: EligibleSpace,
    pub model: MarketModel,
    pub mode: RunMode,
    pub layers: Vec<Vec<NodeRiskSet>>,
}

impl RiskRun {
    pub fn node(&self, id: NodeId) -> &NodeRiskSet {
        &self.layers[id.time][id.index]
    }

    pub fn root(&self) -> &NodeRiskSet {
        &self.layers[0][0]
    }

    pub fn steps(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Risk sets without market extension; `payoff` is indexed by terminal
/// node.
pub fn backward_induct(
    tree: &Tree,
    spec: &RiskMeasureSpec,
    payoff: &[Vec<f64>],
    opts: &RecursionOptions,
) -> Result<RiskRun> {
    induct(tree, spec, payoff, &MarketModel::None, opts)
}

/// Risk sets with the market extension applied at every time, including
/// maturity.
pub fn backward_induct_market(
    tree: &Tree,
    spec: &RiskMeasureSpec,
    payoff: &[Vec<f64>],
    model: &MarketModel,
    opts: &RecursionOptions,
) -> Result<RiskRun> {
    if spec.m_basis.is_some() && !spec.eligible(tree.params.d)?.is_full() {
        return Err(Error::InvalidParameters(
            "market extension needs the full eligible space".into(),
        ));
    }
    induct(tree, spec, payoff, model, opts)
}

fn induct(
    tree: &Tree,
    spec: &RiskMeasureSpec,
    payoff: &[Vec<f64>],
    model: &MarketModel,
    opts: &RecursionOptions,
) -> Result<RiskRun> {
    let d = tree.params.d;
    spec.validate(d)?;
    let space = spec.eligible(d)?;
    let t_max = tree.steps();
    if payoff.len() != tree.layer(t_max).len() {
        return Err(Error::DimensionMismatch(format!(
            "payoff has {} entries, tree has {} terminal nodes",
            payoff.len(),
            tree.layer(t_max).len()
        )));
    }
    if payoff.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::DimensionMismatch(format!("payoffs need {d} finite entries")));
    }
    match opts.mode {
        RunMode::Linear => {
            if spec.is_convex() || model.is_convex() {
                return Err(Error::InvalidParameters(
                    "convex risk measures and convex markets need convex mode".into(),
                ));
            }
        }
        RunMode::Convex { epsilon } => {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::InvalidParameters("convex mode needs epsilon > 0".into()));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidParameters(format!("thread pool: {e}")))?;
    let mut layers: Vec<Vec<NodeRiskSet>> = Vec::with_capacity(t_max + 1);
    for t in (0..=t_max).rev() {
        let children = layers.last();
        let slice: Vec<NodeRiskSet> = pool.install(|| {
            tree.layer(t)
                .par_iter()
                .map(|node| {
                    solve_node(tree, node.id, spec, model, children, payoff, opts).map_err(|e| {
                        Error::SolverAbort {
                            node: format!("{} (scenario path {:?})", node.id, tree.path_to(node.id)),
                            reason: e.to_string(),
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let verts: usize = slice.iter().map(|s| s.set.vertices().len()).sum();
        let eps = slice.iter().map(|s| s.epsilon_total).fold(0.0, f64::max);
        info!(
            "time {t}: {} nodes, {verts} vertices, accumulated tolerance {eps:.3e}",
            slice.len()
        );
        layers.push(slice);
    }
    layers.reverse();
    Ok(RiskRun {
        spec: spec.clone(),
        space,
        model: model.clone(),
        mode: opts.mode,
        layers,
    })
}

fn solve_node(
    tree: &Tree,
    id: NodeId,
    spec: &RiskMeasureSpec,
    model: &MarketModel,
    children: Option<&Vec<NodeRiskSet>>,
    payoff: &[Vec<f64>],
    opts: &RecursionOptions,
) -> Result<NodeRiskSet> {
    let node = tree.node(id);
    let d = tree.params.d;
    let market = market_set(node, model)?;
    let (problem, child_eps) = match children {
        None => (terminal_problem(spec, &payoff[id.index], &market)?, 0.0),
        Some(layer) => {
            let kids: Vec<Child> = node
                .successors
                .iter()
                .zip(&tree.probabilities)
                .map(|(&c, &p)| Child {
                    set: &layer[c].set,
                    probability: p,
                })
                .collect();
            let eps = node
                .successors
                .iter()
                .map(|&c| layer[c].epsilon_total)
                .fold(0.0, f64::max);
            (onestep_problem(spec, d, &kids, &market, opts.encoding)?, eps)
        }
    };
    let (sol, eps_step) = match &problem.vop {
        NodeVop::Linear(v) => (solve_linear(v, &opts.vop)?, 0.0),
        NodeVop::Convex(v) => {
            let eps = opts.mode.epsilon();
            let s = solve_convex(v, eps, &opts.vop)?;
            let step = eps.max(s.achieved_epsilon);
            (s, step)
        }
    };
    debug!(
        "node {id}: {} vertices, {} solution points",
        sol.upper_image.vertices().len(),
        sol.points.len()
    );
    let solution = sol
        .points
        .iter()
        .map(|p| {
            let dec = problem.decode(&p.preimage);
            NodePoint {
                successors: dec.successors,
                y: dec.y,
                trade: dec.trade,
                image: p.image.clone(),
            }
        })
        .collect();
    Ok(NodeRiskSet {
        node: id,
        set: sol.upper_image,
        solution,
        epsilon_step: eps_step,
        epsilon_total: child_eps + eps_step,
        direction: sol.direction,
        market,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{includes, OrderingCone};
    use crate::market::TradingConstraint;
    use crate::riskmeasures::RiskKind;
    use crate::tree::{build_tree, Compounding, TreeParams};

    fn crr(steps: usize) -> Tree {
        build_tree(&TreeParams {
            d: 2,
            steps,
            horizon: 1.0,
            branches: 2,
            nu: 1.0,
            mu: vec![0.125],
            sigma: vec![0.5],
            rho: None,
            s0: vec![1.0],
            rate: 0.0,
            gamma: vec![0.05],
            compounding: Compounding::Continuous,
        })
        .unwrap()
    }

    fn payoff(tree: &Tree) -> Vec<Vec<f64>> {
        tree.layer(tree.steps())
            .iter()
            .map(|n| vec![1.0 - 2.0 * n.mid[0], n.mid[0] - 0.5])
            .collect()
    }

    #[test]
    fn worst_case_matches_direct_formula() {
        let tree = crr(3);
        let x = payoff(&tree);
        let run = backward_induct(
            &tree,
            &RiskMeasureSpec::new(RiskKind::WorstCase),
            &x,
            &RecursionOptions::default(),
        )
        .unwrap();
        let worst: Vec<f64> = (0..2)
            .map(|i| x.iter().map(|v| -v[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let root = &run.root().set;
        assert_eq!(root.vertices().len(), 1);
        for i in 0..2 {
            assert!((root.vertices()[0][i] - worst[i]).abs() < 1e-9);
        }
        assert_eq!(run.root().epsilon_total, 0.0);
    }

    #[test]
    fn encodings_agree() {
        let tree = crr(2);
        let x = payoff(&tree);
        let spec = RiskMeasureSpec::new(RiskKind::Avar { lambda: vec![0.3, 0.6] });
        let a = backward_induct(&tree, &spec, &x, &RecursionOptions::default()).unwrap();
        let opts = RecursionOptions {
            encoding: ChildEncoding::Halfspaces,
            ..Default::default()
        };
        let b = backward_induct(&tree, &spec, &x, &opts).unwrap();
        for t in 0..=2 {
            for (p, q) in a.layers[t].iter().zip(&b.layers[t]) {
                assert!(includes(&p.set, &q.set, 1e-7) && includes(&q.set, &p.set, 1e-7));
            }
        }
    }

    #[test]
    fn parallel_slices_are_identical() {
        let tree = crr(3);
        let x = payoff(&tree);
        let spec = RiskMeasureSpec::new(RiskKind::Avar { lambda: vec![0.5, 0.5] });
        let model = MarketModel::Cone { trading: None };
        let one = backward_induct_market(&tree, &spec, &x, &model, &RecursionOptions::default()).unwrap();
        let opts = RecursionOptions {
            jobs: 4,
            ..Default::default()
        };
        let four = backward_induct_market(&tree, &spec, &x, &model, &opts).unwrap();
        for (a, b) in one.layers.iter().flatten().zip(four.layers.iter().flatten()) {
            assert_eq!(a.set.vertices(), b.set.vertices());
            assert_eq!(a.solution, b.solution);
        }
    }

    #[test]
    fn monotone_in_payoff() {
        let tree = crr(2);
        let x = payoff(&tree);
        let better: Vec<Vec<f64>> = x.iter().map(|v| vec![v[0] + 0.2, v[1]]).collect();
        let spec = RiskMeasureSpec::new(RiskKind::Avar { lambda: vec![0.4, 0.4] });
        let model = MarketModel::Cone { trading: None };
        let opts = RecursionOptions::default();
        let a = backward_induct_market(&tree, &spec, &x, &model, &opts).unwrap();
        let b = backward_induct_market(&tree, &spec, &better, &model, &opts).unwrap();
        for (p, q) in a.layers.iter().flatten().zip(b.layers.iter().flatten()) {
            assert!(includes(&q.set, &p.set, 1e-7));
        }
    }

    #[test]
    fn convex_mode_required() {
        let tree = crr(1);
        let x = payoff(&tree);
        let spec = RiskMeasureSpec::new(RiskKind::Entropic {
            lambda: vec![0.1, 0.1],
            c_dual: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        });
        assert!(backward_induct(&tree, &spec, &x, &RecursionOptions::default()).is_err());
        let opts = RecursionOptions {
            mode: RunMode::Convex { epsilon: 0.01 },
            ..Default::default()
        };
        let run = backward_induct(&tree, &spec, &x, &opts).unwrap();
        assert!((run.root().epsilon_total - 0.02).abs() < 1e-15);
        assert!(run.root().set.cone().same_as(&OrderingCone::orthant(2), 1e-12));
    }

    #[test]
    fn abort_reports_node() {
        let tree = crr(1);
        let x = payoff(&tree);
        let spec = RiskMeasureSpec::new(RiskKind::WorstCase);
        let empty = TradingConstraint {
            rows: vec![(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 1.0)],
        };
        let model = MarketModel::Cone { trading: Some(empty) };
        match backward_induct_market(&tree, &spec, &x, &model, &RecursionOptions::default()) {
            Err(Error::SolverAbort { node, .. }) => assert!(node.starts_with("1:")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
