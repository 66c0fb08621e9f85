//! Text outputs: frontier and trace CSV, run and tree JSON dumps.

use std::fmt::Write;

use crate::geometry::{format_number, polyhedron_to_json};
use crate::recursion::RiskRun;
use crate::strategy::StrategyTrace;
use crate::tree::{NodeId, Tree};

fn row(out: &mut String, lead: &str, xs: &[f64]) {
    out.push_str(lead);
    for x in xs {
        out.push(',');
        out.push_str(&format_number(*x));
    }
    out.push('\n');
}

/// Vertices of the sets at `nodes`, then their recession directions.
pub fn frontier_csv(run: &RiskRun, nodes: &[NodeId]) -> String {
    let q = run.space.dim();
    let mut out = String::from("node,time,v_index");
    for i in 0..q {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for &id in nodes {
        for (v, x) in run.node(id).set.vertices().iter().enumerate() {
            row(&mut out, &format!("{id},{},{v}", id.time), x);
        }
    }
    out.push_str("# directions\n");
    out.push_str("node,time,d_index");
    for i in 0..q {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for &id in nodes {
        for (v, x) in run.node(id).set.directions().iter().enumerate() {
            row(&mut out, &format!("{id},{},{v}", id.time), x);
        }
    }
    out
}

/// One row per time: holdings, injection, trade, weight count and lift.
pub fn trace_csv(trace: &StrategyTrace) -> String {
    let d = trace.z[0].len();
    let mut out = String::new();
    if let Some(seed) = trace.seed {
        let _ = writeln!(out, "# seed {seed}");
    }
    out.push_str("time,node");
    for name in ["z", "u", "k"] {
        for i in 0..d {
            let _ = write!(out, ",{name}{i}");
        }
    }
    out.push_str(",lambda_count,lift\n");
    for (t, id) in trace.path.iter().enumerate() {
        let mut vals = trace.z[t].clone();
        vals.extend(&trace.u[t]);
        vals.extend(&trace.k[t]);
        let nz = trace.lambda[t].iter().filter(|l| **l > 0.0).count();
        out.push_str(&format!("{},{id}", id.time));
        for x in vals {
            out.push(',');
            out.push_str(&format_number(x));
        }
        let _ = writeln!(out, ",{nz},{}", format_number(trace.lift[t]));
    }
    out
}

fn list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format_number(*x)).collect();
    format!("[{}]", parts.join(","))
}

fn lists(xs: &[Vec<f64>]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| list(x)).collect();
    format!("[{}]", parts.join(","))
}

/// Every node's set and solution points, keyed by node id.
pub fn run_json(name: &str, run: &RiskRun) -> String {
    let spec = serde_json::to_string(&run.spec).expect("spec serializes");
    let mode = serde_json::to_string(&run.mode).expect("mode serializes");
    let model = serde_json::to_string(&run.model).expect("market serializes");
    let mut out = String::new();
    let _ = write!(
        out,
        "{{\"name\":{},\"risk\":{spec},\"mode\":{mode},\"market\":{model},\"nodes\":{{",
        serde_json::Value::String(name.to_string())
    );
    let mut first = true;
    for ns in run.layers.iter().flatten() {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(
            out,
            "\"{}\":{{\"epsilon_step\":{},\"epsilon_total\":{},\"direction\":{},\"set\":{},\"solution\":[",
            ns.node,
            format_number(ns.epsilon_step),
            format_number(ns.epsilon_total),
            list(&ns.direction),
            polyhedron_to_json(&ns.set)
        );
        for (i, p) in ns.solution.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let trade = p.trade.as_ref().map_or("null".to_string(), |k| list(k));
            let _ = write!(
                out,
                "{{\"y\":{},\"image\":{},\"trade\":{trade},\"successors\":{}}}",
                list(&p.y),
                list(&p.image),
                lists(&p.successors)
            );
        }
        out.push_str("]}");
    }
    out.push_str("}}\n");
    out
}

/// Prices, bond values and successor indices of every node.
pub fn tree_json(tree: &Tree) -> String {
    let params = serde_json::to_string(&tree.params).expect("tree parameters serialize");
    let mut out = String::new();
    let _ = write!(
        out,
        "{{\"params\":{params},\"scenarios\":{},\"probabilities\":{},\"nodes\":[",
        lists(&tree.scenarios),
        list(&tree.probabilities)
    );
    let mut first = true;
    for n in tree.layers.iter().flatten() {
        if !first {
            out.push(',');
        }
        first = false;
        let succ: Vec<String> = n.successors.iter().map(|s| s.to_string()).collect();
        let _ = write!(
            out,
            "{{\"id\":\"{}\",\"state\":[{}],\"mid\":{},\"bid\":{},\"ask\":{},\"bond\":{},\"successors\":[{}]}}",
            n.id,
            n.state.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            list(&n.mid),
            list(&n.bid),
            list(&n.ask),
            format_number(n.bond),
            succ.join(",")
        );
    }
    out.push_str("]}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recursion::{backward_induct, RecursionOptions};
    use crate::riskmeasures::{RiskKind, RiskMeasureSpec};
    use crate::strategy::forward_pass;
    use crate::tree::{build_tree, Compounding, TreeParams};

    fn setup() -> (Tree, RiskRun, Vec<Vec<f64>>) {
        let tree = build_tree(&TreeParams {
            d: 2,
            steps: 2,
            horizon: 1.0,
            branches: 2,
            nu: 1.0,
            mu: vec![0.1],
            sigma: vec![0.3],
            rho: None,
            s0: vec![1.0],
            rate: 0.0,
            gamma: vec![0.0],
            compounding: Compounding::Continuous,
        })
        .unwrap();
        let x: Vec<Vec<f64>> = tree.layer(2).iter().map(|n| vec![n.mid[0] - 1.0, -0.5]).collect();
        let run = backward_induct(
            &tree,
            &RiskMeasureSpec::new(RiskKind::Avar { lambda: vec![0.5, 0.5] }),
            &x,
            &RecursionOptions::default(),
        )
        .unwrap();
        (tree, run, x)
    }

    #[test]
    fn frontier_layout() {
        let (tree, run, _) = setup();
        let csv = frontier_csv(&run, &[tree.root().id]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "node,time,v_index,x0,x1");
        assert!(lines[1].starts_with("0:0,0,0,"));
        let dir = lines.iter().position(|l| *l == "# directions").unwrap();
        assert_eq!(lines[dir + 1], "node,time,d_index,x0,x1");
        assert_eq!(lines.len() - dir - 2, run.root().set.directions().len());
    }

    #[test]
    fn dumps_are_json() {
        let (tree, run, _) = setup();
        let v: serde_json::Value = serde_json::from_str(&run_json("avar", &run)).unwrap();
        assert_eq!(v["nodes"].as_object().unwrap().len(), 6);
        assert!(v["nodes"]["2:1"]["set"]["vertices"].is_array());
        let t: serde_json::Value = serde_json::from_str(&tree_json(&tree)).unwrap();
        assert_eq!(t["nodes"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn trace_rows() {
        let (tree, run, _) = setup();
        let z0 = run.root().set.vertices()[0].clone();
        let trace = forward_pass(&run, &tree, tree.root().id, &[1, 0], &z0, &[1.0, 0.0]).unwrap();
        let csv = trace_csv(&trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time,node,z0,z1,u0,u1,k0,k1,lambda_count,lift");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("2,2:1,"));
    }
}
