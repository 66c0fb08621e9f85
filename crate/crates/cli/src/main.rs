//! Runs the risk computations listed in a JSON configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use log::info;

use setrisk::config::{execute, RunConfig};
use setrisk::recursion::{RecursionOptions, RiskRun};
use setrisk::report::{frontier_csv, run_json, trace_csv, tree_json};
use setrisk::strategy::{forward_pass, sample_path, verify_trace};
use setrisk::tree::{build_tree, Compounding, NodeId, Tree};
use setrisk::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BondCompounding {
    Continuous,
    Simple,
}

#[derive(Parser, Debug)]
#[command(name = "setrisk", version, about = "Set-valued dynamic risk measures on event trees")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Write the frontier at time T, or at node T:INDEX; repeatable.
    #[arg(long = "emit-frontier", value_name = "T[:node]")]
    emit_frontier: Vec<String>,
    /// Write every node's set and solution points to FILE.
    #[arg(long = "dump-all", value_name = "FILE")]
    dump_all: Option<PathBuf>,
    /// Branch choices of the realized path, one per step.
    #[arg(long, value_delimiter = ',', conflicts_with = "sample_path")]
    path: Option<Vec<usize>>,
    /// Sample the realized path with this seed.
    #[arg(long = "sample-path", value_name = "SEED")]
    sample_path: Option<u64>,
    /// Cost vector of the forward pass (default: cash only).
    #[arg(long, value_delimiter = ',')]
    cost: Option<Vec<f64>>,
    /// Initial holdings of the forward pass (default: the cheapest vertex).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    z0: Option<Vec<f64>>,
    /// Worker threads per time slice; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Tolerance of convex runs, overriding the configuration.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Write the tree to tree.json in the output directory.
    #[arg(long = "dump-tree")]
    dump_tree: bool,
    #[arg(long = "bond-compounding", value_enum)]
    bond_compounding: Option<BondCompounding>,
    /// Only compute the named runs.
    #[arg(long, value_delimiter = ',')]
    run: Option<Vec<String>>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SolverAbort { .. }
        | Error::Infeasible(_)
        | Error::Unbounded(_)
        | Error::NoInteriorPoint(_)
        | Error::NumericFailure(_)
        | Error::MalformedUpperSet(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn parse_frontier(spec: &str, tree: &Tree) -> Result<Vec<NodeId>, Error> {
    let bad = || Error::InvalidParameters(format!("bad frontier request `{spec}`"));
    let (t, node) = match spec.split_once(':') {
        Some((t, n)) => (t, Some(n)),
        None => (spec, None),
    };
    let t: usize = t.parse().map_err(|_| bad())?;
    if t > tree.steps() {
        return Err(bad());
    }
    match node {
        None => Ok(tree.layer(t).iter().map(|n| n.id).collect()),
        Some(n) => {
            let index: usize = n.parse().map_err(|_| bad())?;
            if index >= tree.layer(t).len() {
                return Err(bad());
            }
            Ok(vec![NodeId { time: t, index }])
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    println!("  wrote {}", path.display());
    Ok(())
}

fn forward(cli: &Cli, name: &str, run: &RiskRun, tree: &Tree, x: &[Vec<f64>]) -> Result<(), Error> {
    let (branches, seed) = match (&cli.path, cli.sample_path) {
        (Some(p), _) => (p.clone(), None),
        (None, Some(s)) => (sample_path(tree, 0, s), Some(s)),
        (None, None) => return Ok(()),
    };
    let d = tree.params.d;
    let cost = cli.cost.clone().unwrap_or_else(|| {
        let mut c = vec![0.0; d];
        c[0] = 1.0;
        c
    });
    if cost.len() != d {
        return Err(Error::DimensionMismatch(format!("--cost needs {d} entries")));
    }
    let z0 = match &cli.z0 {
        Some(z) => z.clone(),
        None => {
            let basis = run.space.basis();
            let price = |v: &Vec<f64>| -> f64 {
                v.iter().zip(basis).map(|(c, b)| c * b.iter().zip(&cost).map(|(p, q)| p * q).sum::<f64>()).sum()
            };
            run.root()
                .set
                .vertices()
                .iter()
                .min_by(|a, b| price(a).total_cmp(&price(b)))
                .cloned()
                .ok_or_else(|| Error::Infeasible("root set has no vertex".into()))?
        }
    };
    let mut trace = forward_pass(run, tree, tree.root().id, &branches, &z0, &cost)?;
    trace.seed = seed;
    let report = verify_trace(&trace, run, tree, x, true, 1e-7);
    println!(
        "  trace: {} checks, {} violations",
        report.checks,
        report.violations.len()
    );
    for v in &report.violations {
        println!("    violation: {v}");
    }
    write(&cli.out.join(format!("{name}_trace.csv")), &trace_csv(&trace))
}

fn main_inner(cli: &Cli) -> Result<(), Error> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Error::Io(format!("{}: {e}", cli.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(eps) = cli.epsilon {
        cfg.set_epsilon(eps);
    }
    if let Some(c) = cli.bond_compounding {
        cfg.tree.compounding = match c {
            BondCompounding::Continuous => Compounding::Continuous,
            BondCompounding::Simple => Compounding::Simple,
        };
    }
    cfg.validate()?;
    if let Some(names) = &cli.run {
        if let Some(n) = names.iter().find(|n| cfg.run(n).is_none()) {
            return Err(Error::InvalidParameters(format!("no run named `{n}`")));
        }
        cfg.runs.retain(|r| names.contains(&r.name));
    }
    fs::create_dir_all(&cli.out).map_err(|e| Error::Io(format!("{}: {e}", cli.out.display())))?;
    let tree = build_tree(&cfg.tree)?;
    info!(
        "tree: {} steps, {} scenarios per node",
        tree.steps(),
        tree.num_scenarios()
    );
    if cli.dump_tree {
        write(&cli.out.join("tree.json"), &tree_json(&tree))?;
    }
    let x = cfg.payoff.evaluate(&tree)?;
    let mut frontiers = Vec::new();
    let requests = if cli.emit_frontier.is_empty() {
        vec!["0".to_string()]
    } else {
        cli.emit_frontier.clone()
    };
    for r in &requests {
        frontiers.push((r.replace(':', "_"), parse_frontier(r, &tree)?));
    }
    let base = RecursionOptions {
        jobs: cli.jobs,
        ..Default::default()
    };
    let mut dumps = Vec::new();
    for spec in &cfg.runs {
        let start = Instant::now();
        let run = execute(&cfg, spec, &tree, &x, &base)?;
        let root = run.root();
        println!(
            "run {}: {} vertices at t=0, epsilon_total {:.6e}, {:.2} s",
            spec.name,
            root.set.vertices().len(),
            root.epsilon_total,
            start.elapsed().as_secs_f64()
        );
        for (tag, nodes) in &frontiers {
            let path = cli.out.join(format!("{}_frontier_t{tag}.csv", spec.name));
            write(&path, &frontier_csv(&run, nodes))?;
        }
        forward(cli, &spec.name, &run, &tree, &x)?;
        if cli.dump_all.is_some() {
            dumps.push(run_json(&spec.name, &run));
        }
    }
    if let Some(path) = &cli.dump_all {
        let body: Vec<&str> = dumps.iter().map(|s| s.trim_end()).collect();
        write(path, &format!("{{\"runs\":[{}]}}\n", body.join(",")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SETRISK_LOG", "warn")).init();
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
