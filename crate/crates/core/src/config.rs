//! Run configuration: tree, payoff, market and a list of risk measures.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::recursion::{backward_induct, backward_induct_market, RecursionOptions, RiskRun, RunMode};
use crate::riskmeasures::RiskMeasureSpec;
use crate::tree::{Tree, TreeNode, TreeParams};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Settlement {
    #[default]
    Mid,
    Bid,
    Ask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    #[default]
    Long,
    Short,
}

/// Terminal payoff. Cash amounts are converted to bond units at maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    /// `((K - S_T)^+, 0)` on the single risky asset.
    Put {
        strike: f64,
        #[serde(default)]
        settlement: Settlement,
        #[serde(default)]
        position: Position,
    },
    /// `payout` in cash when the ask price of the single risky asset is at
    /// least `strike`.
    Binary {
        strike: f64,
        payout: f64,
        #[serde(default)]
        position: Position,
    },
    /// Pay `strike` in cash for one unit of the best risky asset when its
    /// ask price is at least `strike`.
    Outperformance {
        strike: f64,
        #[serde(default)]
        position: Position,
    },
    /// One vector per terminal node, in physical units.
    Custom { values: Vec<Vec<f64>> },
}

impl PayoffSpec {
    /// Payoff vector at every terminal node of `tree`.
    pub fn evaluate(&self, tree: &Tree) -> Result<Vec<Vec<f64>>> {
        let d = tree.params.d;
        let leaves = tree.layer(tree.steps());
        let single = |name: &str| {
            if d != 2 {
                Err(Error::InvalidParameters(format!("{name} payoff needs one risky asset")))
            } else {
                Ok(())
            }
        };
        let sign = |p: &Position| if *p == Position::Long { 1.0 } else { -1.0 };
        let map = |f: &dyn Fn(&TreeNode) -> Vec<f64>, s: f64| -> Vec<Vec<f64>> {
            leaves
                .iter()
                .map(|n| f(n).into_iter().map(|v| s * v).collect())
                .collect()
        };
        match self {
            PayoffSpec::Put {
                strike,
                settlement,
                position,
            } => {
                single("put")?;
                let f = |n: &TreeNode| {
                    let s = match settlement {
                        Settlement::Mid => n.mid[0],
                        Settlement::Bid => n.bid[0],
                        Settlement::Ask => n.ask[0],
                    };
                    vec![(strike - s).max(0.0) / n.bond, 0.0]
                };
                Ok(map(&f, sign(position)))
            }
            PayoffSpec::Binary {
                strike,
                payout,
                position,
            } => {
                single("binary")?;
                let f = |n: &TreeNode| {
                    let hit = if n.ask[0] >= *strike { *payout } else { 0.0 };
                    vec![hit / n.bond, 0.0]
                };
                Ok(map(&f, sign(position)))
            }
            PayoffSpec::Outperformance { strike, position } => {
                if d < 3 {
                    return Err(Error::InvalidParameters(
                        "outperformance payoff needs two risky assets".into(),
                    ));
                }
                let f = |n: &TreeNode| {
                    let best = n.ask.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut x = vec![0.0; d];
                    if best >= *strike {
                        x[0] = -strike / n.bond;
                        for (i, a) in n.ask.iter().enumerate() {
                            if *a >= best {
                                x[i + 1] = 1.0;
                            }
                        }
                    }
                    x
                };
                Ok(map(&f, sign(position)))
            }
            PayoffSpec::Custom { values } => {
                if values.len() != leaves.len() || values.iter().any(|v| v.len() != d) {
                    return Err(Error::DimensionMismatch(format!(
                        "custom payoff needs {} rows of {d} entries",
                        leaves.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

/// One risk measure to compute on the shared tree and payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub risk: RiskMeasureSpec,
    #[serde(default)]
    pub mode: RunMode,
    /// Overrides the configuration's market model.
    #[serde(default)]
    pub market: Option<MarketModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub tree: TreeParams,
    pub payoff: PayoffSpec,
    #[serde(default)]
    pub market: MarketModel,
    pub runs: Vec<RunSpec>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidParameters(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.tree.validate()?;
        if self.runs.is_empty() {
            return Err(Error::InvalidParameters("config lists no runs".into()));
        }
        let mut names = HashSet::new();
        for r in &self.runs {
            if !names.insert(r.name.as_str()) {
                return Err(Error::InvalidParameters(format!("duplicate run name `{}`", r.name)));
            }
            r.risk.validate(self.tree.d)?;
            let convex = r.risk.is_convex() || self.market_of(r).is_convex();
            match r.mode {
                RunMode::Linear if convex => {
                    return Err(Error::InvalidParameters(format!(
                        "run `{}` needs convex mode",
                        r.name
                    )))
                }
                RunMode::Convex { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                    return Err(Error::InvalidParameters(format!(
                        "run `{}`: convex mode needs epsilon > 0",
                        r.name
                    )))
                }
                _ => {}
            }
        }
        if let PayoffSpec::Custom { values } = &self.payoff {
            if values.iter().any(|v| v.len() != self.tree.d) {
                return Err(Error::DimensionMismatch("custom payoff rows must have d entries".into()));
            }
        }
        Ok(())
    }

    pub fn market_of<'a>(&'a self, run: &'a RunSpec) -> &'a MarketModel {
        run.market.as_ref().unwrap_or(&self.market)
    }

    pub fn run(&self, name: &str) -> Option<&RunSpec> {
        self.runs.iter().find(|r| r.name == name)
    }

    /// Overrides the tolerance of every convex run.
    pub fn set_epsilon(&mut self, eps: f64) {
        for r in &mut self.runs {
            if let RunMode::Convex { epsilon } = &mut r.mode {
                *epsilon = eps;
            }
        }
    }
}

/// Computes one configured run on `tree` with payoff `x`.
pub fn execute(
    cfg: &RunConfig,
    run: &RunSpec,
    tree: &Tree,
    x: &[Vec<f64>],
    base: &RecursionOptions,
) -> Result<RiskRun> {
    let opts = RecursionOptions {
        mode: run.mode,
        ..base.clone()
    };
    let model = cfg.market_of(run);
    if model.is_none() {
        backward_induct(tree, &run.risk, x, &opts)
    } else {
        backward_induct_market(tree, &run.risk, x, model, &opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::build_tree;

    const CFG: &str = r#"{
        "version": 1,
        "tree": {"d": 2, "steps": 2, "branches": 2, "nu": 1.0, "mu": [0.125],
                 "sigma": [0.5], "s0": [1.0], "rate": 0.0, "gamma": [0.05]},
        "payoff": {"type": "binary", "strike": 1.2, "payout": 10.0},
        "market": {"type": "cone"},
        "runs": [
            {"name": "shp", "risk": {"kind": "worst_case"}},
            {"name": "avar", "risk": {"kind": "avar", "lambda": [0.3, 0.3]}}
        ]
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(CFG).unwrap();
        assert_eq!(cfg.runs.len(), 2);
        assert_eq!(cfg.runs[0].mode, RunMode::Linear);
        let again = RunConfig::parse(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_version = CFG.replace("\"version\": 1", "\"version\": 7");
        assert!(RunConfig::parse(&bad_version).is_err());
        let dup = CFG.replace("\"avar\", \"risk\"", "\"shp\", \"risk\"");
        assert!(RunConfig::parse(&dup).is_err());
        let unknown = CFG.replace("\"payout\": 10.0", "\"payout\": 10.0, \"extra\": 1");
        assert!(RunConfig::parse(&unknown).is_err());
        let entropic = CFG.replace(
            "{\"kind\": \"worst_case\"}",
            "{\"kind\": \"entropic\", \"lambda\": [0.1, 0.1], \"C_dual\": [[1, 0], [0, 1]]}",
        );
        assert!(RunConfig::parse(&entropic).is_err());
    }

    #[test]
    fn binary_triggers_on_ask() {
        let cfg = RunConfig::parse(CFG).unwrap();
        let tree = build_tree(&cfg.tree).unwrap();
        let x = cfg.payoff.evaluate(&tree).unwrap();
        for (n, v) in tree.layer(2).iter().zip(&x) {
            let hit = n.ask[0] >= 1.2;
            assert_eq!(v[0], if hit { 10.0 } else { 0.0 });
            assert_eq!(v[1], 0.0);
        }
        // Up-up ask is about 1.71, the middle node's ask 1.05.
        assert_eq!(x.iter().filter(|v| v[0] > 0.0).count(), 1);
    }

    #[test]
    fn put_in_bond_units() {
        let mut cfg = RunConfig::parse(CFG).unwrap();
        cfg.tree.rate = 0.1;
        cfg.payoff = PayoffSpec::Put {
            strike: 1.0,
            settlement: Settlement::Mid,
            position: Position::Short,
        };
        let tree = build_tree(&cfg.tree).unwrap();
        let x = cfg.payoff.evaluate(&tree).unwrap();
        let low = &tree.layer(2)[0];
        assert!((x[0][0] + (1.0 - low.mid[0]) / 0.1f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn outperformance_pays_best_asset() {
        let params = TreeParams {
            d: 3,
            steps: 1,
            horizon: 1.0,
            branches: 2,
            nu: 1.0,
            mu: vec![0.15, 0.3],
            sigma: vec![0.5, 1.0],
            rho: Some(vec![vec![1.0, 0.5], vec![0.5, 1.0]]),
            s0: vec![1.0, 1.0],
            rate: 0.0,
            gamma: vec![0.05, 0.05],
            compounding: Default::default(),
        };
        let tree = build_tree(&params).unwrap();
        let x = PayoffSpec::Outperformance {
            strike: 1.1,
            position: Position::Long,
        }
        .evaluate(&tree)
        .unwrap();
        for (n, v) in tree.layer(1).iter().zip(&x) {
            let best = n.ask[0].max(n.ask[1]);
            if best >= 1.1 {
                assert_eq!(v[0], -1.1);
                assert!(v[1] + v[2] >= 1.0);
                assert_eq!(v[1] == 1.0, n.ask[0] >= n.ask[1]);
            } else {
                assert_eq!(v, &vec![0.0; 3]);
            }
        }
    }
}
