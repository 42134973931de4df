//! Versioned scenario files.
//!
//! Scenarios are TOML. Every optional setting is filled in on load, so a
//! loaded-then-saved scenario lists all values the run depends on.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::THETA_WORK_BOUND;
use crate::dynamics::WeightMatrix;
use crate::energy::{AttackerEnergy, CostModel, DefenderEnergy};
use crate::error::{GameError, Result};
use crate::game::{ByPlayer, UtilityWeights, DEFAULT_WORK_BOUND};
use crate::network::{is_connected, Graph, MAX_MASK_EDGES};
use crate::rolling::{run, GameConfig, RunOptions, Schedule, Trace};

pub const SCENARIO_VERSION: u32 = 1;

/// Consensus weights: one value on every edge, or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum WeightsSpec {
    Uniform { uniform: f64 },
    Matrix { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub steps: usize,
    pub settle_tol: f64,
    pub settle_steps: usize,
    /// States closer than this belong to one cluster.
    pub cluster_tol: f64,
    /// Window for the union-graph cross-check; 4·lcm(T^A, T^D) when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub union_window: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        let opts = RunOptions::default();
        RunSection {
            steps: opts.steps,
            settle_tol: opts.settle_tol,
            settle_steps: opts.settle_steps,
            cluster_tol: 1e-6,
            union_window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    /// Distinct subgames per decision.
    pub work_bound: usize,
    /// Attack sets enumerated for the cluster bound.
    pub theta_work_bound: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            work_bound: DEFAULT_WORK_BOUND,
            theta_work_bound: THETA_WORK_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub initial_state: Vec<f64>,
    pub graph: Graph,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsSpec>,
    pub attacker: AttackerEnergy,
    pub defender: DefenderEnergy,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default)]
    pub utility: UtilityWeights,
    pub horizons: ByPlayer<usize>,
    pub periods: ByPlayer<usize>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub limits: Limits,
}

fn field_err(field: &str, e: GameError) -> GameError {
    match e {
        GameError::InvalidInput(m) => GameError::InvalidInput(format!("{field}: {m}")),
        other => other,
    }
}

fn invalid(field: &str, msg: impl Into<String>) -> GameError {
    GameError::InvalidInput(format!("{field}: {}", msg.into()))
}

impl Scenario {
    /// Parses, fills in defaults and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut s: Scenario =
            toml::from_str(text).map_err(|e| GameError::InvalidInput(e.to_string()))?;
        s.materialize()?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| GameError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GameError::Internal(e.to_string()))
    }

    fn materialize(&mut self) -> Result<()> {
        if self.weights.is_none() && self.graph.n() > 0 {
            self.weights = Some(WeightsSpec::Uniform {
                uniform: 1.0 / self.graph.n() as f64,
            });
        }
        if self.run.union_window.is_none() {
            let sched =
                Schedule::from_periods(self.periods).map_err(|e| field_err("periods", e))?;
            self.run.union_window = Some(4 * sched.lcm_period);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(invalid(
                "version",
                format!(
                    "unsupported version {} (expected {SCENARIO_VERSION})",
                    self.version
                ),
            ));
        }
        let g = &self.graph;
        if g.n() < 2 {
            return Err(invalid("graph.n", "need at least 2 agents"));
        }
        if g.edge_count() > MAX_MASK_EDGES {
            return Err(invalid(
                "graph.edges",
                format!("at most {MAX_MASK_EDGES} edges are supported"),
            ));
        }
        if !is_connected(g) {
            return Err(invalid("graph", "the base graph must be connected"));
        }
        if self.initial_state.len() != g.n() {
            return Err(invalid(
                "initial_state",
                format!("{} values for {} agents", self.initial_state.len(), g.n()),
            ));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial_state", "values must be finite"));
        }
        self.weight_matrix()?;
        self.attacker
            .validate(self.cost_model.target)
            .map_err(|e| field_err("attacker", e))?;
        self.defender
            .validate()
            .map_err(|e| field_err("defender", e))?;
        self.utility
            .validate()
            .map_err(|e| field_err("utility", e))?;
        for (name, h, t) in [
            ("attacker", self.horizons.attacker, self.periods.attacker),
            ("defender", self.horizons.defender, self.periods.defender),
        ] {
            if h == 0 {
                return Err(invalid(&format!("horizons.{name}"), "must be at least 1"));
            }
            if t == 0 || t > h {
                return Err(invalid(
                    &format!("periods.{name}"),
                    format!("must satisfy 1 <= period <= horizon ({t} vs horizon {h})"),
                ));
            }
        }
        if self.run.steps == 0 {
            return Err(invalid("run.steps", "must be at least 1"));
        }
        if self.run.settle_tol.is_nan() || self.run.settle_tol < 0.0 {
            return Err(invalid("run.settle_tol", "must be nonnegative"));
        }
        if self.run.cluster_tol.is_nan() || self.run.cluster_tol < 0.0 {
            return Err(invalid("run.cluster_tol", "must be nonnegative"));
        }
        if self.run.union_window == Some(0) {
            return Err(invalid("run.union_window", "must be at least 1"));
        }
        if self.limits.work_bound == 0 {
            return Err(invalid("limits.work_bound", "must be at least 1"));
        }
        Ok(())
    }

    pub fn weight_matrix(&self) -> Result<WeightMatrix> {
        match &self.weights {
            None => Ok(WeightMatrix::default_for(&self.graph)),
            Some(WeightsSpec::Uniform { uniform }) => WeightMatrix::uniform(&self.graph, *uniform)
                .map_err(|e| field_err("weights.uniform", e)),
            Some(WeightsSpec::Matrix { matrix }) => WeightMatrix::from_rows(&self.graph, matrix)
                .map_err(|e| field_err("weights.matrix", e)),
        }
    }

    pub fn game_config(&self) -> Result<GameConfig> {
        Ok(GameConfig {
            graph: self.graph.clone(),
            weights: self.weight_matrix()?,
            initial_state: self.initial_state.clone(),
            attacker: self.attacker,
            defender: self.defender,
            cost_model: self.cost_model,
            utility: self.utility,
            horizons: self.horizons,
            periods: self.periods,
        })
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            steps: self.run.steps,
            settle_tol: self.run.settle_tol,
            settle_steps: self.run.settle_steps,
            work_bound: self.limits.work_bound,
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::from_periods(self.periods)
    }

    pub fn union_window(&self) -> usize {
        self.run
            .union_window
            .unwrap_or_else(|| 4 * self.schedule().map_or(1, |s| s.lcm_period))
    }

    /// Validates and runs the rolling-horizon game.
    pub fn simulate(&self) -> Result<Trace> {
        self.validate()?;
        run(&self.game_config()?, &self.run_options())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
initial_state = [1.0, 2.0, 3.0]
graph = { n = 3, edges = [[2, 1], [2, 3]] }
attacker = { kappa = 1.5, rho = 1.5, beta_normal = 1.0, beta_strong = 2.0 }
defender = { kappa = 0.5, rho = 0.5, beta_recover = 1.0 }
horizons = { attacker = 3, defender = 2 }
periods = { attacker = 1, defender = 2 }
"#;

    #[test]
    fn defaults_are_materialized() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.weights, Some(WeightsSpec::Uniform { uniform: 1.0 / 3.0 }));
        assert_eq!(s.utility, UtilityWeights { a: 1.0, b: 0.0 });
        assert_eq!(s.run.union_window, Some(8));
        assert_eq!(s.graph.edges(), &[(1, 2), (2, 3)]);
        let text = s.to_toml_string().unwrap();
        assert!(text.contains("uniform"));
        assert!(text.contains("cluster_tol"));
    }

    #[test]
    fn round_trip() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn rejects_period_longer_than_horizon() {
        let text = MINIMAL.replace("periods = { attacker = 1", "periods = { attacker = 4");
        let err = Scenario::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("periods.attacker"), "{err}");
    }

    #[test]
    fn rejects_duplicate_edges_and_disconnected_graphs() {
        let dup = MINIMAL.replace("[[2, 1], [2, 3]]", "[[2, 1], [1, 2]]");
        assert!(Scenario::from_toml_str(&dup)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let cut = MINIMAL.replace("[[2, 1], [2, 3]]", "[[2, 1]]");
        assert!(Scenario::from_toml_str(&cut)
            .unwrap_err()
            .to_string()
            .contains("connected"));
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(Scenario::from_toml_str(&format!("{MINIMAL}\nbogus = 1\n")).is_err());
        for (from, to) in [
            (
                "beta_recover = 1.0",
                "beta_recover = 1.0, beta_strong = 2.0",
            ),
            ("rho = 1.5,", "rho = 1.5, rate = 1.5,"),
            (
                "defender = 2 }\nperiods",
                "defender = 2, both = 1 }\nperiods",
            ),
            ("n = 3,", "n = 3, m = 2,"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert_ne!(text, MINIMAL);
            assert!(Scenario::from_toml_str(&text).is_err(), "{to}");
        }
        for table in ["run", "limits", "utility", "cost_model", "weights"] {
            let text = format!("{MINIMAL}\n[{table}]\nbogus = 1\n");
            assert!(Scenario::from_toml_str(&text).is_err(), "{table}");
        }
        let v2 = MINIMAL.replace("version = 1", "version = 2");
        assert!(Scenario::from_toml_str(&v2)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    #[test]
    fn explicit_matrix_weights() {
        let text = format!(
            "{MINIMAL}\n[weights]\nmatrix = [[0.0, 0.2, 0.0], [0.2, 0.0, 0.3], [0.0, 0.3, 0.0]]\n"
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(s.weight_matrix().unwrap().get(2, 3), 0.3);
    }
}
