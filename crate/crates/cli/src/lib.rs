//! Commands behind the `rhgame` binary.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 invalid scenario or
//! arguments, 3 work bound exceeded.

pub mod export;
pub mod summary;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use rhgame::analysis::{
    check_conditions, cluster_bounds, cluster_upper_bound, theta_vector, ClusterBounds,
    ConditionReport,
};
use rhgame::energy::AttackTarget;
use rhgame::scenario::Scenario;
use rhgame::GameError;

use crate::summary::RunSummary;
use crate::sweep::{grid_points, Axis};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_WORK_BOUND: u8 = 3;

/// Options shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Flags {
    pub output: PathBuf,
    pub json: bool,
    pub work_bound: Option<usize>,
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<GameError>()) {
        Some(GameError::InvalidInput(_) | GameError::InvalidAction(_)) => EXIT_INVALID,
        Some(GameError::WorkBound(_)) => EXIT_WORK_BOUND,
        _ => EXIT_FAILURE,
    }
}

/// Reads and validates a scenario, applying the work-bound override.
pub fn load_scenario(path: &Path, flags: &Flags) -> Result<Scenario> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut s = Scenario::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(bound) = flags.work_bound {
        s.limits.work_bound = bound;
        s.validate()?;
    }
    Ok(s)
}

fn write_summary(dir: &Path, summary: &RunSummary, json: bool) -> Result<PathBuf> {
    let (name, text) = if json {
        ("summary.json", serde_json::to_string_pretty(summary)?)
    } else {
        ("summary.toml", toml::to_string(summary)?)
    };
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Simulates a loaded scenario and writes every artifact into `dir`.
pub fn run_scenario(s: &Scenario, dir: &Path, json: bool) -> Result<RunSummary> {
    let trace = s.simulate()?;
    let summary = RunSummary::build(s, &trace)?;
    export::write_all(dir, &trace, s)?;
    write_summary(dir, &summary, json)?;
    Ok(summary)
}

pub fn cmd_run(path: &Path, flags: &Flags) -> Result<RunSummary> {
    let s = load_scenario(path, flags)?;
    run_scenario(&s, &flags.output, flags.json)
}

/// Recomputes the summary of a finished run from its CSV files.
pub fn summary_from_csv(s: &Scenario, dir: &Path) -> Result<RunSummary> {
    let trace = export::read_trace(dir, s)?;
    Ok(RunSummary::build(s, &trace)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub scenario: String,
    pub conditions: ConditionReport,
    pub theta: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_nodes: Option<Vec<usize>>,
    pub bounds: ClusterBounds,
    /// The bound for this scenario's horizons, periods and utility.
    pub bound: usize,
}

impl AnalyzeReport {
    pub fn text(&self) -> String {
        let c = &self.conditions;
        let mut out = format!(
            "scenario: {}\nlambda: {}\nedges: {}\nrho/beta: {}\nrho/beta_strong: {}\n",
            self.scenario, c.lambda, c.edge_count, c.rho_over_beta, c.rho_over_beta_strong
        );
        out += &format!(
            "rho/beta >= lambda: {}\nrho/beta_strong >= lambda: {}\ncase (a): {}\ncase (b): {}\n",
            c.necessary_normal, c.necessary_strong, c.case_a, c.case_b
        );
        out += &format!(
            "tighter condition applies: {}\nnecessary condition holds: {}\nfull split sustainable: {}\n",
            c.tighter_applicable, c.necessary_applicable, c.sufficient_full_split
        );
        if let Some(node) = &c.node {
            out += &format!(
                "node rho/beta: {}\nnode rho/beta_strong: {}\nnode rho/beta >= 1: {}\nnode rho/beta_strong >= 1: {}\n",
                node.rho_over_beta, node.rho_over_beta_strong, node.necessary_normal, node.necessary_strong
            );
        }
        out += &format!("theta: {:?}\n", self.theta);
        if let Some(tv) = &self.theta_nodes {
            out += &format!("theta_nodes: {tv:?}\n");
        }
        out += &format!(
            "cluster bound with case (a)/(b): {}\ncluster bound otherwise: {}\ncluster bound for this scenario: {}\n",
            self.bounds.tighter, self.bounds.loose, self.bound
        );
        out
    }
}

pub fn analyze_scenario(s: &Scenario) -> Result<AnalyzeReport> {
    let conditions = check_conditions(
        &s.graph,
        &s.attacker,
        &s.defender,
        s.horizons,
        s.periods,
        &s.utility,
        &s.cost_model,
    )?;
    let theta = theta_vector(&s.graph, AttackTarget::Edge, s.limits.theta_work_bound)?.values;
    let theta_nodes = match s.cost_model.target {
        AttackTarget::Edge => None,
        AttackTarget::Node => {
            Some(theta_vector(&s.graph, AttackTarget::Node, s.limits.theta_work_bound)?.values)
        }
    };
    Ok(AnalyzeReport {
        scenario: s.name.clone(),
        conditions,
        theta,
        theta_nodes,
        bounds: cluster_bounds(&s.graph, &s.attacker, s.cost_model.target)?,
        bound: cluster_upper_bound(
            &s.graph,
            &s.attacker,
            s.horizons,
            s.periods,
            &s.utility,
            &s.cost_model,
        )?,
    })
}

pub fn cmd_analyze(path: &Path, flags: &Flags) -> Result<AnalyzeReport> {
    analyze_scenario(&load_scenario(path, flags)?)
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub point: Vec<(String, f64)>,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
}

/// Runs every grid point; failures are recorded per point and do not stop
/// the sweep. Point `i` writes its run files under `<output>/point-<i>`.
pub fn cmd_sweep(path: &Path, axes: &[Axis], flags: &Flags) -> Result<Vec<SweepRecord>> {
    let base = load_scenario(path, flags)?;
    fs::create_dir_all(&flags.output)
        .with_context(|| format!("cannot create {}", flags.output.display()))?;
    let mut records = Vec::new();
    for (i, point) in grid_points(axes).into_iter().enumerate() {
        let outcome = (|| {
            let mut s = base.clone();
            for &(key, value) in &point {
                key.apply(&mut s, value)
                    .map_err(|e| GameError::InvalidInput(e.to_string()))?;
            }
            s.validate()?;
            run_scenario(&s, &flags.output.join(format!("point-{i}")), flags.json)
        })();
        let point = point
            .iter()
            .map(|&(k, v)| (k.name().to_string(), v))
            .collect();
        records.push(match outcome {
            Ok(summary) => SweepRecord {
                point,
                exit_code: EXIT_OK,
                error: None,
                summary: Some(summary),
            },
            Err(e) => SweepRecord {
                point,
                exit_code: exit_code(&e),
                error: Some(format!("{e:#}")),
                summary: None,
            },
        });
    }
    write_sweep_table(&flags.output.join("sweep.csv"), axes, &records)?;
    let json = flags.output.join("sweep.json");
    fs::write(&json, serde_json::to_string_pretty(&records)?)
        .with_context(|| format!("cannot write {}", json.display()))?;
    Ok(records)
}

fn write_sweep_table(path: &Path, axes: &[Axis], records: &[SweepRecord]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header: Vec<String> = axes.iter().map(|a| a.key.name().to_string()).collect();
    header.extend(
        [
            "exit_code",
            "verdict",
            "cluster_count",
            "cluster_bound",
            "steps",
            "attacker_spent",
            "defender_spent",
            "defender_wasted",
            "effective_recoveries",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = r.point.iter().map(|(_, v)| v.to_string()).collect();
        row.push(r.exit_code.to_string());
        match &r.summary {
            Some(s) => row.extend([
                serde_json::to_value(s.verdict)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                s.cluster_count.to_string(),
                s.cluster_bound.to_string(),
                s.steps.to_string(),
                s.attacker.spent.to_string(),
                s.defender.spent.to_string(),
                s.defender.wasted.to_string(),
                s.effective_recoveries.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 8)),
        }
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_validate(path: &Path, flags: &Flags) -> Result<Scenario> {
    load_scenario(path, flags)
}
