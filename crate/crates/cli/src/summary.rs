//! Run summaries.

use serde::{Deserialize, Serialize};

use rhgame::analysis::{cluster_upper_bound, consensus_verdict, VerdictStatus};
use rhgame::game::Player;
use rhgame::rolling::{Trace, TRACE_VERSION};
use rhgame::scenario::Scenario;
use rhgame::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTotals {
    pub spent: f64,
    pub wasted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionUtility {
    pub owner: Player,
    pub decision_index: usize,
    pub time: usize,
    pub utility: f64,
    pub explored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trace_version: u32,
    pub scenario: String,
    pub steps: usize,
    pub settled: bool,
    pub verdict: VerdictStatus,
    pub consensus: bool,
    pub cluster_count: usize,
    pub clusters: Vec<Vec<usize>>,
    /// Edge-steps where a recovery restored a normally jammed edge.
    pub effective_recoveries: usize,
    pub cluster_bound: usize,
    pub within_bound: bool,
    /// Every window of resolved graphs had a connected union.
    pub union_connected: bool,
    pub cross_check_ok: bool,
    pub final_state: Vec<f64>,
    pub attacker: EnergyTotals,
    pub defender: EnergyTotals,
    pub decisions: Vec<DecisionUtility>,
}

impl RunSummary {
    pub fn build(s: &Scenario, trace: &Trace) -> Result<Self> {
        let verdict = consensus_verdict(trace, s.run.cluster_tol, s.union_window())?;
        let bound = cluster_upper_bound(
            &s.graph,
            &s.attacker,
            s.horizons,
            s.periods,
            &s.utility,
            &s.cost_model,
        )?;
        let last = trace.steps.last();
        Ok(RunSummary {
            trace_version: TRACE_VERSION,
            scenario: s.name.clone(),
            steps: trace.steps.len(),
            settled: trace.settled,
            verdict: verdict.status,
            consensus: verdict.consensus(),
            cluster_count: verdict.clusters.len(),
            within_bound: verdict.clusters.len() <= bound,
            clusters: verdict.clusters.groups,
            effective_recoveries: trace
                .steps
                .iter()
                .map(|st| st.effective_recovery.count_ones() as usize)
                .sum(),
            cluster_bound: bound,
            union_connected: verdict.union_connected,
            cross_check_ok: verdict.cross_check_ok,
            final_state: trace.final_state().to_vec(),
            attacker: EnergyTotals {
                spent: last.map_or(0.0, |st| st.attacker.spent),
                wasted: last.map_or(0.0, |st| st.attacker.wasted),
            },
            defender: EnergyTotals {
                spent: last.map_or(0.0, |st| st.defender.spent),
                wasted: last.map_or(0.0, |st| st.defender.wasted),
            },
            decisions: trace
                .decisions
                .iter()
                .map(|d| DecisionUtility {
                    owner: d.owner,
                    decision_index: d.decision_index,
                    time: d.time,
                    utility: d.utility,
                    explored: d.explored,
                })
                .collect(),
        })
    }

    /// Short human-readable report.
    pub fn text(&self) -> String {
        let verdict = match self.verdict {
            VerdictStatus::Consensus => "consensus".to_string(),
            VerdictStatus::Clusters => {
                format!("{} clusters {:?}", self.cluster_count, self.clusters)
            }
            VerdictStatus::Undecided => {
                format!("undecided after {} steps (states still moving)", self.steps)
            }
        };
        let mut out = format!(
            "scenario: {}\nverdict: {verdict}\nsteps: {}\ncluster bound: {} ({})\n",
            self.scenario,
            self.steps,
            self.cluster_bound,
            if self.within_bound {
                "respected"
            } else {
                "exceeded"
            },
        );
        out += &format!(
            "attacker spent: {}\ndefender spent: {} (wasted {})\neffective recoveries: {}\n",
            self.attacker.spent,
            self.defender.spent,
            self.defender.wasted,
            self.effective_recoveries
        );
        if !self.cross_check_ok {
            out +=
                "warning: resolved graphs stay jointly connected but the final states are split\n";
        }
        out
    }
}
