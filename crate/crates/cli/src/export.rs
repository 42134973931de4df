//! CSV files written by `run` and read back for re-checking.
//!
//! Masks are bit strings with one character per edge (or agent for node
//! masks) in canonical order, first member first.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use rhgame::energy::EnergyLedger;
use rhgame::game::{AttackAction, Plan, Player};
use rhgame::network::agent_group_index;
use rhgame::rolling::{DecisionRecord, Trace, TraceStep, TRACE_VERSION};
use rhgame::scenario::Scenario;

pub const TRACE_FILE: &str = "trace.csv";
pub const DECISIONS_FILE: &str = "decisions.csv";
pub const STATES_FILE: &str = "states.csv";
pub const ENERGY_FILE: &str = "energy.csv";

pub fn bit_string(mask: u64, len: usize) -> String {
    (0..len)
        .map(|i| if mask >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_bits(text: &str) -> Result<u64> {
    if text.len() > 64 {
        bail!("bit string longer than 64: {text}");
    }
    text.chars()
        .enumerate()
        .try_fold(0u64, |m, (i, c)| match c {
            '0' => Ok(m),
            '1' => Ok(m | 1 << i),
            _ => Err(anyhow!("bad bit string {text:?}")),
        })
}

fn trace_header(n: usize) -> Vec<String> {
    let mut h = vec!["trace_version".to_string(), "k".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend(
        [
            "strong",
            "normal",
            "strong_nodes",
            "normal_nodes",
            "planned_recovery",
            "effective_recovery",
            "resolved",
            "attacker_cost",
            "defender_cost",
            "defender_waste",
            "attacker_spent",
            "defender_spent",
            "defender_wasted",
            "z",
            "c",
            "payoff",
            "settled",
        ]
        .map(String::from),
    );
    h
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let (n, m) = (trace.graph.n(), trace.graph.edge_count());
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(trace_header(n))?;
    let last = trace.steps.len().saturating_sub(1);
    for (i, st) in trace.steps.iter().enumerate() {
        let mut row = vec![TRACE_VERSION.to_string(), st.k.to_string()];
        row.extend(st.state.iter().map(f64::to_string));
        row.extend([
            bit_string(st.attack.strong, m),
            bit_string(st.attack.normal, m),
            bit_string(st.attack.strong_nodes, n),
            bit_string(st.attack.normal_nodes, n),
            bit_string(st.planned_recovery, m),
            bit_string(st.effective_recovery, m),
            bit_string(st.resolved, m),
        ]);
        row.extend(
            [
                st.attacker_cost,
                st.defender_cost,
                st.defender_waste,
                st.attacker.spent,
                st.defender.spent,
                st.defender.wasted,
                st.state_difference,
            ]
            .map(|v| v.to_string()),
        );
        row.push(st.group_index.to_string());
        row.push(st.payoff.to_string());
        row.push(u8::from(trace.settled && i == last).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_decisions(path: &Path, trace: &Trace) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record([
        "trace_version",
        "owner",
        "decision_index",
        "time",
        "utility",
        "explored",
        "plan",
    ])?;
    for d in &trace.decisions {
        w.write_record([
            TRACE_VERSION.to_string(),
            d.owner.to_string(),
            d.decision_index.to_string(),
            d.time.to_string(),
            d.utility.to_string(),
            d.explored.to_string(),
            serde_json::to_string(&d.plan)?,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// States over time, including the initial state as `k = 0`.
pub fn write_states(path: &Path, trace: &Trace) -> Result<()> {
    let n = trace.graph.n();
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    let rows = std::iter::once(&trace.initial_state).chain(trace.steps.iter().map(|st| &st.state));
    for (k, x) in rows.enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Cumulative spend against the budget lines; row `k` holds totals after
/// step `k`.
pub fn write_energy(path: &Path, trace: &Trace, s: &Scenario) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record([
        "k",
        "attacker_spent",
        "attacker_budget",
        "defender_spent",
        "defender_wasted",
        "defender_budget",
    ])?;
    for st in &trace.steps {
        let mut row = vec![st.k.to_string()];
        row.extend(
            [
                st.attacker.spent,
                s.attacker.budget.at(st.k),
                st.defender.spent,
                st.defender.wasted,
                s.defender.budget.at(st.k),
            ]
            .map(|v| v.to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every run artifact into `dir`.
pub fn write_all(dir: &Path, trace: &Trace, s: &Scenario) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_trace(&dir.join(TRACE_FILE), trace)?;
    write_decisions(&dir.join(DECISIONS_FILE), trace)?;
    write_states(&dir.join(STATES_FILE), trace)?;
    write_energy(&dir.join(ENERGY_FILE), trace, s)?;
    Ok(())
}

fn field<'r>(
    rec: &'r csv::StringRecord,
    headers: &csv::StringRecord,
    name: &str,
) -> Result<&'r str> {
    let i = headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("missing column {name}"))?;
    rec.get(i)
        .ok_or_else(|| anyhow!("short row for column {name}"))
}

fn check_version(text: &str) -> Result<()> {
    let v: u32 = text.parse()?;
    if v != TRACE_VERSION {
        bail!("trace version {v} is not supported (expected {TRACE_VERSION})");
    }
    Ok(())
}

/// Rebuilds a trace from `trace.csv` and `decisions.csv` in `dir`.
pub fn read_trace(dir: &Path, s: &Scenario) -> Result<Trace> {
    let n = s.graph.n();
    let mut r = csv::Reader::from_path(dir.join(TRACE_FILE))?;
    let headers = r.headers()?.clone();
    let mut steps = Vec::new();
    let mut settled = false;
    for rec in r.records() {
        let rec = rec?;
        let get = |name: &str| field(&rec, &headers, name);
        let num = |name: &str| -> Result<f64> { Ok(get(name)?.parse()?) };
        let bits = |name: &str| parse_bits(get(name)?);
        check_version(get("trace_version")?)?;
        let state = (1..=n)
            .map(|i| num(&format!("x_{i}")))
            .collect::<Result<Vec<_>>>()?;
        settled = get("settled")? == "1";
        let resolved = bits("resolved")?;
        let group_index: i64 = get("c")?.parse()?;
        if group_index != agent_group_index(&s.graph.restrict(resolved)) {
            bail!(
                "row k={}: group index does not match the resolved edges",
                get("k")?
            );
        }
        steps.push(TraceStep {
            k: get("k")?.parse()?,
            attack: AttackAction {
                strong: bits("strong")?,
                normal: bits("normal")?,
                strong_nodes: bits("strong_nodes")?,
                normal_nodes: bits("normal_nodes")?,
            },
            planned_recovery: bits("planned_recovery")?,
            effective_recovery: bits("effective_recovery")?,
            resolved,
            state,
            attacker_cost: num("attacker_cost")?,
            defender_cost: num("defender_cost")?,
            defender_waste: num("defender_waste")?,
            attacker: EnergyLedger {
                spent: num("attacker_spent")?,
                wasted: 0.0,
            },
            defender: EnergyLedger {
                spent: num("defender_spent")?,
                wasted: num("defender_wasted")?,
            },
            state_difference: num("z")?,
            group_index,
            payoff: num("payoff")?,
        });
    }

    let mut r = csv::Reader::from_path(dir.join(DECISIONS_FILE))?;
    let headers = r.headers()?.clone();
    let mut decisions = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |name: &str| field(&rec, &headers, name);
        check_version(get("trace_version")?)?;
        let owner = match get("owner")? {
            "attacker" => Player::Attacker,
            "defender" => Player::Defender,
            other => bail!("unknown owner {other}"),
        };
        let plan: Plan = serde_json::from_str(get("plan")?)?;
        decisions.push(DecisionRecord {
            owner,
            decision_index: get("decision_index")?.parse()?,
            time: get("time")?.parse()?,
            plan,
            utility: get("utility")?.parse()?,
            explored: get("explored")?.parse()?,
        });
    }
    Ok(Trace {
        graph: s.graph.clone(),
        initial_state: s.initial_state.clone(),
        steps,
        decisions,
        settled,
    })
}
