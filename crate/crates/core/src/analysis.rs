//! Condition checks, cluster bounds, consensus verdicts and an exhaustive
//! equilibrium oracle.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{consensus_step, detect_clusters, StateVector};
use crate::energy::{
    attack_cost, AttackTarget, AttackerEnergy, Budget, CostModel, DefenderEnergy, WasteMode,
    BUDGET_EPS,
};
use crate::error::{GameError, Result};
use crate::game::{
    step_payoff, tie_break, utilities_tie, AttackAction, ByPlayer, DefenseAction, Plan, PlanSteps,
    Player, SolveContext, UtilityWeights,
};
use crate::network::{
    agent_group_index, apply_actions, edge_connectivity, union_graph, Graph, Partition,
};
use crate::rolling::Trace;

/// Threshold checks on the attacker's sustainable jamming rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Edge connectivity of the base graph.
    pub lambda: usize,
    pub edge_count: usize,
    pub rho_over_beta: f64,
    pub rho_over_beta_strong: f64,
    /// `rho/beta >= lambda`.
    pub necessary_normal: bool,
    /// `rho/beta_strong >= lambda`.
    pub necessary_strong: bool,
    pub case_a: bool,
    pub case_b: bool,
    /// The strong-rate condition replaces the normal-rate one.
    pub tighter_applicable: bool,
    /// The condition that must hold for consensus to be preventable.
    pub necessary_applicable: bool,
    /// `rho/beta_strong >= |E|`.
    pub sufficient_full_split: bool,
    pub node: Option<NodeConditions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConditions {
    pub rho_over_beta: f64,
    pub rho_over_beta_strong: f64,
    /// `rho/beta_node >= 1`.
    pub necessary_normal: bool,
    /// `rho/beta_node_strong >= 1`.
    pub necessary_strong: bool,
    pub necessary_applicable: bool,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `(case a, case b)` of the tighter condition.
pub fn tighter_cases(
    utility: &UtilityWeights,
    horizons: ByPlayer<usize>,
    periods: ByPlayer<usize>,
) -> (bool, bool) {
    let lcm = periods.attacker / gcd(periods.attacker, periods.defender) * periods.defender;
    let b_zero = utility.b == 0.0;
    (
        b_zero && horizons.defender >= horizons.attacker && lcm == periods.attacker,
        b_zero && periods.defender == 1,
    )
}

fn tighter_applies(
    utility: &UtilityWeights,
    horizons: ByPlayer<usize>,
    periods: ByPlayer<usize>,
    cost_model: &CostModel,
) -> bool {
    let (a, b) = tighter_cases(utility, horizons, periods);
    // without waste the defender's horizon no longer matters
    a || b || (cost_model.waste == WasteMode::Free && utility.b == 0.0)
}

pub fn check_conditions(
    g: &Graph,
    attacker: &AttackerEnergy,
    _defender: &DefenderEnergy,
    horizons: ByPlayer<usize>,
    periods: ByPlayer<usize>,
    utility: &UtilityWeights,
    cost_model: &CostModel,
) -> Result<ConditionReport> {
    let lambda = edge_connectivity(g)?;
    let rho = attacker.budget.rho;
    let (rb, rbs) = (rho / attacker.beta_normal, rho / attacker.beta_strong);
    let (case_a, case_b) = tighter_cases(utility, horizons, periods);
    let tighter = tighter_applies(utility, horizons, periods, cost_model);
    let necessary_normal = rb >= lambda as f64;
    let necessary_strong = rbs >= lambda as f64;
    let node = match cost_model.target {
        AttackTarget::Edge => None,
        AttackTarget::Node => {
            let (bn, bs) = attacker.unit_costs(AttackTarget::Node);
            let (nn, ns) = (rho / bn >= 1.0, rho / bs >= 1.0);
            Some(NodeConditions {
                rho_over_beta: rho / bn,
                rho_over_beta_strong: rho / bs,
                necessary_normal: nn,
                necessary_strong: ns,
                necessary_applicable: if tighter { ns } else { nn },
            })
        }
    };
    Ok(ConditionReport {
        lambda,
        edge_count: g.edge_count(),
        rho_over_beta: rb,
        rho_over_beta_strong: rbs,
        necessary_normal,
        necessary_strong,
        case_a,
        case_b,
        tighter_applicable: tighter,
        necessary_applicable: if tighter {
            necessary_strong
        } else {
            necessary_normal
        },
        sufficient_full_split: rbs >= g.edge_count() as f64,
        node,
    })
}

/// Largest number of subsets `theta_vector` will enumerate by default.
pub const THETA_WORK_BOUND: u64 = 1 << 22;

/// `values[i - 1]`: most groups left after removing exactly `i` edges (or
/// agents, counting groups among the agents left).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub mode: AttackTarget,
    pub values: Vec<usize>,
}

impl ThetaVector {
    /// 1-based entry.
    pub fn get(&self, i: usize) -> Option<usize> {
        i.checked_sub(1).and_then(|j| self.values.get(j)).copied()
    }
}

pub fn theta_vector(g: &Graph, mode: AttackTarget, work_bound: u64) -> Result<ThetaVector> {
    let members = match mode {
        AttackTarget::Edge => g.edge_count(),
        AttackTarget::Node => g.n(),
    };
    if members >= 63 || 1u64 << members > work_bound {
        return Err(GameError::WorkBound(format!(
            "2^{members} attack sets exceed the bound of {work_bound}"
        )));
    }
    let mut values = vec![0; members];
    for set in 1u64..1 << members {
        let size = set.count_ones() as usize;
        let groups = match mode {
            AttackTarget::Edge => g.components_of(g.full_mask() & !set).len(),
            AttackTarget::Node => groups_without(g, set),
        };
        values[size - 1] = values[size - 1].max(groups);
    }
    Ok(ThetaVector { mode, values })
}

/// Groups among agents outside `removed` once their edges are gone.
fn groups_without(g: &Graph, removed: u64) -> usize {
    let cut = (1..=g.n())
        .filter(|v| removed >> (v - 1) & 1 == 1)
        .fold(0, |m, v| m | g.incident_mask(v));
    let removed_count = removed.count_ones() as usize;
    // removed agents are isolated singletons in the full partition
    g.components_of(g.full_mask() & !cut).len() - removed_count
}

/// Cluster bounds with and without the tighter condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterBounds {
    /// Strong jamming sustains `floor(rho/beta_strong)` members.
    pub tighter: usize,
    /// Normal jamming sustains `floor(rho/beta)` members.
    pub loose: usize,
}

pub fn cluster_bounds(
    g: &Graph,
    attacker: &AttackerEnergy,
    target: AttackTarget,
) -> Result<ClusterBounds> {
    let rho = attacker.budget.rho;
    let (bn, bs) = attacker.unit_costs(target);
    let members = match target {
        AttackTarget::Edge => g.edge_count(),
        AttackTarget::Node => g.n(),
    };
    if rho / bs >= members as f64 {
        return Ok(ClusterBounds {
            tighter: g.n(),
            loose: g.n(),
        });
    }
    let theta = theta_vector(g, target, THETA_WORK_BOUND)?;
    let at = |index: usize| match index {
        0 => 1,
        i => theta.get(i.min(members)).expect("index within 1..=members"),
    };
    Ok(ClusterBounds {
        tighter: at((rho / bs).floor() as usize),
        loose: at((rho / bn).floor() as usize),
    })
}

/// Upper bound on the number of clusters the attacker can sustain; 1 when
/// it cannot hold a single member cut.
pub fn cluster_upper_bound(
    g: &Graph,
    attacker: &AttackerEnergy,
    horizons: ByPlayer<usize>,
    periods: ByPlayer<usize>,
    utility: &UtilityWeights,
    cost_model: &CostModel,
) -> Result<usize> {
    let bounds = cluster_bounds(g, attacker, cost_model.target)?;
    Ok(if tighter_applies(utility, horizons, periods, cost_model) {
        bounds.tighter
    } else {
        bounds.loose
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Consensus,
    Clusters,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub clusters: Partition,
    /// Every full window of resolved graphs has a connected union.
    pub union_connected: bool,
    /// False when the union criterion demands consensus but the final states
    /// are split.
    pub cross_check_ok: bool,
}

impl Verdict {
    pub fn consensus(&self) -> bool {
        self.status == VerdictStatus::Consensus
    }
}

/// Final-state verdict. A trace that stopped before its states settled is
/// undecided.
pub fn consensus_verdict(trace: &Trace, tol: f64, window: usize) -> Result<Verdict> {
    if window == 0 {
        return Err(GameError::InvalidInput(
            "union window must be at least 1".into(),
        ));
    }
    let clusters = detect_clusters(trace.final_state(), tol);
    let graphs: Vec<Graph> = trace
        .steps
        .iter()
        .map(|s| trace.graph.restrict(s.resolved))
        .collect();
    let mut union_connected = graphs.len() >= window;
    for w in graphs.windows(window) {
        if !crate::network::is_connected(&union_graph(w)?) {
            union_connected = false;
            break;
        }
    }
    let status = if !trace.settled {
        VerdictStatus::Undecided
    } else if clusters.len() == 1 {
        VerdictStatus::Consensus
    } else {
        VerdictStatus::Clusters
    };
    Ok(Verdict {
        cross_check_ok: !(union_connected && status == VerdictStatus::Clusters),
        status,
        clusters,
        union_connected,
    })
}

/// Leaf cap for [`brute_force_equilibrium`].
pub const ORACLE_LEAF_BOUND: usize = 1_000_000;

struct HistNode {
    t: usize,
    x: StateVector,
    spent_a: f64,
    spent_d: f64,
    /// Grouped by attack, in enumeration order.
    moves: Vec<HistMove>,
}

struct HistMove {
    attack: AttackAction,
    defense: DefenseAction,
    payoff: f64,
    child: usize,
}

#[derive(Clone, Copy)]
struct Choice {
    attack: usize,
    value: f64,
}

/// Equilibrium plan of `mover` by explicit enumeration of every feasible
/// history in the mover's window and a level-by-level resolution of it.
pub fn brute_force_equilibrium(ctx: &SolveContext, mover: Player) -> Result<Plan> {
    ctx.validate()?;
    let start = ctx.time;
    let end = start + ctx.horizons.get(mover) - 1;
    let attacks = attack_catalogue(&ctx.graph, ctx.cost_model.target)?;
    let defenses: Vec<DefenseAction> = (0..=ctx.graph.full_mask())
        .map(|recover| DefenseAction { recover })
        .collect();

    // forward enumeration; parents always precede their children
    let mut nodes = vec![HistNode {
        t: start,
        x: StateVector::new(ctx.state.clone())?,
        spent_a: ctx.attacker_spent,
        spent_d: ctx.defender_spent,
        moves: Vec::new(),
    }];
    let mut leaves = 0usize;
    let mut cursor = 0;
    while cursor < nodes.len() {
        let (t, spent_a, spent_d) = (
            nodes[cursor].t,
            nodes[cursor].spent_a,
            nodes[cursor].spent_d,
        );
        let a_opts: Vec<(AttackAction, f64)> = match ctx.known_attacks.get(&t) {
            Some(a) => vec![(*a, cost_of_attack(ctx, a)?)],
            None => {
                let mut v = Vec::new();
                for a in &attacks {
                    let c = cost_of_attack(ctx, a)?;
                    if fits(spent_a, c, &ctx.attacker.budget, t) {
                        v.push((*a, c));
                    }
                }
                v
            }
        };
        let d_opts: Vec<(DefenseAction, f64)> = match ctx.known_defenses.get(&t) {
            Some(d) => vec![(*d, ctx.defender.beta_recover * d.count() as f64)],
            None => defenses
                .iter()
                .map(|d| (*d, ctx.defender.beta_recover * d.count() as f64))
                .filter(|(_, c)| fits(spent_d, *c, &ctx.defender.budget, t))
                .collect(),
        };
        let mut moves = Vec::new();
        for &(a, ca) in &a_opts {
            for &(d, cd) in &d_opts {
                let (_, resolved) = apply_actions(
                    &ctx.graph,
                    &ctx.graph.edges_in(a.strong),
                    &ctx.graph.edges_in(a.normal),
                    &ctx.graph.edges_in(d.recover),
                )?;
                let x = consensus_step(&nodes[cursor].x, &resolved, &ctx.weights)?;
                let payoff = step_payoff(&x, agent_group_index(&resolved), &ctx.utility);
                let child = nodes.len();
                if t == end {
                    leaves += 1;
                    if leaves > ORACLE_LEAF_BOUND {
                        return Err(GameError::WorkBound(format!(
                            "more than {ORACLE_LEAF_BOUND} histories"
                        )));
                    }
                }
                nodes.push(HistNode {
                    t: t + 1,
                    x,
                    spent_a: spent_a + ca,
                    spent_d: spent_d + cd,
                    moves: Vec::new(),
                });
                moves.push(HistMove {
                    attack: a,
                    defense: d,
                    payoff,
                    child,
                });
            }
        }
        nodes[cursor].moves = moves;
        cursor += 1;
        // nodes past the window end stay as leaves
        while cursor < nodes.len() && nodes[cursor].t > end {
            cursor += 1;
        }
    }

    // models: index i < width is "everybody stops at start + i"; index width is the mover's
    let width = end - start + 1;
    let model_end = |m: usize| if m == width { end } else { start + m };
    let player_end = |p: Player, t: usize, m: usize| {
        if m < width || p == mover {
            model_end(m)
        } else {
            let period = ctx.periods.get(p);
            (t / period * period + ctx.horizons.get(p) - 1).min(end)
        }
    };
    let model_of_end = |e: usize| e - start;

    // per model and node: attacker choice, and per attack group the reply
    let mut choice: Vec<Vec<Option<Choice>>> = vec![vec![None; nodes.len()]; width + 1];
    let mut replies: Vec<Vec<HashMap<usize, (usize, f64)>>> =
        vec![vec![HashMap::new(); nodes.len()]; width + 1];

    for m in 0..=width {
        let m_end = model_end(m);
        for id in (0..nodes.len()).rev() {
            let node = &nodes[id];
            if node.t > m_end || node.moves.is_empty() {
                continue;
            }
            let t = node.t;
            let cont = |mv: &HistMove, choice: &Vec<Vec<Option<Choice>>>| -> f64 {
                if t + 1 > m_end {
                    mv.payoff
                } else {
                    mv.payoff + choice[m][mv.child].expect("child resolved").value
                }
            };
            // attack groups: consecutive moves sharing the attack
            let mut groups: Vec<(usize, usize)> = Vec::new();
            for (i, mv) in node.moves.iter().enumerate() {
                match groups.last_mut() {
                    Some(gr) if node.moves[gr.0].attack == mv.attack => gr.1 = i + 1,
                    _ => groups.push((i, i + 1)),
                }
            }
            let d_end = player_end(Player::Defender, t, m);
            let mut group_values = Vec::new();
            for &(lo, hi) in &groups {
                let pick = if d_end < m_end {
                    replies[model_of_end(d_end)][id][&lo].0
                } else {
                    let scored: Vec<(usize, f64)> = (lo..hi)
                        .map(|i| (i, cont(&node.moves[i], &choice)))
                        .collect();
                    let best = scored.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
                    let tied: Vec<(usize, f64)> = scored
                        .into_iter()
                        .filter(|s| utilities_tie(s.1, best))
                        .collect();
                    let keys: Vec<DefenseAction> =
                        tied.iter().map(|s| node.moves[s.0].defense).collect();
                    let abundant =
                        can_cover_everything(ctx, Player::Defender, node.spent_d, t, d_end);
                    tied[tie_break(&keys, abundant)?].0
                };
                let value = cont(&node.moves[pick], &choice);
                replies[m][id].insert(lo, (pick, value));
                group_values.push((lo, value));
            }
            let a_end = player_end(Player::Attacker, t, m);
            let chosen = if a_end < m_end {
                let lo = choice[model_of_end(a_end)][id]
                    .expect("shorter model resolved")
                    .attack;
                (lo, replies[m][id][&lo].1)
            } else {
                let best = group_values
                    .iter()
                    .map(|s| s.1)
                    .fold(f64::NEG_INFINITY, f64::max);
                let tied: Vec<(usize, f64)> = group_values
                    .iter()
                    .copied()
                    .filter(|s| utilities_tie(s.1, best))
                    .collect();
                let keys: Vec<AttackAction> = tied.iter().map(|s| node.moves[s.0].attack).collect();
                let abundant = can_cover_everything(ctx, Player::Attacker, node.spent_a, t, a_end);
                tied[tie_break(&keys, abundant)?]
            };
            choice[m][id] = Some(Choice {
                attack: chosen.0,
                value: chosen.1,
            });
        }
    }

    let mut path = Vec::with_capacity(width);
    let mut id = 0;
    while nodes[id].t <= end {
        let lo = choice[width][id].expect("root path resolved").attack;
        let mv = &nodes[id].moves[replies[width][id][&lo].0];
        path.push((mv.attack, mv.defense));
        id = mv.child;
    }
    let steps = match mover {
        Player::Attacker => PlanSteps::Attack(path.iter().map(|p| p.0).collect()),
        Player::Defender => PlanSteps::Defense(path.iter().map(|p| p.1).collect()),
    };
    Ok(Plan {
        owner: mover,
        decision_index: start / ctx.periods.get(mover) + 1,
        start_time: start,
        steps,
    })
}

fn fits(spent: f64, cost: f64, budget: &Budget, t: usize) -> bool {
    spent + cost <= budget.kappa + budget.rho * t as f64 + BUDGET_EPS
}

fn cost_of_attack(ctx: &SolveContext, a: &AttackAction) -> Result<f64> {
    match ctx.cost_model.target {
        AttackTarget::Edge => attack_cost(
            &ctx.graph.edges_in(a.strong),
            &ctx.graph.edges_in(a.normal),
            &ctx.cost_model,
            &ctx.attacker,
        ),
        AttackTarget::Node => {
            let agents = |m: u64| {
                (1..=ctx.graph.n())
                    .filter(|v| m >> (v - 1) & 1 == 1)
                    .collect::<Vec<_>>()
            };
            attack_cost(
                &agents(a.strong_nodes),
                &agents(a.normal_nodes),
                &ctx.cost_model,
                &ctx.attacker,
            )
        }
    }
}

fn can_cover_everything(ctx: &SolveContext, p: Player, spent: f64, t: usize, end: usize) -> bool {
    let (per_step, budget) = match p {
        Player::Attacker => {
            let (bn, _) = ctx.attacker.unit_costs(ctx.cost_model.target);
            let members = match ctx.cost_model.target {
                AttackTarget::Edge => ctx.graph.edge_count(),
                AttackTarget::Node => ctx.graph.n(),
            };
            (bn * members as f64, ctx.attacker.budget)
        }
        Player::Defender => (
            ctx.defender.beta_recover * ctx.graph.edge_count() as f64,
            ctx.defender.budget,
        ),
    };
    (t..=end).all(|m| fits(spent, (m - t + 1) as f64 * per_step, &budget, m))
}

/// Every attack as (strong set, normal set) over disjoint member subsets.
fn attack_catalogue(g: &Graph, target: AttackTarget) -> Result<Vec<AttackAction>> {
    let members = match target {
        AttackTarget::Edge => g.edge_count(),
        AttackTarget::Node => g.n(),
    };
    let all = (1u64 << members) - 1;
    let mut out = Vec::new();
    for strong in 0..=all {
        let free = all & !strong;
        // every subset of `free`, ascending
        let mut normal = 0u64;
        loop {
            out.push(match target {
                AttackTarget::Edge => AttackAction::edges(strong, normal)?,
                AttackTarget::Node => AttackAction::nodes(g, strong, normal)?,
            });
            if normal == free {
                break;
            }
            normal = (normal.wrapping_sub(free)) & free;
        }
    }
    Ok(out)
}
