//! Action enumeration, step payoffs and backward induction for a single
//! decision of one player.
//!
//! A decision by the *mover* at time `k` looks at the window
//! `k ..= k + h_mover - 1`. Inside that window each step is played
//! Stackelberg-style: the attacker jams first, the defender then recovers
//! having seen the jamming. Every player acting at step `t` maximizes its own
//! utility summed from `t` to the end of *its* current horizon, cut off at the
//! mover's window end:
//!
//! * the mover always optimizes to the window end;
//! * the opponent's horizon at `t` is that of its decision epoch containing
//!   `t` (epochs start at multiples of its game period);
//! * an opponent whose horizon ends before the window end is modelled with its
//!   own shorter view, where everybody optimizes only up to that earlier end;
//! * an opponent whose horizon reaches past the window end is emulated by the
//!   mover with the negation of the mover's own utility over the window.
//!
//! Opponent actions that are already committed and known to the mover are
//! taken as fixed data. The resulting plan is the mover's action sequence
//! along the predicted equilibrium path.

use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{state_difference, step_masked, WeightMatrix};
use crate::energy::{
    affordable, attack_cost_counts, AttackTarget, AttackerEnergy, Budget, CostModel, DefenderEnergy,
};
use crate::error::{GameError, Result};
use crate::network::{resolved_mask, EdgeMask, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Attacker,
    Defender,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::Attacker => Player::Defender,
            Player::Defender => Player::Attacker,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::Attacker => "attacker",
            Player::Defender => "defender",
        })
    }
}

/// A value held once per player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByPlayer<T> {
    pub attacker: T,
    pub defender: T,
}

impl<T: Copy> ByPlayer<T> {
    pub fn new(attacker: T, defender: T) -> Self {
        ByPlayer { attacker, defender }
    }

    pub fn get(&self, p: Player) -> T {
        match p {
            Player::Attacker => self.attacker,
            Player::Defender => self.defender,
        }
    }
}

/// One step of jamming. Edge masks refer to the base graph's edge indexing;
/// in node mode the node masks (bit `v - 1` for agent `v`) record the chosen
/// agents and the edge masks their induced edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AttackAction {
    pub strong: EdgeMask,
    pub normal: EdgeMask,
    #[serde(default)]
    pub strong_nodes: u64,
    #[serde(default)]
    pub normal_nodes: u64,
}

impl AttackAction {
    pub const NONE: AttackAction = AttackAction {
        strong: 0,
        normal: 0,
        strong_nodes: 0,
        normal_nodes: 0,
    };

    pub fn edges(strong: EdgeMask, normal: EdgeMask) -> Result<Self> {
        if strong & normal != 0 {
            return Err(GameError::InvalidAction(
                "edge jammed both strongly and normally".into(),
            ));
        }
        Ok(AttackAction {
            strong,
            normal,
            strong_nodes: 0,
            normal_nodes: 0,
        })
    }

    /// Node attack: all edges adjacent to the chosen agents are jammed. An
    /// edge touched by both a strong and a normal agent counts as strong.
    pub fn nodes(g: &Graph, strong_nodes: u64, normal_nodes: u64) -> Result<Self> {
        if strong_nodes & normal_nodes != 0 {
            return Err(GameError::InvalidAction(
                "agent jammed both strongly and normally".into(),
            ));
        }
        let induced = |nodes: u64| {
            (1..=g.n())
                .filter(|v| nodes >> (v - 1) & 1 == 1)
                .fold(0, |m, v| m | g.incident_mask(v))
        };
        let strong = induced(strong_nodes);
        let normal = induced(normal_nodes) & !strong;
        Ok(AttackAction {
            strong,
            normal,
            strong_nodes,
            normal_nodes,
        })
    }

    /// `(strong, normal)` member counts: edges or agents depending on target.
    pub fn counts(&self, target: AttackTarget) -> (usize, usize) {
        match target {
            AttackTarget::Edge => (
                self.strong.count_ones() as usize,
                self.normal.count_ones() as usize,
            ),
            AttackTarget::Node => (
                self.strong_nodes.count_ones() as usize,
                self.normal_nodes.count_ones() as usize,
            ),
        }
    }

    pub fn cost(&self, cm: &CostModel, p: &AttackerEnergy) -> f64 {
        let (s, n) = self.counts(cm.target);
        attack_cost_counts(s, n, cm, p)
    }

    pub fn is_none(&self) -> bool {
        self.strong == 0 && self.normal == 0
    }
}

/// One step of recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DefenseAction {
    pub recover: EdgeMask,
}

impl DefenseAction {
    pub const NONE: DefenseAction = DefenseAction { recover: 0 };

    pub fn count(&self) -> usize {
        self.recover.count_ones() as usize
    }

    /// Energy committed to this recovery: every chosen edge is paid for when
    /// planning, whatever the waste accounting of the ledger.
    pub fn commitment(&self, p: &DefenderEnergy) -> f64 {
        p.beta_recover * self.count() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "actions", rename_all = "lowercase")]
pub enum PlanSteps {
    Attack(Vec<AttackAction>),
    Defense(Vec<DefenseAction>),
}

/// A player's planned actions for one decision; only the first `period`
/// steps are ever applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub owner: Player,
    /// 1-based decision index `l`.
    pub decision_index: usize,
    pub start_time: usize,
    pub steps: PlanSteps,
}

impl Plan {
    pub fn len(&self) -> usize {
        match &self.steps {
            PlanSteps::Attack(v) => v.len(),
            PlanSteps::Defense(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn attack_at(&self, step: usize) -> Option<AttackAction> {
        match &self.steps {
            PlanSteps::Attack(v) => v.get(step).copied(),
            PlanSteps::Defense(_) => None,
        }
    }

    pub fn defense_at(&self, step: usize) -> Option<DefenseAction> {
        match &self.steps {
            PlanSteps::Defense(v) => v.get(step).copied(),
            PlanSteps::Attack(_) => None,
        }
    }
}

/// Weights `a` (state difference) and `b` (agent-group index) of the
/// per-step payoff `a·z − b·c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityWeights {
    pub a: f64,
    pub b: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights { a: 1.0, b: 0.0 }
    }
}

impl UtilityWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0) || (self.a == 0.0 && self.b == 0.0) {
            return Err(GameError::InvalidInput(
                "utility weights must be nonnegative and not both zero".into(),
            ));
        }
        Ok(())
    }
}

/// Attacker's payoff for one step; the defender's is its negation.
pub fn step_payoff(x_next: &[f64], group_index: i64, w: &UtilityWeights) -> f64 {
    w.a * state_difference(x_next) - w.b * group_index as f64
}

/// Whether two utilities are equal up to floating-point noise.
pub fn utilities_tie(u: f64, v: f64) -> bool {
    (u - v).abs() <= 1e-9 * u.abs().max(v.abs()) + 1e-12
}

/// Everything a player knows when making one decision.
#[derive(Debug, Clone)]
pub struct SolveContext {
    pub graph: Graph,
    pub weights: WeightMatrix,
    /// Agent states at the decision time.
    pub state: Vec<f64>,
    /// Absolute decision time `k`.
    pub time: usize,
    pub attacker: AttackerEnergy,
    pub defender: DefenderEnergy,
    /// Cumulative committed spend before `time`.
    pub attacker_spent: f64,
    pub defender_spent: f64,
    pub cost_model: CostModel,
    pub horizons: ByPlayer<usize>,
    pub periods: ByPlayer<usize>,
    pub utility: UtilityWeights,
    /// Opponent actions fixed at absolute times (committed and known, or
    /// observed within the current step).
    pub known_attacks: BTreeMap<usize, AttackAction>,
    pub known_defenses: BTreeMap<usize, DefenseAction>,
}

impl SolveContext {
    pub fn validate(&self) -> Result<()> {
        if self.state.len() != self.graph.n() {
            return Err(GameError::InvalidInput(format!(
                "{} states for {} agents",
                self.state.len(),
                self.graph.n()
            )));
        }
        for p in [Player::Attacker, Player::Defender] {
            let (h, t) = (self.horizons.get(p), self.periods.get(p));
            if t == 0 || h < t {
                return Err(GameError::InvalidInput(format!(
                    "{p} needs 1 <= period <= horizon (period {t}, horizon {h})"
                )));
            }
        }
        Ok(())
    }

    pub fn budget(&self, p: Player) -> Budget {
        match p {
            Player::Attacker => self.attacker.budget,
            Player::Defender => self.defender.budget,
        }
    }

    /// Cost per step of using the player's whole action set (every edge, or
    /// every agent in node mode, at the cheapest rate).
    pub fn full_action_cost(&self, p: Player) -> f64 {
        match p {
            Player::Attacker => {
                let members = match self.cost_model.target {
                    AttackTarget::Edge => self.graph.edge_count(),
                    AttackTarget::Node => self.graph.n(),
                };
                attack_cost_counts(0, members, &self.cost_model, &self.attacker)
            }
            Player::Defender => self.defender.beta_recover * self.graph.edge_count() as f64,
        }
    }

    /// Whether `p`, having spent `spent` before time `t`, can afford its whole
    /// action set at every step `t ..= end`.
    pub fn can_afford_everything(&self, p: Player, spent: f64, t: usize, end: usize) -> bool {
        let full = self.full_action_cost(p);
        let budget = self.budget(p);
        (t..=end).all(|m| affordable(spent, (m - t + 1) as f64 * full, &budget, m))
    }

    pub fn window_end(&self, mover: Player) -> usize {
        self.time + self.horizons.get(mover) - 1
    }
}

/// Every attack in canonical order, feasibility ignored.
///
/// Edge mode assigns each edge a digit in {untouched, normal, strong} with
/// the first edge as the fastest-varying digit; node mode does the same over
/// agents.
pub fn all_attacks(g: &Graph, target: AttackTarget) -> Vec<AttackAction> {
    let members = match target {
        AttackTarget::Edge => g.edge_count(),
        AttackTarget::Node => g.n(),
    };
    let total = 3usize.pow(members as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let (mut strong, mut normal, mut c) = (0u64, 0u64, code);
        for i in 0..members {
            match c % 3 {
                1 => normal |= 1 << i,
                2 => strong |= 1 << i,
                _ => {}
            }
            c /= 3;
        }
        out.push(match target {
            AttackTarget::Edge => {
                AttackAction::edges(strong, normal).expect("disjoint by construction")
            }
            AttackTarget::Node => {
                AttackAction::nodes(g, strong, normal).expect("disjoint by construction")
            }
        });
    }
    out
}

/// Every recovery set in ascending mask order.
pub fn all_defenses(g: &Graph) -> Vec<DefenseAction> {
    (0..=g.full_mask())
        .map(|recover| DefenseAction { recover })
        .collect()
}

/// Attacks affordable at `step_time` given the attacker's spend so far.
pub fn enumerate_attacks(ctx: &SolveContext, spent: f64, step_time: usize) -> Vec<AttackAction> {
    let budget = ctx.attacker.budget;
    all_attacks(&ctx.graph, ctx.cost_model.target)
        .into_iter()
        .filter(|a| {
            affordable(
                spent,
                a.cost(&ctx.cost_model, &ctx.attacker),
                &budget,
                step_time,
            )
        })
        .collect()
}

/// Recoveries affordable at `step_time` given the defender's spend so far.
pub fn enumerate_defenses(ctx: &SolveContext, spent: f64, step_time: usize) -> Vec<DefenseAction> {
    let budget = ctx.defender.budget;
    all_defenses(&ctx.graph)
        .into_iter()
        .filter(|d| affordable(spent, d.commitment(&ctx.defender), &budget, step_time))
        .collect()
}

/// Anything a player can choose, as seen by the tie-break rule.
pub trait TieBreakKey {
    /// Members engaged (edges, or agents for node attacks).
    fn size(&self) -> usize;
    /// Strongly jammed members; zero for recoveries.
    fn strength(&self) -> usize;
    /// Canonical ordering key used once size and strength tie.
    fn canonical_key(&self) -> Vec<Vec<usize>>;
}

fn bits(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

impl TieBreakKey for AttackAction {
    fn size(&self) -> usize {
        if self.strong_nodes | self.normal_nodes != 0 {
            (self.strong_nodes.count_ones() + self.normal_nodes.count_ones()) as usize
        } else {
            (self.strong.count_ones() + self.normal.count_ones()) as usize
        }
    }

    fn strength(&self) -> usize {
        if self.strong_nodes | self.normal_nodes != 0 {
            self.strong_nodes.count_ones() as usize
        } else {
            self.strong.count_ones() as usize
        }
    }

    fn canonical_key(&self) -> Vec<Vec<usize>> {
        vec![
            bits(self.strong),
            bits(self.normal),
            bits(self.strong_nodes),
            bits(self.normal_nodes),
        ]
    }
}

impl TieBreakKey for DefenseAction {
    fn size(&self) -> usize {
        self.count()
    }

    fn strength(&self) -> usize {
        0
    }

    fn canonical_key(&self) -> Vec<Vec<usize>> {
        vec![bits(self.recover)]
    }
}

/// Picks among equal-utility candidates.
///
/// With energy to use the whole action set at every remaining step
/// (`abundant`), the largest action wins (then the one with more strong
/// jamming); otherwise the smallest (then the one with less strong jamming).
/// Remaining ties go to the canonically smallest strong set, then normal set,
/// then recovery set. Returns the index into `candidates`.
pub fn tie_break<A: TieBreakKey>(candidates: &[A], abundant: bool) -> Result<usize> {
    if candidates.is_empty() {
        return Err(GameError::Internal(
            "tie-break over an empty candidate set".into(),
        ));
    }
    let order = |x: &A, y: &A| -> Ordering {
        let size = x
            .size()
            .cmp(&y.size())
            .then(x.strength().cmp(&y.strength()));
        let size = if abundant { size.reverse() } else { size };
        size.then_with(|| x.canonical_key().cmp(&y.canonical_key()))
    };
    let mut best = 0;
    for i in 1..candidates.len() {
        if order(&candidates[i], &candidates[best]) == Ordering::Less {
            best = i;
        }
    }
    Ok(best)
}

/// Result of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub plan: Plan,
    /// The mover's own utility along the predicted path.
    pub utility: f64,
    /// Predicted `(attack, defense)` for every step of the window.
    pub predicted: Vec<(AttackAction, DefenseAction)>,
    /// Distinct subgames evaluated.
    pub explored: usize,
}

/// Default cap on distinct subgames per decision.
pub const DEFAULT_WORK_BOUND: usize = 2_000_000;

/// Solves one decision of `mover` by backward induction.
pub fn solve_decision(ctx: &SolveContext, mover: Player) -> Result<Decision> {
    solve_decision_bounded(ctx, mover, DEFAULT_WORK_BOUND)
}

/// As [`solve_decision`], failing with [`GameError::WorkBound`] once more than
/// `bound` distinct subgames would be evaluated.
pub fn solve_decision_bounded(ctx: &SolveContext, mover: Player, bound: usize) -> Result<Decision> {
    ctx.validate()?;
    if ctx.graph.edge_count() > crate::network::MAX_MASK_EDGES || ctx.graph.n() > 40 {
        return Err(GameError::WorkBound(format!(
            "{} agents and {} edges exceed the enumerable action sets",
            ctx.graph.n(),
            ctx.graph.edge_count()
        )));
    }
    let tree = Tree::new(ctx, mover, bound);
    let mut node = Node {
        t: ctx.time,
        x: ctx.state.clone(),
        spent_a: ctx.attacker_spent,
        spent_d: ctx.defender_spent,
    };
    let root_value = tree.solve(&node, Model::Mover).value;
    if tree.aborted.get() {
        return Err(GameError::WorkBound(format!(
            "{mover} decision at time {} needs more than {bound} subgames",
            ctx.time
        )));
    }
    let mut predicted = Vec::with_capacity(ctx.horizons.get(mover));
    while node.t <= tree.end {
        let out = tree.solve(&node, Model::Mover);
        let (a, d) = (tree.attacks[out.attack], tree.defenses[out.defense]);
        predicted.push((a, d));
        node = tree.advance(&node, &a, &d).1;
    }
    let steps = match mover {
        Player::Attacker => PlanSteps::Attack(predicted.iter().map(|p| p.0).collect()),
        Player::Defender => PlanSteps::Defense(predicted.iter().map(|p| p.1).collect()),
    };
    Ok(Decision {
        plan: Plan {
            owner: mover,
            decision_index: ctx.time / ctx.periods.get(mover) + 1,
            start_time: ctx.time,
            steps,
        },
        utility: match mover {
            Player::Attacker => root_value,
            Player::Defender => -root_value,
        },
        predicted,
        explored: tree.explored.get(),
    })
}

/// Whose view the continuation is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Model {
    /// The mover's view, ending at the mover's window end.
    Mover,
    /// A shorter view in which everybody optimizes up to the given time.
    Until(usize),
}

#[derive(Debug, Clone)]
struct Node {
    t: usize,
    x: Vec<f64>,
    spent_a: f64,
    spent_d: f64,
}

type NodeKey = (usize, Vec<u64>, u64, u64);

impl Node {
    fn key(&self) -> NodeKey {
        (
            self.t,
            self.x.iter().map(|v| v.to_bits()).collect(),
            self.spent_a.to_bits(),
            self.spent_d.to_bits(),
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    attack: usize,
    defense: usize,
    /// Attacker payoff summed to the model's end.
    value: f64,
}

/// Best reply index and its utility.
type Reply = (usize, f64);

struct Tree<'c> {
    ctx: &'c SolveContext,
    mover: Player,
    end: usize,
    attacks: Vec<AttackAction>,
    attack_cost: Vec<f64>,
    defenses: Vec<DefenseAction>,
    defense_cost: Vec<f64>,
    fixed_attacks: BTreeMap<usize, usize>,
    fixed_defenses: BTreeMap<usize, usize>,
    memo: RefCell<HashMap<(NodeKey, Model), Outcome>>,
    reply_memo: RefCell<HashMap<(NodeKey, Model, usize), Reply>>,
    explored: Cell<usize>,
    bound: usize,
    aborted: Cell<bool>,
}

impl<'c> Tree<'c> {
    fn new(ctx: &'c SolveContext, mover: Player, bound: usize) -> Self {
        let mut attacks = all_attacks(&ctx.graph, ctx.cost_model.target);
        let mut defenses = all_defenses(&ctx.graph);
        let mut fixed_attacks = BTreeMap::new();
        for (&t, a) in &ctx.known_attacks {
            let idx = attacks.iter().position(|x| x == a).unwrap_or_else(|| {
                attacks.push(*a);
                attacks.len() - 1
            });
            fixed_attacks.insert(t, idx);
        }
        let mut fixed_defenses = BTreeMap::new();
        for (&t, d) in &ctx.known_defenses {
            let idx = defenses.iter().position(|x| x == d).unwrap_or_else(|| {
                defenses.push(*d);
                defenses.len() - 1
            });
            fixed_defenses.insert(t, idx);
        }
        let attack_cost = attacks
            .iter()
            .map(|a| a.cost(&ctx.cost_model, &ctx.attacker))
            .collect();
        let defense_cost = defenses
            .iter()
            .map(|d| d.commitment(&ctx.defender))
            .collect();
        Tree {
            ctx,
            mover,
            end: ctx.window_end(mover),
            attacks,
            attack_cost,
            defenses,
            defense_cost,
            fixed_attacks,
            fixed_defenses,
            memo: RefCell::new(HashMap::new()),
            reply_memo: RefCell::new(HashMap::new()),
            explored: Cell::new(0),
            bound,
            aborted: Cell::new(false),
        }
    }

    fn model_end(&self, m: Model) -> usize {
        match m {
            Model::Mover => self.end,
            Model::Until(e) => e,
        }
    }

    /// Last step `p` optimizes over when acting at `t` under model `m`.
    fn player_end(&self, p: Player, t: usize, m: Model) -> usize {
        match m {
            Model::Until(e) => e,
            Model::Mover if p == self.mover => self.end,
            Model::Mover => {
                let period = self.ctx.periods.get(p);
                let epoch = t / period * period;
                (epoch + self.ctx.horizons.get(p) - 1).min(self.end)
            }
        }
    }

    /// Payoff of step `node.t` and the successor node.
    fn advance(&self, node: &Node, a: &AttackAction, d: &DefenseAction) -> (f64, Node) {
        let g = &self.ctx.graph;
        let resolved = resolved_mask(g.full_mask(), a.strong, a.normal, d.recover);
        let x = step_masked(&node.x, g, resolved, &self.ctx.weights);
        let payoff = step_payoff(&x, g.group_index_of(resolved), &self.ctx.utility);
        let next = Node {
            t: node.t + 1,
            x,
            spent_a: node.spent_a + a.cost(&self.ctx.cost_model, &self.ctx.attacker),
            spent_d: node.spent_d + d.commitment(&self.ctx.defender),
        };
        (payoff, next)
    }

    fn value(&self, node: &Node, m: Model) -> f64 {
        if node.t > self.model_end(m) {
            0.0
        } else {
            self.solve(node, m).value
        }
    }

    /// Equilibrium play at `node` under model `m`.
    fn solve(&self, node: &Node, m: Model) -> Outcome {
        let key = (node.key(), m);
        if let Some(out) = self.memo.borrow().get(&key) {
            return *out;
        }
        if self.aborted.get() || self.explored.get() >= self.bound {
            // unwinds cheaply; the caller reports the overflow
            self.aborted.set(true);
            return Outcome {
                attack: 0,
                defense: 0,
                value: 0.0,
            };
        }
        self.explored.set(self.explored.get() + 1);
        let out = self.solve_uncached(node, m);
        self.memo.borrow_mut().insert(key, out);
        out
    }

    fn solve_uncached(&self, node: &Node, m: Model) -> Outcome {
        let t = node.t;
        if let Some(&a) = self.fixed_attacks.get(&t) {
            let (d, value) = self.reply(node, a, m);
            return Outcome {
                attack: a,
                defense: d,
                value,
            };
        }
        let end = self.player_end(Player::Attacker, t, m);
        if end < self.model_end(m) {
            let a = self.solve(node, Model::Until(end)).attack;
            let (d, value) = self.reply(node, a, m);
            return Outcome {
                attack: a,
                defense: d,
                value,
            };
        }
        let budget = self.ctx.attacker.budget;
        let mut scored = Vec::new();
        for (a, &cost) in self.attack_cost.iter().enumerate() {
            if affordable(node.spent_a, cost, &budget, t) && !self.is_extra_attack(a) {
                let (d, value) = self.reply(node, a, m);
                scored.push((a, d, value));
            }
        }
        let best = scored.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<_> = scored.iter().filter(|s| utilities_tie(s.2, best)).collect();
        let abundant = self
            .ctx
            .can_afford_everything(Player::Attacker, node.spent_a, t, end);
        let keys: Vec<AttackAction> = tied.iter().map(|s| self.attacks[s.0]).collect();
        let pick = tie_break(&keys, abundant).expect("doing nothing is always affordable");
        let (attack, defense, value) = *tied[pick];
        debug_assert!(scored
            .iter()
            .all(|s| s.2 <= value || utilities_tie(s.2, value)));
        Outcome {
            attack,
            defense,
            value,
        }
    }

    // Known opponent actions may lie outside the canonical list; they are
    // never offered as free choices.
    fn is_extra_attack(&self, a: usize) -> bool {
        a >= 3usize.pow(self.canonical_attack_members() as u32)
    }

    fn canonical_attack_members(&self) -> usize {
        match self.ctx.cost_model.target {
            AttackTarget::Edge => self.ctx.graph.edge_count(),
            AttackTarget::Node => self.ctx.graph.n(),
        }
    }

    /// Defender's response to attack `a` at `node`, and the attacker payoff
    /// to the end of `m` that follows.
    fn reply(&self, node: &Node, a: usize, m: Model) -> Reply {
        let key = (node.key(), m, a);
        if let Some(r) = self.reply_memo.borrow().get(&key) {
            return *r;
        }
        let r = self.reply_uncached(node, a, m);
        self.reply_memo.borrow_mut().insert(key, r);
        r
    }

    fn continue_with(&self, node: &Node, a: usize, d: usize, m: Model) -> f64 {
        let (payoff, next) = self.advance(node, &self.attacks[a], &self.defenses[d]);
        payoff + self.value(&next, m)
    }

    fn reply_uncached(&self, node: &Node, a: usize, m: Model) -> Reply {
        let t = node.t;
        if let Some(&d) = self.fixed_defenses.get(&t) {
            return (d, self.continue_with(node, a, d, m));
        }
        let end = self.player_end(Player::Defender, t, m);
        if end < self.model_end(m) {
            let d = self.reply(node, a, Model::Until(end)).0;
            return (d, self.continue_with(node, a, d, m));
        }
        let budget = self.ctx.defender.budget;
        let canonical = self.ctx.graph.full_mask() as usize + 1;
        let mut scored = Vec::new();
        for (d, &cost) in self.defense_cost.iter().enumerate().take(canonical) {
            if affordable(node.spent_d, cost, &budget, t) {
                scored.push((d, self.continue_with(node, a, d, m)));
            }
        }
        let best = scored.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let tied: Vec<_> = scored.iter().filter(|s| utilities_tie(s.1, best)).collect();
        let abundant = self
            .ctx
            .can_afford_everything(Player::Defender, node.spent_d, t, end);
        let keys: Vec<DefenseAction> = tied.iter().map(|s| self.defenses[s.0]).collect();
        let pick = tie_break(&keys, abundant).expect("recovering nothing is always affordable");
        *tied[pick]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::WasteMode;

    fn ctx(
        g: Graph,
        x: Vec<f64>,
        attacker: AttackerEnergy,
        defender: DefenderEnergy,
    ) -> SolveContext {
        SolveContext {
            weights: WeightMatrix::default_for(&g),
            graph: g,
            state: x,
            time: 0,
            attacker,
            defender,
            attacker_spent: 0.0,
            defender_spent: 0.0,
            cost_model: CostModel::default(),
            horizons: ByPlayer::new(1, 1),
            periods: ByPlayer::new(1, 1),
            utility: UtilityWeights::default(),
            known_attacks: BTreeMap::new(),
            known_defenses: BTreeMap::new(),
        }
    }

    fn rich() -> AttackerEnergy {
        AttackerEnergy::new(100.0, 100.0, 1.0, 2.0)
    }

    #[test]
    fn attack_enumeration_counts() {
        let c = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 3.0],
            rich(),
            DefenderEnergy::new(10.0, 10.0, 1.0),
        );
        assert_eq!(enumerate_attacks(&c, 0.0, 0).len(), 9);
        let poor = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 3.0],
            AttackerEnergy::new(0.5, 0.5, 1.0, 2.0),
            DefenderEnergy::new(10.0, 10.0, 1.0),
        );
        assert_eq!(enumerate_attacks(&poor, 0.0, 0), vec![AttackAction::NONE]);
    }

    #[test]
    fn node_attack_on_middle_agent() {
        let g = Graph::path(3);
        let a = AttackAction::nodes(&g, 0b010, 0).unwrap();
        assert_eq!(g.edges_in(a.strong), vec![(1, 2), (2, 3)]);
        assert_eq!(a.normal, 0);
        // normal on 1, strong on 2: the shared edge is strong
        let a = AttackAction::nodes(&g, 0b010, 0b001).unwrap();
        assert_eq!(a.normal, 0);
        assert_eq!(all_attacks(&g, AttackTarget::Node).len(), 27);
    }

    #[test]
    fn defense_enumeration() {
        let g = Graph::path(3);
        let c = ctx(
            g.clone(),
            vec![0.0; 3],
            rich(),
            DefenderEnergy::new(2.0, 2.0, 1.0),
        );
        assert_eq!(enumerate_defenses(&c, 0.0, 0).len(), 4);
        let c = ctx(
            g.clone(),
            vec![0.0; 3],
            rich(),
            DefenderEnergy::new(0.5, 0.5, 1.0),
        );
        assert_eq!(enumerate_defenses(&c, 0.0, 0), vec![DefenseAction::NONE]);
    }

    #[test]
    fn payoff_values() {
        let w = UtilityWeights::default();
        assert_eq!(step_payoff(&[2.0, 2.0, 2.0], 0, &w), 0.0);
        assert_eq!(step_payoff(&[0.0, 1.0, 2.0], -4, &w), 6.0);
        let w = UtilityWeights { a: 0.0, b: 1.0 };
        let split = Graph::path(3).group_index_of(0b01);
        assert_eq!(step_payoff(&[0.0, 0.0, 0.0], split, &w), 4.0);
    }

    #[test]
    fn tie_break_rules() {
        let one = AttackAction::edges(0, 0b01).unwrap();
        let two = AttackAction::edges(0, 0b11).unwrap();
        assert_eq!(tie_break(&[one], false).unwrap(), 0);
        assert_eq!(tie_break(&[one, two], true).unwrap(), 1);
        assert_eq!(tie_break(&[one, two], false).unwrap(), 0);
        let other = AttackAction::edges(0, 0b10).unwrap();
        assert_eq!(tie_break(&[other, one], false).unwrap(), 1);
        assert!(tie_break::<DefenseAction>(&[], true).is_err());
    }

    #[test]
    fn one_shot_matches_exhaustive_stackelberg() {
        let c = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 4.0],
            AttackerEnergy::new(1.5, 1.5, 1.0, 2.0),
            DefenderEnergy::new(1.0, 1.0, 1.0),
        );
        let dec = solve_decision(&c, Player::Attacker).unwrap();
        // exhaustive: attacker maximizes min over defender replies
        let g = &c.graph;
        let mut best = f64::NEG_INFINITY;
        for a in enumerate_attacks(&c, 0.0, 0) {
            let worst = enumerate_defenses(&c, 0.0, 0)
                .iter()
                .map(|d| {
                    let m = resolved_mask(g.full_mask(), a.strong, a.normal, d.recover);
                    let x = step_masked(&c.state, g, m, &c.weights);
                    step_payoff(&x, g.group_index_of(m), &c.utility)
                })
                .fold(f64::INFINITY, f64::min);
            best = best.max(worst);
        }
        assert!(utilities_tie(dec.utility, best));
    }

    #[test]
    fn strong_attack_everything_when_affordable() {
        let mut c = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 3.0],
            rich(),
            DefenderEnergy::new(2.0, 2.0, 1.0),
        );
        c.horizons = ByPlayer::new(2, 2);
        let dec = solve_decision(&c, Player::Attacker).unwrap();
        for (a, d) in &dec.predicted {
            assert_eq!(a.strong, 0b11);
            // recovery is useless here; an abundant defender still takes the largest tie
            assert_eq!(d.recover, 0b11);
        }
    }

    #[test]
    fn broke_attacker_leaves_network_alone() {
        let mut c = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 3.0],
            AttackerEnergy::new(0.5, 0.5, 1.0, 2.0),
            DefenderEnergy::new(0.5, 0.5, 1.0),
        );
        c.horizons = ByPlayer::new(2, 2);
        let att = solve_decision(&c, Player::Attacker).unwrap();
        let def = solve_decision(&c, Player::Defender).unwrap();
        assert_eq!(
            att.plan.steps,
            PlanSteps::Attack(vec![AttackAction::NONE; 2])
        );
        assert_eq!(
            def.plan.steps,
            PlanSteps::Defense(vec![DefenseAction::NONE; 2])
        );
    }

    #[test]
    fn plan_lengths_follow_horizons() {
        let mut c = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 3.0],
            AttackerEnergy::new(1.5, 1.5, 1.0, 2.0),
            DefenderEnergy::new(0.5, 0.5, 1.0),
        );
        c.horizons = ByPlayer::new(3, 2);
        c.periods = ByPlayer::new(1, 2);
        assert_eq!(solve_decision(&c, Player::Attacker).unwrap().plan.len(), 3);
        assert_eq!(solve_decision(&c, Player::Defender).unwrap().plan.len(), 2);
    }

    #[test]
    fn known_defense_is_respected() {
        let mut c = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 3.0],
            AttackerEnergy::new(1.5, 1.5, 1.0, 2.0),
            DefenderEnergy::new(1.0, 1.0, 1.0),
        );
        c.known_defenses.insert(0, DefenseAction { recover: 0b01 });
        let dec = solve_decision(&c, Player::Attacker).unwrap();
        assert_eq!(dec.predicted[0].1.recover, 0b01);
        // recovery of edge 0 is planned: the attacker avoids jamming it normally
        assert_eq!(dec.predicted[0].0.normal & 0b01, 0);
    }

    #[test]
    fn work_bound_is_enforced() {
        let mut c = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 3.0],
            rich(),
            DefenderEnergy::new(2.0, 2.0, 1.0),
        );
        c.horizons = ByPlayer::new(3, 3);
        let err = solve_decision_bounded(&c, Player::Attacker, 10).unwrap_err();
        assert!(matches!(err, GameError::WorkBound(_)));
        assert!(solve_decision_bounded(&c, Player::Attacker, DEFAULT_WORK_BOUND).is_ok());
    }

    #[test]
    fn waste_mode_does_not_change_planning_costs() {
        let mut c = ctx(
            Graph::path(3),
            vec![1.0, 2.0, 3.0],
            rich(),
            DefenderEnergy::new(1.0, 1.0, 1.0),
        );
        let charged = solve_decision(&c, Player::Defender).unwrap();
        c.cost_model.waste = WasteMode::Free;
        let free = solve_decision(&c, Player::Defender).unwrap();
        assert_eq!(charged.plan, free.plan);
    }
}
