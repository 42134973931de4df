//! Time-marching loop: decision schedule, inter-player knowledge, plan
//! application and the per-step trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{state_difference, step_masked, WeightMatrix};
use crate::energy::{
    defense_cost_counts, AttackerEnergy, CostModel, DefenderEnergy, EnergyLedger, BUDGET_EPS,
};
use crate::error::{GameError, Result};
use crate::game::{
    solve_decision_bounded, step_payoff, AttackAction, ByPlayer, Decision, DefenseAction, Plan,
    Player, SolveContext, UtilityWeights, DEFAULT_WORK_BOUND,
};
use crate::network::{resolved_mask, EdgeMask, Graph};

/// Version tag written into every trace export.
pub const TRACE_VERSION: u32 = 1;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Decision periods of both players and the common game period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub attacker_period: usize,
    pub defender_period: usize,
    pub lcm_period: usize,
}

impl Schedule {
    pub fn new(attacker_period: usize, defender_period: usize) -> Result<Self> {
        if attacker_period == 0 || defender_period == 0 {
            return Err(GameError::InvalidInput(
                "game periods must be at least 1".into(),
            ));
        }
        Ok(Schedule {
            attacker_period,
            defender_period,
            lcm_period: attacker_period / gcd(attacker_period, defender_period) * defender_period,
        })
    }

    pub fn from_periods(periods: ByPlayer<usize>) -> Result<Self> {
        Self::new(periods.attacker, periods.defender)
    }

    pub fn period(&self, p: Player) -> usize {
        match p {
            Player::Attacker => self.attacker_period,
            Player::Defender => self.defender_period,
        }
    }

    pub fn decides(&self, p: Player, k: usize) -> bool {
        k.is_multiple_of(self.period(p))
    }

    /// Both players decide at `k`.
    pub fn is_common(&self, k: usize) -> bool {
        k.is_multiple_of(self.lcm_period)
    }

    /// 1-based index of the decision governing step `k`.
    pub fn decision_index(&self, p: Player, k: usize) -> usize {
        k / self.period(p) + 1
    }

    /// Time of the decision governing step `k`.
    pub fn decided_at(&self, p: Player, k: usize) -> usize {
        k / self.period(p) * self.period(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTimes {
    pub attacker: Vec<usize>,
    pub defender: Vec<usize>,
    /// Times at which both decide.
    pub games: Vec<usize>,
}

/// Decision times of both players in `0..k_len`.
pub fn decision_times(sched: &Schedule, k_len: usize) -> Result<DecisionTimes> {
    if k_len == 0 {
        return Err(GameError::InvalidInput(
            "run length must be at least 1".into(),
        ));
    }
    let times = |p| (0..k_len).filter(|&k| sched.decides(p, k)).collect();
    Ok(DecisionTimes {
        attacker: times(Player::Attacker),
        defender: times(Player::Defender),
        games: (0..k_len).filter(|&k| sched.is_common(k)).collect(),
    })
}

/// One solved decision, kept whole even though only a prefix is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub owner: Player,
    pub decision_index: usize,
    pub time: usize,
    pub plan: Plan,
    /// Owner's predicted utility over its window.
    pub utility: f64,
    pub explored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownSegment {
    pub owner: Player,
    pub decision_index: usize,
    pub decided_at: usize,
    pub plan: Plan,
}

/// Opponent plans a player knows at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSet {
    pub holder: Player,
    pub time: usize,
    pub segments: Vec<KnownSegment>,
}

/// Whether `holder` knows the opponent plan decided at `decided_at`.
///
/// Plans decided at common times are known to both players. Otherwise the
/// holder must have the strictly longer horizon and the opponent's whole plan
/// window must lie inside the holder's window at that moment.
pub fn plan_is_known(
    holder: Player,
    decided_at: usize,
    history: &[DecisionRecord],
    sched: &Schedule,
    horizons: ByPlayer<usize>,
) -> bool {
    if sched.is_common(decided_at) {
        return true;
    }
    let (h_own, h_opp) = (horizons.get(holder), horizons.get(holder.opponent()));
    if h_own <= h_opp {
        return false;
    }
    history
        .iter()
        .filter(|r| r.owner == holder && r.time <= decided_at)
        .max_by_key(|r| r.time)
        .is_some_and(|r| decided_at + h_opp <= r.time + h_own)
}

/// Opponent plans known to `holder` once all decisions at time `k` are made.
pub fn knowledge_for(
    holder: Player,
    k: usize,
    history: &[DecisionRecord],
    sched: &Schedule,
    horizons: ByPlayer<usize>,
) -> KnowledgeSet {
    let segments = history
        .iter()
        .filter(|r| r.owner == holder.opponent() && r.time <= k)
        .filter(|r| plan_is_known(holder, r.time, history, sched, horizons))
        .map(|r| KnownSegment {
            owner: r.owner,
            decision_index: r.decision_index,
            decided_at: r.time,
            plan: r.plan.clone(),
        })
        .collect();
    KnowledgeSet {
        holder,
        time: k,
        segments,
    }
}

/// Everything fixed about a game except the run controls.
#[derive(Debug, Clone)]
pub struct GameConfig {
    pub graph: Graph,
    pub weights: WeightMatrix,
    pub initial_state: Vec<f64>,
    pub attacker: AttackerEnergy,
    pub defender: DefenderEnergy,
    pub cost_model: CostModel,
    pub utility: UtilityWeights,
    pub horizons: ByPlayer<usize>,
    pub periods: ByPlayer<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Maximum number of steps `K`.
    pub steps: usize,
    /// A step "moves" if some state changes by more than this.
    pub settle_tol: f64,
    /// Stop once this many consecutive steps did not move while both players
    /// spent within their supply; 0 never stops early.
    pub settle_steps: usize,
    /// Per-decision subgame cap.
    pub work_bound: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            steps: 500,
            settle_tol: 1e-9,
            settle_steps: 10,
            work_bound: DEFAULT_WORK_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub k: usize,
    pub attack: AttackAction,
    pub planned_recovery: EdgeMask,
    /// Planned recoveries that hit normally jammed edges.
    pub effective_recovery: EdgeMask,
    pub resolved: EdgeMask,
    /// States after the update of step `k`.
    pub state: Vec<f64>,
    pub attacker_cost: f64,
    pub defender_cost: f64,
    pub defender_waste: f64,
    /// Ledgers after step `k` is charged.
    pub attacker: EnergyLedger,
    pub defender: EnergyLedger,
    pub state_difference: f64,
    pub group_index: i64,
    /// Attacker payoff of the step.
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub graph: Graph,
    pub initial_state: Vec<f64>,
    pub steps: Vec<TraceStep>,
    pub decisions: Vec<DecisionRecord>,
    /// Stopped because the states stopped moving.
    pub settled: bool,
}

impl Trace {
    pub fn final_state(&self) -> &[f64] {
        self.steps.last().map_or(&self.initial_state, |s| &s.state)
    }
}

fn validate(cfg: &GameConfig, opts: &RunOptions) -> Result<()> {
    if cfg.initial_state.len() != cfg.graph.n() {
        return Err(GameError::InvalidInput(format!(
            "{} initial states for {} agents",
            cfg.initial_state.len(),
            cfg.graph.n()
        )));
    }
    if !cfg.initial_state.iter().all(|v| v.is_finite()) {
        return Err(GameError::InvalidInput(
            "initial states must be finite".into(),
        ));
    }
    cfg.attacker.validate(cfg.cost_model.target)?;
    cfg.defender.validate()?;
    cfg.utility.validate()?;
    if opts.steps == 0 {
        return Err(GameError::InvalidInput(
            "run length must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Runs the rolling-horizon game for at most `opts.steps` steps.
pub fn run(cfg: &GameConfig, opts: &RunOptions) -> Result<Trace> {
    run_observed(cfg, opts, |_, _, _| {})
}

/// As [`run`], handing every decision's context and result to `observe`.
pub fn run_observed<F>(cfg: &GameConfig, opts: &RunOptions, mut observe: F) -> Result<Trace>
where
    F: FnMut(&SolveContext, Player, &Decision),
{
    validate(cfg, opts)?;
    let sched = Schedule::from_periods(cfg.periods)?;
    let g = &cfg.graph;
    let mut x = cfg.initial_state.clone();
    let (mut led_a, mut led_d) = (EnergyLedger::default(), EnergyLedger::default());
    let mut history: Vec<DecisionRecord> = Vec::new();
    let mut current: BTreeMap<Player, usize> = BTreeMap::new();
    let mut steps = Vec::new();
    let mut quiet = 0;
    let mut settled = false;

    for k in 0..opts.steps {
        let context = |mover: Player,
                       history: &[DecisionRecord],
                       current: &BTreeMap<Player, usize>,
                       observed: Option<AttackAction>| {
            let mut ctx = SolveContext {
                graph: g.clone(),
                weights: cfg.weights.clone(),
                state: x.clone(),
                time: k,
                attacker: cfg.attacker,
                defender: cfg.defender,
                attacker_spent: led_a.spent,
                defender_spent: led_d.spent,
                cost_model: cfg.cost_model,
                horizons: cfg.horizons,
                periods: cfg.periods,
                utility: cfg.utility,
                known_attacks: BTreeMap::new(),
                known_defenses: BTreeMap::new(),
            };
            if let Some(a) = observed {
                ctx.known_attacks.insert(k, a);
            }
            let opp = mover.opponent();
            if let Some(&idx) = current.get(&opp) {
                let rec = &history[idx];
                if rec.time < k && plan_is_known(mover, rec.time, history, &sched, cfg.horizons) {
                    let last = rec.time + sched.period(opp) - 1;
                    for t in k..=last {
                        let step = t - rec.time;
                        match opp {
                            Player::Attacker => {
                                if let Some(a) = rec.plan.attack_at(step) {
                                    ctx.known_attacks.entry(t).or_insert(a);
                                }
                            }
                            Player::Defender => {
                                if let Some(d) = rec.plan.defense_at(step) {
                                    ctx.known_defenses.insert(t, d);
                                }
                            }
                        }
                    }
                }
            }
            ctx
        };

        if sched.decides(Player::Attacker, k) {
            let ctx = context(Player::Attacker, &history, &current, None);
            let dec = solve_decision_bounded(&ctx, Player::Attacker, opts.work_bound)?;
            observe(&ctx, Player::Attacker, &dec);
            history.push(DecisionRecord {
                owner: Player::Attacker,
                decision_index: dec.plan.decision_index,
                time: k,
                plan: dec.plan,
                utility: dec.utility,
                explored: dec.explored,
            });
            current.insert(Player::Attacker, history.len() - 1);
        }
        let attack = applied(&history, &current, Player::Attacker, k)?
            .attack_at(k - history[current[&Player::Attacker]].time)
            .ok_or_else(|| GameError::Internal("attacker plan is not an attack plan".into()))?;

        if sched.decides(Player::Defender, k) {
            let ctx = context(Player::Defender, &history, &current, Some(attack));
            let dec = solve_decision_bounded(&ctx, Player::Defender, opts.work_bound)?;
            observe(&ctx, Player::Defender, &dec);
            history.push(DecisionRecord {
                owner: Player::Defender,
                decision_index: dec.plan.decision_index,
                time: k,
                plan: dec.plan,
                utility: dec.utility,
                explored: dec.explored,
            });
            current.insert(Player::Defender, history.len() - 1);
        }
        let defense: DefenseAction = applied(&history, &current, Player::Defender, k)?
            .defense_at(k - history[current[&Player::Defender]].time)
            .ok_or_else(|| GameError::Internal("defender plan is not a recovery plan".into()))?;

        let effective = defense.recover & attack.normal;
        let attacker_cost = attack.cost(&cfg.cost_model, &cfg.attacker);
        let (defender_cost, defender_waste) = defense_cost_counts(
            defense.count(),
            effective.count_ones() as usize,
            &cfg.cost_model,
            &cfg.defender,
        );
        led_a.commit(&cfg.attacker.budget, k, attacker_cost, 0.0)?;
        led_d.commit(&cfg.defender.budget, k, defender_cost, defender_waste)?;

        let resolved = resolved_mask(g.full_mask(), attack.strong, attack.normal, defense.recover);
        let next = step_masked(&x, g, resolved, &cfg.weights);
        let group_index = g.group_index_of(resolved);
        let moved = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        steps.push(TraceStep {
            k,
            attack,
            planned_recovery: defense.recover,
            effective_recovery: effective,
            resolved,
            payoff: step_payoff(&next, group_index, &cfg.utility),
            state_difference: state_difference(&next),
            state: next.clone(),
            attacker_cost,
            defender_cost,
            defender_waste,
            attacker: led_a,
            defender: led_d,
            group_index,
        });
        x = next;

        quiet = if moved <= opts.settle_tol {
            quiet + 1
        } else {
            0
        };
        if opts.settle_steps > 0
            && quiet >= opts.settle_steps
            && sustainable(&steps, opts.settle_steps, cfg)
        {
            settled = true;
            break;
        }
    }

    Ok(Trace {
        graph: g.clone(),
        initial_state: cfg.initial_state.clone(),
        steps,
        decisions: history,
        settled,
    })
}

/// Whether both players' spend over the last `window` steps stays within
/// their supply; a quiet stretch paid from stored energy is not a steady state.
fn sustainable(steps: &[TraceStep], window: usize, cfg: &GameConfig) -> bool {
    // the first step may draw on the initial store, so it never counts
    let Some(start) = steps.len().checked_sub(window + 1) else {
        return false;
    };
    let (before, last) = (&steps[start], &steps[steps.len() - 1]);
    let spent = |f: fn(&TraceStep) -> f64| f(last) - f(before);
    spent(|s| s.attacker.spent) <= cfg.attacker.budget.rho * window as f64 + BUDGET_EPS
        && spent(|s| s.defender.spent) <= cfg.defender.budget.rho * window as f64 + BUDGET_EPS
}

/// Plan of `p` governing step `k`; only steps before the owner's next
/// decision are ever read.
fn applied<'h>(
    history: &'h [DecisionRecord],
    current: &BTreeMap<Player, usize>,
    p: Player,
    k: usize,
) -> Result<&'h Plan> {
    let rec = current
        .get(&p)
        .map(|&i| &history[i])
        .ok_or_else(|| GameError::Internal(format!("{p} has no plan at k={k}")))?;
    if k - rec.time >= rec.plan.len() {
        return Err(GameError::Internal(format!(
            "{p} plan from k={} exhausted at k={k}",
            rec.time
        )));
    }
    Ok(&rec.plan)
}
