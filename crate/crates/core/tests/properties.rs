//! Module invariants checked against independent oracles.

use proptest::prelude::*;

use rhgame::analysis::{check_conditions, theta_vector, THETA_WORK_BOUND};
use rhgame::dynamics::{
    consensus_step, detect_clusters, state_difference, step_masked, StateVector, WeightMatrix,
};
use rhgame::energy::{
    attack_cost, defense_cost, feasible_plan, AttackTarget, AttackerEnergy, Budget, CostModel,
    DefenderEnergy, EnergyLedger, WasteMode,
};
use rhgame::game::{
    tie_break, AttackAction, ByPlayer, DefenseAction, PlanSteps, Player, UtilityWeights,
};
use rhgame::network::{
    agent_group_index, apply_actions, components, edge_connectivity, group_count, is_connected,
    Edge, Graph,
};
use rhgame::rolling::{run, GameConfig, RunOptions, Schedule};

const CASES: u32 = 256;

fn all_pairs(n: usize) -> Vec<Edge> {
    (1..=n)
        .flat_map(|i| (i + 1..=n).map(move |j| (i, j)))
        .collect()
}

fn graph_from_bits(n: usize, bits: u64) -> Graph {
    let chosen = all_pairs(n)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| bits >> i & 1 == 1)
        .map(|(_, e)| e);
    Graph::from_pairs(n, chosen).unwrap()
}

fn any_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n, any::<u64>()).prop_map(|(n, bits)| graph_from_bits(n, bits))
}

fn connected_graph(max_n: usize, max_edges: usize) -> impl Strategy<Value = Graph> {
    (3..=max_n, any::<u64>()).prop_filter_map("connected and small", move |(n, bits)| {
        let g = graph_from_bits(n, bits);
        (is_connected(&g) && g.edge_count() <= max_edges).then_some(g)
    })
}

/// Component count by repeated flood fill over an edge list.
fn oracle_groups(n: usize, edges: &[Edge]) -> usize {
    let mut seen = vec![false; n + 1];
    let mut groups = 0;
    for start in 1..=n {
        if seen[start] {
            continue;
        }
        groups += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in edges {
                let other = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
    }
    groups
}

/// Smallest edge subset whose removal disconnects the graph.
fn oracle_edge_connectivity(g: &Graph) -> usize {
    let edges = g.edges();
    let m = edges.len();
    (0u32..1 << m)
        .filter(|set| {
            let kept: Vec<Edge> = (0..m)
                .filter(|i| set >> i & 1 == 0)
                .map(|i| edges[i])
                .collect();
            oracle_groups(g.n(), &kept) > 1
        })
        .map(|set| set.count_ones() as usize)
        .min()
        .unwrap_or(m)
}

/// `Σ_i Σ_j (x_i − x_j)²` over ordered pairs halved.
fn oracle_z(x: &[f64]) -> f64 {
    let mut z = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            z += (x[i] - x[j]).powi(2);
        }
    }
    z
}

/// `x_i + Σ_{j∈N_i} a_ij (x_j − x_i)` evaluated edge by edge.
fn oracle_step(x: &[f64], edges: &[Edge], a: f64) -> Vec<f64> {
    let mut next = x.to_vec();
    for &(i, j) in edges {
        next[i - 1] += a * (x[j - 1] - x[i - 1]);
        next[j - 1] += a * (x[i - 1] - x[j - 1]);
    }
    next
}

fn states(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn group_index_sign_and_component_consistency(g in any_graph(7)) {
        let c = agent_group_index(&g);
        prop_assert!(c <= 0);
        prop_assert_eq!(c == 0, group_count(&g) == 1);
        prop_assert_eq!(group_count(&g), oracle_groups(g.n(), g.edges()));
        let sizes: i64 = components(&g).groups.iter().map(|p| (p.len() * p.len()) as i64).sum();
        prop_assert_eq!(c, sizes - (g.n() * g.n()) as i64);
    }

    #[test]
    fn removing_an_edge_never_merges_groups(g in any_graph(7), pick in any::<prop::sample::Index>()) {
        prop_assume!(g.edge_count() > 0);
        let drop = pick.index(g.edge_count());
        let smaller = g.restrict(g.full_mask() & !(1 << drop));
        prop_assert!(group_count(&smaller) >= group_count(&g));
        prop_assert!(agent_group_index(&smaller) <= agent_group_index(&g));
    }

    #[test]
    fn resolved_edges_are_survivors_or_effective_recoveries(
        g in any_graph(5), s in any::<u64>(), n in any::<u64>(), r in any::<u64>()
    ) {
        let strong = g.edges_in(s & g.full_mask());
        let normal: Vec<Edge> = g.edges_in(n & g.full_mask()).into_iter().filter(|e| !strong.contains(e)).collect();
        let recover = g.edges_in(r & g.full_mask());
        let (attacked, resolved) = apply_actions(&g, &strong, &normal, &recover).unwrap();
        for e in g.edges() {
            let expect_attacked = !strong.contains(e) && !normal.contains(e);
            let expect_resolved = expect_attacked || (normal.contains(e) && recover.contains(e));
            prop_assert_eq!(attacked.has_edge(e.0, e.1), expect_attacked);
            prop_assert_eq!(resolved.has_edge(e.0, e.1), expect_resolved);
        }
    }

    #[test]
    fn edge_connectivity_matches_exhaustive_cuts(g in connected_graph(5, 8)) {
        prop_assert_eq!(edge_connectivity(&g).unwrap(), oracle_edge_connectivity(&g));
    }

    #[test]
    fn consensus_step_matches_direct_update(g in any_graph(6), xs in states(6), a in 0.01f64..0.16) {
        let x = &xs[..g.n()];
        let w = WeightMatrix::uniform(&g, a).unwrap();
        let next = consensus_step(&StateVector::new(x.to_vec()).unwrap(), &g, &w).unwrap().into_inner();
        let expect = oracle_step(x, g.edges(), a);
        for (u, v) in next.iter().zip(&expect) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        prop_assert_eq!(step_masked(x, &g, g.full_mask(), &w), next);
    }

    #[test]
    fn state_difference_matches_pairwise_sum(xs in prop::collection::vec(-10.0f64..10.0, 1..8)) {
        let z = state_difference(&xs);
        prop_assert!((z - oracle_z(&xs)).abs() <= 1e-9 * (1.0 + z));
    }

    #[test]
    fn consensus_step_never_raises_state_difference(g in any_graph(6), xs in states(6)) {
        let x = &xs[..g.n()];
        let w = WeightMatrix::default_for(&g);
        let next = step_masked(x, &g, g.full_mask(), &w);
        prop_assert!(state_difference(&next) <= state_difference(x) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn symmetric_weights_preserve_the_average(g in any_graph(6), xs in states(6)) {
        let x = &xs[..g.n()];
        let w = WeightMatrix::default_for(&g);
        let next = step_masked(x, &g, g.full_mask(), &w);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((mean(&next) - mean(x)).abs() <= 1e-12 * (1.0 + mean(x).abs()) * g.n() as f64);
    }

    #[test]
    fn clusters_follow_agent_relabelling(
        (xs, order) in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 0.5000001, 3.0, 7.0]), 1..7)
            .prop_flat_map(|xs| {
                let labels: Vec<usize> = (0..xs.len()).collect();
                (Just(xs), Just(labels).prop_shuffle())
            }),
    ) {
        let permuted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
        let relabel = |p: rhgame::network::Partition| {
            let mut groups: Vec<Vec<usize>> =
                p.groups.into_iter().map(|g| { let mut v: Vec<usize> = g.into_iter().map(|i| order[i - 1] + 1).collect(); v.sort(); v }).collect();
            groups.sort();
            groups
        };
        let mut direct = detect_clusters(&xs, 1e-6).groups;
        direct.sort();
        prop_assert_eq!(relabel(detect_clusters(&permuted, 1e-6)), direct);
    }

    #[test]
    fn costs_add_over_disjoint_sets(
        split in any::<u64>(), s in any::<u64>(), n in any::<u64>(), r in any::<u64>(), free in any::<bool>()
    ) {
        let g = Graph::complete(4);
        let full = g.full_mask();
        let (s, n) = (s & full, n & full & !(s & full));
        let p = AttackerEnergy::new(5.0, 5.0, 1.0, 2.5);
        let d = DefenderEnergy::new(5.0, 5.0, 0.75);
        let cm = CostModel { target: AttackTarget::Edge, waste: if free { WasteMode::Free } else { WasteMode::Charged } };
        let cost = |s: u64, n: u64| attack_cost(&g.edges_in(s), &g.edges_in(n), &cm, &p).unwrap();
        let (left, right) = (split & full, !split & full);
        prop_assert!((cost(s, n) - cost(s & left, n & left) - cost(s & right, n & right)).abs() < 1e-12);
        let normal = g.edges_in(n);
        let rec = |r: u64| defense_cost(&g.edges_in(r), &normal, &cm, &d);
        let (whole, a, b) = (rec(r & full), rec(r & left), rec(r & right));
        prop_assert!((whole.0 - a.0 - b.0).abs() < 1e-12);
        prop_assert!((whole.1 - a.1 - b.1).abs() < 1e-12);
        prop_assert!(whole.1 >= 0.0 && whole.1 <= whole.0 + 1e-12);
        if free {
            prop_assert_eq!(whole.1, 0.0);
        }
    }

    #[test]
    fn trimming_a_feasible_plan_keeps_it_feasible(
        costs in prop::collection::vec(0.0f64..3.0, 1..6),
        trim in any::<prop::sample::Index>(),
        factor in 0.0f64..1.0,
        spent in 0.0f64..1.0,
        k in 0usize..4,
    ) {
        let budget = Budget { kappa: 1.5, rho: 1.5 };
        let ledger = EnergyLedger { spent, wasted: 0.0 };
        prop_assume!(feasible_plan(&ledger, &budget, &costs, k));
        let mut trimmed = costs.clone();
        let i = trim.index(costs.len());
        trimmed[i] *= factor;
        prop_assert!(feasible_plan(&ledger, &budget, &trimmed, k));
    }

    #[test]
    fn tie_break_ignores_candidate_order(
        picks in prop::collection::vec((any::<u8>(), any::<u8>()), 1..8),
        rotate in any::<prop::sample::Index>(),
        abundant in any::<bool>(),
    ) {
        let actions: Vec<AttackAction> = picks
            .iter()
            .map(|&(s, n)| {
                let s = u64::from(s & 0b1111);
                AttackAction::edges(s, u64::from(n & 0b1111) & !s).unwrap()
            })
            .collect();
        let mut shifted = actions.clone();
        shifted.rotate_left(rotate.index(actions.len()));
        let a = actions[tie_break(&actions, abundant).unwrap()];
        let b = shifted[tie_break(&shifted, abundant).unwrap()];
        prop_assert_eq!(a, b);
        let size = |x: &AttackAction| (x.strong | x.normal).count_ones();
        let best = actions.iter().map(size);
        let target = if abundant { best.max() } else { best.min() };
        prop_assert_eq!(Some(size(&a)), target);
    }

    #[test]
    fn defense_tie_break_is_extremal(masks in prop::collection::vec(0u64..16, 1..8), abundant in any::<bool>()) {
        let cands: Vec<DefenseAction> = masks.iter().map(|&recover| DefenseAction { recover }).collect();
        let chosen = cands[tie_break(&cands, abundant).unwrap()];
        let counts = cands.iter().map(DefenseAction::count);
        let target = if abundant { counts.max() } else { counts.min() };
        prop_assert_eq!(Some(chosen.count()), target);
    }

    #[test]
    fn recovering_under_a_full_normal_attack_never_helps_the_attacker(
        g in connected_graph(4, 6), xs in states(4), r in any::<u64>()
    ) {
        // every edge normally jammed: the resolved graph is exactly the recovered set
        let w = WeightMatrix::default_for(&g);
        let x = &xs[..g.n()];
        let recovered = step_masked(x, &g, r & g.full_mask(), &w);
        let idle = step_masked(x, &g, 0, &w);
        prop_assert!(state_difference(&idle) >= state_difference(&recovered) - 1e-12);
    }

    #[test]
    fn theta_matches_exhaustive_component_counts(g in connected_graph(5, 7)) {
        let theta = theta_vector(&g, AttackTarget::Edge, THETA_WORK_BOUND).unwrap();
        let m = g.edge_count();
        let edges = g.edges();
        let mut expect = vec![0; m];
        for set in 1u32..1 << m {
            let kept: Vec<Edge> = (0..m).filter(|i| set >> i & 1 == 0).map(|i| edges[i]).collect();
            let i = set.count_ones() as usize - 1;
            expect[i] = expect[i].max(oracle_groups(g.n(), &kept));
        }
        prop_assert_eq!(&theta.values, &expect);
        prop_assert_eq!(theta.values.last().copied(), Some(g.n()));
        prop_assert!(theta.values.iter().all(|&t| (1..=g.n()).contains(&t)));
    }

    #[test]
    fn full_split_implies_strong_necessity(
        g in connected_graph(5, 7), rho in 0.1f64..20.0, bn in 0.5f64..2.0, extra in 0.1f64..2.0
    ) {
        let attacker = AttackerEnergy::new(rho, rho, bn, bn + extra);
        let report = check_conditions(
            &g, &attacker, &DefenderEnergy::new(1.0, 1.0, 1.0),
            ByPlayer::new(1, 1), ByPlayer::new(1, 1),
            &UtilityWeights::default(), &CostModel::default(),
        ).unwrap();
        prop_assert!(report.lambda <= report.edge_count);
        prop_assert!(!report.sufficient_full_split || report.necessary_strong);
        prop_assert!(!report.necessary_strong || report.necessary_normal);
    }
}

fn small_config() -> impl Strategy<Value = GameConfig> {
    (
        connected_graph(3, 3),
        states(3),
        0.2f64..4.0,
        0.2f64..2.0,
        (1usize..=2, 1usize..=2, 1usize..=2, 1usize..=2),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(g, x, rho_a, rho_d, (ha, hd, ta, td), free, b)| {
            let (ha, hd) = if g.edge_count() == 3 {
                (1, 1)
            } else {
                (ha, hd)
            };
            GameConfig {
                weights: WeightMatrix::default_for(&g),
                initial_state: x,
                attacker: AttackerEnergy::new(rho_a, rho_a, 1.0, 2.0),
                defender: DefenderEnergy::new(rho_d, rho_d, 1.0),
                cost_model: CostModel {
                    target: AttackTarget::Edge,
                    waste: if free {
                        WasteMode::Free
                    } else {
                        WasteMode::Charged
                    },
                },
                utility: UtilityWeights {
                    a: 1.0,
                    b: if b { 1.0 } else { 0.0 },
                },
                horizons: ByPlayer::new(ha, hd),
                periods: ByPlayer::new(ta.min(ha), td.min(hd)),
                graph: g,
            }
        })
}

fn short_run() -> RunOptions {
    RunOptions {
        steps: 8,
        settle_steps: 0,
        ..RunOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn runs_are_reproducible_and_apply_only_plan_prefixes(cfg in small_config()) {
        let trace = run(&cfg, &short_run()).unwrap();
        prop_assert_eq!(&trace, &run(&cfg, &short_run()).unwrap());
        let sched = Schedule::from_periods(cfg.periods).unwrap();
        for st in &trace.steps {
            let t = sched.decided_at(Player::Attacker, st.k);
            let plan = trace
                .decisions
                .iter()
                .rfind(|d| d.owner == Player::Attacker && d.time == t)
                .expect("attacker decided");
            prop_assert!(st.k - t < cfg.periods.attacker);
            prop_assert_eq!(plan.plan.attack_at(st.k - t), Some(st.attack));
        }
        for d in &trace.decisions {
            let (h, is_attack) = match d.owner {
                Player::Attacker => (cfg.horizons.attacker, matches!(d.plan.steps, PlanSteps::Attack(_))),
                Player::Defender => (cfg.horizons.defender, matches!(d.plan.steps, PlanSteps::Defense(_))),
            };
            prop_assert_eq!(d.plan.len(), h);
            prop_assert!(is_attack);
        }
    }

    #[test]
    fn trace_steps_are_internally_consistent(cfg in small_config()) {
        let trace = run(&cfg, &short_run()).unwrap();
        let g = &cfg.graph;
        let mut x = cfg.initial_state.clone();
        let mut wasted = 0.0;
        for st in &trace.steps {
            prop_assert_eq!(st.effective_recovery, st.planned_recovery & st.attack.normal);
            let (_, resolved) = apply_actions(
                g,
                &g.edges_in(st.attack.strong),
                &g.edges_in(st.attack.normal),
                &g.edges_in(st.planned_recovery),
            ).unwrap();
            let recorded = g.restrict(st.resolved);
            prop_assert_eq!(resolved.edges(), recorded.edges());
            x = oracle_step(&x, resolved.edges(), 1.0 / g.n() as f64);
            for (u, v) in st.state.iter().zip(&x) {
                prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
            }
            prop_assert!(st.attacker.spent <= cfg.attacker.budget.at(st.k) + 1e-9);
            prop_assert!(st.defender.spent <= cfg.defender.budget.at(st.k) + 1e-9);
            wasted += st.defender_waste;
            prop_assert!((st.defender.wasted - wasted).abs() < 1e-9);
            prop_assert!(st.defender.wasted <= st.defender.spent + 1e-9);
            if cfg.cost_model.waste == WasteMode::Free {
                prop_assert_eq!(st.defender_waste, 0.0);
            }
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn free_recovery_answers_normal_jamming(mut cfg in small_config()) {
        // one-step defender window: its utility is −z of the next state
        cfg.utility = UtilityWeights { a: 1.0, b: 0.0 };
        cfg.cost_model.waste = WasteMode::Free;
        cfg.horizons.defender = 1;
        cfg.periods.defender = 1;
        let trace = run(&cfg, &short_run()).unwrap();
        let g = &cfg.graph;
        let mut x = cfg.initial_state.clone();
        let mut spent = 0.0;
        for st in &trace.steps {
            let a = st.attack;
            let z_of = |r: u64| {
                let kept = g.full_mask() & !(a.strong | a.normal) | (r & a.normal);
                oracle_z(&oracle_step(&x, &g.edges_in(kept), 1.0 / g.n() as f64))
            };
            let idle = z_of(0);
            let room = cfg.defender.budget.at(st.k) - spent;
            let improves = (1..=a.normal)
                .filter(|r| r & !a.normal == 0)
                .filter(|r| f64::from(r.count_ones()) * cfg.defender.beta_recover <= room + 1e-9)
                .any(|r| idle - z_of(r) > 2e-9 * idle + 2e-12);
            if improves {
                prop_assert!(st.planned_recovery & a.normal != 0, "k={}", st.k);
            }
            spent = st.defender.spent;
            x = st.state.clone();
        }
    }
}
