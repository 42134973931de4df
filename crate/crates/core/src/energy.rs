//! Energy budgets and spend accounting for the attacker and the defender.
//!
//! Both players receive `kappa` up front and `rho` per time step, so the
//! cumulative spend through step `k` may not exceed `kappa + rho * k`.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// Slack for budget comparisons; every cost in practice is a small multiple
/// of a binary fraction, so this only absorbs representation noise.
pub const BUDGET_EPS: f64 = 1e-9;

/// Linear budget line `kappa + rho * k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub kappa: f64,
    pub rho: f64,
}

impl Budget {
    pub fn at(&self, k: usize) -> f64 {
        self.kappa + self.rho * k as f64
    }

    fn validate(&self, who: &str) -> Result<()> {
        if !(self.rho > 0.0 && self.kappa >= self.rho && self.kappa.is_finite()) {
            return Err(GameError::InvalidInput(format!(
                "{who} energy needs kappa >= rho > 0 (got kappa={}, rho={})",
                self.kappa, self.rho
            )));
        }
        Ok(())
    }
}

/// Cumulative budget available through time step `k`.
pub fn budget_at(b: &Budget, k: usize) -> f64 {
    b.at(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "AttackerLiteral", into = "AttackerLiteral")]
pub struct AttackerEnergy {
    pub budget: Budget,
    /// Cost per normally jammed edge per step.
    pub beta_normal: f64,
    /// Cost per strongly jammed edge per step.
    pub beta_strong: f64,
    /// Node-attack costs; required when attacking nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_node_normal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_node_strong: Option<f64>,
}

impl AttackerEnergy {
    pub fn new(kappa: f64, rho: f64, beta_normal: f64, beta_strong: f64) -> Self {
        AttackerEnergy {
            budget: Budget { kappa, rho },
            beta_normal,
            beta_strong,
            beta_node_normal: None,
            beta_node_strong: None,
        }
    }

    pub fn with_node_costs(mut self, normal: f64, strong: f64) -> Self {
        self.beta_node_normal = Some(normal);
        self.beta_node_strong = Some(strong);
        self
    }

    /// `(normal, strong)` unit costs for the given attack target.
    pub fn unit_costs(&self, target: AttackTarget) -> (f64, f64) {
        match target {
            AttackTarget::Edge => (self.beta_normal, self.beta_strong),
            AttackTarget::Node => (
                self.beta_node_normal.unwrap_or(self.beta_normal),
                self.beta_node_strong.unwrap_or(self.beta_strong),
            ),
        }
    }

    pub fn validate(&self, target: AttackTarget) -> Result<()> {
        self.budget.validate("attacker")?;
        let check = |normal: f64, strong: f64, what: &str| {
            if !(normal > 0.0 && strong > normal && strong.is_finite()) {
                Err(GameError::InvalidInput(format!(
                    "attacker {what} costs need beta_strong > beta_normal > 0 (got {strong}, {normal})"
                )))
            } else {
                Ok(())
            }
        };
        check(self.beta_normal, self.beta_strong, "edge")?;
        if target == AttackTarget::Node {
            match (self.beta_node_normal, self.beta_node_strong) {
                (Some(n), Some(s)) => check(n, s, "node")?,
                _ => {
                    return Err(GameError::InvalidInput(
                        "node attacks need beta_node_normal and beta_node_strong".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "DefenderLiteral", into = "DefenderLiteral")]
pub struct DefenderEnergy {
    pub budget: Budget,
    /// Cost per recovered edge per step.
    pub beta_recover: f64,
}

impl DefenderEnergy {
    pub fn new(kappa: f64, rho: f64, beta_recover: f64) -> Self {
        DefenderEnergy {
            budget: Budget { kappa, rho },
            beta_recover,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate("defender")?;
        if !(self.beta_recover > 0.0 && self.beta_recover.is_finite()) {
            return Err(GameError::InvalidInput(
                "defender needs beta_recover > 0".into(),
            ));
        }
        Ok(())
    }
}

/// On-disk attacker table: the budget fields sit beside the costs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackerLiteral {
    kappa: f64,
    rho: f64,
    beta_normal: f64,
    beta_strong: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_node_normal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_node_strong: Option<f64>,
}

impl From<AttackerLiteral> for AttackerEnergy {
    fn from(l: AttackerLiteral) -> Self {
        AttackerEnergy {
            budget: Budget {
                kappa: l.kappa,
                rho: l.rho,
            },
            beta_normal: l.beta_normal,
            beta_strong: l.beta_strong,
            beta_node_normal: l.beta_node_normal,
            beta_node_strong: l.beta_node_strong,
        }
    }
}

impl From<AttackerEnergy> for AttackerLiteral {
    fn from(e: AttackerEnergy) -> Self {
        AttackerLiteral {
            kappa: e.budget.kappa,
            rho: e.budget.rho,
            beta_normal: e.beta_normal,
            beta_strong: e.beta_strong,
            beta_node_normal: e.beta_node_normal,
            beta_node_strong: e.beta_node_strong,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefenderLiteral {
    kappa: f64,
    rho: f64,
    beta_recover: f64,
}

impl From<DefenderLiteral> for DefenderEnergy {
    fn from(l: DefenderLiteral) -> Self {
        DefenderEnergy::new(l.kappa, l.rho, l.beta_recover)
    }
}

impl From<DefenderEnergy> for DefenderLiteral {
    fn from(e: DefenderEnergy) -> Self {
        DefenderLiteral {
            kappa: e.budget.kappa,
            rho: e.budget.rho,
            beta_recover: e.beta_recover,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttackTarget {
    /// Jam individual edges.
    #[default]
    Edge,
    /// Jam every edge adjacent to the chosen agents.
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WasteMode {
    /// Recoveries that restore nothing are still paid for.
    #[default]
    Charged,
    /// Only recoveries of normally jammed edges are paid for.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default)]
    pub target: AttackTarget,
    #[serde(default)]
    pub waste: WasteMode,
}

/// Energy for one attack step: `beta_strong·|strong| + beta_normal·|normal|`.
///
/// Members are edges in edge mode and agents in node mode.
pub fn attack_cost<T: PartialEq>(
    strong: &[T],
    normal: &[T],
    cm: &CostModel,
    p: &AttackerEnergy,
) -> Result<f64> {
    if strong.iter().any(|s| normal.contains(s)) {
        return Err(GameError::InvalidAction(
            "an attack target is jammed both strongly and normally".into(),
        ));
    }
    Ok(attack_cost_counts(strong.len(), normal.len(), cm, p))
}

pub fn attack_cost_counts(strong: usize, normal: usize, cm: &CostModel, p: &AttackerEnergy) -> f64 {
    let (bn, bs) = p.unit_costs(cm.target);
    bs * strong as f64 + bn * normal as f64
}

/// `(cost, waste)` for one recovery step given the normally jammed edges.
pub fn defense_cost<T: PartialEq>(
    recover: &[T],
    attacked_normal: &[T],
    cm: &CostModel,
    p: &DefenderEnergy,
) -> (f64, f64) {
    let effective = recover
        .iter()
        .filter(|e| attacked_normal.contains(e))
        .count();
    defense_cost_counts(recover.len(), effective, cm, p)
}

pub fn defense_cost_counts(
    recovered: usize,
    effective: usize,
    cm: &CostModel,
    p: &DefenderEnergy,
) -> (f64, f64) {
    match cm.waste {
        WasteMode::Charged => (
            p.beta_recover * recovered as f64,
            p.beta_recover * (recovered - effective) as f64,
        ),
        WasteMode::Free => (p.beta_recover * effective as f64, 0.0),
    }
}

/// Cumulative spend of one player.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub spent: f64,
    pub wasted: f64,
}

impl EnergyLedger {
    /// Records the spend of step `k`, failing if the budget line is crossed.
    pub fn commit(&mut self, budget: &Budget, k: usize, cost: f64, waste: f64) -> Result<()> {
        let spent = self.spent + cost;
        if spent > budget.at(k) + BUDGET_EPS {
            return Err(GameError::BudgetViolation(format!(
                "spend {spent} exceeds budget {} at k={k}",
                budget.at(k)
            )));
        }
        self.spent = spent;
        self.wasted += waste;
        Ok(())
    }

    pub fn remaining(&self, budget: &Budget, k: usize) -> f64 {
        budget.at(k) - self.spent
    }
}

/// Whether a sequence of per-step costs starting at `k_start` keeps every
/// prefix under the budget line.
pub fn feasible_plan(
    ledger: &EnergyLedger,
    budget: &Budget,
    per_step_costs: &[f64],
    k_start: usize,
) -> bool {
    let mut spent = ledger.spent;
    per_step_costs.iter().enumerate().all(|(m, c)| {
        spent += c;
        spent <= budget.at(k_start + m) + BUDGET_EPS
    })
}

/// Whether a step costing `cost` fits given `spent` so far at time `k`.
#[inline]
pub fn affordable(spent: f64, cost: f64, budget: &Budget, k: usize) -> bool {
    spent + cost <= budget.at(k) + BUDGET_EPS
}
