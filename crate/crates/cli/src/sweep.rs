//! Parameter grids over a base scenario.

use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};

use rhgame::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKey {
    HA,
    HD,
    TA,
    TD,
    RhoA,
    RhoD,
}

impl SweepKey {
    pub fn name(self) -> &'static str {
        match self {
            SweepKey::HA => "h_a",
            SweepKey::HD => "h_d",
            SweepKey::TA => "t_a",
            SweepKey::TD => "t_d",
            SweepKey::RhoA => "rho_a",
            SweepKey::RhoD => "rho_d",
        }
    }

    /// Sets the parameter. A supply rate above the initial energy raises
    /// the initial energy to match.
    pub fn apply(self, s: &mut Scenario, value: f64) -> Result<()> {
        let count = || -> Result<usize> {
            if value.fract() != 0.0 || value < 0.0 {
                bail!("{} takes whole numbers, got {value}", self.name());
            }
            Ok(value as usize)
        };
        match self {
            SweepKey::HA => s.horizons.attacker = count()?,
            SweepKey::HD => s.horizons.defender = count()?,
            SweepKey::TA => s.periods.attacker = count()?,
            SweepKey::TD => s.periods.defender = count()?,
            SweepKey::RhoA => {
                s.attacker.budget.rho = value;
                s.attacker.budget.kappa = s.attacker.budget.kappa.max(value);
            }
            SweepKey::RhoD => {
                s.defender.budget.rho = value;
                s.defender.budget.kappa = s.defender.budget.kappa.max(value);
            }
        }
        Ok(())
    }
}

impl FromStr for SweepKey {
    type Err = anyhow::Error;

    fn from_str(text: &str) -> Result<Self> {
        [
            SweepKey::HA,
            SweepKey::HD,
            SweepKey::TA,
            SweepKey::TD,
            SweepKey::RhoA,
            SweepKey::RhoD,
        ]
        .into_iter()
        .find(|k| k.name() == text)
        .ok_or_else(|| {
            anyhow!("unknown sweep key {text:?} (use h_a, h_d, t_a, t_d, rho_a or rho_d)")
        })
    }
}

/// One `--set key=v1,v2,...` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: SweepKey,
    pub values: Vec<f64>,
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(text: &str) -> Result<Self> {
        let (key, values) = text
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=v1,v2,... but got {text:?}"))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| anyhow!("{key}: bad value {v:?}: {e}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Axis {
            key: key.trim().parse()?,
            values,
        })
    }
}

/// Cartesian product of the axes, first axis varying slowest. An empty grid
/// has one point with no overrides.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<(SweepKey, f64)>> {
    axes.iter().fold(vec![Vec::new()], |points, axis| {
        points
            .iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&v| {
                    let mut next = p.clone();
                    next.push((axis.key, v));
                    next
                })
            })
            .collect()
    })
}
