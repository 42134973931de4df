//! Consensus dynamics over a (time-varying) communication graph.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::network::{EdgeMask, Graph, Partition};

/// Agent states `x_1..x_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GameError::InvalidInput(format!(
                "state entry {} is not finite",
                i + 1
            )));
        }
        Ok(StateVector(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn spread(&self) -> f64 {
        let max = self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.0.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.0.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Symmetric consensus weights `a_ij`, supported on the base graph's edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    a: Vec<f64>,
}

impl WeightMatrix {
    /// Same weight on every edge of `g`.
    pub fn uniform(g: &Graph, weight: f64) -> Result<Self> {
        let n = g.n();
        let mut a = vec![0.0; n * n];
        for &(i, j) in g.edges() {
            a[(i - 1) * n + (j - 1)] = weight;
            a[(j - 1) * n + (i - 1)] = weight;
        }
        let w = WeightMatrix { n, a };
        w.validate(g)?;
        Ok(w)
    }

    /// `a_ij = 1/n` on the edges of `g`.
    pub fn default_for(g: &Graph) -> Self {
        Self::uniform(g, 1.0 / g.n() as f64).expect("1/n weights are always valid")
    }

    /// Explicit row-major `n × n` matrix.
    pub fn from_rows(g: &Graph, rows: &[Vec<f64>]) -> Result<Self> {
        let n = g.n();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(GameError::InvalidInput(format!(
                "weight matrix must be {n} x {n}"
            )));
        }
        let w = WeightMatrix {
            n,
            a: rows.iter().flatten().copied().collect(),
        };
        w.validate(g)?;
        Ok(w)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight between agents `i` and `j` (1-indexed).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i - 1) * self.n + (j - 1)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    fn validate(&self, g: &Graph) -> Result<()> {
        let n = self.n;
        for i in 1..=n {
            let mut row = 0.0;
            for j in 1..=n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(GameError::InvalidInput(format!(
                        "weight a_{i}{j} = {v} must be finite and nonnegative"
                    )));
                }
                if i == j && v != 0.0 {
                    return Err(GameError::InvalidInput(format!(
                        "diagonal weight a_{i}{i} must be 0"
                    )));
                }
                if v != self.get(j, i) {
                    return Err(GameError::InvalidInput(format!(
                        "weights a_{i}{j} and a_{j}{i} differ"
                    )));
                }
                if i != j && v > 0.0 && !g.has_edge(i, j) {
                    return Err(GameError::InvalidInput(format!(
                        "weight a_{i}{j} > 0 but ({i}, {j}) is not an edge"
                    )));
                }
                if i != j && v == 0.0 && g.has_edge(i, j) {
                    return Err(GameError::InvalidInput(format!(
                        "edge ({i}, {j}) needs a positive weight"
                    )));
                }
                row += v;
            }
            if row >= 1.0 {
                return Err(GameError::InvalidInput(format!(
                    "weights of agent {i} sum to {row}, must be < 1"
                )));
            }
        }
        Ok(())
    }
}

/// One consensus update over the resolved graph `g`.
pub fn consensus_step(x: &StateVector, g: &Graph, w: &WeightMatrix) -> Result<StateVector> {
    if x.len() != g.n() || w.n() != g.n() {
        return Err(GameError::InvalidInput(format!(
            "dimension mismatch: {} states, {} agents, {}x{} weights",
            x.len(),
            g.n(),
            w.n(),
            w.n()
        )));
    }
    Ok(StateVector(step_over(x, g.edges().iter().copied(), w)))
}

/// Consensus update over the edges of `base` selected by `mask`.
pub fn step_masked(x: &[f64], base: &Graph, mask: EdgeMask, w: &WeightMatrix) -> Vec<f64> {
    step_over(
        x,
        base.edges()
            .iter()
            .enumerate()
            .filter(|(idx, _)| mask >> idx & 1 == 1)
            .map(|(_, &e)| e),
        w,
    )
}

fn step_over(x: &[f64], edges: impl Iterator<Item = (usize, usize)>, w: &WeightMatrix) -> Vec<f64> {
    let mut delta = vec![0.0; x.len()];
    // Canonical edge order visits each agent's neighbors in ascending label order.
    for (i, j) in edges {
        let a = w.get(i, j);
        delta[i - 1] += a * (x[j - 1] - x[i - 1]);
        delta[j - 1] += a * (x[i - 1] - x[j - 1]);
    }
    x.iter().zip(delta).map(|(v, d)| v + d).collect()
}

/// `x^T L_c x = Σ_{i<j} (x_i − x_j)²`.
pub fn state_difference(x: &[f64]) -> f64 {
    let mut z = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let d = x[i] - x[j];
            z += d * d;
        }
    }
    z
}

/// Single-linkage grouping of agents whose sorted states are within `tol`.
pub fn detect_clusters(x: &[f64], tol: f64) -> Partition {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last = f64::NAN;
    for idx in order {
        if groups.is_empty() || x[idx] - last > tol {
            groups.push(Vec::new());
        }
        groups.last_mut().unwrap().push(idx + 1);
        last = x[idx];
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    Partition { groups }
}
