use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvaluationOutcome, ProblemError, Result, Violation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PMedianInstance {
    pub p: usize,
    /// Symmetric shortest-path distances with a zero diagonal.
    pub distances: Vec<Vec<f64>>,
}

impl PMedianInstance {
    pub fn new(p: usize, distances: Vec<Vec<f64>>) -> Result<Self> {
        let inst = Self { p, distances };
        inst.validate()?;
        Ok(inst)
    }

    pub(super) fn from_json(data: Value) -> Result<Self> {
        let inst: Self = serde_json::from_value(data)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn n_vertices(&self) -> usize {
        self.distances.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vertices();
        if self.p == 0 || self.p > n {
            return Err(ProblemError::Invalid(format!("need 1 <= p <= n, got p={} n={n}", self.p)));
        }
        for (i, row) in self.distances.iter().enumerate() {
            if row.len() != n {
                return Err(ProblemError::Invalid(format!("distance row {i} has {} entries", row.len())));
            }
            if row[i] != 0.0 {
                return Err(ProblemError::Invalid(format!("distance[{i}][{i}] must be 0")));
            }
            for (j, &d) in row.iter().enumerate() {
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(ProblemError::Invalid(format!("distance[{i}][{j}] = {d}")));
                }
                if d != self.distances[j][i] {
                    return Err(ProblemError::Invalid(format!("distance matrix asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

/// Sum over vertices of the distance to the closest of `medians`, with no cardinality check.
///
/// Indices must be in range and `medians` nonempty.
pub fn assignment_cost(inst: &PMedianInstance, medians: &[usize]) -> f64 {
    inst.distances
        .iter()
        .map(|row| medians.iter().map(|&m| row[m]).fold(f64::INFINITY, f64::min))
        .sum()
}

pub fn evaluate_pmedian(inst: &PMedianInstance, medians: &[usize]) -> EvaluationOutcome {
    let n = inst.n_vertices();
    if let Some(&bad) = medians.iter().find(|&&m| m >= n) {
        return EvaluationOutcome::Infeasible { violation: Violation::IndexOutOfRange { index: bad } };
    }
    let mut chosen = vec![false; n];
    let distinct = medians.iter().filter(|&&m| !std::mem::replace(&mut chosen[m], true)).count();
    if distinct != inst.p || medians.len() != inst.p {
        return EvaluationOutcome::Infeasible {
            violation: Violation::Cardinality { expected: inst.p, got: distinct },
        };
    }
    EvaluationOutcome::Feasible { objective: assignment_cost(inst, medians) }
}
