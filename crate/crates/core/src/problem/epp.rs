use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvaluationOutcome, ProblemError, Result, Violation};

/// Number of groups in every equitable-partition instance.
pub const GROUP_COUNT: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EppInstance {
    /// `attributes[i][a]` is individual `i`'s binary attribute `a`.
    pub attributes: Vec<Vec<u8>>,
    /// When false (the default) every group label must be used at least once.
    #[serde(default)]
    pub allow_empty_groups: bool,
}

impl EppInstance {
    pub fn new(attributes: Vec<Vec<u8>>) -> Result<Self> {
        let inst = Self { attributes, allow_empty_groups: false };
        inst.validate()?;
        Ok(inst)
    }

    pub(super) fn from_json(data: Value) -> Result<Self> {
        let inst: Self = serde_json::from_value(data)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn n_individuals(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        if self.n_individuals() < GROUP_COUNT {
            return Err(ProblemError::Invalid(format!(
                "need at least {GROUP_COUNT} individuals, got {}",
                self.n_individuals()
            )));
        }
        let m = self.n_attributes();
        for (i, row) in self.attributes.iter().enumerate() {
            if row.len() != m {
                return Err(ProblemError::Invalid(format!("individual {i} has {} attributes", row.len())));
            }
            if row.iter().any(|&x| x > 1) {
                return Err(ProblemError::Invalid(format!("individual {i} has a non-binary attribute")));
            }
        }
        Ok(())
    }
}

/// Sum over attributes of the mean absolute deviation of per-group counts of ones.
pub fn evaluate_epp(inst: &EppInstance, labels: &[u8]) -> Result<EvaluationOutcome> {
    if labels.len() != inst.n_individuals() {
        return Err(ProblemError::Input(format!(
            "assignment has {} labels for {} individuals",
            labels.len(),
            inst.n_individuals()
        )));
    }
    let mut used = [false; GROUP_COUNT];
    for (i, &g) in labels.iter().enumerate() {
        if !(1..=GROUP_COUNT as u8).contains(&g) {
            return Ok(EvaluationOutcome::Infeasible {
                violation: Violation::BadLabel { individual: i, label: g },
            });
        }
        used[g as usize - 1] = true;
    }
    if !inst.allow_empty_groups {
        if let Some(g) = used.iter().position(|&u| !u) {
            return Ok(EvaluationOutcome::Infeasible {
                violation: Violation::EmptyGroup { group: g as u8 + 1 },
            });
        }
    }
    let m = inst.n_attributes();
    let mut counts = vec![[0u32; GROUP_COUNT]; m];
    for (row, &g) in inst.attributes.iter().zip(labels) {
        for (c, &x) in counts.iter_mut().zip(row) {
            c[g as usize - 1] += u32::from(x);
        }
    }
    let k = GROUP_COUNT as f64;
    let objective = counts
        .iter()
        .map(|c| {
            let mean = c.iter().map(|&x| f64::from(x)).sum::<f64>() / k;
            c.iter().map(|&x| (f64::from(x) - mean).abs()).sum::<f64>() / k
        })
        .sum();
    Ok(EvaluationOutcome::Feasible { objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> EppInstance {
        EppInstance::new(vec![vec![1]; n]).unwrap()
    }

    #[test]
    fn balanced_groups_score_zero() {
        let labels: Vec<u8> = (1..=8).collect();
        assert_eq!(evaluate_epp(&ones(8), &labels).unwrap().objective(), Some(0.0));
    }

    #[test]
    fn empty_group_is_infeasible() {
        let labels = [1, 1, 2, 3, 4, 5, 6, 7];
        assert_eq!(
            evaluate_epp(&ones(8), &labels).unwrap().violation(),
            Some(&Violation::EmptyGroup { group: 8 })
        );
        let mut relaxed = ones(8);
        relaxed.allow_empty_groups = true;
        // counts (2,1,1,1,1,1,1,0), mean 1, deviations sum to 2
        assert_eq!(evaluate_epp(&relaxed, &labels).unwrap().objective(), Some(0.25));
    }

    #[test]
    fn deviation_formula_on_uneven_counts() {
        // counts (3,1,2,2,2,2,2,2): mean 2, |1| + |-1| over 8 groups
        let mut labels = vec![1, 1, 1, 2];
        for g in 3..=8 {
            labels.extend([g, g]);
        }
        assert_eq!(labels.len(), 16);
        assert_eq!(evaluate_epp(&ones(16), &labels).unwrap().objective(), Some(0.25));
    }

    #[test]
    fn bad_labels_and_lengths() {
        let labels = [0, 1, 2, 3, 4, 5, 6, 7];
        assert!(matches!(
            evaluate_epp(&ones(8), &labels).unwrap().violation(),
            Some(Violation::BadLabel { individual: 0, label: 0 })
        ));
        assert!(evaluate_epp(&ones(8), &[9, 1, 2, 3, 4, 5, 6, 7]).unwrap().violation().is_some());
        assert!(evaluate_epp(&ones(8), &[1, 2]).is_err());
    }

    #[test]
    fn rejects_small_or_non_binary_instances() {
        assert!(EppInstance::new(vec![vec![1]; 7]).is_err());
        assert!(EppInstance::new(vec![vec![2]; 8]).is_err());
    }
}
