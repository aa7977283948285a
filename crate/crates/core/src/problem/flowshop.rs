use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvaluationOutcome, ProblemError, Result, Violation};

/// Permutation flow shop.
///
/// `processing_times` is jobs-major: row `j` holds job `j`'s time on each machine, in
/// machine order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowShopInstance {
    pub processing_times: Vec<Vec<f64>>,
}

impl FlowShopInstance {
    pub fn new(processing_times: Vec<Vec<f64>>) -> Result<Self> {
        let inst = Self { processing_times };
        inst.validate()?;
        Ok(inst)
    }

    pub(super) fn from_json(data: Value) -> Result<Self> {
        let inst: Self = serde_json::from_value(data)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn n_jobs(&self) -> usize {
        self.processing_times.len()
    }

    pub fn n_machines(&self) -> usize {
        self.processing_times.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let m = self.n_machines();
        if self.n_jobs() == 0 || m == 0 {
            return Err(ProblemError::Invalid("flow shop needs at least one job and machine".into()));
        }
        if self.processing_times.iter().any(|row| row.len() != m) {
            return Err(ProblemError::Invalid("ragged processing-time matrix".into()));
        }
        if self.processing_times.iter().flatten().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(ProblemError::Invalid("processing times must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub(crate) fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &j in perm {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return false;
        }
    }
    true
}

/// Makespan of `perm` via the completion-time recurrence, one machine row at a time.
pub fn evaluate_flowshop(inst: &FlowShopInstance, perm: &[usize]) -> EvaluationOutcome {
    if !is_permutation(perm, inst.n_jobs()) {
        return EvaluationOutcome::Infeasible { violation: Violation::NotAPermutation };
    }
    let mut completion = vec![0.0f64; inst.n_machines()];
    for &job in perm {
        let mut prev = 0.0f64;
        for (c, &p) in completion.iter_mut().zip(&inst.processing_times[job]) {
            *c = c.max(prev) + p;
            prev = *c;
        }
    }
    EvaluationOutcome::Feasible { objective: completion.last().copied().unwrap_or(0.0) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_makespans() {
        let inst = FlowShopInstance::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(evaluate_flowshop(&inst, &[0, 1]).objective(), Some(4.0));
        assert_eq!(evaluate_flowshop(&inst, &[1, 0]).objective(), Some(5.0));
    }

    #[test]
    fn rejects_non_permutations() {
        let inst = FlowShopInstance::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        for bad in [&[0, 0][..], &[0][..], &[0, 2][..], &[0, 1, 1][..]] {
            assert_eq!(
                evaluate_flowshop(&inst, bad).violation(),
                Some(&Violation::NotAPermutation),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn rejects_ragged_matrix() {
        assert!(FlowShopInstance::new(vec![vec![1.0, 2.0], vec![2.0]]).is_err());
        assert!(FlowShopInstance::new(vec![vec![-1.0]]).is_err());
    }
}
