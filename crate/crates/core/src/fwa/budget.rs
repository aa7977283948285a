use std::time::{Duration, Instant};

use crate::problem::{Problem, Solution};

/// Counts objective evaluations and remembers the best solution seen.
///
/// Once exhausted, `compute` returns `+inf` without evaluating or counting, so the
/// count never exceeds the limit.
#[derive(Clone, Debug)]
pub struct EvaluationBudget {
    max_evaluations: u64,
    time_limit: Option<Duration>,
    started: Instant,
    used: u64,
    best: Option<(Solution, f64)>,
}

impl EvaluationBudget {
    pub fn new(max_evaluations: u64, time_limit: Option<Duration>) -> Self {
        Self { max_evaluations, time_limit, started: Instant::now(), used: 0, best: None }
    }

    pub fn with_evaluations(max_evaluations: u64) -> Self {
        Self::new(max_evaluations, None)
    }

    pub fn stop(&self) -> bool {
        self.used >= self.max_evaluations || self.time_limit.is_some_and(|t| self.started.elapsed() >= t)
    }

    /// Fitness of `solution`: its objective when feasible, `+inf` otherwise.
    pub fn compute(&mut self, problem: &Problem, solution: &Solution) -> f64 {
        if self.stop() {
            return f64::INFINITY;
        }
        self.used += 1;
        let f = problem.evaluate(solution).map_or(f64::INFINITY, |o| o.fitness());
        if f.is_finite() && self.best.as_ref().is_none_or(|(_, b)| f < *b) {
            self.best = Some((solution.clone(), f));
        }
        f
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    pub fn best(&self) -> Option<(&Solution, f64)> {
        self.best.as_ref().map(|(s, f)| (s, *f))
    }

    pub fn best_solution(&self) -> Option<&Solution> {
        self.best.as_ref().map(|(s, _)| s)
    }

    pub fn best_fitness(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |(_, f)| *f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::FlowShopInstance;

    #[test]
    fn counts_and_stops() {
        let problem = Problem::Flowshop(FlowShopInstance::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap());
        let mut b = EvaluationBudget::with_evaluations(2);
        assert_eq!(b.compute(&problem, &Solution::Permutation(vec![1, 0])), 5.0);
        assert_eq!(b.compute(&problem, &Solution::Permutation(vec![0, 0])), f64::INFINITY);
        assert!(b.stop());
        assert_eq!(b.compute(&problem, &Solution::Permutation(vec![0, 1])), f64::INFINITY);
        assert_eq!(b.used(), 2);
        assert_eq!(b.best_fitness(), 5.0);
        assert_eq!(b.best_solution(), Some(&Solution::Permutation(vec![1, 0])));
    }

    #[test]
    fn zero_budget_records_nothing() {
        let problem = Problem::Flowshop(FlowShopInstance::new(vec![vec![1.0]]).unwrap());
        let mut b = EvaluationBudget::with_evaluations(0);
        assert!(b.stop());
        assert_eq!(b.compute(&problem, &Solution::Permutation(vec![0])), f64::INFINITY);
        assert!(b.best().is_none());
    }
}
