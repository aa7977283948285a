//! Native fireworks algorithm over the three solution encodings.
//!
//! Two operator presets exist. `Baseline` uses uniform random moves on every encoding.
//! `Appendix` is the guided airland variant: displacement-weighted moves against the
//! target-time order, LP-feasibility repair and small local improvement loops.
//!
//! All randomness comes from one `ChaCha8Rng` seeded per run, so a run is a pure
//! function of (problem, preset, params, budget, seed) whenever the budget has no
//! wall-clock deadline.

mod appendix;
mod baseline;
mod budget;
mod init;
mod select;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landing::{solve_sequence, target_order};
use crate::problem::{LandingSchedule, Problem, ProblemKind, Solution};

pub use budget::EvaluationBudget;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum FwaError {
    #[error("invalid FWA parameters: {0}")]
    Params(String),
    #[error("preset {preset:?} does not support {problem} instances")]
    Unsupported { preset: Preset, problem: ProblemKind },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FwaParams {
    pub fw_size: usize,
    /// Total sparks per iteration, shared evenly between fireworks.
    pub sp_size: usize,
    pub init_amp: f64,
    pub max_iter: usize,
    pub mutation_rate: f64,
    /// Iterations without improvement of the population best before stopping.
    pub stall_limit: usize,
}

impl Default for FwaParams {
    fn default() -> Self {
        Self { fw_size: 5, sp_size: 20, init_amp: 5.0, max_iter: 200, mutation_rate: 0.2, stall_limit: 10 }
    }
}

impl FwaParams {
    pub fn validate(&self) -> Result<(), FwaError> {
        if self.fw_size == 0 {
            return Err(FwaError::Params("fw_size must be at least 1".into()));
        }
        if self.sp_size < self.fw_size {
            return Err(FwaError::Params(format!(
                "sp_size ({}) must be at least fw_size ({})",
                self.sp_size, self.fw_size
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(FwaError::Params(format!("mutation_rate {} outside [0, 1]", self.mutation_rate)));
        }
        if !self.init_amp.is_finite() || self.init_amp < 0.0 {
            return Err(FwaError::Params(format!("init_amp {} must be finite and >= 0", self.init_amp)));
        }
        Ok(())
    }

    fn sparks_per_firework(&self) -> usize {
        (self.sp_size / self.fw_size).max(1)
    }

    /// Number of sparks the mutation operator tries to produce from `n` sparks.
    fn mutation_target(&self, n: usize) -> usize {
        if n == 0 || self.mutation_rate == 0.0 {
            0
        } else {
            ((n as f64 * self.mutation_rate) as usize).max(1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Baseline,
    Appendix,
}

impl Preset {
    pub fn supports(self, kind: ProblemKind) -> bool {
        match self {
            Preset::Baseline => true,
            Preset::Appendix => kind == ProblemKind::Airland,
        }
    }
}

/// Encoded solution.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Payload {
    /// Plane landing order or job order.
    Perm(Vec<usize>),
    /// p-median membership, exactly `p` ones.
    Bits(Vec<bool>),
    /// EPP group labels in `1..=8`.
    Groups(Vec<u8>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Perm(v) => v.len(),
            Payload::Bits(v) => v.len(),
            Payload::Groups(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub payload: Payload,
    /// Plane-indexed landing times when the payload is a feasible landing sequence.
    pub times: Option<Vec<f64>>,
    /// `NaN` until evaluated; `+inf` when infeasible.
    pub fitness: f64,
}

impl Individual {
    fn new(payload: Payload) -> Self {
        Self { payload, times: None, fitness: f64::NAN }
    }

    pub fn is_evaluated(&self) -> bool {
        !self.fitness.is_nan()
    }

    /// Solution submitted to the evaluator, or `None` for an LP-infeasible sequence.
    pub fn solution(&self, problem: &Problem) -> Option<Solution> {
        Some(match (&self.payload, problem) {
            (Payload::Perm(_), Problem::Airland(_)) => {
                Solution::Landing(LandingSchedule::single_runway(self.times.clone()?))
            }
            (Payload::Perm(p), _) => Solution::Permutation(p.clone()),
            (Payload::Bits(b), _) => {
                Solution::Medians(b.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i).collect())
            }
            (Payload::Groups(g), _) => Solution::Groups(g.clone()),
        })
    }
}

/// Problem-derived data shared by the operators.
pub(crate) struct Context<'a> {
    pub problem: &'a Problem,
    pub n: usize,
    /// Position of each plane in the target-time order (airland only).
    pub target_pos: Vec<usize>,
    /// `penalty_early + penalty_late` per plane (airland only).
    pub penalties: Vec<f64>,
}

impl<'a> Context<'a> {
    fn new(problem: &'a Problem) -> Self {
        let n = problem.size();
        let (target_pos, penalties) = match problem {
            Problem::Airland(inst) => {
                let mut pos = vec![0; n];
                for (k, p) in target_order(inst).into_iter().enumerate() {
                    pos[p] = k;
                }
                (pos, inst.planes.iter().map(|p| p.penalty_early + p.penalty_late).collect())
            }
            _ => (Vec::new(), Vec::new()),
        };
        Self { problem, n, target_pos, penalties }
    }

    /// Solves the sequence LP; returns plane-indexed times and cost (`+inf` if infeasible).
    pub fn schedule(&self, seq: &[usize]) -> (Option<Vec<f64>>, f64) {
        let Problem::Airland(inst) = self.problem else {
            return (None, f64::INFINITY);
        };
        let r = solve_sequence(inst, seq).expect("operators keep permutations valid");
        match r.to_schedule(seq) {
            Some(s) => (Some(s.times), r.cost),
            None => (None, f64::INFINITY),
        }
    }

    /// Individual for a sequence with LP times attached when the problem is airland.
    pub fn perm_individual(&self, seq: Vec<usize>) -> Individual {
        let times = match self.problem {
            Problem::Airland(_) => self.schedule(&seq).0,
            _ => None,
        };
        Individual { times, ..Individual::new(Payload::Perm(seq)) }
    }
}

/// `clamp(floor(init_amp * (1.5 - f / max_f)), 1, fw_size)` for each fitness.
///
/// `max_f` is the largest finite fitness; non-finite entries are treated as `max_f`.
/// Without a finite positive maximum every firework gets `clamp(floor(init_amp), 1, fw_size)`.
/// Products within 1e-9 of an integer are snapped to it before flooring, so the floor
/// follows exact arithmetic rather than binary rounding of `f / max_f`.
pub fn adaptive_amplitudes(fitnesses: &[f64], init_amp: f64, fw_size: usize) -> Vec<usize> {
    let clamp = |x: f64| {
        let snapped = if (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0) { x.round() } else { x.floor() };
        (snapped.max(1.0) as usize).clamp(1, fw_size.max(1))
    };
    let max_f = fitnesses.iter().copied().filter(|f| f.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !(max_f > 0.0) {
        return vec![clamp(init_amp); fitnesses.len()];
    }
    fitnesses
        .iter()
        .map(|&f| {
            let f = if f.is_finite() { f } else { max_f };
            clamp(init_amp * (1.5 - f / max_f))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FwaResult {
    pub best_solution: Option<Solution>,
    /// `+inf` when no feasible solution was seen.
    pub best_fitness: f64,
    /// Best fitness seen so far, one entry per completed iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: u64,
}

/// Fireworks algorithm bound to one problem.
pub struct Fwa<'a> {
    ctx: Context<'a>,
    preset: Preset,
    params: FwaParams,
}

impl<'a> Fwa<'a> {
    pub fn new(problem: &'a Problem, preset: Preset, params: FwaParams) -> Result<Self, FwaError> {
        params.validate()?;
        if !preset.supports(problem.kind()) {
            return Err(FwaError::Unsupported { preset, problem: problem.kind() });
        }
        Ok(Self { ctx: Context::new(problem), preset, params })
    }

    pub fn params(&self) -> &FwaParams {
        &self.params
    }

    /// `fw_size` structurally valid, unevaluated individuals.
    pub fn initialize_population(&self, rng: &mut Rng) -> Vec<Individual> {
        init::initialize(&self.ctx, self.preset, &self.params, rng)
    }

    /// Up to `sp_size / fw_size` distinct sparks, none equal to the firework.
    pub fn explode(&self, firework: &Individual, amp: usize, rng: &mut Rng) -> Vec<Individual> {
        let amp = amp.max(1);
        match (self.preset, &firework.payload) {
            (Preset::Appendix, Payload::Perm(seq)) => appendix::explode(&self.ctx, &self.params, seq, amp, rng),
            _ => baseline::explode(&self.ctx, &self.params, &firework.payload, amp, rng),
        }
    }

    /// New individuals derived from a subset of `sparks`, distinct from every spark.
    pub fn mutate_sparks(&self, sparks: &[Individual], rng: &mut Rng) -> Vec<Individual> {
        match self.preset {
            Preset::Appendix => appendix::mutate(&self.ctx, &self.params, sparks, rng),
            Preset::Baseline => baseline::mutate(&self.ctx, &self.params, sparks, rng),
        }
    }

    /// Next population of `fw_size` individuals; all inputs must be evaluated.
    pub fn select_next(
        &self,
        population: &[Individual],
        sparks: &[Individual],
        mutants: &[Individual],
    ) -> Vec<Individual> {
        let candidates: Vec<&Individual> = population.iter().chain(sparks).chain(mutants).collect();
        select::select(&candidates, self.params.fw_size)
    }

    fn evaluate_all(&self, individuals: &mut [Individual], budget: &mut EvaluationBudget) {
        for ind in individuals.iter_mut().filter(|i| !i.is_evaluated()) {
            ind.fitness = match ind.solution(self.ctx.problem) {
                Some(sol) => budget.compute(self.ctx.problem, &sol),
                None => f64::INFINITY,
            };
        }
    }

    /// Evaluate, adapt amplitudes, explode, mutate and select until the budget runs
    /// out, `max_iter` iterations pass, or the population best stalls.
    pub fn run(&self, budget: &mut EvaluationBudget, seed: u64) -> FwaResult {
        let mut rng = Rng::seed_from_u64(seed);
        let mut population = self.initialize_population(&mut rng);
        self.evaluate_all(&mut population, budget);

        let mut trace = Vec::new();
        let mut best = f64::INFINITY;
        let mut silent = 0;
        let mut iterations = 0;
        while !budget.stop() && iterations < self.params.max_iter {
            iterations += 1;
            let fitness: Vec<f64> = population.iter().map(|i| i.fitness).collect();
            let current = fitness.iter().copied().fold(f64::INFINITY, f64::min);
            if current < best {
                best = current;
                silent = 0;
            } else {
                silent += 1;
            }
            let amps = adaptive_amplitudes(&fitness, self.params.init_amp, self.params.fw_size);
            let mut sparks = Vec::new();
            for (fw, &amp) in population.iter().zip(&amps) {
                sparks.extend(self.explode(fw, amp, &mut rng));
            }
            self.evaluate_all(&mut sparks, budget);
            let mut mutants = self.mutate_sparks(&sparks, &mut rng);
            self.evaluate_all(&mut mutants, budget);
            population = self.select_next(&population, &sparks, &mutants);
            trace.push(budget.best_fitness());
            if silent >= self.params.stall_limit {
                break;
            }
        }

        let (best_solution, best_fitness) = match budget.best() {
            Some((sol, f)) => (Some(sol.clone()), f),
            None => self.fallback_best(&population),
        };
        FwaResult { best_solution, best_fitness, trace, iterations, evaluations: budget.used() }
    }

    /// With a zero budget nothing was scored; report the best initial individual,
    /// evaluated outside the budget.
    fn fallback_best(&self, population: &[Individual]) -> (Option<Solution>, f64) {
        let mut best: (Option<Solution>, f64) = (None, f64::INFINITY);
        for ind in population {
            let Some(sol) = ind.solution(self.ctx.problem) else { continue };
            let f = self.ctx.problem.evaluate(&sol).map_or(f64::INFINITY, |o| o.fitness());
            if best.0.is_none() || f < best.1 {
                best = (Some(sol), f);
            }
        }
        best
    }
}

/// Convenience wrapper: build the algorithm and run it once.
pub fn run_fwa(
    problem: &Problem,
    preset: Preset,
    params: FwaParams,
    budget: &mut EvaluationBudget,
    seed: u64,
) -> Result<FwaResult, FwaError> {
    Ok(Fwa::new(problem, preset, params)?.run(budget, seed))
}

/// Index drawn with probability proportional to `weights` (all finite, >= 0, sum > 0).
pub(crate) fn weighted_index(rng: &mut Rng, weights: &[f64]) -> usize {
    use rand::Rng as _;
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Moves the element at `from` so that it ends up at index `to`.
pub(crate) fn move_element(seq: &mut Vec<usize>, from: usize, to: usize) {
    let x = seq.remove(from);
    seq.insert(to, x);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitude_examples() {
        assert_eq!(adaptive_amplitudes(&[10.0], 5.0, 5), vec![2]);
        assert_eq!(adaptive_amplitudes(&[5.0, 10.0], 5.0, 5), vec![5, 2]);
        assert_eq!(adaptive_amplitudes(&[1e-12, 10.0], 5.0, 5), vec![5, 2]);
        assert_eq!(adaptive_amplitudes(&[1e-12, 10.0], 5.0, 10), vec![7, 2]);
    }

    #[test]
    fn amplitude_fallbacks() {
        assert_eq!(adaptive_amplitudes(&[f64::INFINITY; 3], 5.0, 5), vec![5; 3]);
        assert_eq!(adaptive_amplitudes(&[0.0, 0.0], 5.0, 5), vec![5; 2]);
        assert_eq!(adaptive_amplitudes(&[f64::INFINITY, 4.0], 5.0, 5), vec![2, 2]);
        assert_eq!(adaptive_amplitudes(&[3.0], 0.0, 5), vec![1]);
    }

    #[test]
    fn amplitude_snaps_exact_products() {
        // 5 * (1.5 - 0.1) is 7 exactly but 1.5 - 1/10 is not representable.
        assert_eq!(adaptive_amplitudes(&[1.0, 10.0], 5.0, 10), vec![7, 2]);
    }

    #[test]
    fn params_validation() {
        assert!(FwaParams::default().validate().is_ok());
        assert!(FwaParams { fw_size: 0, ..Default::default() }.validate().is_err());
        assert!(FwaParams { sp_size: 4, ..Default::default() }.validate().is_err());
        assert!(FwaParams { mutation_rate: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn mutation_target_counts() {
        let p = FwaParams::default();
        assert_eq!(p.mutation_target(0), 0);
        assert_eq!(p.mutation_target(1), 1);
        assert_eq!(p.mutation_target(10), 2);
        assert_eq!(p.mutation_target(14), 2);
        assert_eq!(FwaParams { mutation_rate: 0.0, ..p }.mutation_target(10), 0);
    }

    #[test]
    fn move_element_both_directions() {
        let mut v = vec![0, 1, 2, 3];
        move_element(&mut v, 0, 2);
        assert_eq!(v, vec![1, 2, 0, 3]);
        move_element(&mut v, 3, 0);
        assert_eq!(v, vec![3, 1, 2, 0]);
    }
}
