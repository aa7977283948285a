//! Optimal landing times for a fixed landing sequence.
//!
//! With the order fixed, the landing problem is a linear program over times
//! `t = target - earliness + lateness`, where `earliness ∈ [0, target - earliest]` and
//! `lateness ∈ [0, latest - target]`. Every ordered pair in the sequence carries a
//! separation row; rows implied by a chain through an intermediate plane, or by the
//! windows alone, are dropped before solving. Among optimal schedules the one with the
//! smallest total time is returned, which is the componentwise-earliest optimum because
//! the optimal set is closed under componentwise minimum.

mod lp;
pub mod oracle;

use thiserror::Error;

use crate::problem::{AircraftLandingInstance, LandingSchedule};
use lp::{BoxedLp, LpOutcome, Row};

pub use oracle::grid_oracle_schedule;

#[derive(Debug, Error, PartialEq)]
pub enum LandingError {
    #[error("sequence is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("grid oracle would enumerate {0} schedules (limit 1e6)")]
    GridTooLarge(u128),
    #[error("value {0} is not a multiple of the grid step")]
    OffGrid(f64),
}

/// Times are per sequence position: `times[k]` is the landing time of plane `seq[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceScheduleResult {
    pub times: Vec<f64>,
    pub cost: f64,
    pub feasible: bool,
}

impl SequenceScheduleResult {
    pub fn infeasible() -> Self {
        Self { times: Vec::new(), cost: f64::INFINITY, feasible: false }
    }

    /// Re-indexes position times by plane id.
    pub fn to_schedule(&self, seq: &[usize]) -> Option<LandingSchedule> {
        if !self.feasible {
            return None;
        }
        let mut times = vec![0.0; seq.len()];
        for (&plane, &t) in seq.iter().zip(&self.times) {
            times[plane] = t;
        }
        Some(LandingSchedule::single_runway(times))
    }
}

pub(crate) fn check_permutation(seq: &[usize], n: usize) -> Result<(), LandingError> {
    if crate::problem::is_permutation(seq, n) {
        Ok(())
    } else {
        Err(LandingError::NotAPermutation(n))
    }
}

fn penalty(inst: &AircraftLandingInstance, plane: usize, t: f64) -> f64 {
    let p = &inst.planes[plane];
    p.penalty_early * (p.target - t).max(0.0) + p.penalty_late * (t - p.target).max(0.0)
}

pub(crate) fn sequence_cost(inst: &AircraftLandingInstance, seq: &[usize], times: &[f64]) -> f64 {
    seq.iter().zip(times).map(|(&p, &t)| penalty(inst, p, t)).sum()
}

/// Solves the sequence LP exactly. Infeasible sequences report `cost = +inf`.
pub fn solve_sequence(
    inst: &AircraftLandingInstance,
    seq: &[usize],
) -> Result<SequenceScheduleResult, LandingError> {
    let n = inst.n_planes();
    check_permutation(seq, n)?;
    if n == 0 {
        return Ok(SequenceScheduleResult { times: Vec::new(), cost: 0.0, feasible: true });
    }
    let planes: Vec<_> = seq.iter().map(|&p| &inst.planes[p]).collect();
    let sep = |i: usize, j: usize| inst.separation[seq[i]][seq[j]];

    // The forward pass gives the componentwise-least point satisfying every lower bound
    // and separation; the sequence is feasible exactly when it respects the latest times.
    let mut earliest = vec![0.0; n];
    for k in 0..n {
        let mut t = planes[k].earliest;
        for i in 0..k {
            t = t.max(earliest[i] + sep(i, k));
        }
        if t > planes[k].latest + crate::problem::FEAS_TOL * planes[k].latest.abs().max(1.0) {
            return Ok(SequenceScheduleResult::infeasible());
        }
        earliest[k] = t;
    }

    // Variables: earliness of position k at 2k, lateness at 2k + 1.
    let mut lp = BoxedLp {
        lower: vec![0.0; 2 * n],
        upper: Vec::with_capacity(2 * n),
        cost: Vec::with_capacity(2 * n),
        rows: Vec::new(),
    };
    for p in &planes {
        lp.upper.push(p.target - p.earliest);
        lp.upper.push(p.latest - p.target);
        lp.cost.push([p.penalty_early, -1.0]);
        lp.cost.push([p.penalty_late, 1.0]);
    }
    for j in 1..n {
        for i in 0..j {
            let s = sep(i, j);
            if planes[i].latest + s <= planes[j].earliest {
                continue;
            }
            if (i + 1..j).any(|k| sep(i, k) + sep(k, j) >= s) {
                continue;
            }
            // t_j - t_i >= s with t = target - earliness + lateness
            lp.rows.push(Row {
                coeffs: vec![(2 * j, -1.0), (2 * j + 1, 1.0), (2 * i, 1.0), (2 * i + 1, -1.0)],
                rhs: s - planes[j].target + planes[i].target,
            });
        }
    }

    match lp.solve() {
        LpOutcome::Infeasible => Ok(SequenceScheduleResult::infeasible()),
        LpOutcome::Optimal(x) => {
            let times: Vec<f64> = planes
                .iter()
                .enumerate()
                .map(|(k, p)| (p.target - x[2 * k] + x[2 * k + 1]).clamp(p.earliest, p.latest))
                .collect();
            let cost = sequence_cost(inst, seq, &times);
            Ok(SequenceScheduleResult { times, cost, feasible: true })
        }
    }
}

/// Plane ids sorted by target time, ties by id.
pub fn target_order(inst: &AircraftLandingInstance) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..inst.n_planes()).collect();
    idx.sort_by(|&a, &b| inst.planes[a].target.total_cmp(&inst.planes[b].target).then(a.cmp(&b)));
    idx
}
