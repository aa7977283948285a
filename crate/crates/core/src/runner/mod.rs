//! Candidate execution: jobs, reports, the native interpreter for candidate programs
//! and a subprocess runner speaking the worker protocol.
//!
//! A native candidate program is a TOML document naming an operator preset and its
//! parameters:
//!
//! ```toml
//! preset = "baseline"
//! [params]
//! fw_size = 5
//! sp_size = 20
//! ```
//!
//! An optional `[fault]` table (`kind = "spin" | "hang" | "panic" | "error"`) makes the
//! program misbehave on purpose.

mod process;

pub use process::{serve, Handshake, ProcessRunner, PROTO_VERSION};

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::fwa::{run_fwa, EvaluationBudget, FwaParams, Preset};
use crate::problem::{Instance, ProblemKind};

/// Extra time past the job's limit before a job is abandoned or its worker killed.
pub const KILL_GRACE: Duration = Duration::from_secs(1);

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("failed to start worker: {0}")]
    Spawn(String),
    #[error("worker speaks protocol {got}, expected {expected}")]
    ProtocolMismatch { expected: u32, got: u32 },
    #[error("worker does not support {0}")]
    Unsupported(ProblemKind),
    #[error("worker protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Valid,
    ParseFailed,
    RuntimeFailed,
    TimedOut,
    InfeasibleOnly,
}

impl CandidateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateStatus::Valid => "valid",
            CandidateStatus::ParseFailed => "parse_failed",
            CandidateStatus::RuntimeFailed => "runtime_failed",
            CandidateStatus::TimedOut => "timed_out",
            CandidateStatus::InfeasibleOnly => "infeasible_only",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalJob {
    pub source: String,
    /// Instance document in the JSON instance schema.
    pub instance: Value,
    pub seed: u64,
    pub time_limit: f64,
    pub max_evaluations: u64,
}

impl EvalJob {
    pub fn limit(&self) -> Duration {
        Duration::from_secs_f64(self.time_limit.max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub status: CandidateStatus,
    pub solution: Option<Value>,
    pub objective: Option<f64>,
    pub evaluations: u64,
    /// Seconds.
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalReport {
    pub fn failed(status: CandidateStatus, error: impl Into<String>, started: Instant) -> Self {
        Self {
            status,
            solution: None,
            objective: None,
            evaluations: 0,
            wall_time: started.elapsed().as_secs_f64(),
            error: Some(error.into()),
        }
    }
}

pub trait CandidateRunner: Send + Sync {
    /// Problems this runner can execute.
    fn problems(&self) -> Vec<ProblemKind>;

    /// Runs one job. Candidate failures are reported through the status; errors mean
    /// the runner itself could not do its work.
    fn run_job(&self, job: &EvalJob) -> Result<EvalReport, RunnerError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Fault {
    /// Busy-waits until the time limit, then gives up.
    Spin,
    /// Busy-waits forever; only a process kill ends it.
    Hang,
    Panic,
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateProgram {
    pub preset: Preset,
    #[serde(default)]
    pub params: FwaParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl CandidateProgram {
    pub fn parse(source: &str) -> Result<Self, String> {
        toml::from_str(source).map_err(|e| e.to_string())
    }

    pub fn to_source(&self) -> String {
        toml::to_string(self).expect("program serialises")
    }
}

/// The program every run starts from: baseline operators with default parameters.
pub const SEED_PROGRAM: &str = "\
# Fireworks algorithm with uniform random operators.
preset = \"baseline\"

[params]
fw_size = 5
sp_size = 20
init_amp = 5.0
max_iter = 200
mutation_rate = 0.2
stall_limit = 10
";

/// Interprets candidate programs in-process, each job on its own thread.
#[derive(Clone, Debug, Default)]
pub struct NativeRunner;

enum Outcome {
    Finished(EvalReport),
    Panicked(String),
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn execute(program: CandidateProgram, instance: Instance, job: EvalJob, cancel: Arc<AtomicBool>) -> EvalReport {
    let started = Instant::now();
    let limit = job.limit();
    match &program.fault {
        Some(Fault::Spin) => {
            while started.elapsed() < limit && !cancel.load(Ordering::Relaxed) {
                std::hint::spin_loop();
            }
            return EvalReport::failed(CandidateStatus::TimedOut, "time limit reached", started);
        }
        Some(Fault::Hang) => loop {
            std::hint::spin_loop();
        },
        Some(Fault::Panic) => panic!("candidate panicked"),
        Some(Fault::Error { message }) => {
            return EvalReport::failed(CandidateStatus::RuntimeFailed, message.clone(), started);
        }
        None => {}
    }
    let mut budget = EvaluationBudget::new(job.max_evaluations, Some(limit));
    let result = match run_fwa(&instance.problem, program.preset, program.params, &mut budget, job.seed) {
        Ok(r) => r,
        Err(e) => return EvalReport::failed(CandidateStatus::RuntimeFailed, e.to_string(), started),
    };
    let wall_time = started.elapsed().as_secs_f64();
    // A zero-evaluation budget falls back to an uncounted initial individual, which
    // may be infeasible; only feasible solutions make the run valid.
    let feasible = result.best_fitness.is_finite();
    EvalReport {
        status: if feasible { CandidateStatus::Valid } else { CandidateStatus::InfeasibleOnly },
        solution: result.best_solution.filter(|_| feasible).map(|s| s.to_json()),
        objective: feasible.then_some(result.best_fitness),
        evaluations: result.evaluations,
        wall_time,
        error: None,
    }
}

impl CandidateRunner for NativeRunner {
    fn problems(&self) -> Vec<ProblemKind> {
        ProblemKind::ALL.to_vec()
    }

    fn run_job(&self, job: &EvalJob) -> Result<EvalReport, RunnerError> {
        let started = Instant::now();
        let instance =
            Instance::from_json_value(job.instance.clone()).map_err(|e| RunnerError::InvalidJob(e.to_string()))?;
        if !job.time_limit.is_finite() || job.time_limit < 0.0 {
            return Err(RunnerError::InvalidJob(format!("time limit {} out of range", job.time_limit)));
        }
        let program = match CandidateProgram::parse(&job.source) {
            Ok(p) => p,
            Err(e) => return Ok(EvalReport::failed(CandidateStatus::ParseFailed, e, started)),
        };

        let cancel = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let (job_owned, flag) = (job.clone(), Arc::clone(&cancel));
        std::thread::Builder::new()
            .name("candidate".into())
            .spawn(move || {
                let out = catch_unwind(AssertUnwindSafe(|| execute(program, instance, job_owned, flag)));
                let _ = tx.send(match out {
                    Ok(r) => Outcome::Finished(r),
                    Err(p) => Outcome::Panicked(panic_message(&*p)),
                });
            })?;

        Ok(match rx.recv_timeout(job.limit() + KILL_GRACE) {
            Ok(Outcome::Finished(r)) => r,
            Ok(Outcome::Panicked(msg)) => EvalReport::failed(CandidateStatus::RuntimeFailed, msg, started),
            Err(_) => {
                cancel.store(true, Ordering::Relaxed);
                EvalReport::failed(CandidateStatus::TimedOut, "abandoned after the time limit", started)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_program_parses_to_defaults() {
        let p = CandidateProgram::parse(SEED_PROGRAM).unwrap();
        assert_eq!(p.preset, Preset::Baseline);
        assert_eq!(p.params, FwaParams::default());
        assert_eq!(p.fault, None);
        assert_eq!(CandidateProgram::parse(&p.to_source()).unwrap(), p);
    }

    #[test]
    fn faults_parse() {
        let p = CandidateProgram::parse("preset = \"appendix\"\n[fault]\nkind = \"error\"\nmessage = \"boom\"\n").unwrap();
        assert_eq!(p.fault, Some(Fault::Error { message: "boom".into() }));
        assert!(CandidateProgram::parse("preset = \"appendix\"\nbogus = 1\n").is_err());
        assert!(CandidateProgram::parse("def x(:").is_err());
    }
}
