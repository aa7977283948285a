//! Worker protocol over line-delimited JSON on stdin/stdout.
//!
//! On start the worker writes a handshake line `{"proto": 1, "problems": [...]}`.
//! Each following input line is an [`EvalJob`]; the worker answers each with one
//! [`EvalReport`] line and exits at end of input. A nonzero exit status means the
//! worker itself failed.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CandidateRunner, CandidateStatus, EvalJob, EvalReport, RunnerError, KILL_GRACE};
use crate::problem::{Instance, ProblemKind};

pub const PROTO_VERSION: u32 = 1;

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub proto: u32,
    pub problems: Vec<ProblemKind>,
}

/// Worker side: handshake, then answer jobs until `input` ends.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, runner: &dyn CandidateRunner) -> Result<(), RunnerError> {
    let hello = Handshake { proto: PROTO_VERSION, problems: runner.problems() };
    writeln!(output, "{}", serde_json::to_string(&hello).expect("handshake serialises"))?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let job: EvalJob = serde_json::from_str(&line).map_err(|e| RunnerError::InvalidJob(e.to_string()))?;
        let report = runner.run_job(&job)?;
        writeln!(output, "{}", serde_json::to_string(&report).expect("report serialises"))?;
        output.flush()?;
    }
    Ok(())
}

/// Runs each job in a fresh worker process and kills it once the job's time limit
/// plus a one-second grace has passed.
#[derive(Clone, Debug)]
pub struct ProcessRunner {
    program: PathBuf,
    args: Vec<String>,
    expected_proto: u32,
    problems: Vec<ProblemKind>,
}

struct Worker {
    child: Child,
    lines: Receiver<String>,
    stderr: thread::JoinHandle<String>,
}

impl Worker {
    fn spawn(program: &PathBuf, args: &[String]) -> Result<Self, RunnerError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| RunnerError::Spawn(format!("{}: {e}", program.display())))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        Ok(Self { child, lines, stderr })
    }

    fn handshake(&self, expected: u32) -> Result<Handshake, RunnerError> {
        let line = self
            .lines
            .recv_timeout(HANDSHAKE_TIMEOUT)
            .map_err(|_| RunnerError::Protocol("no handshake from worker".into()))?;
        let hello: Handshake =
            serde_json::from_str(&line).map_err(|e| RunnerError::Protocol(format!("bad handshake {line:?}: {e}")))?;
        if hello.proto != expected {
            return Err(RunnerError::ProtocolMismatch { expected, got: hello.proto });
        }
        Ok(hello)
    }

    fn kill(mut self) -> String {
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.stderr.join().unwrap_or_default()
    }

    /// Waits for exit after end of input; the stderr text comes back on failure.
    fn finish(mut self) -> Result<(), String> {
        let status = self.child.wait().map_err(|e| e.to_string())?;
        let stderr = self.stderr.join().unwrap_or_default();
        if status.success() {
            Ok(())
        } else {
            Err(format!("worker exited with {status}: {}", stderr.trim()))
        }
    }
}

impl ProcessRunner {
    /// Starts the worker once to learn its capabilities.
    pub fn connect(program: impl Into<PathBuf>, args: Vec<String>) -> Result<Self, RunnerError> {
        Self::connect_expecting(program, args, PROTO_VERSION)
    }

    /// Like [`ProcessRunner::connect`] but insisting on protocol `expected`.
    pub fn connect_expecting(program: impl Into<PathBuf>, args: Vec<String>, expected: u32) -> Result<Self, RunnerError> {
        let program = program.into();
        let worker = Worker::spawn(&program, &args)?;
        let hello = worker.handshake(expected);
        worker.kill();
        Ok(Self { program, args, expected_proto: expected, problems: hello?.problems })
    }
}

impl CandidateRunner for ProcessRunner {
    fn problems(&self) -> Vec<ProblemKind> {
        self.problems.clone()
    }

    fn run_job(&self, job: &EvalJob) -> Result<EvalReport, RunnerError> {
        let kind = Instance::from_json_value(job.instance.clone())
            .map_err(|e| RunnerError::InvalidJob(e.to_string()))?
            .kind();
        if !self.problems.contains(&kind) {
            return Err(RunnerError::Unsupported(kind));
        }
        let mut worker = Worker::spawn(&self.program, &self.args)?;
        if let Err(e) = worker.handshake(self.expected_proto) {
            worker.kill();
            return Err(e);
        }
        let started = Instant::now();
        {
            let mut stdin = worker.child.stdin.take().expect("piped stdin");
            let line = serde_json::to_string(job).expect("job serialises");
            writeln!(stdin, "{line}")?;
            // Dropping stdin ends the input, so the worker exits after this job.
        }
        match worker.lines.recv_timeout(job.limit() + KILL_GRACE) {
            Ok(line) => {
                let report: EvalReport = serde_json::from_str(&line)
                    .map_err(|e| RunnerError::Protocol(format!("bad report {line:?}: {e}")))?;
                worker.finish().map_err(RunnerError::Protocol)?;
                Ok(report)
            }
            Err(RecvTimeoutError::Timeout) => {
                worker.kill();
                Ok(EvalReport::failed(CandidateStatus::TimedOut, "worker killed at the time limit", started))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let msg = worker.finish().err().unwrap_or_else(|| "worker closed output without a report".into());
                Err(RunnerError::Protocol(msg))
            }
        }
    }
}
