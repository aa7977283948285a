use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use coevo::evolve::{Coevolution, RunConfig};
use coevo::ledger::{read_ledger, replay, report_trajectory, write_trajectory_csv};
use coevo::llm::RecordingLlm;
use coevo::problem::{Instance, Solution};
use coevo::runner::{CandidateRunner, EvalJob, NativeRunner};

#[derive(Parser)]
#[command(name = "coevo", version, about = "Co-evolve fireworks-algorithm programs and their prompt templates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a solution against an instance and print its objective and ratio.
    Evaluate {
        instance: PathBuf,
        /// JSON solution file.
        solution: PathBuf,
        /// Reference value, for instance formats that do not carry one.
        #[arg(long)]
        reference: Option<f64>,
    },
    /// Run a candidate program on one instance.
    Run {
        program: PathBuf,
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        time_limit: f64,
        #[arg(long, default_value_t = 20_000)]
        max_evaluations: u64,
        #[arg(long)]
        reference: Option<f64>,
    },
    /// Run every independent run of an experiment config.
    Evolve {
        config: PathBuf,
        /// Output directory for ledgers, pools and templates.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Save every LLM exchange as a transcript, overriding the config.
        #[arg(long)]
        record_transcript: Option<PathBuf>,
    },
    /// Rebuild pools and template statistics from a ledger and check it.
    Replay { ledger: PathBuf },
    /// Search trajectory of a ledger as CSV.
    Report {
        ledger: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Evaluate { instance, solution, reference } => evaluate(&instance, &solution, reference),
        Command::Run { program, instance, seed, time_limit, max_evaluations, reference } => {
            run_program(&program, &instance, seed, time_limit, max_evaluations, reference)
        }
        Command::Evolve { config, out, record_transcript } => evolve(&config, &out, record_transcript),
        Command::Replay { ledger } => replay_ledger(&ledger),
        Command::Report { ledger, out } => report(&ledger, out.as_deref()),
    }
}

fn load_instance(path: &Path, reference: Option<f64>) -> Result<Instance> {
    Instance::load(path, reference).with_context(|| format!("loading {}", path.display()))
}

fn evaluate(instance: &Path, solution: &Path, reference: Option<f64>) -> Result<()> {
    let inst = load_instance(instance, reference)?;
    let text = std::fs::read_to_string(solution).with_context(|| format!("reading {}", solution.display()))?;
    let sol = Solution::from_json(inst.kind(), serde_json::from_str(&text)?)?;
    let outcome = inst.evaluate(&sol)?;
    match outcome.objective() {
        Some(obj) => {
            let ratio = inst.ratio(obj)?;
            println!("{}: feasible, objective {obj}, ratio {:.6}", inst.name, ratio.value);
        }
        None => println!("{}: infeasible ({:?}), ratio 0", inst.name, outcome.violation().expect("infeasible")),
    }
    Ok(())
}

fn run_program(
    program: &Path,
    instance: &Path,
    seed: u64,
    time_limit: f64,
    max_evaluations: u64,
    reference: Option<f64>,
) -> Result<()> {
    let inst = load_instance(instance, reference)?;
    let job = EvalJob {
        source: std::fs::read_to_string(program).with_context(|| format!("reading {}", program.display()))?,
        instance: inst.to_json_value(),
        seed,
        time_limit,
        max_evaluations,
    };
    let report = NativeRunner.run_job(&job)?;
    let (ratio, status) = coevo::evolve::ratio_from_report(&inst, &report);
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("status {}, ratio {ratio:.6}", status.as_str());
    Ok(())
}

fn evolve(config: &Path, out: &Path, record: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let task = cfg.task()?;
    let runner = cfg.candidate_runner()?;
    let llm = RecordingLlm::new(cfg.gateway()?);
    let mut evo = Coevolution::new(&task, &cfg.evolution, &llm, runner.as_ref());
    evo.code_options = cfg.llm.code.clone();
    evo.meta_options = cfg.llm.meta.clone();
    std::fs::create_dir_all(out)?;
    let result = evo.run_all(Some(out));
    if let Some(path) = record.or_else(|| cfg.llm.record_transcript.as_ref().map(|p| cfg.resolve(p))) {
        llm.record_transcript(&path)?;
        log::info!("transcript saved to {}", path.display());
    }
    let result = result?;
    for r in &result.runs {
        let best = r.best.as_ref().map_or("-", |c| c.id.as_str());
        let note = r.aborted.as_deref().map(|a| format!(" (aborted: {a})")).unwrap_or_default();
        println!("run {}: best {best} score {:.6}, {} attempts, {} LLM calls{note}", r.run, r.best_score(), r.attempts, r.llm_calls);
    }
    match (result.best_run, result.best()) {
        (Some(i), Some(best)) => println!("best overall: run {} candidate {} score {:.6}", result.runs[i].run, best.id, best.score),
        _ => bail!("no run produced a candidate"),
    }
    Ok(())
}

fn replay_ledger(path: &Path) -> Result<()> {
    let contents = read_ledger(path)?;
    let state = replay(&contents).with_context(|| format!("replaying {}", path.display()))?;
    println!("{} records, {} attempts, best so far {:.6}", contents.records.len(), state.attempts, state.best_so_far);
    if let Some(pool) = &state.pool {
        let ids: Vec<&str> = pool.entries().iter().map(|c| c.id.as_str()).collect();
        println!("pool: {}", ids.join(" "));
    }
    for (id, stats) in state.template_stats() {
        println!("{id}: uses {}, estimate {:+.6}", stats.uses, stats.perf_estimate());
    }
    if let Some(t) = &state.truncated {
        println!("truncated after seq {}: {}", t.after_seq, t.reason);
    }
    Ok(())
}

fn report(path: &Path, out: Option<&Path>) -> Result<()> {
    let contents = read_ledger(path)?;
    let rows = report_trajectory(&contents.records)?;
    match out {
        Some(p) => write_trajectory_csv(&rows, std::fs::File::create(p)?)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            write_trajectory_csv(&rows, &mut stdout)?;
            stdout.flush()?;
        }
    }
    Ok(())
}
