//! The co-evolution loop: rank-selected parents, rank-selected templates, LLM
//! generation, scoring through a candidate runner, greedy pool update, template
//! attribution, and periodic template evolution.

mod config;
mod pool;

pub use config::{LlmConfig, LlmMode, RunConfig, RunnerConfig, RunnerKind};
pub use pool::{code_hash, CandidateAlgorithm, CandidatePool, OpKind, PoolUpdate};

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ledger::{Clock, Event, LedgerError, LedgerWriter, TemplateSnapshot};
use crate::llm::{LlmGateway, RequestOptions};
use crate::problem::{Instance, Solution};
use crate::prompt::{evolve_template, extract_tagged_block, PromptError, PromptLibrary, TemplateKind, HAND_SEEDED};
use crate::runner::{CandidateRunner, CandidateStatus, EvalJob, EvalReport, RunnerError};
use crate::selection::SelectionError;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("seed candidate is not valid ({status:?}): {detail}")]
    SeedInvalid { status: CandidateStatus, detail: String },
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Every numeric knob of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSettings {
    pub pool_capacity: usize,
    pub template_capacity: usize,
    /// Generation attempts per run, failed ones included.
    pub max_candidates: u32,
    pub independent_runs: u32,
    /// Per-instance wall-clock limit, seconds.
    pub time_limit: f64,
    /// Per-instance objective evaluations.
    pub max_evaluations: u64,
    /// Valid candidates of one kind between evolutions of that kind's templates.
    pub evolution_period: u32,
    /// Probability of attempting crossover instead of mutation.
    pub crossover_rate: f64,
    /// Re-prompts after a response without a code block.
    pub extraction_retries: u32,
    /// LLM calls allowed per template evolution.
    pub evolve_attempts: u32,
    pub seed: u64,
    pub clock: Clock,
    /// Score training instances on parallel threads.
    pub parallel_scoring: bool,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        Self {
            pool_capacity: 10,
            template_capacity: 5,
            max_candidates: 200,
            independent_runs: 5,
            time_limit: 10.0,
            max_evaluations: 20_000,
            evolution_period: 20,
            crossover_rate: 0.3,
            extraction_retries: 2,
            evolve_attempts: 3,
            seed: 0,
            clock: Clock::Logical,
            parallel_scoring: true,
        }
    }
}

impl EvolutionSettings {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::Config(m.into()));
        if self.pool_capacity == 0 {
            return bad("pool_capacity must be at least 1");
        }
        if self.template_capacity < 2 {
            return bad("template_capacity must be at least 2");
        }
        if self.evolution_period == 0 {
            return bad("evolution_period must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("crossover_rate must lie in [0, 1]");
        }
        if !self.time_limit.is_finite() || self.time_limit <= 0.0 {
            return bad("time_limit must be positive");
        }
        if self.evolve_attempts == 0 {
            return bad("evolve_attempts must be at least 1");
        }
        Ok(())
    }
}

/// What is being optimised: training instances drive selection, test instances are
/// only reported.
#[derive(Clone, Debug)]
pub struct Task {
    pub name: String,
    pub description: String,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
    pub seed_source: String,
}

impl Task {
    pub fn new(name: impl Into<String>, train: Vec<Instance>, seed_source: impl Into<String>) -> Result<Self, EvolveError> {
        let first = train.first().ok_or_else(|| EvolveError::Config("no training instances".into()))?;
        Ok(Self {
            name: name.into(),
            description: first.kind().description().to_owned(),
            train,
            test: Vec::new(),
            seed_source: seed_source.into(),
        })
    }
}

/// Outcome of scoring one program on a set of instances.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub status: CandidateStatus,
    pub instance_scores: Vec<f64>,
    pub instance_status: Vec<CandidateStatus>,
}

/// Seed for one (candidate, instance) pair.
pub fn instance_seed(run_seed: u64, candidate_id: &str, instance_index: usize, instance_name: &str) -> u64 {
    let digest = Sha256::digest(format!("{run_seed}:{candidate_id}:{instance_index}:{instance_name}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Performance ratio of one report, after re-evaluating its solution here.
pub fn ratio_from_report(instance: &Instance, report: &EvalReport) -> (f64, CandidateStatus) {
    if report.status != CandidateStatus::Valid {
        return (0.0, report.status);
    }
    let (Some(value), Some(claimed)) = (&report.solution, report.objective) else {
        return (0.0, CandidateStatus::InfeasibleOnly);
    };
    let objective = Solution::from_json(instance.kind(), value.clone())
        .and_then(|s| instance.evaluate(&s))
        .ok()
        .and_then(|o| o.objective());
    let Some(objective) = objective else { return (0.0, CandidateStatus::InfeasibleOnly) };
    if (objective - claimed).abs() > 1e-9 * objective.abs().max(1.0) {
        log::warn!("{}: reported objective {claimed} re-evaluates to {objective}", instance.name);
        return (0.0, CandidateStatus::RuntimeFailed);
    }
    match instance.ratio(objective) {
        Ok(r) => (r.value, CandidateStatus::Valid),
        Err(_) => (0.0, CandidateStatus::RuntimeFailed),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub run: u32,
    pub best: Option<CandidateAlgorithm>,
    pub pool: CandidatePool,
    pub library: PromptLibrary,
    pub attempts: u32,
    pub llm_calls: u32,
    pub accepted: BTreeMap<TemplateKind, u64>,
    /// Attempt numbers after which a template evolution ran, per kind.
    pub evolutions: Vec<(u32, TemplateKind)>,
    pub aborted: Option<String>,
}

impl RunResult {
    pub fn best_score(&self) -> f64 {
        self.best.as_ref().map_or(0.0, |c| c.score)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunIndexEntry {
    pub run: u32,
    pub ledger: PathBuf,
    pub best_candidate: Option<String>,
    pub best_score: f64,
    pub attempts: u32,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentIndex {
    pub task: String,
    pub runs: Vec<RunIndexEntry>,
    pub best_run: Option<u32>,
}

pub struct ExperimentResult {
    pub runs: Vec<RunResult>,
    /// Index into `runs` of the run with the best candidate; earlier runs win ties.
    pub best_run: Option<usize>,
}

impl ExperimentResult {
    pub fn best(&self) -> Option<&CandidateAlgorithm> {
        self.best_run.and_then(|i| self.runs[i].best.as_ref())
    }
}

fn template_kind(op: OpKind) -> TemplateKind {
    match op {
        OpKind::Crossover => TemplateKind::Crossover,
        _ => TemplateKind::Mutation,
    }
}

fn performance(score: f64) -> String {
    format!("{score:.6}")
}

/// One configured co-evolution experiment.
pub struct Coevolution<'a> {
    pub task: &'a Task,
    pub settings: &'a EvolutionSettings,
    pub code_options: RequestOptions,
    pub meta_options: RequestOptions,
    pub llm: &'a dyn LlmGateway,
    pub runner: &'a dyn CandidateRunner,
}

impl<'a> Coevolution<'a> {
    pub fn new(
        task: &'a Task,
        settings: &'a EvolutionSettings,
        llm: &'a dyn LlmGateway,
        runner: &'a dyn CandidateRunner,
    ) -> Self {
        Self {
            task,
            settings,
            code_options: RequestOptions::default(),
            meta_options: RequestOptions::default(),
            llm,
            runner,
        }
    }

    /// Scores `source` on `instances`: the mean ratio, failed instances counting 0.
    /// The candidate is valid only if it is valid on every instance.
    pub fn score_on(
        &self,
        instances: &[Instance],
        run_seed: u64,
        candidate_id: &str,
        source: &str,
    ) -> Result<Scored, RunnerError> {
        let jobs: Vec<EvalJob> = instances
            .iter()
            .enumerate()
            .map(|(i, inst)| EvalJob {
                source: source.to_owned(),
                instance: inst.to_json_value(),
                seed: instance_seed(run_seed, candidate_id, i, &inst.name),
                time_limit: self.settings.time_limit,
                max_evaluations: self.settings.max_evaluations,
            })
            .collect();
        let reports: Vec<Result<EvalReport, RunnerError>> = if self.settings.parallel_scoring && jobs.len() > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = jobs.iter().map(|j| s.spawn(|| self.runner.run_job(j))).collect();
                handles.into_iter().map(|h| h.join().expect("scoring thread")).collect()
            })
        } else {
            jobs.iter().map(|j| self.runner.run_job(j)).collect()
        };
        let mut instance_scores = Vec::with_capacity(instances.len());
        let mut instance_status = Vec::with_capacity(instances.len());
        for (inst, report) in instances.iter().zip(reports) {
            let (ratio, status) = ratio_from_report(inst, &report?);
            instance_scores.push(ratio);
            instance_status.push(status);
        }
        let status =
            instance_status.iter().copied().find(|s| *s != CandidateStatus::Valid).unwrap_or(CandidateStatus::Valid);
        let score =
            if instances.is_empty() { 0.0 } else { instance_scores.iter().sum::<f64>() / instances.len() as f64 };
        Ok(Scored { score, status, instance_scores, instance_status })
    }

    fn run_seed(&self, run: u32) -> u64 {
        self.settings.seed.wrapping_add(u64::from(run))
    }

    /// One independent run, journalled to `ledger`. LLM and runner failures end the
    /// run early with `aborted` set; the ledger then still closes with a summary.
    pub fn run(&self, run: u32, ledger: &mut LedgerWriter) -> Result<RunResult, EvolveError> {
        let s = self.settings;
        s.validate()?;
        let run_seed = self.run_seed(run);
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let mut library = PromptLibrary::seeded(s.template_capacity);
        let mut pool = CandidatePool::new(s.pool_capacity);
        let mut cache: HashMap<String, (Scored, String)> = HashMap::new();

        ledger.log(Event::RunStarted {
            run,
            seed: run_seed,
            pool_capacity: pool.capacity,
            template_capacity: s.template_capacity,
            max_candidates: s.max_candidates,
            evolution_period: s.evolution_period,
        })?;
        for kind in TemplateKind::ALL {
            let seed = &library.pool(kind).templates()[0];
            ledger.log(Event::TemplateEvolved {
                kind,
                template_id: Some(seed.id.clone()),
                parent_id: HAND_SEEDED.to_owned(),
                meta_id: None,
                generation: Some(seed.generation),
                body: Some(seed.body.clone()),
                evicted: None,
                attempts: 0,
                rejections: Vec::new(),
                accepted: 0,
            })?;
        }

        let seed_src = self.task.seed_source.clone();
        let seed_hash = code_hash(&seed_src);
        ledger.log(Event::CandidateGenerated {
            candidate_id: "c0".into(),
            op_kind: OpKind::Seed,
            parent_ids: Vec::new(),
            template_id: None,
            attempt: 0,
            llm_calls: 0,
            source: Some(seed_src.clone()),
            code_hash: Some(seed_hash.clone()),
        })?;
        let scored = self.score_on(&self.task.train, run_seed, "c0", &seed_src)?;
        if scored.status != CandidateStatus::Valid {
            return Err(EvolveError::SeedInvalid {
                status: scored.status,
                detail: format!("per-instance status {:?}", scored.instance_status),
            });
        }
        let seed_candidate = CandidateAlgorithm {
            id: "c0".into(),
            source: seed_src,
            parents: Vec::new(),
            template_id: None,
            op_kind: OpKind::Seed,
            score: scored.score,
            status: scored.status,
            code_hash: seed_hash.clone(),
            instance_scores: scored.instance_scores.clone(),
        };
        let update = pool.update(seed_candidate);
        ledger.log(Event::CandidateScored {
            candidate_id: "c0".into(),
            op_kind: OpKind::Seed,
            template_id: None,
            status: scored.status,
            score: scored.score,
            instance_scores: scored.instance_scores.clone(),
            baseline: None,
            gain: None,
            duplicate_of: None,
            inserted: matches!(update, PoolUpdate::Inserted { .. }),
            evicted: update.evicted().map(str::to_owned),
            best_so_far: pool.best().map_or(0.0, |c| c.score),
        })?;
        cache.insert(seed_hash, (scored, "c0".into()));

        let mut accepted: BTreeMap<TemplateKind, u64> = BTreeMap::new();
        let mut evolutions = Vec::new();
        let mut attempts = 0;
        let mut llm_calls = 0;
        let mut aborted = None;

        'attempts: for attempt in 1..=s.max_candidates {
            let draw: f64 = rng.random();
            let op = if draw < s.crossover_rate && pool.len() >= 2 { OpKind::Crossover } else { OpKind::Mutation };
            let kind = template_kind(op);
            let parents: Vec<CandidateAlgorithm> =
                pool.select_parents(op.arity(), &mut rng)?.into_iter().cloned().collect();
            let template = library.pool(kind).select(&mut rng)?.clone();
            ledger.log(Event::TemplateSelected { attempt, kind, template_id: template.id.clone() })?;

            let perfs: Vec<String> = parents.iter().map(|p| performance(p.score)).collect();
            let description = self.task.description.as_str();
            let prompt = match op {
                OpKind::Crossover => template.render(&[
                    ("problem_description", description),
                    ("current_code_1", &parents[0].source),
                    ("current_code_2", &parents[1].source),
                    ("current_performance_1", &perfs[0]),
                    ("current_performance_2", &perfs[1]),
                ])?,
                _ => template.render(&[
                    ("problem_description", description),
                    ("current_code", &parents[0].source),
                    ("current_performance", &perfs[0]),
                ])?,
            };

            let cid = format!("c{attempt}");
            let mut code = None;
            let mut calls = 0;
            for k in 1..=1 + s.extraction_retries {
                calls += 1;
                let request = self.code_options.request(prompt.clone(), format!("run{run}/{cid}/try{k}"));
                match self.llm.complete(&request) {
                    Ok(resp) => match extract_tagged_block(&resp.text, "code") {
                        Ok(c) if !c.is_empty() => {
                            code = Some(c);
                            break;
                        }
                        Ok(_) => log::debug!("{cid}: empty code block"),
                        Err(e) => log::debug!("{cid}: {e}"),
                    },
                    Err(e) => {
                        llm_calls += calls;
                        aborted = Some(format!("LLM failure at attempt {attempt}: {e}"));
                        break 'attempts;
                    }
                }
            }
            llm_calls += calls;
            attempts = attempt;
            let hash = code.as_deref().map(code_hash);
            ledger.log(Event::CandidateGenerated {
                candidate_id: cid.clone(),
                op_kind: op,
                parent_ids: parents.iter().map(|p| p.id.clone()).collect(),
                template_id: Some(template.id.clone()),
                attempt,
                llm_calls: calls,
                source: code.clone(),
                code_hash: hash.clone(),
            })?;

            let mut duplicate_of = None;
            let scored = match (&code, &hash) {
                (Some(src), Some(h)) => match cache.get(h) {
                    Some((sc, first)) => {
                        duplicate_of = Some(first.clone());
                        sc.clone()
                    }
                    None => match self.score_on(&self.task.train, run_seed, &cid, src) {
                        Ok(sc) => {
                            cache.insert(h.clone(), (sc.clone(), cid.clone()));
                            sc
                        }
                        Err(e) => {
                            aborted = Some(format!("runner failure at attempt {attempt}: {e}"));
                            break 'attempts;
                        }
                    },
                },
                _ => Scored {
                    score: 0.0,
                    status: CandidateStatus::ParseFailed,
                    instance_scores: vec![0.0; self.task.train.len()],
                    instance_status: vec![CandidateStatus::ParseFailed; self.task.train.len()],
                },
            };

            let baseline = parents.iter().map(|p| p.score).reduce(f64::max).expect("at least one parent");
            let gain = library.record_outcome(&template.id, baseline, scored.score)?;
            let update = pool.update(CandidateAlgorithm {
                id: cid.clone(),
                source: code.unwrap_or_default(),
                parents: parents.iter().map(|p| p.id.clone()).collect(),
                template_id: Some(template.id.clone()),
                op_kind: op,
                score: scored.score,
                status: scored.status,
                code_hash: hash.unwrap_or_default(),
                instance_scores: scored.instance_scores.clone(),
            });
            ledger.log(Event::CandidateScored {
                candidate_id: cid,
                op_kind: op,
                template_id: Some(template.id.clone()),
                status: scored.status,
                score: scored.score,
                instance_scores: scored.instance_scores,
                baseline: Some(baseline),
                gain: Some(gain),
                duplicate_of,
                inserted: matches!(update, PoolUpdate::Inserted { .. }),
                evicted: update.evicted().map(str::to_owned),
                best_so_far: pool.best().map_or(0.0, |c| c.score),
            })?;

            if scored.status != CandidateStatus::Valid {
                continue;
            }
            let count = accepted.entry(kind).or_insert(0);
            *count += 1;
            if !count.is_multiple_of(u64::from(s.evolution_period)) {
                continue;
            }
            let count = *count;
            let tag = format!("run{run}/evolve-{}-{}", kind.prefix(), count / u64::from(s.evolution_period));
            match evolve_template(&mut library, kind, self.llm, &self.meta_options, &tag, s.evolve_attempts) {
                Ok(out) => {
                    llm_calls += out.attempts;
                    let child = out.inserted.as_deref().and_then(|id| library.get(id));
                    ledger.log(Event::TemplateEvolved {
                        kind,
                        template_id: out.inserted.clone(),
                        parent_id: out.parent_id.clone(),
                        meta_id: Some(out.meta_id.clone()),
                        generation: child.map(|t| t.generation),
                        body: child.map(|t| t.body.clone()),
                        evicted: out.evicted.clone(),
                        attempts: out.attempts,
                        rejections: out.rejections.clone(),
                        accepted: count,
                    })?;
                    evolutions.push((attempt, kind));
                }
                Err(PromptError::Llm(e)) => {
                    aborted = Some(format!("LLM failure during {kind} template evolution: {e}"));
                    break 'attempts;
                }
                Err(e) => return Err(e.into()),
            }
        }

        if let Some(reason) = &aborted {
            log::error!("run {run} aborted: {reason}");
        }
        ledger.log(Event::RunSummary {
            best_candidate_id: pool.best().map(|c| c.id.clone()),
            best_score: pool.best().map_or(0.0, |c| c.score),
            attempts,
            llm_calls,
            aborted: aborted.clone(),
            pool: pool.entries().iter().map(|c| c.id.clone()).collect(),
            templates: TemplateKind::ALL
                .into_iter()
                .flat_map(|k| library.pool(k).templates().iter().map(TemplateSnapshot::of))
                .collect(),
        })?;

        Ok(RunResult {
            run,
            best: pool.best().cloned(),
            pool,
            library,
            attempts,
            llm_calls,
            accepted,
            evolutions,
            aborted,
        })
    }

    /// All independent runs. With `out_dir`, each run writes `run-<i>/` (ledger,
    /// pools, template store, best candidate, score table) and `index.json` lists them.
    pub fn run_all(&self, out_dir: Option<&Path>) -> Result<ExperimentResult, EvolveError> {
        let mut runs = Vec::new();
        let mut index = ExperimentIndex { task: self.task.name.clone(), runs: Vec::new(), best_run: None };
        for run in 0..self.settings.independent_runs {
            let result = match out_dir {
                Some(dir) => {
                    let run_dir = dir.join(format!("run-{run}"));
                    let ledger_path = run_dir.join("ledger.jsonl");
                    let mut ledger = LedgerWriter::create(&ledger_path, self.settings.clock)?;
                    let result = self.run(run, &mut ledger)?;
                    self.write_run(&run_dir, &result)?;
                    index.runs.push(RunIndexEntry {
                        run,
                        ledger: PathBuf::from(format!("run-{run}/ledger.jsonl")),
                        best_candidate: result.best.as_ref().map(|c| c.id.clone()),
                        best_score: result.best_score(),
                        attempts: result.attempts,
                        aborted: result.aborted.clone(),
                    });
                    result
                }
                None => self.run(run, &mut LedgerWriter::in_memory(self.settings.clock))?,
            };
            runs.push(result);
        }
        let best_run =
            (0..runs.len()).reduce(|b, i| if runs[i].best_score() > runs[b].best_score() { i } else { b });
        if let Some(dir) = out_dir {
            index.best_run = best_run.map(|i| runs[i].run);
            std::fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index).expect("index serialises"))?;
        }
        Ok(ExperimentResult { runs, best_run })
    }

    fn write_run(&self, dir: &Path, result: &RunResult) -> Result<(), EvolveError> {
        #[derive(Serialize)]
        struct Pools<'p> {
            candidates: &'p CandidatePool,
            templates: &'p PromptLibrary,
        }
        let pools = Pools { candidates: &result.pool, templates: &result.library };
        std::fs::write(dir.join("pools.json"), serde_json::to_string_pretty(&pools).expect("pools serialise"))?;
        result.library.save(&dir.join("templates"))?;

        let Some(best) = &result.best else { return Ok(()) };
        std::fs::write(dir.join("best_candidate.txt"), &best.source)?;
        let test = if self.task.test.is_empty() {
            None
        } else {
            Some(self.score_on(&self.task.test, self.run_seed(result.run), &best.id, &best.source)?)
        };
        let mut w = csv::Writer::from_path(dir.join("scores.csv")).map_err(|e| EvolveError::Io(e.into()))?;
        let csv_err = |e: csv::Error| EvolveError::Io(e.into());
        w.write_record(["split", "instance", "ratio", "status"]).map_err(csv_err)?;
        for (i, inst) in self.task.train.iter().enumerate() {
            // Pool members are valid on every training instance.
            w.write_record(["train", &inst.name, &best.instance_scores[i].to_string(), "valid"]).map_err(csv_err)?;
        }
        if let Some(t) = test {
            for ((inst, r), st) in self.task.test.iter().zip(&t.instance_scores).zip(&t.instance_status) {
                w.write_record(["test", &inst.name, &r.to_string(), st.as_str()]).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
