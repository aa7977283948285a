//! Append-only run journal. One JSON record per line; sequence numbers start at 1
//! and increase by one.
//!
//! Replay rebuilds the template library and the candidate pool from the records
//! alone and cross-checks every logged gain, insertion and eviction on the way.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::{CandidateAlgorithm, CandidatePool, OpKind, PoolUpdate};
use crate::prompt::{PromptLibrary, PromptTemplate, TemplateKind, TemplateStats, HAND_SEEDED};
use crate::runner::CandidateStatus;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("record seq {got} out of order, expected {expected}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("replay diverged at seq {seq}: {message}")]
    Mismatch { seq: u64, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSnapshot {
    pub id: String,
    pub uses: u64,
    pub cumulative_gain: f64,
    pub perf_estimate: f64,
}

impl TemplateSnapshot {
    pub fn of(t: &PromptTemplate) -> Self {
        Self { id: t.id.clone(), uses: t.stats.uses, cumulative_gain: t.stats.cumulative_gain, perf_estimate: t.perf_estimate() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RunStarted {
        run: u32,
        seed: u64,
        pool_capacity: usize,
        template_capacity: usize,
        max_candidates: u32,
        evolution_period: u32,
    },
    CandidateGenerated {
        candidate_id: String,
        op_kind: OpKind,
        parent_ids: Vec<String>,
        template_id: Option<String>,
        /// 1-based generation attempt; 0 for the seed.
        attempt: u32,
        llm_calls: u32,
        /// Extracted program, absent when no code block came back.
        source: Option<String>,
        code_hash: Option<String>,
    },
    CandidateScored {
        candidate_id: String,
        op_kind: OpKind,
        template_id: Option<String>,
        status: CandidateStatus,
        score: f64,
        instance_scores: Vec<f64>,
        /// Score the gain is measured against: the parent, or the better parent.
        baseline: Option<f64>,
        gain: Option<f64>,
        /// Candidate whose cached score was reused.
        duplicate_of: Option<String>,
        inserted: bool,
        evicted: Option<String>,
        best_so_far: f64,
    },
    TemplateSelected {
        attempt: u32,
        kind: TemplateKind,
        template_id: String,
    },
    TemplateEvolved {
        kind: TemplateKind,
        /// New template id; absent when every response was rejected.
        template_id: Option<String>,
        parent_id: String,
        meta_id: Option<String>,
        generation: Option<u32>,
        body: Option<String>,
        evicted: Option<String>,
        attempts: u32,
        rejections: Vec<String>,
        /// Valid candidates of this kind so far; 0 for the hand-written seeds.
        accepted: u64,
    },
    RunSummary {
        best_candidate_id: Option<String>,
        best_score: f64,
        attempts: u32,
        llm_calls: u32,
        aborted: Option<String>,
        pool: Vec<String>,
        templates: Vec<TemplateSnapshot>,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::RunStarted { .. } => "run_started",
            Event::CandidateGenerated { .. } => "candidate_generated",
            Event::CandidateScored { .. } => "candidate_scored",
            Event::TemplateSelected { .. } => "template_selected",
            Event::TemplateEvolved { .. } => "template_evolved",
            Event::RunSummary { .. } => "run_summary",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub seq: u64,
    pub timestamp: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Timestamp equals the sequence number, keeping ledgers byte-reproducible.
    Logical,
    /// Seconds since the Unix epoch.
    Wall,
}

pub struct LedgerWriter {
    sink: Box<dyn Write + Send>,
    last_seq: u64,
    clock: Clock,
    records: Vec<LedgerRecord>,
}

impl LedgerWriter {
    pub fn new(sink: Box<dyn Write + Send>, clock: Clock) -> Self {
        Self { sink, last_seq: 0, clock, records: Vec::new() }
    }

    pub fn create(path: &Path, clock: Clock) -> Result<Self, LedgerError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self::new(Box::new(BufWriter::new(File::create(path)?)), clock))
    }

    /// Keeps records in memory only.
    pub fn in_memory(clock: Clock) -> Self {
        Self::new(Box::new(std::io::sink()), clock)
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LedgerRecord> {
        self.records
    }

    /// Writes `record` and flushes. Its seq must follow the previous one.
    pub fn append(&mut self, record: LedgerRecord) -> Result<(), LedgerError> {
        if record.seq != self.last_seq + 1 {
            return Err(LedgerError::OutOfOrder { expected: self.last_seq + 1, got: record.seq });
        }
        let line = serde_json::to_string(&record).expect("record serialises");
        self.sink.write_all(line.as_bytes())?;
        self.sink.write_all(b"\n")?;
        self.sink.flush()?;
        self.last_seq = record.seq;
        self.records.push(record);
        Ok(())
    }

    /// Stamps and appends an event.
    pub fn log(&mut self, event: Event) -> Result<(), LedgerError> {
        let seq = self.last_seq + 1;
        let timestamp = match self.clock {
            Clock::Logical => seq as f64,
            Clock::Wall => SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        };
        self.append(LedgerRecord { seq, timestamp, event })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Last record that was read intact.
    pub after_seq: u64,
    pub reason: String,
}

/// Parsed ledger. A damaged tail stops reading and is reported as truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerContents {
    pub records: Vec<LedgerRecord>,
    pub truncated: Option<Truncation>,
}

pub fn read_ledger(path: &Path) -> Result<LedgerContents, LedgerError> {
    parse_ledger(BufReader::new(File::open(path)?))
}

pub fn parse_ledger<R: BufRead>(input: R) -> Result<LedgerContents, LedgerError> {
    let mut records: Vec<LedgerRecord> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let after_seq = records.last().map_or(0, |r| r.seq);
        match serde_json::from_str::<LedgerRecord>(&line) {
            Ok(r) if r.seq == after_seq + 1 => records.push(r),
            Ok(r) => {
                return Err(LedgerError::Parse { line: i + 1, message: format!("seq {} follows {after_seq}", r.seq) })
            }
            Err(e) => {
                return Ok(LedgerContents {
                    records,
                    truncated: Some(Truncation { after_seq, reason: format!("line {}: {e}", i + 1) }),
                })
            }
        }
    }
    Ok(LedgerContents { records, truncated: None })
}

/// State rebuilt from a ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayState {
    pub library: Option<PromptLibrary>,
    pub pool: Option<CandidatePool>,
    pub best_so_far: f64,
    pub attempts: u32,
    pub completed: bool,
    pub truncated: Option<Truncation>,
}

impl ReplayState {
    pub fn template_stats(&self) -> BTreeMap<String, TemplateStats> {
        let mut out = BTreeMap::new();
        if let Some(lib) = &self.library {
            for kind in TemplateKind::ALL {
                for t in lib.pool(kind).templates() {
                    out.insert(t.id.clone(), t.stats.clone());
                }
            }
        }
        out
    }
}

fn mismatch(seq: u64, message: impl Into<String>) -> LedgerError {
    LedgerError::Mismatch { seq, message: message.into() }
}

fn check<T: PartialEq + std::fmt::Debug>(seq: u64, what: &str, logged: &T, derived: &T) -> Result<(), LedgerError> {
    if logged == derived {
        Ok(())
    } else {
        Err(mismatch(seq, format!("{what}: logged {logged:?}, derived {derived:?}")))
    }
}

type Generated = (OpKind, Vec<String>, Option<String>, Option<String>, Option<String>);

/// Applies records one at a time, checking each against the rebuilt state.
pub struct Replayer {
    state: ReplayState,
    generated: HashMap<String, Generated>,
    scores: HashMap<String, f64>,
}

impl Default for Replayer {
    fn default() -> Self {
        Self::new()
    }
}

impl Replayer {
    pub fn new() -> Self {
        Self {
            state: ReplayState {
                library: None,
                pool: None,
                best_so_far: 0.0,
                attempts: 0,
                completed: false,
                truncated: None,
            },
            generated: HashMap::new(),
            scores: HashMap::new(),
        }
    }

    pub fn state(&self) -> &ReplayState {
        &self.state
    }

    pub fn apply(&mut self, rec: &LedgerRecord) -> Result<(), LedgerError> {
        let state = &mut self.state;
        let seq = rec.seq;
        if state.completed {
            return Err(mismatch(seq, "record after run_summary"));
        }
        match &rec.event {
            Event::RunStarted { pool_capacity, template_capacity, .. } => {
                if state.library.is_some() {
                    return Err(mismatch(seq, "second run_started"));
                }
                state.library = Some(PromptLibrary::seeded(*template_capacity));
                state.pool = Some(CandidatePool::new(*pool_capacity));
            }
            Event::TemplateEvolved { kind, template_id, parent_id, body, evicted, generation, .. } => {
                let lib = state.library.as_mut().ok_or_else(|| mismatch(seq, "event before run_started"))?;
                if parent_id == HAND_SEEDED {
                    let seed = PromptTemplate::seed(*kind);
                    check(seq, "seed id", template_id, &Some(seed.id.clone()))?;
                    check(seq, "seed body", body, &Some(seed.body))?;
                    return Ok(());
                }
                let (Some(id), Some(body)) = (template_id, body) else { return Ok(()) };
                let (new_id, new_evicted) =
                    lib.pool_mut(*kind).insert_child(parent_id, body.clone()).map_err(|e| mismatch(seq, e.to_string()))?;
                check(seq, "template id", id, &new_id)?;
                check(seq, "template eviction", evicted, &new_evicted)?;
                check(seq, "generation", generation, &lib.get(id).map(|t| t.generation))?;
            }
            Event::TemplateSelected { template_id, .. } => {
                let lib = state.library.as_ref().ok_or_else(|| mismatch(seq, "event before run_started"))?;
                if lib.get(template_id).is_none() {
                    return Err(mismatch(seq, format!("selected template {template_id} not in pool")));
                }
            }
            Event::CandidateGenerated { candidate_id, op_kind, parent_ids, template_id, attempt, source, code_hash, .. } => {
                if *op_kind != OpKind::Seed {
                    state.attempts = *attempt;
                }
                if let (Some(src), Some(h)) = (source, code_hash) {
                    check(seq, "code hash", h, &crate::evolve::code_hash(src))?;
                }
                self.generated.insert(
                    candidate_id.clone(),
                    (*op_kind, parent_ids.clone(), template_id.clone(), source.clone(), code_hash.clone()),
                );
            }
            Event::CandidateScored {
                candidate_id,
                template_id,
                status,
                score,
                instance_scores,
                baseline,
                gain,
                inserted,
                evicted,
                best_so_far,
                ..
            } => {
                let (op_kind, parents, gen_template, source, hash) = self
                    .generated
                    .get(candidate_id)
                    .cloned()
                    .ok_or_else(|| mismatch(seq, format!("{candidate_id} scored before it was generated")))?;
                check(seq, "template", template_id, &gen_template)?;
                let parent_scores: Vec<f64> = parents
                    .iter()
                    .map(|p| self.scores.get(p).copied().ok_or_else(|| mismatch(seq, format!("unknown parent {p}"))))
                    .collect::<Result<_, _>>()?;
                let derived_baseline = parent_scores.iter().copied().reduce(f64::max);
                check(seq, "baseline", baseline, &derived_baseline)?;
                let derived_gain = derived_baseline.map(|b| score - b);
                check(seq, "gain", gain, &derived_gain)?;
                self.scores.insert(candidate_id.clone(), *score);

                let lib = state.library.as_mut().ok_or_else(|| mismatch(seq, "event before run_started"))?;
                if let (Some(t), Some(g)) = (template_id, derived_gain) {
                    lib.pool_mut(TemplateKind::from_id(t).ok_or_else(|| mismatch(seq, format!("bad id {t}")))?)
                        .record_gain(t, g)
                        .map_err(|e| mismatch(seq, e.to_string()))?;
                }
                let pool = state.pool.as_mut().expect("pool set with library");
                let update = pool.update(CandidateAlgorithm {
                    id: candidate_id.clone(),
                    source: source.unwrap_or_default(),
                    parents,
                    template_id: template_id.clone(),
                    op_kind,
                    score: *score,
                    status: *status,
                    code_hash: hash.unwrap_or_default(),
                    instance_scores: instance_scores.clone(),
                });
                check(seq, "inserted", inserted, &matches!(update, PoolUpdate::Inserted { .. }))?;
                check(seq, "evicted", &evicted.as_deref(), &update.evicted())?;
                let best = pool.best().map_or(0.0, |c| c.score);
                check(seq, "best so far", best_so_far, &best)?;
                state.best_so_far = best;
            }
            Event::RunSummary { best_candidate_id, best_score, attempts, pool: ids, templates, .. } => {
                let pool = state.pool.as_ref().ok_or_else(|| mismatch(seq, "summary before run_started"))?;
                let lib = state.library.as_ref().expect("library set with pool");
                check(seq, "best candidate", best_candidate_id, &pool.best().map(|c| c.id.clone()))?;
                check(seq, "best score", best_score, &state.best_so_far)?;
                check(seq, "attempts", attempts, &state.attempts)?;
                check(seq, "pool", ids, &pool.entries().iter().map(|c| c.id.clone()).collect::<Vec<_>>())?;
                let derived: Vec<TemplateSnapshot> = TemplateKind::ALL
                    .into_iter()
                    .flat_map(|k| lib.pool(k).templates().iter().map(TemplateSnapshot::of))
                    .collect();
                check(seq, "templates", templates, &derived)?;
                state.completed = true;
            }
        }
        Ok(())
    }

    /// Final state; a ledger without a closing summary is flagged as truncated.
    pub fn finish(mut self, truncated: Option<Truncation>, last_seq: u64) -> ReplayState {
        self.state.truncated = truncated;
        if !self.state.completed && self.state.truncated.is_none() {
            self.state.truncated = Some(Truncation { after_seq: last_seq, reason: "no run_summary record".into() });
        }
        self.state
    }
}

/// Rebuilds pools and template statistics from a parsed ledger.
pub fn replay(contents: &LedgerContents) -> Result<ReplayState, LedgerError> {
    let mut r = Replayer::new();
    for rec in &contents.records {
        r.apply(rec)?;
    }
    Ok(r.finish(contents.truncated.clone(), contents.records.last().map_or(0, |r| r.seq)))
}

/// One point of the search trajectory. Candidate rows have a score; template-update
/// rows carry the new template id and no score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub candidate_index: u32,
    pub candidate_id: Option<String>,
    pub score: Option<f64>,
    pub best_so_far: f64,
    pub template_id: Option<String>,
    /// Best mutation template at this moment.
    pub best_template: Option<String>,
    pub template_update: bool,
}

/// Trajectory table: candidates in order, with a row at every template update.
pub fn report_trajectory(records: &[LedgerRecord]) -> Result<Vec<TrajectoryRow>, LedgerError> {
    let mut rows = Vec::new();
    let mut replayer = Replayer::new();
    let mut index = 0;
    for rec in records {
        replayer.apply(rec)?;
        match &rec.event {
            Event::CandidateGenerated { attempt, .. } => {
                index = *attempt;
                continue;
            }
            Event::CandidateScored { candidate_id, score, best_so_far, template_id, .. } => {
                rows.push(TrajectoryRow {
                    candidate_index: index,
                    candidate_id: Some(candidate_id.clone()),
                    score: Some(*score),
                    best_so_far: *best_so_far,
                    template_id: template_id.clone(),
                    best_template: None,
                    template_update: false,
                });
            }
            Event::TemplateEvolved { template_id: Some(id), parent_id, .. } if parent_id != HAND_SEEDED => {
                rows.push(TrajectoryRow {
                    candidate_index: index,
                    candidate_id: None,
                    score: None,
                    best_so_far: rows.last().map_or(0.0, |r: &TrajectoryRow| r.best_so_far),
                    template_id: Some(id.clone()),
                    best_template: None,
                    template_update: true,
                });
            }
            _ => continue,
        }
        let lib = replayer.state().library.as_ref();
        let best = lib.and_then(|l| l.pool(TemplateKind::Mutation).best().ok().map(|t| t.id.clone()));
        rows.last_mut().expect("row pushed").best_template = best;
    }
    Ok(rows)
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> Result<(), LedgerError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: std::io::Read>(input: R) -> Result<Vec<TrajectoryRow>, LedgerError> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(LedgerError::from)).collect()
}
