//! Per-kind template pools: attribution, rank selection, evolution through the meta
//! template, capacity-bounded eviction and a directory store.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{extract_tagged_block, render_prompt, template_slots, PromptError, PromptTemplate, TemplateKind, TemplateStats};
use crate::llm::{LlmGateway, RequestOptions};
use crate::selection::{rank_probabilities, sample_index};

/// Templates with at least this many uses are preferred for eviction.
pub const EVICTION_MIN_USES: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplatePool {
    pub kind: TemplateKind,
    pub capacity: usize,
    next_serial: u64,
    /// Oldest first.
    templates: Vec<PromptTemplate>,
}

impl TemplatePool {
    /// A pool holding only the hand-written seed.
    pub fn seeded(kind: TemplateKind, capacity: usize) -> Self {
        Self { kind, capacity: capacity.max(2), next_serial: 1, templates: vec![PromptTemplate::seed(kind)] }
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    fn estimates(&self) -> Vec<f64> {
        self.templates.iter().map(PromptTemplate::perf_estimate).collect()
    }

    fn best_index(&self) -> Option<usize> {
        let est = self.estimates();
        // First maximum: older wins ties.
        (0..est.len()).reduce(|b, i| if est[i] > est[b] { i } else { b })
    }

    /// Highest estimate, older first on ties.
    pub fn best(&self) -> Result<&PromptTemplate, PromptError> {
        self.best_index().map(|i| &self.templates[i]).ok_or(PromptError::EmptyPool(self.kind))
    }

    pub fn probabilities(&self) -> Result<Vec<f64>, PromptError> {
        rank_probabilities(&self.estimates()).map_err(|_| PromptError::EmptyPool(self.kind))
    }

    /// Rank-law draw over the current estimates.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&PromptTemplate, PromptError> {
        let probs = self.probabilities()?;
        Ok(&self.templates[sample_index(&probs, rng)])
    }

    /// Credits `gain` to the template and returns its new estimate.
    pub fn record_gain(&mut self, id: &str, gain: f64) -> Result<f64, PromptError> {
        let t = self
            .templates
            .iter_mut()
            .find(|t| t.id == id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_owned()))?;
        t.stats.record(gain);
        Ok(t.perf_estimate())
    }

    /// Adds a child of `parent_id` carrying the parent's estimate as its prior. Returns
    /// the new id and the id evicted to stay within capacity, if any.
    pub fn insert_child(&mut self, parent_id: &str, body: String) -> Result<(String, Option<String>), PromptError> {
        let parent = self.get(parent_id).ok_or_else(|| PromptError::UnknownTemplate(parent_id.to_owned()))?;
        let child = PromptTemplate {
            id: format!("{}-{}", self.kind.prefix(), self.next_serial),
            kind: self.kind,
            serial: self.next_serial,
            generation: parent.generation + 1,
            body,
            created_from: parent.id.clone(),
            stats: TemplateStats::with_prior(parent.perf_estimate()),
        };
        self.next_serial += 1;
        let id = child.id.clone();
        self.templates.push(child);
        let evicted = if self.templates.len() > self.capacity { Some(self.evict()) } else { None };
        Ok((id, evicted))
    }

    /// Removes the worst template among those used often enough; otherwise the worst
    /// that is neither the best nor the newest. Newer loses ties.
    fn evict(&mut self) -> String {
        let est = self.estimates();
        let best = self.best_index().expect("nonempty pool");
        let newest = self.templates.len() - 1;
        let worst_of = |pred: &dyn Fn(usize) -> bool| {
            (0..est.len()).filter(|&i| i != best && pred(i)).reduce(|w, i| if est[i] <= est[w] { i } else { w })
        };
        let victim = worst_of(&|i| self.templates[i].stats.uses >= EVICTION_MIN_USES)
            .or_else(|| worst_of(&|i| i != newest))
            .expect("capacity of at least two leaves a candidate");
        self.templates.remove(victim).id
    }
}

/// Mutation, crossover and meta pools of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptLibrary {
    pools: BTreeMap<TemplateKind, TemplatePool>,
}

#[derive(Serialize, Deserialize)]
struct StoreIndex {
    pools: BTreeMap<TemplateKind, StorePool>,
}

#[derive(Serialize, Deserialize)]
struct StorePool {
    capacity: usize,
    next_serial: u64,
    ids: Vec<String>,
}

impl PromptLibrary {
    pub fn seeded(capacity: usize) -> Self {
        Self { pools: TemplateKind::ALL.into_iter().map(|k| (k, TemplatePool::seeded(k, capacity))).collect() }
    }

    pub fn pool(&self, kind: TemplateKind) -> &TemplatePool {
        &self.pools[&kind]
    }

    pub fn pool_mut(&mut self, kind: TemplateKind) -> &mut TemplatePool {
        self.pools.get_mut(&kind).expect("every kind has a pool")
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.pool(TemplateKind::from_id(id)?).get(id)
    }

    /// Credits `child_score - parent_score` to template `id` and returns the gain.
    pub fn record_outcome(&mut self, id: &str, parent_score: f64, child_score: f64) -> Result<f64, PromptError> {
        let kind = TemplateKind::from_id(id).ok_or_else(|| PromptError::UnknownTemplate(id.to_owned()))?;
        let gain = child_score - parent_score;
        self.pool_mut(kind).record_gain(id, gain)?;
        Ok(gain)
    }

    /// Writes one JSON record per template plus `library.json` listing pool order.
    pub fn save(&self, dir: &Path) -> Result<(), PromptError> {
        std::fs::create_dir_all(dir)?;
        let mut index = StoreIndex { pools: BTreeMap::new() };
        for (kind, pool) in &self.pools {
            for t in &pool.templates {
                write_json(&dir.join(format!("{}.json", t.id)), t)?;
            }
            index.pools.insert(
                *kind,
                StorePool {
                    capacity: pool.capacity,
                    next_serial: pool.next_serial,
                    ids: pool.templates.iter().map(|t| t.id.clone()).collect(),
                },
            );
        }
        write_json(&dir.join("library.json"), &index)
    }

    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let index: StoreIndex = read_json(&dir.join("library.json"))?;
        let mut pools = BTreeMap::new();
        for kind in TemplateKind::ALL {
            let sp = index.pools.get(&kind).ok_or_else(|| PromptError::Store(format!("no {kind} pool in index")))?;
            let mut templates = Vec::with_capacity(sp.ids.len());
            for id in &sp.ids {
                let t: PromptTemplate = read_json(&dir.join(format!("{id}.json")))?;
                if t.kind != kind || &t.id != id {
                    return Err(PromptError::Store(format!("record {id} does not match its index entry")));
                }
                templates.push(t);
            }
            pools.insert(kind, TemplatePool { kind, capacity: sp.capacity, next_serial: sp.next_serial, templates });
        }
        Ok(Self { pools })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PromptError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PromptError::Store(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PromptError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| PromptError::Store(format!("{}: {e}", path.display())))
}

/// Checks an evolved body: exactly the kind's slots, the code-tag instruction, and a
/// clean render on placeholder values.
pub fn validate_body(kind: TemplateKind, body: &str) -> Result<(), PromptError> {
    let slots = template_slots(body);
    for s in kind.slots() {
        if !slots.contains(*s) {
            return Err(PromptError::Invalid(format!("slot {{{s}}} is missing")));
        }
    }
    if let Some(extra) = slots.iter().find(|s| !kind.slots().contains(&s.as_str())) {
        return Err(PromptError::Invalid(format!("unknown slot {{{extra}}}")));
    }
    let dummy: Vec<(&str, &str)> = kind.slots().iter().map(|s| (*s, "X")).collect();
    let rendered = render_prompt(kind, body, &dummy)?;
    if !(rendered.contains("<code>") && rendered.contains("</code>")) {
        return Err(PromptError::Invalid("no instruction to wrap code in <code></code>".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOutcome {
    pub kind: TemplateKind,
    pub parent_id: String,
    pub meta_id: String,
    pub attempts: u32,
    pub inserted: Option<String>,
    pub evicted: Option<String>,
    /// One reason per rejected response.
    pub rejections: Vec<String>,
}

/// Asks the LLM, through the best meta template, to rewrite the best template of
/// `kind`. Invalid responses are retried up to `max_attempts` calls in total; after
/// that the pool is left unchanged. LLM transport errors are returned as errors.
pub fn evolve_template(
    library: &mut PromptLibrary,
    kind: TemplateKind,
    llm: &dyn LlmGateway,
    options: &RequestOptions,
    tag: &str,
    max_attempts: u32,
) -> Result<EvolveOutcome, PromptError> {
    if kind == TemplateKind::Meta {
        return Err(PromptError::Invalid("meta templates are not evolved".into()));
    }
    let parent = library.pool(kind).best()?.clone();
    let meta = library.pool(TemplateKind::Meta).best()?.clone();
    let prompt = meta.render(&[("old_prompt", &parent.body)])?;
    let mut outcome = EvolveOutcome {
        kind,
        parent_id: parent.id.clone(),
        meta_id: meta.id.clone(),
        attempts: 0,
        inserted: None,
        evicted: None,
        rejections: Vec::new(),
    };
    for attempt in 1..=max_attempts {
        outcome.attempts = attempt;
        let response = llm.complete(&options.request(prompt.clone(), format!("{tag}/a{attempt}")))?;
        let body = extract_tagged_block(&response.text, "prompt").and_then(|b| validate_body(kind, &b).map(|()| b));
        match body {
            Ok(body) => {
                let (id, evicted) = library.pool_mut(kind).insert_child(&parent.id, body)?;
                outcome.inserted = Some(id);
                outcome.evicted = evicted;
                return Ok(outcome);
            }
            Err(e) => outcome.rejections.push(e.to_string()),
        }
    }
    log::warn!("{kind} template evolution skipped after {max_attempts} invalid responses");
    Ok(outcome)
}
