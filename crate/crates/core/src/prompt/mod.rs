//! Slotted prompt templates and their rendering.
//!
//! A template body is plain text with `{slot}` placeholders; `{{` and `}}` stand for
//! literal braces. A brace that does not open a well-formed `{identifier}` is kept
//! as-is, so evolved bodies may quote JSON or code without escaping.

mod pool;

pub use pool::{evolve_template, validate_body, EvolveOutcome, PromptLibrary, TemplatePool};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("slot {{{0}}} was not supplied")]
    MissingSlot(String),
    #[error("no <{0}> block in response")]
    NoBlock(String),
    #[error("<{0}> block is not terminated")]
    Unterminated(String),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("no {0} templates in the pool")]
    EmptyPool(TemplateKind),
    #[error("invalid template: {0}")]
    Invalid(String),
    #[error("template store: {0}")]
    Store(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Mutation,
    Crossover,
    Meta,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 3] = [TemplateKind::Mutation, TemplateKind::Crossover, TemplateKind::Meta];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::Mutation => "mutation",
            TemplateKind::Crossover => "crossover",
            TemplateKind::Meta => "meta",
        }
    }

    /// Prefix of template ids, as in `mut-3`.
    pub fn prefix(self) -> &'static str {
        match self {
            TemplateKind::Mutation => "mut",
            TemplateKind::Crossover => "cx",
            TemplateKind::Meta => "meta",
        }
    }

    pub fn from_id(id: &str) -> Option<TemplateKind> {
        let prefix = id.rsplit_once('-')?.0;
        TemplateKind::ALL.into_iter().find(|k| k.prefix() == prefix)
    }

    /// Slots every body of this kind must reference.
    pub fn slots(self) -> &'static [&'static str] {
        match self {
            TemplateKind::Mutation => &["problem_description", "current_code", "current_performance"],
            TemplateKind::Crossover => &[
                "problem_description",
                "current_code_1",
                "current_code_2",
                "current_performance_1",
                "current_performance_2",
            ],
            TemplateKind::Meta => &["old_prompt"],
        }
    }

    pub fn seed_body(self) -> &'static str {
        match self {
            TemplateKind::Mutation => SEED_MUTATION,
            TemplateKind::Crossover => SEED_CROSSOVER,
            TemplateKind::Meta => SEED_META,
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const SEED_MUTATION: &str = "You are an expert in combinatorial optimization and firework algorithms, \
now you are faced with a problem: {problem_description}.\n\
I will show you one firework algorithm for solving it:{current_code}. \
Its performance is {current_performance}. The higher performance, the better.\n\
1. Choose exactly one function in 'explode', 'mutate' or 'select' and replace it with your new design\n\
2. Redesign only the chosen function, keeping input/output unchanged\n\
3. Return complete code in format: <code>xxx</code> without explanations";

const SEED_CROSSOVER: &str = "You are an expert in combinatorial optimization and firework algorithms, \
now you are faced with a problem: {problem_description}.\n\
I will show you two firework algorithms for solving it.\n\
First algorithm: {current_code_1}\n\
Performance: {current_performance_1}\n\n\
Second algorithm: {current_code_2}\n\
Performance: {current_performance_2}\n\
The higher performance, the better.\n\
1. Perform crossover on 'explode', 'mutate' and 'select' functions using elements from both algorithms\n\
2. Maintain original input/output interfaces for all functions\n\
3. Return complete code in format: <code>xxx</code> without explanations";

const SEED_META: &str = "You are an expert in prompt engineer. \
I have a function for generating prompt below: {old_prompt}, \
please help me to make it more powerful and appropriate for automatic algorithm design.\n\
You can only modify the 'introduction', 'current_fwa', and 'requirements' fields, \
not the input and output of the function, and make sure that this prompt allows the large \
language model to put the returned code in <code>xxx</code> for easy parsing.\n\
Keep every placeholder written in curly braces exactly as it appears, and write the result \
as plain prompt text rather than a program.\n\
Only return the code of the function for generating the prompt in <prompt>xxx</prompt>. \
Do not explain anything";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplateStats {
    pub uses: u64,
    /// Gains summed in the order they were recorded.
    pub cumulative_gain: f64,
    /// Estimate reported while `uses == 0`.
    pub prior: f64,
}

impl TemplateStats {
    pub fn with_prior(prior: f64) -> Self {
        Self { uses: 0, cumulative_gain: 0.0, prior }
    }

    pub fn record(&mut self, gain: f64) {
        self.uses += 1;
        self.cumulative_gain += gain;
    }

    pub fn perf_estimate(&self) -> f64 {
        if self.uses == 0 {
            self.prior
        } else {
            self.cumulative_gain / self.uses as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub kind: TemplateKind,
    /// Creation order within the kind; smaller is older.
    pub serial: u64,
    pub generation: u32,
    pub body: String,
    /// Parent template id, or `hand-seeded`.
    pub created_from: String,
    pub stats: TemplateStats,
}

pub const HAND_SEEDED: &str = "hand-seeded";

impl PromptTemplate {
    pub fn seed(kind: TemplateKind) -> Self {
        Self {
            id: format!("{}-0", kind.prefix()),
            kind,
            serial: 0,
            generation: 0,
            body: kind.seed_body().to_owned(),
            created_from: HAND_SEEDED.to_owned(),
            stats: TemplateStats::default(),
        }
    }

    pub fn perf_estimate(&self) -> f64 {
        self.stats.perf_estimate()
    }

    pub fn render(&self, slots: &[(&str, &str)]) -> Result<String, PromptError> {
        render_prompt(self.kind, &self.body, slots)
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_slot_char(c: u8) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == b'_'
}

fn parse(body: &str) -> Vec<Piece<'_>> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' | b'}' if bytes.get(i + 1) == Some(&bytes[i]) => {
                out.push(Piece::Text(&body[start..=i]));
                i += 2;
                start = i;
            }
            b'{' => {
                let mut j = i + 1;
                while j < bytes.len() && is_slot_char(bytes[j]) {
                    j += 1;
                }
                if j > i + 1 && bytes.get(j) == Some(&b'}') {
                    out.push(Piece::Text(&body[start..i]));
                    out.push(Piece::Slot(&body[i + 1..j]));
                    i = j + 1;
                    start = i;
                } else {
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&body[start..]));
    out
}

/// Slot names referenced by `body`, deduplicated.
pub fn template_slots(body: &str) -> BTreeSet<String> {
    parse(body)
        .into_iter()
        .filter_map(|p| match p {
            Piece::Slot(s) => Some(s.to_owned()),
            Piece::Text(_) => None,
        })
        .collect()
}

/// Substitutes `slots` into `body`. Every slot the kind requires must be supplied, as
/// must every slot the body references.
pub fn render_prompt(kind: TemplateKind, body: &str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    let lookup = |name: &str| slots.iter().find(|(k, _)| *k == name).map(|(_, v)| *v);
    if let Some(missing) = kind.slots().iter().find(|s| lookup(s).is_none()) {
        return Err(PromptError::MissingSlot((*missing).to_owned()));
    }
    let mut out = String::with_capacity(body.len() + slots.iter().map(|(_, v)| v.len()).sum::<usize>());
    for piece in parse(body) {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(s) => out.push_str(lookup(s).ok_or_else(|| PromptError::MissingSlot(s.to_owned()))?),
        }
    }
    Ok(out)
}

/// Trimmed content of the first `<tag>...</tag>` pair.
pub fn extract_tagged_block(text: &str, tag: &str) -> Result<String, PromptError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open).ok_or_else(|| PromptError::NoBlock(tag.to_owned()))? + open.len();
    let len = text[start..].find(&close).ok_or_else(|| PromptError::Unterminated(tag.to_owned()))?;
    Ok(text[start..start + len].trim().to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mutation_slots() -> Vec<(&'static str, &'static str)> {
        vec![("problem_description", "toy"), ("current_code", "CODE"), ("current_performance", "0.5")]
    }

    #[test]
    fn seed_mutation_renders() {
        let text = PromptTemplate::seed(TemplateKind::Mutation).render(&mutation_slots()).unwrap();
        assert!(text.contains("explode"));
        assert!(text.contains("<code>xxx</code>"));
        assert!(text.contains("solving it:CODE. Its performance is 0.5."));
    }

    #[test]
    fn seed_bodies_reference_exactly_their_slots() {
        for kind in TemplateKind::ALL {
            let want: BTreeSet<String> = kind.slots().iter().map(|s| s.to_string()).collect();
            assert_eq!(template_slots(kind.seed_body()), want, "{kind}");
        }
    }

    #[test]
    fn missing_slot_is_named() {
        let mut slots = mutation_slots();
        slots.pop();
        let err = PromptTemplate::seed(TemplateKind::Mutation).render(&slots).unwrap_err();
        assert!(matches!(err, PromptError::MissingSlot(s) if s == "current_performance"));
    }

    #[test]
    fn braces() {
        let body = "{{literal}} {x} {not a slot} }{ {problem_description}";
        let out = render_prompt(TemplateKind::Meta, body, &[("old_prompt", ""), ("x", "X"), ("problem_description", "P")])
            .unwrap();
        assert_eq!(out, "{literal} X {not a slot} }{ P");
    }

    #[test]
    fn extraction() {
        assert_eq!(extract_tagged_block("<code>abc</code>", "code").unwrap(), "abc");
        assert_eq!(extract_tagged_block("noise <code>x</code> noise <code>y</code>", "code").unwrap(), "x");
        assert!(matches!(extract_tagged_block("<code>abc", "code"), Err(PromptError::Unterminated(_))));
        assert!(matches!(extract_tagged_block("abc", "code"), Err(PromptError::NoBlock(_))));
        assert_eq!(extract_tagged_block("<prompt>\n  body \n</prompt>", "prompt").unwrap(), "body");
    }

    #[test]
    fn kind_from_id() {
        assert_eq!(TemplateKind::from_id("mut-12"), Some(TemplateKind::Mutation));
        assert_eq!(TemplateKind::from_id("cx-0"), Some(TemplateKind::Crossover));
        assert_eq!(TemplateKind::from_id("meta-1"), Some(TemplateKind::Meta));
        assert_eq!(TemplateKind::from_id("x-1"), None);
    }
}
