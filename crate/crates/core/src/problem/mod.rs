//! The four benchmark problems, their evaluators, and the reference-ratio metric.
//!
//! Every score in the system is produced here. Evaluators are pure functions over
//! immutable instances; an infeasible solution never carries an objective.

mod airland;
mod epp;
mod flowshop;
mod pmedian;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use airland::{evaluate_landing, parse_airland, AircraftLandingInstance, LandingSchedule, Plane};
pub use epp::{evaluate_epp, EppInstance, GROUP_COUNT};
pub use flowshop::{evaluate_flowshop, FlowShopInstance};
pub(crate) use flowshop::is_permutation;
pub use pmedian::{assignment_cost, evaluate_pmedian, PMedianInstance};

/// Absolute slack used when checking window and separation constraints on real-valued times.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("solution is for {solution} but instance is {instance}")]
    KindMismatch { instance: ProblemKind, solution: ProblemKind },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ProblemError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Airland,
    Flowshop,
    Pmedian,
    Epp,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [Self::Airland, Self::Flowshop, Self::Pmedian, Self::Epp];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Airland => "airland",
            Self::Flowshop => "flowshop",
            Self::Pmedian => "pmedian",
            Self::Epp => "epp",
        }
    }

    /// Plain-language statement of the problem, used as the `problem_description` prompt slot.
    pub fn description(self) -> &'static str {
        match self {
            Self::Airland => {
                "single-runway aircraft landing scheduling: every plane must land inside its \
                 [earliest, latest] window, any two planes landing in order i then j must be at \
                 least separation[i][j] apart, and the goal is to minimise the total weighted \
                 earliness/lateness penalty relative to each plane's target time. Solutions are \
                 encoded as a landing sequence whose times are fixed by a linear program; \
                 infeasible schedules score nothing"
            }
            Self::Flowshop => {
                "permutation flow shop scheduling: all jobs visit the machines in the same \
                 order, a solution is a permutation of the jobs, and the goal is to minimise the \
                 makespan"
            }
            Self::Pmedian => {
                "uncapacitated p-median: choose exactly p vertices as medians so that the sum of \
                 distances from every vertex to its nearest median is minimised; solutions are \
                 binary strings with exactly p ones"
            }
            Self::Epp => {
                "equitable partition: assign every individual to one of 8 groups (labels 1..8, \
                 each used at least once) so that, summed over the binary attributes, the mean \
                 absolute deviation of per-group attribute counts is minimised"
            }
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

/// Why a solution was rejected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Window { plane: usize },
    Separation { first: usize, second: usize },
    NotAPermutation,
    Cardinality { expected: usize, got: usize },
    IndexOutOfRange { index: usize },
    BadLabel { individual: usize, label: u8 },
    EmptyGroup { group: u8 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Window { plane } => write!(f, "plane {plane} lands outside its time window"),
            Self::Separation { first, second } => {
                write!(f, "separation between planes {first} and {second} is violated")
            }
            Self::NotAPermutation => f.write_str("not a permutation"),
            Self::Cardinality { expected, got } => {
                write!(f, "expected {expected} medians, got {got}")
            }
            Self::IndexOutOfRange { index } => write!(f, "index {index} out of range"),
            Self::BadLabel { individual, label } => {
                write!(f, "individual {individual} has label {label} outside 1..=8")
            }
            Self::EmptyGroup { group } => write!(f, "group {group} is empty"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "OutcomeRepr", try_from = "OutcomeRepr")]
pub enum EvaluationOutcome {
    Feasible { objective: f64 },
    Infeasible { violation: Violation },
}

#[derive(Clone, Serialize, Deserialize)]
struct OutcomeRepr {
    feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    violation: Option<Violation>,
}

impl From<EvaluationOutcome> for OutcomeRepr {
    fn from(o: EvaluationOutcome) -> Self {
        match o {
            EvaluationOutcome::Feasible { objective } => {
                Self { feasible: true, objective: Some(objective), violation: None }
            }
            EvaluationOutcome::Infeasible { violation } => {
                Self { feasible: false, objective: None, violation: Some(violation) }
            }
        }
    }
}

impl TryFrom<OutcomeRepr> for EvaluationOutcome {
    type Error = String;

    fn try_from(r: OutcomeRepr) -> std::result::Result<Self, String> {
        match (r.feasible, r.objective, r.violation) {
            (true, Some(objective), None) => Ok(Self::Feasible { objective }),
            (false, None, Some(violation)) => Ok(Self::Infeasible { violation }),
            _ => Err("feasible outcomes carry only an objective, infeasible only a violation".into()),
        }
    }
}

impl EvaluationOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible { .. })
    }

    pub fn objective(&self) -> Option<f64> {
        match self {
            Self::Feasible { objective } => Some(*objective),
            Self::Infeasible { .. } => None,
        }
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            Self::Feasible { .. } => None,
            Self::Infeasible { violation } => Some(violation),
        }
    }

    /// Objective as a minimisation fitness; infeasible maps to `+inf`.
    pub fn fitness(&self) -> f64 {
        self.objective().unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRatio {
    pub value: f64,
    pub sense: Sense,
}

impl PerformanceRatio {
    /// The score given to an invalid or infeasible result.
    pub fn invalid(sense: Sense) -> Self {
        Self { value: 0.0, sense }
    }
}

/// `reference / best` for minimisation, `best / reference` for maximisation.
///
/// Equal arguments always give exactly 1, including the degenerate `0 / 0` case.
pub fn performance_ratio(best: f64, reference: f64, sense: Sense) -> Result<PerformanceRatio> {
    if !best.is_finite() || !reference.is_finite() {
        return Err(ProblemError::Domain(format!(
            "non-finite objective (best {best}, reference {reference})"
        )));
    }
    if best == reference {
        return Ok(PerformanceRatio { value: 1.0, sense });
    }
    let (num, den) = match sense {
        Sense::Min => (reference, best),
        Sense::Max => (best, reference),
    };
    if den <= 0.0 {
        return Err(ProblemError::Domain(format!("nonpositive denominator {den}")));
    }
    if num < 0.0 {
        return Err(ProblemError::Domain(format!("negative numerator {num}")));
    }
    Ok(PerformanceRatio { value: num / den, sense })
}

/// One problem instance of any of the four kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Airland(AircraftLandingInstance),
    Flowshop(FlowShopInstance),
    Pmedian(PMedianInstance),
    Epp(EppInstance),
}

impl Problem {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Self::Airland(_) => ProblemKind::Airland,
            Self::Flowshop(_) => ProblemKind::Flowshop,
            Self::Pmedian(_) => ProblemKind::Pmedian,
            Self::Epp(_) => ProblemKind::Epp,
        }
    }

    /// Number of decision items (planes, jobs, vertices, individuals).
    pub fn size(&self) -> usize {
        match self {
            Self::Airland(i) => i.n_planes(),
            Self::Flowshop(i) => i.n_jobs(),
            Self::Pmedian(i) => i.n_vertices(),
            Self::Epp(i) => i.n_individuals(),
        }
    }

    pub fn evaluate(&self, solution: &Solution) -> Result<EvaluationOutcome> {
        match (self, solution) {
            (Self::Airland(i), Solution::Landing(s)) => evaluate_landing(i, s),
            (Self::Flowshop(i), Solution::Permutation(p)) => Ok(evaluate_flowshop(i, p)),
            (Self::Pmedian(i), Solution::Medians(m)) => Ok(evaluate_pmedian(i, m)),
            (Self::Epp(i), Solution::Groups(g)) => evaluate_epp(i, g),
            (p, s) => Err(ProblemError::KindMismatch { instance: p.kind(), solution: s.kind() }),
        }
    }

    fn data_json(&self) -> Value {
        match self {
            Self::Airland(i) => serde_json::to_value(i),
            Self::Flowshop(i) => serde_json::to_value(i),
            Self::Pmedian(i) => serde_json::to_value(i),
            Self::Epp(i) => serde_json::to_value(i),
        }
        .expect("instance data serialises")
    }
}

/// A problem together with its reference objective, as stored in instance files.
///
/// JSON layout: `{"problem": "airland"|"flowshop"|"pmedian"|"epp", "data": {...},
/// "reference": number, "sense": "min"|"max"}` plus an optional `"name"`.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub problem: Problem,
    pub reference: f64,
    pub sense: Sense,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    problem: ProblemKind,
    data: Value,
    reference: f64,
    sense: Sense,
}

impl Instance {
    pub fn kind(&self) -> ProblemKind {
        self.problem.kind()
    }

    pub fn from_json_value(value: Value) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_value(value)?;
        let problem = match doc.problem {
            ProblemKind::Airland => {
                Problem::Airland(AircraftLandingInstance::from_json(doc.data)?)
            }
            ProblemKind::Flowshop => Problem::Flowshop(FlowShopInstance::from_json(doc.data)?),
            ProblemKind::Pmedian => Problem::Pmedian(PMedianInstance::from_json(doc.data)?),
            ProblemKind::Epp => Problem::Epp(EppInstance::from_json(doc.data)?),
        };
        if !doc.reference.is_finite() {
            return Err(ProblemError::Invalid("reference must be finite".into()));
        }
        Ok(Self {
            name: doc.name.unwrap_or_else(|| doc.problem.as_str().to_owned()),
            problem,
            reference: doc.reference,
            sense: doc.sense,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(text)?)
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(InstanceDoc {
            name: Some(self.name.clone()),
            problem: self.kind(),
            data: self.problem.data_json(),
            reference: self.reference,
            sense: self.sense,
        })
        .expect("instance serialises")
    }

    /// Loads a JSON instance, or an OR-Library airland text file when the content
    /// does not start with `{`. Text files carry no reference, so one must be given.
    pub fn load(path: &Path, reference: Option<f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            let mut inst = Self::from_json_str(&text)?;
            if let Some(r) = reference {
                inst.reference = r;
            }
            return Ok(inst);
        }
        let reference = reference.ok_or_else(|| {
            ProblemError::Invalid("OR-Library text instances need an explicit reference".into())
        })?;
        Ok(Self {
            name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            problem: Problem::Airland(parse_airland(&text)?),
            reference,
            sense: Sense::Min,
        })
    }

    pub fn evaluate(&self, solution: &Solution) -> Result<EvaluationOutcome> {
        self.problem.evaluate(solution)
    }

    /// Ratio of a feasible objective against this instance's reference.
    pub fn ratio(&self, best: f64) -> Result<PerformanceRatio> {
        performance_ratio(best, self.reference, self.sense)
    }
}

/// A solution payload for one of the four problems.
///
/// JSON: airland `{"runway": [...], "times": [...]}`; flow shop a job permutation;
/// p-median a list of median vertex indices; EPP a list of group labels in `1..=8`.
#[derive(Clone, Debug, PartialEq)]
pub enum Solution {
    Landing(LandingSchedule),
    Permutation(Vec<usize>),
    Medians(Vec<usize>),
    Groups(Vec<u8>),
}

impl Solution {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Self::Landing(_) => ProblemKind::Airland,
            Self::Permutation(_) => ProblemKind::Flowshop,
            Self::Medians(_) => ProblemKind::Pmedian,
            Self::Groups(_) => ProblemKind::Epp,
        }
    }

    pub fn from_json(kind: ProblemKind, value: Value) -> Result<Self> {
        Ok(match kind {
            ProblemKind::Airland => Self::Landing(serde_json::from_value(value)?),
            ProblemKind::Flowshop => Self::Permutation(serde_json::from_value(value)?),
            ProblemKind::Pmedian => Self::Medians(serde_json::from_value(value)?),
            ProblemKind::Epp => Self::Groups(serde_json::from_value(value)?),
        })
    }

    pub fn to_json(&self) -> Value {
        match self {
            Self::Landing(s) => serde_json::to_value(s),
            Self::Permutation(p) | Self::Medians(p) => serde_json::to_value(p),
            Self::Groups(g) => serde_json::to_value(g),
        }
        .expect("solution serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn ratio_arithmetic() {
        let r = performance_ratio(125.0, 100.0, Sense::Min).unwrap();
        assert!((r.value - 0.8).abs() < 1e-12);
        assert_eq!(performance_ratio(7.5, 7.5, Sense::Min).unwrap().value, 1.0);
        assert_eq!(performance_ratio(0.0, 0.0, Sense::Min).unwrap().value, 1.0);
        let r = performance_ratio(150.0, 100.0, Sense::Max).unwrap();
        assert!((r.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ratio_above_one_when_reference_is_beaten() {
        // A best objective below the reference gives more than 100%.
        let r = performance_ratio(1000.0, 1424.2, Sense::Min).unwrap();
        assert!((r.value - 1.4242).abs() < 1e-12);
    }

    #[test]
    fn ratio_rejects_nonpositive_denominator() {
        assert!(matches!(performance_ratio(0.0, 10.0, Sense::Min), Err(ProblemError::Domain(_))));
        assert!(matches!(performance_ratio(5.0, 0.0, Sense::Max), Err(ProblemError::Domain(_))));
        assert!(performance_ratio(f64::INFINITY, 1.0, Sense::Min).is_err());
    }

    #[test]
    fn instance_json_round_trip() {
        let doc = json!({
            "name": "toy",
            "problem": "flowshop",
            "data": {"processing_times": [[1.0, 2.0], [2.0, 1.0]]},
            "reference": 4.0,
            "sense": "min"
        });
        let inst = Instance::from_json_value(doc).unwrap();
        assert_eq!(inst.kind(), ProblemKind::Flowshop);
        let again = Instance::from_json_value(inst.to_json_value()).unwrap();
        assert_eq!(inst, again);
        let out = inst.evaluate(&Solution::Permutation(vec![0, 1])).unwrap();
        assert_eq!(out.objective(), Some(4.0));
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let inst = Instance::from_json_value(json!({
            "problem": "pmedian",
            "data": {"p": 1, "distances": [[0.0, 1.0], [1.0, 0.0]]},
            "reference": 1.0,
            "sense": "min"
        }))
        .unwrap();
        assert!(matches!(
            inst.evaluate(&Solution::Permutation(vec![0])),
            Err(ProblemError::KindMismatch { .. })
        ));
    }

    #[test]
    fn outcome_serialises_with_feasible_flag() {
        let v = serde_json::to_value(EvaluationOutcome::Feasible { objective: 2.0 }).unwrap();
        assert_eq!(v, json!({"feasible": true, "objective": 2.0}));
        let back: EvaluationOutcome = serde_json::from_value(json!({
            "feasible": false,
            "violation": {"kind": "empty_group", "group": 3}
        }))
        .unwrap();
        assert_eq!(back.violation(), Some(&Violation::EmptyGroup { group: 3 }));
        assert!(serde_json::from_value::<EvaluationOutcome>(json!({"feasible": false, "objective": 1.0})).is_err());
    }
}
