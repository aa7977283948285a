use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvaluationOutcome, ProblemError, Result, Violation, FEAS_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub appearance: f64,
    pub earliest: f64,
    pub target: f64,
    pub latest: f64,
    pub penalty_early: f64,
    pub penalty_late: f64,
}

/// Single-runway aircraft landing instance.
///
/// `separation[i][j]` is the minimum gap when plane `i` lands before plane `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AircraftLandingInstance {
    /// Carried through from the source data; it never affects scheduling or scoring.
    #[serde(default)]
    pub freeze_time: f64,
    pub planes: Vec<Plane>,
    pub separation: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub runways: usize,
}

fn one() -> usize {
    1
}

impl AircraftLandingInstance {
    pub fn new(planes: Vec<Plane>, separation: Vec<Vec<f64>>, freeze_time: f64) -> Result<Self> {
        let inst = Self { freeze_time, planes, separation, runways: 1 };
        inst.validate()?;
        Ok(inst)
    }

    pub(super) fn from_json(data: Value) -> Result<Self> {
        let inst: Self = serde_json::from_value(data)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn n_planes(&self) -> usize {
        self.planes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.runways != 1 {
            return Err(ProblemError::Invalid(format!(
                "only single-runway instances are supported, got {} runways",
                self.runways
            )));
        }
        for (p, plane) in self.planes.iter().enumerate() {
            check_plane(plane).map_err(|m| ProblemError::Invalid(format!("plane {p}: {m}")))?;
        }
        let n = self.n_planes();
        if self.separation.len() != n || self.separation.iter().any(|row| row.len() != n) {
            return Err(ProblemError::Invalid(format!("separation matrix must be {n}x{n}")));
        }
        if self.separation.iter().flatten().any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(ProblemError::Invalid("separation entries must be finite and >= 0".into()));
        }
        // Coincident landings must satisfy both directions, so a zero gap one way and a
        // positive gap the other would make the feasible set open (no attained optimum).
        for i in 0..n {
            for j in 0..n {
                if i != j && self.separation[i][j] == 0.0 && self.separation[j][i] > 0.0 {
                    return Err(ProblemError::Invalid(format!(
                        "separation[{i}][{j}] is 0 but separation[{j}][{i}] is positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_plane(p: &Plane) -> std::result::Result<(), String> {
    let values = [p.appearance, p.earliest, p.target, p.latest, p.penalty_early, p.penalty_late];
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite value".into());
    }
    if p.earliest > p.target || p.target > p.latest {
        return Err(format!(
            "window violation: need earliest <= target <= latest, got {} / {} / {}",
            p.earliest, p.target, p.latest
        ));
    }
    if p.penalty_early < 0.0 || p.penalty_late < 0.0 {
        return Err("negative penalty".into());
    }
    Ok(())
}

/// Landing time (and runway) per plane, indexed by plane id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingSchedule {
    pub runway: Vec<usize>,
    pub times: Vec<f64>,
}

impl LandingSchedule {
    pub fn single_runway(times: Vec<f64>) -> Self {
        Self { runway: vec![1; times.len()], times }
    }
}

/// Parses the OR-Library `airland` layout: `n freeze_time`, then for every plane the six
/// scalars `appearance earliest target latest penalty_early penalty_late` followed by its
/// `n` separation entries. Line breaks are not significant inside a record.
pub fn parse_airland(text: &str) -> Result<AircraftLandingInstance> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            tokens.push((i + 1, tok));
        }
    }
    let last_line = text.lines().count().max(1);
    let mut it = tokens.into_iter();
    let mut next = |what: &str| -> Result<(usize, f64)> {
        let (line, tok) = it.next().ok_or_else(|| ProblemError::Parse {
            line: last_line,
            message: format!("unexpected end of input, expected {what}"),
        })?;
        let v: f64 = tok.parse().map_err(|_| ProblemError::Parse {
            line,
            message: format!("expected {what}, found {tok:?}"),
        })?;
        Ok((line, v))
    };

    let (line, n_raw) = next("plane count")?;
    if n_raw < 0.0 || n_raw.fract() != 0.0 {
        return Err(ProblemError::Parse { line, message: format!("bad plane count {n_raw}") });
    }
    let n = n_raw as usize;
    let (_, freeze_time) = next("freeze time")?;

    let mut planes = Vec::with_capacity(n);
    let mut separation = Vec::with_capacity(n);
    for p in 0..n {
        let mut vals = [0.0; 6];
        let mut first_line = 0;
        for (k, v) in vals.iter_mut().enumerate() {
            let (line, x) = next(&format!("plane {p} field {k}"))?;
            if k == 0 {
                first_line = line;
            }
            *v = x;
        }
        let plane = Plane {
            appearance: vals[0],
            earliest: vals[1],
            target: vals[2],
            latest: vals[3],
            penalty_early: vals[4],
            penalty_late: vals[5],
        };
        check_plane(&plane).map_err(|m| ProblemError::Parse { line: first_line, message: m })?;
        planes.push(plane);
        let mut row = Vec::with_capacity(n);
        for q in 0..n {
            let (line, s) = next(&format!("separation[{p}][{q}]"))?;
            if s < 0.0 {
                return Err(ProblemError::Parse { line, message: format!("negative separation {s}") });
            }
            row.push(s);
        }
        separation.push(row);
    }
    if let Some((line, tok)) = it.next() {
        return Err(ProblemError::Parse { line, message: format!("trailing token {tok:?}") });
    }
    AircraftLandingInstance::new(planes, separation, freeze_time)
}

fn at_least(a: f64, b: f64) -> bool {
    a >= b - FEAS_TOL * b.abs().max(1.0)
}

/// Checks windows and all-pairs separation, then sums the earliness/lateness penalties.
pub fn evaluate_landing(
    inst: &AircraftLandingInstance,
    sched: &LandingSchedule,
) -> Result<EvaluationOutcome> {
    let n = inst.n_planes();
    if sched.times.len() != n || sched.runway.len() != n {
        return Err(ProblemError::Input(format!(
            "schedule has {} times and {} runways for {n} planes",
            sched.times.len(),
            sched.runway.len()
        )));
    }
    for (p, (plane, &t)) in inst.planes.iter().zip(&sched.times).enumerate() {
        if !t.is_finite() || !at_least(t, plane.earliest) || !at_least(plane.latest, t) {
            return Ok(EvaluationOutcome::Infeasible { violation: Violation::Window { plane: p } });
        }
    }
    let times = &sched.times;
    for i in 0..n {
        for j in i + 1..n {
            if sched.runway[i] != sched.runway[j] {
                continue;
            }
            // Within tolerance both orders apply, so coincident planes need zero separation.
            if at_least(times[j], times[i]) && !at_least(times[j] - times[i], inst.separation[i][j]) {
                return Ok(EvaluationOutcome::Infeasible {
                    violation: Violation::Separation { first: i, second: j },
                });
            }
            if at_least(times[i], times[j]) && !at_least(times[i] - times[j], inst.separation[j][i]) {
                return Ok(EvaluationOutcome::Infeasible {
                    violation: Violation::Separation { first: j, second: i },
                });
            }
        }
    }
    let objective = inst
        .planes
        .iter()
        .zip(times)
        .map(|(p, &t)| p.penalty_early * (p.target - t).max(0.0) + p.penalty_late * (t - p.target).max(0.0))
        .sum();
    Ok(EvaluationOutcome::Feasible { objective })
}
