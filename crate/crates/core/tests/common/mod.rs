#![allow(dead_code)]

use coevo::landing::solve_sequence;
use coevo::problem::{AircraftLandingInstance, Instance, Plane, Problem, Sense};

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

pub fn plane(e: f64, tau: f64, l: f64, a: f64, b: f64) -> Plane {
    Plane { appearance: 0.0, earliest: e, target: tau, latest: l, penalty_early: a, penalty_late: b }
}

/// Four planes where landing in target order is far from optimal: plane 1 has the
/// earlier target but plane 0 carries the heavy penalties, so 0 must land first.
pub fn toy_landing() -> AircraftLandingInstance {
    let planes = vec![
        plane(0.0, 10.0, 40.0, 10.0, 10.0),
        plane(8.0, 9.0, 40.0, 1.0, 1.0),
        plane(35.0, 40.0, 80.0, 1.0, 1.0),
        plane(30.0, 41.0, 80.0, 8.0, 8.0),
    ];
    let sep = (0..4).map(|i| (0..4).map(|j| if i == j { 0.0 } else { 5.0 }).collect()).collect();
    AircraftLandingInstance::new(planes, sep, 0.0).unwrap()
}

/// Minimum sequence-LP cost over all landing orders.
pub fn exhaustive_landing_optimum(inst: &AircraftLandingInstance) -> f64 {
    permutations(inst.n_planes())
        .iter()
        .map(|s| solve_sequence(inst, s).unwrap().cost)
        .fold(f64::INFINITY, f64::min)
}

/// The toy as a scored instance whose reference is the exhaustive optimum.
pub fn toy_instance() -> Instance {
    let inst = toy_landing();
    let reference = exhaustive_landing_optimum(&inst);
    Instance { name: "toy4".into(), problem: Problem::Airland(inst), reference, sense: Sense::Min }
}

/// Makespan of `order` by the completion-time recurrence; rows are jobs.
pub fn makespan(p: &[Vec<f64>], order: &[usize]) -> f64 {
    let m = p[0].len();
    let mut done = vec![0.0f64; m];
    for &j in order {
        let mut prev = 0.0f64;
        for k in 0..m {
            done[k] = done[k].max(prev) + p[j][k];
            prev = done[k];
        }
    }
    done[m - 1]
}

pub fn flowshop_optimum(p: &[Vec<f64>]) -> f64 {
    permutations(p.len()).iter().map(|o| makespan(p, o)).fold(f64::INFINITY, f64::min)
}

pub fn random_flowshop(seed: u64, n: usize, m: usize) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..m).map(|_| f64::from(rng.random_range(1..=20u32))).collect()).collect()
}

/// Flowshop instance whose reference is the exhaustive optimum.
pub fn flowshop_instance(name: &str, p: Vec<Vec<f64>>) -> Instance {
    let reference = flowshop_optimum(&p);
    Instance::from_json_value(serde_json::json!({
        "name": name,
        "problem": "flowshop",
        "data": {"processing_times": p},
        "reference": reference,
        "sense": "min"
    }))
    .unwrap()
}

pub fn training_set() -> Vec<Instance> {
    (0..3).map(|i| flowshop_instance(&format!("fs{i}"), random_flowshop(100 + i, 7, 4))).collect()
}

/// A parameter variant of the seed program, fixed by `i`.
pub fn variant_program(i: u64) -> String {
    use coevo::fwa::FwaParams;
    use coevo::runner::CandidateProgram;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(i);
    let fw_size = rng.random_range(1..=6);
    let params = FwaParams {
        fw_size,
        sp_size: rng.random_range(fw_size..=40),
        init_amp: f64::from(rng.random_range(1..=10u32)),
        max_iter: rng.random_range(5..=200),
        mutation_rate: f64::from(rng.random_range(0..=10u32)) / 10.0,
        stall_limit: rng.random_range(2..=20),
    };
    CandidateProgram { preset: coevo::fwa::Preset::Baseline, params, fault: None }.to_source()
}

fn code(src: &str) -> String {
    format!("Here is the program.\n<code>\n{src}\n</code>\n")
}

fn tagged(tag: String, response: String) -> coevo::llm::TranscriptEntry {
    coevo::llm::TranscriptEntry { tag: Some(tag), prompt: None, response, timestamp: None }
}

/// Tagged responses for `attempts` generation attempts of run `run`, with extraction
/// failures, broken programs and duplicates mixed in, plus template rewrites for
/// every evolution that can occur.
pub fn scripted_transcript(run: u32, attempts: u32) -> Vec<coevo::llm::TranscriptEntry> {
    use coevo::prompt::{PromptTemplate, TemplateKind};
    use coevo::runner::SEED_PROGRAM;
    let mut out = Vec::new();
    for a in 1..=attempts {
        let t = |k: u32| format!("run{run}/c{a}/try{k}");
        let variant = variant_program(u64::from(run) * 10_000 + u64::from(a));
        if a % 17 == 0 {
            for k in 1..=3 {
                out.push(tagged(t(k), "I cannot help with that.".into()));
            }
        } else if a % 11 == 0 {
            out.push(tagged(t(1), "<code>unterminated".into()));
            out.push(tagged(t(2), code(&variant)));
        } else if a % 13 == 0 {
            out.push(tagged(t(1), code("preset = \"baseline\"\n[fault]\nkind = \"error\"\nmessage = \"boom\"")));
        } else if a % 19 == 0 {
            out.push(tagged(t(1), code("def x(:")));
        } else if a % 23 == 0 {
            out.push(tagged(t(1), code(SEED_PROGRAM)));
        } else {
            out.push(tagged(t(1), code(&variant)));
        }
    }
    for kind in [TemplateKind::Mutation, TemplateKind::Crossover] {
        let seed = PromptTemplate::seed(kind).body;
        for n in 1..=attempts / 2 + 1 {
            let tag = |k: u32| format!("run{run}/evolve-{}-{n}/a{k}", kind.prefix());
            if n % 3 == 0 {
                out.push(tagged(tag(1), "<prompt>Write better code.</prompt>".into()));
            }
            let body = format!("{seed}\nVariant {n}: prefer small, careful changes.");
            out.push(tagged(tag(if n % 3 == 0 { 2 } else { 1 }), format!("<prompt>\n{body}\n</prompt>")));
        }
    }
    out
}

pub fn small_settings() -> coevo::evolve::EvolutionSettings {
    coevo::evolve::EvolutionSettings { max_evaluations: 40, independent_runs: 1, ..Default::default() }
}
