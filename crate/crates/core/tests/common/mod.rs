#![allow(dead_code)]

use std::sync::Arc;

use pgpo::distill::ReActRecord;
use pgpo::env::{outcome_reward, Env, EnvKind, EnvState, Goal, HouseholdWorld, Location, ObjectDef, TaskSpec, Worlds};
use pgpo::plan::{parse_plan, parse_plan_lenient, validate_plan, Rule};
use pgpo::policy::{FeatureKey, FeatureSpec, PolicyParams, Segment, Vocab, BOS, EOS};
use pgpo::trajectory::Round;
use pgpo::{Policy, Reward};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

/// Three locations: the pencil starts on the desk, the drawer must be opened.
pub fn micro_env() -> Env {
    let household = HouseholdWorld {
        locations: vec![
            Location { name: "desk 1".into(), openable: false },
            Location { name: "drawer 1".into(), openable: true },
            Location { name: "shelf 1".into(), openable: false },
        ],
        objects: vec![ObjectDef { name: "pencil".into(), homes: vec!["desk 1".into()] }],
        distractors: 0,
    };
    Env::new(Worlds { household, ..Worlds::bundled() })
}

pub fn micro_task(destination: &str, max_turns: u32) -> TaskSpec {
    let goal = Goal::Household { object: "pencil".into(), destination: destination.into() };
    TaskSpec::new(format!("micro-{destination}"), goal, 7).with_max_turns(max_turns)
}

/// Rounds played by `actions` with empty thoughts.
pub fn play(env: &Env, spec: &TaskSpec, actions: &[&str]) -> (Vec<Round>, String) {
    let (mut state, init) = env.reset(spec).unwrap();
    let mut rounds = Vec::new();
    for a in actions {
        let (next, r) = env.step(&state, a).unwrap();
        rounds.push(Round { thought: String::new(), action: a.to_string(), observation: r.observation });
        state = next;
    }
    (rounds, init)
}

const SURE: f64 = 60.0;

/// Scorer for the shelf task with four turns, after the prefix "go to desk 1",
/// "take pencil 1 from desk 1". Thoughts are empty; round 3 goes to the shelf
/// with probability `q` and to the drawer otherwise; round 4 puts the
/// pencil on the shelf, which only succeeds after going there. Every other
/// token is chosen with probability 1 - O(e^-60).
///
/// Hand-set rows can still share a bucket with a feature active elsewhere on
/// the two paths, so the first table size where both paths score exactly is
/// used.
pub fn one_decision_scorer(env: &Env, q: f64) -> Policy {
    let task = micro_task("shelf 1", 4);
    let paths = [("shelf", q), ("drawer", 1.0 - q)].map(|(place, p)| {
        let go = format!("go to {place} 1");
        let actions = ["go to desk 1", "take pencil 1 from desk 1", go.as_str(), "put pencil 1 in/on shelf 1"];
        (play(env, &task, &actions), p.ln())
    });
    for hash_dim in (1u32 << 16)..(1 << 16) + 64 {
        let p = build_scorer(env, q, FeatureSpec { n: 3, hash_dim });
        let exact = paths.iter().all(|((rounds, init), want)| {
            let lp = p.logprob_rounds(&task.instruction, None, init, &rounds[..2], &rounds[2..]).unwrap();
            (lp - want).abs() < 1e-12
        });
        if exact {
            return p;
        }
    }
    panic!("no collision-free table size");
}

fn build_scorer(env: &Env, q: f64, spec: FeatureSpec) -> Policy {
    let vocab = Arc::new(Vocab::from_texts(env.action_vocabulary(EnvKind::Household)));
    let id = |t: &str| vocab.id(t).unwrap_or_else(|| panic!("{t} not in vocabulary"));
    let mut rows: Vec<(Segment, FeatureKey, u32, f64)> = vec![
        (Segment::Thought, FeatureKey::Bias, EOS, SURE),
        (Segment::Action, FeatureKey::Round { index: 3, prev: BOS }, id("go"), SURE),
        (Segment::Action, FeatureKey::Round { index: 4, prev: BOS }, id("put"), SURE),
        (Segment::Action, FeatureKey::Prev2(BOS, id("go")), id("to"), SURE),
        (Segment::Action, FeatureKey::Prev2(id("go"), id("to")), id("shelf"), SURE + q.ln()),
        (Segment::Action, FeatureKey::Prev2(id("go"), id("to")), id("drawer"), SURE + (1.0 - q).ln()),
        (Segment::Action, FeatureKey::Prev2(BOS, id("put")), id("pencil"), SURE),
        (Segment::Action, FeatureKey::Prev2(id("put"), id("pencil")), id("1"), SURE),
        (Segment::Action, FeatureKey::Prev2(id("pencil"), id("1")), id("in/on"), SURE),
        (Segment::Action, FeatureKey::Prev2(id("1"), id("in/on")), id("shelf"), SURE),
    ];
    for place in ["shelf", "drawer"] {
        rows.push((Segment::Action, FeatureKey::Prev2(id("to"), id(place)), id("1"), SURE));
        rows.push((Segment::Action, FeatureKey::Prev2(id(place), id("1")), EOS, SURE));
    }
    rows.push((Segment::Action, FeatureKey::Prev2(id("in/on"), id("shelf")), id("1"), SURE));
    let mut p = PolicyParams::zeros(vocab, spec);
    for (seg, key, col, w) in rows {
        p = p.with_weight(spec.bucket(seg, &key), col as usize, w);
    }
    p
}

const EXPERTS: &str = include_str!("../../data/golden/experts.jsonl");
const PLANS: &str = include_str!("../../data/golden/plans.jsonl");

#[derive(Deserialize)]
pub struct FrozenPlan {
    pub task: String,
    pub plan: String,
    pub nl_plan: String,
}

/// Expert records of the golden corpus with their frozen plans.
pub fn golden() -> Vec<(ReActRecord, FrozenPlan)> {
    let records = EXPERTS.lines().map(|l| serde_json::from_str::<ReActRecord>(l).unwrap());
    let plans = PLANS.lines().map(|l| serde_json::from_str::<FrozenPlan>(l).unwrap());
    records.zip(plans).collect()
}

/// Best reward over every action sequence of exactly `depth` steps (or fewer
/// when the episode ends), using the whole action vocabulary.
pub fn best_within(env: &Env, state: &EnvState, actions: &[String], depth: usize) -> Reward {
    let mut best = Reward::from_integer(0);
    if depth == 0 {
        return best;
    }
    for a in actions {
        let (next, _) = env.step(state, a).unwrap();
        let r = if next.done { outcome_reward(&next).unwrap() } else { best_within(env, &next, actions, depth - 1) };
        best = best.max(r);
    }
    best
}

fn mutate(text: &str, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut bytes = text.as_bytes().to_vec();
    for _ in 0..rng.gen_range(1..8) {
        let i = rng.gen_range(0..=bytes.len());
        match rng.gen_range(0..3) {
            0 if i < bytes.len() => {
                bytes.remove(i);
            }
            1 => bytes.insert(i, b"$:=(),\"\\#\n if else for in while Step 0 9"[rng.gen_range(0..40)]),
            _ => bytes.insert(i, rng.gen()),
        }
    }
    bytes
}

/// Feeds `cases` inputs to both parsers: half random bytes, half mutated
/// golden plans. A strict parse must never carry the errors it rejects.
pub fn fuzz_parsers(cases: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<String> = golden().into_iter().map(|(_, p)| p.plan).collect();
    for i in 0..cases {
        let bytes = if i % 2 == 0 {
            let len = rng.gen_range(0..200);
            (0..len).map(|_| rng.gen()).collect()
        } else {
            mutate(&seeds[i % seeds.len()], &mut rng)
        };
        let text = String::from_utf8_lossy(&bytes);
        if let Ok(p) = parse_plan(&text) {
            let report = validate_plan(&p);
            assert!(!report.has(Rule::DupStepId) && !report.has(Rule::DanglingElse), "{text:?}");
            assert!(!report.has(Rule::UnresolvedEntityRef), "{text:?}");
        }
        let _ = parse_plan_lenient(&text).map(|p| validate_plan(&p));
    }
}
