mod common;

use common::{best_within, micro_env, micro_task};
use pgpo::env::{oracle_expert, outcome_reward, Env, EnvKind, TaskSet};
use pgpo::Reward;
use proptest::prelude::*;

#[test]
fn micro_world_oracle_is_shortest() {
    let env = micro_env();
    let spec = micro_task("drawer 1", 20);
    let oracle = oracle_expert(&env, &spec).unwrap().unwrap();
    assert_eq!(oracle.reward, Reward::from_integer(1));
    assert_eq!(
        oracle.actions,
        ["go to desk 1", "take pencil 1 from desk 1", "go to drawer 1", "open drawer 1", "put pencil 1 in/on drawer 1"]
    );
    let actions = env.action_vocabulary(EnvKind::Household);
    let (root, _) = env.reset(&spec).unwrap();
    let n = oracle.actions.len();
    assert_eq!(best_within(&env, &root, &actions, n - 1), Reward::from_integer(0));
    assert_eq!(best_within(&env, &root, &actions, n), Reward::from_integer(1));
}

#[test]
fn bundled_oracle_replays() {
    let env = Env::bundled();
    for kind in [EnvKind::Household, EnvKind::Shop, EnvKind::Craft] {
        for spec in TaskSet::bundled(kind).train.iter().take(5) {
            let o = oracle_expert(&env, spec).unwrap().unwrap();
            let (mut s, _) = env.reset(spec).unwrap();
            for (a, obs) in o.actions.iter().zip(&o.observations) {
                let (next, r) = env.step(&s, a).unwrap();
                assert_eq!(&r.observation, obs);
                s = next;
            }
            assert!(s.done);
            assert_eq!(outcome_reward(&s).unwrap(), o.reward);
            assert!(o.actions.len() as u32 <= spec.max_turns);
        }
    }
}

fn kind_strategy() -> impl Strategy<Value = EnvKind> {
    prop_oneof![Just(EnvKind::Household), Just(EnvKind::Shop), Just(EnvKind::Craft)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn episodes_are_bounded_deterministic_and_rewards_in_range(
        kind in kind_strategy(),
        task in 0usize..30,
        picks in proptest::collection::vec(0usize..1000, 0..40),
    ) {
        let env = Env::bundled();
        let tasks = TaskSet::bundled(kind).train;
        let spec = &tasks[task % tasks.len()];
        let vocab = env.action_vocabulary(kind);
        let run = || {
            let (mut s, o) = env.reset(spec).unwrap();
            let mut stream = vec![o];
            let mut steps = 0;
            for p in &picks {
                if s.done { break; }
                let (next, r) = env.step(&s, &vocab[p % vocab.len()]).unwrap();
                stream.push(r.observation);
                s = next;
                steps += 1;
            }
            (s, stream, steps)
        };
        let (s1, o1, steps) = run();
        let (s2, o2, _) = run();
        prop_assert_eq!(&o1, &o2);
        prop_assert_eq!(s1.world_digest(), s2.world_digest());
        prop_assert!(steps as u32 <= spec.max_turns);
        if s1.done {
            let r = outcome_reward(&s1).unwrap();
            prop_assert!(r >= Reward::from_integer(0) && r <= Reward::from_integer(1));
            if kind.is_binary() {
                prop_assert!(r == Reward::from_integer(0) || r == Reward::from_integer(1));
            }
        }
    }

    #[test]
    fn invalid_actions_leave_world_unchanged(
        kind in kind_strategy(),
        task in 0usize..30,
        picks in proptest::collection::vec(0usize..1000, 1..25),
    ) {
        let env = Env::bundled();
        let tasks = TaskSet::bundled(kind).train;
        let spec = &tasks[task % tasks.len()];
        let vocab = env.action_vocabulary(kind);
        let (mut s, _) = env.reset(spec).unwrap();
        for p in &picks {
            if s.done { break; }
            let (next, r) = env.step(&s, &vocab[p % vocab.len()]).unwrap();
            if r.observation == pgpo::env::NOTHING_HAPPENS {
                prop_assert_eq!(next.world_digest(), s.world_digest());
            }
            s = next;
        }
    }
}
