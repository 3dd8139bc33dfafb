use std::sync::Arc;

use pgpo::env::{Env, EnvKind};
use pgpo::policy::{FeatureSpec, PolicyParams, Segment, SegmentContext, Vocab};
use pgpo::Policy;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vocab() -> Arc<Vocab> {
    Arc::new(Vocab::from_texts(Env::bundled().action_vocabulary(EnvKind::Household)))
}

fn context(v: &Vocab, round: u32) -> SegmentContext {
    SegmentContext {
        instruction: v.encode_context("put a pencil in/on the desk"),
        observation: v.encode_context("You arrive at the drawer 1."),
        round,
        ..Default::default()
    }
}

fn segment() -> impl Strategy<Value = Segment> {
    prop_oneof![Just(Segment::Plan), Just(Segment::Thought), Just(Segment::Action)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distributions_are_normalized(seed in any::<u64>(), scale in 0.01f64..8.0, round in 0u32..40, seg in segment()) {
        let v = vocab();
        let p = Policy::random(v.clone(), FeatureSpec { n: 3, hash_dim: 512 }, scale, seed);
        let rows = p.spec().features(seg, &context(&v, round), pgpo::policy::BOS, pgpo::policy::BOS, 0);
        let lp = p.log_probs(&rows);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(v.unk() as usize >= lp.len());
    }

    #[test]
    fn sampled_logprob_equals_score(seed in any::<u64>(), temperature in 0.0f64..2.0, seg in segment()) {
        let v = vocab();
        let p = Policy::random(v.clone(), FeatureSpec { n: 3, hash_dim: 512 }, 1.0, seed);
        let ctx = context(&v, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let (tokens, lp) = p.sample_segment(seg, &ctx, temperature, 12, &mut rng);
        prop_assert!(tokens.len() <= 12);
        let scored = p.logprob(&p.segment_positions(seg, &ctx, &tokens));
        prop_assert!((lp - scored).abs() < 1e-9, "{} vs {}", lp, scored);
        let p32: PolicyParams<f32> = p.cast();
        let scored32 = f64::from(p32.logprob(&p32.segment_positions(seg, &ctx, &tokens)));
        prop_assert!((scored32 - scored).abs() < 1e-3 * (1.0 + scored.abs()));
    }
}

#[test]
fn low_temperature_is_nearly_greedy() {
    let v = vocab();
    let p = Policy::random(v.clone(), FeatureSpec { n: 3, hash_dim: 512 }, 2.0, 9);
    let rows = p.spec().features(Segment::Action, &context(&v, 1), pgpo::policy::BOS, pgpo::policy::BOS, 0);
    let mut greedy_rng = ChaCha8Rng::seed_from_u64(0);
    let (best, _) = p.sample_token(&rows, 0.0, &mut greedy_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let hits = (0..n).filter(|_| p.sample_token(&rows, 1e-3, &mut rng).0 == best).count();
    assert!(hits as f64 / n as f64 > 0.999, "{hits}/{n}");
}

#[test]
fn unit_temperature_matches_probabilities() {
    let v = vocab();
    let p = Policy::random(v.clone(), FeatureSpec { n: 3, hash_dim: 512 }, 1.5, 4);
    let rows = p.spec().features(Segment::Thought, &context(&v, 3), pgpo::policy::BOS, pgpo::policy::BOS, 0);
    let probs: Vec<f64> = p.log_probs(&rows).iter().map(|l| l.exp()).collect();
    let mut counts = vec![0usize; probs.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    for _ in 0..n {
        counts[p.sample_token(&rows, 1.0, &mut rng).0 as usize] += 1;
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    for &t in &order[..5] {
        let q = probs[t];
        let freq = counts[t] as f64 / n as f64;
        let bound = 3.0 * (q * (1.0 - q) / n as f64).sqrt();
        assert!((freq - q).abs() <= bound, "token {t}: {freq} vs {q}");
    }
}
