//! Finite-difference checks of every loss on batches built from real episodes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expert::{build_vocab, synthesize_experts};
use crate::collect::{explore_full, FollowPair, PlanPair};
use crate::env::{Env, EnvKind, TaskSet};
use crate::optimize::{
    follow_pair_sequences, grad_check, loss_lf, loss_lp, loss_ls, plan_pair_sequences, sft_sequence, sft_loss,
    GradCheckReport, OptimState, PairSequences,
};
use crate::policy::{FeatureSpec, ScoredSequence};
use crate::trajectory::PlanMode;
use crate::{Error, Policy};

/// Expert episodes against episodes of a random policy, as supervised
/// sequences and as both kinds of preference pair.
#[derive(Debug, Clone)]
pub struct LossFixture {
    pub params: Policy,
    pub sft: Vec<ScoredSequence>,
    pub dp: Vec<PairSequences>,
    pub df: Vec<PairSequences>,
}

/// Builds the fixture from the first `tasks` training tasks of `kind` with a
/// random policy of the given draw.
pub fn loss_fixture(kind: EnvKind, tasks: usize, spec: FeatureSpec, draw: u64) -> Result<LossFixture, Error> {
    let env = Env::bundled();
    let set = TaskSet::bundled(kind);
    let specs = &set.train[..tasks.min(set.train.len())];
    let demos = synthesize_experts(&env, specs)?;
    let vocab = Arc::new(build_vocab(&env, kind, &demos));
    let params = Policy::random(vocab, spec, 0.5, draw);
    let mode = PlanMode::Pcode;
    let mut fx = LossFixture {
        params: params.clone(),
        sft: Vec::new(),
        dp: Vec::new(),
        df: Vec::new(),
    };
    for d in &demos {
        let expert = d.trajectory(mode);
        let agent = explore_full(&params, &env, &d.spec, mode, 1.0)?.trajectory;
        fx.sft.push(sft_sequence(&params, &expert, mode)?);
        let plan_pair = PlanPair {
            task_id: d.spec.id.clone(),
            u: d.spec.instruction.clone(),
            winner: expert.clone(),
            loser: agent.clone(),
            winner_r_d: expert.reward,
            loser_r_d: agent.reward,
            winner_is_agent: false,
        };
        fx.dp.push(plan_pair_sequences(&params, &plan_pair)?);
        let follow = FollowPair {
            task_id: d.spec.id.clone(),
            u: d.spec.instruction.clone(),
            plan: expert.plan.clone(),
            initial_observation: expert.initial_observation.clone(),
            shared_round1: expert.rounds[0].clone(),
            winner_suffix: expert.rounds[1..].to_vec(),
            loser_suffix: agent.rounds.iter().skip(1).cloned().collect(),
            winner_r_f: expert.reward,
            loser_r_f: agent.reward,
            winner_is_agent: false,
        };
        fx.df.push(follow_pair_sequences(&params, &follow)?);
    }
    Ok(fx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradSuiteEntry {
    pub loss: String,
    pub draw: u64,
    pub report: GradCheckReport,
}

/// Checks the supervised, both preference and the anchor losses on `draws`
/// parameter draws with `coordinates` coordinates each.
pub fn gradient_suite(
    kind: EnvKind,
    draws: u64,
    coordinates: usize,
    tolerance: f64,
    seed: u64,
) -> Result<Vec<GradSuiteEntry>, Error> {
    let spec = FeatureSpec { n: 3, hash_dim: 64 };
    let mut out = Vec::new();
    for draw in 0..draws {
        let fx = loss_fixture(kind, 3, spec, seed.wrapping_add(draw))?;
        let reference = Policy::random(fx.params.vocab().clone(), spec, 0.5, !seed.wrapping_add(draw));
        let beta = 0.5;
        let with_ref = |p: &Policy| {
            let mut s = OptimState::new(p.clone(), beta, 0.0);
            s.ref_params = reference.clone();
            s
        };
        let h = 1e-4;
        let check_seed = seed ^ (draw << 8);
        let reports = [
            ("sft", grad_check(|p| sft_loss(p, &fx.sft), &fx.params, coordinates, h, tolerance, check_seed)),
            ("plan_pairs", grad_check(|p| loss_lp(&with_ref(p), &fx.dp), &fx.params, coordinates, h, tolerance, check_seed + 1)),
            ("follow_pairs", grad_check(|p| loss_lf(&with_ref(p), &fx.df), &fx.params, coordinates, h, tolerance, check_seed + 2)),
            ("anchor", grad_check(|p| loss_ls(p, &fx.dp), &fx.params, coordinates, h, tolerance, check_seed + 3)),
        ];
        out.extend(reports.into_iter().map(|(loss, report)| GradSuiteEntry {
            loss: loss.to_string(),
            draw,
            report,
        }));
    }
    Ok(out)
}
