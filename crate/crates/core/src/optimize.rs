//! Loss stack over the linear softmax policy: supervised NLL, the DPO pair
//! term for whole trajectories and for suffixes, and the winner NLL anchor.
//!
//! Every loss returns its value and analytic gradient. Batch terms are
//! evaluated in parallel and summed with a fixed pairwise tree in index order,
//! so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collect::{FollowPair, PlanPair};
use crate::policy::{PolicyError, PolicyParams, ScoredSequence, SparseGrad};
use crate::trajectory::{PlanMode, Trajectory};
use crate::Scalar;

/// Positions scored for a whole trajectory: the plan (when the mode has one) and every round.
pub fn trajectory_sequence<T: Scalar>(params: &PolicyParams<T>, t: &Trajectory) -> Result<ScoredSequence, PolicyError> {
    let plan = if t.plan_mode.uses_plan() { t.plan.as_deref() } else { None };
    let mut seq = match plan {
        Some(p) => params.plan_sequence(&t.task, p)?,
        None => ScoredSequence::default(),
    };
    seq.extend(params.rounds_sequence(&t.task, plan, &t.initial_observation, &[], &t.rounds)?);
    Ok(seq)
}

/// Chosen and rejected sequences of one preference pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSequences {
    pub chosen: ScoredSequence,
    pub rejected: ScoredSequence,
}

pub fn plan_pair_sequences<T: Scalar>(params: &PolicyParams<T>, pair: &PlanPair) -> Result<PairSequences, PolicyError> {
    Ok(PairSequences {
        chosen: trajectory_sequence(params, &pair.winner)?,
        rejected: trajectory_sequence(params, &pair.loser)?,
    })
}

/// Suffix rounds only, conditioned on instruction, plan and the shared first round.
pub fn follow_pair_sequences<T: Scalar>(
    params: &PolicyParams<T>,
    pair: &FollowPair,
) -> Result<PairSequences, PolicyError> {
    let history = std::slice::from_ref(&pair.shared_round1);
    let seq = |suffix| params.rounds_sequence(&pair.u, pair.plan.as_deref(), &pair.initial_observation, history, suffix);
    Ok(PairSequences {
        chosen: seq(&pair.winner_suffix)?,
        rejected: seq(&pair.loser_suffix)?,
    })
}

/// Mode-aware sequence for supervised training on an expert trajectory.
pub fn sft_sequence<T: Scalar>(
    params: &PolicyParams<T>,
    t: &Trajectory,
    mode: PlanMode,
) -> Result<ScoredSequence, PolicyError> {
    let mut t = t.clone();
    t.plan_mode = mode;
    if !mode.uses_plan() {
        t.plan = None;
    }
    trajectory_sequence(params, &t)
}

type ValueGrad<T> = (T, SparseGrad<T>);

fn tree_sum<T: Scalar>(mut items: Vec<ValueGrad<T>>, width: usize) -> ValueGrad<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some((va, ga)) = it.next() {
            match it.next() {
                Some((vb, gb)) => next.push((va + vb, SparseGrad::merge(ga, gb))),
                None => next.push((va, ga)),
            }
        }
        items = next;
    }
    items.pop().unwrap_or_else(|| (T::zero(), SparseGrad::zeros(width)))
}

fn batch_mean<T: Scalar, X: Sync>(
    items: &[X],
    width: usize,
    f: impl Fn(&X) -> ValueGrad<T> + Sync + Send,
) -> ValueGrad<T> {
    let parts: Vec<ValueGrad<T>> = items.par_iter().map(f).collect();
    let n = T::from_usize(items.len().max(1)).expect("batch size fits");
    let (v, g) = tree_sum(parts, width);
    (v / n, g.scaled(T::one() / n))
}

/// Mean negative log-likelihood over the batch.
pub fn sft_loss<T: Scalar>(params: &PolicyParams<T>, batch: &[ScoredSequence]) -> ValueGrad<T> {
    let (v, g) = batch_mean(batch, params.vocab_size(), |s| params.grad_logprob(s));
    (-v, g.scaled(-T::one()))
}

/// `softplus(-β[(log π(c) - log π_ref(c)) - (log π(r) - log π_ref(r))])`, which
/// equals `-log σ(·)`. The gradient is taken with respect to `theta` only.
pub fn dpo_pair_term<T: Scalar>(
    theta: &PolicyParams<T>,
    reference: &PolicyParams<T>,
    pair: &PairSequences,
    beta: T,
) -> ValueGrad<T> {
    let (lc, gc) = theta.grad_logprob(&pair.chosen);
    let (lr, gr) = theta.grad_logprob(&pair.rejected);
    let margin = (lc - reference.logprob(&pair.chosen)) - (lr - reference.logprob(&pair.rejected));
    let (value, slope) = dpo_scalar(margin, beta);
    let mut g = gc.scaled(slope);
    g.add_scaled(&gr, -slope);
    (value, g)
}

/// Value of the pair loss for a log-ratio margin and its derivative with respect to the margin.
pub fn dpo_scalar<T: Scalar>(margin: T, beta: T) -> (T, T) {
    let x = beta * margin;
    ((-x).softplus(), -beta * (-x).sigmoid())
}

/// Mean pair term over whole-trajectory pairs.
pub fn loss_lp<T: Scalar>(state: &OptimState<T>, pairs: &[PairSequences]) -> ValueGrad<T> {
    batch_mean(pairs, state.params.vocab_size(), |p| {
        dpo_pair_term(&state.params, &state.ref_params, p, state.beta)
    })
}

/// Mean pair term over suffix pairs. Same algebra as [`loss_lp`] on different sequences.
pub fn loss_lf<T: Scalar>(state: &OptimState<T>, pairs: &[PairSequences]) -> ValueGrad<T> {
    loss_lp(state, pairs)
}

/// Mean negative log-likelihood of the winners; losers are never read.
pub fn loss_ls<T: Scalar>(params: &PolicyParams<T>, pairs: &[PairSequences]) -> ValueGrad<T> {
    let (v, g) = batch_mean(pairs, params.vocab_size(), |p| params.grad_logprob(&p.chosen));
    (-v, g.scaled(-T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossFlags {
    pub lp: bool,
    pub lf: bool,
    pub ls: bool,
    /// Also anchor suffix-pair winners with a likelihood term. Off by default.
    pub anchor_follow_winners: bool,
}

impl Default for LossFlags {
    fn default() -> Self {
        LossFlags {
            lp: true,
            lf: true,
            ls: true,
            anchor_follow_winners: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sft: Option<f64>,
    pub l_p: f64,
    pub l_f: f64,
    pub l_s: f64,
    pub total: f64,
}

/// Current parameters, frozen reference and optimizer settings.
#[derive(Debug, Clone)]
pub struct OptimState<T> {
    pub params: PolicyParams<T>,
    pub ref_params: PolicyParams<T>,
    pub beta: T,
    pub learning_rate: T,
    /// 0 gives plain gradient descent.
    pub momentum: T,
    pub velocity: Option<SparseGrad<T>>,
    pub step_counter: u64,
}

impl<T: Scalar> OptimState<T> {
    /// Reference snapshot equal to the starting parameters.
    pub fn new(params: PolicyParams<T>, beta: T, learning_rate: T) -> Self {
        OptimState {
            ref_params: params.clone(),
            params,
            beta,
            learning_rate,
            momentum: T::zero(),
            velocity: None,
            step_counter: 0,
        }
    }

    /// Descends along `grad`, with momentum when configured.
    pub fn descend(&mut self, grad: SparseGrad<T>) {
        let direction = if self.momentum > T::zero() {
            let mut v = self
                .velocity
                .take()
                .map(|v| v.scaled(self.momentum))
                .unwrap_or_else(|| SparseGrad::zeros(grad.width()));
            v.add_scaled(&grad, T::one());
            self.velocity = Some(v.clone());
            v
        } else {
            grad
        };
        self.params = self.params.apply(&direction, -self.learning_rate);
        self.step_counter += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum OptimizeError {
    #[error("the {0} term is enabled but its batch is empty")]
    EmptyActiveBatch(&'static str),
    #[error("no loss term is enabled")]
    NothingToOptimize,
}

/// Value and gradient of the flagged objective without updating.
pub fn pgpo_objective<T: Scalar>(
    state: &OptimState<T>,
    dp: &[PairSequences],
    df: &[PairSequences],
    flags: LossFlags,
) -> Result<(LossBreakdown, SparseGrad<T>), OptimizeError> {
    if !(flags.lp || flags.lf || flags.ls) {
        return Err(OptimizeError::NothingToOptimize);
    }
    if (flags.lp || flags.ls) && dp.is_empty() {
        return Err(OptimizeError::EmptyActiveBatch(if flags.lp { "L_p" } else { "L_s" }));
    }
    if flags.lf && df.is_empty() {
        return Err(OptimizeError::EmptyActiveBatch("L_f"));
    }
    let width = state.params.vocab_size();
    let mut grad = SparseGrad::zeros(width);
    let mut out = LossBreakdown::default();
    if flags.lp {
        let (v, g) = loss_lp(state, dp);
        out.l_p = v.to_f64_lossy();
        grad.add_scaled(&g, T::one());
    }
    if flags.lf {
        let (v, g) = loss_lf(state, df);
        out.l_f = v.to_f64_lossy();
        grad.add_scaled(&g, T::one());
    }
    if flags.ls {
        let (v, g) = loss_ls(&state.params, dp);
        out.l_s = v.to_f64_lossy();
        grad.add_scaled(&g, T::one());
    }
    if flags.anchor_follow_winners && !df.is_empty() {
        let (v, g) = loss_ls(&state.params, df);
        out.l_s += v.to_f64_lossy();
        grad.add_scaled(&g, T::one());
    }
    out.total = out.l_p + out.l_f + out.l_s;
    Ok((out, grad))
}

/// One update on the flagged sum of losses. The breakdown is measured before the update.
pub fn pgpo_step<T: Scalar>(
    state: &OptimState<T>,
    dp: &[PairSequences],
    df: &[PairSequences],
    flags: LossFlags,
) -> Result<(OptimState<T>, LossBreakdown), OptimizeError> {
    let (breakdown, grad) = pgpo_objective(state, dp, df, flags)?;
    let mut next = state.clone();
    next.descend(grad);
    Ok((next, breakdown))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// (row, column, analytic, numeric) per checked coordinate.
    pub coordinates: Vec<(u32, usize, f64, f64)>,
}

/// Relative error floor so coordinates with vanishing gradient compare absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Five-point central-difference check of an analytic gradient on `trials` coordinates.
/// Half the coordinates come from rows the analytic gradient touches, the rest
/// are uniform over the whole matrix.
pub fn grad_check<F>(loss: F, params: &PolicyParams<f64>, trials: usize, h: f64, tolerance: f64, seed: u64) -> GradCheckReport
where
    F: Fn(&PolicyParams<f64>) -> (f64, SparseGrad<f64>),
{
    let (_, analytic) = loss(params);
    let touched: Vec<u32> = analytic.rows().map(|(r, _)| r).collect();
    let width = params.vocab_size();
    let rows = params.spec().hash_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coordinates = Vec::with_capacity(trials);
    let mut max_rel = 0.0f64;
    for i in 0..trials {
        let row = if i % 2 == 0 && !touched.is_empty() {
            touched[rng.gen_range(0..touched.len())]
        } else {
            rng.gen_range(0..rows)
        };
        let col = rng.gen_range(0..width);
        let w = params.weight(row, col);
        let at = |d: f64| loss(&params.with_weight(row, col, w + d)).0;
        let numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        let a = analytic.get(row, col);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        max_rel = max_rel.max(rel);
        coordinates.push((row, col, a, numeric));
    }
    GradCheckReport {
        trials,
        max_rel_error: max_rel,
        tolerance,
        passed: max_rel < tolerance,
        coordinates,
    }
}
