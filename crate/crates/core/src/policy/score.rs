use super::features::{Segment, SegmentContext};
use super::params::{PolicyParams, ScoredSequence};
use super::vocab::{TokenId, Vocab};
use super::PolicyError;
use crate::plan::parse_plan_lenient;
use crate::trajectory::Round;
use crate::Scalar;

/// Words of each plan step, one entry per round the step guides.
///
/// Parsed plans contribute the step name plus entity-resolved arguments.
/// Anything else (natural-language plans, unparseable text) contributes the
/// words of each non-empty line with a leading `Step N` label removed.
pub fn plan_step_words(plan: &str) -> Vec<Vec<String>> {
    if let Ok(parsed) = parse_plan_lenient(plan) {
        if !parsed.steps.is_empty() {
            return (0..parsed.steps.len()).map(|i| parsed.resolved_step_words(i)).collect();
        }
    }
    plan.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("Entities:"))
        .map(|line| {
            let mut words: Vec<&str> = line.split_whitespace().collect();
            if words.first().is_some_and(|w| w.eq_ignore_ascii_case("step")) {
                words.drain(..words.len().min(2));
            }
            words
                .into_iter()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '_').to_lowercase())
                .filter(|w| !w.is_empty())
                .collect()
        })
        .collect()
}

/// Fixed conditioning for one episode: instruction, plan and first observation.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    instruction: Vec<TokenId>,
    plan_steps: Vec<Vec<TokenId>>,
    initial_observation: Vec<TokenId>,
}

impl EpisodeContext {
    pub fn new(vocab: &Vocab, instruction: &str, plan: Option<&str>, initial_observation: &str) -> Self {
        let plan_steps = plan
            .map(|p| {
                plan_step_words(p)
                    .into_iter()
                    .map(|ws| ws.iter().map(|w| vocab.id(w).unwrap_or_else(|| vocab.unk())).collect())
                    .collect()
            })
            .unwrap_or_default();
        EpisodeContext {
            instruction: vocab.encode_context(instruction),
            plan_steps,
            initial_observation: vocab.encode_context(initial_observation),
        }
    }

    pub fn plan_context(&self) -> SegmentContext {
        SegmentContext {
            instruction: self.instruction.clone(),
            ..Default::default()
        }
        .normalized()
    }

    /// Context for the thought of round `round` (1-based), given the round before it.
    pub fn round_context(&self, vocab: &Vocab, round: usize, previous: Option<&Round>) -> SegmentContext {
        let (observation, last_action) = match previous {
            Some(r) => (vocab.encode_context(&r.observation), vocab.encode_context(&r.action)),
            None => (self.initial_observation.clone(), Vec::new()),
        };
        SegmentContext {
            instruction: self.instruction.clone(),
            observation,
            last_action,
            round: round as u32,
            plan_step: self.plan_steps.get(round - 1).cloned().unwrap_or_default(),
            thought: Vec::new(),
        }
        .normalized()
    }

    /// Context for the action of a round once its thought is known.
    pub fn action_context(round_ctx: &SegmentContext, thought: &[TokenId]) -> SegmentContext {
        SegmentContext {
            thought: thought.to_vec(),
            ..round_ctx.clone()
        }
        .normalized()
    }
}

impl<T: Scalar> PolicyParams<T> {
    /// Positions scored by `log π(plan | instruction)`.
    pub fn plan_sequence(&self, instruction: &str, plan: &str) -> Result<ScoredSequence, PolicyError> {
        let tokens = self.vocab().encode(plan)?;
        let ctx = EpisodeContext::new(self.vocab(), instruction, None, "");
        Ok(self.segment_positions(Segment::Plan, &ctx.plan_context(), &tokens))
    }

    /// Positions for the thoughts and actions of `rounds`, which follow `history`.
    /// Observations only condition later rounds.
    pub fn rounds_sequence(
        &self,
        instruction: &str,
        plan: Option<&str>,
        initial_observation: &str,
        history: &[Round],
        rounds: &[Round],
    ) -> Result<ScoredSequence, PolicyError> {
        let vocab = self.vocab();
        let ctx = EpisodeContext::new(vocab, instruction, plan, initial_observation);
        let mut seq = ScoredSequence::default();
        for (k, round) in rounds.iter().enumerate() {
            let index = history.len() + k;
            let previous = if k > 0 { Some(&rounds[k - 1]) } else { history.last() };
            let round_ctx = ctx.round_context(vocab, index + 1, previous);
            let thought = vocab.encode(&round.thought)?;
            let action = vocab.encode(&round.action)?;
            seq.extend(self.segment_positions(Segment::Thought, &round_ctx, &thought));
            let action_ctx = EpisodeContext::action_context(&round_ctx, &thought);
            seq.extend(self.segment_positions(Segment::Action, &action_ctx, &action));
        }
        Ok(seq)
    }

    /// `log π(plan | instruction)`.
    pub fn logprob_plan(&self, instruction: &str, plan: &str) -> Result<T, PolicyError> {
        Ok(self.logprob(&self.plan_sequence(instruction, plan)?))
    }

    /// Sum of thought and action log-likelihoods of `rounds` after `history`.
    pub fn logprob_rounds(
        &self,
        instruction: &str,
        plan: Option<&str>,
        initial_observation: &str,
        history: &[Round],
        rounds: &[Round],
    ) -> Result<T, PolicyError> {
        Ok(self.logprob(&self.rounds_sequence(instruction, plan, initial_observation, history, rounds)?))
    }
}
