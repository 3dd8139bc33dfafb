//! Sequence policy with exact log-likelihoods.
//!
//! A trajectory is generated as segments: an optional plan, then a thought and
//! an action per round, each closed by `<eos>`. Every token is drawn from a
//! linear softmax over hashed context features (previous tokens, instruction,
//! last observation and action, round index, aligned plan step, the line
//! number within a plan, and for actions the current thought). Observations condition later segments but are
//! never scored.

mod external;
mod features;
mod params;
mod rollout;
mod score;
mod vocab;

pub use external::{external_policy_call, Fragment, PolicyEndpoint, PolicyMode, PolicyRequest};
pub use features::{FeatureKey, FeatureSpec, Segment, SegmentContext, BOS};
pub use params::{PolicyParams, Position, ScoredSequence, SparseGrad};
pub use rollout::{
    PlanSource, Rollout, RolloutError, RolloutRequest, SegmentLogprob, MAX_ACTION_TOKENS, MAX_PLAN_TOKENS,
    MAX_THOUGHT_TOKENS,
};
pub use score::{plan_step_words, EpisodeContext};
pub use vocab::{detokenize, tokenize, TokenId, Vocab, EOS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("token `{0}` is not in the vocabulary")]
    TokenOutOfVocabulary(String),
    #[error("policy server unreachable after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed policy response: {0}")]
    MalformedResponse(String),
}
