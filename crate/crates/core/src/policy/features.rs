use serde::{Deserialize, Serialize};

use super::vocab::TokenId;

/// Which part of a trajectory a token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Plan,
    Thought,
    Action,
}

impl Segment {
    fn tag(self) -> u8 {
        match self {
            Segment::Plan => 1,
            Segment::Thought => 2,
            Segment::Action => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Segment::Plan => "plan",
            Segment::Thought => "thought",
            Segment::Action => "action",
        }
    }
}

/// Placeholder for "no previous token" at the start of a segment.
pub const BOS: TokenId = TokenId::MAX;

const MAX_ROUND_FEATURE: u32 = 15;
const MAX_LINE_FEATURE: u32 = 31;

/// Hashed n-gram feature configuration. `n` counts the predicted token, so
/// `n = 3` conditions on the two previous tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub n: u8,
    pub hash_dim: u32,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec { n: 3, hash_dim: 4096 }
    }
}

/// Conditioning available when predicting a token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentContext {
    pub instruction: Vec<TokenId>,
    pub observation: Vec<TokenId>,
    pub last_action: Vec<TokenId>,
    /// 1-based round index; 0 while writing the plan.
    pub round: u32,
    /// Words of the plan step aligned with this round.
    pub plan_step: Vec<TokenId>,
    /// Words of the current round's thought (action segment only).
    pub thought: Vec<TokenId>,
}

impl SegmentContext {
    /// Sorts and deduplicates every word list.
    pub fn normalized(mut self) -> Self {
        for list in [
            &mut self.instruction,
            &mut self.observation,
            &mut self.last_action,
            &mut self.plan_step,
            &mut self.thought,
        ] {
            list.sort_unstable();
            list.dedup();
        }
        self
    }
}

/// One feature template instance before hashing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKey {
    Bias,
    Prev(TokenId),
    Prev2(TokenId, TokenId),
    Instruction { word: TokenId, prev: TokenId },
    InstructionPrev2 { word: TokenId, prev2: TokenId, prev: TokenId },
    Observation { word: TokenId, prev: TokenId },
    LastAction { word: TokenId, prev: TokenId },
    Round { index: u32, prev: TokenId },
    PlanStep { word: TokenId, prev: TokenId },
    PlanStepPrev2 { word: TokenId, prev2: TokenId, prev: TokenId },
    Thought { word: TokenId, prev: TokenId },
    /// Lines completed so far in the segment.
    Line { index: u32, prev: TokenId },
}

impl FeatureKey {
    fn encode(&self, out: &mut Vec<u8>) {
        let mut put = |tag: u8, vals: &[u32]| {
            out.push(tag);
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        match *self {
            FeatureKey::Bias => put(0, &[]),
            FeatureKey::Prev(p) => put(1, &[p]),
            FeatureKey::Prev2(a, b) => put(2, &[a, b]),
            FeatureKey::Instruction { word, prev } => put(3, &[word, prev]),
            FeatureKey::InstructionPrev2 { word, prev2, prev } => put(4, &[word, prev2, prev]),
            FeatureKey::Observation { word, prev } => put(5, &[word, prev]),
            FeatureKey::LastAction { word, prev } => put(6, &[word, prev]),
            FeatureKey::Round { index, prev } => put(7, &[index, prev]),
            FeatureKey::PlanStep { word, prev } => put(8, &[word, prev]),
            FeatureKey::PlanStepPrev2 { word, prev2, prev } => put(9, &[word, prev2, prev]),
            FeatureKey::Thought { word, prev } => put(10, &[word, prev]),
            FeatureKey::Line { index, prev } => put(11, &[index, prev]),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl FeatureSpec {
    /// Row of the weight matrix a feature lands in.
    pub fn bucket(&self, segment: Segment, key: &FeatureKey) -> u32 {
        let mut bytes = Vec::with_capacity(16);
        bytes.push(segment.tag());
        key.encode(&mut bytes);
        (fnv1a(&bytes) % u64::from(self.hash_dim.max(1))) as u32
    }

    /// Every active feature template for predicting the token after `prev2 prev`
    /// on line `line` of the segment.
    pub fn keys(&self, segment: Segment, ctx: &SegmentContext, prev2: TokenId, prev: TokenId, line: u32) -> Vec<FeatureKey> {
        let prev = if self.n >= 2 { prev } else { BOS };
        let mut keys = vec![FeatureKey::Bias];
        if self.n >= 2 {
            keys.push(FeatureKey::Prev(prev));
        }
        if self.n >= 3 {
            keys.push(FeatureKey::Prev2(prev2, prev));
        }
        keys.push(FeatureKey::Round {
            index: ctx.round.min(MAX_ROUND_FEATURE),
            prev,
        });
        for &word in &ctx.instruction {
            keys.push(FeatureKey::Instruction { word, prev });
            if self.n >= 3 {
                keys.push(FeatureKey::InstructionPrev2 { word, prev2, prev });
            }
        }
        for &word in &ctx.observation {
            keys.push(FeatureKey::Observation { word, prev });
        }
        for &word in &ctx.last_action {
            keys.push(FeatureKey::LastAction { word, prev });
        }
        for &word in &ctx.plan_step {
            keys.push(FeatureKey::PlanStep { word, prev });
            if self.n >= 3 {
                keys.push(FeatureKey::PlanStepPrev2 { word, prev2, prev });
            }
        }
        if segment == Segment::Plan {
            keys.push(FeatureKey::Line {
                index: line.min(MAX_LINE_FEATURE),
                prev,
            });
        }
        if segment == Segment::Action {
            for &word in &ctx.thought {
                keys.push(FeatureKey::Thought { word, prev });
            }
        }
        keys
    }

    /// Sorted, deduplicated weight rows active in this context.
    pub fn features(&self, segment: Segment, ctx: &SegmentContext, prev2: TokenId, prev: TokenId, line: u32) -> Vec<u32> {
        let mut rows: Vec<u32> = self
            .keys(segment, ctx, prev2, prev, line)
            .iter()
            .map(|k| self.bucket(segment, k))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}
