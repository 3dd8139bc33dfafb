use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureSpec, Segment, SegmentContext, BOS};
use super::vocab::{TokenId, Vocab, EOS};
use crate::Scalar;

/// One predicted token with the weight rows active in its context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Position {
    pub segment: Segment,
    pub features: Vec<u32>,
    pub target: TokenId,
}

/// Token positions whose log-probabilities are summed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScoredSequence {
    pub positions: Vec<Position>,
}

impl ScoredSequence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn extend(&mut self, other: ScoredSequence) {
        self.positions.extend(other.positions);
    }
}

/// Gradient with one dense row per touched feature bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrad<T> {
    width: usize,
    rows: BTreeMap<u32, Vec<T>>,
}

impl<T: Scalar> SparseGrad<T> {
    pub fn zeros(width: usize) -> Self {
        SparseGrad {
            width,
            rows: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> impl Iterator<Item = (u32, &[T])> {
        self.rows.iter().map(|(&r, v)| (r, v.as_slice()))
    }

    pub fn get(&self, row: u32, col: usize) -> T {
        self.rows.get(&row).map_or(T::zero(), |r| r[col])
    }

    pub fn row_mut(&mut self, row: u32) -> &mut [T] {
        let width = self.width;
        self.rows.entry(row).or_insert_with(|| vec![T::zero(); width])
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &SparseGrad<T>, scale: T) {
        for (row, vals) in other.rows() {
            let dst = self.row_mut(row);
            for (d, &v) in dst.iter_mut().zip(vals) {
                *d += scale * v;
            }
        }
    }

    pub fn scaled(mut self, scale: T) -> Self {
        for vals in self.rows.values_mut() {
            for v in vals {
                *v *= scale;
            }
        }
        self
    }

    /// Sum of two gradients; rows of `b` are added into `a`.
    pub fn merge(mut a: Self, b: Self) -> Self {
        if a.rows.len() < b.rows.len() {
            return Self::merge(b, a);
        }
        a.add_scaled(&b, T::one());
        a
    }

    pub fn norm_sq(&self) -> T {
        self.rows.values().flatten().map(|&v| v * v).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().flatten().all(|v| v.is_zero())
    }

    pub fn touched_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Linear softmax policy: `logits = Σ_{active rows} W[row, :]`.
///
/// Cloning is cheap; updates return a new snapshot and never mutate shared weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<T> {
    vocab: Arc<Vocab>,
    spec: FeatureSpec,
    weights: Arc<Vec<T>>,
}

impl<T: Scalar> PolicyParams<T> {
    /// All-zero weights: every context predicts the uniform distribution.
    pub fn zeros(vocab: Arc<Vocab>, spec: FeatureSpec) -> Self {
        let len = spec.hash_dim as usize * vocab.len();
        PolicyParams {
            vocab,
            spec,
            weights: Arc::new(vec![T::zero(); len]),
        }
    }

    /// Weights drawn uniformly from `[-scale, scale]`.
    pub fn random(vocab: Arc<Vocab>, spec: FeatureSpec, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = spec.hash_dim as usize * vocab.len();
        let weights = (0..len)
            .map(|_| T::from_f64_lossy(rng.gen_range(-scale..=scale)))
            .collect();
        PolicyParams {
            vocab,
            spec,
            weights: Arc::new(weights),
        }
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn spec(&self) -> FeatureSpec {
        self.spec
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, row: u32, col: usize) -> T {
        self.weights[row as usize * self.vocab.len() + col]
    }

    /// Copy with one weight replaced.
    pub fn with_weight(&self, row: u32, col: usize, value: T) -> Self {
        let mut w = (*self.weights).clone();
        w[row as usize * self.vocab.len() + col] = value;
        PolicyParams {
            vocab: self.vocab.clone(),
            spec: self.spec,
            weights: Arc::new(w),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    /// Copy with `scale * grad` added.
    pub fn apply(&self, grad: &SparseGrad<T>, scale: T) -> Self {
        let width = self.vocab.len();
        let mut w = (*self.weights).clone();
        for (row, vals) in grad.rows() {
            let base = row as usize * width;
            for (dst, &g) in w[base..base + width].iter_mut().zip(vals) {
                *dst += scale * g;
            }
        }
        PolicyParams {
            vocab: self.vocab.clone(),
            spec: self.spec,
            weights: Arc::new(w),
        }
    }

    pub fn cast<U: Scalar>(&self) -> PolicyParams<U> {
        PolicyParams {
            vocab: self.vocab.clone(),
            spec: self.spec,
            weights: Arc::new(self.weights.iter().map(|w| U::from_f64_lossy(w.to_f64_lossy())).collect()),
        }
    }

    pub fn logits(&self, features: &[u32]) -> Vec<T> {
        let width = self.vocab.len();
        let mut logits = vec![T::zero(); width];
        for &row in features {
            let base = row as usize * width;
            for (l, &w) in logits.iter_mut().zip(&self.weights[base..base + width]) {
                *l += w;
            }
        }
        logits
    }

    /// Row `features` of the log-softmax.
    pub fn log_probs(&self, features: &[u32]) -> Vec<T> {
        log_softmax(&self.logits(features))
    }

    pub fn logprob(&self, seq: &ScoredSequence) -> T {
        seq.positions
            .iter()
            .map(|p| self.log_probs(&p.features)[p.target as usize])
            .sum()
    }

    /// Log-likelihood and its gradient. For each position, active row `r`
    /// receives `onehot(target) - softmax`.
    pub fn grad_logprob(&self, seq: &ScoredSequence) -> (T, SparseGrad<T>) {
        let mut grad = SparseGrad::zeros(self.vocab.len());
        let mut total = T::zero();
        for p in &seq.positions {
            let lp = self.log_probs(&p.features);
            total += lp[p.target as usize];
            let mut delta: Vec<T> = lp.iter().map(|&l| -l.exp()).collect();
            delta[p.target as usize] += T::one();
            for &row in &p.features {
                for (g, &d) in grad.row_mut(row).iter_mut().zip(&delta) {
                    *g += d;
                }
            }
        }
        (total, grad)
    }

    /// Draws the next token. Temperature 0 is greedy with ties to the lowest id.
    /// Returns the token and its untempered log-probability.
    pub fn sample_token(&self, features: &[u32], temperature: f64, rng: &mut ChaCha8Rng) -> (TokenId, T) {
        let lp = self.log_probs(features);
        let token = if temperature <= 0.0 {
            argmax(&lp)
        } else {
            let inv = T::from_f64_lossy(1.0 / temperature);
            let tempered = log_softmax(&lp.iter().map(|&l| l * inv).collect::<Vec<_>>());
            draw(&tempered, rng)
        };
        (token, lp[token as usize])
    }

    /// Generates one segment up to and including `<eos>`. A segment that
    /// reaches `max_len` tokens is closed as if `<eos>` had been drawn, and
    /// that `<eos>` is scored too, so the returned log-probability always
    /// equals the sequence's score.
    pub fn sample_segment(
        &self,
        segment: Segment,
        ctx: &SegmentContext,
        temperature: f64,
        max_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<TokenId>, T) {
        let (mut prev2, mut prev) = (BOS, BOS);
        let newline = self.vocab.id("\n");
        let mut line = 0;
        let mut out = Vec::new();
        let mut total = T::zero();
        loop {
            let features = self.spec.features(segment, ctx, prev2, prev, line);
            if out.len() >= max_len {
                total += self.log_probs(&features)[EOS as usize];
                break;
            }
            let (tok, lp) = self.sample_token(&features, temperature, rng);
            total += lp;
            if tok == EOS {
                break;
            }
            out.push(tok);
            line += u32::from(Some(tok) == newline);
            prev2 = prev;
            prev = tok;
        }
        (out, total)
    }

    /// Scored positions for `tokens` followed by `<eos>`.
    pub fn segment_positions(&self, segment: Segment, ctx: &SegmentContext, tokens: &[TokenId]) -> ScoredSequence {
        let (mut prev2, mut prev) = (BOS, BOS);
        let newline = self.vocab.id("\n");
        let mut line = 0;
        let mut positions = Vec::with_capacity(tokens.len() + 1);
        for &target in tokens.iter().chain(std::iter::once(&EOS)) {
            positions.push(Position {
                segment,
                features: self.spec.features(segment, ctx, prev2, prev, line),
                target,
            });
            line += u32::from(Some(target) == newline);
            prev2 = prev;
            prev = target;
        }
        ScoredSequence { positions }
    }
}

pub(crate) fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

fn argmax<T: Scalar>(v: &[T]) -> TokenId {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best as TokenId
}

fn draw<T: Scalar>(log_probs: &[T], rng: &mut ChaCha8Rng) -> TokenId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &l) in log_probs.iter().enumerate() {
        acc += l.to_f64_lossy().exp();
        if u < acc {
            return i as TokenId;
        }
    }
    log_probs
        .iter()
        .rposition(|l| l.to_f64_lossy() > f64::NEG_INFINITY)
        .unwrap_or(0) as TokenId
}

#[derive(Serialize, Deserialize)]
struct Stored {
    vocab: Vocab,
    spec: FeatureSpec,
    /// Non-zero weights as (flat index, value).
    weights: Vec<(u64, f64)>,
}

impl<T: Scalar> Serialize for PolicyParams<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Stored {
            vocab: (*self.vocab).clone(),
            spec: self.spec,
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| !w.is_zero())
                .map(|(i, w)| (i as u64, w.to_f64_lossy()))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for PolicyParams<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let stored = Stored::deserialize(d)?;
        let len = stored.spec.hash_dim as usize * stored.vocab.len();
        let mut w = vec![T::zero(); len];
        for (i, v) in stored.weights {
            let slot = w
                .get_mut(i as usize)
                .ok_or_else(|| serde::de::Error::custom(format!("weight index {i} out of range")))?;
            if !v.is_finite() {
                return Err(serde::de::Error::custom("non-finite weight"));
            }
            *slot = T::from_f64_lossy(v);
        }
        Ok(PolicyParams {
            vocab: Arc::new(stored.vocab),
            spec: stored.spec,
            weights: Arc::new(w),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Arc<Vocab> {
        Arc::new(Vocab::from_texts(["a b c d e"]))
    }

    fn spec() -> FeatureSpec {
        FeatureSpec { n: 3, hash_dim: 31 }
    }

    #[test]
    fn uniform_at_zero() {
        let p = PolicyParams::<f64>::zeros(vocab(), spec());
        let lp = p.log_probs(&[1, 2]);
        for l in lp {
            assert!((l - (1.0f64 / 6.0).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization() {
        let p = PolicyParams::<f64>::random(vocab(), spec(), 3.0, 1);
        for rows in [&[0u32][..], &[1, 7, 30], &[]] {
            let s: f64 = p.log_probs(rows).iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_ties_lowest_id() {
        let p = PolicyParams::<f64>::zeros(vocab(), spec());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.sample_token(&[3], 0.0, &mut rng).0, 0);
        let p = p.with_weight(3, 4, 1.0).with_weight(3, 2, 1.0);
        assert_eq!(p.sample_token(&[3], 0.0, &mut rng).0, 2);
    }

    #[test]
    fn sampled_logprob_matches_score() {
        let p = PolicyParams::<f64>::random(vocab(), spec(), 1.0, 4);
        let ctx = SegmentContext {
            instruction: vec![1, 2],
            round: 1,
            ..Default::default()
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (toks, lp) = p.sample_segment(Segment::Thought, &ctx, 1.0, 5, &mut rng);
            let score = p.logprob(&p.segment_positions(Segment::Thought, &ctx, &toks));
            assert!((lp - score).abs() < 1e-12, "{lp} vs {score}");
        }
    }

    #[test]
    fn stored_round_trip() {
        let p = PolicyParams::<f64>::zeros(vocab(), spec()).with_weight(5, 2, -0.25);
        let text = serde_json::to_string(&p).unwrap();
        let back: PolicyParams<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn apply_is_copy_on_write() {
        let p = PolicyParams::<f64>::zeros(vocab(), spec());
        let mut g = SparseGrad::zeros(p.vocab_size());
        g.row_mut(2)[1] = 1.0;
        let q = p.apply(&g, 0.5);
        assert_eq!(p.weight(2, 1), 0.0);
        assert_eq!(q.weight(2, 1), 0.5);
    }
}
