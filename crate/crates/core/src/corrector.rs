//! Receiver-side text purification by noisy-channel spelling correction.
//!
//! Each received token `t'` is replaced by the vocabulary token `c`
//! maximizing `prior(c) · p^d · (1 − p)^(L − d)`, where `d` is the character
//! edit distance between `t'` and `c`, `L = max(|t'|, |c|)` and `p` is the
//! per-character substitution probability. Candidates further than two edits
//! away are not considered; a token without candidates becomes UNK.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{self, ChannelConfig, ChannelKind, PayloadType, NOISELESS};
use crate::semantics::{self, EmbeddingTable, TextEmbedding, Vocab, UNK};

pub const MAX_EDIT_DISTANCE: usize = 2;
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum CorrectorError {
    #[error("substitution probability {0} outside [0, 1)")]
    SubProb(f64),
    #[error("prior must be non-negative and sum to 1")]
    PriorNotNormalized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    sub_prob: f64,
    prior: Vec<f64>,
}

impl NoiseModel {
    pub fn new(sub_prob: f64, prior: Vec<f64>) -> Result<Self, CorrectorError> {
        if !(0.0..1.0).contains(&sub_prob) {
            return Err(CorrectorError::SubProb(sub_prob));
        }
        if prior.iter().any(|&p| !(p >= 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CorrectorError::PriorNotNormalized);
        }
        Ok(Self { sub_prob, prior })
    }

    pub fn uniform(sub_prob: f64, vocab: &Vocab) -> Result<Self, CorrectorError> {
        let n = vocab.len();
        Self::new(sub_prob, vec![1.0 / n as f64; n])
    }

    pub fn sub_prob(&self) -> f64 {
        self.sub_prob
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// `P(observed | intended)` under the substitution model, or `None` when
    /// the tokens are more than [`MAX_EDIT_DISTANCE`] edits apart.
    pub fn likelihood(&self, observed: &str, intended: &str) -> Option<f64> {
        let d = strsim::levenshtein(observed, intended);
        if d > MAX_EDIT_DISTANCE {
            return None;
        }
        let len = observed.chars().count().max(intended.chars().count());
        Some(self.sub_prob.powi(d as i32) * (1.0 - self.sub_prob).powi((len - d) as i32))
    }
}

fn correct_token<'v>(token: &str, vocab: &'v Vocab, model: &NoiseModel) -> &'v str {
    let mut best: Option<(f64, &str)> = None;
    for (i, cand) in vocab.tokens().iter().enumerate() {
        let Some(lik) = model.likelihood(token, cand) else {
            continue;
        };
        let score = model.prior[i] * lik;
        let better = match best {
            None => true,
            Some((s, b)) => score > s || (score == s && cand.as_str() < b),
        };
        if better {
            best = Some((score, cand));
        }
    }
    best.map_or(UNK, |(_, t)| t)
}

/// Corrects every token of `noisy` independently.
///
/// # Panics
///
/// If the model's prior does not cover the vocabulary.
pub fn correct_spelling(noisy: &str, vocab: &Vocab, model: &NoiseModel) -> String {
    assert_eq!(model.prior.len(), vocab.len(), "prior/vocabulary size mismatch");
    let tokens: Vec<&str> = semantics::tokenize(noisy)
        .into_iter()
        .map(|t| correct_token(t, vocab, model))
        .collect();
    semantics::detokenize(&tokens)
}

/// Monte Carlo per-token decode error rate over AWGN at `snr_db`.
///
/// Uniformly drawn vocabulary tokens are embedded as one frame, sent through
/// the channel, equalized and decoded; the result is the mismatch fraction.
pub fn estimate_sub_prob(
    snr_db: f64,
    vocab: &Vocab,
    table: &EmbeddingTable,
    trials: usize,
    seed: u64,
) -> f64 {
    assert!(trials >= MIN_TRIALS, "at least {MIN_TRIALS} trials are required");
    if snr_db == NOISELESS {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let sent: Vec<usize> = (0..trials).map(|_| rng.random_range(0..vocab.len())).collect();
    let rows: Vec<f64> = sent.iter().flat_map(|&i| table.row(i).to_vec()).collect();
    let emb = TextEmbedding::new(table.dim(), rows).expect("rows match table dim");
    let block = channel::modulate(&emb.to_payload(), PayloadType::TextEmbedding)
        .expect("embedding payload is well formed");
    let config = ChannelConfig {
        kind: ChannelKind::Awgn,
        snr_db,
        seed,
    };
    let (rx, h) = channel::transmit(&block, &config, 0);
    let eq = channel::equalize(&rx, h).expect("AWGN gain is 1");
    let received = TextEmbedding::from_payload(&channel::demodulate(&eq)).expect("payload shape kept");
    let errors = sent
        .iter()
        .enumerate()
        .filter(|&(r, &i)| semantics::nearest_token(received.row(r), table) != i)
        .count();
    errors as f64 / trials as f64
}
