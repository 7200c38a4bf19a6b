//! Synthetic dynamics with planted cartography regions.
//!
//! Gold-token probabilities per epoch are drawn per region:
//!
//! | region    | per-token probability                                        |
//! |-----------|--------------------------------------------------------------|
//! | easy      | `U(0.90, 0.99)`                                              |
//! | hard      | `U(0.02, 0.10)`                                              |
//! | ambiguous | `0.15 + U(-0.05, 0.05)` on odd epochs, `0.85 + ...` on even  |
//!
//! An epoch's prediction equals the gold target when that epoch's
//! geometric mean exceeds 0.5 and is a one-token corruption of it
//! otherwise.

pub mod oracle;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynlog::{
    Corpus, CorpusExample, DynamicsStore, EpochObservation, ExampleDynamics, TokenSeq,
};
use crate::error::{Error, Result};
use crate::measures::geometric_mean;
use crate::selection::Aspect;

pub use oracle::oracle_scores;

const SOURCE_VOCAB: usize = 40;
const TARGET_VOCAB: usize = 60;
const CORRUPT_TOKEN: &str = "<err>";

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPlan {
    pub n_easy: usize,
    pub n_ambiguous: usize,
    pub n_hard: usize,
    /// Inclusive range of target (and source) lengths.
    pub seq_len_range: (usize, usize),
    pub epochs: u32,
    pub seed: u64,
}

impl RegionPlan {
    pub fn new(n_easy: usize, n_ambiguous: usize, n_hard: usize, epochs: u32, seed: u64) -> Self {
        RegionPlan {
            n_easy,
            n_ambiguous,
            n_hard,
            seq_len_range: (3, 12),
            epochs,
            seed,
        }
    }

    pub fn total(&self) -> usize {
        self.n_easy + self.n_ambiguous + self.n_hard
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.seq_len_range;
        if self.epochs < 2 {
            return Err(Error::Synth(format!("plan needs at least 2 epochs, got {}", self.epochs)));
        }
        if lo == 0 || lo > hi {
            return Err(Error::Synth(format!("invalid sequence length range {lo}..={hi}")));
        }
        if self.total() == 0 {
            return Err(Error::Synth("plan has no examples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub store: DynamicsStore,
    pub corpus: Corpus,
    /// Planted region of every example.
    pub labels: BTreeMap<String, Aspect>,
}

impl SyntheticSet {
    pub fn members(&self, region: Aspect) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .filter(move |(_, r)| **r == region)
            .map(|(id, _)| id.as_str())
    }
}

fn token_probs(rng: &mut ChaCha8Rng, region: Aspect, epoch: u32, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| match region {
            Aspect::Easy => rng.random_range(0.90..0.99),
            Aspect::Hard => rng.random_range(0.02..0.10),
            Aspect::Ambiguous => {
                let centre = if epoch % 2 == 1 { 0.15 } else { 0.85 };
                centre + rng.random_range(-0.05..0.05)
            }
        })
        .collect()
}

fn random_seq(rng: &mut ChaCha8Rng, prefix: &str, vocab: usize, len: usize) -> TokenSeq {
    TokenSeq::from_whitespace(
        &(0..len)
            .map(|_| format!("{prefix}{}", rng.random_range(0..vocab)))
            .collect::<Vec<_>>()
            .join(" "),
    )
}

/// Deterministic under `plan.seed`. Ids are zero-padded line numbers with
/// regions shuffled across them.
pub fn generate(plan: &RegionPlan) -> Result<SyntheticSet> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut regions: Vec<Aspect> = std::iter::repeat_n(Aspect::Easy, plan.n_easy)
        .chain(std::iter::repeat_n(Aspect::Ambiguous, plan.n_ambiguous))
        .chain(std::iter::repeat_n(Aspect::Hard, plan.n_hard))
        .collect();
    regions.shuffle(&mut rng);

    let width = plan.total().to_string().len().max(4);
    let (lo, hi) = plan.seq_len_range;
    let mut corpus = Vec::with_capacity(regions.len());
    let mut dynamics = Vec::with_capacity(regions.len());
    let mut labels = BTreeMap::new();
    for (i, &region) in regions.iter().enumerate() {
        let example_id = format!("{i:0width$}");
        let source_len = rng.random_range(lo..=hi);
        let source = random_seq(&mut rng, "s", SOURCE_VOCAB, source_len);
        let target_len = rng.random_range(lo..=hi);
        let target = random_seq(&mut rng, "t", TARGET_VOCAB, target_len);

        let mut observations = Vec::with_capacity(plan.epochs as usize);
        for epoch in 1..=plan.epochs {
            let probs = token_probs(&mut rng, region, epoch, target.len());
            let predicted = if geometric_mean(&probs) > 0.5 {
                target.clone()
            } else {
                let mut tokens = target.tokens().to_vec();
                let pos = rng.random_range(0..tokens.len());
                tokens[pos] = CORRUPT_TOKEN.to_owned();
                TokenSeq::new(tokens).expect("generated tokens have no whitespace")
            };
            observations.push(EpochObservation {
                epoch,
                gold_token_probs: probs,
                predicted_tokens: Some(predicted),
            });
        }

        labels.insert(example_id.clone(), region);
        dynamics.push(ExampleDynamics {
            example_id: example_id.clone(),
            observations,
        });
        corpus.push(CorpusExample {
            example_id,
            source,
            target,
        });
    }

    Ok(SyntheticSet {
        store: DynamicsStore::from_examples(dynamics)?,
        corpus: Corpus::from_examples(corpus).expect("generated ids are unique"),
        labels,
    })
}
