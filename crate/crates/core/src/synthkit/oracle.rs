//! Brute-force reference evaluation of the cartography measures.
//!
//! Everything here is written from the formulas with plain loops: direct
//! products of T-th roots for the geometric mean, explicit n-gram scans
//! for BLEU, two-pass population standard deviation. It shares no code
//! with [`crate::measures`] and accumulates in a fixed order.

use crate::dynlog::{Corpus, DynamicsStore, EpochWindow};
use crate::error::{MeasureError, Result};
use crate::measures::{MeasureKind, MeasureScores};

pub fn naive_chia(probs: &[f64]) -> f64 {
    let mut total = 0.0;
    for p in probs {
        total += p;
    }
    total / probs.len() as f64
}

pub fn naive_geomean(probs: &[f64]) -> f64 {
    let root = 1.0 / probs.len() as f64;
    let mut product = 1.0;
    for p in probs {
        product *= p.powf(root);
    }
    product
}

fn occurrences(haystack: &[String], gram: &[String]) -> usize {
    let n = gram.len();
    if haystack.len() < n {
        return 0;
    }
    let mut count = 0;
    for start in 0..=haystack.len() - n {
        if haystack[start..start + n] == *gram {
            count += 1;
        }
    }
    count
}

/// Sentence BLEU-4 with method-4 smoothing (k = 5) and auto-reweighting.
pub fn naive_bleu(hyp: &[String], reference: &[String]) -> f64 {
    let h = hyp.len();
    if h == 0 {
        return 0.0;
    }
    let orders = if h < 4 { h } else { 4 };
    let mut precisions = Vec::new();
    let mut incvnt = 1;
    for n in 1..=4usize {
        let mut matched = 0usize;
        let mut total = 0usize;
        if h >= n {
            for start in 0..=h - n {
                let gram = &hyp[start..start + n];
                total += 1;
                // count each distinct n-gram once, at its first occurrence
                let first = (0..start).all(|s| hyp[s..s + n] != *gram);
                if first {
                    let in_hyp = occurrences(hyp, gram);
                    let in_ref = occurrences(reference, gram);
                    matched += if in_hyp < in_ref { in_hyp } else { in_ref };
                }
            }
        }
        let denominator = if total > 0 { total } else { 1 } as f64;
        if matched == 0 && h > 1 {
            let numerator = 1.0 / (2f64.powi(incvnt) * 5.0 / (h as f64).ln());
            precisions.push(numerator / denominator);
            incvnt += 1;
        } else {
            precisions.push(matched as f64 / denominator);
        }
    }
    let mut log_sum = 0.0;
    for p in &precisions[..orders] {
        if *p == 0.0 {
            return 0.0;
        }
        log_sum += (1.0 / orders as f64) * p.ln();
    }
    let r = reference.len();
    let bp = if h > r { 1.0 } else { (1.0 - r as f64 / h as f64).exp() };
    bp * log_sum.exp()
}

fn naive_mean_std(values: &[f64]) -> (f64, f64) {
    let e = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / e;
    let mut sq = 0.0;
    for v in values {
        sq += (v - mean) * (v - mean);
    }
    (mean, (sq / e).sqrt())
}

/// Reference confidence and variability for one example's per-epoch
/// probabilities.
pub fn naive_confidence_variability(epochs: &[Vec<f64>], measure: MeasureKind) -> (f64, f64) {
    let per_epoch: Vec<f64> = epochs
        .iter()
        .map(|p| match measure {
            MeasureKind::Chia => naive_chia(p),
            _ => naive_geomean(p),
        })
        .collect();
    naive_mean_std(&per_epoch)
}

/// Reference score rows for every example of `store`, sorted by id.
pub fn oracle_scores(
    store: &DynamicsStore,
    corpus: &Corpus,
    window: EpochWindow,
    measure: MeasureKind,
) -> Result<Vec<MeasureScores>> {
    let mut rows = Vec::new();
    for ex in store.examples() {
        let gold = corpus
            .get(&ex.example_id)
            .ok_or_else(|| MeasureError::MissingFromCorpus {
                example_id: ex.example_id.clone(),
            })?
            .target
            .tokens();
        let mut per_epoch = Vec::new();
        let mut matches = 0usize;
        let mut epochs = 0usize;
        for obs in &ex.observations {
            if obs.epoch < window.min_epoch || obs.epoch > window.max_epoch {
                continue;
            }
            let predicted = obs.predicted_tokens.as_ref().ok_or_else(|| {
                MeasureError::MissingPredictions {
                    example_id: ex.example_id.clone(),
                    epoch: obs.epoch,
                }
            })?;
            let predicted = predicted.tokens();
            epochs += 1;
            let mut equal = predicted.len() == gold.len();
            for t in 0..predicted.len().min(gold.len()) {
                if predicted[t] != gold[t] {
                    equal = false;
                }
            }
            if equal {
                matches += 1;
            }
            per_epoch.push(match measure {
                MeasureKind::Chia => naive_chia(&obs.gold_token_probs),
                MeasureKind::InvPpl => naive_geomean(&obs.gold_token_probs),
                MeasureKind::Bleu => naive_bleu(predicted, gold),
            });
        }
        let (confidence, variability) = naive_mean_std(&per_epoch);
        let mut bin = 0u8;
        while bin < 9 && (bin as usize + 1) * epochs <= 10 * matches {
            bin += 1;
        }
        rows.push(MeasureScores {
            example_id: ex.example_id.clone(),
            measure,
            confidence,
            variability,
            correctness: matches as f64 / epochs as f64,
            correctness_bin: bin,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn hand_fixture() {
        let epochs = vec![vec![0.5, 0.5], vec![0.8, 0.2]];
        let (c, v) = naive_confidence_variability(&epochs, MeasureKind::Chia);
        assert!((c - 0.5).abs() < 1e-12 && v.abs() < 1e-12);
        let (c, v) = naive_confidence_variability(&epochs, MeasureKind::InvPpl);
        assert!((c - 0.45).abs() < 1e-12 && (v - 0.05).abs() < 1e-12);
    }

    #[test]
    fn naive_bleu_identities() {
        assert_eq!(naive_bleu(&toks("a b c d"), &toks("a b c d")), 1.0);
        assert_eq!(naive_bleu(&toks("a b"), &toks("a b")), 1.0);
        assert_eq!(naive_bleu(&toks("x"), &toks("a")), 0.0);
        assert_eq!(naive_bleu(&[], &toks("a")), 0.0);
    }
}
