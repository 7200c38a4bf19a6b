//! Sentence-level smoothed BLEU-4 against a single reference.
//!
//! Conventions: clipped n-gram precisions for orders 1..=4, uniform
//! weights re-normalised over orders `1..=h` when the hypothesis has
//! `h < 4` tokens, Chen & Cherry smoothing method 4 with `k = 5` for
//! zero-count orders, and the usual brevity penalty.

use std::collections::HashMap;

use crate::dynlog::TokenSeq;
use crate::error::MeasureError;

const MAX_ORDER: usize = 4;
const SMOOTHING_K: f64 = 5.0;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped match count and the number of hypothesis n-grams (at least 1).
fn modified_precision(hypothesis: &[String], reference: &[String], n: usize) -> (usize, usize) {
    if hypothesis.len() < n {
        return (0, 1);
    }
    let hyp = ngram_counts(hypothesis, n);
    let refc = ngram_counts(reference, n);
    let matched = hyp
        .iter()
        .map(|(gram, &count)| count.min(refc.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, hypothesis.len() + 1 - n)
}

/// BLEU-4 of `hypothesis` against `reference`, in `[0, 1]`.
pub fn bleu4(hypothesis: &TokenSeq, reference: &TokenSeq) -> Result<f64, MeasureError> {
    if reference.is_empty() {
        return Err(MeasureError::EmptyReference);
    }
    Ok(bleu4_tokens(hypothesis.tokens(), reference.tokens()))
}

pub(crate) fn bleu4_tokens(hypothesis: &[String], reference: &[String]) -> f64 {
    let h = hypothesis.len();
    let r = reference.len();
    if h == 0 {
        return 0.0;
    }
    let orders = h.min(MAX_ORDER);
    let ln_h = (h as f64).ln();

    let mut log_sum = 0.0;
    let mut incvnt = 0i32;
    for n in 1..=orders {
        let (matched, total) = modified_precision(hypothesis, reference, n);
        let numerator = if matched > 0 {
            matched as f64
        } else if h > 1 {
            incvnt += 1;
            1.0 / (2f64.powi(incvnt) * SMOOTHING_K / ln_h)
        } else {
            // a single unmatched token cannot be smoothed
            return 0.0;
        };
        log_sum += (numerator / total as f64).ln() / orders as f64;
    }

    let bp = if h > r {
        1.0
    } else {
        (1.0 - r as f64 / h as f64).exp()
    };
    bp * log_sum.exp()
}
