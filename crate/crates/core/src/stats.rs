//! Descriptive statistics of subsets: mean lengths and word rarity.
//!
//! Rarity of a sequence is `-(1/T) * sum_t ln f(token_t)` where `f` is the
//! relative frequency of the token on the same side (source or target) of
//! the full training corpus.

use std::collections::HashMap;
use std::io::Write;

use crate::dynlog::{Corpus, TokenSeq};
use crate::error::{Result, StatsError};

/// Relative token frequencies of one corpus side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FreqTable {
    counts: HashMap<String, u64>,
    total: u64,
}

impl FreqTable {
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a TokenSeq>) -> Self {
        let mut table = FreqTable::default();
        for seq in seqs {
            for tok in seq {
                *table.counts.entry(tok.clone()).or_insert(0) += 1;
                table.total += 1;
            }
        }
        table
    }

    pub fn sources(corpus: &Corpus) -> Self {
        Self::from_sequences(corpus.iter().map(|e| &e.source))
    }

    pub fn targets(corpus: &Corpus) -> Self {
        Self::from_sequences(corpus.iter().map(|e| &e.target))
    }

    pub fn frequency(&self, token: &str) -> Option<f64> {
        self.counts
            .get(token)
            .map(|&c| c as f64 / self.total as f64)
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Length-normalised sum of negative log relative frequencies. An empty
/// sequence has rarity 0.
pub fn rarity(seq: &TokenSeq, table: &FreqTable) -> Result<f64> {
    if seq.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for tok in seq {
        let f = table
            .frequency(tok)
            .ok_or_else(|| StatsError::UnknownToken { token: tok.clone() })?;
        sum -= f.ln();
    }
    Ok(sum / seq.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetStats {
    pub mean_source_len: f64,
    pub mean_target_len: f64,
    pub mean_source_rarity: f64,
    pub mean_target_rarity: f64,
    pub n: usize,
}

/// Precomputed frequency tables for repeated subset statistics over one
/// corpus.
pub struct StatsContext<'a> {
    corpus: &'a Corpus,
    sources: FreqTable,
    targets: FreqTable,
}

impl<'a> StatsContext<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        StatsContext {
            corpus,
            sources: FreqTable::sources(corpus),
            targets: FreqTable::targets(corpus),
        }
    }

    /// Means over `ids`; all zeros for an empty subset.
    pub fn subset_stats<S: AsRef<str>>(&self, ids: &[S]) -> Result<SubsetStats> {
        let mut acc = [0.0f64; 4];
        for id in ids {
            let id = id.as_ref();
            let ex = self.corpus.get(id).ok_or_else(|| StatsError::UnknownId {
                example_id: id.to_owned(),
            })?;
            acc[0] += ex.source.len() as f64;
            acc[1] += ex.target.len() as f64;
            acc[2] += rarity(&ex.source, &self.sources)?;
            acc[3] += rarity(&ex.target, &self.targets)?;
        }
        let n = ids.len();
        let denom = n.max(1) as f64;
        Ok(SubsetStats {
            mean_source_len: acc[0] / denom,
            mean_target_len: acc[1] / denom,
            mean_source_rarity: acc[2] / denom,
            mean_target_rarity: acc[3] / denom,
            n,
        })
    }
}

/// Statistics of the subset `ids`, with frequencies from the whole corpus.
pub fn subset_stats<S: AsRef<str>>(ids: &[S], corpus: &Corpus) -> Result<SubsetStats> {
    StatsContext::new(corpus).subset_stats(ids)
}

pub const STATS_HEADER: &str =
    "subset,measure,aspect,mean_src_len,mean_tgt_len,mean_src_rarity,mean_tgt_rarity,n";

/// One labelled row of the stats CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub subset: String,
    pub measure: String,
    pub aspect: String,
    pub stats: SubsetStats,
}

pub fn write_stats_csv<W: Write>(out: W, rows: &[StatsRow], comments: &[String]) -> std::io::Result<()> {
    let mut out = out;
    for comment in comments {
        for line in comment.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(STATS_HEADER.split(','))?;
    for row in rows {
        let s = &row.stats;
        writer.write_record([
            row.subset.clone(),
            row.measure.clone(),
            row.aspect.clone(),
            s.mean_source_len.to_string(),
            s.mean_target_len.to_string(),
            s.mean_source_rarity.to_string(),
            s.mean_target_rarity.to_string(),
            s.n.to_string(),
        ])?;
    }
    writer.flush()
}
