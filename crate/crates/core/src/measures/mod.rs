//! Per-example confidence, variability and correctness.
//!
//! Each measure reduces one epoch of an example to a sequence-level score
//! in `[0, 1]`:
//!
//! * [`MeasureKind::Chia`]: arithmetic mean of the gold-token probabilities;
//! * [`MeasureKind::InvPpl`]: their geometric mean (inverse perplexity);
//! * [`MeasureKind::Bleu`]: [`bleu4`] of the epoch's decode against the gold.
//!
//! Confidence is the mean of the per-epoch scores over the window and
//! variability their population standard deviation. Correctness is the
//! fraction of epochs whose decode equals the gold sequence exactly.

mod bleu;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynlog::{Corpus, StoreView, TokenSeq, WindowedExample};
use crate::error::{MeasureError, Result};

pub use bleu::bleu4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    #[serde(rename = "invppl")]
    InvPpl,
    #[serde(rename = "chia")]
    Chia,
    #[serde(rename = "bleu")]
    Bleu,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [MeasureKind::InvPpl, MeasureKind::Chia, MeasureKind::Bleu];

    pub fn as_str(&self) -> &'static str {
        match self {
            MeasureKind::InvPpl => "invppl",
            MeasureKind::Chia => "chia",
            MeasureKind::Bleu => "bleu",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "invppl" => Ok(MeasureKind::InvPpl),
            "chia" => Ok(MeasureKind::Chia),
            "bleu" => Ok(MeasureKind::Bleu),
            _ => Err(MeasureError::UnknownMeasure(s.to_owned())),
        }
    }
}

/// Cartography coordinates of one example under one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureScores {
    pub example_id: String,
    pub measure: MeasureKind,
    pub confidence: f64,
    pub variability: f64,
    pub correctness: f64,
    pub correctness_bin: u8,
}

/// Arithmetic mean of one epoch's gold-token probabilities.
pub fn chia_epoch(probs: &[f64]) -> f64 {
    probs.iter().sum::<f64>() / probs.len() as f64
}

/// Geometric mean of one epoch's gold-token probabilities, evaluated in
/// log space. Any zero probability makes the result exactly zero.
pub fn geometric_mean(probs: &[f64]) -> f64 {
    if probs.contains(&0.0) {
        return 0.0;
    }
    (probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64).exp()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divides by the number of values).
fn population_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    (ss / values.len() as f64).sqrt()
}

fn predictions<'a>(
    example: &WindowedExample<'a>,
) -> Result<impl Iterator<Item = &'a TokenSeq>, MeasureError> {
    if let Some(obs) = example
        .observations
        .iter()
        .find(|o| o.predicted_tokens.is_none())
    {
        return Err(MeasureError::MissingPredictions {
            example_id: example.example_id.to_owned(),
            epoch: obs.epoch,
        });
    }
    Ok(example
        .observations
        .iter()
        .filter_map(|o| o.predicted_tokens.as_ref()))
}

/// The per-epoch sequence score of `measure`, one value per window epoch.
/// `gold` is only consulted for BLEU.
pub fn per_epoch_scores(
    example: &WindowedExample<'_>,
    gold: &TokenSeq,
    measure: MeasureKind,
) -> Result<Vec<f64>, MeasureError> {
    let probs = example.observations.iter().map(|o| &o.gold_token_probs[..]);
    match measure {
        MeasureKind::Chia => Ok(probs.map(chia_epoch).collect()),
        MeasureKind::InvPpl => Ok(probs.map(geometric_mean).collect()),
        MeasureKind::Bleu => {
            if gold.is_empty() {
                return Err(MeasureError::EmptyReference);
            }
            Ok(predictions(example)?
                .map(|p| bleu::bleu4_tokens(p.tokens(), gold.tokens()))
                .collect())
        }
    }
}

pub fn chia_confidence(example: &WindowedExample<'_>) -> f64 {
    let per_epoch: Vec<f64> = example
        .observations
        .iter()
        .map(|o| chia_epoch(&o.gold_token_probs))
        .collect();
    mean(&per_epoch)
}

pub fn invppl_confidence(example: &WindowedExample<'_>) -> f64 {
    let per_epoch: Vec<f64> = example
        .observations
        .iter()
        .map(|o| geometric_mean(&o.gold_token_probs))
        .collect();
    mean(&per_epoch)
}

pub fn bleu_confidence(example: &WindowedExample<'_>, gold: &TokenSeq) -> Result<f64, MeasureError> {
    Ok(mean(&per_epoch_scores(example, gold, MeasureKind::Bleu)?))
}

/// Mean of the per-epoch scores of `measure`.
pub fn confidence(
    example: &WindowedExample<'_>,
    gold: &TokenSeq,
    measure: MeasureKind,
) -> Result<f64, MeasureError> {
    Ok(mean(&per_epoch_scores(example, gold, measure)?))
}

/// Population standard deviation of the per-epoch scores of `measure`.
pub fn variability(
    example: &WindowedExample<'_>,
    gold: &TokenSeq,
    measure: MeasureKind,
) -> Result<f64, MeasureError> {
    Ok(population_std(&per_epoch_scores(example, gold, measure)?))
}

/// Exact-match counts over the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Correctness {
    pub matches: usize,
    pub epochs: usize,
}

impl Correctness {
    pub fn fraction(&self) -> f64 {
        self.matches as f64 / self.epochs as f64
    }

    /// `min(floor(10 * fraction), 9)`, computed on the integer counts.
    pub fn bin(&self) -> u8 {
        ((10 * self.matches / self.epochs).min(9)) as u8
    }
}

pub fn correctness(
    example: &WindowedExample<'_>,
    gold: &TokenSeq,
) -> Result<Correctness, MeasureError> {
    let matches = predictions(example)?.filter(|p| *p == gold).count();
    Ok(Correctness {
        matches,
        epochs: example.num_epochs(),
    })
}

/// Full score row for one example.
pub fn score_example(
    example: &WindowedExample<'_>,
    gold: &TokenSeq,
    measure: MeasureKind,
) -> Result<MeasureScores, MeasureError> {
    let per_epoch = per_epoch_scores(example, gold, measure)?;
    let correct = correctness(example, gold)?;
    Ok(MeasureScores {
        example_id: example.example_id.to_owned(),
        measure,
        confidence: mean(&per_epoch),
        variability: population_std(&per_epoch),
        correctness: correct.fraction(),
        correctness_bin: correct.bin(),
    })
}

/// Scores every example of the view, sorted by example id. The store and
/// the corpus must hold exactly the same ids.
pub fn score_all(
    view: &StoreView<'_>,
    corpus: &Corpus,
    measure: MeasureKind,
) -> Result<Vec<MeasureScores>> {
    let mut work = Vec::with_capacity(view.store().len());
    for example in view.iter() {
        let Some(entry) = corpus.get(example.example_id) else {
            return Err(MeasureError::MissingFromCorpus {
                example_id: example.example_id.to_owned(),
            }
            .into());
        };
        if entry.target.len() != example.gold_len() {
            return Err(MeasureError::GoldLengthMismatch {
                example_id: example.example_id.to_owned(),
                logged: example.gold_len(),
                corpus: entry.target.len(),
            }
            .into());
        }
        work.push((example, &entry.target));
    }
    if let Some(missing) = corpus.iter().find(|c| view.store().get(&c.example_id).is_none()) {
        return Err(MeasureError::MissingFromStore {
            example_id: missing.example_id.clone(),
        }
        .into());
    }

    let rows = work
        .par_iter()
        .map(|(example, gold)| score_example(example, gold, measure))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

pub const SCORES_HEADER: &str = "example_id,measure,confidence,variability,correctness,correctness_bin";

/// Score rows plus any `#` comment lines that preceded the CSV header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub comments: Vec<String>,
    pub rows: Vec<MeasureScores>,
}

/// Writes the scores CSV. Each comment is emitted as a `# ` line before
/// the header.
pub fn write_scores_csv<W: Write>(
    mut out: W,
    rows: &[MeasureScores],
    comments: &[String],
) -> std::io::Result<()> {
    for comment in comments {
        for line in comment.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(SCORES_HEADER.split(','))?;
    for row in rows {
        writer.write_record([
            row.example_id.as_str(),
            row.measure.as_str(),
            &row.confidence.to_string(),
            &row.variability.to_string(),
            &row.correctness.to_string(),
            &row.correctness_bin.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(mut input: R) -> Result<ScoreTable> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| MeasureError::Csv(e.to_string()))?;
    let mut comments = Vec::new();
    let mut body = text.as_str();
    while let Some(rest) = body.strip_prefix('#') {
        let (line, tail) = rest.split_once('\n').unwrap_or((rest, ""));
        comments.push(line.strip_prefix(' ').unwrap_or(line).to_owned());
        body = tail;
    }

    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| MeasureError::Csv(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != SCORES_HEADER {
        return Err(MeasureError::Csv(format!("unexpected header {header:?}")).into());
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| MeasureError::Csv(e.to_string()))?;
        let bad = |what: &str| MeasureError::Csv(format!("row {}: bad {what}", i + 1));
        let float = |idx: usize, what: &str| -> Result<f64, MeasureError> {
            record[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(what))
        };
        let row = MeasureScores {
            example_id: record[0].to_owned(),
            measure: record[1].parse()?,
            confidence: float(2, "confidence")?,
            variability: float(3, "variability")?,
            correctness: float(4, "correctness")?,
            correctness_bin: record[5]
                .parse::<u8>()
                .ok()
                .filter(|b| *b <= 9)
                .ok_or_else(|| bad("correctness_bin"))?,
        };
        rows.push(row);
    }
    Ok(ScoreTable { comments, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynlog::{EpochObservation, ExampleDynamics};

    fn example(epochs: &[&[f64]]) -> ExampleDynamics {
        ExampleDynamics {
            example_id: "x".into(),
            observations: epochs
                .iter()
                .enumerate()
                .map(|(i, p)| EpochObservation {
                    epoch: i as u32 + 1,
                    gold_token_probs: p.to_vec(),
                    predicted_tokens: Some(TokenSeq::from_whitespace("a b")),
                })
                .collect(),
        }
    }

    fn gold() -> TokenSeq {
        TokenSeq::from_whitespace("a b")
    }

    #[test]
    fn chia_examples() {
        assert_eq!(chia_confidence(&example(&[&[1.0, 1.0]]).windowed()), 1.0);
        let two = example(&[&[0.5, 0.5], &[0.8, 0.2]]);
        assert!((chia_confidence(&two.windowed()) - 0.5).abs() < 1e-12);
        assert!((chia_confidence(&example(&[&[0.0, 1.0]]).windowed()) - 0.5).abs() < 1e-12);
        let v = variability(&two.windowed(), &gold(), MeasureKind::Chia).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn invppl_examples() {
        assert_eq!(invppl_confidence(&example(&[&[1.0, 1.0]]).windowed()), 1.0);
        assert_eq!(invppl_confidence(&example(&[&[0.0, 1.0]]).windowed()), 0.0);
        let two = example(&[&[0.5, 0.5], &[0.8, 0.2]]);
        assert!((invppl_confidence(&two.windowed()) - 0.45).abs() < 1e-12);
        let v = variability(&two.windowed(), &gold(), MeasureKind::InvPpl).unwrap();
        assert!((v - 0.05).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_survives_long_sequences() {
        let probs = vec![1e-3; 2000];
        let g = geometric_mean(&probs);
        assert!((g - 1e-3).abs() < 1e-15, "{g}");
    }

    #[test]
    fn single_epoch_has_no_variability() {
        let one = example(&[&[0.3, 0.9]]);
        for m in MeasureKind::ALL {
            assert_eq!(variability(&one.windowed(), &gold(), m).unwrap(), 0.0);
        }
    }

    #[test]
    fn bleu_confidence_examples() {
        let mut ex = example(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let gold = TokenSeq::from_whitespace("a b c d");
        for o in &mut ex.observations {
            o.gold_token_probs = vec![0.5; 4];
            o.predicted_tokens = Some(gold.clone());
        }
        assert_eq!(bleu_confidence(&ex.windowed(), &gold).unwrap(), 1.0);

        let disjoint = TokenSeq::from_whitespace("x y z w");
        ex.observations[1].predicted_tokens = Some(disjoint.clone());
        let s = bleu4(&disjoint, &gold).unwrap();
        let c = bleu_confidence(&ex.windowed(), &gold).unwrap();
        assert!((c - (1.0 + s) / 2.0).abs() < 1e-15);

        ex.observations[1].predicted_tokens = None;
        assert!(matches!(
            bleu_confidence(&ex.windowed(), &gold),
            Err(MeasureError::MissingPredictions { epoch: 2, .. })
        ));
    }

    #[test]
    fn correctness_counts_and_bins() {
        let mut ex = example(&[&[0.5, 0.5][..]; 10]);
        for (i, o) in ex.observations.iter_mut().enumerate() {
            if i >= 3 {
                o.predicted_tokens = Some(TokenSeq::from_whitespace("a c"));
            }
        }
        let c = correctness(&ex.windowed(), &gold()).unwrap();
        assert_eq!(c.fraction(), 0.3);
        assert_eq!(c.bin(), 3);

        let never = Correctness { matches: 0, epochs: 7 };
        assert_eq!((never.fraction(), never.bin()), (0.0, 0));
        let always = Correctness { matches: 7, epochs: 7 };
        assert_eq!((always.fraction(), always.bin()), (1.0, 9));
        for epochs in 1..=40 {
            for matches in 0..=epochs {
                let c = Correctness { matches, epochs };
                let expected = ((c.fraction() * 10.0 + 1e-9).floor() as u8).min(9);
                assert_eq!(c.bin(), expected, "{matches}/{epochs}");
            }
        }
    }

    #[test]
    fn measure_names_parse() {
        assert_eq!("invppl".parse::<MeasureKind>().unwrap(), MeasureKind::InvPpl);
        assert_eq!("INV_PPL".parse::<MeasureKind>().unwrap(), MeasureKind::InvPpl);
        assert_eq!("chia".parse::<MeasureKind>().unwrap(), MeasureKind::Chia);
        assert!("ppl".parse::<MeasureKind>().is_err());
    }

    #[test]
    fn csv_roundtrip_with_comments() {
        let rows = vec![
            MeasureScores {
                example_id: "a,b".into(),
                measure: MeasureKind::Chia,
                confidence: 0.1 + 0.2,
                variability: 1e-17,
                correctness: 1.0,
                correctness_bin: 9,
            },
            MeasureScores {
                example_id: "c".into(),
                measure: MeasureKind::Chia,
                confidence: 0.0,
                variability: 0.5,
                correctness: 0.0,
                correctness_bin: 0,
            },
        ];
        let mut out = Vec::new();
        write_scores_csv(&mut out, &rows, &["config {\"a\":1}".to_owned()]).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.starts_with("# config {\"a\":1}\nexample_id,measure,"));
        let table = read_scores_csv(&out[..]).unwrap();
        assert_eq!(table.rows, rows);
        assert_eq!(table.comments, vec!["config {\"a\":1}".to_owned()]);
        let mut again = Vec::new();
        write_scores_csv(&mut again, &table.rows, &table.comments).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let bad_header = "id,measure\n";
        assert!(read_scores_csv(bad_header.as_bytes()).is_err());
        let bad_bin = format!("{SCORES_HEADER}\na,chia,0.5,0,0,10\n");
        assert!(read_scores_csv(bad_bin.as_bytes()).is_err());
        let bad_measure = format!("{SCORES_HEADER}\na,ppl,0.5,0,0,1\n");
        assert!(read_scores_csv(bad_measure.as_bytes()).is_err());
    }
}
