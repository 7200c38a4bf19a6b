//! Training-dynamics data model and log/corpus ingestion.
//!
//! A dynamics log is JSON Lines with one record per (example, epoch):
//!
//! ```text
//! {"epoch":1,"example_id":"17","gold_token_probs":[0.91,0.4],"predicted_tokens":["a","b"]}
//! ```
//!
//! Lines may appear in any order. Ingestion validates every record and
//! requires a rectangular store: every example is observed at exactly the
//! same contiguous run of epochs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DynlogError, Error, Result};

/// A whitespace-tokenized sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    /// Builds a sequence from explicit tokens, rejecting any token that is
    /// empty or contains whitespace.
    pub fn new(tokens: Vec<String>) -> std::result::Result<Self, String> {
        match tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            Some(bad) => Err(bad.clone()),
            None => Ok(TokenSeq(tokens)),
        }
    }

    /// Splits on runs of whitespace.
    pub fn from_whitespace(text: &str) -> Self {
        TokenSeq(text.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl std::fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// What the trainer recorded for one example at the end of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochObservation {
    pub epoch: u32,
    /// Teacher-forced probability of each gold token, in target order.
    pub gold_token_probs: Vec<f64>,
    /// Decoded output for the epoch; `None` when the trainer did not decode.
    pub predicted_tokens: Option<TokenSeq>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleDynamics {
    pub example_id: String,
    /// Sorted by strictly increasing epoch.
    pub observations: Vec<EpochObservation>,
}

impl ExampleDynamics {
    /// Length T of the gold target, shared by all observations.
    pub fn gold_len(&self) -> usize {
        self.observations
            .first()
            .map_or(0, |o| o.gold_token_probs.len())
    }

    /// All observations, unwindowed.
    pub fn windowed(&self) -> WindowedExample<'_> {
        WindowedExample {
            example_id: &self.example_id,
            observations: &self.observations,
        }
    }
}

/// One example's observations restricted to an epoch window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowedExample<'a> {
    pub example_id: &'a str,
    pub observations: &'a [EpochObservation],
}

impl WindowedExample<'_> {
    /// E, the number of epochs in the window.
    pub fn num_epochs(&self) -> usize {
        self.observations.len()
    }

    pub fn gold_len(&self) -> usize {
        self.observations
            .first()
            .map_or(0, |o| o.gold_token_probs.len())
    }
}

/// One line of the dynamics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub epoch: u32,
    pub example_id: String,
    pub gold_token_probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_tokens: Option<Vec<String>>,
}

/// Immutable, validated, rectangular collection of training dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsStore {
    examples: BTreeMap<String, ExampleDynamics>,
    epoch_range: (u32, u32),
}

impl DynamicsStore {
    /// Validates already-built examples with the same rules as log ingestion.
    pub fn from_examples(examples: impl IntoIterator<Item = ExampleDynamics>) -> Result<Self> {
        let mut builder = StoreBuilder::default();
        for example in examples {
            for obs in example.observations {
                let record = LogRecord {
                    epoch: obs.epoch,
                    example_id: example.example_id.clone(),
                    gold_token_probs: obs.gold_token_probs,
                    predicted_tokens: obs.predicted_tokens.map(TokenSeq::into_inner),
                };
                builder.push(record, 0)?;
            }
        }
        builder.finish()
    }

    pub fn epoch_range(&self) -> (u32, u32) {
        self.epoch_range
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, example_id: &str) -> Option<&ExampleDynamics> {
        self.examples.get(example_id)
    }

    /// Examples in ascending id order.
    pub fn examples(&self) -> impl ExactSizeIterator<Item = &ExampleDynamics> {
        self.examples.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.examples.keys().map(String::as_str)
    }

    /// View over every observed epoch.
    pub fn full_view(&self) -> StoreView<'_> {
        StoreView {
            store: self,
            window: EpochWindow {
                min_epoch: self.epoch_range.0,
                max_epoch: self.epoch_range.1,
            },
        }
    }

    /// Serializes as a dynamics log, ordered by example id then epoch.
    pub fn write_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for example in self.examples.values() {
            for obs in &example.observations {
                let record = LogRecord {
                    epoch: obs.epoch,
                    example_id: example.example_id.clone(),
                    gold_token_probs: obs.gold_token_probs.clone(),
                    predicted_tokens: obs.predicted_tokens.as_ref().map(|p| p.tokens().to_vec()),
                };
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct StoreBuilder {
    examples: BTreeMap<String, (usize, BTreeMap<u32, EpochObservation>)>,
}

impl StoreBuilder {
    fn push(&mut self, record: LogRecord, line: usize) -> Result<(), DynlogError> {
        if record.epoch == 0 {
            return Err(DynlogError::Malformed {
                line,
                message: "epoch must be >= 1".into(),
            });
        }
        if record.gold_token_probs.is_empty() {
            return Err(DynlogError::EmptyGold {
                line,
                example_id: record.example_id,
            });
        }
        if let Some(&value) = record
            .gold_token_probs
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return Err(DynlogError::ProbabilityOutOfRange {
                line,
                example_id: record.example_id,
                value,
            });
        }
        let predicted = match record.predicted_tokens {
            Some(tokens) => Some(
                TokenSeq::new(tokens)
                    .map_err(|token| DynlogError::WhitespaceInToken { line, token })?,
            ),
            None => None,
        };

        let gold_len = record.gold_token_probs.len();
        let (expected_len, epochs) = self
            .examples
            .entry(record.example_id.clone())
            .or_insert_with(|| (gold_len, BTreeMap::new()));
        if *expected_len != gold_len {
            return Err(DynlogError::GoldLengthMismatch {
                line,
                example_id: record.example_id,
                expected: *expected_len,
                found: gold_len,
            });
        }
        if epochs.contains_key(&record.epoch) {
            return Err(DynlogError::DuplicateRecord {
                line,
                example_id: record.example_id,
                epoch: record.epoch,
            });
        }
        epochs.insert(
            record.epoch,
            EpochObservation {
                epoch: record.epoch,
                gold_token_probs: record.gold_token_probs,
                predicted_tokens: predicted,
            },
        );
        Ok(())
    }

    fn finish(self) -> Result<DynamicsStore> {
        let all_epochs: BTreeSet<u32> = self
            .examples
            .values()
            .flat_map(|(_, epochs)| epochs.keys().copied())
            .collect();
        let (Some(&lo), Some(&hi)) = (all_epochs.first(), all_epochs.last()) else {
            return Err(DynlogError::EmptyLog.into());
        };

        let mut examples = BTreeMap::new();
        for (example_id, (_, epochs)) in self.examples {
            if let Some(epoch) = (lo..=hi).find(|e| !epochs.contains_key(e)) {
                return Err(DynlogError::NonRectangular { example_id, epoch }.into());
            }
            let observations = epochs.into_values().collect();
            examples.insert(
                example_id.clone(),
                ExampleDynamics {
                    example_id,
                    observations,
                },
            );
        }
        Ok(DynamicsStore {
            examples,
            epoch_range: (lo, hi),
        })
    }
}

/// Parses a dynamics log from any buffered reader. Line numbers in errors
/// are 1-based.
pub fn parse_log<R: BufRead>(reader: R) -> Result<DynamicsStore> {
    let mut builder = StoreBuilder::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DynlogError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord =
            serde_json::from_str(&line).map_err(|e| DynlogError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        builder.push(record, line_no)?;
    }
    builder.finish()
}

pub fn ingest_log(path: impl AsRef<Path>) -> Result<DynamicsStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_log(BufReader::new(file))
}

/// Inclusive range of epochs that downstream measures aggregate over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpochWindow {
    pub min_epoch: u32,
    pub max_epoch: u32,
}

impl EpochWindow {
    pub fn new(min_epoch: u32, max_epoch: u32) -> Self {
        EpochWindow {
            min_epoch,
            max_epoch,
        }
    }

    /// Number of epochs E in the window.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        (self.max_epoch - self.min_epoch + 1) as usize
    }
}

impl std::fmt::Display for EpochWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..={}", self.min_epoch, self.max_epoch)
    }
}

/// Borrowed, epoch-restricted view of a store. Creating views never
/// touches the underlying store.
#[derive(Debug, Clone, Copy)]
pub struct StoreView<'a> {
    store: &'a DynamicsStore,
    window: EpochWindow,
}

impl<'a> StoreView<'a> {
    pub fn store(&self) -> &'a DynamicsStore {
        self.store
    }

    pub fn window(&self) -> EpochWindow {
        self.window
    }

    /// E, the number of epochs the view aggregates over.
    pub fn num_epochs(&self) -> usize {
        self.window.len()
    }

    /// `example` restricted to the window.
    pub fn restrict(&self, example: &'a ExampleDynamics) -> WindowedExample<'a> {
        let first = self.store.epoch_range.0;
        let start = (self.window.min_epoch - first) as usize;
        let end = (self.window.max_epoch - first) as usize + 1;
        WindowedExample {
            example_id: &example.example_id,
            observations: &example.observations[start..end],
        }
    }

    /// Windowed examples in ascending id order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = WindowedExample<'a>> + '_ {
        self.store.examples().map(|ex| self.restrict(ex))
    }

    pub fn get(&self, example_id: &str) -> Option<WindowedExample<'a>> {
        self.store.get(example_id).map(|ex| self.restrict(ex))
    }
}

/// Restricts `store` to epochs `min_epoch..=max_epoch`.
pub fn epoch_window(store: &DynamicsStore, min_epoch: u32, max_epoch: u32) -> Result<StoreView<'_>> {
    let (lo, hi) = store.epoch_range;
    if min_epoch > max_epoch || min_epoch < lo || max_epoch > hi {
        return Err(DynlogError::InvalidWindow {
            min_epoch,
            max_epoch,
            observed_min: lo,
            observed_max: hi,
        }
        .into());
    }
    Ok(StoreView {
        store,
        window: EpochWindow::new(min_epoch, max_epoch),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusExample {
    pub example_id: String,
    pub source: TokenSeq,
    pub target: TokenSeq,
}

/// Source/target pairs in file order, indexed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    examples: Vec<CorpusExample>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Fails with the offending id if two examples share one.
    pub fn from_examples(examples: Vec<CorpusExample>) -> std::result::Result<Self, String> {
        let mut index = HashMap::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            if index.insert(ex.example_id.clone(), i).is_some() {
                return Err(ex.example_id.clone());
            }
        }
        Ok(Corpus { examples, index })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, example_id: &str) -> Option<&CorpusExample> {
        self.index.get(example_id).map(|&i| &self.examples[i])
    }

    pub fn contains(&self, example_id: &str) -> bool {
        self.index.contains_key(example_id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CorpusExample> {
        self.examples.iter()
    }

    pub fn examples(&self) -> &[CorpusExample] {
        &self.examples
    }

    /// Writes `source<TAB>target<TAB>id` lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for ex in &self.examples {
            writeln!(out, "{}\t{}\t{}", ex.source, ex.target, ex.example_id)?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a CorpusExample;
    type IntoIter = std::slice::Iter<'a, CorpusExample>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// Parses `source<TAB>target[<TAB>id]` lines. Without an id column the id
/// is the zero-based line index.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut examples = Vec::new();
    let mut seen = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DynlogError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let columns: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&columns.len()) {
            return Err(DynlogError::ColumnCount {
                line: line_no,
                found: columns.len(),
            }
            .into());
        }
        let target = TokenSeq::from_whitespace(columns[1]);
        if target.is_empty() {
            return Err(DynlogError::EmptyTarget { line: line_no }.into());
        }
        let example_id = match columns.get(2) {
            Some(id) => id.trim().to_owned(),
            None => idx.to_string(),
        };
        if seen.insert(example_id.clone(), line_no).is_some() {
            return Err(DynlogError::DuplicateId {
                line: line_no,
                example_id,
            }
            .into());
        }
        examples.push(CorpusExample {
            example_id,
            source: TokenSeq::from_whitespace(columns[0]),
            target,
        });
    }
    // ids were checked above
    Ok(Corpus::from_examples(examples).expect("unique ids"))
}

pub fn ingest_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(epoch: u32, id: &str, probs: &[f64]) -> String {
        serde_json::to_string(&LogRecord {
            epoch,
            example_id: id.into(),
            gold_token_probs: probs.to_vec(),
            predicted_tokens: Some(vec!["a".into()]),
        })
        .unwrap()
    }

    fn parse(lines: &[String]) -> Result<DynamicsStore> {
        parse_log(lines.join("\n").as_bytes())
    }

    #[test]
    fn two_by_three_store() {
        let mut lines = vec![];
        for e in [3, 1, 2] {
            lines.push(line(e, "b", &[0.5]));
            lines.push(line(e, "a", &[0.1, 0.2]));
        }
        let store = parse(&lines).unwrap();
        assert_eq!(store.epoch_range(), (1, 3));
        assert_eq!(store.len(), 2);
        let a = store.get("a").unwrap();
        let epochs: Vec<u32> = a.observations.iter().map(|o| o.epoch).collect();
        assert_eq!(epochs, vec![1, 2, 3]);
        assert_eq!(a.gold_len(), 2);
    }

    #[test]
    fn probability_out_of_range_reports_line() {
        let lines = vec![line(1, "a", &[0.5]), line(2, "a", &[1.2])];
        let err = parse(&lines).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("probability out of range"), "{msg}");
        assert!(matches!(
            err,
            Error::Dynlog(DynlogError::ProbabilityOutOfRange { line: 2, .. })
        ));
    }

    #[test]
    fn nan_probability_rejected() {
        let text = "{\"epoch\":1,\"example_id\":\"a\",\"gold_token_probs\":[NaN]}";
        assert!(parse_log(text.as_bytes()).is_err());
    }

    #[test]
    fn non_rectangular_rejected() {
        let lines = vec![
            line(1, "A", &[0.5]),
            line(2, "A", &[0.5]),
            line(3, "A", &[0.5]),
            line(1, "B", &[0.5]),
            line(2, "B", &[0.5]),
        ];
        let err = parse(&lines).unwrap_err();
        assert!(err.to_string().contains("non-rectangular store"));
        assert!(matches!(
            err,
            Error::Dynlog(DynlogError::NonRectangular { ref example_id, epoch: 3 }) if example_id == "B"
        ));
    }

    #[test]
    fn gap_in_epochs_rejected() {
        let lines = vec![line(1, "A", &[0.5]), line(3, "A", &[0.5])];
        assert!(matches!(
            parse(&lines).unwrap_err(),
            Error::Dynlog(DynlogError::NonRectangular { epoch: 2, .. })
        ));
    }

    #[test]
    fn duplicate_and_length_mismatch_rejected() {
        let dup = vec![line(1, "a", &[0.5]), line(1, "a", &[0.5])];
        assert!(matches!(
            parse(&dup).unwrap_err(),
            Error::Dynlog(DynlogError::DuplicateRecord { line: 2, epoch: 1, .. })
        ));
        let len = vec![line(1, "a", &[0.5]), line(2, "a", &[0.5, 0.5])];
        assert!(matches!(
            parse(&len).unwrap_err(),
            Error::Dynlog(DynlogError::GoldLengthMismatch { line: 2, expected: 1, found: 2, .. })
        ));
    }

    #[test]
    fn malformed_lines() {
        let err = parse_log("{\"epoch\":1}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Dynlog(DynlogError::Malformed { line: 1, .. })));
        let err = parse_log("\nnot json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Dynlog(DynlogError::Malformed { line: 2, .. })));
        assert!(matches!(
            parse_log("".as_bytes()).unwrap_err(),
            Error::Dynlog(DynlogError::EmptyLog)
        ));
    }

    #[test]
    fn missing_predictions_are_allowed_at_ingest() {
        let text = "{\"epoch\":1,\"example_id\":\"a\",\"gold_token_probs\":[0.25]}\n";
        let store = parse_log(text.as_bytes()).unwrap();
        assert!(store.get("a").unwrap().observations[0].predicted_tokens.is_none());
        let mut out = Vec::new();
        store.write_log(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn windows() {
        let lines: Vec<String> = (1..=20).map(|e| line(e, "a", &[0.5])).collect();
        let store = parse(&lines).unwrap();
        let view = epoch_window(&store, 3, 20).unwrap();
        assert_eq!(view.num_epochs(), 18);
        let ex = view.get("a").unwrap();
        assert_eq!(ex.num_epochs(), 18);
        assert_eq!(ex.observations[0].epoch, 3);
        assert_eq!(epoch_window(&store, 1, 1).unwrap().num_epochs(), 1);
        assert!(epoch_window(&store, 5, 4).is_err());
        assert!(epoch_window(&store, 0, 4).is_err());
        assert!(epoch_window(&store, 2, 21).is_err());
        assert_eq!(store.full_view().num_epochs(), 20);
    }

    #[test]
    fn corpus_line_token_counts() {
        let text = "a frog hopped\tfrog ( x _ 1 ) AND hop . agent ( x _ 2 , x _ 1 )\n";
        let corpus = parse_corpus(text.as_bytes()).unwrap();
        let ex = corpus.get("0").unwrap();
        assert_eq!(ex.source.len(), 3);
        assert_eq!(ex.target.len(), 19);
    }

    #[test]
    fn corpus_edge_cases() {
        assert!(parse_corpus("".as_bytes()).unwrap().is_empty());
        let err = parse_corpus("a b\tc\njust one column\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Dynlog(DynlogError::ColumnCount { line: 2, found: 1 })));
        let err = parse_corpus("a b\t  \n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Dynlog(DynlogError::EmptyTarget { line: 1 })));
        let err = parse_corpus("a\tb\tx\nc\td\tx\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Dynlog(DynlogError::DuplicateId { line: 2, .. })));
        let corpus = parse_corpus("a\tb\tfirst\r\n\tc   d\n".as_bytes()).unwrap();
        assert_eq!(corpus.examples()[0].example_id, "first");
        assert_eq!(corpus.examples()[1].example_id, "1");
        assert!(corpus.examples()[1].source.is_empty());
        assert_eq!(corpus.examples()[1].target.len(), 2);
    }

    #[test]
    fn token_seq_rejects_whitespace() {
        assert!(TokenSeq::new(vec!["a b".into()]).is_err());
        assert!(TokenSeq::new(vec!["".into()]).is_err());
        assert_eq!(TokenSeq::new(vec!["ab".into()]).unwrap().len(), 1);
    }
}
