//! Training-subset selection from data maps.
//!
//! Subsets are built by ranking score rows under an [`Aspect`] and taking a
//! prefix. [`combine`] merges two aspects into one half-size subset and
//! [`oov_repair`] trades members so that the subset covers the whole
//! corpus vocabulary without changing its size.

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynlog::{Corpus, EpochWindow};
use crate::error::{Error, Result, SelectionError};
use crate::floor_count;
use crate::measures::{MeasureKind, MeasureScores};
use crate::provenance::RunInfo;

/// Share of a combined subset taken from the more informative aspect
/// (33% of the corpus out of a 50% subset).
pub const PRIMARY_SHARE: f64 = 0.66;
/// Share taken from the other aspect (17% out of 50%).
pub const SECONDARY_SHARE: f64 = 0.34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    /// Lowest confidence first.
    Hard,
    /// Highest confidence first, lower variability breaking ties.
    Easy,
    /// Highest variability first.
    Ambiguous,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::Hard, Aspect::Easy, Aspect::Ambiguous];

    pub fn as_str(&self) -> &'static str {
        match self {
            Aspect::Hard => "hard",
            Aspect::Easy => "easy",
            Aspect::Ambiguous => "ambiguous",
        }
    }

    /// 0 is the most informative: hard, then ambiguous, then easy.
    pub fn informativeness_rank(&self) -> u8 {
        match self {
            Aspect::Hard => 0,
            Aspect::Ambiguous => 1,
            Aspect::Easy => 2,
        }
    }

    fn compare(&self, a: &MeasureScores, b: &MeasureScores) -> CmpOrdering {
        let key = match self {
            Aspect::Hard => a.confidence.total_cmp(&b.confidence),
            Aspect::Easy => b
                .confidence
                .total_cmp(&a.confidence)
                .then(a.variability.total_cmp(&b.variability)),
            Aspect::Ambiguous => b.variability.total_cmp(&a.variability),
        };
        key.then_with(|| a.example_id.cmp(&b.example_id))
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aspect {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hard" | "hard-to-learn" => Ok(Aspect::Hard),
            "easy" | "easy-to-learn" => Ok(Aspect::Easy),
            "ambiguous" => Ok(Aspect::Ambiguous),
            _ => Err(SelectionError::UnknownAspect(s.to_owned())),
        }
    }
}

/// Ids of `scores` ordered most-prioritized first under `aspect`.
pub fn rank(scores: &[MeasureScores], aspect: Aspect) -> Vec<&MeasureScores> {
    let mut ranked: Vec<&MeasureScores> = scores.iter().collect();
    ranked.sort_by(|a, b| aspect.compare(a, b));
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub measure: Option<MeasureKind>,
    pub aspects: Vec<Aspect>,
    pub fraction: f64,
    pub seed: Option<u64>,
    pub window: Option<EpochWindow>,
    /// Size the subset was asked to have.
    pub requested_size: usize,
    pub oov_added: Vec<String>,
    pub oov_removed: Vec<String>,
    pub padded: Vec<String>,
    /// Members kept beyond `requested_size` because no further removal
    /// preserved vocabulary coverage.
    pub size_overflow: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub ids: Vec<String>,
    pub provenance: Provenance,
}

impl SubsetSpec {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.iter().any(|i| i == id)
    }
}

fn check_scores(scores: &[MeasureScores]) -> Result<MeasureKind, SelectionError> {
    let first = scores.first().ok_or(SelectionError::EmptyScores)?.measure;
    if let Some(other) = scores.iter().find(|s| s.measure != first) {
        return Err(SelectionError::MixedMeasures {
            first: first.to_string(),
            second: other.measure.to_string(),
        });
    }
    Ok(first)
}

fn check_fraction(fraction: f64) -> Result<(), SelectionError> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(SelectionError::FractionOutOfRange(fraction))
    }
}

/// The top `floor(N * fraction)` examples under `aspect`. Ties fall to the
/// lexicographically smaller id.
pub fn select(scores: &[MeasureScores], aspect: Aspect, fraction: f64) -> Result<SubsetSpec> {
    check_fraction(fraction)?;
    let measure = check_scores(scores)?;
    let size = floor_count(scores.len(), fraction);
    let ids = rank(scores, aspect)
        .into_iter()
        .take(size)
        .map(|s| s.example_id.clone())
        .collect();
    Ok(SubsetSpec {
        ids,
        provenance: Provenance {
            measure: Some(measure),
            aspects: vec![aspect],
            fraction,
            seed: None,
            window: None,
            requested_size: size,
            oov_added: Vec::new(),
            oov_removed: Vec::new(),
            padded: Vec::new(),
            size_overflow: 0,
            run: None,
        },
    })
}

/// Merges two aspects into one subset of `floor(N * total_fraction)`.
///
/// The more informative aspect contributes `floor(0.66 * total_fraction * N)`
/// examples, the other fills `floor(0.34 * total_fraction * N)` more from
/// its own ranking (skipping members), and any remainder is drawn at random
/// under `seed` from the excluded examples. The argument order of the two
/// aspects does not matter.
pub fn combine(
    scores: &[MeasureScores],
    first: Aspect,
    second: Aspect,
    total_fraction: f64,
    seed: u64,
) -> Result<SubsetSpec> {
    if first == second {
        return Err(SelectionError::IdenticalAspects(first.to_string()).into());
    }
    check_fraction(total_fraction)?;
    let measure = check_scores(scores)?;
    let (primary, secondary) = if first.informativeness_rank() <= second.informativeness_rank() {
        (first, second)
    } else {
        (second, first)
    };

    let n = scores.len();
    let total = floor_count(n, total_fraction);
    let primary_n = floor_count(n, PRIMARY_SHARE * total_fraction);
    let secondary_n = floor_count(n, SECONDARY_SHARE * total_fraction);

    let mut ids: Vec<String> = Vec::with_capacity(total);
    let mut chosen: HashSet<&str> = HashSet::with_capacity(total);
    for s in rank(scores, primary).into_iter().take(primary_n) {
        chosen.insert(&s.example_id);
        ids.push(s.example_id.clone());
    }
    let mut added = 0;
    for s in rank(scores, secondary) {
        if added == secondary_n || ids.len() == total {
            break;
        }
        if chosen.insert(&s.example_id) {
            ids.push(s.example_id.clone());
            added += 1;
        }
    }

    let mut pool: Vec<&str> = scores
        .iter()
        .map(|s| s.example_id.as_str())
        .filter(|id| !chosen.contains(id))
        .collect();
    pool.sort_unstable();
    let need = total.saturating_sub(ids.len()).min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let padded: Vec<String> = rand::seq::index::sample(&mut rng, pool.len(), need)
        .into_iter()
        .map(|i| pool[i].to_owned())
        .collect();
    ids.extend(padded.iter().cloned());

    Ok(SubsetSpec {
        ids,
        provenance: Provenance {
            measure: Some(measure),
            aspects: vec![primary, secondary],
            fraction: total_fraction,
            seed: Some(seed),
            window: None,
            requested_size: total,
            oov_added: Vec::new(),
            oov_removed: Vec::new(),
            padded,
            size_overflow: 0,
            run: None,
        },
    })
}

/// Token types of an example: union of source and target tokens.
fn example_vocab<'a>(corpus: &'a Corpus, id: &str) -> BTreeSet<&'a str> {
    let ex = corpus.get(id).expect("checked membership");
    ex.source
        .iter()
        .chain(ex.target.iter())
        .map(String::as_str)
        .collect()
}

/// Makes `subset` cover the full corpus vocabulary at constant size.
///
/// Excluded examples are scanned in `aspect` ranking order and added when
/// they contain a token the subset still lacks. Then original members are
/// scanned from the least informative end and dropped while every one of
/// their tokens also occurs in another member, until the original size is
/// back. Whatever could not be dropped is recorded as `size_overflow`.
pub fn oov_repair(
    subset: &SubsetSpec,
    corpus: &Corpus,
    scores: &[MeasureScores],
    aspect: Aspect,
) -> Result<SubsetSpec> {
    let scored: HashSet<&str> = scores.iter().map(|s| s.example_id.as_str()).collect();
    if let Some(s) = scores.iter().find(|s| !corpus.contains(&s.example_id)) {
        return Err(SelectionError::MissingFromCorpus {
            example_id: s.example_id.clone(),
        }
        .into());
    }
    if let Some(ex) = corpus.iter().find(|c| !scored.contains(c.example_id.as_str())) {
        return Err(SelectionError::MissingScores {
            example_id: ex.example_id.clone(),
        }
        .into());
    }
    if let Some(id) = subset.ids.iter().find(|id| !corpus.contains(id)) {
        return Err(SelectionError::UnknownMember {
            example_id: id.clone(),
        }
        .into());
    }

    let members: HashSet<&str> = subset.ids.iter().map(String::as_str).collect();
    let mut coverage: HashMap<&str, usize> = HashMap::new();
    for id in &subset.ids {
        for tok in example_vocab(corpus, id) {
            *coverage.entry(tok).or_insert(0) += 1;
        }
    }
    let mut missing: BTreeSet<&str> = corpus
        .iter()
        .flat_map(|ex| ex.source.iter().chain(ex.target.iter()))
        .map(String::as_str)
        .filter(|tok| !coverage.contains_key(tok))
        .collect();
    if missing.is_empty() {
        return Ok(subset.clone());
    }

    let ranking = rank(scores, aspect);
    let mut added: Vec<String> = Vec::new();
    for s in &ranking {
        if missing.is_empty() {
            break;
        }
        if members.contains(s.example_id.as_str()) {
            continue;
        }
        let vocab = example_vocab(corpus, &s.example_id);
        if vocab.iter().any(|t| missing.contains(t)) {
            for tok in vocab {
                missing.remove(tok);
                *coverage.entry(tok).or_insert(0) += 1;
            }
            added.push(s.example_id.clone());
        }
    }

    let mut removed: Vec<String> = Vec::new();
    for s in ranking.iter().rev() {
        if removed.len() == added.len() {
            break;
        }
        if !members.contains(s.example_id.as_str()) {
            continue;
        }
        let vocab = example_vocab(corpus, &s.example_id);
        if vocab.iter().all(|t| coverage[t] >= 2) {
            for tok in vocab {
                *coverage.get_mut(tok).expect("covered") -= 1;
            }
            removed.push(s.example_id.clone());
        }
    }

    let dropped: HashSet<&str> = removed.iter().map(String::as_str).collect();
    let mut ids: Vec<String> = subset
        .ids
        .iter()
        .filter(|id| !dropped.contains(id.as_str()))
        .cloned()
        .collect();
    ids.extend(added.iter().cloned());

    let mut provenance = subset.provenance.clone();
    provenance.padded.retain(|id| !dropped.contains(id.as_str()));
    provenance.size_overflow += added.len() - removed.len();
    provenance.oov_added.extend(added);
    provenance.oov_removed.extend(removed);
    Ok(SubsetSpec { ids, provenance })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_subset(subset: &SubsetSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, subset_to_json(subset)).map_err(|e| Error::io(path, e))
}

pub fn subset_to_json(subset: &SubsetSpec) -> String {
    let mut text = serde_json::to_string_pretty(subset).expect("subset serializes");
    text.push('\n');
    text
}

pub fn subset_from_json(text: &str) -> Result<SubsetSpec> {
    let subset: SubsetSpec =
        serde_json::from_str(text).map_err(|e| SelectionError::Malformed(e.to_string()))?;
    let mut seen = HashSet::with_capacity(subset.ids.len());
    if let Some(dup) = subset.ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(SelectionError::DuplicateId(dup.clone()).into());
    }
    if subset.ids.is_empty() && subset.provenance.fraction != 0.0 {
        return Err(SelectionError::EmptyWithFraction(subset.provenance.fraction).into());
    }
    Ok(subset)
}

pub fn read_subset(path: impl AsRef<Path>) -> Result<SubsetSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    subset_from_json(&text)
}

/// Plain-text export, one id per line.
pub fn write_ids<W: Write>(subset: &SubsetSpec, mut out: W) -> std::io::Result<()> {
    for id in &subset.ids {
        writeln!(out, "{id}")?;
    }
    Ok(())
}
