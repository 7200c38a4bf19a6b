//! Curriculum schedules built from cartography orderings.
//!
//! Two strategies are supported:
//!
//! * exponential pacing: stage `i` exposes the first
//!   `floor(min(1, start * scale^(i-1)) * N)` examples of the ordering, each
//!   stage lasting an equal share of the training steps;
//! * binned: the ordering is cut into equal bins (length-sorted inside),
//!   each bin into batches, bin `k` unlocks at `floor((k-1) * T / bins)`,
//!   and every step draws one batch uniformly from the unlocked ones.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynlog::Corpus;
use crate::error::{CurriculumError, Result};
use crate::floor_count;
use crate::measures::{MeasureKind, MeasureScores};
use crate::provenance::ids_sha256;
use crate::selection::{rank, Aspect};

/// A permutation of the corpus ids, most prioritized first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    pub ids: Vec<String>,
    pub measure: Option<MeasureKind>,
    pub aspect: Option<Aspect>,
}

impl Ordering {
    /// Full ranking of `scores` under `aspect`.
    pub fn from_scores(scores: &[MeasureScores], aspect: Aspect) -> Self {
        Ordering {
            ids: rank(scores, aspect)
                .into_iter()
                .map(|s| s.example_id.clone())
                .collect(),
            measure: scores.first().map(|s| s.measure),
            aspect: Some(aspect),
        }
    }

    pub fn reversed(&self) -> Self {
        let mut ids = self.ids.clone();
        ids.reverse();
        Ordering {
            ids,
            measure: self.measure,
            aspect: self.aspect,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn check_unique(&self) -> Result<(), CurriculumError> {
        let mut seen = HashSet::with_capacity(self.ids.len());
        match self.ids.iter().find(|id| !seen.insert(id.as_str())) {
            Some(dup) => Err(CurriculumError::DuplicateExample(dup.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacingParams {
    pub start_fraction: f64,
    pub scale: f64,
}

impl Default for PacingParams {
    fn default() -> Self {
        PacingParams {
            start_fraction: 0.04,
            scale: 1.9,
        }
    }
}

impl PacingParams {
    /// `min(1, start * scale^(i-1))` for `i = 1..=S`, where stage `S` is the
    /// first to reach the whole ordering.
    pub fn stage_fractions(&self) -> Result<Vec<f64>, CurriculumError> {
        let PacingParams {
            start_fraction: start,
            scale,
        } = *self;
        if !(start > 0.0 && start <= 1.0) || !(scale > 1.0 || start == 1.0) || !scale.is_finite() {
            return Err(CurriculumError::InvalidPacing { start, scale });
        }
        let mut fractions = Vec::new();
        let mut i = 0;
        loop {
            let f = start * scale.powi(i);
            fractions.push(f.min(1.0));
            if f >= 1.0 {
                return Ok(fractions);
            }
            i += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacingStage {
    /// 1-based.
    pub stage_index: usize,
    pub available_fraction: f64,
    pub start_step: usize,
    /// Exclusive.
    pub end_step: usize,
    /// The first `available` ids of the ordering are in play.
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacingSchedule {
    pub order: Ordering,
    pub params: PacingParams,
    pub total_steps: usize,
    pub stages: Vec<PacingStage>,
}

impl PacingSchedule {
    pub fn available_ids(&self, stage: &PacingStage) -> &[String] {
        &self.order.ids[..stage.available]
    }

    pub fn stage_at(&self, step: usize) -> Option<&PacingStage> {
        self.stages
            .iter()
            .find(|s| s.start_step <= step && step < s.end_step)
    }

    /// Ids available at `step`.
    pub fn available_at(&self, step: usize) -> &[String] {
        self.stage_at(step)
            .map_or(&[][..], |stage| self.available_ids(stage))
    }
}

pub fn exp_pacing(order: &Ordering, total_steps: usize, params: PacingParams) -> Result<PacingSchedule> {
    if order.is_empty() {
        return Err(CurriculumError::EmptyCorpus.into());
    }
    order.check_unique()?;
    let fractions = params.stage_fractions()?;
    let stages = fractions.len();
    if total_steps < stages {
        return Err(CurriculumError::TooFewSteps { total_steps, stages }.into());
    }
    let span = total_steps / stages;
    let n = order.len();
    let stages = fractions
        .iter()
        .enumerate()
        .map(|(i, &f)| PacingStage {
            stage_index: i + 1,
            available_fraction: f,
            start_step: i * span,
            end_step: if i + 1 == stages { total_steps } else { (i + 1) * span },
            available: if f >= 1.0 { n } else { floor_count(n, f) },
        })
        .collect();
    Ok(PacingSchedule {
        order: order.clone(),
        params,
        total_steps,
        stages,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumBin {
    /// 1-based.
    pub bin: usize,
    pub unlock_step: usize,
    pub batches: Vec<Vec<String>>,
}

impl CurriculumBin {
    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.batches.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

/// The batch served at one training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchDraw {
    pub step: usize,
    pub bin: usize,
    /// Index into the bin's batches.
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSchedule {
    pub order: Ordering,
    pub batch_size: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub bins: Vec<CurriculumBin>,
    pub draws: Vec<BatchDraw>,
}

impl BinnedSchedule {
    pub fn batch(&self, draw: &BatchDraw) -> &[String] {
        &self.bins[draw.bin - 1].batches[draw.batch]
    }

    /// Bins unlocked at `step`.
    pub fn unlocked_bins(&self, step: usize) -> impl Iterator<Item = &CurriculumBin> {
        self.bins.iter().filter(move |b| b.unlock_step <= step)
    }

    /// Ids available at `step`, in bin order.
    pub fn available_at(&self, step: usize) -> Vec<&String> {
        self.unlocked_bins(step).flat_map(CurriculumBin::ids).collect()
    }
}

/// Bins are `floor(N / bins)` long with the remainder going to the last
/// one. Inside a bin, examples are sorted by target length, then id.
pub fn binned_curriculum(
    order: &Ordering,
    corpus: &Corpus,
    batch_size: usize,
    total_steps: usize,
    bins: usize,
    seed: u64,
) -> Result<BinnedSchedule> {
    if order.is_empty() {
        return Err(CurriculumError::EmptyCorpus.into());
    }
    if batch_size == 0 {
        return Err(CurriculumError::ZeroBatchSize.into());
    }
    if bins == 0 {
        return Err(CurriculumError::ZeroBins.into());
    }
    let n = order.len();
    if n < bins {
        return Err(CurriculumError::TooFewExamples { examples: n, bins }.into());
    }
    order.check_unique()?;
    let mut lengths = Vec::with_capacity(n);
    for id in &order.ids {
        let ex = corpus.get(id).ok_or_else(|| CurriculumError::UnknownExample {
            example_id: id.clone(),
        })?;
        lengths.push(ex.target.len());
    }

    let bin_len = n / bins;
    let mut layout = Vec::with_capacity(bins);
    for k in 0..bins {
        let start = k * bin_len;
        let end = if k + 1 == bins { n } else { start + bin_len };
        let mut members: Vec<(usize, &String)> =
            (start..end).map(|i| (lengths[i], &order.ids[i])).collect();
        members.sort();
        let batches = members
            .chunks(batch_size)
            .map(|chunk| chunk.iter().map(|(_, id)| (*id).clone()).collect())
            .collect();
        layout.push(CurriculumBin {
            bin: k + 1,
            unlock_step: k * total_steps / bins,
            batches,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unlocked: Vec<(usize, usize)> = Vec::new();
    let mut next_bin = 0;
    let mut draws = Vec::with_capacity(total_steps);
    for step in 0..total_steps {
        while next_bin < layout.len() && layout[next_bin].unlock_step <= step {
            let bin = &layout[next_bin];
            unlocked.extend((0..bin.batches.len()).map(|b| (bin.bin, b)));
            next_bin += 1;
        }
        let (bin, batch) = unlocked[rng.random_range(0..unlocked.len())];
        draws.push(BatchDraw { step, bin, batch });
    }

    Ok(BinnedSchedule {
        order: order.clone(),
        batch_size,
        total_steps,
        seed,
        bins: layout,
        draws,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurriculumSchedule {
    ExpPacing(PacingSchedule),
    Binned(BinnedSchedule),
}

/// First-record header of an emitted schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleHeader {
    pub strategy: String,
    pub total_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub stage: usize,
    pub available_fraction: f64,
    pub start_step: usize,
    pub end_step: usize,
    pub available_ids: usize,
    pub available_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<ScheduleHeader>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: usize,
    pub bin: usize,
    pub batch_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<ScheduleHeader>,
}

/// The JSON Lines form of a schedule; what [`read_schedule`] returns.
#[derive(Debug, Clone, PartialEq)]
pub enum EmittedSchedule {
    Stages(Vec<StageRecord>),
    Steps(Vec<StepRecord>),
}

impl EmittedSchedule {
    pub fn len(&self) -> usize {
        match self {
            EmittedSchedule::Stages(r) => r.len(),
            EmittedSchedule::Steps(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn header(&self) -> Option<&ScheduleHeader> {
        match self {
            EmittedSchedule::Stages(r) => r.first().and_then(|r| r.header.as_ref()),
            EmittedSchedule::Steps(r) => r.first().and_then(|r| r.header.as_ref()),
        }
    }
}

impl CurriculumSchedule {
    pub fn strategy(&self) -> &'static str {
        match self {
            CurriculumSchedule::ExpPacing(_) => "exp-pacing",
            CurriculumSchedule::Binned(_) => "binned",
        }
    }

    pub fn total_steps(&self) -> usize {
        match self {
            CurriculumSchedule::ExpPacing(s) => s.total_steps,
            CurriculumSchedule::Binned(s) => s.total_steps,
        }
    }

    /// Record form; `config` goes into the first record's header.
    pub fn to_records(&self, config: Option<serde_json::Value>) -> EmittedSchedule {
        let header = ScheduleHeader {
            strategy: self.strategy().to_owned(),
            total_steps: self.total_steps(),
            seed: match self {
                CurriculumSchedule::ExpPacing(_) => None,
                CurriculumSchedule::Binned(s) => Some(s.seed),
            },
            config,
        };
        let mut header = Some(header);
        match self {
            CurriculumSchedule::ExpPacing(s) => EmittedSchedule::Stages(
                s.stages
                    .iter()
                    .map(|stage| StageRecord {
                        stage: stage.stage_index,
                        available_fraction: stage.available_fraction,
                        start_step: stage.start_step,
                        end_step: stage.end_step,
                        available_ids: stage.available,
                        available_sha256: ids_sha256(s.available_ids(stage)),
                        header: header.take(),
                    })
                    .collect(),
            ),
            CurriculumSchedule::Binned(s) => EmittedSchedule::Steps(
                s.draws
                    .iter()
                    .map(|d| StepRecord {
                        step: d.step,
                        bin: d.bin,
                        batch_ids: s.batch(d).to_vec(),
                        header: header.take(),
                    })
                    .collect(),
            ),
        }
    }

    /// Plain-text variant: for every stage (pacing) or bin (binned), a
    /// `# stage` line followed by the cumulative available ids, one per line.
    pub fn write_ids_only<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match self {
            CurriculumSchedule::ExpPacing(s) => {
                for stage in &s.stages {
                    writeln!(
                        out,
                        "# stage {} steps {}..{} available {}",
                        stage.stage_index, stage.start_step, stage.end_step, stage.available
                    )?;
                    for id in s.available_ids(stage) {
                        writeln!(out, "{id}")?;
                    }
                }
            }
            CurriculumSchedule::Binned(s) => {
                let mut available = 0;
                for (k, bin) in s.bins.iter().enumerate() {
                    available += bin.len();
                    let end = s.bins.get(k + 1).map_or(s.total_steps, |b| b.unlock_step);
                    writeln!(
                        out,
                        "# stage {} steps {}..{} available {}",
                        bin.bin, bin.unlock_step, end, available
                    )?;
                    for b in &s.bins[..=k] {
                        for id in b.ids() {
                            writeln!(out, "{id}")?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn write_records<W: Write>(records: &EmittedSchedule, mut out: W) -> std::io::Result<()> {
    match records {
        EmittedSchedule::Stages(rs) => {
            for r in rs {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
        }
        EmittedSchedule::Steps(rs) => {
            for r in rs {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Writes the JSON Lines schedule.
pub fn emit_schedule<W: Write>(
    schedule: &CurriculumSchedule,
    config: Option<serde_json::Value>,
    out: W,
) -> std::io::Result<()> {
    write_records(&schedule.to_records(config), out)
}

pub fn read_schedule<R: BufRead>(input: R) -> Result<EmittedSchedule> {
    let mut stages = Vec::new();
    let mut steps = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let malformed = |message: String| CurriculumError::Malformed {
            line: line_no,
            message,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if value.get("stage").is_some() {
            stages.push(serde_json::from_value::<StageRecord>(value).map_err(|e| malformed(e.to_string()))?);
        } else {
            steps.push(serde_json::from_value::<StepRecord>(value).map_err(|e| malformed(e.to_string()))?);
        }
        if !stages.is_empty() && !steps.is_empty() {
            return Err(malformed("stage and step records mixed".into()).into());
        }
    }
    Ok(if steps.is_empty() {
        EmittedSchedule::Stages(stages)
    } else {
        EmittedSchedule::Steps(steps)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynlog::{CorpusExample, TokenSeq};

    fn ordering(n: usize) -> Ordering {
        Ordering {
            ids: (0..n).map(|i| format!("{i:04}")).collect(),
            measure: None,
            aspect: None,
        }
    }

    fn corpus(n: usize) -> Corpus {
        Corpus::from_examples(
            (0..n)
                .map(|i| CorpusExample {
                    example_id: format!("{i:04}"),
                    source: TokenSeq::from_whitespace("s"),
                    target: TokenSeq::from_whitespace(&"t ".repeat(1 + (i * 7) % 5)),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn pacing_fractions() {
        let f = PacingParams::default().stage_fractions().unwrap();
        let expected = [0.04, 0.076, 0.1444, 0.27436, 0.521284, 0.9904396, 1.0];
        assert_eq!(f.len(), 7);
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(PacingParams { start_fraction: 0.0, scale: 2.0 }.stage_fractions().is_err());
        assert!(PacingParams { start_fraction: 0.1, scale: 1.0 }.stage_fractions().is_err());
        assert_eq!(
            PacingParams { start_fraction: 1.0, scale: 1.0 }.stage_fractions().unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn pacing_spans() {
        let s = exp_pacing(&ordering(100), 700, PacingParams::default()).unwrap();
        assert!(s.stages.iter().all(|st| st.end_step - st.start_step == 100));
        let s = exp_pacing(&ordering(100), 703, PacingParams::default()).unwrap();
        assert_eq!(s.stages.last().unwrap().end_step - s.stages.last().unwrap().start_step, 103);
        assert_eq!(s.stages.last().unwrap().available, 100);
        assert!(exp_pacing(&ordering(100), 6, PacingParams::default()).is_err());
        assert!(exp_pacing(&ordering(0), 700, PacingParams::default()).is_err());
    }

    #[test]
    fn binned_remainder_goes_last() {
        let s = binned_curriculum(&ordering(105), &corpus(105), 4, 50, 10, 3).unwrap();
        let sizes: Vec<usize> = s.bins.iter().map(CurriculumBin::len).collect();
        assert_eq!(sizes, [10, 10, 10, 10, 10, 10, 10, 10, 10, 15]);
        let unlocks: Vec<usize> = s.bins.iter().map(|b| b.unlock_step).collect();
        assert_eq!(unlocks, [0, 5, 10, 15, 20, 25, 30, 35, 40, 45]);
        for bin in &s.bins {
            let lens: Vec<usize> = bin.ids().map(|id| corpus(105).get(id).unwrap().target.len()).collect();
            assert!(lens.windows(2).all(|w| w[0] <= w[1]));
            assert!(bin.batches.iter().all(|b| b.len() <= 4));
        }
        for d in &s.draws {
            assert!(s.bins[d.bin - 1].unlock_step <= d.step);
        }
    }

    #[test]
    fn binned_errors() {
        assert!(binned_curriculum(&ordering(0), &corpus(0), 4, 50, 10, 3).is_err());
        assert!(binned_curriculum(&ordering(20), &corpus(20), 0, 50, 10, 3).is_err());
        assert!(binned_curriculum(&ordering(9), &corpus(9), 1, 50, 10, 3).is_err());
        assert!(binned_curriculum(&ordering(20), &corpus(10), 1, 50, 10, 3).is_err());
        let mut dup = ordering(20);
        dup.ids[3] = dup.ids[4].clone();
        assert!(binned_curriculum(&dup, &corpus(20), 1, 50, 10, 3).is_err());
    }

    #[test]
    fn records_roundtrip() {
        let pacing = CurriculumSchedule::ExpPacing(
            exp_pacing(&ordering(50), 70, PacingParams::default()).unwrap(),
        );
        let binned = CurriculumSchedule::Binned(
            binned_curriculum(&ordering(30), &corpus(30), 2, 50, 10, 9).unwrap(),
        );
        for (schedule, count) in [(pacing, 7), (binned, 50)] {
            let config = serde_json::json!({"k": 1});
            let mut out = Vec::new();
            emit_schedule(&schedule, Some(config.clone()), &mut out).unwrap();
            let read = read_schedule(&out[..]).unwrap();
            assert_eq!(read.len(), count);
            assert_eq!(read, schedule.to_records(Some(config)));
            let mut again = Vec::new();
            write_records(&read, &mut again).unwrap();
            assert_eq!(again, out);
        }
    }

    #[test]
    fn ids_only_lists_cumulative_sets() {
        let s = CurriculumSchedule::ExpPacing(
            exp_pacing(&ordering(100), 700, PacingParams::default()).unwrap(),
        );
        let mut out = Vec::new();
        s.write_ids_only(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("# stage")).count(), 7);
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4 + 7 + 14 + 27 + 52 + 99 + 100);
    }
}
