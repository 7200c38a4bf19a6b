//! Dataset cartography for sequence-to-sequence training runs.
//!
//! The pipeline reads per-example training dynamics logged by a trainer
//! ([`dynlog`]), reduces them to confidence, variability and correctness
//! under one of three sequence-level measures ([`measures`]), and turns
//! the result into data maps ([`cartography`]), training subsets
//! ([`selection`]), curriculum schedules ([`curriculum`]) and descriptive
//! subset statistics ([`stats`]). [`synthkit`] generates stores with
//! planted regions and carries brute-force reference evaluators.

pub mod cartography;
pub mod curriculum;
pub mod dynlog;
mod error;
pub mod measures;
pub mod provenance;
pub mod selection;
pub mod stats;
pub mod synthkit;

pub use cartography::{build_map, render_svg, sample_map, DataMap, DataMapPoint};
pub use curriculum::{
    binned_curriculum, exp_pacing, BinnedSchedule, CurriculumSchedule, Ordering, PacingParams,
    PacingSchedule,
};
pub use dynlog::{
    epoch_window, ingest_corpus, ingest_log, CorpusExample, DynamicsStore, EpochObservation,
    Corpus, EpochWindow, ExampleDynamics, StoreView, TokenSeq, WindowedExample,
};
pub use error::{
    CartographyError, CurriculumError, DynlogError, Error, MeasureError, Result, SelectionError,
    StatsError,
};
pub use measures::{bleu4, score_all, MeasureKind, MeasureScores};
pub use selection::{combine, oov_repair, select, Aspect, SubsetSpec};
pub use stats::{rarity, subset_stats, FreqTable, SubsetStats};

/// Number of items kept when taking `fraction` of `n`, rounded down.
///
/// A relative slack of 1e-9 absorbs binary representation error so that
/// e.g. `0.29 * 100` counts as 29 rather than 28.
pub fn floor_count(n: usize, fraction: f64) -> usize {
    let raw = n as f64 * fraction;
    let count = (raw + raw.abs() * 1e-9 + 1e-12).floor();
    (count.max(0.0) as usize).min(n)
}
