use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error; each variant names the module that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dynlog: {0}")]
    Dynlog(#[from] DynlogError),
    #[error("measures: {0}")]
    Measure(#[from] MeasureError),
    #[error("cartography: {0}")]
    Cartography(#[from] CartographyError),
    #[error("selection: {0}")]
    Selection(#[from] SelectionError),
    #[error("curriculum: {0}")]
    Curriculum(#[from] CurriculumError),
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("synthkit: {0}")]
    Synth(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            Error::Dynlog(_) => "dynlog",
            Error::Measure(_) => "measures",
            Error::Cartography(_) => "cartography",
            Error::Selection(_) => "selection",
            Error::Curriculum(_) => "curriculum",
            Error::Stats(_) => "stats",
            Error::Synth(_) => "synthkit",
            Error::Io { .. } => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum DynlogError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: probability out of range: {value} (example {example_id})")]
    ProbabilityOutOfRange {
        line: usize,
        example_id: String,
        value: f64,
    },
    #[error("line {line}: empty gold_token_probs for example {example_id}")]
    EmptyGold { line: usize, example_id: String },
    #[error("line {line}: gold length {found} differs from {expected} seen earlier for example {example_id}")]
    GoldLengthMismatch {
        line: usize,
        example_id: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate record for example {example_id} at epoch {epoch}")]
    DuplicateRecord {
        line: usize,
        example_id: String,
        epoch: u32,
    },
    #[error("line {line}: token {token:?} contains whitespace")]
    WhitespaceInToken { line: usize, token: String },
    #[error("non-rectangular store: example {example_id} is missing epoch {epoch}")]
    NonRectangular { example_id: String, epoch: u32 },
    #[error("dynamics log contains no records")]
    EmptyLog,
    #[error("line {line}: expected 2 or 3 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: empty target sequence")]
    EmptyTarget { line: usize },
    #[error("line {line}: duplicate example id {example_id}")]
    DuplicateId { line: usize, example_id: String },
    #[error("epoch window [{min_epoch}, {max_epoch}] is invalid for observed range [{observed_min}, {observed_max}]")]
    InvalidWindow {
        min_epoch: u32,
        max_epoch: u32,
        observed_min: u32,
        observed_max: u32,
    },
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("example {example_id}: no predicted tokens recorded for epoch {epoch}")]
    MissingPredictions { example_id: String, epoch: u32 },
    #[error("empty reference sequence")]
    EmptyReference,
    #[error("example {example_id} is in the dynamics store but not in the corpus")]
    MissingFromCorpus { example_id: String },
    #[error("example {example_id} is in the corpus but not in the dynamics store")]
    MissingFromStore { example_id: String },
    #[error("example {example_id}: logged gold length {logged} but corpus target has {corpus} tokens")]
    GoldLengthMismatch {
        example_id: String,
        logged: usize,
        corpus: usize,
    },
    #[error("unknown measure {0:?} (expected invppl, chia or bleu)")]
    UnknownMeasure(String),
    #[error("scores csv: {0}")]
    Csv(String),
}

#[derive(Debug, Error)]
pub enum CartographyError {
    #[error("scores mix measures {first} and {second}")]
    MixedMeasures { first: String, second: String },
    #[error("duplicate example {0} in scores")]
    DuplicateExample(String),
    #[error("sample fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("cannot render an empty data map")]
    EmptyMap,
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("no scores to select from")]
    EmptyScores,
    #[error("scores mix measures {first} and {second}")]
    MixedMeasures { first: String, second: String },
    #[error("combined subsets need two distinct aspects, got {0} twice")]
    IdenticalAspects(String),
    #[error("example {example_id} has scores but is not in the corpus")]
    MissingFromCorpus { example_id: String },
    #[error("corpus example {example_id} has no scores")]
    MissingScores { example_id: String },
    #[error("subset member {example_id} is not in the corpus")]
    UnknownMember { example_id: String },
    #[error("unknown aspect {0:?} (expected hard, easy or ambiguous)")]
    UnknownAspect(String),
    #[error("subset file: duplicate id {0}")]
    DuplicateId(String),
    #[error("subset file: no ids but declared fraction {0}")]
    EmptyWithFraction(f64),
    #[error("subset file: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("total_steps {total_steps} is smaller than the {stages} stages required")]
    TooFewSteps { total_steps: usize, stages: usize },
    #[error("pacing needs 0 < start_fraction <= 1 and scale > 1, got start {start} scale {scale}")]
    InvalidPacing { start: f64, scale: f64 },
    #[error("cannot build a curriculum over an empty ordering")]
    EmptyCorpus,
    #[error("{examples} examples cannot fill {bins} bins")]
    TooFewExamples { examples: usize, bins: usize },
    #[error("batch_size must be at least 1")]
    ZeroBatchSize,
    #[error("bins must be at least 1")]
    ZeroBins,
    #[error("ordering example {example_id} is not in the corpus")]
    UnknownExample { example_id: String },
    #[error("ordering lists example {0} more than once")]
    DuplicateExample(String),
    #[error("schedule file line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("token {token:?} does not occur in the frequency table")]
    UnknownToken { token: String },
    #[error("subset member {example_id} is not in the corpus")]
    UnknownId { example_id: String },
}
