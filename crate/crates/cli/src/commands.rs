use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use carto_core::cartography::render_svg_with_comment;
use carto_core::curriculum::{emit_schedule, CurriculumSchedule};
use carto_core::measures::{read_scores_csv, write_scores_csv, ScoreTable};
use carto_core::provenance::{sha256_hex, RunInfo};
use carto_core::selection::{write_ids, write_subset};
use carto_core::stats::{write_stats_csv, StatsContext, StatsRow};
use carto_core::synthkit::{self, RegionPlan};
use carto_core::{
    binned_curriculum, build_map, combine, epoch_window, exp_pacing, ingest_corpus, ingest_log,
    oov_repair, sample_map, score_all, select, Aspect, EpochWindow, Error, MeasureKind, Ordering,
    PacingParams, SubsetSpec,
};

use crate::{
    CombineArgs, Command, CurriculumArgs, Failure, IngestArgs, MapArgs, ScheduleFormat, ScoreArgs,
    SelectArgs, StatsArgs, Strategy, SynthArgs,
};

type CmdResult = Result<(), Failure>;

/// Prefix of the comment line that carries the run description.
const RUN_PREFIX: &str = "carto ";

pub(crate) fn dispatch(command: &Command) -> CmdResult {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::Score(args) => score(args),
        Command::Map(args) => map(args),
        Command::Select(args) => select_cmd(args),
        Command::Combine(args) => combine_cmd(args),
        Command::Curriculum(args) => curriculum(args),
        Command::Stats(args) => stats(args),
        Command::Synth(args) => synth(args),
    }
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn run_comment(run: &RunInfo) -> String {
    format!("{RUN_PREFIX}{}", run.to_json())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, result: std::io::Result<()>) -> Result<(), Error> {
    result.map_err(|e| Error::io(path, e))
}

fn read_scores(path: &Path) -> Result<ScoreTable, Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores_csv(file)
}

/// The epoch window recorded by the `score` run that produced a table.
fn upstream_window(table: &ScoreTable) -> Option<EpochWindow> {
    let run: RunInfo = table
        .comments
        .iter()
        .find_map(|c| c.strip_prefix(RUN_PREFIX))
        .and_then(|json| serde_json::from_str(json).ok())?;
    let epoch = |key: &str| run.config.get(key)?.as_u64().and_then(|v| u32::try_from(v).ok());
    Some(EpochWindow::new(epoch("min_epoch")?, epoch("max_epoch")?))
}

fn ingest(args: &IngestArgs) -> CmdResult {
    let mut run = RunInfo::new("ingest");
    run.set("log", path_str(&args.log));
    run.input("log", &args.log)?;
    let store = ingest_log(&args.log)?;
    let (first, last) = store.epoch_range();
    let with_predictions = store
        .examples()
        .all(|ex| ex.observations.iter().all(|o| o.predicted_tokens.is_some()));

    let mut summary = serde_json::json!({
        "examples": store.len(),
        "epochs": [first, last],
        "with_predictions": with_predictions,
    });
    if let Some(corpus_path) = &args.corpus {
        run.set("corpus", path_str(corpus_path));
        run.input("corpus", corpus_path)?;
        let corpus = ingest_corpus(corpus_path)?;
        // scoring checks ids and gold lengths in both directions
        score_all(&store.full_view(), &corpus, MeasureKind::Chia)?;
        summary["corpus_examples"] = corpus.len().into();
    }
    summary["run"] = serde_json::to_value(&run).expect("run info serializes");
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    match &args.out {
        Some(path) => write_file(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn score(args: &ScoreArgs) -> CmdResult {
    let mut run = RunInfo::new("score");
    run.set("log", path_str(&args.log))
        .set("corpus", path_str(&args.corpus))
        .set("measure", args.measure)
        .set("min_epoch", args.window.min_epoch)
        .set("max_epoch", args.window.max_epoch);
    run.input("log", &args.log)?.input("corpus", &args.corpus)?;

    let store = ingest_log(&args.log)?;
    let corpus = ingest_corpus(&args.corpus)?;
    let view = epoch_window(&store, args.window.min_epoch, args.window.max_epoch)?;
    let scores = score_all(&view, &corpus, args.measure)?;
    let mut out = create(&args.out)?;
    finish(&args.out, write_scores_csv(&mut out, &scores, &[run_comment(&run)]).and_then(|()| out.flush()))?;
    Ok(())
}

fn map(args: &MapArgs) -> CmdResult {
    let mut run = RunInfo::new("map");
    run.set("scores", path_str(&args.scores))
        .set("sample", args.sample)
        .set("seed", args.seed)
        .set("width", args.width)
        .set("height", args.height);
    run.input("scores", &args.scores)?;

    let table = read_scores(&args.scores)?;
    let mut data_map = build_map(&table.rows, upstream_window(&table))?;
    if let Some(fraction) = args.sample {
        data_map = sample_map(&data_map, fraction, args.seed)?;
    }
    let comment = run_comment(&run);
    let svg = render_svg_with_comment(&data_map, args.width, args.height, Some(&comment))?;
    write_file(&args.out, svg.as_bytes())?;
    if let Some(path) = &args.csv {
        let mut out = create(path)?;
        finish(path, data_map.write_csv(&mut out, &[comment]).and_then(|()| out.flush()))?;
    }
    Ok(())
}

fn save_subset(mut subset: SubsetSpec, run: RunInfo, table: &ScoreTable, out: &Path, ids_out: Option<&Path>) -> CmdResult {
    subset.provenance.window = upstream_window(table);
    subset.provenance.run = Some(run);
    write_subset(&subset, out)?;
    if let Some(path) = ids_out {
        let mut w = create(path)?;
        finish(path, write_ids(&subset, &mut w).and_then(|()| w.flush()))?;
    }
    Ok(())
}

fn repair_if_requested(
    subset: SubsetSpec,
    table: &ScoreTable,
    repair: &crate::RepairArgs,
    aspect: Aspect,
    run: &mut RunInfo,
) -> Result<SubsetSpec, Failure> {
    run.set("oov_repair", repair.oov_repair);
    let Some(corpus_path) = &repair.corpus else {
        return Ok(subset);
    };
    run.set("corpus", path_str(corpus_path));
    run.input("corpus", corpus_path)?;
    if !repair.oov_repair {
        return Ok(subset);
    }
    let corpus = ingest_corpus(corpus_path)?;
    Ok(oov_repair(&subset, &corpus, &table.rows, aspect)?)
}

fn select_cmd(args: &SelectArgs) -> CmdResult {
    let mut run = RunInfo::new("select");
    run.set("scores", path_str(&args.scores))
        .set("aspect", args.aspect)
        .set("fraction", args.fraction)
        .set("seed", args.repair.seed);
    run.input("scores", &args.scores)?;

    let table = read_scores(&args.scores)?;
    let subset = select(&table.rows, args.aspect, args.fraction)?;
    let subset = repair_if_requested(subset, &table, &args.repair, args.aspect, &mut run)?;
    save_subset(subset, run, &table, &args.out, args.ids_out.as_deref())
}

fn combine_cmd(args: &CombineArgs) -> CmdResult {
    let [a, b] = args.aspects[..] else {
        return Err(Failure::Usage(format!(
            "--aspects takes exactly two aspects, got {}",
            args.aspects.len()
        )));
    };
    let mut run = RunInfo::new("combine");
    run.set("scores", path_str(&args.scores))
        .set("aspects", [a, b])
        .set("fraction", args.fraction)
        .set("seed", args.repair.seed);
    run.input("scores", &args.scores)?;

    let table = read_scores(&args.scores)?;
    let subset = combine(&table.rows, a, b, args.fraction, args.repair.seed)?;
    let primary = subset.provenance.aspects[0];
    let subset = repair_if_requested(subset, &table, &args.repair, primary, &mut run)?;
    save_subset(subset, run, &table, &args.out, args.ids_out.as_deref())
}

fn curriculum(args: &CurriculumArgs) -> CmdResult {
    let mut run = RunInfo::new("curriculum");
    run.set("strategy", format!("{:?}", args.strategy).to_lowercase())
        .set("order_from", path_str(&args.order_from))
        .set("aspect", args.aspect)
        .set("reverse", args.reverse)
        .set("total_steps", args.total_steps);
    run.input("order_from", &args.order_from)?;

    let table = read_scores(&args.order_from)?;
    let mut order = Ordering::from_scores(&table.rows, args.aspect);
    if args.reverse {
        order = order.reversed();
    }
    let schedule = match args.strategy {
        Strategy::ExpPacing => {
            run.set("start_fraction", args.start_fraction).set("scale", args.scale);
            let params = PacingParams {
                start_fraction: args.start_fraction,
                scale: args.scale,
            };
            CurriculumSchedule::ExpPacing(exp_pacing(&order, args.total_steps, params)?)
        }
        Strategy::Binned => {
            let corpus_path = args.corpus.as_ref().expect("clap requires --corpus for binned");
            run.set("corpus", path_str(corpus_path))
                .set("batch_size", args.batch_size)
                .set("bins", args.bins)
                .set("seed", args.seed);
            run.input("corpus", corpus_path)?;
            let corpus = ingest_corpus(corpus_path)?;
            CurriculumSchedule::Binned(binned_curriculum(
                &order,
                &corpus,
                args.batch_size,
                args.total_steps,
                args.bins,
                args.seed,
            )?)
        }
    };

    let mut out = create(&args.out)?;
    let written = match args.format {
        ScheduleFormat::Jsonl => {
            let config = serde_json::to_value(&run).expect("run info serializes");
            emit_schedule(&schedule, Some(config), &mut out)
        }
        ScheduleFormat::IdsOnly => writeln!(out, "# {}", run_comment(&run))
            .and_then(|()| schedule.write_ids_only(&mut out)),
    };
    finish(&args.out, written.and_then(|()| out.flush()))?;
    Ok(())
}

fn stats(args: &StatsArgs) -> CmdResult {
    let mut run = RunInfo::new("stats");
    run.set("corpus", path_str(&args.corpus))
        .set("subsets", args.subsets.iter().map(|p| path_str(p)).collect::<Vec<_>>());
    run.input("corpus", &args.corpus)?;
    for (i, path) in args.subsets.iter().enumerate() {
        run.input(&format!("subset.{i}"), path)?;
    }

    let corpus = ingest_corpus(&args.corpus)?;
    let ctx = StatsContext::new(&corpus);
    let all: Vec<&str> = corpus.iter().map(|e| e.example_id.as_str()).collect();
    let mut rows = vec![StatsRow {
        subset: "full".into(),
        measure: String::new(),
        aspect: String::new(),
        stats: ctx.subset_stats(&all)?,
    }];
    for path in &args.subsets {
        let subset = carto_core::selection::read_subset(path)?;
        let label = path
            .file_stem()
            .map_or_else(|| path_str(path), |s| s.to_string_lossy().into_owned());
        let prov = &subset.provenance;
        rows.push(StatsRow {
            subset: label,
            measure: prov.measure.map(|m| m.to_string()).unwrap_or_default(),
            aspect: prov.aspects.iter().map(Aspect::as_str).collect::<Vec<_>>().join("+"),
            stats: ctx.subset_stats(&subset.ids)?,
        });
    }
    let mut out = create(&args.out)?;
    finish(&args.out, write_stats_csv(&mut out, &rows, &[run_comment(&run)]).and_then(|()| out.flush()))?;
    Ok(())
}

fn synth(args: &SynthArgs) -> CmdResult {
    let mut plan = RegionPlan::new(args.easy, args.ambiguous, args.hard, args.epochs, args.seed);
    plan.seq_len_range = (args.min_len, args.max_len);
    let set = synthkit::generate(&plan)?;

    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut log = Vec::new();
    set.store.write_log(&mut log).expect("writing to memory");
    let mut tsv = Vec::new();
    set.corpus.write_tsv(&mut tsv).expect("writing to memory");
    write_file(&dir.join("dynamics.jsonl"), &log)?;
    write_file(&dir.join("corpus.tsv"), &tsv)?;

    let mut run = RunInfo::new("synth");
    run.set("easy", args.easy)
        .set("ambiguous", args.ambiguous)
        .set("hard", args.hard)
        .set("epochs", args.epochs)
        .set("min_len", args.min_len)
        .set("max_len", args.max_len)
        .set("seed", args.seed)
        .set(
            "outputs",
            serde_json::json!({
                "dynamics.jsonl": sha256_hex(&log),
                "corpus.tsv": sha256_hex(&tsv),
            }),
        );
    let mut labels = format!("# {}\nexample_id,region\n", run_comment(&run));
    for (id, region) in &set.labels {
        labels.push_str(&format!("{id},{region}\n"));
    }
    write_file(&dir.join("labels.csv"), labels.as_bytes())?;
    Ok(())
}
