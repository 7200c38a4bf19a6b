//! Python bindings. The extension module is named `carto`.

use std::collections::BTreeMap;

use carto_core::cartography::render_svg as core_render_svg;
use carto_core::dynlog::{parse_corpus, parse_log};
use carto_core::measures::{chia_confidence, invppl_confidence, variability};
use carto_core::selection::{subset_from_json, subset_to_json};
use carto_core::stats::StatsContext;
use carto_core::synthkit::{self, RegionPlan};
use carto_core::{
    Aspect, Corpus, DynamicsStore, EpochObservation, ExampleDynamics, MeasureKind, MeasureScores,
    Ordering, PacingParams, SubsetSpec, TokenSeq,
};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: carto_core::Error) -> PyErr {
    match e {
        carto_core::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn measure_kind(name: &str) -> PyResult<MeasureKind> {
    name.parse().map_err(|e: carto_core::MeasureError| PyValueError::new_err(e.to_string()))
}

fn aspect(name: &str) -> PyResult<Aspect> {
    name.parse().map_err(|e: carto_core::SelectionError| PyValueError::new_err(e.to_string()))
}

fn token_seq(tokens: Vec<String>) -> PyResult<TokenSeq> {
    TokenSeq::new(tokens).map_err(|t| PyValueError::new_err(format!("invalid token {t:?}")))
}

#[pyclass(name = "DynamicsStore", module = "carto", frozen)]
pub struct PyDynamicsStore {
    inner: DynamicsStore,
}

#[pymethods]
impl PyDynamicsStore {
    /// Parses dynamics-log JSON Lines text.
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        let inner = parse_log(text.as_bytes()).map_err(to_py)?;
        Ok(PyDynamicsStore { inner })
    }

    fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.inner.write_log(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("log is UTF-8")
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids().map(str::to_owned).collect()
    }

    fn epoch_range(&self) -> (u32, u32) {
        self.inner.epoch_range()
    }

    /// Per-epoch gold-token probabilities of one example.
    fn gold_token_probs(&self, example_id: &str) -> PyResult<Vec<Vec<f64>>> {
        let ex = self
            .inner
            .get(example_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown example {example_id:?}")))?;
        Ok(ex.observations.iter().map(|o| o.gold_token_probs.clone()).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Corpus", module = "carto", frozen)]
pub struct PyCorpus {
    inner: Corpus,
}

#[pymethods]
impl PyCorpus {
    /// Parses tab-separated `source<TAB>target[<TAB>id]` text.
    #[staticmethod]
    fn from_tsv(text: &str) -> PyResult<Self> {
        let inner = parse_corpus(text.as_bytes()).map_err(to_py)?;
        Ok(PyCorpus { inner })
    }

    fn to_tsv(&self) -> String {
        let mut out = Vec::new();
        self.inner.write_tsv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("corpus is UTF-8")
    }

    fn ids(&self) -> Vec<String> {
        self.inner.iter().map(|e| e.example_id.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "MeasureScores", module = "carto", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMeasureScores {
    inner: MeasureScores,
}

#[pymethods]
impl PyMeasureScores {
    #[getter]
    fn example_id(&self) -> &str {
        &self.inner.example_id
    }
    #[getter]
    fn measure(&self) -> &'static str {
        self.inner.measure.as_str()
    }
    #[getter]
    fn confidence(&self) -> f64 {
        self.inner.confidence
    }
    #[getter]
    fn variability(&self) -> f64 {
        self.inner.variability
    }
    #[getter]
    fn correctness(&self) -> f64 {
        self.inner.correctness
    }
    #[getter]
    fn correctness_bin(&self) -> u8 {
        self.inner.correctness_bin
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "MeasureScores(example_id={:?}, measure={:?}, confidence={}, variability={}, correctness={})",
            s.example_id,
            s.measure.as_str(),
            s.confidence,
            s.variability,
            s.correctness
        )
    }
}

#[pyclass(name = "SubsetSpec", module = "carto", frozen)]
pub struct PySubsetSpec {
    inner: SubsetSpec,
}

#[pymethods]
impl PySubsetSpec {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySubsetSpec {
            inner: subset_from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        subset_to_json(&self.inner)
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids.clone()
    }
    #[getter]
    fn padded(&self) -> Vec<String> {
        self.inner.provenance.padded.clone()
    }
    #[getter]
    fn oov_added(&self) -> Vec<String> {
        self.inner.provenance.oov_added.clone()
    }
    #[getter]
    fn oov_removed(&self) -> Vec<String> {
        self.inner.provenance.oov_removed.clone()
    }
    #[getter]
    fn size_overflow(&self) -> usize {
        self.inner.provenance.size_overflow
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn unwrap_scores(scores: &[PyRef<'_, PyMeasureScores>]) -> Vec<MeasureScores> {
    scores.iter().map(|s| s.inner.clone()).collect()
}

#[pyfunction]
fn ingest_log(path: &str) -> PyResult<PyDynamicsStore> {
    Ok(PyDynamicsStore {
        inner: carto_core::ingest_log(path).map_err(to_py)?,
    })
}

#[pyfunction]
fn ingest_corpus(path: &str) -> PyResult<PyCorpus> {
    Ok(PyCorpus {
        inner: carto_core::ingest_corpus(path).map_err(to_py)?,
    })
}

#[pyfunction]
fn bleu4(hypothesis: Vec<String>, reference: Vec<String>) -> PyResult<f64> {
    carto_core::bleu4(&token_seq(hypothesis)?, &token_seq(reference)?)
        .map_err(|e| to_py(e.into()))
}

/// Confidence and variability of one example from its per-epoch
/// gold-token probabilities. Token-probability measures only.
#[pyfunction]
#[pyo3(signature = (epochs, measure = "invppl"))]
fn confidences(epochs: Vec<Vec<f64>>, measure: &str) -> PyResult<(f64, f64)> {
    let kind = measure_kind(measure)?;
    if kind == MeasureKind::Bleu {
        return Err(PyValueError::new_err("bleu needs predictions; use score_all"));
    }
    let example = ExampleDynamics {
        example_id: String::new(),
        observations: epochs
            .into_iter()
            .enumerate()
            .map(|(i, gold_token_probs)| EpochObservation {
                epoch: i as u32 + 1,
                gold_token_probs,
                predicted_tokens: None,
            })
            .collect(),
    };
    // route through the store so the input gets validated
    let store = DynamicsStore::from_examples([example]).map_err(to_py)?;
    let w = store.examples().next().expect("one example").windowed();
    let conf = match kind {
        MeasureKind::Chia => chia_confidence(&w),
        _ => invppl_confidence(&w),
    };
    let var = variability(&w, &TokenSeq::default(), kind).map_err(|e| to_py(e.into()))?;
    Ok((conf, var))
}

#[pyfunction]
#[pyo3(signature = (store, corpus, measure = "invppl", min_epoch = 3, max_epoch = None))]
fn score_all(
    store: &PyDynamicsStore,
    corpus: &PyCorpus,
    measure: &str,
    min_epoch: u32,
    max_epoch: Option<u32>,
) -> PyResult<Vec<PyMeasureScores>> {
    let kind = measure_kind(measure)?;
    let max_epoch = max_epoch.unwrap_or(store.inner.epoch_range().1);
    let view = carto_core::epoch_window(&store.inner, min_epoch, max_epoch).map_err(to_py)?;
    let rows = carto_core::score_all(&view, &corpus.inner, kind).map_err(to_py)?;
    Ok(rows.into_iter().map(|inner| PyMeasureScores { inner }).collect())
}

#[pyfunction]
fn select(scores: Vec<PyRef<'_, PyMeasureScores>>, aspect_name: &str, fraction: f64) -> PyResult<PySubsetSpec> {
    let inner = carto_core::select(&unwrap_scores(&scores), aspect(aspect_name)?, fraction).map_err(to_py)?;
    Ok(PySubsetSpec { inner })
}

#[pyfunction]
#[pyo3(signature = (scores, first, second, fraction, seed = 42))]
fn combine(
    scores: Vec<PyRef<'_, PyMeasureScores>>,
    first: &str,
    second: &str,
    fraction: f64,
    seed: u64,
) -> PyResult<PySubsetSpec> {
    let inner = carto_core::combine(&unwrap_scores(&scores), aspect(first)?, aspect(second)?, fraction, seed)
        .map_err(to_py)?;
    Ok(PySubsetSpec { inner })
}

#[pyfunction]
fn oov_repair(
    subset: &PySubsetSpec,
    corpus: &PyCorpus,
    scores: Vec<PyRef<'_, PyMeasureScores>>,
    aspect_name: &str,
) -> PyResult<PySubsetSpec> {
    let inner = carto_core::oov_repair(&subset.inner, &corpus.inner, &unwrap_scores(&scores), aspect(aspect_name)?)
        .map_err(to_py)?;
    Ok(PySubsetSpec { inner })
}

fn ordering(ids: Vec<String>) -> Ordering {
    Ordering {
        ids,
        measure: None,
        aspect: None,
    }
}

/// Stages as dicts with `stage`, `available_fraction`, `start_step`,
/// `end_step` and `available_ids`.
#[pyfunction]
#[pyo3(signature = (ids, total_steps, start_fraction = 0.04, scale = 1.9))]
fn exp_pacing<'py>(
    py: Python<'py>,
    ids: Vec<String>,
    total_steps: usize,
    start_fraction: f64,
    scale: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let params = PacingParams { start_fraction, scale };
    let schedule = carto_core::exp_pacing(&ordering(ids), total_steps, params).map_err(to_py)?;
    schedule
        .stages
        .iter()
        .map(|stage| {
            let d = PyDict::new(py);
            d.set_item("stage", stage.stage_index)?;
            d.set_item("available_fraction", stage.available_fraction)?;
            d.set_item("start_step", stage.start_step)?;
            d.set_item("end_step", stage.end_step)?;
            d.set_item("available_ids", schedule.available_ids(stage).to_vec())?;
            Ok(d)
        })
        .collect()
}

/// One `(step, bin, batch_ids)` tuple per training step.
#[pyfunction]
#[pyo3(signature = (ids, corpus, batch_size, total_steps, bins = 10, seed = 42))]
fn binned_curriculum(
    ids: Vec<String>,
    corpus: &PyCorpus,
    batch_size: usize,
    total_steps: usize,
    bins: usize,
    seed: u64,
) -> PyResult<Vec<(usize, usize, Vec<String>)>> {
    let schedule = carto_core::binned_curriculum(&ordering(ids), &corpus.inner, batch_size, total_steps, bins, seed)
        .map_err(to_py)?;
    Ok(schedule
        .draws
        .iter()
        .map(|d| (d.step, d.bin, schedule.batch(d).to_vec()))
        .collect())
}

/// Rarity of `tokens` against the relative frequencies of `side`.
#[pyfunction]
fn rarity(tokens: Vec<String>, side: Vec<Vec<String>>) -> PyResult<f64> {
    let seqs = side.into_iter().map(token_seq).collect::<PyResult<Vec<_>>>()?;
    let table = carto_core::FreqTable::from_sequences(&seqs);
    carto_core::rarity(&token_seq(tokens)?, &table).map_err(to_py)
}

#[pyfunction]
fn subset_stats(ids: Vec<String>, corpus: &PyCorpus) -> PyResult<BTreeMap<&'static str, f64>> {
    let s = StatsContext::new(&corpus.inner).subset_stats(&ids).map_err(to_py)?;
    Ok(BTreeMap::from([
        ("mean_src_len", s.mean_source_len),
        ("mean_tgt_len", s.mean_target_len),
        ("mean_src_rarity", s.mean_source_rarity),
        ("mean_tgt_rarity", s.mean_target_rarity),
        ("n", s.n as f64),
    ]))
}

#[pyfunction]
#[pyo3(signature = (scores, width = 800, height = 600))]
fn render_svg(scores: Vec<PyRef<'_, PyMeasureScores>>, width: u32, height: u32) -> PyResult<String> {
    let map = carto_core::build_map(&unwrap_scores(&scores), None).map_err(to_py)?;
    core_render_svg(&map, width, height).map_err(to_py)
}

/// Synthetic store, corpus and planted labels (`id -> region`).
#[pyfunction]
#[pyo3(signature = (easy, ambiguous, hard, epochs = 10, seed = 42))]
fn synth(
    easy: usize,
    ambiguous: usize,
    hard: usize,
    epochs: u32,
    seed: u64,
) -> PyResult<(PyDynamicsStore, PyCorpus, BTreeMap<String, &'static str>)> {
    let set = synthkit::generate(&RegionPlan::new(easy, ambiguous, hard, epochs, seed)).map_err(to_py)?;
    let labels = set.labels.iter().map(|(id, r)| (id.clone(), r.as_str())).collect();
    Ok((PyDynamicsStore { inner: set.store }, PyCorpus { inner: set.corpus }, labels))
}

#[pymodule]
pub fn carto(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDynamicsStore>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyMeasureScores>()?;
    m.add_class::<PySubsetSpec>()?;
    m.add_function(wrap_pyfunction!(ingest_log, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(bleu4, m)?)?;
    m.add_function(wrap_pyfunction!(confidences, m)?)?;
    m.add_function(wrap_pyfunction!(score_all, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(oov_repair, m)?)?;
    m.add_function(wrap_pyfunction!(exp_pacing, m)?)?;
    m.add_function(wrap_pyfunction!(binned_curriculum, m)?)?;
    m.add_function(wrap_pyfunction!(rarity, m)?)?;
    m.add_function(wrap_pyfunction!(subset_stats, m)?)?;
    m.add_function(wrap_pyfunction!(render_svg, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
