"""Smoke test for the `carto` extension module.

Build and install the module first, e.g.

    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/carto-*.whl

then run `python python/smoke_test.py`.
"""

import json
import math
import tempfile
from pathlib import Path

import carto


def check_measures():
    conf, var = carto.confidences([[0.5, 0.5], [0.8, 0.2]], "invppl")
    assert math.isclose(conf, 0.45, abs_tol=1e-12), conf
    assert math.isclose(var, 0.05, abs_tol=1e-12), var
    conf, var = carto.confidences([[0.5, 0.5], [0.8, 0.2]], "chia")
    assert math.isclose(conf, 0.5, abs_tol=1e-12) and abs(var) < 1e-12

    assert carto.bleu4(list("abcd"), list("abcd")) == 1.0
    assert carto.bleu4(["x"], ["a"]) == 0.0
    disjoint = carto.bleu4(["e", "f", "g", "h"], ["a", "b", "c", "d"])
    assert 0.0 < disjoint < 0.05, disjoint

    r = carto.rarity(["a", "a", "b"], [["a", "a", "b"]])
    assert math.isclose(r, (2 * math.log(1.5) + math.log(3)) / 3, abs_tol=1e-12)


def check_pipeline():
    store, corpus, labels = carto.synth(60, 60, 60, epochs=10, seed=42)
    assert len(store) == len(corpus) == 180
    assert store.epoch_range() == (1, 10)

    reread = carto.DynamicsStore.from_jsonl(store.to_jsonl())
    assert reread.to_jsonl() == store.to_jsonl()

    with tempfile.TemporaryDirectory() as tmp:
        log = Path(tmp) / "dynamics.jsonl"
        tsv = Path(tmp) / "corpus.tsv"
        log.write_text(store.to_jsonl())
        tsv.write_text(corpus.to_tsv())
        store = carto.ingest_log(str(log))
        corpus = carto.ingest_corpus(str(tsv))

    scores = carto.score_all(store, corpus, "invppl", min_epoch=1, max_epoch=10)
    assert len(scores) == 180
    assert all(0.0 <= s.confidence <= 1.0 and 0 <= s.correctness_bin <= 9 for s in scores)

    for aspect in ("hard", "easy", "ambiguous"):
        subset = carto.select(scores, aspect, 0.33)
        assert len(subset) == 59
        hit = sum(labels[i] == aspect for i in subset.ids)
        assert hit / 60 >= 0.95, (aspect, hit)

    hard = carto.select(scores, "hard", 0.33)
    repaired = carto.oov_repair(hard, corpus, scores, "hard")
    assert len(repaired) == len(hard) + repaired.size_overflow
    payload = json.loads(repaired.to_json())
    assert payload["ids"] == repaired.ids
    assert carto.SubsetSpec.from_json(repaired.to_json()).to_json() == repaired.to_json()

    mixed = carto.combine(scores, "easy", "hard", 0.5, seed=7)
    assert len(mixed) == 90 and len(set(mixed.ids)) == 90

    stats = carto.subset_stats(hard.ids, corpus)
    assert stats["n"] == 59

    order = [s.example_id for s in sorted(scores, key=lambda s: (s.confidence, s.example_id))]
    stages = carto.exp_pacing(order, 700)
    assert len(stages) == 7
    assert [st["end_step"] - st["start_step"] for st in stages] == [100] * 7
    assert len(stages[-1]["available_ids"]) == 180

    draws = carto.binned_curriculum(order, corpus, batch_size=8, total_steps=50, seed=3)
    assert len(draws) == 50 and all(len(batch) <= 8 for _, _, batch in draws)

    svg = carto.render_svg(scores)
    assert svg.count('class="marker ') == 180


def check_errors():
    try:
        carto.DynamicsStore.from_jsonl('{"epoch":1,"example_id":"e1","gold_token_probs":[1.5]}\n')
    except ValueError as e:
        assert "dynlog" in str(e) and "e1" in str(e), e
    else:
        raise AssertionError("out-of-range probability accepted")
    try:
        carto.ingest_log("/nonexistent/dynamics.jsonl")
    except OSError:
        pass
    else:
        raise AssertionError("missing file accepted")


if __name__ == "__main__":
    check_measures()
    check_pipeline()
    check_errors()
    print("smoke test passed")
