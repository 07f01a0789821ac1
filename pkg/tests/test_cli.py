import json
import math

import numpy as np
import pytest

from conftest import random_adapter
from lorafuse.adapters import save_adapter
from lorafuse.cli import main
from lorafuse.index import VectorIndex
from test_weights import CASE_STUDY_WEIGHTS

COMMONSENSE_ROWS = [
    ("Where would you find a spare tire?", "trunk"),
    ("Where can I buy a tennis ball?", "sports store"),
    ("What do you use to open a locked door?", "key"),
    ("Where do people keep cold food?", "fridge"),
    ("What tool drives a nail into wood?", "hammer"),
]
SENTIMENT_ROWS = [
    ("Its charms are purely technical.", "negative"),
    ("A wonderful heartfelt movie experience.", "positive"),
    ("The plot was dull and lifeless.", "negative"),
    ("Brilliant acting and great pacing.", "positive"),
    ("I loved every single minute of it.", "positive"),
]


def write_corpus(tmp_path, include_empty_task=False):
    qa = tmp_path / "commonsense.csv"
    qa.write_text(
        "question,answer\n" + "\n".join(f"\"{q}\",{a}" for q, a in COMMONSENSE_ROWS),
        encoding="utf-8",
    )
    senti = tmp_path / "sentiment.csv"
    senti.write_text(
        "sentence,label\n" + "\n".join(f"\"{s}\",{l}" for s, l in SENTIMENT_ROWS),
        encoding="utf-8",
    )
    tasks = [
        {
            "task_name": "commonsense_qa",
            "hint": "Answer the commonsense question.",
            "text_columns": ["question"],
            "separator_labels": ["[Q]"],
            "label_columns": ["answer"],
            "csv_path": str(qa),
        },
        {
            "task_name": "sentiment",
            "hint": "Classify the sentiment of the sentence.",
            "text_columns": ["sentence"],
            "separator_labels": ["[S]"],
            "label_columns": ["label"],
            "csv_path": str(senti),
        },
    ]
    if include_empty_task:
        empty = tmp_path / "empty.csv"
        empty.write_text("text,label\n", encoding="utf-8")
        tasks.append(
            {
                "task_name": "empty_task",
                "hint": "",
                "text_columns": ["text"],
                "separator_labels": ["[T]"],
                "csv_path": str(empty),
            }
        )
    config = {"provider": {"kind": "hashing", "dim": 96}, "sample_cap": 2000, "tasks": tasks}
    config_path = tmp_path / "ingest.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    return config_path


def test_ingest_builds_snapshot(tmp_path, capsys):
    config = write_corpus(tmp_path)
    db = tmp_path / "snap.lfix"
    assert main(["ingest", "--config", str(config), "--db", str(db)]) == 0
    out = capsys.readouterr().out
    assert "ingested 10 vectors" in out
    index = VectorIndex.load(db)
    assert index.task_counts() == {"commonsense_qa": 5, "sentiment": 5}
    assert index.dim == 96


def test_ingest_empty_csv_warns(tmp_path, capsys):
    config = write_corpus(tmp_path, include_empty_task=True)
    db = tmp_path / "snap.lfix"
    assert main(["ingest", "--config", str(config), "--db", str(db)]) == 0
    err = capsys.readouterr().err
    assert "empty_task" in err
    assert "empty_task" not in VectorIndex.load(db).task_counts()


def test_ingest_rerun_byte_identical(tmp_path, capsys):
    config = write_corpus(tmp_path)
    a, b = tmp_path / "a.lfix", tmp_path / "b.lfix"
    assert main(["--seed", "42", "ingest", "--config", str(config), "--db", str(a)]) == 0
    assert main(["--seed", "42", "ingest", "--config", str(config), "--db", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_ingest_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{broken", encoding="utf-8")
    assert main(["ingest", "--config", str(bad), "--db", str(tmp_path / "x.lfix")]) == 1


@pytest.fixture
def snapshot(tmp_path):
    config = write_corpus(tmp_path)
    db = tmp_path / "snap.lfix"
    assert main(["ingest", "--config", str(config), "--db", str(db)]) == 0
    return db


def test_weights_command(snapshot, tmp_path, capsys):
    out = tmp_path / "weights.json"
    code = main(
        ["weights", "--db", str(snapshot), "--query", "Where can I buy a tennis ball?",
         "--k", "8", "--p", "0.9", "--out", str(out)]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["p"] == 0.9 and doc["k"] == 8
    ranked = list(doc["weights"].items())
    assert ranked == sorted(ranked, key=lambda kv: (-kv[1], kv[0]))
    assert ranked[0][0] == "commonsense_qa"
    assert abs(math.fsum(doc["weights"].values()) - 1.0) <= 1e-9


def test_weights_missing_snapshot(tmp_path, capsys):
    code = main(["weights", "--db", str(tmp_path / "nope.lfix"), "--query", "hi"])
    assert code == 2
    assert "does not exist" in capsys.readouterr().err


def test_weights_corrupt_snapshot(tmp_path, capsys):
    bad = tmp_path / "bad.lfix"
    bad.write_bytes(b"LFIXgarbage")
    assert main(["weights", "--db", str(bad), "--query", "hi"]) == 2


def test_weights_degenerate_query_is_embedding_error(snapshot, capsys):
    assert main(["weights", "--db", str(snapshot), "--query", "!!!"]) == 3


def test_weights_full_nucleus_includes_all_retrieved(snapshot, tmp_path):
    out = tmp_path / "w.json"
    assert main(["weights", "--db", str(snapshot), "--query", "movie was great",
                 "--k", "10", "--p", "1.0", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert set(doc["weights"]) == {"commonsense_qa", "sentiment"}


def test_weights_rerun_byte_identical(snapshot, tmp_path):
    a, b = tmp_path / "wa.json", tmp_path / "wb.json"
    for path in (a, b):
        assert main(["weights", "--db", str(snapshot), "--query", "spare tire",
                     "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_weights_from_query_embedding_file(snapshot, tmp_path):
    from lorafuse.embed import EmbeddingStore, HashingEmbedder, save_embedding_store

    store = EmbeddingStore(dim=96)
    store.add("query", "", HashingEmbedder(dim=96).embed("where is a spare tire"))
    emb = tmp_path / "q.emb"
    save_embedding_store(store, emb)
    out = tmp_path / "w.json"
    assert main(["weights", "--db", str(snapshot), "--query-embedding", str(emb),
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["weights"]


def write_weights_file(tmp_path):
    total = math.fsum(CASE_STUDY_WEIGHTS.values())
    weights = {t: w / total for t, w in CASE_STUDY_WEIGHTS.items()}
    path = tmp_path / "weights.json"
    path.write_text(json.dumps({"weights": weights, "p": 0.9, "k": 100}), encoding="utf-8")
    return path


def write_adapter_bank(tmp_path, rng, tasks, rank=8, d=12):
    root = tmp_path / "adapters"
    for task in tasks:
        adapter = random_adapter(rng, f"llama2B-{task}-64", task, rank=rank, d_in=d, d_out=d, alpha=32.0)
        save_adapter(adapter, root / task)
    return root


def test_merge_linear_case_study(tmp_path, rng, capsys):
    weights_path = write_weights_file(tmp_path)
    bank = write_adapter_bank(tmp_path, rng, CASE_STUDY_WEIGHTS)
    out = tmp_path / "merged"
    code = main(["merge", "--strategy", "linear", "--weights", str(weights_path),
                 "--adapters", str(bank), "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == "low_rank"
    assert manifest["effective_rank"] == 8
    assert len(manifest["provenance"]["input_digests"]) == 4
    assert (out / "m.A.bin").is_file() and (out / "m.B.bin").is_file()


def test_merge_ties_density_matches_oracle(tmp_path, rng):
    # the TIES formula keeps the union of per-adapter trim masks (sign
    # permitting), so the right bound is agreement with the step oracle,
    # not a <= density*n count
    from lorafuse.adapters import delta, load_adapter
    from oracles import ties_reference

    weights_path = write_weights_file(tmp_path)
    bank = write_adapter_bank(tmp_path, rng, CASE_STUDY_WEIGHTS)
    out = tmp_path / "merged"
    code = main(["merge", "--strategy", "ties", "--weights", str(weights_path),
                 "--adapters", str(bank), "--density", "0.5", "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == "dense"
    dims = manifest["modules"]["m"]
    dense = np.frombuffer((out / "m.delta.bin").read_bytes(), dtype="<f4")
    dense = dense.reshape(dims["d_out"], dims["d_in"])
    weight_doc = json.loads(weights_path.read_text())["weights"]
    tasks = sorted(CASE_STUDY_WEIGHTS)
    deltas, weights = [], []
    for task in tasks:
        adapter = load_adapter(bank / task)
        deltas.append(delta(adapter.pairs["m"], adapter.alpha))
        weights.append(weight_doc[task])
    want = np.array(ties_reference(deltas, weights, 0.5), dtype=np.float64)
    assert np.allclose(dense, want.astype(np.float32), atol=0.0)
    # every zero of the union-of-masks oracle is zero in the output
    assert np.count_nonzero(dense) == np.count_nonzero(want)


def test_merge_corrupt_weights(tmp_path, rng):
    bank = write_adapter_bank(tmp_path, rng, CASE_STUDY_WEIGHTS)
    bad = tmp_path / "bad.json"
    bad.write_text("{oops", encoding="utf-8")
    assert main(["merge", "--strategy", "linear", "--weights", str(bad),
                 "--adapters", str(bank), "--out", str(tmp_path / "o")]) == 1


def test_merge_missing_adapter_exits_4(tmp_path, rng, capsys):
    weights_path = write_weights_file(tmp_path)
    bank = write_adapter_bank(tmp_path, rng, [t for t in CASE_STUDY_WEIGHTS if t != "piqa"])
    assert main(["merge", "--strategy", "linear", "--weights", str(weights_path),
                 "--adapters", str(bank), "--out", str(tmp_path / "o")]) == 4
    assert "piqa" in capsys.readouterr().err


def test_merge_renormalize_missing(tmp_path, rng):
    weights_path = write_weights_file(tmp_path)
    tasks = [t for t in CASE_STUDY_WEIGHTS if t != "piqa"]
    bank = write_adapter_bank(tmp_path, rng, tasks)
    out = tmp_path / "merged"
    code = main(["merge", "--strategy", "linear", "--weights", str(weights_path),
                 "--adapters", str(bank), "--out", str(out), "--renormalize-missing"])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    merged_weights = manifest["provenance"]["weights"]
    assert set(merged_weights) == set(tasks)
    assert abs(math.fsum(merged_weights.values()) - 1.0) <= 1e-9


def test_merge_shape_conflict_exits_5(tmp_path, rng):
    weights_path = tmp_path / "w.json"
    weights_path.write_text(json.dumps({"weights": {"t1": 0.5, "t2": 0.5}}), encoding="utf-8")
    root = tmp_path / "adapters"
    save_adapter(random_adapter(rng, "a1", "t1", rank=4, d_in=8, d_out=8), root / "t1")
    save_adapter(random_adapter(rng, "a2", "t2", rank=4, d_in=9, d_out=8), root / "t2")
    assert main(["merge", "--strategy", "linear", "--weights", str(weights_path),
                 "--adapters", str(root), "--out", str(tmp_path / "o")]) == 5


def test_merge_rerun_byte_identical(tmp_path, rng):
    weights_path = write_weights_file(tmp_path)
    bank = write_adapter_bank(tmp_path, rng, CASE_STUDY_WEIGHTS)
    outs = []
    for name in ("m1", "m2"):
        out = tmp_path / name
        assert main(["merge", "--strategy", "magnitude_prune", "--weights", str(weights_path),
                     "--adapters", str(bank), "--out", str(out)]) == 0
        outs.append(out)
    for f in sorted(p.name for p in outs[0].iterdir()):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def bench_config(tmp_path, **overrides):
    config = {"n_tasks": 4, "n_families": 2, "examples_per_task": 30, "dim": 64,
              "rank": 3, "seed": 7, "n_queries": 8, "k": 20}
    config.update(overrides)
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def test_bench_command(tmp_path, capsys):
    config = bench_config(tmp_path)
    out = tmp_path / "report.json"
    csv_out = tmp_path / "report.csv"
    assert main(["bench", "--config", str(config), "--out", str(out), "--csv", str(csv_out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["queries"]) == 8
    assert csv_out.read_text().count("\n") == 9  # header + one row per query
    assert "median in-family mass" in capsys.readouterr().out


def test_bench_rerun_byte_identical(tmp_path):
    config = bench_config(tmp_path)
    a, b = tmp_path / "ra.json", tmp_path / "rb.json"
    assert main(["bench", "--config", str(config), "--out", str(a)]) == 0
    assert main(["bench", "--config", str(config), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_inspect_snapshot_and_adapter(snapshot, tmp_path, rng, capsys):
    assert main(["inspect", str(snapshot)]) == 0
    out = capsys.readouterr().out
    assert "LFIX snapshot: 10 records" in out
    save_adapter(random_adapter(rng, "ad", "t", rank=2, d_in=3, d_out=3), tmp_path / "ad")
    assert main(["inspect", str(tmp_path / "ad")]) == 0
    assert '"rank": 2' in capsys.readouterr().out
    assert main(["inspect", str(tmp_path / "missing.bin")]) == 1


def test_usage_errors_exit_1(snapshot, capsys):
    assert main(["weights", "--db"]) == 1
    assert main(["merge", "--strategy", "svd", "--weights", "x", "--adapters", "y", "--out", "z"]) == 1
    assert main([]) == 1
    assert main(["weights", "--db", str(snapshot), "--query", "hi", "--k", "0"]) == 1
    assert main(["weights", "--db", str(snapshot), "--query", "hi", "--p", "1.5"]) == 1


def test_ingest_22_tasks_of_2000_rows(tmp_path, capsys):
    # full-scale corpus shape: 22 tasks capped at 2000 rows each
    tasks = []
    for t in range(22):
        csv_path = tmp_path / f"task{t}.csv"
        # 8 words + the [T] separator token = odd token count per row, so the
        # +/-1 bucket sums can never fully cancel even at a tiny dim
        csv_path.write_text(
            "text\n"
            + "\n".join(f"task {t} row {i} has words w{i % 17} w{i % 5}" for i in range(2100)),
            encoding="utf-8",
        )
        tasks.append(
            {
                "task_name": f"task{t:02d}",
                "hint": "",
                "text_columns": ["text"],
                "separator_labels": ["[T]"],
                "csv_path": str(csv_path),
            }
        )
    config_path = tmp_path / "ingest.json"
    config_path.write_text(
        json.dumps({"provider": {"kind": "hashing", "dim": 16}, "sample_cap": 2000, "tasks": tasks}),
        encoding="utf-8",
    )
    db = tmp_path / "big.lfix"
    assert main(["ingest", "--config", str(config_path), "--db", str(db)]) == 0
    assert "ingested 44000 vectors" in capsys.readouterr().out
    counts = VectorIndex.load(db).task_counts()
    assert len(counts) == 22 and all(c == 2000 for c in counts.values())
