from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from ncli_ground.cli import main
from ncli_ground.dataset import save_corpus, synth_corpus


@pytest.fixture
def corpus_path(tmp_path: Path) -> Path:
    path = tmp_path / "corpus.jsonl"
    save_corpus(*synth_corpus(seed=7, n_dialogs=8, overlap_tokens=3), path)
    return path


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_stats_prints_corpus_stats_json(capsys, corpus_path):
    rc, out, _ = run_cli(capsys, "stats", str(corpus_path))
    assert rc == 0
    stats = json.loads(out)
    assert stats["dialog_count"] == 8
    assert stats["average_rounds"] >= 2.0


def test_stats_missing_file_is_validation_error(capsys, tmp_path):
    rc, _, err = run_cli(capsys, "stats", str(tmp_path / "nope.jsonl"))
    assert rc == 1
    assert "error" in err


def test_stats_malformed_corpus_reports_line(capsys, tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("{broken\n", encoding="utf-8")
    rc, _, err = run_cli(capsys, "stats", str(path))
    assert rc == 1
    assert "line 1" in err


def test_unknown_subcommand_exits_one(capsys):
    rc, _, _ = run_cli(capsys, "frobnicate")
    assert rc == 1


def test_precompute_requires_cache_dir(capsys, corpus_path, monkeypatch):
    monkeypatch.delenv("NCLI_CACHE_DIR", raising=False)
    rc, _, err = run_cli(capsys, "precompute", "--corpus", str(corpus_path))
    assert rc == 1
    assert "cache-dir" in err


def test_precompute_counts_and_idempotence(capsys, corpus_path, tmp_path):
    cache = str(tmp_path / "cache")
    rc, out, _ = run_cli(capsys, "precompute", "--corpus", str(corpus_path), "--cache-dir", cache)
    assert rc == 0
    first = json.loads(out)
    assert first["stored"] == first["provider_calls"] > 0
    rc, out, _ = run_cli(capsys, "precompute", "--corpus", str(corpus_path), "--cache-dir", cache)
    assert rc == 0
    second = json.loads(out)
    assert second["stored"] == 0
    assert second["provider_calls"] == 0


def test_precompute_cache_dir_from_environment(capsys, corpus_path, tmp_path, monkeypatch):
    monkeypatch.setenv("NCLI_CACHE_DIR", str(tmp_path / "envcache"))
    rc, out, _ = run_cli(capsys, "precompute", "--corpus", str(corpus_path))
    assert rc == 0
    assert json.loads(out)["cache_dir"].endswith("envcache")


def _train(capsys, corpus_path, tmp_path, *extra):
    heads = tmp_path / "heads.json"
    rc, out, err = run_cli(
        capsys,
        "train",
        "--corpus", str(corpus_path),
        "--alpha", "6", "--beta", "2", "--gamma", "2",
        "--lr", "0.1", "--epochs", "5",
        "--out", str(heads),
        *extra,
    )
    return rc, out, err, heads


def test_train_writes_heads_and_loss_summary(capsys, corpus_path, tmp_path):
    rc, out, _, heads = _train(capsys, corpus_path, tmp_path)
    assert rc == 0
    summary = json.loads(out)
    assert summary["final_loss"] < summary["initial_loss"]
    obj = json.loads(heads.read_text())
    assert set(obj) == {"pg", "kg"}
    assert set(obj["kg"]) == {"w1", "w2", "bias"}


def test_train_rejects_bad_hyperparameters(capsys, corpus_path, tmp_path):
    heads = str(tmp_path / "h.json")
    base = ["train", "--corpus", str(corpus_path), "--out", heads]
    rc, _, err = run_cli(capsys, *base, "--alpha", "-1", "--beta", "2", "--gamma", "2")
    assert rc == 1 and "alpha" in err
    rc, _, _ = run_cli(capsys, *base, "--alpha", "1", "--beta", "1", "--gamma", "1", "--epochs", "0")
    assert rc == 1
    rc, _, _ = run_cli(capsys, *base, "--alpha", "1", "--beta", "1", "--gamma", "1", "--lr", "0")
    assert rc == 1


def test_corrupt_cache_is_internal_failure(capsys, corpus_path, tmp_path):
    cache = tmp_path / "cache"
    rc, _, _ = run_cli(
        capsys, "precompute", "--corpus", str(corpus_path), "--cache-dir", str(cache)
    )
    assert rc == 0
    victim = next(p for p in cache.glob("*.ncli"))
    victim.write_bytes(b"scrambled")
    rc, _, _, heads = _train(capsys, corpus_path, tmp_path)
    assert rc == 0
    rc, _, err = run_cli(
        capsys,
        "ground",
        "--corpus", str(corpus_path),
        "--heads", str(heads),
        "--cache-dir", str(cache),
        "--out", str(tmp_path / "g.jsonl"),
    )
    assert rc == 2
    assert "internal failure" in err


def test_ground_writes_jsonl_records(capsys, corpus_path, tmp_path):
    rc, _, _, heads = _train(capsys, corpus_path, tmp_path)
    assert rc == 0
    grounded = tmp_path / "grounded.jsonl"
    rc, out, _ = run_cli(
        capsys,
        "ground",
        "--corpus", str(corpus_path),
        "--heads", str(heads),
        "--out", str(grounded),
    )
    assert rc == 0
    records = [json.loads(line) for line in grounded.read_text().splitlines()]
    assert json.loads(out)["turns"] == len(records)
    first = records[0]
    assert set(first) == {
        "dialog_id", "turn_index", "persona_probs", "selected_personas",
        "knowledge_probs", "selected_knowledge", "lm_input",
    }
    assert first["lm_input"][0] == "<knowledge>"
    assert first["lm_input"][-1] == "<eos>"


def test_ground_dump_sims_includes_matrices(capsys, corpus_path, tmp_path):
    rc, _, _, heads = _train(capsys, corpus_path, tmp_path)
    grounded = tmp_path / "grounded.jsonl"
    rc, _, _ = run_cli(
        capsys,
        "ground",
        "--corpus", str(corpus_path),
        "--heads", str(heads),
        "--out", str(grounded),
        "--dump-sims",
    )
    assert rc == 0
    record = json.loads(grounded.read_text().splitlines()[0])
    assert set(record["sims"]) == {"s_pu", "s_pk", "s_ku", "s_kp"}
    assert record["sims"]["s_pu"]["x_source"] == "persona"


def test_ground_missing_heads_file(capsys, corpus_path, tmp_path):
    rc, _, err = run_cli(
        capsys,
        "ground",
        "--corpus", str(corpus_path),
        "--heads", str(tmp_path / "absent.json"),
        "--out", str(tmp_path / "g.jsonl"),
    )
    assert rc == 1
    assert "heads" in err


def test_eval_reports_metrics(capsys, corpus_path, tmp_path):
    _, _, _, heads = _train(capsys, corpus_path, tmp_path)
    grounded = tmp_path / "grounded.jsonl"
    run_cli(capsys, "ground", "--corpus", str(corpus_path), "--heads", str(heads), "--out", str(grounded))
    rc, out, _ = run_cli(capsys, "eval", "--grounded", str(grounded), "--corpus", str(corpus_path))
    assert rc == 0
    report = json.loads(out)
    assert report["perplexity"] is None
    assert report["kg_accuracy"] >= 90.0
    assert 0.0 <= report["rouge1"] <= 1.0
    assert report["turn_count"] == sum(1 for _ in grounded.read_text().splitlines())


def test_eval_with_nll_file(capsys, corpus_path, tmp_path):
    import math

    _, _, _, heads = _train(capsys, corpus_path, tmp_path)
    grounded = tmp_path / "grounded.jsonl"
    run_cli(capsys, "ground", "--corpus", str(corpus_path), "--heads", str(heads), "--out", str(grounded))
    nll_file = tmp_path / "nlls.jsonl"
    nll_file.write_text(
        json.dumps({"dialog_id": "dlg00000", "turn_index": 0, "nlls": [math.log(2), math.log(8)]}) + "\n"
    )
    rc, out, _ = run_cli(
        capsys,
        "eval", "--grounded", str(grounded), "--corpus", str(corpus_path), "--nll-file", str(nll_file),
    )
    assert rc == 0
    assert json.loads(out)["perplexity"] == pytest.approx(4.0, rel=1e-12)


def test_eval_prefers_response_field_as_hypothesis(capsys, corpus_path, tmp_path):
    from ncli_ground.dataset import load_corpus

    _, _, _, heads = _train(capsys, corpus_path, tmp_path)
    grounded = tmp_path / "grounded.jsonl"
    run_cli(capsys, "ground", "--corpus", str(corpus_path), "--heads", str(heads), "--out", str(grounded))
    turns, _ = load_corpus(corpus_path)
    records = [json.loads(line) for line in grounded.read_text().splitlines()]
    for record, turn in zip(records, turns):
        record["response"] = turn.answer  # a generator echoing gold answers
    grounded.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    rc, out, _ = run_cli(capsys, "eval", "--grounded", str(grounded), "--corpus", str(corpus_path))
    assert rc == 0
    report = json.loads(out)
    assert report["f1"] == 1.0
    assert report["rouge1"] == 1.0
    assert report["rougeL"] == 1.0


def test_eval_misaligned_grounded_rejected(capsys, corpus_path, tmp_path):
    _, _, _, heads = _train(capsys, corpus_path, tmp_path)
    grounded = tmp_path / "grounded.jsonl"
    run_cli(capsys, "ground", "--corpus", str(corpus_path), "--heads", str(heads), "--out", str(grounded))
    lines = grounded.read_text().splitlines()
    grounded.write_text("\n".join(lines[:-1]) + "\n")
    rc, _, err = run_cli(capsys, "eval", "--grounded", str(grounded), "--corpus", str(corpus_path))
    assert rc == 1
    assert "grounded" in err


def test_train_ground_eval_byte_deterministic(capsys, corpus_path, tmp_path):
    outputs = []
    for tag in ("one", "two"):
        heads = tmp_path / f"heads-{tag}.json"
        grounded = tmp_path / f"grounded-{tag}.jsonl"
        rc1, train_out, _ = run_cli(
            capsys,
            "train",
            "--corpus", str(corpus_path),
            "--alpha", "6", "--beta", "2", "--gamma", "2",
            "--lr", "0.1", "--epochs", "5",
            "--seed", "3",
            "--out", str(heads),
        )
        rc2, ground_out, _ = run_cli(
            capsys,
            "ground",
            "--corpus", str(corpus_path), "--heads", str(heads),
            "--seed", "3",
            "--out", str(grounded),
        )
        rc3, eval_out, _ = run_cli(
            capsys, "eval", "--grounded", str(grounded), "--corpus", str(corpus_path)
        )
        assert (rc1, rc2, rc3) == (0, 0, 0)
        outputs.append(
            (train_out, heads.read_bytes(), ground_out, grounded.read_bytes(), eval_out)
        )
    # Written artifacts and the eval report must match byte for byte; the
    # train/ground stdout lines embed the differing --out paths.
    assert outputs[0][1] == outputs[1][1]
    assert outputs[0][3] == outputs[1][3]
    assert outputs[0][4] == outputs[1][4]
    assert json.loads(outputs[0][0])["final_loss"] == json.loads(outputs[1][0])["final_loss"]
    assert json.loads(outputs[0][2])["turns"] == json.loads(outputs[1][2])["turns"]


def test_sweep_default_grid_runs_and_sorts(capsys, corpus_path):
    rc, out, _ = run_cli(capsys, "sweep", "--corpus", str(corpus_path), "--epochs", "2")
    assert rc == 0
    rows = json.loads(out)
    assert len(rows) == 6
    assert {(r["alpha"], r["beta"], r["gamma"]) for r in rows} == {
        (2, 2, 6), (2, 4, 4), (2, 6, 2), (4, 2, 4), (4, 4, 2), (6, 2, 2),
    }
    accuracies = [r["report"]["kg_accuracy"] for r in rows]
    assert accuracies == sorted(accuracies, reverse=True)


def test_sweep_rejects_constraint_violation_before_training(capsys, corpus_path):
    rc, _, err = run_cli(
        capsys, "sweep", "--corpus", str(corpus_path), "--point", "1,1,9", "--epochs", "1"
    )
    assert rc == 1
    assert "alpha+beta+gamma" in err
    rc, out, _ = run_cli(
        capsys, "sweep", "--corpus", str(corpus_path), "--point", "1,1,8", "--epochs", "1"
    )
    assert rc == 0
    assert len(json.loads(out)) == 1


def test_sweep_deterministic_bytes(capsys, corpus_path):
    results = []
    for _ in range(2):
        rc, out, _ = run_cli(
            capsys, "sweep", "--corpus", str(corpus_path), "--epochs", "2", "--seed", "5"
        )
        assert rc == 0
        results.append(out)
    assert results[0] == results[1]


def test_bench_reports_and_warm_invariants(capsys, corpus_path, tmp_path):
    rc, out, _ = run_cli(
        capsys, "bench", "--corpus", str(corpus_path), "--cache-dir", str(tmp_path / "bc")
    )
    assert rc == 0
    payload = json.loads(out)
    assert payload["outputs_identical"] is True
    by_variant = {r["variant"]: r for r in payload["variants"]}
    assert set(by_variant) == {"no-cache", "cold", "warm"}
    assert by_variant["warm"]["provider_calls"] == 0
    assert by_variant["cold"]["provider_calls"] > 0
    assert by_variant["no-cache"]["provider_calls"] > by_variant["cold"]["provider_calls"]
    assert all(r["turns_processed"] == by_variant["warm"]["turns_processed"] for r in payload["variants"])


def test_module_invocation_smoke(corpus_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ncli_ground", "stats", str(corpus_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["dialog_count"] == 8
