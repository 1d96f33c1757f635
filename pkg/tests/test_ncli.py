from __future__ import annotations

import numpy as np
import pytest

from ncli_ground.embedstore import ShapeError, TokenMatrix
from ncli_ground.ncli import ncli, ncolbert


def tm(vectors: np.ndarray) -> TokenMatrix:
    """TokenMatrix from float32 unit rows (tests construct rows directly)."""
    vectors = np.asarray(vectors, dtype=np.float32)
    return TokenMatrix(
        text_hash="00" * 8,
        tokens=tuple(f"t{i}" for i in range(vectors.shape[0])),
        vectors=vectors,
    )


def unit_rows(rng: np.random.Generator, s: int, d0: int) -> np.ndarray:
    rows = rng.normal(size=(s, d0))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def ncolbert_oracle(x: np.ndarray, y: np.ndarray) -> float:
    """Nested-loop evaluation: mean over x rows of the max clamped dot."""
    total = 0.0
    for i in range(x.shape[0]):
        best = -2.0
        for j in range(y.shape[0]):
            dot = 0.0
            for k in range(x.shape[1]):
                dot += float(x[i, k]) * float(y[j, k])
            dot = min(1.0, max(-1.0, dot))
            if dot > best:
                best = dot
        total += best
    return total / x.shape[0]


def basis(i: int, d0: int = 4) -> np.ndarray:
    row = np.zeros((1, d0), dtype=np.float32)
    row[0, i] = 1.0
    return row


def test_single_token_self_similarity_is_one():
    x = tm(basis(0))
    assert ncolbert(x, x) == pytest.approx(1.0, abs=1e-9)


def test_orthogonal_tokens_score_zero():
    assert ncolbert(tm(basis(0)), tm(basis(1))) == pytest.approx(0.0, abs=1e-12)


def test_matched_plus_orthogonal_token_halves_score():
    x = tm(np.vstack([basis(0), basis(1)]))
    y = tm(basis(0))
    assert ncolbert(x, y) == pytest.approx(0.5, abs=1e-9)


def test_asymmetry_witness_pair():
    matched = tm(basis(0))
    matched_plus_orthogonal = tm(np.vstack([basis(0), basis(1)]))
    assert ncolbert(matched, matched_plus_orthogonal) == pytest.approx(1.0, abs=1e-9)
    assert ncolbert(matched_plus_orthogonal, matched) == pytest.approx(0.5, abs=1e-9)


def test_kernel_matches_nested_loop_oracle():
    rng = np.random.default_rng(711)
    for _ in range(50):
        x = unit_rows(rng, int(rng.integers(1, 12)), 8)
        y = unit_rows(rng, int(rng.integers(1, 12)), 8)
        assert ncolbert(tm(x), tm(y)) == pytest.approx(ncolbert_oracle(x, y), abs=1e-9)


def test_length_normalization_duplication_invariance():
    rng = np.random.default_rng(5)
    x = unit_rows(rng, 4, 8)
    y = unit_rows(rng, 6, 8)
    base = ncolbert(tm(x), tm(y))
    tripled = ncolbert(tm(np.vstack([x, x, x])), tm(y))
    assert abs(base - tripled) < 1e-9


def test_permutation_invariance_exact():
    rng = np.random.default_rng(6)
    x = unit_rows(rng, 5, 8)
    y = unit_rows(rng, 7, 8)
    base = ncolbert(tm(x), tm(y))
    perm_x = ncolbert(tm(x[::-1].copy()), tm(y))
    perm_y = ncolbert(tm(x), tm(y[np.random.default_rng(1).permutation(7)]))
    assert perm_x == base
    assert perm_y == base


def test_appending_to_y_never_decreases_score():
    rng = np.random.default_rng(8)
    x = unit_rows(rng, 4, 8)
    y = unit_rows(rng, 3, 8)
    base = ncolbert(tm(x), tm(y))
    for _ in range(20):
        extra = unit_rows(rng, 1, 8)
        grown = ncolbert(tm(x), tm(np.vstack([y, extra])))
        assert grown >= base - 1e-12
        y = np.vstack([y, extra])
        base = grown


def test_scores_bounded_in_unit_interval():
    rng = np.random.default_rng(9)
    for _ in range(50):
        x = unit_rows(rng, int(rng.integers(1, 10)), 6)
        y = unit_rows(rng, int(rng.integers(1, 10)), 6)
        score = ncolbert(tm(x), tm(y))
        assert -1.0 <= score <= 1.0


def test_kernel_dimension_mismatch():
    with pytest.raises(ShapeError):
        ncolbert(tm(basis(0, 4)), tm(basis(0, 8)))


def test_ncli_shape_persona_vs_single_utterance():
    rng = np.random.default_rng(10)
    personas = [tm(unit_rows(rng, 3, 8)) for _ in range(5)]
    utterance = [tm(unit_rows(rng, 6, 8))]
    sim = ncli(personas, utterance, "persona", "utterance")
    assert (sim.rows, sim.cols) == (5, 1)
    assert sim.x_source == "persona"


def test_ncli_identity_pattern_on_distinct_orthogonal_tokens():
    entries = [tm(basis(i, 4)) for i in range(4)]
    sim = ncli(entries, entries)
    assert np.allclose(sim.values, np.eye(4), atol=1e-12)


def test_ncli_equals_elementwise_kernel():
    rng = np.random.default_rng(11)
    xs = [tm(unit_rows(rng, int(rng.integers(1, 6)), 8)) for _ in range(3)]
    ys = [tm(unit_rows(rng, int(rng.integers(1, 6)), 8)) for _ in range(2)]
    sim = ncli(xs, ys)
    for i in range(3):
        for j in range(2):
            assert sim.values[i, j] == ncolbert(xs[i], ys[j])


def test_ncli_error_carries_cell_location():
    xs = [tm(basis(0, 4)), tm(basis(0, 8))]
    ys = [tm(basis(0, 4))]
    with pytest.raises(ShapeError, match=r"cell \(1, 0\)"):
        ncli(xs, ys)


def test_ncli_rejects_empty_lists():
    with pytest.raises(ShapeError):
        ncli([], [tm(basis(0))])


def test_sim_matrix_json_round_trip():
    sim = ncli([tm(basis(0)), tm(basis(1))], [tm(basis(0))], "persona", "utterance")
    obj = sim.to_json()
    assert obj["x_source"] == "persona"
    assert obj["values"] == [[1.0], [0.0]]
