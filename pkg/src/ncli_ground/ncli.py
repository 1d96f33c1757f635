"""Length-normalized late-interaction similarity (NColBERT / NCLI).

``ncolbert(x, y)`` averages, over x's tokens, the maximum dot product
against y's tokens: MaxSim normalized by |x|, so longer x cannot dominate
by summation alone. With a single-token x it reduces to plain ColBERT
MaxSim. The measure is asymmetric (max runs over y).

``ncli(X, Y)`` is the pairwise NColBERT matrix between two candidate
lists. Both are pure functions; matrix cells are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedstore import ShapeError, TokenMatrix


@dataclass(frozen=True, eq=False)
class SimMatrix:
    """Pairwise similarity matrix between two candidate lists."""

    values: np.ndarray  # (n_x, n_y) float64, each value in [-1, 1]
    x_source: str
    y_source: str

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])

    def mean_rows(self) -> np.ndarray:
        """Row means: average similarity of each x entry over all of y."""
        return self.values.mean(axis=1)

    def to_json(self) -> dict:
        return {
            "x_source": self.x_source,
            "y_source": self.y_source,
            "values": [[float(v) for v in row] for row in self.values],
        }


def ncolbert(x: TokenMatrix, y: TokenMatrix) -> float:
    """(1/|x|) * sum over x tokens of max dot product against y tokens.

    Accumulation runs in float64. Token dot products are clamped to
    [-1, 1]: rows are unit vectors up to float32 rounding, and the clamp
    absorbs that rounding so scores stay exactly within bounds. The
    per-token maxima are summed in sorted order — a canonical order makes
    the score bit-identical under any permutation of x's tokens.
    """
    if x.d0 != y.d0:
        raise ShapeError(f"x has d0={x.d0}, y has d0={y.d0}")
    sims = x.vectors.astype(np.float64) @ y.vectors.astype(np.float64).T
    np.clip(sims, -1.0, 1.0, out=sims)
    return float(np.sort(sims.max(axis=1)).mean())


def ncli(xs: list[TokenMatrix], ys: list[TokenMatrix], x_source: str = "x", y_source: str = "y") -> SimMatrix:
    """Pairwise NColBERT over two candidate lists: values[i][j] = ncolbert(xs[i], ys[j])."""
    if not xs or not ys:
        raise ShapeError("candidate lists must be non-empty")
    values = np.empty((len(xs), len(ys)), dtype=np.float64)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            try:
                values[i, j] = ncolbert(x, y)
            except ShapeError as exc:
                raise ShapeError(f"cell ({i}, {j}): {exc}") from None
    return SimMatrix(values=values, x_source=x_source, y_source=y_source)
