"""Seeded matrices shared by the property and acceptance tests."""

from __future__ import annotations

import numpy as np

from rankedge.matrix import build_matrix

CORPUS_SEED = 20240917
CORPUS_SIZE = 20


def _draw(rng: np.random.Generator, n: int, kind: int) -> np.ndarray:
    if kind == 0:
        return rng.normal(size=(n, n))
    if kind == 1:
        return rng.exponential(size=(n, n))
    if kind == 2:
        return rng.integers(-3, 4, size=(n, n)).astype(float)
    if kind == 3:
        return rng.standard_t(3, size=(n, n))
    # one large entry on a small background
    a = rng.normal(scale=0.1, size=(n, n))
    a[rng.integers(n), rng.integers(n)] += 5.0
    return a


def corpus_matrices():
    """Twenty nondegenerate matrices with n cycling through 4..7."""
    rng = np.random.default_rng(CORPUS_SEED)
    out = []
    while len(out) < CORPUS_SIZE:
        i = len(out)
        m = build_matrix(_draw(rng, 4 + i % 4, i % 5))
        if not m.degenerate:
            out.append(m)
    return out


def random_matrix(seed: int, n: int):
    return build_matrix(np.random.default_rng(seed).normal(size=(n, n)))
