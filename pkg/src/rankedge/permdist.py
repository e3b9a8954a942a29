"""Exact and Monte Carlo null distributions of T_A, plus closed-form moments."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateError, InputError, SizeError
from .matrix import ScoreMatrix, build_product_matrix, square_triple_sum

DEFAULT_CUTOFF = 10
MAX_CUTOFF = 11
MERGE_RTOL = 1e-11
MERGE_ATOL = 1e-14
MC_CHUNK = 1 << 16
# permutations of the trailing block are materialised once; longer prefixes are unranked
_BLOCK = 8


@dataclass(frozen=True)
class StepCdf:
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        for name in ("values", "probs"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        cdf = np.cumsum(self.probs)
        cdf.setflags(write=False)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    @property
    def atoms(self) -> list:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    def eval(self, z):
        """Right-continuous F(z)."""
        idx = np.searchsorted(self.values, z, side="right")
        out = np.where(idx > 0, self._cdf[np.maximum(idx - 1, 0)], 0.0)
        return out if np.ndim(out) else float(out)

    def left_limit(self, z):
        """F(z-)."""
        idx = np.searchsorted(self.values, z, side="left")
        out = np.where(idx > 0, self._cdf[np.maximum(idx - 1, 0)], 0.0)
        return out if np.ndim(out) else float(out)

    def mass_at(self, z: float) -> float:
        return float(self.eval(z) - self.left_limit(z))

    def moment(self, k: int) -> float:
        return float(np.sum(self.probs * self.values**k))

    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        mu = self.mean()
        return float(np.sum(self.probs * (self.values - mu) ** 2))

    def csv_rows(self) -> Iterable[tuple]:
        return zip(self.values.tolist(), self.probs.tolist(), self._cdf.tolist())


def merge_atoms(values: np.ndarray, weights: Optional[np.ndarray] = None,
                rtol: float = MERGE_RTOL, atol: float = MERGE_ATOL) -> StepCdf:
    """Collapse nearly equal values into atoms; weights default to equal mass."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InputError("no values to build a distribution from")
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float).ravel()
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    gap = np.diff(v)
    tol = np.maximum(rtol * np.maximum(np.abs(v[1:]), np.abs(v[:-1])), atol)
    starts = np.concatenate(([0], np.nonzero(gap > tol)[0] + 1))
    mass = np.add.reduceat(w, starts)
    rep = np.add.reduceat(v * w, starts) / mass
    return StepCdf(rep, mass / w.sum())


def unrank_permutation(rank: int, n: int) -> list:
    """Lexicographic rank -> permutation of 0..n-1 (factorial number system)."""
    if not 0 <= rank < math.factorial(n):
        raise InputError(f"rank {rank} out of range for n={n}")
    pool = list(range(n))
    out = []
    for pos in range(n, 0, -1):
        f = math.factorial(pos - 1)
        d, rank = divmod(rank, f)
        out.append(pool.pop(d))
    return out


def _block_perms(m: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(m))), dtype=np.intp).reshape(-1, m)


def enumerate_values(a: np.ndarray, workers: int = 1) -> np.ndarray:
    """T = sum_i a[i, pi(i)] for every permutation, in lexicographic order."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    m = min(n, _BLOCK)
    p = n - m
    base = _block_perms(m)
    nblocks = math.factorial(n) // math.factorial(m)
    tail_rows = np.arange(p, n)

    def block(b: int) -> np.ndarray:
        if p:
            # the b-th block shares the prefix of the permutation ranked b * m!
            head = unrank_permutation(b * math.factorial(m), n)[:p]
        else:
            head = []
        rest = np.array(sorted(set(range(n)) - set(head)), dtype=np.intp)
        prefix = 0.0
        for i, j in enumerate(head):
            prefix += a[i, j]
        cols = rest[base]
        return prefix + a[tail_rows[None, :], cols].sum(axis=1)

    if workers <= 1 or nblocks == 1:
        parts = [block(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block, range(nblocks)))
    return np.concatenate(parts)


def _check_cutoff(n: int, cutoff: int) -> None:
    if cutoff > MAX_CUTOFF:
        raise SizeError(f"enumeration cutoff is capped at {MAX_CUTOFF}")
    if n > cutoff:
        raise SizeError(
            f"n={n} exceeds the enumeration cutoff {cutoff}; use the Monte Carlo method"
        )


def exact_distribution(m: ScoreMatrix, standardized: bool = False,
                       cutoff: int = DEFAULT_CUTOFF, workers: int = 1) -> StepCdf:
    _check_cutoff(m.n, cutoff)
    a = m.require_std() if standardized else m.entries
    return merge_atoms(enumerate_values(a, workers))


SUBSET_CAP = 5_000_000


def two_sample_split(regression: np.ndarray) -> Optional[tuple]:
    """(low, high, indicator of high) when the regression takes exactly two values."""
    e = np.asarray(regression, dtype=float).ravel()
    vals = np.unique(e)
    if vals.size != 2:
        return None
    return float(vals[0]), float(vals[1]), e == vals[1]


def subset_distribution(regression: Sequence[float], scores: Sequence[float],
                        standardized: bool = False) -> StepCdf:
    """Exact law of sum_i e_i d_pi(i) for a two-valued regression.

    With e_i = c + b 1{i in first sample} the statistic is c sum(d) + b times
    the score sum over a uniformly random subset of size m, so C(n, m)
    subsets replace the n! permutations.
    """
    e = np.asarray(regression, dtype=float).ravel()
    d = np.asarray(scores, dtype=float).ravel()
    if e.size != d.size:
        raise InputError("regression and scores differ in length")
    split = two_sample_split(e)
    if split is None:
        raise InputError("subset enumeration needs a regression with exactly two values")
    low, high, mask = split
    n, m = e.size, int(mask.sum())
    if math.comb(n, m) > SUBSET_CAP:
        raise SizeError(f"C({n},{m}) subsets exceed the cap {SUBSET_CAP}")
    idx = np.array(list(itertools.combinations(range(n), m)), dtype=np.intp).reshape(-1, m)
    values = low * d.sum() + (high - low) * d[idx].sum(axis=1)
    if standardized:
        sm = build_product_matrix(e, d)
        if sm.degenerate:
            raise DegenerateError("sigma_A = 0")
        values = (values - sm.mu) / sm.sigma
    return merge_atoms(values)


def chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    """Counter-based stream for chunk c of a run seeded with seed."""
    ss = np.random.SeedSequence([int(seed) % (1 << 64), int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


def random_permutations(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """count uniform permutations of 0..n-1, one per row, by Fisher-Yates."""
    perms = np.tile(np.arange(n, dtype=np.intp), (count, 1))
    rows = np.arange(count)
    for i in range(n - 1, 0, -1):
        j = rng.integers(0, i + 1, size=count)
        tmp = perms[rows, j].copy()
        perms[rows, j] = perms[:, i]
        perms[:, i] = tmp
    return perms


def mc_values(a: np.ndarray, draws: int, seed: int, workers: int = 1) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if draws < 1:
        raise InputError("draws must be positive")
    nchunks = -(-draws // MC_CHUNK)
    rows = np.arange(n)

    def chunk(c: int) -> np.ndarray:
        size = min(MC_CHUNK, draws - c * MC_CHUNK)
        perms = random_permutations(chunk_generator(seed, c), size, n)
        return a[rows[None, :], perms].sum(axis=1)

    if workers <= 1 or nchunks == 1:
        parts = [chunk(c) for c in range(nchunks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk, range(nchunks)))
    return np.concatenate(parts)


def mc_distribution(m: ScoreMatrix, draws: int, seed: int, standardized: bool = False,
                    workers: int = 1) -> StepCdf:
    a = m.require_std() if standardized else m.entries
    return merge_atoms(mc_values(a, draws, seed, workers))


@dataclass(frozen=True)
class ExactMoments:
    third: float
    fourth: Optional[float]


def moments_exact(m: ScoreMatrix) -> ExactMoments:
    """E(T^3) and E(T^4) of the standardized statistic in closed form.

    The fourth moment needs n >= 4 and is None for n = 3.
    """
    n = m.n
    if n < 3:
        raise SizeError("the third moment formula needs n >= 3")
    ah = m.require_std()
    third = n / ((n - 1) * (n - 2)) * float(np.sum(ah**3))
    if n < 4:
        return ExactMoments(third, None)
    gram = ah.T @ ah
    quad = float(np.sum(gram**2))
    fourth = (
        3 * (n * n - 3 * n + 1) * (n - 1) / (n * (n - 2) * (n - 3))
        - 3 / ((n - 2) * (n - 3)) * square_triple_sum(ah)
        + n * (n + 1) / ((n - 1) * (n - 2) * (n - 3)) * float(np.sum(ah**4))
        + 6 / (n * (n - 1) * (n - 2) * (n - 3)) * quad
    )
    return ExactMoments(third, fourth)


@dataclass(frozen=True)
class SimplifiedMoments:
    third: float
    third_remainder_bound: float
    fourth: Optional[float]
    fourth_remainder_bound: Optional[float]


def moments_simplified(m: ScoreMatrix) -> SimplifiedMoments:
    """Leading terms of E(T^3), E(T^4) with the remainder bounds 11 beta/n^2, 336 delta/n^2."""
    n = m.n
    if n < 3:
        raise SizeError("needs n >= 3")
    ah = m.require_std()
    beta = float(np.sum(np.abs(ah) ** 3))
    delta = float(np.sum(ah**4))
    third = float(np.sum(ah**3)) / n
    if n < 4:
        return SimplifiedMoments(third, 11 * beta / n**2, None, None)
    fourth = 3 + 3 / n - 3 / n**2 * square_triple_sum(ah) + delta / n
    return SimplifiedMoments(third, 11 * beta / n**2, fourth, 336 * delta / n**2)


def require_nondegenerate(m: ScoreMatrix) -> None:
    if m.degenerate:
        raise DegenerateError("sigma_A = 0")
