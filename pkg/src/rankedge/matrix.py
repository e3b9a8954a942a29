"""Score matrices, standardization and the moment functionals built on them.

A linear rank statistic is ``T_A = sum_i a[i, pi(i)]`` for a uniform random
permutation ``pi``.  Everything downstream works with the double-centred,
variance-normalised matrix ``a_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateError, InputError

# relative size below which sigma_A^2 is treated as an exact zero
_DEGENERATE_RTOL = 1e-13


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScoreMatrix:
    n: int
    entries: np.ndarray
    row_means: np.ndarray
    col_means: np.ndarray
    grand_mean: float
    mu: float
    sigma2: float
    std_entries: Optional[np.ndarray]

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    @property
    def degenerate(self) -> bool:
        return self.std_entries is None

    def require_std(self) -> np.ndarray:
        if self.std_entries is None:
            raise DegenerateError("sigma_A = 0: standardized matrix undefined")
        return self.std_entries

    def standardized(self) -> "ScoreMatrix":
        """The matrix ``a_hat`` wrapped as a ScoreMatrix of its own."""
        return build_matrix(self.require_std())


def build_matrix(entries: Sequence[Sequence[float]] | np.ndarray) -> ScoreMatrix:
    a = np.asarray(entries, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InputError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix entries must be finite")
    n = a.shape[0]
    row = a.mean(axis=1)
    col = a.mean(axis=0)
    grand = float(a.mean())
    centred = a - row[:, None] - col[None, :] + grand
    if n >= 2:
        sigma2 = float(np.sum(centred**2) / (n - 1))
    else:
        sigma2 = 0.0
    scale = max(1.0, float(np.max(np.abs(a))))
    if sigma2 <= (_DEGENERATE_RTOL * scale) ** 2:
        sigma2 = 0.0
    std = _frozen(centred / np.sqrt(sigma2)) if sigma2 > 0 else None
    return ScoreMatrix(
        n=n,
        entries=_frozen(a),
        row_means=_frozen(row),
        col_means=_frozen(col),
        grand_mean=grand,
        mu=n * grand,
        sigma2=sigma2,
        std_entries=std,
    )


def build_product_matrix(regression: Sequence[float], scores: Sequence[float]) -> ScoreMatrix:
    """Matrix with entries ``a_ij = e_i * d_j`` (simple linear rank statistics)."""
    e = np.asarray(regression, dtype=float).ravel()
    d = np.asarray(scores, dtype=float).ravel()
    if e.size != d.size:
        raise InputError(f"regression has length {e.size}, scores {d.size}")
    return build_matrix(np.outer(e, d))


@dataclass(frozen=True)
class MatrixMoments:
    n: int
    beta: float
    delta: float
    eta: float
    d_cap: float
    e_cap: float
    lambda1: float
    lambda2: float

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "delta": self.delta,
            "eta": self.eta,
            "d_cap": self.d_cap,
            "e_cap": self.e_cap,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
        }


def square_triple_sum(ahat: np.ndarray) -> float:
    """sum_{i,j,k} (a_ij^2 a_ik^2 + a_ij^2 a_kj^2) via row/column sums of a^2."""
    sq = ahat**2
    return float(np.sum(sq.sum(axis=1) ** 2) + np.sum(sq.sum(axis=0) ** 2))


def moments(m: ScoreMatrix) -> MatrixMoments:
    ahat = m.require_std()
    n = m.n
    absa = np.abs(ahat)
    beta = float(np.sum(absa**3))
    delta = float(np.sum(ahat**4))
    eta = float(np.sum(absa**5))
    lambda1 = float(np.sum(ahat**3)) / n
    lambda2 = delta / n + 3.0 / n - 3.0 / n**2 * square_triple_sum(ahat)
    return MatrixMoments(
        n=n,
        beta=beta,
        delta=delta,
        eta=eta,
        d_cap=float(np.sqrt(delta / n)),
        e_cap=float(np.cbrt(eta / n)),
        lambda1=lambda1,
        lambda2=lambda2,
    )


@dataclass(frozen=True)
class SubmatrixSelector:
    """Cancelled rows and columns, 1-based, strictly increasing, equal count."""

    cancelled_rows: tuple
    cancelled_cols: tuple

    def __post_init__(self):
        rows = tuple(int(i) for i in self.cancelled_rows)
        cols = tuple(int(j) for j in self.cancelled_cols)
        if len(rows) != len(cols):
            raise InputError("row and column selectors must have equal length")
        for seq in (rows, cols):
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise InputError("selector indices must be strictly increasing")
        object.__setattr__(self, "cancelled_rows", rows)
        object.__setattr__(self, "cancelled_cols", cols)

    @property
    def l(self) -> int:
        return len(self.cancelled_rows)


def submatrix(m: ScoreMatrix, sel: SubmatrixSelector) -> ScoreMatrix:
    n, l = m.n, sel.l
    if l >= n:
        raise InputError(f"cannot cancel {l} rows of a {n}x{n} matrix")
    for idx in sel.cancelled_rows + sel.cancelled_cols:
        if not 1 <= idx <= n:
            raise InputError(f"selector index {idx} outside 1..{n}")
    keep_r = np.setdiff1d(np.arange(n), np.asarray(sel.cancelled_rows, dtype=int) - 1)
    keep_c = np.setdiff1d(np.arange(n), np.asarray(sel.cancelled_cols, dtype=int) - 1)
    return build_matrix(m.entries[np.ix_(keep_r, keep_c)])


@dataclass(frozen=True)
class TruncatedTriple:
    a_hat: np.ndarray
    a_prime: ScoreMatrix
    gamma_set: frozenset
    d_entries: np.ndarray
    abar: Optional[np.ndarray] = field(default=None)

    def a_bracket(self, k: int) -> float:
        """A[k] = 2^k * sum |a_hat|^k."""
        if k < 1:
            raise InputError("A[k] needs k >= 1")
        return float(2.0**k * np.sum(np.abs(self.a_hat) ** k))


def truncate(m: ScoreMatrix) -> TruncatedTriple:
    ahat = m.require_std()
    big = np.abs(ahat) > 0.5
    aprime = np.where(big, 0.0, ahat)
    pm = build_matrix(aprime)
    d = pm.row_means[:, None] + pm.col_means[None, :] - pm.grand_mean
    gamma = frozenset((int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(big)))
    return TruncatedTriple(
        a_hat=ahat,
        a_prime=pm,
        gamma_set=gamma,
        d_entries=_frozen(d),
        abar=pm.std_entries,
    )


def alternating_block_matrix(n: int) -> ScoreMatrix:
    """Rows alternate (1, -1, 0, ...) and (-1, 1, 0, ...).

    For even n the moments D_A^2 and E_A^3 stay bounded away from zero.
    """
    if n < 2:
        raise InputError("need n >= 2")
    a = np.zeros((n, n))
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    a[:, 0] = sign
    a[:, 1] = -sign
    return build_matrix(a)
