"""Five coupled uniform permutations pi_1..pi_5 built from 16 random indices.

The indices I_1..I_16 are drawn stage by stage, each stage copying the
equality pattern of earlier indices onto fresh distinct values.  Fixed
permutations v, u, t, s of the index set then give

    pi_2 = pi_1 o v,  pi_3 = pi_2 o u,  pi_4 = pi_3 o t,  pi_5 = pi_4 o s,

so that consecutive T_k = sum_i a[i, pi_k(i)] differ only on a few rows.
All public index values are 1-based; arrays are 0-based internally.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InputError, SizeError
from .matrix import ScoreMatrix
from .permdist import MC_CHUNK, chunk_generator, random_permutations

# (domain positions, image positions, support size) for v, u, t, s (0-based positions)
_MAPS = (
    ((0, 1, 2, 3, 4, 5, 6, 7), (12, 13, 14, 15, 8, 9, 10, 11), 16),
    ((0, 1, 2, 3), (6, 7, 4, 5), 8),
    ((0, 1), (3, 2), 4),
    ((0, 1), (1, 0), 2),
)
# each stage: (target positions, template positions whose equality pattern is copied)
_STAGES = (
    ((2, 3), (0, 1)),
    ((4, 5, 6, 7), (2, 3, 0, 1)),
    ((8, 9, 10, 11, 12, 13, 14, 15), (4, 5, 6, 7, 0, 1, 2, 3)),
)
EXACT_LAW_MAX_N = 4


def _pattern_labels(template: np.ndarray) -> tuple:
    """Class label of each column (first-occurrence order) and class count per row."""
    count, width = template.shape
    first = np.empty((count, width), dtype=np.intp)
    for k in range(width):
        eq = template[:, : k + 1] == template[:, k : k + 1]
        first[:, k] = np.argmax(eq, axis=1)
    is_new = first == np.arange(width)[None, :]
    new_rank = np.cumsum(is_new, axis=1) - 1
    labels = np.take_along_axis(new_rank, first, axis=1)
    return labels, is_new.sum(axis=1)


def _distinct_count(block: np.ndarray) -> np.ndarray:
    return _pattern_labels(block)[1]


def sample_indices(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    idx = np.empty((count, 16), dtype=np.intp)
    idx[:, 0:2] = rng.integers(0, n, size=(count, 2))
    for target, template in _STAGES:
        labels, _ = _pattern_labels(idx[:, list(template)])
        fresh = random_permutations(rng, count, n)
        idx[:, list(target)] = np.take_along_axis(fresh, labels, axis=1)
    return idx


def _complete_maps(idx: np.ndarray, n: int, dom: tuple, img: tuple, support: int) -> np.ndarray:
    """The fixed permutation for one stage, one row per index vector.

    Specified points follow the table; remaining support points are matched
    in ascending order (smallest free preimage to smallest free image);
    everything outside the support is fixed.
    """
    count = idx.shape[0]
    rows = np.arange(count)[:, None]
    perm = np.tile(np.arange(n, dtype=np.intp), (count, 1))
    in_u = np.zeros((count, n), dtype=bool)
    in_u[rows, idx[:, :support]] = True
    in_x = np.zeros((count, n), dtype=bool)
    in_x[rows, idx[:, list(dom)]] = True
    in_y = np.zeros((count, n), dtype=bool)
    in_y[rows, idx[:, list(img)]] = True
    free_dom = in_u & ~in_x
    free_img = in_u & ~in_y
    order_d = np.argsort(~free_dom, axis=1, kind="stable")
    order_i = np.argsort(~free_img, axis=1, kind="stable")
    nfree = free_dom.sum(axis=1)
    use = np.arange(n)[None, :] < nfree[:, None]
    r_idx = np.broadcast_to(rows, (count, n))[use]
    perm[r_idx, order_d[use]] = order_i[use]
    perm[rows, idx[:, list(dom)]] = idx[:, list(img)]
    return perm


def build_permutations(idx: np.ndarray, pi1: np.ndarray) -> np.ndarray:
    """Stack pi_1..pi_5 (shape count x 5 x n) from indices and pi_1."""
    count, n = pi1.shape
    out = np.empty((count, 5, n), dtype=np.intp)
    out[:, 0] = pi1
    cur = pi1
    for k, (dom, img, support) in enumerate(_MAPS):
        step = _complete_maps(idx, n, dom, img, support)
        cur = np.take_along_axis(cur, step, axis=1)
        out[:, k + 1] = cur
    return out


def j_indices(idx: np.ndarray, pi1: np.ndarray) -> np.ndarray:
    """J_k = pi_1(I_{8+k}) and J_{8+k} = pi_1(I_k) for k = 1..8."""
    src = np.concatenate([idx[:, 8:16], idx[:, 0:8]], axis=1)
    return np.take_along_axis(pi1, src, axis=1)


def statistics(a: np.ndarray, perms: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    rows = np.arange(n)
    return a[rows[None, None, :], perms].sum(axis=2)


def pattern_counts(idx: np.ndarray) -> np.ndarray:
    """Columns gamma, theta, mu, rho: distinct values among the first 2, 4, 8, 16 indices."""
    return np.stack([_distinct_count(idx[:, :w]) for w in (2, 4, 8, 16)], axis=1)


def satisfies_pattern(i_vec) -> bool:
    """The seven equality equivalences defining admissible 16-index vectors."""
    i = [None] + list(i_vec)

    def same(l, k, l2, k2):
        return (i[l] == i[k]) == (i[l2] == i[k2])

    checks = [same(1, 2, 3, 4), same(1, 2, 7, 8), same(3, 4, 5, 6)]
    checks += [same(l, k, l + 6, k + 2) for l in (1, 2) for k in (3, 4)]
    checks += [same(l, k, l + 12, k + 12) for l in range(1, 5) for k in range(1, 5)]
    checks += [same(l, k, l + 4, k + 4) for l in range(5, 9) for k in range(5, 9)]
    checks += [same(l, k, l + 12, k + 4) for l in range(1, 5) for k in range(5, 9)]
    return all(checks)


@dataclass(frozen=True)
class CouplingDraw:
    i_vec: tuple
    j_vec: tuple
    perms: tuple
    stats: tuple
    deltas: tuple
    gamma: int
    theta: int
    mu: int
    rho: int

    def to_json(self) -> dict:
        out = {"i": list(self.i_vec), "j": list(self.j_vec)}
        for k, p in enumerate(self.perms, start=1):
            out[f"perm{k}"] = list(p)
        out["t"] = list(self.stats)
        out["dt"] = list(self.deltas)
        return out


@dataclass(frozen=True)
class CouplingBatch:
    """Many draws as arrays (0-based indices)."""

    a: np.ndarray
    idx: np.ndarray
    j: np.ndarray
    perms: np.ndarray
    t: np.ndarray

    @cached_property
    def dt(self) -> np.ndarray:
        return np.diff(self.t, axis=1)

    @cached_property
    def a_i1j1(self) -> np.ndarray:
        return self.a[self.idx[:, 0], self.j[:, 0]]

    def __len__(self) -> int:
        return self.idx.shape[0]

    def draw(self, r: int) -> CouplingDraw:
        counts = pattern_counts(self.idx[r : r + 1])[0]
        return CouplingDraw(
            i_vec=tuple(int(v) + 1 for v in self.idx[r]),
            j_vec=tuple(int(v) + 1 for v in self.j[r]),
            perms=tuple(tuple(int(v) + 1 for v in p) for p in self.perms[r]),
            stats=tuple(float(v) for v in self.t[r]),
            deltas=tuple(float(v) for v in self.dt[r]),
            gamma=int(counts[0]),
            theta=int(counts[1]),
            mu=int(counts[2]),
            rho=int(counts[3]),
        )


def _matrix_for(m: ScoreMatrix, standardized: bool) -> np.ndarray:
    if m.n < 2:
        raise InputError("the coupling needs n >= 2")
    return m.require_std() if standardized else np.asarray(m.entries)


def _sample_chunk(a: np.ndarray, rng: np.random.Generator, count: int) -> tuple:
    n = a.shape[0]
    idx = sample_indices(rng, count, n)
    pi1 = random_permutations(rng, count, n)
    perms = build_permutations(idx, pi1)
    return idx, j_indices(idx, pi1), perms, statistics(a, perms)


def sample_coupling_batch(m: ScoreMatrix, draws: int, seed: int, standardized: bool = True,
                          workers: int = 1) -> CouplingBatch:
    a = _matrix_for(m, standardized)
    if draws < 1:
        raise InputError("draws must be positive")
    nchunks = -(-draws // MC_CHUNK)

    def chunk(c: int) -> tuple:
        size = min(MC_CHUNK, draws - c * MC_CHUNK)
        return _sample_chunk(a, chunk_generator(seed, c), size)

    if workers <= 1 or nchunks == 1:
        parts = [chunk(c) for c in range(nchunks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk, range(nchunks)))
    idx, j, perms, t = (np.concatenate(p) for p in zip(*parts))
    return CouplingBatch(a=a, idx=idx, j=j, perms=perms, t=t)


def sample_coupling(m: ScoreMatrix, seed: int, standardized: bool = True) -> CouplingDraw:
    return sample_coupling_batch(m, 1, seed, standardized).draw(0)


def delta_representation(a: np.ndarray, idx_row, perm_new, perm_old, width: int) -> float:
    """sum over the distinct values x among the first width indices of
    a[x, new(x)] - a[x, old(x)]."""
    xs = sorted(set(int(v) for v in idx_row[:width]))
    return float(sum(a[x, perm_new[x]] - a[x, perm_old[x]] for x in xs))


# ------------------------------------------------------------ exact law


def _extend_all(rows: list, probs: list, target: tuple, template: tuple, n: int) -> tuple:
    out_rows, out_probs = [], []
    for row, p in zip(rows, probs):
        labels, c = _pattern_labels(np.asarray([[row[t] for t in template]]))
        labels = labels[0]
        c = int(c[0])
        w = p * math.factorial(n - c) / math.factorial(n)
        for vals in itertools.permutations(range(n), c):
            new = list(row)
            for pos, lab in zip(target, labels):
                new[pos] = vals[lab]
            out_rows.append(new)
            out_probs.append(w)
    return out_rows, out_probs


def enumerate_index_law(n: int) -> tuple:
    """All admissible index vectors (0-based) with their probabilities."""
    rows = [[i1, i2] + [0] * 14 for i1 in range(n) for i2 in range(n)]
    probs = [1.0 / n**2] * len(rows)
    for target, template in _STAGES:
        rows, probs = _extend_all(rows, probs, target, template, n)
    return np.asarray(rows, dtype=np.intp), np.asarray(probs)


@dataclass(frozen=True)
class CouplingLaw:
    """The exact joint law of (I_1..I_16, pi_1), one support point per row."""

    n: int
    a: np.ndarray
    prob: np.ndarray
    idx: np.ndarray
    j: np.ndarray
    perms: np.ndarray
    t: np.ndarray

    @cached_property
    def dt(self) -> np.ndarray:
        return np.diff(self.t, axis=1)

    @cached_property
    def a_i1j1(self) -> np.ndarray:
        return self.a[self.idx[:, 0], self.j[:, 0]]

    def total(self) -> float:
        return float(self.prob.sum())

    def expect(self, values: np.ndarray) -> float:
        return float(np.dot(self.prob, values))

    def perm_marginal(self, k: int) -> np.ndarray:
        """Probability of each permutation (lexicographic rank order) for pi_k."""
        codes = _perm_ranks(self.perms[:, k - 1])
        return np.bincount(codes, weights=self.prob, minlength=math.factorial(self.n))

    def pair_marginal(self, l: int, k: int) -> np.ndarray:
        """n x n law of (I_l, pi_k(I_l))."""
        il = self.idx[:, l - 1]
        jl = self.perms[np.arange(len(il)), k - 1, il]
        out = np.zeros((self.n, self.n))
        np.add.at(out, (il, jl), self.prob)
        return out

    def ij_marginal(self, l: int) -> np.ndarray:
        """n x n law of (I_l, J_l)."""
        out = np.zeros((self.n, self.n))
        np.add.at(out, (self.idx[:, l - 1], self.j[:, l - 1]), self.prob)
        return out

    def edgeworth_identities(self) -> dict:
        """The four expectation identities that fix the expansion coefficients.

        Returns n E(a), n E(a dT4), and the two brackets whose targets are
        E(T^3)/2 and (E(T^4) - 3)/6.
        """
        n = self.n
        a = self.a_i1j1
        d1, d2, d3, d4 = self.dt.T
        c = self.expect(a * d4 * d3) + self.expect(a * d4**2 / 2)
        d = (
            self.expect(a * d4 * d3 * d2)
            + self.expect(a * d4 * d3**2 / 2)
            + self.expect(a * d4**2 * d3 / 2)
            + self.expect(a * d4**3 / 6)
        )
        return {
            "mean_a": n * self.expect(a),
            "a_dt4": n * self.expect(a * d4),
            "third_bracket": n * c,
            "fourth_bracket": n * d,
        }

    def independence_tv(self, x: np.ndarray, y: np.ndarray) -> float:
        """Total variation between the joint law of (x, y) and the product of marginals."""
        xi, nx = _cluster_ids(x)
        yi, ny = _cluster_ids(y)
        joint = np.zeros((nx, ny))
        np.add.at(joint, (xi, yi), self.prob)
        prod = np.outer(joint.sum(axis=1), joint.sum(axis=0))
        return 0.5 * float(np.abs(joint - prod).sum())


def _perm_ranks(perms: np.ndarray) -> np.ndarray:
    """Lexicographic rank of each row permutation."""
    count, n = perms.shape
    ranks = np.zeros(count, dtype=np.int64)
    for pos in range(n):
        smaller_later = (perms[:, pos + 1 :] < perms[:, pos : pos + 1]).sum(axis=1)
        ranks += smaller_later * math.factorial(n - 1 - pos)
    return ranks


def _cluster_ids(values: np.ndarray, rtol: float = 1e-11, atol: float = 1e-14) -> tuple:
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    sv = v[order]
    gap = np.diff(sv)
    tol = np.maximum(rtol * np.maximum(np.abs(sv[1:]), np.abs(sv[:-1])), atol)
    ids_sorted = np.concatenate(([0], np.cumsum(gap > tol)))
    ids = np.empty_like(ids_sorted)
    ids[order] = ids_sorted
    return ids, int(ids_sorted[-1]) + 1


def coupling_exact_law(m: ScoreMatrix, standardized: bool = True) -> CouplingLaw:
    n = m.n
    if n > EXACT_LAW_MAX_N:
        raise SizeError(f"exact coupling law is enumerated only for n <= {EXACT_LAW_MAX_N}")
    a = _matrix_for(m, standardized)
    idx, p_idx = enumerate_index_law(n)
    all_perms = np.asarray(list(itertools.permutations(range(n))), dtype=np.intp)
    nf = all_perms.shape[0]
    rep_idx = np.repeat(idx, nf, axis=0)
    pi1 = np.tile(all_perms, (idx.shape[0], 1))
    prob = np.repeat(p_idx, nf) / nf
    perms = build_permutations(rep_idx, pi1)
    return CouplingLaw(
        n=n,
        a=a,
        prob=prob,
        idx=rep_idx,
        j=j_indices(rep_idx, pi1),
        perms=perms,
        t=statistics(a, perms),
    )
