"""Score functions, exact and approximating scores, and the regularity checks
(growth condition V_alpha and the van Zwet power-sum / anti-clustering conditions)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import InputError
from .matrix import ScoreMatrix, build_product_matrix
from .normal import Phi, psi

PROBE_N = 1024
JACOBI_TOL = 1e-9
VALPHA_STABILITY = 0.05


class IntegrabilityError(InputError):
    """An integral over (0, 1) failed to converge."""


@dataclass(frozen=True)
class ScoreFunction:
    name: str
    J: Callable[[float], float]
    J_prime: Optional[Callable[[float], float]] = None
    alpha_hint: Optional[float] = None

    def __post_init__(self):
        t = np.arange(1, PROBE_N + 1) / (PROBE_N + 1)
        vals = np.asarray(self.J(t), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InputError(f"score function {self.name} is not finite on the probe grid")


def norm_ppf(p):
    """Inverse of Phi: rational approximation polished by one Newton step."""
    p = np.asarray(p, dtype=float)
    x = special.ndtri(p)
    with np.errstate(invalid="ignore", divide="ignore"):
        step = (Phi(x) - p) / psi(x)
    x = np.where(np.isfinite(step), x - step, x)
    return x if x.ndim else float(x)


def _vdw_prime(t):
    return 1.0 / psi(norm_ppf(t))


def _median_j(t):
    return np.where(np.asarray(t) <= 0.5, -1.0, 1.0)


def _identity(t):
    return np.asarray(t, dtype=float)


def wilcoxon() -> ScoreFunction:
    return ScoreFunction("wilcoxon", _identity, lambda t: np.ones_like(_identity(t)), 0.0)


def van_der_waerden() -> ScoreFunction:
    return ScoreFunction("vdw", norm_ppf, _vdw_prime, 0.0)


def median() -> ScoreFunction:
    return ScoreFunction("median", _median_j, lambda t: np.zeros_like(np.asarray(t, dtype=float)))


def inverse_sqrt() -> ScoreFunction:
    return ScoreFunction("inv_sqrt", lambda t: np.asarray(t, dtype=float) ** -0.5,
                         lambda t: -0.5 * np.asarray(t, dtype=float) ** -1.5)


def polynomial(coeffs: Sequence[float]) -> ScoreFunction:
    """J(t) = sum_k coeffs[k] t^k."""
    c = np.asarray(coeffs, dtype=float)
    dc = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
    return ScoreFunction(
        "poly",
        lambda t: np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), c),
        lambda t: np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), dc),
    )


BUILTINS = {
    "wilcoxon": wilcoxon,
    "vdw": van_der_waerden,
    "median": median,
    "inv_sqrt": inverse_sqrt,
}


def builtin(name: str) -> ScoreFunction:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise InputError(f"unknown score function {name!r}; choose from {sorted(BUILTINS)}") from None


def integrate_unit(f: Callable, label: str = "integrand") -> float:
    """Integral of f over (0, 1) allowing integrable endpoint singularities.

    The middle part [1e-3, 1 - 1e-3] is integrated directly; each tail is
    summed over decades down to 1e-15.  Either the last shell is negligible
    or the shells decay geometrically (power-law singularity t^-a, a < 1),
    in which case the geometric remainder is added.  Anything else is
    reported as divergent.
    """

    def quad(a, b):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            v, _ = integrate.quad(lambda t: float(f(t)), a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
        return v

    total = quad(1e-3, 0.5) + quad(0.5, 1 - 1e-3)
    for side in (0, 1):
        shells = []
        for e in range(3, 15):
            hi, lo = 10.0**-e, 10.0 ** -(e + 1)
            shells.append(quad(lo, hi) if side == 0 else quad(1 - hi, 1 - lo))
        total += sum(shells)
        if not np.isfinite(total):
            raise IntegrabilityError(f"integral of {label} over (0, 1) does not converge")
        if abs(shells[-1]) <= 1e-10 * max(1.0, abs(total)):
            continue
        q1 = shells[-1] / shells[-2] if shells[-2] else np.inf
        q2 = shells[-2] / shells[-3] if shells[-3] else np.inf
        if not (0 < q1 < 0.95 and 0 < q2 < 0.95):
            raise IntegrabilityError(f"integral of {label} over (0, 1) does not converge")
        total += shells[-1] * q1 / (1 - q1)
    return float(total)


def approx_scores(J: ScoreFunction, n: int) -> np.ndarray:
    if n < 1:
        raise InputError("n must be positive")
    d = np.asarray(J.J(np.arange(1, n + 1) / (n + 1)), dtype=float)
    if not np.all(np.isfinite(d)):
        raise InputError(f"{J.name} is not finite at a node j/(n+1)")
    return d


def _jacobi_scores(J: ScoreFunction, n: int, nodes: int) -> np.ndarray:
    out = np.empty(n)
    for j in range(1, n + 1):
        # weight t^(j-1) (1-t)^(n-j) on (0,1) maps to (1-x)^(n-j) (1+x)^(j-1) on (-1,1)
        x, w = special.roots_jacobi(nodes, n - j, j - 1)
        t = (1 + x) / 2
        out[j - 1] = np.dot(w, J.J(t)) / w.sum()
    return out


def _beta_density_scores(J: ScoreFunction, n: int) -> np.ndarray:
    out = np.empty(n)
    for j in range(1, n + 1):
        log_c = math.lgamma(n + 1) - math.lgamma(j) - math.lgamma(n - j + 1)

        def f(t, j=j, log_c=log_c):
            dens = math.exp(log_c + (j - 1) * math.log(t) + (n - j) * math.log1p(-t))
            return float(J.J(t)) * dens

        out[j - 1] = integrate_unit(f, f"{J.name} score {j}")
    return out


def exact_scores(J: ScoreFunction, n: int) -> np.ndarray:
    """d_j = E J(U_{j:n}) for the order statistics of n uniforms.

    Gauss-Jacobi quadrature with the order-statistic density as weight is
    accepted when doubling the nodes moves no score by 1e-9.  Otherwise (an
    endpoint singularity such as that of the normal quantile) the scores are
    recomputed by adaptive quadrature with decade splitting at the endpoints.
    """
    if n < 1:
        raise InputError("n must be positive")
    if J.name == "wilcoxon":
        return np.arange(1, n + 1) / (n + 1)
    integrate_unit(lambda t: abs(float(J.J(t))), J.name)
    nodes = math.ceil((n + 64) / 2)
    d = _jacobi_scores(J, n, nodes)
    check = _jacobi_scores(J, n, 2 * nodes)
    if float(np.max(np.abs(check - d))) < JACOBI_TOL:
        return check
    return _beta_density_scores(J, n)


def median_scores(n: int) -> np.ndarray:
    if n < 2:
        raise InputError("median scores need n >= 2")
    return np.where(np.arange(1, n + 1) <= n // 2, -1.0, 1.0)


def _one_sided_grid(points: int, depth: float) -> np.ndarray:
    return np.geomspace(depth, 0.5, points)


def _growth_sup(J: ScoreFunction, alpha: float, points: int, depth: float) -> float:
    left = _one_sided_grid(points, depth)
    t = np.unique(np.concatenate((left, 1.0 - left, np.linspace(depth, 1 - depth, points))))
    if J.J_prime is not None:
        dj = np.asarray(J.J_prime(t), dtype=float)
    else:
        h = 1e-6 * np.minimum(t, 1 - t)
        dj = (np.asarray(J.J(t + h)) - np.asarray(J.J(t - h))) / (2 * h)
    if not np.all(np.isfinite(dj)):
        raise InputError(f"derivative of {J.name} is not finite on the grid")
    return float(np.max(np.abs(dj) * (t * (1 - t)) ** (1 + alpha)))


@dataclass(frozen=True)
class GrowthCheck:
    gamma: float
    holds: bool
    coarse_gamma: float


def v_alpha_check(J: ScoreFunction, alpha: float, grid_size: int = 256) -> GrowthCheck:
    """Estimate the smallest Gamma with |J'(t)| <= Gamma (t(1-t))^(-1-alpha).

    The coarse grid reaches 1e-4 from each endpoint, the fine grid twice as
    many points down to 1e-8; the condition holds when the two estimates
    agree within 5%.
    """
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    coarse = _growth_sup(J, alpha, grid_size, 1e-4)
    fine = _growth_sup(J, alpha, 2 * grid_size, 1e-8)
    if fine == 0.0 and coarse == 0.0:
        stable = True
    else:
        stable = abs(fine - coarse) <= VALPHA_STABILITY * max(fine, coarse)
    return GrowthCheck(gamma=fine, holds=bool(np.isfinite(fine) and stable), coarse_gamma=coarse)


def union_measure(centres: Sequence[float], radius: float) -> float:
    """Lebesgue measure of the union of open intervals (c - radius, c + radius)."""
    c = np.sort(np.asarray(centres, dtype=float))
    total = 0.0
    lo, hi = c[0] - radius, c[0] + radius
    for x in c[1:]:
        if x - radius <= hi:
            hi = x + radius
        else:
            total += hi - lo
            lo, hi = x - radius, x + radius
    return total + (hi - lo)


@dataclass(frozen=True)
class VanZwetReport:
    r: float
    k: float
    m: float
    s: float
    e: float
    E: float
    d: float
    D: float
    delta: float
    zeta: float
    measure: float
    satisfied: dict
    rate_exponent_first: float
    rate_exponent_second: float

    def to_dict(self) -> dict:
        out = {f: getattr(self, f) for f in ("r", "k", "m", "s", "e", "E", "d", "D", "delta", "zeta", "measure")}
        out["satisfied"] = dict(self.satisfied)
        out["rate_exponent_first"] = self.rate_exponent_first
        out["rate_exponent_second"] = self.rate_exponent_second
        return out


def rate_exponents(k: float, s: float) -> tuple:
    first = -1 + max(4 / k - 1, 0.0) + max(4 / s - 1, 0.0)
    second = -1.5 + max(5 / k - 1, 0.0) + max(5 / s - 1, 0.0)
    return first, second


def default_zeta(n: int) -> float:
    return n**-1.5 * math.log(n)


def van_zwet_check(e: Sequence[float], d: Sequence[float], r: float = 2, k: float = 4, m: float = 2,
                   s: float = 4, delta: float = 0.1, zeta: Optional[float] = None) -> VanZwetReport:
    """Power-sum constants for regression constants and scores and the
    anti-clustering test lambda(union of zeta-balls around d_j) >= delta n zeta.

    The reported e, E, d, D are the best constants for this n (power sums
    divided by n); the power-sum conditions count as satisfied when the lower
    constants are positive.
    """
    ev = np.asarray(e, dtype=float).ravel()
    dv = np.asarray(d, dtype=float).ravel()
    n = ev.size
    if n < 2 or dv.size != n:
        raise InputError("e and d must have the same length n >= 2")
    if not (k > 2 and 0 < r < k and s > 2 and 0 < m < s):
        raise InputError("need k > 2, 0 < r < k, s > 2 and 0 < m < s")
    if not delta > 0:
        raise InputError("delta must be positive")
    floor = default_zeta(n)
    z = floor if zeta is None else float(zeta)
    if z < floor * (1 - 1e-12):
        raise InputError(f"zeta must be at least n^(-3/2) log n = {floor:.6g}")
    ce = np.abs(ev - ev.mean())
    cd = np.abs(dv - dv.mean())
    e_lo, e_hi = float(np.sum(ce**r)) / n, float(np.sum(ce**k)) / n
    d_lo, d_hi = float(np.sum(cd**m)) / n, float(np.sum(cd**s)) / n
    meas = union_measure(dv, z)
    first, second = rate_exponents(k, s)
    return VanZwetReport(
        r=r, k=k, m=m, s=s,
        e=e_lo, E=e_hi, d=d_lo, D=d_hi,
        delta=delta, zeta=z, measure=meas,
        satisfied={
            "regression": e_lo > 0,
            "scores": d_lo > 0,
            "spread": meas >= delta * n * z,
        },
        rate_exponent_first=first,
        rate_exponent_second=second,
    )


def weighted_node_sum_bound(n: int, beta: float) -> tuple:
    """(sum_j (p_j (1 - p_j))^(-beta) with p_j = j/(n+1), 4^beta zeta(beta) n^beta)."""
    p = np.arange(1, n + 1) / (n + 1)
    lhs = float(np.sum((p * (1 - p)) ** -beta))
    return lhs, 4**beta * float(special.zeta(beta)) * n**beta


def two_sample_regression(n: int, m: Optional[int] = None) -> np.ndarray:
    """Indicator of the first sample, size m (default ceil(n/3))."""
    m = math.ceil(n / 3) if m is None else m
    if not 1 <= m < n:
        raise InputError("first sample size must be in 1..n-1")
    return np.where(np.arange(n) < m, 1.0, 0.0)


def standardize_regression(e: Sequence[float]) -> np.ndarray:
    ev = np.asarray(e, dtype=float)
    c = ev - ev.mean()
    ss = float(np.sum(c**2))
    if not ss > 0:
        raise InputError("regression constants are all equal")
    return c / math.sqrt(ss)


FAMILIES = ("wilcoxon", "vdw", "median")


def family_vectors(name: str, n: int, kind: str = "approx") -> tuple:
    """(regression constants, scores) of a built-in two-sample family."""
    if kind not in ("exact", "approx"):
        raise InputError("score type must be exact or approx")
    if name == "median":
        return np.where(np.arange(n) < n // 2, 1.0, 0.0), median_scores(n)
    if name not in ("wilcoxon", "vdw"):
        raise InputError(f"unknown family {name!r}; choose from {FAMILIES}")
    J = builtin(name)
    d = exact_scores(J, n) if kind == "exact" else approx_scores(J, n)
    return two_sample_regression(n), d


def family_matrix(name: str, n: int, kind: str = "approx") -> ScoreMatrix:
    e, d = family_vectors(name, n, kind)
    return build_product_matrix(e, d)
