"""First and second order Edgeworth expansions and their distance to step CDFs.

Every expansion here has the form

    e(x) = Phi(x) - psi(x) * sum_k c_k H_k(x)

with probabilists' Hermite polynomials H_k, so derivatives follow from
(psi H_k)' = -psi H_{k+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, SizeError
from .matrix import MatrixMoments
from .normal import GAUSS_CUT, Phi, hermite, psi
from .permdist import StepCdf, merge_atoms
from .scores import ScoreFunction, integrate_unit

DEFAULT_ATOM_CAP = 2_000_000
IID_MAX_N = 4096
PROBES = 8
Y_GRID = 64


@dataclass(frozen=True)
class EdgeworthExpansion:
    order: int
    coeffs: tuple
    terms: tuple  # pairs (c_k, k)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = Phi(x) - psi(x) * self._poly(x, 0)
        return out if out.ndim else float(out)

    def _poly(self, x, shift: int):
        total = np.zeros_like(x)
        for c, k in self.terms:
            if c != 0.0:
                total = total + c * hermite(k + shift, x)
        return total

    def derivative(self, x, order: int = 1):
        if not 1 <= order <= 3:
            raise InputError("derivatives are available for orders 1..3")
        x = np.asarray(x, dtype=float)
        sign = -1.0 if order % 2 else 1.0
        base = -sign * psi(x) * hermite(order - 1, x)
        out = base - sign * psi(x) * self._poly(x, order)
        return out if out.ndim else float(out)


def _check_order(order: int) -> None:
    if order not in (1, 2):
        raise InputError(f"order must be 1 or 2, got {order}")


def _from_coeffs(order: int, l1: float, l2: float) -> EdgeworthExpansion:
    terms = [(l1 / 6.0, 2)]
    if order == 2:
        terms += [(l2 / 24.0, 3), (l1 * l1 / 72.0, 5)]
    return EdgeworthExpansion(order=order, coeffs=(l1, l2), terms=tuple(terms))


def expansion_matrix(moms: MatrixMoments, order: int) -> EdgeworthExpansion:
    _check_order(order)
    return _from_coeffs(order, moms.lambda1, moms.lambda2)


def expansion_first_moment(moms: MatrixMoments) -> Callable:
    """z -> -psi(z) - z^3 psi(z) lambda_1 / 6."""
    l1 = moms.lambda1

    def e11(z):
        z = np.asarray(z, dtype=float)
        out = -psi(z) - z**3 * psi(z) * l1 / 6.0
        return out if out.ndim else float(out)

    return e11


@dataclass(frozen=True)
class IntegralCoefficients:
    xi1: float
    xi2: float
    int_j3: float
    int_j4: float


def integral_coefficients(e_hat: Sequence[float], J: ScoreFunction) -> IntegralCoefficients:
    e = np.asarray(e_hat, dtype=float).ravel()
    n = e.size
    if n < 1 or abs(e.sum()) > 1e-10 or abs(np.sum(e**2) - 1.0) > 1e-10:
        raise InputError("regression constants must satisfy sum e = 0 and sum e^2 = 1")
    m1 = integrate_unit(J.J, "J")
    m2 = integrate_unit(lambda t: J.J(t) ** 2, "J^2")
    var = m2 - m1 * m1
    if not var > 0:
        raise InputError(f"score function {J.name} is constant")
    sd = math.sqrt(var)

    def jhat(t):
        return (J.J(t) - m1) / sd

    int3 = integrate_unit(lambda t: jhat(t) ** 3, "J^3")
    int4 = integrate_unit(lambda t: jhat(t) ** 4, "J^4")
    xi1 = float(np.sum(e**3)) * int3
    xi2 = float(np.sum(e**4)) * (int4 - 3.0) - 3.0 / n * (int4 - 1.0)
    return IntegralCoefficients(xi1, xi2, int3, int4)


def expansion_integral(e_hat: Sequence[float], J: ScoreFunction, order: int) -> EdgeworthExpansion:
    _check_order(order)
    c = integral_coefficients(e_hat, J)
    return _from_coeffs(order, c.xi1, c.xi2)


@dataclass(frozen=True)
class IidSpec:
    values: tuple
    probs: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.ndim != 1 or v.shape != p.shape or v.size == 0:
            raise InputError("support values and probabilities must be equal-length sequences")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise InputError("probabilities must be positive and sum to 1")
        if abs(np.dot(p, v)) > 1e-12 or abs(np.dot(p, v * v) - 1.0) > 1e-12:
            raise InputError("the summands must have mean 0 and variance 1")
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    def _moment(self, f) -> float:
        v = np.asarray(self.values)
        return float(np.dot(self.probs, f(v)))

    @property
    def mu3(self) -> float:
        return self._moment(lambda v: v**3)

    @property
    def beta3(self) -> float:
        return self._moment(lambda v: np.abs(v) ** 3)

    @property
    def beta4(self) -> float:
        return self._moment(lambda v: v**4)


def rademacher() -> IidSpec:
    return IidSpec((-1.0, 1.0), (0.5, 0.5))


def expansion_iid(spec: IidSpec, n: int) -> EdgeworthExpansion:
    if n < 1:
        raise InputError("n must be positive")
    c = spec.mu3 / math.sqrt(n)
    return EdgeworthExpansion(order=1, coeffs=(c,), terms=((c / 6.0, 2),))


def _lattice(values: Sequence[float]) -> Optional[tuple]:
    """(integer points, span) when all values are integer multiples of one span."""
    fr = [Fraction(v).limit_denominator(10**6) for v in values]
    # tight: convergents of irrationals get within ~1e-12 at denominators near 1e6
    if any(abs(float(f) - v) > 1e-15 * max(1.0, abs(v)) for f, v in zip(fr, values)):
        return None
    den = math.lcm(*(f.denominator for f in fr))
    ints = [int(f * den) for f in fr]
    g = math.gcd(*ints) or 1
    return [k // g for k in ints], g / den


def _power_convolve(p: np.ndarray, n: int) -> np.ndarray:
    out = np.array([1.0])
    base = p
    while n:
        if n & 1:
            out = np.convolve(out, base)
        n >>= 1
        if n:
            base = np.convolve(base, base)
    return out


def iid_convolution(spec: IidSpec, n: int, cap: int = DEFAULT_ATOM_CAP) -> StepCdf:
    """Exact law of S_n = n^{-1/2} (X_1 + ... + X_n)."""
    if not 1 <= n <= IID_MAX_N:
        raise InputError(f"n must be in 1..{IID_MAX_N}")
    scale = 1.0 / math.sqrt(n)
    lat = _lattice(spec.values)
    if lat is not None:
        ints, span = lat
        lo, hi = min(ints), max(ints)
        if n * (hi - lo) + 1 > cap:
            raise SizeError("lattice support exceeds the atom cap")
        p = np.zeros(hi - lo + 1)
        for k, q in zip(ints, spec.probs):
            p[k - lo] += q
        probs = _power_convolve(p, n)
        keep = probs > 0
        support = (np.arange(probs.size) + n * lo) * span * scale
        return StepCdf(support[keep], probs[keep])
    dist = merge_atoms(np.asarray(spec.values), np.asarray(spec.probs))
    vals, probs = dist.values, dist.probs
    for _ in range(n - 1):
        if vals.size * len(spec.values) > cap:
            raise SizeError("atom count exceeds the cap")
        v = (vals[:, None] + np.asarray(spec.values)[None, :]).ravel()
        w = (probs[:, None] * np.asarray(spec.probs)[None, :]).ravel()
        step = merge_atoms(v, w)
        vals, probs = step.values, step.probs
    return StepCdf(vals * scale, probs)


def sup_distance(F: StepCdf, e: Callable, probes: int = PROBES) -> float:
    """sup_x |F(x) - e(x)| using atoms, left limits, interior probes and +-12."""
    z = F.values
    cdf = F.cdf
    left = np.concatenate(([0.0], cdf[:-1]))
    ez = np.asarray(e(z), dtype=float)
    best = float(max(np.max(np.abs(cdf - ez)), np.max(np.abs(left - ez))))
    frac = np.arange(1, probes + 1) / (probes + 1)
    if z.size > 1 and probes:
        x = z[:-1, None] + frac[None, :] * np.diff(z)[:, None]
        best = max(best, float(np.max(np.abs(cdf[:-1, None] - e(x)))))
    lo = min(-GAUSS_CUT, z[0])
    hi = max(GAUSS_CUT, z[-1])
    ends = np.arange(0, PROBES + 2) / (PROBES + 1)
    xl = lo + ends[:-1] * (z[0] - lo)
    xr = z[-1] + ends[1:] * (hi - z[-1])
    best = max(best, float(np.max(np.abs(e(xl)))), float(np.max(np.abs(1.0 - e(xr)))))
    return best


def second_difference_sup(F: StepCdf, y: float) -> float:
    """sup_z |F(z + 2y) - 2F(z + y) + F(z)|, exact for a step function."""
    a = F.values
    z = np.concatenate((a, a - y, a - 2 * y))
    d2 = F.eval(z + 2 * y) - 2 * F.eval(z + y) + F.eval(z)
    return float(np.max(np.abs(d2)))


def delta2_condition(F: StepCdf, scale: float, points: int = Y_GRID) -> float:
    """Smallest C with |second difference of F| <= C (scale^2 + y^2) on the y-grid."""
    if not scale > 0:
        raise InputError("scale must be positive")
    ys = scale * float(points) ** (-np.arange(points) / points)
    return max(second_difference_sup(F, y) / (scale**2 + y**2) for y in ys)


def iid_constant_K(C: float, beta3: float, beta4: float) -> float:
    if not (C > 0 and beta3 >= 1 and beta4 >= 1):
        raise InputError("need C > 0, beta3 >= 1 and beta4 >= 1")
    return (2 + beta4) * C + (3 + 11 * beta3 + 13 * beta4 + 9 * beta3 * beta4)


def grid_sup(f: Callable, lo: float = -GAUSS_CUT, hi: float = GAUSS_CUT, points: int = 24001) -> float:
    x = np.linspace(lo, hi, points)
    return float(np.max(np.abs(f(x))))


@dataclass(frozen=True)
class DistanceReport:
    n: int
    sup_f_phi: float
    sup_f_e1: float
    sup_f_e2: float
    beta_over_n: float
    d_cap2: float
    e_cap3: float
    ratio_k1: float
    expansion_gap: float
    expansion_gap_bound: float
    delta2_constant: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "sup_f_phi": self.sup_f_phi,
            "sup_f_e1": self.sup_f_e1,
            "sup_f_e2": self.sup_f_e2,
            "beta_over_n": self.beta_over_n,
            "d_cap2": self.d_cap2,
            "e_cap3": self.e_cap3,
            "ratio_k1": self.ratio_k1,
            "conditions": {
                "expansion_gap": self.expansion_gap,
                "expansion_gap_bound": self.expansion_gap_bound,
                "delta2_constant": self.delta2_constant,
            },
        }


def distance_report(moms: MatrixMoments, F: StepCdf) -> DistanceReport:
    """Distances of the standardized law F to Phi, e_1 and e_2.

    delta2_constant is the second-difference constant of F itself at scale
    D_A (a single-matrix stand-in for the condition over all submatrices).
    """
    n = moms.n
    e1 = expansion_matrix(moms, 1)
    e2 = expansion_matrix(moms, 2)
    sup_phi = sup_distance(F, Phi, probes=0)
    return DistanceReport(
        n=n,
        sup_f_phi=sup_phi,
        sup_f_e1=sup_distance(F, e1),
        sup_f_e2=sup_distance(F, e2),
        beta_over_n=moms.beta / n,
        d_cap2=moms.d_cap**2,
        e_cap3=moms.e_cap**3,
        ratio_k1=sup_phi * n / moms.beta,
        expansion_gap=grid_sup(lambda x: e2(x) - e1(x)),
        expansion_gap_bound=0.5 * moms.delta / n,
        delta2_constant=delta2_condition(F, moms.d_cap),
    )
