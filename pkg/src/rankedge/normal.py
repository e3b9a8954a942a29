"""Gaussian kernel, Hermite polynomials, Stein solutions and smooth cut-off kernels.

Hermite polynomials here are the probabilists' ones, ``H_0 = 1``, ``H_1 = x``,
``H_{n+1} = x H_n - n H_{n-1}``, so that ``(-d/dx)^n psi = H_n psi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .errors import InputError

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
HERMITE_MAX_ORDER = 64
# psi-weighted integrands are cut to this interval; the tail mass is < 1e-30
GAUSS_CUT = 12.0


def psi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT2PI


def Phi(x):
    """Standard normal distribution function, through erfc for accurate tails."""
    x = np.asarray(x, dtype=float)
    return 0.5 * special.erfc(-x / SQRT2)


def mills(x):
    """Mills ratio (1 - Phi(x)) / psi(x), stable for large |x| via scaled erfc."""
    x = np.asarray(x, dtype=float)
    return math.sqrt(math.pi / 2.0) * special.erfcx(x / SQRT2)


def integrate_1d(f: Callable[[float], float], a: float, b: float, points=None) -> float:
    val, _ = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400, points=points)
    return float(val)


def gauss_integral(g: Callable[[float], float], points=None) -> float:
    """Integral of g(y) * psi(y) over the real line (cut to +-12)."""
    return integrate_1d(lambda y: g(y) * float(psi(y)), -GAUSS_CUT, GAUSS_CUT, points=points)


# ---------------------------------------------------------------- Hermite


def hermite(n: int, x):
    if not 0 <= n <= HERMITE_MAX_ORDER:
        raise InputError(f"Hermite order must be in 0..{HERMITE_MAX_ORDER}, got {n}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for k in range(1, n):
        h_prev, h = h, x * h - k * h_prev
    return h if h.ndim else float(h)


def hermite_weighted_norm(n: int, power: int = 0) -> float:
    """sup over x of |x^power H_n(x) psi(x)|.

    A dense grid on [-10, 10] locates the peak, a bounded scalar search
    polishes it.
    """
    if not 0 <= n <= 8:
        raise InputError("weighted norms are tabulated for n in 0..8")

    def g(t):
        return np.abs(np.asarray(t, dtype=float) ** power * hermite(n, t) * psi(t))

    grid = np.linspace(-10.0, 10.0, 40001)
    vals = g(grid)
    best = float(vals.max())
    step = grid[1] - grid[0]
    for idx in np.argsort(vals)[-4:]:
        x0 = grid[idx]
        res = optimize.minimize_scalar(
            lambda t: -float(g(t)),
            bounds=(x0 - step, x0 + step),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = max(best, -float(res.fun))
    return best


# ------------------------------------------------------ Stein solutions


def eta_k(k: int, a):
    """The polynomial bound eta_k(a) for the Stein solutions f_k.

    Empty sums are 0 and empty products 1, so eta_0 = eta_1 = 1.
    """
    if k < 0:
        raise InputError("k must be nonnegative")
    a = np.asarray(a, dtype=float)
    half = k // 2
    total = np.zeros_like(a)
    for i in range(1, half + 1):
        coef = math.prod(k + 1 - 2 * j for j in range(1, i))
        total = total + coef * a ** (k + 1 - 2 * i)
    total = total + math.prod(k + 1 - 2 * j for j in range(1, half + 1))
    return total if total.ndim else float(total)


def abs_moment(k: int) -> float:
    """E|Y|^k for standard normal Y."""
    base = eta_k(k, 0.0)
    return math.sqrt(2.0 / math.pi) * base if k % 2 else base


def signed_truncated_moment(k: int, x):
    """E(Y^k 1{Y <= x}), closed form in terms of eta_k."""
    x = np.asarray(x, dtype=float)
    out = -psi(x) * eta_k(k, x)
    if k % 2 == 0:
        out = out + (psi(x) + Phi(x)) * eta_k(k, 0.0)
    return out


def _signed_ratio(k: int, x: float) -> float:
    """E(Y^k 1{Y <= x}) / psi(x), by the downward recursion (stable for x << 0)."""
    if k % 2:
        r = -1.0
        start = 1
    else:
        r = float(mills(-x))
        start = 0
    for j in range(start + 2, k + 1, 2):
        r = -(x ** (j - 1)) + (j - 1) * r
    return r


def abs_truncated_moment(k: int, x: float) -> float:
    """M_k(x) = E(|Y|^k 1{Y <= x})."""
    x = float(x)
    if x <= 0:
        return float((-1) ** k * _signed_ratio(k, x) * psi(x))
    # mass on (-inf, 0] plus the signed moment over (0, x]
    g0 = float(signed_truncated_moment(k, 0.0))
    return (-1) ** k * g0 + float(signed_truncated_moment(k, x)) - g0


def _abs_ratio(k: int, x: float) -> float:
    """M_k(x) / psi(x)."""
    if x <= 0:
        return (-1) ** k * _signed_ratio(k, x)
    return abs_truncated_moment(k, x) / float(psi(x))


def _check_k(k: int) -> None:
    if not 0 <= k <= 4:
        raise InputError(f"Stein solutions implemented for k in 0..4, got {k}")


def stein_f(k: int, z: float, x: float) -> float:
    """Solution f_k of Stein's equation for |x|^k 1{x <= z}."""
    _check_k(k)
    x = float(x)
    mz = abs_truncated_moment(k, z)
    if x >= z:
        return float(mz * mills(x))
    # x < z: [M_k(x) - M_k(z) Phi(x)] / psi(x)
    return _abs_ratio(k, x) - mz * float(mills(-x))


def stein_fprime(k: int, z: float, x: float) -> float:
    """f_k'(x) from Stein's equation f' = x f + |x|^k q(x) - E|Y|^k q(Y)."""
    _check_k(k)
    x = float(x)
    q = 1.0 if x <= z else 0.0
    return x * stein_f(k, z, x) + abs(x) ** k * q - abs_truncated_moment(k, z)


def stein_f1(z: float, x: float) -> float:
    """Solution of Stein's equation for x 1{x <= z}."""
    x = float(x)
    pz = float(psi(z))
    if x <= z:
        return pz * float(mills(-x)) - 1.0
    return -pz * float(mills(x))


def stein_f1prime(z: float, x: float) -> float:
    x = float(x)
    q = 1.0 if x <= z else 0.0
    # E(Y 1{Y <= z}) = -psi(z)
    return x * stein_f1(z, x) + x * q + float(psi(z))


def stein_bound_b(k: int) -> float:
    """B_k = floor(k/2) * prod_{j=1}^{floor(k/2)} (k + 1 - 2j)."""
    half = k // 2
    return float(half * math.prod(k + 1 - 2 * j for j in range(1, half + 1)))


# ------------------------------------------------------ smooth kernels


class KnotError(InputError):
    pass


@dataclass(frozen=True)
class SmoothKernel:
    """Piecewise-polynomial cut-off from 1 down to 0 starting at z.

    kind 'p' is linear over [z, z+lam] and carries the factor |x|^power;
    'q' is quadratic over [z, z+2 lam] with factor x^power;
    'r' is cubic over [z, z+3 lam] and has no power factor.
    """

    kind: str
    z: float
    lam: float
    power: int = 0

    def __post_init__(self):
        if self.kind not in ("p", "q", "r"):
            raise InputError(f"unknown kernel kind {self.kind!r}")
        if not self.lam > 0:
            raise InputError("lambda must be positive")
        if self.power < 0 or (self.kind == "r" and self.power != 0):
            raise InputError("invalid power factor for this kernel")

    @property
    def knots(self) -> tuple:
        span = {"p": 1, "q": 2, "r": 3}[self.kind]
        return tuple(self.z + i * self.lam for i in range(span + 1))

    @property
    def smoothness(self) -> int:
        """Highest derivative order that is continuous at the knots."""
        return {"p": 0, "q": 1, "r": 2}[self.kind]


def _base_poly(kind: str, u: float, lam: float, order: int) -> float:
    """order-th derivative of the power-0 kernel at offset u = x - z."""
    if kind == "p":
        if u <= 0 or u >= lam:
            return (1.0 if u <= 0 else 0.0) if order == 0 else 0.0
        return [1.0 - u / lam, -1.0 / lam][order] if order <= 1 else 0.0
    if kind == "q":
        l2 = lam * lam
        if u <= 0 or u >= 2 * lam:
            return (1.0 if u <= 0 else 0.0) if order == 0 else 0.0
        if u <= lam:
            vals = [1.0 - u * u / (2 * l2), -u / l2, -1.0 / l2]
        else:
            w = 2 * lam - u
            vals = [w * w / (2 * l2), -w / l2, 1.0 / l2]
        return vals[order] if order <= 2 else 0.0
    l3 = lam**3
    if u <= 0 or u >= 3 * lam:
        return (1.0 if u <= 0 else 0.0) if order == 0 else 0.0
    if u <= lam:
        vals = [1.0 - u**3 / (6 * l3), -(u**2) / (2 * l3), -u / l3, -1.0 / l3]
    elif u <= 2 * lam:
        w = 2 * u - 3 * lam
        vals = [
            (w**3 - 18 * lam * lam * u + 39 * l3) / (24 * l3),
            (w * w - 3 * lam * lam) / (4 * l3),
            w / l3,
            2.0 / l3,
        ]
    else:
        w = 3 * lam - u
        vals = [w**3 / (6 * l3), -(w**2) / (2 * l3), w / l3, -1.0 / l3]
    return vals[order]


def _power_derivative(kind: str, power: int, x: float, order: int) -> float:
    if order > power:
        return 0.0
    c = math.perm(power, order)
    if kind == "p":
        s = math.copysign(1.0, x) ** order if x != 0 else (1.0 if order == 0 else 0.0)
        return c * abs(x) ** (power - order) * s
    return c * x ** (power - order)


def smooth_eval(kern: SmoothKernel, x: float) -> float:
    return smooth_derivative(kern, x, 0)


def smooth_derivative(kern: SmoothKernel, x: float, order: int) -> float:
    if not 0 <= order <= 3:
        raise InputError("derivative order must be in 0..3")
    x = float(x)
    if order > kern.smoothness and any(x == k for k in kern.knots):
        raise KnotError(f"derivative of order {order} undefined at knot {x}")
    if kern.kind == "p" and kern.power and order >= kern.power and x == 0.0 and kern.power % 2:
        raise KnotError("|x|^k factor is not differentiable that often at 0")
    u = x - kern.z
    total = 0.0
    for i in range(order + 1):
        pd = _power_derivative(kern.kind, kern.power, x, i) if kern.power else float(i == 0)
        if pd == 0.0:
            continue
        total += math.comb(order, i) * pd * _base_poly(kern.kind, u, kern.lam, order - i)
    return total


def r_moment_integrals(z: float, lam: float) -> tuple:
    """Integrals of r' against 1, (x-z)/lam and (x-z)(x-z-lam)/(2 lam^2) over [z, z+3 lam]."""
    if not lam > 0:
        raise InputError("lambda must be positive")
    kern = SmoothKernel("r", z, lam)

    def rp(t):
        return smooth_derivative(kern, z + t * lam, 1) * lam

    # substitute x = z + t*lam so the integrals are computed on [0, 3]
    pts = [1.0, 2.0]
    i0 = integrate_1d(rp, 0.0, 3.0, points=pts)
    i1 = integrate_1d(lambda t: rp(t) * t, 0.0, 3.0, points=pts)
    i2 = integrate_1d(lambda t: rp(t) * t * (t - 1.0) / 2.0, 0.0, 3.0, points=pts)
    return i0, i1, i2


# ------------------------------------------- differences and interpolation


def difference(F: Callable[[float], float], y: float, k: int, z: float) -> float:
    """k-th forward difference of F with step y at z."""
    if not 1 <= k <= 8:
        raise InputError("difference order must be in 1..8")
    return float(sum((-1) ** (k - j) * math.comb(k, j) * F(z + j * y) for j in range(k + 1)))


def interp_poly(F: Callable[[float], float], y: float, k: int, z: float, x: float) -> float:
    """Newton forward interpolating polynomial of F through z, z+y, ..., z+k y."""
    if not 0 <= k <= 8:
        raise InputError("interpolation order must be in 0..8")
    if k >= 1 and y == 0:
        raise InputError("interpolation step y must be nonzero")
    total = float(F(z))
    prod = 1.0
    for s in range(1, k + 1):
        prod *= (x - z - (s - 1) * y) / (s * y)
        total += difference(F, y, s, z) * prod
    return total
