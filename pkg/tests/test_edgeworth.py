from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rankedge.edgeworth import (
    IidSpec,
    delta2_condition,
    distance_report,
    expansion_first_moment,
    expansion_iid,
    expansion_integral,
    expansion_matrix,
    grid_sup,
    iid_constant_K,
    iid_convolution,
    integral_coefficients,
    rademacher,
    sup_distance,
)
from rankedge.errors import InputError, SizeError
from rankedge.matrix import build_product_matrix, moments
from rankedge.normal import Phi, psi
from rankedge.permdist import StepCdf, exact_distribution
from rankedge.scores import approx_scores, builtin, standardize_regression, two_sample_regression

from corpus import corpus_matrices, random_matrix

X = np.linspace(-12, 12, 4801)


def _moms(l1: float, l2: float):
    base = moments(random_matrix(0, 5))
    return dataclasses.replace(base, lambda1=l1, lambda2=l2)


def test_vanishing_coefficients_give_phi():
    e1 = expansion_matrix(_moms(0.0, 0.7), 1)
    np.testing.assert_allclose(e1(X), Phi(X), atol=1e-16)
    e2 = expansion_matrix(_moms(0.0, 0.0), 2)
    np.testing.assert_allclose(e2(X), Phi(X), atol=1e-16)


@pytest.mark.parametrize("l1", [-0.8, 0.3, 2.0])
def test_hermite_zeros(l1):
    assert expansion_matrix(_moms(l1, 0.4), 1)(1.0) == pytest.approx(float(Phi(1.0)), abs=1e-16)
    e2 = expansion_matrix(_moms(0.0, l1), 2)
    assert e2(math.sqrt(3)) == pytest.approx(float(Phi(math.sqrt(3))), abs=1e-15)


def test_second_order_by_hand():
    l1, l2, x = 0.3, -0.5, 0.7
    e2 = expansion_matrix(_moms(l1, l2), 2)
    expect = (
        Phi(x)
        - psi(x) * l1 / 6 * (x * x - 1)
        - psi(x) * (l2 / 24 * (x**3 - 3 * x) + l1 * l1 / 72 * (x**5 - 10 * x**3 + 15 * x))
    )
    assert e2(x) == pytest.approx(float(expect), abs=1e-15)
    with pytest.raises(InputError):
        expansion_matrix(_moms(l1, l2), 3)


@pytest.mark.parametrize("order", [1, 2])
def test_expansion_limits_and_derivatives(order):
    e = expansion_matrix(_moms(0.9, -1.3), order)
    assert abs(e(-12.0)) < 1e-8 and abs(e(12.0) - 1) < 1e-8
    h = 1e-4
    x = np.linspace(-5, 5, 41)
    for k in (1, 2, 3):
        lower = (lambda t: e(t)) if k == 1 else (lambda t, k=k: e.derivative(t, k - 1))
        fd = (lower(x + h) - lower(x - h)) / (2 * h)
        np.testing.assert_allclose(e.derivative(x, k), fd, atol=1e-7)
    with pytest.raises(InputError):
        e.derivative(0.0, 4)


def test_first_moment_expansion():
    moms = moments(random_matrix(4, 6))
    e11 = expansion_first_moment(moms)
    assert e11(0.0) == pytest.approx(-0.39894, abs=5e-6)
    assert abs(e11(12.0)) < 1e-8 and abs(e11(-12.0)) < 1e-8
    np.testing.assert_allclose(expansion_first_moment(_moms(0.0, 0.0))(X), -psi(X), atol=1e-16)
    # it is the partial first moment of the expansion itself
    e1 = expansion_matrix(moms, 1)
    for z in (-1.5, 0.0, 0.8, 2.5):
        val = integrate.quad(lambda x: x * e1.derivative(x), -14, z, epsabs=1e-13)[0]
        assert e11(z) == pytest.approx(val, abs=1e-10)


def test_integral_coefficients_wilcoxon_and_vdw():
    e = standardize_regression(two_sample_regression(12))
    w = integral_coefficients(e, builtin("wilcoxon"))
    assert w.int_j3 == pytest.approx(0.0, abs=1e-10)
    assert w.int_j4 == pytest.approx(9 / 5, abs=1e-10)
    assert w.xi1 == pytest.approx(0.0, abs=1e-10)
    assert w.xi2 == pytest.approx(np.sum(e**4) * (9 / 5 - 3) - 3 / 12 * (4 / 5), abs=1e-10)
    v = integral_coefficients(e, builtin("vdw"))
    assert v.int_j3 == pytest.approx(0.0, abs=1e-8)
    assert v.int_j4 == pytest.approx(3.0, abs=1e-7)
    exp = expansion_integral(e, builtin("wilcoxon"), 2)
    assert exp.coeffs == (w.xi1, w.xi2)


def test_integral_rejects_unstandardized():
    with pytest.raises(InputError):
        integral_coefficients(np.zeros(5), builtin("wilcoxon"))
    with pytest.raises(InputError):
        integral_coefficients([1.0, 1.0], builtin("wilcoxon"))


def test_lambda_and_xi_approach_each_other():
    gaps = []
    for n in (10, 20, 40):
        e = standardize_regression(two_sample_regression(n))
        d = approx_scores(builtin("wilcoxon"), n)
        moms = moments(build_product_matrix(e, d))
        xi = integral_coefficients(e, builtin("wilcoxon"))
        gaps.append((abs(moms.lambda1 - xi.xi1), abs(moms.lambda2 - xi.xi2)))
    assert gaps[0][1] > gaps[1][1] > gaps[2][1]
    assert all(g[0] <= max(gaps[0][0], 1e-12) + 1e-12 for g in gaps)


def _skewed_spec() -> IidSpec:
    p = (5 - math.sqrt(5)) / 10
    return IidSpec((math.sqrt((1 - p) / p), -math.sqrt(p / (1 - p))), (p, 1 - p))


def test_iid_spec():
    s = _skewed_spec()
    assert s.mu3 == pytest.approx(1.0, abs=1e-12)
    r = rademacher()
    assert (r.mu3, r.beta3, r.beta4) == (0.0, 1.0, 1.0)
    with pytest.raises(InputError):
        IidSpec((-1.0, 2.0), (0.5, 0.5))
    with pytest.raises(InputError):
        IidSpec((-1.0, 1.0), (0.6, 0.6))


def test_iid_expansion():
    np.testing.assert_allclose(expansion_iid(rademacher(), 9)(X), Phi(X), atol=1e-16)
    s = _skewed_spec()
    assert expansion_iid(s, 36)(0.0) == pytest.approx(0.5 + s.mu3 * psi(0.0) / 36, abs=1e-15)
    for n in (1, 16, 400):
        gap = grid_sup(lambda x: expansion_iid(s, n)(x) - Phi(x))
        assert gap <= s.beta3 * 0.4 / (6 * math.sqrt(n))
    with pytest.raises(InputError):
        expansion_iid(s, 0)


def test_bernoulli_convolution():
    law = iid_convolution(rademacher(), 4)
    assert law.mass_at(0.0) == 6 / 16
    np.testing.assert_allclose(law.values, [-2, -1, 0, 1, 2])
    big = iid_convolution(rademacher(), 100)
    assert big.mass_at(0.0) * math.sqrt(50 * math.pi) == pytest.approx(1.0, abs=0.02)
    one = iid_convolution(_skewed_spec(), 1)
    np.testing.assert_allclose(one.values, sorted(_skewed_spec().values))


def test_convolution_lattice_and_general_paths_agree():
    # the irrational support forces pairwise merging
    s = _skewed_spec()
    law = iid_convolution(s, 6)
    assert len(law.values) == 7
    p = s.probs[0]
    for k in range(7):
        val = (k * s.values[0] + (6 - k) * s.values[1]) / math.sqrt(6)
        at = int(np.argmin(np.abs(law.values - val)))
        assert law.values[at] == pytest.approx(val, abs=1e-12)
        assert law.probs[at] == pytest.approx(math.comb(6, k) * p**k * (1 - p) ** (6 - k), rel=1e-12)
    three = IidSpec((-2.0, 0.0, 2.0), (0.125, 0.75, 0.125))
    assert iid_convolution(three, 2).mass_at(0.0) == 0.75**2 + 2 * 0.125**2
    with pytest.raises(InputError):
        IidSpec((-1.0, 0.0, 1.0), (0.25, 0.5, 0.25))
    with pytest.raises(InputError):
        iid_convolution(three, 0)
    with pytest.raises(SizeError):
        iid_convolution(rademacher(), 4000, cap=1000)


def test_sup_distance_examples():
    point = StepCdf([0.0], [1.0])
    assert sup_distance(point, Phi) == pytest.approx(0.5, abs=1e-15)
    law = iid_convolution(rademacher(), 4)
    assert sup_distance(law, expansion_iid(rademacher(), 4)) >= 3 / 16


@given(seed=st.integers(0, 10**6), n=st.integers(3, 6), l1=st.floats(-1, 1))
@settings(max_examples=30, deadline=None)
def test_sup_distance_against_dense_grid(seed, n, l1):
    law = exact_distribution(random_matrix(seed, n), standardized=True)
    e = expansion_matrix(_moms(l1, 0.0), 1)
    got = sup_distance(law, e)
    x = np.linspace(-12, 12, 200001)
    dense = float(np.max(np.abs(law.eval(x) - e(x))))
    assert dense <= got + 1e-4
    # every evaluated point is attained as a value or a one-sided limit
    left = float(np.max(np.abs(law.left_limit(law.values) - e(law.values))))
    assert got >= max(dense, left) - 1e-12


def test_delta2_condition():
    point = StepCdf([0.0], [1.0])
    assert delta2_condition(point, 0.01) > 1000
    fine = np.linspace(-8, 8, 16001)
    mass = np.diff(Phi(np.concatenate(([-np.inf], fine[:-1] + 0.0005, [np.inf]))))
    disc = StepCdf(fine, mass)
    c = delta2_condition(disc, 1 / math.sqrt(400))
    assert 0.05 < c < 0.3
    consts = [delta2_condition(iid_convolution(rademacher(), n), 1 / math.sqrt(n)) for n in (16, 64, 256)]
    assert consts[0] < consts[1] < consts[2]
    with pytest.raises(InputError):
        delta2_condition(point, 0.0)


def test_iid_constant():
    assert iid_constant_K(1, 1, 1) == 39
    assert iid_constant_K(2, 1, 2) == 66
    assert iid_constant_K(1e-300, 2, 3) == pytest.approx(3 + 22 + 39 + 54)
    with pytest.raises(InputError):
        iid_constant_K(0, 1, 1)


@pytest.mark.parametrize("m", corpus_matrices()[::4])
def test_distance_report(m):
    law = exact_distribution(m, standardized=True)
    rep = distance_report(moments(m), law).to_dict()
    assert set(rep) == {
        "n", "sup_f_phi", "sup_f_e1", "sup_f_e2", "beta_over_n", "d_cap2", "e_cap3", "ratio_k1", "conditions",
    }
    assert rep["conditions"]["expansion_gap"] <= rep["conditions"]["expansion_gap_bound"] + 1e-12
    assert rep["ratio_k1"] == pytest.approx(rep["sup_f_phi"] / rep["beta_over_n"])
    assert 0 < rep["sup_f_phi"] < 1
