import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uhplasma.spectral import (
    B0_BAR,
    InvalidParams,
    Params,
    Regime,
    asymptotic_lambda,
    build_matrix,
    closed_form_eigenvector,
    closed_form_roots,
    cubic_roots,
    eigenvalues,
    regime,
    regime_boundary,
    regime_discriminant,
)

nus = st.floats(0.0, 10.0, allow_nan=False)
b0s = st.floats(-2.0, 2.0, allow_nan=False)


def as_complex(pair):
    return complex(float(pair[0]), float(pair[1]))


def same_multiset(a, b, tol):
    a, b = list(a), list(b)
    for z in a:
        j = min(range(len(b)), key=lambda i: abs(b[i] - z))
        assert abs(b[j] - z) <= tol * (1 + abs(z)), (z, b)
        b.pop(j)


# --- Params and matrix ------------------------------------------------------


@pytest.mark.parametrize("nu,b0", [(-1e-9, 0), (math.nan, 0), (0, math.inf), (math.inf, 1)])
def test_params_rejects_invalid(nu, b0):
    with pytest.raises(InvalidParams):
        Params(nu, b0)


def test_matrix_at_origin():
    M = build_matrix(Params(0.0, 0.0))
    expected = [[0, 1, 0, 0], [0, 0, 0, -1], [0, 0, 0, 0], [0, 1, 0, 0]]
    assert np.array_equal(M, np.array(expected, dtype=float))


@given(nus, b0s)
def test_matrix_structure(nu, b0):
    M = build_matrix(Params(nu, b0))
    assert np.trace(M) == pytest.approx(-2 * nu, abs=1e-15)
    assert np.array_equal(M[0], M[3])
    assert np.linalg.det(M) == 0.0 or abs(np.linalg.det(M)) < 1e-12
    assert np.array_equal(M[1:, 0], np.zeros(3))


def test_det_is_zero_at_unit_params():
    assert abs(np.linalg.det(build_matrix(Params(1, 1)))) < 1e-15


# --- eigenvalues --------------------------------------------------------------


def test_collisionless_roots_exact():
    es = eigenvalues(Params(0.0, 0.5))
    w = math.sqrt(1.25)
    assert list(es.lam) == [0, 0, complex(0, w), complex(0, -w)]


def test_zero_eigenvalue_has_two_dimensional_nullspace_at_nu_zero():
    M = build_matrix(Params(0.0, 0.7))
    sv = np.linalg.svd(M, compute_uv=False)
    assert np.sum(sv < 1e-12) == 2


def test_unmagnetized_roots_factor():
    es = eigenvalues(Params(3.0, 0.0))
    expected = [0, -3, (-3 + math.sqrt(5)) / 2, (-3 - math.sqrt(5)) / 2]
    same_multiset(es.lam, expected, 1e-12)
    assert np.all(es.lam.imag == 0)


def test_eigenvalues_match_extended_precision_oracle(oracles):
    for case in oracles["eig"]:
        es = eigenvalues(Params(case["nu"], case["b0"]))
        same_multiset(es.lam, [as_complex(z) for z in case["lambda"]], 1e-11)


def test_first_mode_is_exact():
    es = eigenvalues(Params(0.4, -0.3))
    assert es.lam[0] == 0
    assert np.array_equal(es.vectors[:, 0], np.array([1, 0, 0, 0], dtype=complex))


@given(nus, b0s)
def test_vieta_relations(nu, b0):
    lam = eigenvalues(Params(nu, b0)).lam[1:]
    s1, s2, s3 = lam.sum(), lam[0] * lam[1] + lam[0] * lam[2] + lam[1] * lam[2], lam.prod()
    assert abs(s1 + 2 * nu) <= 1e-10 * max(1, 2 * nu)
    assert abs(s2 - (1 + b0 ** 2 + nu ** 2)) <= 1e-10 * (1 + b0 ** 2 + nu ** 2)
    assert abs(s3 + nu) <= 1e-10 * max(1, nu)


def test_vieta_on_random_grid():
    rng = np.random.default_rng(7)
    for nu, b0 in zip(rng.uniform(0, 10, 10_000), rng.uniform(-2, 2, 10_000)):
        lam = cubic_roots(Params(nu, b0))
        c = 1 + b0 * b0 + nu * nu
        assert abs(lam.sum() + 2 * nu) <= 1e-10 * max(1, 2 * nu)
        assert abs(lam[0] * lam[1] + lam[0] * lam[2] + lam[1] * lam[2] - c) <= 1e-10 * c
        assert abs(lam.prod() + nu) <= 1e-10 * max(1, nu)


def test_hurwitz_on_random_grid():
    rng = np.random.default_rng(11)
    for nu, b0 in zip(rng.uniform(1e-6, 10, 10_000), rng.uniform(-2, 2, 10_000)):
        assert np.max(cubic_roots(Params(nu, b0)).real) < 0


@given(nus, b0s)
def test_cubic_residual_and_ordering(nu, b0):
    lam = cubic_roots(Params(nu, b0))
    for z in lam:
        p = z ** 3 + 2 * nu * z ** 2 + (1 + b0 * b0 + nu * nu) * z + nu
        assert abs(p) <= 1e-10 * (1 + abs(z) ** 3)
    if np.any(lam.imag != 0):
        assert lam[2] == np.conj(lam[1])
        assert lam[1].imag > 0
        assert abs(lam[0].imag) <= abs(lam[1].imag)


@given(nus, b0s)
def test_eigenvector_residuals(nu, b0):
    es = eigenvalues(Params(nu, b0))
    norms = np.linalg.norm(es.vectors, axis=0)
    assert np.all(es.residuals() <= 1e-10 * norms)


@given(st.floats(0.0, 10.0), st.floats(1e-3, 2.0))
def test_conjugate_pair_vectors_are_exact_conjugates(nu, b0):
    es = eigenvalues(Params(nu, b0))
    if es.lam[2].imag != 0:
        assert np.array_equal(es.vectors[:, 3], np.conj(es.vectors[:, 2]))


@given(st.floats(0.01, 10.0), st.floats(-2.0, 2.0).filter(lambda b: abs(b) > 1e-6))
def test_display_eigenvectors_are_parallel_to_computed(nu, b0):
    es = eigenvalues(Params(nu, b0))
    for k in (1, 2, 3):
        if abs(es.lam[k]) <= 1e-8 or es.ill_conditioned:
            continue
        u = closed_form_eigenvector(es.params, es.lam[k])
        v = es.vectors[:, k]
        cos = abs(np.vdot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))
        assert cos == pytest.approx(1.0, abs=1e-7)


def test_serialization_keys():
    d = eigenvalues(Params(1, 1)).to_dict()
    assert {"lambda_re", "lambda_im"} <= d.keys()
    assert len(d["lambda_re"]) == 4
    r = regime(Params(1, 1)).to_dict()
    assert {"K", "regime"} <= r.keys()


# --- regime -------------------------------------------------------------------


@pytest.mark.parametrize("nu,b0,expected", [
    (1.0, 0.0, Regime.OSCILLATORY),
    (3.0, 0.0, Regime.MONOTONE),
    (2.0, 0.2, Regime.MONOTONE),
    (2.2, 0.1, Regime.MONOTONE),
    (1.0, 1.0, Regime.OSCILLATORY),
])
def test_regime_examples(nu, b0, expected):
    assert regime(Params(nu, b0)).regime is expected


def test_regime_at_double_point_is_boundary():
    nu = 0.75 * math.sqrt(6)
    assert regime(Params(nu, B0_BAR)).regime is Regime.BOUNDARY
    assert regime(Params(2.0, 0.0)).regime is Regime.BOUNDARY


@given(nus, b0s)
def test_regime_matches_eigenvalues(nu, b0):
    p = Params(nu, b0)
    r = regime(p)
    if abs(r.K) <= r.eps:
        return
    complex_pair = np.max(np.abs(cubic_roots(p).imag)) > 1e-8
    assert (r.regime is Regime.OSCILLATORY) == complex_pair


@given(nus, b0s)
def test_discriminant_is_quarter_negated_cubic_discriminant(nu, b0):
    a, b, c, d = 1, 2 * nu, 1 + b0 ** 2 + nu ** 2, nu
    disc = 18 * a * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * a * c ** 3 - 27 * a * a * d * d
    K = regime_discriminant(Params(nu, b0))
    assert K == pytest.approx(-disc / 4, rel=1e-9, abs=1e-9 * max(1, nu ** 6, b0 ** 6))


def test_printed_discriminant_variant_misplaces_unmagnetized_threshold():
    # the 3/4 variant vanishes at nu = 2/sqrt(3) instead of nu = 2
    assert regime_discriminant(Params(2 / math.sqrt(3), 0), printed=True) == pytest.approx(0, abs=1e-12)
    assert regime_discriminant(Params(2.0, 0.0)) == pytest.approx(0, abs=1e-12)


@given(nus, b0s)
def test_k2_formula(nu, b0):
    assert regime(Params(nu, b0)).K2 == (3 + 3 * b0 ** 2 - nu ** 2) / 9


# --- thresholds --------------------------------------------------------------


def test_threshold_branches_match_oracle(oracles):
    for case in oracles["nu_branches"]:
        b0 = B0_BAR if case["b0"] == "sqrt(2)/4" else float(case["b0"])
        lo, hi = regime_boundary(b0)
        assert lo == pytest.approx(float(case["nu_minus"]), rel=1e-9)
        assert hi == pytest.approx(float(case["nu_plus"]), rel=1e-9)


@given(st.floats(1e-3, B0_BAR))
def test_discriminant_vanishes_on_branches(b0):
    lo, hi = regime_boundary(b0)
    assert 0 < lo <= hi
    for nu in (lo, hi):
        K = regime_discriminant(Params(nu, b0))
        assert abs(K) <= 1e-9 * max(1, nu ** 4)


def test_threshold_limits():
    assert regime_boundary(0.0) == (2.0, math.inf)
    assert regime_boundary(0.5) is None
    lo, hi = regime_boundary(B0_BAR)
    assert lo == pytest.approx(0.75 * math.sqrt(6), abs=1e-9)
    assert hi == pytest.approx(0.75 * math.sqrt(6), abs=1e-9)
    lo, _ = regime_boundary(1e-4)
    assert 1.999 <= lo <= 2.001
    assert regime_boundary(-0.2) == regime_boundary(0.2)


# --- closed forms and expansions -------------------------------------------


@given(st.floats(0.0, 10.0), st.floats(-2.0, 2.0).filter(lambda b: abs(b) > 1e-3))
def test_cardano_closed_forms_agree(nu, b0):
    p = Params(nu, b0)
    if abs(regime_discriminant(p)) <= 1e-6:
        return
    same_multiset(closed_form_roots(p), cubic_roots(p), 1e-8)


@pytest.mark.parametrize("b0", [0.1, 0.7, 1.5])
def test_large_nu_error_decays_like_inverse_nu(b0):
    errs = []
    for nu in (1e2, 1e3, 1e4):
        lam3 = eigenvalues(Params(nu, b0)).lam[2]
        errs.append(abs(lam3 - complex(-nu, b0)))
    for a, b in zip(errs, errs[1:]):
        assert 5 <= a / b <= 20


def test_large_nu_expansion_example():
    approx = asymptotic_lambda(Params(1000, 0.7), "large_nu")
    lam = eigenvalues(Params(1000, 0.7)).lam[1:]
    assert abs(approx[1] - lam[1]) < 1e-2
    assert abs(approx[0] - lam[0]) < 1e-6


@pytest.mark.parametrize("b0", [0.0, 0.3, 1.0, 1.5])
def test_small_nu_expansion(b0):
    p = Params(0.01, b0)
    same_multiset(asymptotic_lambda(p, "small_nu"), cubic_roots(p), 1e-4)
    exact0 = asymptotic_lambda(Params(0, 1), "small_nu")
    same_multiset(exact0, [0, complex(0, math.sqrt(2)), complex(0, -math.sqrt(2))], 1e-15)


def test_small_nu_first_root_example():
    lam = cubic_roots(Params(0.01, 1.0))
    real = lam[np.argmin(np.abs(lam.imag))]
    assert real.real == pytest.approx(-0.005, abs=1e-4)
