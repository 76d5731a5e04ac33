from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from szegolab.models import (
    BundlePoint,
    ModelError,
    SzegoEvaluator,
    bargmann_fock,
    basis_sections,
    default_quadrature,
    gram_matrix,
    heisenberg_model_kernel,
    inner_product,
    kernel_axioms,
    model_from_name,
    projective_line,
    projective_line_perturbed,
    torus,
    torus_quadrature,
)


def test_projective_line_dimension_matches_monomial_count():
    # binary forms of degree 3: monomials x^a y^b with a + b = 3
    count = sum(1 for a in range(4) for b in range(4) if a + b == 3)
    assert basis_sections(projective_line(), 3).dim == count == 4


def test_torus_theta_basis_dimension_and_gram():
    b = basis_sections(torus(), 5)
    assert b.dim == 5
    G = gram_matrix(b.values, torus_quadrature(torus(), 64))
    assert np.abs(G - np.eye(5)).max() <= 1e-10


def test_torus_theta_norm_against_refined_grid():
    b = basis_sections(torus(), 3)
    ref = gram_matrix(b.values, torus_quadrature(torus(), 256))
    cur = gram_matrix(b.values, default_quadrature(torus(), 3))
    assert np.abs(ref - cur).max() <= 1e-9


@pytest.mark.parametrize("g", [projective_line(), projective_line_perturbed(), torus()], ids=lambda g: g.kind)
def test_level_one_gram_is_identity(g):
    assert basis_sections(g, 1).gram_residual <= 1e-10


def test_projective_line_diagonal_constant(rng):
    for N in (1, 7, 40):
        ev = SzegoEvaluator(projective_line(), N)
        z = rng.normal(size=20) * 3 + 1j * rng.normal(size=20)
        assert np.abs(ev.diagonal(z) - (N + 1) / np.pi).max() <= 1e-10 * N


def test_bargmann_fock_level_one_origin():
    for m in (1, 2):
        val = SzegoEvaluator(bargmann_fock(m), 1).diagonal(np.zeros(m))
        assert float(np.reshape(val, -1)[0]) == pytest.approx(np.pi ** -m, rel=1e-15)


def test_heisenberg_kernel_values():
    assert complex(np.reshape(heisenberg_model_kernel(0, 0, 0, 0), ())) == pytest.approx(1 / np.pi)
    u, v = 0.3 - 0.2j, -0.5 + 0.1j
    k = complex(np.reshape(heisenberg_model_kernel(u, 0.4, v, 0.4), ()))
    assert abs(k) == pytest.approx(np.exp(-abs(u - v) ** 2 / 2) / np.pi, rel=1e-14)
    assert abs(complex(np.reshape(heisenberg_model_kernel(u, 1.0, u, 1.0), ()))) == pytest.approx(1 / np.pi)


@pytest.mark.parametrize("name", ["p1", "p1_perturbed", "torus", "bf"])
def test_kernel_axioms_all_models(name):
    g = model_from_name(name)
    for N in (1, 8, 32):
        r = kernel_axioms(SzegoEvaluator(g, N))
        assert r["hermitian"] <= 1e-12
        assert r["equivariance"] <= 1e-12
        assert r["reproducing"] <= 1e-6 * N ** g.m
        if g.is_compact:
            assert r["dimension"] <= 1e-6


def test_bargmann_fock_two_dimensional_reproducing():
    r = kernel_axioms(SzegoEvaluator(bargmann_fock(2), 4))
    assert r["reproducing"] <= 1e-6 * 16


def test_inner_product_rejects_mixed_levels():
    q = torus_quadrature(torus(), 16)
    f = lambda z, th: np.ones(len(z))
    with pytest.raises(ValueError):
        inner_product(f, f, q, 2, 3)


def test_inner_product_positivity():
    ev = SzegoEvaluator(torus(), 3)
    q = default_quadrature(torus(), 3)
    F = lambda z, th: ev.lift(z)[:, 1]
    assert inner_product(F, F, q, 3, 3) == pytest.approx(1.0, abs=1e-10)


def test_invalid_levels_and_models():
    with pytest.raises(ModelError):
        basis_sections(torus(), 0)
    with pytest.raises(ModelError):
        model_from_name("klein_bottle")
    with pytest.raises(ModelError):
        torus(0.5 + 1j)


def test_perturbation_is_linear_in_eps():
    z, w = np.array([0.4 + 0.1j]), np.array([0.2 - 0.3j])
    k0 = complex(np.reshape(SzegoEvaluator(projective_line(), 6).kernel(z, w), ()))
    d = [complex(np.reshape(SzegoEvaluator(projective_line_perturbed(e), 6).kernel(z, w), ())) - k0
         for e in (1e-2, 5e-3)]
    # first-order response: log-log slope of |change| against eps is 1
    slope = np.log(abs(d[0]) / abs(d[1])) / np.log(2)
    assert abs(slope - 1) < 0.05


@settings(max_examples=25, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-2, 2), st.floats(-2, 2))
def test_equivariance_property(phi, a, b):
    ev = SzegoEvaluator(projective_line(), 5)
    x = BundlePoint(np.array([a + 1j * b]), 0.2)
    y = BundlePoint(np.array([0.3 - 0.1j]), -0.4)
    assert ev(x.rotate(phi), y) == pytest.approx(np.exp(5j * phi) * ev(x, y), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_hermitian_property(a, b, c, d):
    ev = SzegoEvaluator(projective_line(), 9)
    z, w = np.array([a + 1j * b]), np.array([c + 1j * d])
    assert complex(np.reshape(ev.kernel(z, w), ())) == pytest.approx(
        np.conj(complex(np.reshape(ev.kernel(w, z), ()))), abs=1e-12)
