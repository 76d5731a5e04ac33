from __future__ import annotations

import numpy as np
import pytest

from szegolab.geometry import (
    ChartError,
    build_preferred_chart,
    build_preferred_frame,
    chart_invariants,
    heisenberg_chart,
    horizontal_lift_coeffs,
    jet_identities,
)
from szegolab.models import BundlePoint, bargmann_fock, projective_line, projective_line_perturbed, torus

MODELS = [bargmann_fock(1), bargmann_fock(2), projective_line(), projective_line_perturbed(), torus()]


def _points(g, rng, n):
    return g.sample_points(rng, n)


@pytest.mark.parametrize("g", MODELS, ids=lambda g: g.model_id[:24])
def test_jet_identities_random_points(g):
    rng = np.random.default_rng(7)
    for p in _points(g, rng, 20):
        res = jet_identities(heisenberg_chart(g, p))
        assert max(res.values()) <= 1e-6, res


@pytest.mark.parametrize("g", MODELS, ids=lambda g: g.model_id[:24])
def test_chart_invariants(g):
    rng = np.random.default_rng(8)
    for p in _points(g, rng, 5):
        inv = chart_invariants(g, build_preferred_chart(g, p))
        assert max(inv.values()) <= 1e-10


def test_bargmann_fock_origin_chart_is_identity():
    c = build_preferred_chart(bargmann_fock(1), 0.0)
    assert np.allclose(c.T, np.eye(1), atol=1e-15)
    f = build_preferred_frame(bargmann_fock(1), c)
    # e_L(z) = (z, 1) needs no correction at the origin
    assert f.phi0 == 0 and np.all(f.b == 0) and np.all(f.c == 0)


def test_bargmann_fock_weight_second_derivative():
    ch = heisenberg_chart(bargmann_fock(1), 0.0)
    h = 1e-3
    a = lambda z: float(np.reshape(ch.weight_a(np.array([z])), ()))
    lap = (a(h) + a(-h) + a(1j * h) + a(-1j * h) - 4 * a(0)) / h ** 2
    assert lap / 4 == pytest.approx(1.0, abs=1e-6)  # d^2 a / dz dzbar = e^{|z|^2} at 0


def test_torus_chart_is_translation():
    g = torus()
    c1 = build_preferred_chart(g, 0.2 + 0.3j)
    c2 = build_preferred_chart(g, 0.7 + 0.1j)
    assert np.allclose(c1.T, c2.T, atol=1e-15)
    zeta = np.array([0.05 + 0.02j])
    assert chart_invariants(g, c1) == chart_invariants(g, c2)
    assert np.allclose(c1.pullback_forms(g, zeta)[1], c1.pullback_forms(g)[1], atol=1e-14)


def test_frame_norm_is_one_at_center():
    for g in MODELS:
        f = heisenberg_chart(g, np.full(g.m, 0.2 - 0.1j)).preferred_frame
        assert float(np.reshape(f.norm(np.zeros(g.m)), ())) == pytest.approx(1.0, abs=1e-15)


def test_frame_hessian_matches_minus_g_plus_i_omega():
    g = torus()
    ch = heisenberg_chart(g, 0.3 + 0.4j)
    H = ch.preferred_frame.hessian_at_center()
    gm, om = ch.preferred_chart.pullback_forms(g)
    # d/dX of the connection form on Y: -(g + i omega)(X, Y), standard forms at the center
    assert np.abs(H + (gm + 1j * om)).max() <= 1e-8


def test_connection_linear_term_perturbed():
    g = projective_line_perturbed()
    ch = heisenberg_chart(g, 0.5)  # bump center
    h = 1e-4
    A = lambda z: complex(np.reshape(ch.connection_A(np.array([z])), -1)[0])
    # A(z) = -(i/2) zbar + O(|z|^2): d/dzbar by central differences
    dzb = 0.5 * ((A(h) - A(-h)) / (2 * h) + 1j * (A(1j * h) - A(-1j * h)) / (2 * h))
    assert dzb == pytest.approx(-0.5j, abs=1e-6)


def test_horizontal_lift_vanishes_at_center_and_is_linear():
    ch = heisenberg_chart(projective_line(), 0.4 - 0.2j)
    vz, vzb = horizontal_lift_coeffs(ch, np.zeros(1))
    assert np.abs(vz).max() == 0 and np.abs(vzb).max() == 0
    z = 1e-3 * (0.6 + 0.8j)
    vz, _ = horizontal_lift_coeffs(ch, np.array([z]))
    assert complex(np.reshape(vz, ())) == pytest.approx(0.5j * np.conj(z), abs=1e-6)


def test_torus_connection_exactly_linear():
    ch = heisenberg_chart(torus(), 0.1 + 0.2j)
    zs = np.array([[0.1 + 0.05j], [0.2 + 0.1j]])
    A = ch.connection_A(zs)[:, 0]
    assert A[1] == pytest.approx(2 * A[0], abs=1e-14)


def test_theta_shift_equivariance():
    g = projective_line()
    c0 = heisenberg_chart(g, BundlePoint(np.array([0.3 + 0.1j]), 0.0))
    c1 = heisenberg_chart(g, BundlePoint(np.array([0.3 + 0.1j]), 0.8))
    z0, t0 = c0.to_bundle(np.array([0.05j]), 0.1)
    z1, t1 = c1.to_bundle(np.array([0.05j]), 0.1)
    assert np.allclose(z0, z1) and float(np.reshape(t1 - t0, ())) == pytest.approx(0.8)


def test_chart_is_deterministic():
    g = projective_line_perturbed()
    a = build_preferred_chart(g, 0.45 + 0.05j)
    b = build_preferred_chart(g, 0.45 + 0.05j)
    assert np.array_equal(a.T, b.T) and np.array_equal(a.center, b.center)


def test_gauge_third_order_agreement():
    # two charts at the same point differing by a unitary rotation give weights that agree to O(|z|^3)
    g = projective_line_perturbed()
    c0 = heisenberg_chart(g, 0.45)
    c1 = heisenberg_chart(g, 0.45, rotation=0.7)
    errs = []
    for r in (0.04, 0.02):
        z = r * np.exp(0.3j)
        a0 = float(np.reshape(c0.weight_a(np.array([z])), ()))
        a1 = float(np.reshape(c1.weight_a(np.array([z * np.exp(-0.7j)])), ()))
        errs.append(abs(a0 - a1))
    assert errs[0] <= 1e-3 and (errs[1] == 0 or errs[0] / errs[1] > 6)


def test_out_of_chart_raises():
    ch = heisenberg_chart(projective_line(), 0.0)
    with pytest.raises(ChartError):
        horizontal_lift_coeffs(ch, np.array([10.0]))
    with pytest.raises(ChartError):
        build_preferred_chart(projective_line(), np.inf)
