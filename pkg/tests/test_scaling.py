from __future__ import annotations

import numpy as np
import pytest

from szegolab.geometry import ChartError, heisenberg_chart
from szegolab.models import SzegoEvaluator, bargmann_fock, heisenberg_model_kernel, projective_line, torus
from szegolab.scaling import (
    default_grid,
    diagonal_expansion,
    fit_expansion_coefficients,
    loglog_slope,
    rescaled_kernel,
    scaling_report,
    universality_residual,
)


@pytest.mark.parametrize("m,center", [(1, [0.3j]), (2, [0.3j, 0.1])])
def test_bargmann_fock_is_its_own_limit(m, center):
    g = bargmann_fock(m)
    ev = SzegoEvaluator(g, 16)
    assert universality_residual(ev, heisenberg_chart(g, np.array(center))) <= 1e-13


def test_origin_limit_is_inverse_pi():
    g = projective_line()
    ch = heisenberg_chart(g, 0.3 + 0.2j)
    vals = [complex(np.reshape(rescaled_kernel(SzegoEvaluator(g, N), ch, 0, 0), ())) for N in (64, 1024)]
    # (N + 1) / (pi N) -> 1/pi
    assert vals[1].real == pytest.approx(1 / np.pi * (1 + 1 / 1024), rel=1e-12)
    assert abs(vals[1] - 1 / np.pi) < abs(vals[0] - 1 / np.pi)


def test_torus_single_point_bound(evaluators, flat_torus):
    ch = heisenberg_chart(flat_torus, 0.2)
    r = rescaled_kernel(evaluators(flat_torus, 64), ch, 1.0, 0.0)
    assert abs(complex(np.reshape(r, ())) - complex(np.reshape(heisenberg_model_kernel(1, 0, 0, 0), ()))) <= 0.1


def test_projective_line_ratio_band():
    rep = scaling_report(projective_line(), 0.3 + 0.2j, [64, 128, 256])
    assert rep.monotone
    assert all(0.35 <= r <= 0.8 for r in rep.ratios)
    assert rep.fitted_exponent == pytest.approx(-0.5, abs=0.1)


def test_grid_has_theta_slice():
    U, V, th, ph = default_grid(1)
    assert np.all(np.abs(U) <= 2 + 1e-12) and np.any(th != ph)


def test_rescaled_kernel_outside_chart_raises():
    g = projective_line()
    with pytest.raises(ChartError):
        rescaled_kernel(SzegoEvaluator(g, 4), heisenberg_chart(g, 0.0), 10.0, 0.0)


def test_fit_requires_enough_levels():
    g = projective_line()
    ch = heisenberg_chart(g, 0.1)
    with pytest.raises(ValueError):
        fit_expansion_coefficients(g, ch, 0.5, 0.0, [64, 128, 256], 2)
    with pytest.raises(ValueError):
        fit_expansion_coefficients(g, ch, 0.5, 0.0, [64, 65, 66, 67, 68], 2)


def test_bargmann_fock_coefficients_vanish():
    g = bargmann_fock(1)
    b, fit = fit_expansion_coefficients(g, heisenberg_chart(g, 0.0), 0.7, -0.2j, [16, 32, 64, 128, 256], 3)
    assert np.abs(b).max() <= 1e-10 and fit <= 1e-12


def test_odd_coefficient_vanishes_on_diagonal():
    g = projective_line()
    b, _ = fit_expansion_coefficients(g, heisenberg_chart(g, 0.3 + 0.2j), 0, 0, [64, 128, 256, 512, 1024], 2)
    assert abs(b[0]) <= 1e-9
    assert b[1] == pytest.approx(1.0, abs=1e-9)  # (N+1)/N on the diagonal


def test_coefficient_parity():
    g = projective_line()
    ch = heisenberg_chart(g, 0.3 + 0.2j)
    Ns = [128, 256, 512, 1024, 2048, 4096, 8192]
    u, v = 0.8 + 0.3j, -0.4 + 0.5j
    b, _ = fit_expansion_coefficients(g, ch, u, v, Ns, 4)
    c, _ = fit_expansion_coefficients(g, ch, -u, -v, Ns, 4)
    assert abs(b[0] + c[0]) <= 1e-3 * abs(b[0])
    assert abs(b[1] - c[1]) <= 1e-3 * abs(b[1])


def test_diagonal_expansion_models(p1_pert, flat_torus):
    for g, pts in ((projective_line(), [0.3, 1.5j]), (p1_pert, [0.3, 0.5]), (flat_torus, [0.3, 0.5])):
        a0, _ = diagonal_expansion(g, pts, [64, 128, 256])
        assert np.all(np.abs(a0 * np.pi - 1) <= 0.02)
    a0, a1 = diagonal_expansion(projective_line(), [0.3, -2j], [64, 128, 256])
    assert np.allclose(a0, 1 / np.pi, rtol=1e-12) and np.allclose(a1, 1 / np.pi, rtol=1e-10)


def test_chart_covariance_exact_models():
    g = projective_line()
    ev = SzegoEvaluator(g, 64)
    r0 = universality_residual(ev, heisenberg_chart(g, 0.4 - 0.1j))
    r1 = universality_residual(ev, heisenberg_chart(g, 0.4 - 0.1j, rotation=1.1))
    # a rotated chart permutes the (u, v) grid only approximately; compare the sup
    assert abs(r0 - r1) <= 0.1 * r0


def test_loglog_slope():
    assert loglog_slope([1, 2, 4], [1, 0.5, 0.25]) == pytest.approx(-1.0)
