"""Acceptance criteria 1-10, one test each.

Every criterion prints a single ``criterion k: PASS|FAIL  <detail>`` line (also
collected into the end-of-run summary by conftest). Run directly with
``python3 tests/test_acceptance.py`` for the lines alone.
"""
from __future__ import annotations

import numpy as np
import pytest

from szegolab import statphase as sp
from szegolab import symbolcalc as sc
from szegolab.geometry import heisenberg_chart
from szegolab.kodaira import fN_profile, gaussian_envelope, injectivity_scan, random_pairs, tian_error
from szegolab.models import (
    SzegoEvaluator,
    bargmann_fock,
    kernel_axioms,
    projective_line,
    projective_line_perturbed,
    torus,
)
from szegolab.scaling import diagonal_expansion, scaling_report
from szegolab.transversality import (
    ChernData,
    SearchParams,
    build_lattice,
    decay_profile,
    donaldson_search,
    far_field_max,
    fit_decay_constant,
    genus_adjunction,
    random_chern_data,
)

RESULTS: dict = {}
_EVALS: dict = {}


def _ev(g, N):
    key = (g.model_id, N)
    if key not in _EVALS:
        _EVALS[key] = SzegoEvaluator(g, N)
    return _EVALS[key]


def _record(k: int, ok: bool, detail: str) -> bool:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[k] = line
    print(line)
    return ok


def _fmt(xs):
    return "[" + ", ".join(f"{x:.3g}" for x in xs) + "]"


# ------------------------------------------------------------------ criteria
def criterion_1():
    """Near-diagonal universality: residuals monotone, ratios in [0.3, 0.85]."""
    parts, ok = [], True
    for g in (torus(), projective_line()):
        Ns = [64, 128, 256]
        rep = scaling_report(g, 0.3 + 0.2j, Ns, evaluators={N: _ev(g, N) for N in Ns})
        ok &= rep.passed
        parts.append(f"{g.kind}: residuals {_fmt(rep.residuals)} ratios {_fmt(rep.ratios)}")
    return _record(1, ok, "; ".join(parts))


def criterion_2():
    """a0 within 2% of 1/pi on compact curves; exact P1 diagonal (N+1)/pi within 1e-10."""
    pts = np.array([[0.2 + 0.1j], [0.7 + 0.6j], [-0.4j], [1.5 - 2j]])
    Ns = [64, 128, 256]
    ok, parts = True, []
    for g in (projective_line(), projective_line_perturbed(), torus()):
        a0, _ = diagonal_expansion(g, pts, Ns, {N: _ev(g, N) for N in Ns})
        rel = float(np.max(np.abs(a0 * np.pi - 1)))
        ok &= rel <= 0.02
        parts.append(f"{g.kind} |pi a0 - 1| = {rel:.2e}")
    g = projective_line()
    exact = max(float(np.max(np.abs(_ev(g, N).diagonal(pts) - (N + 1) / np.pi))) for N in (1, 16, 64, 256))
    ok &= exact <= 1e-10
    parts.append(f"exact diagonal error {exact:.1e}")
    return _record(2, ok, "; ".join(parts))


def criterion_3():
    """Tian: perturbed log-log slope in [-1.5, -0.7]; exact P1 error <= 1e-8."""
    pts = [0.5 + 0.25 * (a + 1j * b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    gp = projective_line_perturbed()
    Ns = [32, 64, 128]
    rep = tian_error(gp, Ns, pts, {N: _ev(gp, N) for N in Ns})
    g = projective_line()
    ex = tian_error(g, Ns, pts, {N: _ev(g, N) for N in Ns})
    ok = -1.5 <= rep.fitted_order <= -0.7 and max(ex.errors) <= 1e-8
    return _record(3, ok, f"perturbed errors {_fmt(rep.errors)} slope {rep.fitted_order:.3f}; "
                          f"exact max {max(ex.errors):.1e}")


def criterion_4():
    """Kodaira injectivity and f_N profiles."""
    rng = np.random.default_rng(0)
    ok, parts = True, []
    models = (projective_line(), projective_line_perturbed(), torus())
    for g in models:
        for N in (16, 64):
            P, Q = random_pairs(g, N, 200, rng)
            r = injectivity_scan(_ev(g, N), P, Q)
            ok &= r.collisions == 0 and r.n_pairs >= 200
            parts.append(f"{g.kind} N={N} collisions {r.collisions} min sine {r.min_sine:.2g}")
    ts = np.linspace(0, 1, 41)
    for g in models:
        chart = heisenberg_chart(g, 0.3 + 0.2j)
        env = gaussian_envelope(1.0, ts)
        Cs = []
        for N in (64, 256):
            f = fN_profile(_ev(g, N), chart, 1.0, ts)
            ok &= abs(f[0] - 1) <= 1e-10 and f.max() <= 1 + 1e-12
            Cs.append(float(np.max(np.abs(f - env)) * np.sqrt(N)))
        # both constants at round-off means f_N is the Gaussian itself: nothing to compare
        stable = max(Cs) < 1e-10 or 0.5 * Cs[0] <= Cs[1] <= 1.5 * Cs[0]
        ok &= stable
        parts.append(f"{g.kind} band C(64, 256) = {_fmt(Cs)}")
    return _record(4, ok, "; ".join(parts))


def criterion_5():
    """Decay sandwich at N in {64, 256} with one fitted C; far field <= 1e-8 at N = 256."""
    radii = np.linspace(0, 2, 9)
    ok, parts = True, []
    for g in (projective_line(), torus()):
        C = fit_decay_constant(_ev(g, 64), build_lattice(g, 64).points, radii, 0.2)
        for N in (64, 256):
            t = decay_profile(_ev(g, N), build_lattice(g, N).points, radii, 0.2, C=C)
            ok &= t.passed
            parts.append(f"{g.kind} N={N} C={C:.3g} violations {t.violations_lower}/{t.violations_upper}")
        ff = far_field_max(_ev(g, 256), build_lattice(g, 256).points)
        ok &= ff <= 1e-8
        parts.append(f"{g.kind} far field max {ff:.3g} (bound 1e-8)")
    return _record(5, ok, "; ".join(parts))


def criterion_6():
    """Search attains eta > 0 at N in {16, 36, 64}; max/min eta < 3; exact zero counts."""
    g = torus()
    etas, ok = [], True
    for N in (16, 36, 64):
        _, rep = donaldson_search(_ev(g, N), build_lattice(g, N), SearchParams(seed=0, iterations=20))
        etas.append(rep.eta)
        ok &= rep.eta > 0 and rep.accepted_counts_ok and rep.zero_count == N
    ratio = max(etas) / min(etas) if min(etas) > 0 else float("inf")
    ok &= ratio < 3
    return _record(6, ok, f"eta {_fmt(etas)} ratio {ratio:.3f}")


def criterion_7():
    """Genus: CP2 cubic, CP3 line, and 10 random trivial-bundle specializations."""
    ok = genus_adjunction(ChernData.basic(2, 1, 3), 3) == 1
    ok &= genus_adjunction(ChernData.basic(3, 1, 4), 1, "codim") == 0
    rng = np.random.default_rng(2024)
    agree = 0
    for i in range(10):
        m = 2 + i % 3
        c = random_chern_data(rng, m).trivialized()
        b = ChernData.basic(m, c.c1L_m, c.c1M_c1L)
        N = int(rng.integers(1, 9))
        same = genus_adjunction(c, N, "twisted") == genus_adjunction(b, N, "codim")
        if m == 2:
            same &= genus_adjunction(b, N, "surface") == genus_adjunction(b, N, "codim")
        agree += same
    ok &= agree == 10
    return _record(7, ok, f"examples ok, random consistency {agree}/10")


def criterion_8():
    """zeta2 slope >= 1.9, zeta1 slope 1.0 +- 0.2; identities within 1e-8."""
    frame = sc.FrameField(0.3)
    _, s1 = sc.ideal_slope(frame, 1)
    _, s2 = sc.ideal_slope(frame, 2)
    worst = 0.0
    rng = np.random.default_rng(8)
    for x in [sc.DEFAULT_BASE[:4]] + list(0.2 * rng.normal(size=(9, 4))):
        N = sc.nijenhuis(frame, x)
        ids = sc.nijenhuis_identities(N)
        nu = sc.nu_identities(sc.nu_coefficients(frame, x, 1.3, N))
        worst = max(worst, ids["antisymmetry"], ids["cyclic"], nu["symmetry"], nu["cyclic"],
                    sc.soln2_residual(frame, x, 1.3, N))
    ok = s2 >= 1.9 and abs(s1 - 1) <= 0.2 and worst <= 1e-8
    return _record(8, ok, f"slopes zeta1 {s1:.3f} zeta2 {s2:.3f}; worst identity residual {worst:.1e}")


def criterion_9():
    """Error order >= J + 0.7 for J = 0, 1, 2 on three amplitudes; phase identities 1e-10."""
    ok, parts = True, []
    for name in sp.TEST_AMPLITUDES:
        orders = [-s for s in sp.error_orders(sp.BUNDLED_AMPLITUDES[name], (64, 128, 256), 2)]
        ok &= all(o >= j + 0.7 for j, o in enumerate(orders))
        parts.append(f"{name} {_fmt(orders)}")
    gr = float(np.abs(sp.psi_grad(*sp.CRIT)).max())
    he = float(np.abs(sp.psi_hessian(*sp.CRIT) - sp.HESSIAN).max())
    ok &= gr <= 1e-10 and he <= 1e-10
    return _record(9, ok, "orders " + "; ".join(parts) + f"; gradient {gr:.1e} hessian {he:.1e}")


def criterion_10():
    """Hermiticity, equivariance, reproducing, dimension on exact models at N <= 32."""
    ok, worst = True, {"hermitian": 0.0, "equivariance": 0.0, "reproducing": 0.0, "dimension": 0.0}
    for g in (bargmann_fock(1), bargmann_fock(2), projective_line(), torus()):
        for N in (1, 8, 32):
            r = kernel_axioms(SzegoEvaluator(g, N))
            scale = (N / np.pi) ** g.m  # size of Pi_N on the diagonal
            ok &= r["hermitian"] <= 1e-10 * scale and r["equivariance"] <= 1e-10 * scale
            ok &= r["reproducing"] <= 1e-6 * scale
            worst["hermitian"] = max(worst["hermitian"], r["hermitian"] / scale)
            worst["equivariance"] = max(worst["equivariance"], r["equivariance"] / scale)
            worst["reproducing"] = max(worst["reproducing"], r["reproducing"] / scale)
            if g.is_compact:  # d_N is infinite on the plane
                ok &= r["dimension"] <= 1e-6
                worst["dimension"] = max(worst["dimension"], r["dimension"])
    return _record(10, ok, "worst relative residuals " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.acceptance
@pytest.mark.parametrize("k", range(1, 11))
def test_criterion(k):
    assert CRITERIA[k - 1](), RESULTS[k]


if __name__ == "__main__":
    for fn in CRITERIA:
        fn()
