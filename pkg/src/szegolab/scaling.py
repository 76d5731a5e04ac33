"""Near-diagonal scaling of Szegő kernels towards the Heisenberg model kernel."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import ChartError, HeisenbergChart, heisenberg_chart
from .models import ModelGeometry, SzegoEvaluator, as_points, heisenberg_model_kernel

RATIO_BAND = (0.3, 0.85)


def rescaled_kernel(evaluator: SzegoEvaluator, chart: HeisenbergChart, u, v,
                    theta=0.0, phi=0.0) -> np.ndarray:
    """N^{-m} Pi_N(u/sqrt(N), theta/N; v/sqrt(N), phi/N) in Heisenberg coordinates."""
    N, m = evaluator.level, chart.m
    u = as_points(u, m)
    v = as_points(v, m)
    s = 1 / np.sqrt(N)
    chart.check_inside(u * s)
    chart.check_inside(v * s)
    zu, tu = chart.to_bundle(u * s, np.asarray(theta) / N)
    zv, tv = chart.to_bundle(v * s, np.asarray(phi) / N)
    return evaluator.kernel(zu, zv) * np.exp(1j * N * (tu - tv)) / N ** m


def default_grid(m: int = 1, radius: float = 2.0, step: float = 0.5):
    """(u, v, theta, phi) arrays: all pairs of lattice points with |u|, |v| <= radius.

    theta = phi = 0 on the main block, plus a slice with theta - phi != 0.
    """
    t = np.arange(-radius, radius + 1e-12, step)
    if m == 1:
        pts = (t[:, None] + 1j * t[None, :]).reshape(-1)
        pts = pts[np.abs(pts) <= radius + 1e-12][:, None]
    else:
        s = np.array([0, 1, -1j, 0.5 + 0.5j, -1 + 0.5j, 1.2 - 0.8j])
        pts = np.array([[a, b] for a in s for b in s])
        pts = pts[np.sqrt(np.sum(np.abs(pts) ** 2, axis=1)) <= radius + 1e-12]
    n = len(pts)
    U = np.repeat(pts, n, axis=0)
    V = np.tile(pts, (n, 1))
    th = np.zeros(len(U))
    ph = np.zeros(len(U))
    # theta slice on the diagonal pairs
    U = np.concatenate([U, pts])
    V = np.concatenate([V, pts[::-1]])
    th = np.concatenate([th, np.full(n, 0.7)])
    ph = np.concatenate([ph, np.full(n, -0.4)])
    return U, V, th, ph


def universality_residual(evaluator: SzegoEvaluator, chart: HeisenbergChart, grid=None) -> float:
    """sup over the grid of |rescaled kernel - Heisenberg kernel|."""
    U, V, th, ph = default_grid(chart.m) if grid is None else grid
    r = rescaled_kernel(evaluator, chart, U, V, th, ph)
    h = heisenberg_model_kernel(U, th, V, ph, chart.m)
    return float(np.max(np.abs(r - h)))


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@dataclass
class ScalingReport:
    model_id: str
    center: list
    Ns: list
    residuals: list
    ratios: list
    fitted_exponent: Optional[float]
    ratio_band: tuple = RATIO_BAND
    monotone: bool = False
    ratios_in_band: bool = False
    grid_size: int = 0
    passed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def scaling_report(geometry: ModelGeometry, P0, Ns: Sequence[int], grid=None,
                   evaluators: Optional[dict] = None, band=RATIO_BAND) -> ScalingReport:
    chart = heisenberg_chart(geometry, P0)
    g = default_grid(geometry.m) if grid is None else grid
    res = []
    for N in Ns:
        ev = evaluators[N] if evaluators else SzegoEvaluator(geometry, N)
        res.append(universality_residual(ev, chart, g))
    ratios = [res[i + 1] / res[i] if res[i] > 0 else float("nan") for i in range(len(res) - 1)]
    slope = loglog_slope(Ns, res) if len(res) >= 3 and min(res) > 0 else None
    mono = all(res[i + 1] < res[i] for i in range(len(res) - 1))
    inband = all(band[0] <= r <= band[1] for r in ratios)
    P = as_points(P0, geometry.m).reshape(-1)
    return ScalingReport(geometry.model_id, [[p.real, p.imag] for p in P], list(Ns), res, ratios,
                         slope, tuple(band), mono, inband, len(g[0]), mono and inband)


def fit_expansion_coefficients(geometry: ModelGeometry, chart: HeisenbergChart, u, v,
                               Ns: Sequence[int], K: int, evaluators: Optional[dict] = None):
    """Least-squares fit of rescaled/Heisenberg - 1 against N^{-r/2}, r = 1..K.

    Returns (coefficients b_1..b_K, rms fit residual). Raises ValueError for
    too few or clustered levels.
    """
    Ns = np.asarray(sorted(Ns), float)
    if len(Ns) < K + 2:
        raise ValueError(f"need at least K+2 = {K + 2} levels, got {len(Ns)}")
    if Ns[-1] / Ns[0] < 4:
        raise ValueError("levels too clustered for a stable fit")
    y = []
    for N in Ns:
        ev = evaluators[int(N)] if evaluators else SzegoEvaluator(geometry, int(N))
        r = rescaled_kernel(ev, chart, u, v)
        y.append(complex(np.reshape(r / heisenberg_model_kernel(u, 0, v, 0, chart.m), ())) - 1)
    A = np.stack([Ns ** (-r / 2) for r in range(1, K + 1)], axis=1)
    if np.linalg.cond(A) > 1e12:
        raise ValueError("ill-conditioned design matrix")
    coef, *_ = np.linalg.lstsq(A.astype(complex), np.array(y), rcond=None)
    fit = float(np.sqrt(np.mean(np.abs(A @ coef - np.array(y)) ** 2)))
    return coef, fit


def diagonal_expansion(geometry: ModelGeometry, points, Ns: Sequence[int],
                       evaluators: Optional[dict] = None):
    """Fit N^{-m} Pi_N(x, x) = a0 + a1/N at each point; returns (a0, a1) arrays."""
    pts = as_points(points, geometry.m)
    Ns = np.asarray(Ns, float)
    vals = []
    for N in Ns:
        ev = evaluators[int(N)] if evaluators else SzegoEvaluator(geometry, int(N))
        vals.append(ev.diagonal(pts) / N ** geometry.m)
    A = np.stack([np.ones_like(Ns), 1 / Ns], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.array(vals), rcond=None)
    return coef[0], coef[1]
