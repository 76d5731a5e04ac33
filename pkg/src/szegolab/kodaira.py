"""Kodaira maps, the pulled-back Fubini-Study form, and injectivity diagnostics."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import HeisenbergChart, heisenberg_chart
from .models import BundlePoint, ModelGeometry, SzegoEvaluator, _real_forms, as_points
from .scaling import loglog_slope

PULLBACK_STEP = 3e-3
COLLISION_FLOOR = 1e-9
POSITIVITY_FLOOR = 1e-300


@dataclass(frozen=True)
class KodairaLift:
    level: int
    components: np.ndarray

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.components) ** 2))


def kodaira_lift(evaluator: SzegoEvaluator, x: BundlePoint) -> KodairaLift:
    """(S_1(x), ..., S_d(x)) for the orthonormal basis of the evaluator."""
    vals = evaluator.lift(x.z).reshape(-1) * np.exp(1j * evaluator.level * x.theta)
    return KodairaLift(evaluator.level, vals)


def _mixed_hessian(F, m: int, h: float) -> np.ndarray:
    """h_jk = d^2 F / dzeta_j d conj(eta_k) for F(zeta, eta) holomorphic x antiholomorphic
    (up to separately pluriharmonic terms), from central differences in real coordinates.
    """
    def e(a, s):
        v = np.zeros(m, complex)
        v[a % m] = s if a < m else 1j * s
        return v

    Dc =np.zeros((2 * m, 2 * m), dtype=complex)
    for a in range(2 * m):
        for b in range(2 * m):
            vals = [F(e(a, sa * h), e(b, sb * h)) for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
            Dc[a, b] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h * h)
    xx, xy, yx, yy = Dc[:m, :m], Dc[:m, m:], Dc[m:, :m], Dc[m:, m:]
    return 0.25 * (xx + yy + 1j * (xy - yx))


def pullback_fs_form(evaluator: SzegoEvaluator, chart: HeisenbergChart, zeta=None,
                     h: float = PULLBACK_STEP) -> np.ndarray:
    """(i/2) d^1 d^2 log Pi_N on the diagonal, as a real 2m x 2m matrix in chart coordinates.

    Mixed central differences of log Pi_N(x, y) (one step in each argument)
    with one Richardson refinement.
    """
    m = chart.m
    zeta = np.zeros(m, complex) if zeta is None else as_points(zeta, m).reshape(m)
    z0 = chart.preferred_chart.coord_map(zeta)
    k0 = complex(np.reshape(evaluator.kernel(z0, z0), ()))
    if k0.real <= POSITIVITY_FLOOR:
        raise ValueError("Pi_N(x, x) below positivity floor")

    def F(a, b):
        za = chart.preferred_chart.coord_map(zeta + a)
        zb = chart.preferred_chart.coord_map(zeta + b)
        return np.log(complex(np.reshape(evaluator.kernel(za, zb), ())) / k0)

    H1 = _mixed_hessian(F, m, h)
    H2 = _mixed_hessian(F, m, h / 2)
    H = (4 * H2 - H1) / 3
    return _real_forms(H)[1]


@dataclass
class TianReport:
    model_id: str
    Ns: list
    points: list
    errors: list  # C0 error per N
    fitted_order: Optional[float]
    matrices: dict = field(default_factory=dict)  # N -> list of (1/N) pullback matrices
    omega: list = field(default_factory=list)
    norm: str = "C0 (sup over sampled chart centers, max-abs matrix entry)"

    def to_dict(self) -> dict:
        return asdict(self)


def tian_error(geometry: ModelGeometry, Ns: Sequence[int], points,
               evaluators: Optional[dict] = None) -> TianReport:
    """Sup over points of |(1/N) Phi_N^* omega_FS - omega| in preferred charts at the points."""
    pts = as_points(points, geometry.m).reshape(-1, geometry.m)
    charts = [heisenberg_chart(geometry, p) for p in pts]
    w0 = charts[0].preferred_chart.pullback_forms(geometry)[1]
    errs, mats = [], {}
    for N in Ns:
        ev = evaluators[N] if evaluators else SzegoEvaluator(geometry, N)
        ms = [pullback_fs_form(ev, c) / N for c in charts]
        mats[int(N)] = [mm.tolist() for mm in ms]
        errs.append(float(max(np.abs(mm - c.preferred_chart.pullback_forms(geometry)[1]).max()
                              for mm, c in zip(ms, charts))))
    order = loglog_slope(Ns, errs) if len(Ns) >= 2 and min(errs) > 0 else None
    return TianReport(geometry.model_id, list(Ns), [[complex(p[0]).real, complex(p[0]).imag] for p in pts],
                      errs, order, mats, w0.tolist())


def form_checks(M: np.ndarray) -> dict:
    """Antisymmetry and realness of a computed 2-form matrix."""
    M = np.asarray(M)
    return {"antisymmetry": float(np.abs(M + M.T).max()), "imag": float(np.abs(np.imag(M)).max())}


# ---------------------------------------------------------------- f_N
def fN_profile(evaluator: SzegoEvaluator, chart: HeisenbergChart, v, ts) -> np.ndarray:
    """f_N(t) = |Pi_N(0, tv/sqrt N)|^2 / (Pi_N(0, 0) Pi_N(tv/sqrt N, tv/sqrt N))."""
    m = chart.m
    v = as_points(v, m).reshape(m)
    if not np.any(v):
        raise ValueError("v must be nonzero")
    N = evaluator.level
    ts = np.asarray(ts, float)
    zeta = ts[:, None] * v[None, :] / np.sqrt(N)
    chart.check_inside(zeta)
    z = chart.preferred_chart.coord_map(zeta)
    z0 = chart.preferred_chart.coord_map(np.zeros(m))
    K = evaluator.kernel(z0[None, :], z)
    return np.abs(K) ** 2 / (evaluator.diagonal(z0) * evaluator.diagonal(z))


def gaussian_envelope(v, ts) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, complex))
    return np.exp(-np.sum(np.abs(v) ** 2) * np.asarray(ts, float) ** 2)


def fn_band_constant(evaluator: SzegoEvaluator, chart: HeisenbergChart, v, ts) -> float:
    """C with sup_t |f_N(t) - exp(-|v|^2 t^2)| = C N^{-1/2}."""
    f = fN_profile(evaluator, chart, v, ts)
    return float(np.max(np.abs(f - gaussian_envelope(v, ts))) * np.sqrt(evaluator.level))


# --------------------------------------------------------- injectivity
def projective_sine(a: np.ndarray, b: np.ndarray) -> float:
    """sin of the Fubini-Study angle between [a] and [b], via the orthogonal component."""
    a = np.asarray(a, complex)
    b = np.asarray(b, complex)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    perp = b - a * (np.vdot(a, b) / na ** 2)
    return float(min(1.0, np.linalg.norm(perp) / nb))


def random_pairs(geometry: ModelGeometry, N: int, n: int, rng: np.random.Generator,
                 near_fraction: float = 0.5, C: float = 2.0):
    """Pairs covering both regimes: random far pairs and pairs at distance <= C/sqrt(N)."""
    n_near = int(round(n * near_fraction))
    P = geometry.sample_points(rng, n)
    Q = geometry.sample_points(rng, n)
    for i in range(n_near):
        chart = heisenberg_chart(geometry, P[i])
        r = C / np.sqrt(N) * rng.uniform(0.01, 1.0)
        zeta = r * np.exp(2j * np.pi * rng.uniform()) * np.ones(geometry.m) / np.sqrt(geometry.m)
        Q[i] = chart.preferred_chart.coord_map(zeta)
    return P, Q


@dataclass
class InjectivityReport:
    model_id: str
    N: int
    n_pairs: int
    collisions: int
    min_sine: float
    floor: float = COLLISION_FLOOR
    passed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def injectivity_scan(evaluator: SzegoEvaluator, P, Q, floor: float = COLLISION_FLOOR) -> InjectivityReport:
    """Count pairs whose lifts are projectively indistinguishable (sine < floor)."""
    g = evaluator.geometry
    P = as_points(P, g.m).reshape(-1, g.m)
    Q = as_points(Q, g.m).reshape(-1, g.m)
    LP = evaluator.lift(P)
    LQ = evaluator.lift(Q)
    sines = np.array([projective_sine(a, b) for a, b in zip(LP, LQ)])
    coll = int(np.sum(sines < floor))
    return InjectivityReport(g.model_id, evaluator.level, len(P), coll, float(sines.min()),
                             floor, coll == 0)
