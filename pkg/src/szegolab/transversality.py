"""Peak sections, decay checks, lattices, transverse-section search, zeros, and genus arithmetic."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .geometry import HeisenbergChart, build_preferred_chart, heisenberg_chart
from .models import ModelError, ModelGeometry, SzegoEvaluator, as_points, theta_combination

DEFAULT_EPS = 0.2
DECAY_ATOL = 1e-8  # additive slack standing in for the O(N^-inf) of a "lesssim" bound
FAR_FIELD_BOUND = 1e-8
_NODE_CACHE: dict = {}

# Wirtinger transform: (d/dzeta_j, d/dzetabar_j) = P (d/dx_j, d/dy_j)
def _wirtinger(m: int) -> np.ndarray:
    I = np.eye(m)
    return np.block([[0.5 * I, -0.5j * I], [0.5 * I, 0.5j * I]])


# ------------------------------------------------------------ distances
def model_distance(geometry: ModelGeometry, p, q) -> np.ndarray:
    """Riemannian distance d(p, q) for the models with closed-form geodesics."""
    p = as_points(p, geometry.m)
    q = as_points(q, geometry.m)
    if geometry.kind == "bargmann_fock":
        return np.sqrt(np.sum(np.abs(p - q) ** 2, axis=-1))
    if geometry.kind == "projective_line":
        z, w = p[..., 0], q[..., 0]
        c = np.abs(1 + z * np.conj(w)) / np.sqrt((1 + np.abs(z) ** 2) * (1 + np.abs(w) ** 2))
        return np.arccos(np.clip(c, 0.0, 1.0))
    if geometry.kind == "torus":
        t = complex(geometry.tau).imag
        d = q[..., 0] - p[..., 0]
        dx = d.real - np.round(d.real)
        dy = d.imag - t * np.round(d.imag / t)
        return np.sqrt(np.pi / t) * np.hypot(dx, dy)
    raise ModelError(f"no closed-form distance on {geometry.kind}")


# ------------------------------------------------------------- sections
class BasisSection:
    """Level-N section s = sum_j c_j S_j, evaluated as its lift at theta = 0."""

    def __init__(self, evaluator: SzegoEvaluator, coeffs: np.ndarray):
        self.evaluator = evaluator
        self.coeffs = np.asarray(coeffs, complex)

    @property
    def level(self) -> int:
        return self.evaluator.level

    @property
    def geometry(self) -> ModelGeometry:
        return self.evaluator.geometry

    def values(self, z) -> np.ndarray:
        g = self.geometry
        if g.kind == "torus" and self.coeffs.ndim == 1:
            return theta_combination(g, as_points(z, 1)[..., 0], self.level, self.coeffs)
        return self.evaluator.lift(z) @ self.coeffs

    def __call__(self, x) -> complex:
        return complex(np.reshape(self.values(x.z), ()) * np.exp(1j * self.level * x.theta))

    def scaled(self, c: complex) -> "BasisSection":
        return BasisSection(self.evaluator, c * self.coeffs)


def _peak_coeffs(evaluator: SzegoEvaluator, p) -> np.ndarray:
    """Coefficient vectors (n, d) of sigma_p = Pi_N(., p) / Pi_N(p, p)."""
    S = evaluator.lift(as_points(p, evaluator.m).reshape(-1, evaluator.m))
    diag = np.sum(np.abs(S) ** 2, axis=-1)
    if np.any(diag <= 0):
        raise ValueError("Pi_N(p, p) must be positive")
    return np.conj(S) / diag[:, None]


class PeakSection(BasisSection):
    """sigma_p^N(x) = Pi_N(x, p) / Pi_N(p, p); sigma_p(p) = 1."""

    def __init__(self, evaluator: SzegoEvaluator, p):
        self.center = as_points(p, evaluator.m).reshape(evaluator.m)
        super().__init__(evaluator, _peak_coeffs(evaluator, self.center)[0])

    def modulus(self, q) -> np.ndarray:
        """|sigma_p(q)| from the kernel (independent of fiber angles)."""
        ev = self.evaluator
        q = as_points(q, ev.m)
        return np.abs(ev.kernel(q, self.center)) / ev.diagonal(self.center)


def peak_section(evaluator: SzegoEvaluator, p) -> PeakSection:
    return PeakSection(evaluator, p)


class LatticeSection(BasisSection):
    """s_N = sum_i w_i sigma_{p_i}^N with |w_i| < 1."""

    def __init__(self, evaluator: SzegoEvaluator, points, weights, peak_matrix=None):
        points = as_points(points, evaluator.m).reshape(-1, evaluator.m)
        weights = np.asarray(weights, complex)
        if weights.shape != (len(points),):
            raise ValueError("one weight per lattice point")
        if np.any(np.abs(weights) >= 1):
            raise ValueError("weights must satisfy |w_i| < 1")
        self.points = points
        self.weights = weights
        P = _peak_coeffs(evaluator, points) if peak_matrix is None else peak_matrix
        self.peak_matrix = P
        super().__init__(evaluator, weights @ P)


# ------------------------------------------------------------ derivatives
def covariant_derivatives(section: BasisSection, z, h: Optional[float] = None):
    """(nabla^{1,0} s, nabla^{0,1} s) at base points, in unit preferred coordinates.

    In the standard frame the lift is f a^{-N/2}; so
    nabla^{1,0} s -> d s^ - (N/2) s^ d(log a) and nabla^{0,1} s -> dbar s^ + (N/2) s^ dbar(log a),
    with coordinate derivatives of the lift by central differences plus one
    Richardson step, then transported to orthonormal coordinates by T^T.
    At a point these equal the horizontal-lift derivatives in the Heisenberg
    chart centered there. Returns arrays of shape (..., m).
    """
    g = section.geometry
    m, N = g.m, section.level
    z = as_points(z, m)
    h = 1e-3 / np.sqrt(N) if h is None else h

    def grad(step):
        d = np.zeros(z.shape[:-1] + (2 * m,), complex)
        for a in range(2 * m):
            e = np.zeros(m, complex)
            e[a % m] = step if a < m else 1j * step
            d[..., a] = (section.values(z + e) - section.values(z - e)) / (2 * step)
        return d

    d = (4 * grad(h / 2) - grad(h)) / 3
    dz = 0.5 * (d[..., :m] - 1j * d[..., m:])
    dzb = 0.5 * (d[..., :m] + 1j * d[..., m:])
    s = section.values(z)[..., None]
    dl = g.dlog_a(z)
    d10 = dz - 0.5 * N * s * dl
    d01 = dzb + 0.5 * N * s * np.conj(dl)
    out10, out01 = np.empty_like(d10), np.empty_like(d01)
    flat = z.reshape(-1, m)
    for i, p in enumerate(flat):
        T = build_preferred_chart(g, p).T
        idx = np.unravel_index(i, z.shape[:-1]) if z.ndim > 1 else ()
        out10[idx] = d10[idx] @ T
        out01[idx] = d01[idx] @ np.conj(T)
    return out10, out01


def _local_jets(values, chart: HeisenbergChart, N: int, h1: Optional[float] = None,
                h2: Optional[float] = None):
    """Jets of a vector of lifted sections, values(z) -> (k,), at the chart center."""
    m = chart.m
    h1 = 1e-3 / np.sqrt(N) if h1 is None else h1
    h2 = 1e-2 / np.sqrt(N) if h2 is None else h2
    P = _wirtinger(m)

    def s_loc(zeta):
        z, th = chart.to_bundle(zeta, 0.0)
        return np.atleast_1d(values(z)) * np.exp(1j * N * th)

    def A_full(zeta):
        A = chart.connection_A(zeta)
        return np.concatenate([A, np.conj(A)], axis=-1)

    def e(a, s):
        v = np.zeros(m, complex)
        v[a % m] = s if a < m else 1j * s
        return v

    def d1(f, h):
        return np.stack([(f(e(a, h)) - f(e(a, -h))) / (2 * h) for a in range(2 * m)])

    def d2(f, h):
        f0 = f(np.zeros(m, complex))
        D = np.zeros((2 * m, 2 * m) + np.shape(f0), complex)
        for a in range(2 * m):
            for b in range(2 * m):
                if a == b:
                    D[a, a] = (f(e(a, h)) - 2 * f0 + f(e(a, -h))) / h ** 2
                else:
                    D[a, b] = (f(e(a, h) + e(b, h)) - f(e(a, h) + e(b, -h))
                               - f(e(a, -h) + e(b, h)) + f(e(a, -h) + e(b, -h))) / (4 * h * h)
        return D

    s0 = s_loc(np.zeros(m, complex))
    g1 = (4 * d1(s_loc, h1 / 2) - d1(s_loc, h1)) / 3
    A0 = A_full(np.zeros(m, complex))
    D = P @ g1 - 1j * N * A0[:, None] * s0[None, :]
    g2 = (4 * d2(s_loc, h2 / 2) - d2(s_loc, h2)) / 3
    W2 = np.einsum("ai,ijk,bj->abk", P, g2, P)
    dA = (4 * d1(A_full, h1 / 2) - d1(A_full, h1)) / 3  # (2m real directions, 2m)
    DD = W2 - 1j * N * (P @ dA)[..., None] * s0
    return s0, D, DD


def section_jets(section: BasisSection, chart: HeisenbergChart, h1: Optional[float] = None,
                 h2: Optional[float] = None):
    """Covariant 1- and 2-jets at the chart center through horizontal lifts.

    Returns (value, D, DD) with D = (D_1..D_m, Dbar_1..Dbar_m) and
    DD[a, b] = Wirtinger derivative a of D_b, where
    D_b = d/dzeta_b - i N A_b (and conjugates) acting on the local lift
    s_loc(zeta) = s^(zeta, theta' = 0).
    """
    s0, D, DD = _local_jets(section.values, chart, section.level, h1, h2)
    return complex(s0[0]), D[:, 0], DD[..., 0]


# ------------------------------------------------------------ decay
@dataclass
class DecayTable:
    level: int
    eps: float
    C: float
    rows: list  # (center index, d_N, |sigma|, lower, upper)
    violations_lower: int
    violations_upper: int
    derivative_constants: dict = field(default_factory=dict)
    derivative_violations: dict = field(default_factory=dict)
    passed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _decay_samples(geometry: ModelGeometry, N: int, centers, radii, directions: int):
    """Points q around each center with requested scaled radii, and their true d_N."""
    centers = as_points(centers, geometry.m).reshape(-1, geometry.m)
    ang = np.exp(2j * np.pi * (np.arange(directions) + 0.5) / directions)
    Q, idx = [], []
    for i, p in enumerate(centers):
        chart = heisenberg_chart(geometry, p)
        u = (np.asarray(radii, float)[:, None] * ang[None, :]).reshape(-1)
        zeta = u[:, None] / np.sqrt(N) * np.ones(geometry.m) / np.sqrt(geometry.m)
        chart.check_inside(zeta)
        Q.append(chart.preferred_chart.coord_map(zeta))
        idx.append(np.full(len(u), i))
    Q = np.concatenate(Q)
    idx = np.concatenate(idx)
    dN = np.sqrt(N) * model_distance(geometry, centers[idx], Q)
    return centers, Q, idx, dN


def _peak_moduli(evaluator: SzegoEvaluator, centers, Q, idx, chunk: int = 2048) -> np.ndarray:
    if evaluator.geometry.kind in ("projective_line", "bargmann_fock"):
        return np.abs(evaluator.kernel(Q, centers[idx])) / evaluator.diagonal(centers[idx])
    S = evaluator.lift(centers)
    diag = np.sum(np.abs(S) ** 2, axis=-1)
    out = np.empty(len(Q))
    for s in range(0, len(Q), chunk):
        sl = slice(s, s + chunk)
        out[sl] = np.abs(np.sum(evaluator.lift(Q[sl]) * np.conj(S[idx[sl]]), axis=-1)) / diag[idx[sl]]
    return out


def fit_decay_constant(evaluator: SzegoEvaluator, centers, radii, eps: float = DEFAULT_EPS,
                       directions: int = 8) -> float:
    """Smallest C >= 0 for which bounds (i) and (ii) hold on the sampled points."""
    g, N = evaluator.geometry, evaluator.level
    centers, Q, idx, dN = _decay_samples(g, N, centers, radii, directions)
    s = _peak_moduli(evaluator, centers, Q, idx)
    ok = dN > 1e-12
    x = dN[ok] / np.sqrt(N)
    c_low = (1 - s[ok] * np.exp((1 + eps) * dN[ok] ** 2 / 2)) / x
    c_up = (s[ok] * np.exp((1 - eps) * dN[ok] ** 2 / 2) - 1) / x
    return float(max(0.0, c_low.max(), c_up.max()))


def decay_profile(evaluator: SzegoEvaluator, centers, radii, eps: float = DEFAULT_EPS,
                  C: Optional[float] = None, directions: int = 8, derivatives: bool = False,
                  derivative_constants: Optional[dict] = None, atol: float = DECAY_ATOL) -> DecayTable:
    """Check the peak-section decay sandwich (i)-(ii) and, optionally, the scaled
    derivative bounds (iii)-(iv) for k <= 2 / k <= 1.

    C (and derivative constants) are fitted here if not supplied; pass the
    values fitted at the smallest N to freeze them.
    """
    g, N = evaluator.geometry, evaluator.level
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if np.max(radii) > N ** (1 / 6) + 1e-12:
        raise ValueError("radius beyond the N^{1/6} regime")
    if C is None:
        C = fit_decay_constant(evaluator, centers, radii, eps, directions)
    centers, Q, idx, dN = _decay_samples(g, N, centers, radii, directions)
    s = _peak_moduli(evaluator, centers, Q, idx)
    x = dN / np.sqrt(N)
    lower = (1 - C * x) * np.exp(-(1 + eps) * dN ** 2 / 2)
    upper = (1 + C * x) * np.exp(-(1 - eps) * dN ** 2 / 2)
    vl = int(np.sum(s < lower - 1e-12))
    vu = int(np.sum(s > upper + atol))
    rows = [(int(i), float(d), float(a), float(lo), float(up))
            for i, d, a, lo, up in zip(idx, dN, s, lower, upper)]
    dc, dv = {}, {}
    if derivatives:
        ratios = {"k1": [], "k2": [], "dbar0": [], "dbar1": []}
        amounts = {"k1": [], "k2": [], "dbar0": [], "dbar1": []}
        envs = []
        m = g.m
        for i, p in enumerate(centers):
            sec = PeakSection(evaluator, p)
            sel = np.flatnonzero(idx == i)
            for j in sel:
                chart = heisenberg_chart(g, Q[j])
                _, D, DD = section_jets(sec, chart)
                env = np.exp(-(1 - eps) * dN[j] ** 2 / 2)
                vals = {"k1": np.linalg.norm(D) / np.sqrt(N),
                        "k2": np.linalg.norm(DD) / N,
                        "dbar0": np.linalg.norm(D[m:]),
                        "dbar1": np.linalg.norm(DD[:, m:]) / np.sqrt(N)}
                for k, v in vals.items():
                    amounts[k].append(v)
                    ratios[k].append(v / env)
                envs.append(env)
        envs = np.array(envs)
        for k in ratios:
            r = np.array(ratios[k])
            a = np.array(amounts[k])
            c = float(r.max()) if derivative_constants is None else derivative_constants[k]
            dc[k] = c
            dv[k] = int(np.sum(a > c * envs + atol))
    passed = vl == 0 and vu == 0 and all(v == 0 for v in dv.values())
    return DecayTable(N, eps, float(C), rows, vl, vu, dc, dv, passed)


def far_field_max(evaluator: SzegoEvaluator, centers, d_min: Optional[float] = None,
                  n_radii: int = 6, directions: int = 8) -> float:
    """max |sigma_p(q)| over sampled q with d_N(p, q) >= d_min (default N^{1/6})."""
    g, N = evaluator.geometry, evaluator.level
    d_min = N ** (1 / 6) if d_min is None else d_min
    r_max = min(0.999 * g.chart_radius * np.sqrt(N), 3 * d_min)
    radii = np.linspace(d_min, r_max, n_radii)
    centers, Q, idx, dN = _decay_samples(g, N, centers, radii, directions)
    s = _peak_moduli(evaluator, centers, Q, idx)
    return float(s[dN >= d_min * (1 - 1e-9)].max())


def g_sum(evaluator: SzegoEvaluator, lattice: np.ndarray, q) -> float:
    """sum_i G_{p_i}(q): values plus scaled first/second derivatives and dbar terms."""
    N, m = evaluator.level, evaluator.m
    P = _peak_coeffs(evaluator, lattice)  # (n, d)
    chart = heisenberg_chart(evaluator.geometry, q)
    v, D, DD = _local_jets(lambda z: evaluator.lift(z) @ P.T, chart, N)
    n = len(v)
    G = (np.abs(v) + np.linalg.norm(D[m:], axis=0) + np.linalg.norm(D, axis=0) / np.sqrt(N)
         + np.linalg.norm(DD[:, m:].reshape(-1, n), axis=0) / np.sqrt(N)
         + np.linalg.norm(DD.reshape(-1, n), axis=0) / N)
    return float(G.sum())


# ------------------------------------------------------------ lattice
@dataclass
class Lattice:
    geometry_id: str
    level: int
    D: float
    points: np.ndarray
    max_gap: float = float("nan")  # sampled sup of distance to nearest point, times sqrt(N)
    max_overlap: int = 0
    overlap_bound: int = 0
    covers: bool = False

    def __len__(self) -> int:
        return len(self.points)


def _torus_lattice(g: ModelGeometry, N: int, D: float) -> np.ndarray:
    t = complex(g.tau).imag
    nx = int(np.ceil(np.sqrt(np.pi / t) * np.sqrt(N) / D))
    ny = int(np.ceil(np.sqrt(np.pi * t) * np.sqrt(N) / D))
    X, Y = np.meshgrid((np.arange(nx) + 0.5) / nx, t * (np.arange(ny) + 0.5) / ny, indexing="ij")
    return (X + 1j * Y).reshape(-1, 1)


def _sphere_lattice(N: int, D: float) -> np.ndarray:
    # rings on the radius-1/2 sphere; unit-sphere polar spacing 2 * D / sqrt(N)
    K = int(np.ceil(np.pi / (2 * D / np.sqrt(N))))
    db = np.pi / K
    pts = []
    for k in range(K):
        beta = (k + 0.5) * db
        n = max(1, int(np.ceil(2 * np.pi * np.sin(beta) / db)))
        phi = 2 * np.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append(np.tan(beta / 2) * np.exp(1j * phi))
    return np.concatenate(pts)[:, None]


def build_lattice(geometry: ModelGeometry, N: int, D: float = 1.0, n_check: int = 1000,
                  seed: int = 0) -> Lattice:
    """1/sqrt(N)-lattice whose D/sqrt(N)-balls cover M, checked by sampling."""
    if D < 1:
        raise ValueError("D must be >= 1")
    if geometry.kind == "torus":
        pts = _torus_lattice(geometry, N, D)
    elif geometry.kind == "projective_line":
        pts = _sphere_lattice(N, D)
    else:
        raise ModelError(f"no lattice construction on {geometry.kind}")
    rng = np.random.default_rng(seed)
    samples = geometry.sample_points(rng, n_check)
    dist = np.sqrt(N) * model_distance(geometry, samples[:, None, :], pts[None, :, :])
    gap = float(dist.min(axis=1).max())
    overlap = int((dist < D).sum(axis=1).max())
    bound = int((2 * D + 2) ** (2 * geometry.m))
    return Lattice(geometry.model_id, N, D, pts, gap, overlap, bound, gap < D and overlap <= bound)


# ------------------------------------------------------------ zeros
@dataclass
class Zero:
    z: complex
    index: int


@dataclass
class ZeroScan:
    zeros: list
    signed_count: int
    expected: Optional[int]
    reliable: bool
    bad_cells: list = field(default_factory=list)

    def as_rows(self):
        return [(zz.z.real, zz.z.imag, zz.index) for zz in self.zeros]


def _winding(vals: np.ndarray):
    """Winding number of a closed loop of samples; also the largest phase step."""
    ratio = np.roll(vals, -1, axis=-1) / vals
    steps = np.angle(ratio)
    return np.rint(steps.sum(axis=-1) / (2 * np.pi)).astype(int), np.abs(steps).max(axis=-1)


def _loop(x0, y0, hx, hy):
    """8-point loop: corners and edge midpoints, counterclockwise."""
    xs = np.array([0, 0.5, 1, 1, 1, 0.5, 0, 0])
    ys = np.array([0, 0, 0, 0.5, 1, 1, 1, 0.5])
    return (x0[..., None] + hx * xs) + 1j * (y0[..., None] + hy * ys)


def _newton(f, z0: np.ndarray, iters: int = 30, tol: float = 1e-13):
    """Real 2D Newton on a complex-valued function of a complex variable, vectorized."""
    z = np.asarray(z0, complex).copy()
    scale = np.maximum(np.abs(z), 1.0)
    for _ in range(iters):
        h = 1e-7 * scale
        fz = f(z)
        fx = (f(z + h) - f(z - h)) / (2 * h)
        fy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
        # solve [Re fx Re fy; Im fx Im fy] [dx dy] = -[Re f, Im f]
        a, b, c, d = fx.real, fy.real, fx.imag, fy.imag
        det = a * d - b * c
        det = np.where(det == 0, np.finfo(float).tiny, det)
        dx = -(d * fz.real - b * fz.imag) / det
        dy = -(-c * fz.real + a * fz.imag) / det
        step = dx + 1j * dy
        z = z + step
        if np.all(np.abs(step) < tol * scale):
            break
    return z


def _fine_winding(f, x0: float, y0: float, hx: float, hy: float, max_per_edge: int = 4096):
    """Winding on a loop refined until every phase step is below 1 radian."""
    k = 16
    while True:
        t = np.arange(k) / k
        pts = np.concatenate([x0 + hx * t + 1j * y0, x0 + hx + 1j * (y0 + hy * t),
                              x0 + hx * (1 - t) + 1j * (y0 + hy), x0 + 1j * (y0 + hy * (1 - t))])
        vals = f(pts)
        if np.all(vals != 0):
            w, big = _winding(vals)
            if big < 1.0:
                return int(w), True
        if k >= max_per_edge:
            return (int(w) if np.all(vals != 0) else 0), False
        k *= 4


_LOOP_NODES = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1)]


def _jacobian_index(f, z: complex) -> int:
    """Local degree of a nondegenerate zero: sign of the real Jacobian determinant."""
    h = 1e-7 * max(1.0, abs(z))
    fx = (f(np.array([z + h])) - f(np.array([z - h])))[0] / (2 * h)
    fy = (f(np.array([z + 1j * h])) - f(np.array([z - 1j * h])))[0] / (2 * h)
    det = fx.real * fy.imag - fy.real * fx.imag
    return int(np.sign(det))


def _scan_region(f, x0: float, y0: float, Lx: float, Ly: float, n: int, max_depth: int = 4,
                 node_values=None):
    """Cells of a rectangle with nonzero winding, subdividing unresolved cells.

    The first level reads loop samples off a (2n+1)^2 node grid, optionally
    supplied precomputed by node_values(Z).
    """
    hx, hy = Lx / n, Ly / n
    X, Y = np.meshgrid(x0 + hx * np.arange(n), y0 + hy * np.arange(n), indexing="ij")
    Z = (x0 + 0.5 * hx * np.arange(2 * n + 1))[:, None] + 1j * (y0 + 0.5 * hy * np.arange(2 * n + 1))[None, :]
    V = f(Z) if node_values is None else node_values(Z)
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    first = np.stack([V[2 * I + a, 2 * J + b] for a, b in _LOOP_NODES], axis=-1).reshape(-1, 8)
    cells = [(X.reshape(-1), Y.reshape(-1), hx, hy)]
    found, bad = [], []
    for depth in range(max_depth + 1):
        nxt = []
        for cx, cy, chx, chy in cells:
            if len(cx) == 0:
                continue
            vals = first if depth == 0 else f(_loop(cx, cy, chx, chy))
            zero_sample = np.any(vals == 0, axis=-1)
            vals = np.where(vals == 0, 1e-300, vals)
            w, big = _winding(vals)
            unresolved = (big > 1.0) | (np.abs(w) > 1) | zero_sample
            done = (~unresolved) & (w != 0)
            for i in np.flatnonzero(done):
                found.append((cx[i] + 0.5 * chx + 1j * (cy[i] + 0.5 * chy), int(w[i]), chx, chy))
            sub = np.flatnonzero(unresolved)
            if depth == max_depth:
                # zeros hugging a cell edge: recount on a densely sampled loop
                # a zero (numerically) on the edge: hand the cell over as ambiguous,
                # to be settled by Newton and a half-open cell rule
                for i in sub:
                    wi, ok = _fine_winding(f, cx[i], cy[i], chx, chy)
                    if not ok:
                        found.append((cx[i] + 0.5 * chx + 1j * (cy[i] + 0.5 * chy), None, chx, chy))
                    elif wi != 0:
                        found.append((cx[i] + 0.5 * chx + 1j * (cy[i] + 0.5 * chy), wi, chx, chy))
                break
            if len(sub):
                sx = np.concatenate([cx[sub], cx[sub] + chx / 2, cx[sub], cx[sub] + chx / 2])
                sy = np.concatenate([cy[sub], cy[sub], cy[sub] + chy / 2, cy[sub] + chy / 2])
                nxt.append((sx, sy, chx / 2, chy / 2))
        cells = nxt
        if not cells:
            break
    return found, bad


def _default_cells(g: ModelGeometry, N: int) -> int:
    return int(np.ceil(8 * np.sqrt(N + 1))) + 8


def zero_locate(section: BasisSection, density: Optional[int] = None, offset=(0.0123, 0.0171)) -> ZeroScan:
    """All zeros of a section on a compact m = 1 model, with winding indices.

    Torus: one scan of a shifted fundamental domain. Projective line: the
    square |Re z|, |Im z| < 1 in the z chart plus its complement in the
    w = 1/z chart, where the lift is multiplied by the transition phase (w/|w|)^N.
    """
    g, N = section.geometry, section.level
    if g.m != 1 or not g.is_compact:
        raise ModelError("zero location needs a compact one-dimensional model")
    n = _default_cells(g, N) if density is None else int(density)
    zeros, bad = [], []

    def polish(f, cands):
        if not cands:
            return []
        c0 = np.array([c[0] for c in cands])
        zz = _newton(f, c0)
        out = []
        for (c, w, chx, chy), z in zip(cands, zz):
            ok = abs(z.real - c.real) <= 1.5 * chx and abs(z.imag - c.imag) <= 1.5 * chy and np.isfinite(z)
            if w is None:
                # keep only if the zero lies in this cell's half-open rectangle
                lo = c - 0.5 * (chx + 1j * chy)
                if not (ok and lo.real <= z.real < lo.real + chx and lo.imag <= z.imag < lo.imag + chy):
                    continue
                w = _jacobian_index(f, z)
                if w == 0:
                    bad.append((lo.real, lo.imag, 0))
                    continue
            out.append((z if ok else c, w, ok))
        return out

    def chart_fn(tag, to_base, gauge):
        def f(Z):
            Z = np.asarray(Z, complex)
            return section.values(to_base(Z)) * gauge(Z)

        def nodes(Z):
            key = (tag, Z.shape, Z.flat[0], Z.flat[-1])
            ent = _NODE_CACHE.get(key)
            if ent is None or ent[0] is not section.evaluator:
                if len(_NODE_CACHE) > 8:
                    _NODE_CACHE.clear()
                ent = (section.evaluator, section.evaluator.lift(to_base(Z)) * gauge(Z)[..., None])
                _NODE_CACHE[key] = ent
            return ent[1] @ section.coeffs
        return f, nodes

    if g.kind == "torus":
        t = complex(g.tau).imag
        # the standard frame rotates the lift's phase at rate ~2 pi N y / t along x;
        # a unimodular gauge factor removes the drift without moving zeros
        f_z, n_z = chart_fn(("torus", g.model_id, N), lambda Z: Z,
                            lambda Z: np.exp(2j * np.pi * N * Z.real * Z.imag / t))
        x0, y0 = offset[0] / n, offset[1] * t / n
        cands, bad = _scan_region(f_z, x0, y0, 1.0, t, n, node_values=n_z)
        for z, w, ok in polish(f_z, cands):
            z = complex(z.real - np.floor(z.real), z.imag - t * np.floor(z.imag / t))
            zeros.append((z, w, ok))
        period = lambda a, b: abs(complex((a - b).real - np.round((a - b).real),
                                          (a - b).imag - t * np.round((a - b).imag / t)))
    else:
        f_z, n_z = chart_fn(("z", g.model_id, N), lambda Z: Z, lambda Z: np.ones(Z.shape))
        # in w = 1/z the lift picks up the transition phase (w/|w|)^N
        f_w, n_w = chart_fn(("w", g.model_id, N), lambda W: 1 / W, lambda W: (W / np.abs(W)) ** N)
        # asymmetric margins keep w = 0 off the sample nodes
        x0, y0 = -1 - offset[0] / n, -1 - offset[1] / n
        L = 2 + 3 * (offset[0] + offset[1]) / n
        inside = lambda z: x0 < z.real < x0 + L and y0 < z.imag < y0 + L
        cz, bz = _scan_region(f_z, x0, y0, L, L, n, node_values=n_z)
        cw, bw = _scan_region(f_w, x0, y0, L, L, n, node_values=n_w)
        bad = bz + bw
        for z, w, ok in polish(f_z, cz):
            if inside(z):
                zeros.append((complex(z), w, ok))
        for wz, w, ok in polish(f_w, cw):
            if wz == 0:
                continue
            z = 1 / complex(wz)
            if not inside(z):
                zeros.append((z, w, ok))
        period = lambda a, b: abs(a - b) / max(1.0, abs(a), abs(b))
    # merge duplicates
    uniq = []
    for z, w, ok in zeros:
        if any(period(z, u[0]) < 1e-8 for u in uniq):
            continue
        uniq.append((z, w, ok))
    reliable = all(ok for _, _, ok in uniq) and all(abs(b[2]) == 1 for b in bad)
    zl = [Zero(z, w) for z, w, _ in uniq]
    expected = N * g.degree
    return ZeroScan(zl, int(sum(z.index for z in zl)), expected, reliable, bad)


def eta_transversality(section: BasisSection, density: Optional[int] = None, scan: Optional[ZeroScan] = None):
    """eta = min over located zeros of |ds| / sqrt(N); nan (flagged) without zeros."""
    scan = zero_locate(section, density) if scan is None else scan
    if not scan.zeros:
        return float("nan"), scan
    z = np.array([zz.z for zz in scan.zeros])
    d10, _ = covariant_derivatives(section, z)
    eta = float(np.min(np.linalg.norm(d10, axis=-1)) / np.sqrt(section.level))
    return eta, scan


def dbar_sup(section: BasisSection, points) -> float:
    _, d01 = covariant_derivatives(section, points)
    return float(np.max(np.linalg.norm(d01, axis=-1)))


# ------------------------------------------------------------ search
@dataclass
class SearchParams:
    seed: int = 0
    iterations: int = 200
    step: float = 0.5
    temperature: float = 0.02
    restarts: int = 1
    radius: float = 0.9  # initial weights uniform in this disk
    density: Optional[int] = None


@dataclass
class TransversalityReport:
    model_id: str
    level: int
    eta: float
    dbar_sup: float
    zero_count: int
    expected_zeros: int
    seed: int
    iterations: int
    trace: list  # best eta after each iteration
    accepted: int
    accepted_counts_ok: bool
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _measure(section: BasisSection, density):
    try:
        scan = zero_locate(section, density)
    except (FloatingPointError, ValueError):
        return 0.0, None
    if not scan.zeros:
        return 0.0, scan
    eta, _ = eta_transversality(section, scan=scan)
    if not scan.reliable or scan.signed_count != scan.expected:
        return 0.0, scan
    return eta, scan


def donaldson_search(evaluator: SzegoEvaluator, lattice, params: SearchParams = SearchParams()):
    """Randomized coordinate search over lattice weights maximizing eta.

    Each step perturbs one weight (kept strictly inside the unit disk) and is
    accepted if eta does not decrease, or with an annealing probability.
    """
    pts = lattice.points if isinstance(lattice, Lattice) else as_points(lattice, evaluator.m).reshape(-1, evaluator.m)
    if isinstance(lattice, Lattice) and lattice.level != evaluator.level:
        raise ValueError("lattice level does not match evaluator level")
    rng = np.random.default_rng(params.seed)
    P = _peak_coeffs(evaluator, pts)
    n = len(pts)

    def rand_disk(k, r):
        return r * np.sqrt(rng.uniform(0, 1, k)) * np.exp(2j * np.pi * rng.uniform(0, 1, k))

    best_w, best_eta, best_scan = None, -1.0, None
    trace, accepted, counts_ok = [], 0, True
    per = max(1, params.iterations // max(1, params.restarts))
    for r in range(max(1, params.restarts)):
        w = rand_disk(n, params.radius)
        eta, scan = _measure(LatticeSection(evaluator, pts, w, P), params.density)
        if scan is not None and scan.signed_count != scan.expected:
            counts_ok = False
        if eta > best_eta:
            best_w, best_eta, best_scan = w.copy(), eta, scan
        for it in range(per):
            temp = params.temperature * (1 - it / per)
            i = rng.integers(n)
            w2 = w.copy()
            w2[i] = w2[i] + params.step * (rng.normal() + 1j * rng.normal()) / np.sqrt(2)
            if abs(w2[i]) >= 0.999:
                w2[i] *= 0.999 / abs(w2[i])
            eta2, scan2 = _measure(LatticeSection(evaluator, pts, w2, P), params.density)
            if eta2 >= eta or (temp > 0 and rng.uniform() < np.exp((eta2 - eta) / temp)):
                w, eta = w2, eta2
                accepted += 1
                if scan2 is None or scan2.signed_count != scan2.expected:
                    counts_ok = False
                if eta > best_eta:
                    best_w, best_eta, best_scan = w.copy(), eta, scan2
            trace.append(float(best_eta))
    sec = LatticeSection(evaluator, pts, best_w, P)
    g = evaluator.geometry
    grid = g.sample_points(np.random.default_rng(params.seed + 1), 64)
    report = TransversalityReport(
        g.model_id, evaluator.level, float(max(best_eta, 0.0)), dbar_sup(sec, grid),
        best_scan.signed_count if best_scan else 0, evaluator.level * g.degree, params.seed,
        len(trace), trace, accepted, counts_ok, asdict(params))
    return sec, report


# ------------------------------------------------------------ genus
class ChernError(ValueError):
    """Inconsistent Chern data (non-integral genus or missing intersection numbers)."""


@dataclass(frozen=True)
class ChernData:
    """Intersection numbers on a closed symplectic 2m-manifold.

    Generators are l = c1(L), mu = c1(M) and, for the twisted variant,
    e_1..e_r = c_j(E) of a rank-r bundle (e_j has degree j). ``table`` maps
    exponent tuples (a_l, a_mu, a_e1, ..., a_er) of total degree m to integers.
    """

    m: int
    table: dict
    rank: int = 0

    def __post_init__(self):
        for k, v in self.table.items():
            if len(k) != 2 + self.rank:
                raise ChernError(f"monomial {k} has wrong length")
            if self._degree(k) != self.m:
                raise ChernError(f"monomial {k} is not of degree {self.m}")
            if int(v) != v:
                raise ChernError("intersection numbers must be integers")

    def _degree(self, k) -> int:
        return k[0] + k[1] + sum((j + 1) * a for j, a in enumerate(k[2:]))

    def integral(self, k) -> int:
        k = tuple(k)
        if k not in self.table:
            raise ChernError(f"missing intersection number for {k}")
        return int(self.table[k])

    @classmethod
    def basic(cls, m: int, c1L_m: int, c1M_c1L: int) -> "ChernData":
        """Untwisted data: c1(L)^m and c1(M).c1(L)^{m-1}."""
        return cls(m, {(m, 0): int(c1L_m), (m - 1, 1): int(c1M_c1L)})

    @property
    def c1L_m(self) -> int:
        return self.integral((self.m, 0) + (0,) * self.rank)

    @property
    def c1M_c1L(self) -> int:
        return self.integral((self.m - 1, 1) + (0,) * self.rank)

    def trivialized(self) -> "ChernData":
        """Same base data with E replaced by the trivial bundle of the same rank."""
        tab = {k: (v if not any(k[2:]) else 0) for k, v in self.table.items()}
        return ChernData(self.m, tab, self.rank)


def _as_int(x: Fraction) -> int:
    if x.denominator != 1:
        raise ChernError(f"non-integral genus {x}")
    return int(x)


def _key(c: ChernData, l: int = 0, mu: int = 0, es=()) -> tuple:
    """Exponent tuple for l^l mu^mu prod e_j over the listed indices (e_0 = 1 is skipped)."""
    k = [l, mu] + [0] * c.rank
    for j in es:
        if j > 0:
            k[1 + j] += 1
    return tuple(k)


def _twisted_two_g_minus_two(c: ChernData, N: int) -> int:
    """[(m-1) N l + e_1 - mu] . sum_j e_{m-1-j} l^j N^j, with e_0 = 1."""
    m, r = c.m, c.rank
    if r != m - 1:
        raise ChernError("twisted genus needs rank E = m - 1")
    total = 0
    for j in range(m):
        e = m - 1 - j
        total += N ** j * ((m - 1) * N * c.integral(_key(c, l=j + 1, es=(e,)))
                           + c.integral(_key(c, l=j, es=(1, e)))
                           - c.integral(_key(c, l=j, mu=1, es=(e,))))
    return total


def genus_adjunction(chern: ChernData, N: int, variant: str = "surface") -> int:
    """Genus of the zero set from Chern arithmetic (exact).

    surface: m = 2, g = c1(L)^2 N^2 / 2 - c1(M).c1(L) N / 2 + 1.
    codim:   m - 1 sections, g = (m-1)/2 c1(L)^m N^m - c1(M).c1(L)^{m-1} N^{m-1} / 2 + 1.
    twisted: rank m - 1 bundle E, 2g - 2 = [(m-1) N c1(L) + c1(E) - c1(M)] . c_{m-1}(E (x) L^N).
    """
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    N = int(N)
    m = chern.m
    if variant == "surface":
        if m != 2:
            raise ChernError("surface variant needs m = 2")
        g = Fraction(chern.c1L_m * N * N, 2) - Fraction(chern.c1M_c1L * N, 2) + 1
    elif variant == "codim":
        if m < 2:
            raise ChernError("codim variant needs m >= 2")
        g = (Fraction((m - 1) * chern.c1L_m * N ** m, 2)
             - Fraction(chern.c1M_c1L * N ** (m - 1), 2) + 1)
    elif variant == "twisted":
        g = Fraction(_twisted_two_g_minus_two(chern, N), 2) + 1
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return _as_int(g)


def random_chern_data(rng: np.random.Generator, m: int, twisted: bool = True, span: int = 5) -> ChernData:
    """Random intersection table with the parities that make every genus integral.

    mu . l^{m-1} = (m-1) l^m (mod 2) fixes the untwisted formulas. A polynomial
    in N with integer coefficients has parity depending only on N mod 2, so
    the twisted 2g - 2 is made even at N = 0 (via e_1 e_{m-1}) and N = 1 (via
    l e_1 e_{m-2}, which enters with a single factor of N).
    """
    r = m - 1 if twisted else 0
    keys = [k for k in itertools.product(*[range(m + 1)] * (2 + r))
            if k[0] + k[1] + sum((j + 1) * a for j, a in enumerate(k[2:])) == m]
    tab = {k: int(rng.integers(-span, span + 1)) for k in keys}
    c = ChernData(m, tab, r)
    lm, mu = _key(c, l=m), _key(c, l=m - 1, mu=1)
    if tab[lm] == 0:
        tab[lm] = 1
    if (tab[mu] - (m - 1) * tab[lm]) % 2:
        tab[mu] += 1
    if twisted:
        c = ChernData(m, tab, r)
        if _twisted_two_g_minus_two(c, 0) % 2:
            tab[_key(c, es=(1, m - 1))] += 1
            c = ChernData(m, tab, r)
        if _twisted_two_g_minus_two(c, 1) % 2:
            tab[_key(c, l=1, es=(1, m - 2))] += 1
    return ChernData(m, tab, r)
