"""Symbol calculus on T*X: Nijenhuis tensors, ideal generators, Poisson brackets, phases.

The non-integrable witness lives on a ball in R^4 = C^2 with coordinates
(x1, x2, y1, y2), the standard symplectic form omega = dx ^ dy, and the
almost complex structure J = S J0 S^{-1} with

    S(x) = [[I, 0], [Q(x), I]],
    Q(x) = kappa * [[x2 + y1^2/2,  y2 + 0.3 x1],
                    [y2 + 0.3 x1,  y1 - 0.4 x2^2]].

Q is symmetric, so S is symplectic and J is omega-compatible; kappa = 0
gives the standard (integrable) structure. The circle bundle is
X = ball x S^1 with contact form alpha = d theta + sum (x dy - y dx) / 2,
so d alpha = omega.

Points of T*X are arrays P = (q, xi) with q = (x1, x2, y1, y2, theta) and
xi the dual coordinates; p_theta = xi[4].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .models import BundlePoint, ModelError, ModelGeometry, as_points

DIM = 2  # complex dimension of the witness
BRACKET_STEP = 1e-4
LIE_STEP = 1e-4
ZETA2_COEFF = 1.0 / 6.0  # zeta2 = zeta1 + (i ZETA2_COEFF / p_theta) sum Nbar^k_pj zbar_j zbar_k


# ------------------------------------------------------------ the frame
@dataclass(frozen=True)
class FrameField:
    """Frame Zbar_j of T^{0,1} for J = S J0 S^{-1}, lifted horizontally to X."""

    kappa: float = 0.3
    radius: float = 1.0

    @property
    def m(self) -> int:
        return DIM

    def Q(self, x) -> np.ndarray:
        x1, x2, y1, y2 = np.asarray(x, float)[:4]
        return self.kappa * np.array([[x2 + 0.5 * y1 * y1, y2 + 0.3 * x1],
                                      [y2 + 0.3 * x1, y1 - 0.4 * x2 * x2]])

    def S(self, x) -> np.ndarray:
        M = np.eye(4)
        M[2:, :2] = self.Q(x)
        return M

    def J(self, x) -> np.ndarray:
        S = self.S(x)
        return S @ STANDARD_J @ np.linalg.inv(S)

    def check(self, x) -> None:
        if np.linalg.norm(np.asarray(x, float)[:4]) > self.radius:
            raise ValueError("point outside the chart ball")

    def zbar_M(self, x, j: int) -> np.ndarray:
        """Zbar_j^M = S (e_{x_j} + i e_{y_j}) / sqrt 2, an orthonormal (0,1) frame."""
        e = np.zeros(4, complex)
        e[j] = 1.0
        e[2 + j] = 1j
        return self.S(x) @ e / np.sqrt(2)

    def z_M(self, x, j: int) -> np.ndarray:
        return np.conj(self.zbar_M(x, j))

    def zbar(self, q, j: int) -> np.ndarray:
        """Horizontal lift to X: (v, -beta(v)) so that alpha vanishes on it."""
        x = np.asarray(q, float)[:4]
        v = self.zbar_M(x, j)
        return np.concatenate([v, [-_beta(x, v)]])

    def metric(self, x) -> np.ndarray:
        """g(v, w) = omega(v, J w) as a matrix."""
        return OMEGA @ self.J(x)


STANDARD_J = np.block([[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
OMEGA = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])


def bundled_frame(kappa: float = 0.3) -> FrameField:
    return FrameField(kappa)


def _beta(x, v):
    x1, x2, y1, y2 = x[:4]
    return 0.5 * (x1 * v[2] - y1 * v[0] + x2 * v[3] - y2 * v[1])


def omega_form(v, w) -> complex:
    return v[0] * w[2] - v[2] * w[0] + v[1] * w[3] - v[3] * w[1]


def alpha(q) -> np.ndarray:
    """Contact form alpha at q as a covector (x1, x2, y1, y2, theta)."""
    x1, x2, y1, y2 = np.asarray(q, float)[:4]
    return np.array([-0.5 * y1, -0.5 * y2, 0.5 * x1, 0.5 * x2, 1.0])


# ------------------------------------------------------------ Nijenhuis
def _jacobian(F: Callable, x: np.ndarray, h: float) -> np.ndarray:
    def central(step):
        cols = []
        for i in range(len(x)):
            e = np.zeros(len(x))
            e[i] = step
            cols.append((F(x + e) - F(x - e)) / (2 * step))
        return np.array(cols).T

    return (4 * central(h / 2) - central(h)) / 3


def lie_bracket(F: Callable, G: Callable, x, h: float = LIE_STEP) -> np.ndarray:
    """[F, G](x) = DG F - DF G for vector fields on R^n, by Richardson differences."""
    x = np.asarray(x, float)
    return _jacobian(G, x, h) @ F(x) - _jacobian(F, x, h) @ G(x)


def nijenhuis(frame: FrameField, x, h: float = LIE_STEP) -> np.ndarray:
    """N[p, j, k] = N^p_{jk} = -2 i omega([Z_j^M, Z_k^M], Z_p^M).

    This is the Zbar_p-component of -2 [Z_j^M, Z_k^M]^{(0,1)} in the
    orthonormal frame, using omega(Zbar_q, Z_p) = -i delta_pq.
    """
    x = np.asarray(x, float)[:4]
    frame.check(x)
    m = frame.m
    N = np.zeros((m, m, m), complex)
    for j in range(m):
        for k in range(m):
            b = lie_bracket(lambda y: frame.z_M(y, j), lambda y: frame.z_M(y, k), x, h)
            for p in range(m):
                N[p, j, k] = -2j * omega_form(b, frame.z_M(x, p))
    return N


def nijenhuis_identities(N: np.ndarray) -> dict:
    """Residuals of the algebraic identities satisfied by N^p_{jk}.

    'antisymmetry': N^p_{jk} + N^p_{kj}; 'cyclic': N^p_{jk} + N^k_{pj} + N^j_{kp};
    'symmetry_literal': N^p_{jk} - N^p_{kj}, reported for comparison (it
    vanishes only when N does).
    """
    m = N.shape[0]
    cyc = max(abs(N[p, j, k] + N[k, p, j] + N[j, k, p])
              for p in range(m) for j in range(m) for k in range(m))
    return {
        "antisymmetry": float(np.abs(N + N.transpose(0, 2, 1)).max()),
        "cyclic": float(cyc),
        "symmetry_literal": float(np.abs(N - N.transpose(0, 2, 1)).max()),
        "size": float(np.abs(N).max()),
    }


# ------------------------------------------------------------ symbols
@dataclass(frozen=True)
class SymbolFn:
    """Complex function on T*X (P = (q, xi) in R^10) with its fiber homogeneity degree."""

    f: Callable[[np.ndarray], complex]
    degree: Optional[int] = None
    name: str = ""

    def __call__(self, P) -> complex:
        return self.f(np.asarray(P, float))

    def conj(self) -> "SymbolFn":
        return SymbolFn(lambda P: np.conj(self.f(P)), self.degree, f"conj({self.name})")

    def homogeneity_residual(self, P, lam: float = 2.0) -> float:
        P = np.asarray(P, float)
        Q = P.copy()
        Q[5:] *= lam
        return float(abs(self.f(Q) - lam ** self.degree * self.f(P)))


def cotangent_point(q, xi) -> np.ndarray:
    return np.concatenate([np.asarray(q, float), np.asarray(xi, float)])


def sigma_point(q, r: float = 1.0) -> np.ndarray:
    """(q, r alpha_q) on the characteristic cone."""
    return cotangent_point(q, r * alpha(q))


def zeta1(frame: FrameField, P, j: int) -> complex:
    """<xi, Zbar_j>."""
    P = np.asarray(P, float)
    return complex(P[5:] @ frame.zbar(P[:5], j))


def zeta1_symbol(frame: FrameField, j: int) -> SymbolFn:
    return SymbolFn(lambda P: zeta1(frame, P, j), 1, f"zeta1_{j}")


def nu_coefficients(frame: FrameField, x, p_theta: float, N: Optional[np.ndarray] = None) -> np.ndarray:
    """nu[p, j, k] = nu_p^{jk} = (i ZETA2_COEFF / (2 p_theta)) (Nbar^k_{pj} + Nbar^j_{pk})."""
    if p_theta == 0:
        raise ValueError("p_theta = 0 (cone tip)")
    N = nijenhuis(frame, x) if N is None else N
    Nb = np.conj(N)
    # Nb[k, p, j] = Nbar^k_{pj}
    t1 = np.einsum("kpj->pjk", Nb)
    t2 = np.einsum("jpk->pjk", Nb)
    return 1j * ZETA2_COEFF / (2 * p_theta) * (t1 + t2)


def zeta2(frame: FrameField, P, p: int, N: Optional[np.ndarray] = None) -> complex:
    """zeta1_p + sum_jk nu_p^{jk} conj(zeta1_j) conj(zeta1_k)."""
    P = np.asarray(P, float)
    pth = P[9]
    if pth == 0:
        raise ValueError("p_theta = 0 (cone tip)")
    nu = nu_coefficients(frame, P[:4], pth, N)
    zb = np.conj([zeta1(frame, P, j) for j in range(frame.m)])
    return zeta1(frame, P, p) + complex(np.einsum("jk,j,k->", nu[p], zb, zb))


def zeta2_symbol(frame: FrameField, p: int) -> SymbolFn:
    return SymbolFn(lambda P: zeta2(frame, P, p), 1, f"zeta2_{p}")


def nu_identities(nu: np.ndarray) -> dict:
    m = nu.shape[0]
    cyc = max(abs(nu[p, j, k] + nu[k, p, j] + nu[j, k, p])
              for p in range(m) for j in range(m) for k in range(m))
    return {"symmetry": float(np.abs(nu - nu.transpose(0, 2, 1)).max()), "cyclic": float(cyc)}


def soln2_residual(frame: FrameField, x, p_theta: float, N: Optional[np.ndarray] = None) -> float:
    """max |b^p_{jk} + 2 i p_theta (nu_k^{jp} - nu_j^{kp})| with b^p_{jk} = -Nbar^p_{jk} / 2,
    the conj(zeta_p) coefficient of {zeta1_j, zeta1_k} at the cone.
    """
    N = nijenhuis(frame, x) if N is None else N
    nu = nu_coefficients(frame, x, p_theta, N)
    m = frame.m
    r = 0.0
    for p in range(m):
        for j in range(m):
            for k in range(m):
                b = -0.5 * np.conj(N[p, j, k])
                r = max(r, abs(b + 2j * p_theta * (nu[k, j, p] - nu[j, k, p])))
    return float(r)


# ------------------------------------------------------------ brackets
def _grad(f: Callable, P: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros(len(P), complex)
    for i in range(len(P)):
        e = np.zeros(len(P))
        e[i] = h
        d1 = (f(P + e) - f(P - e)) / (2 * h)
        d2 = (f(P + e / 2) - f(P - e / 2)) / h
        g[i] = (4 * d2 - d1) / 3
    return g


def poisson_bracket(f, g, P, h: float = BRACKET_STEP) -> complex:
    """Canonical bracket {f, g} = sum_i df/dxi_i dg/dq_i - df/dq_i dg/dxi_i."""
    P = np.asarray(P, float)
    if h <= 1e-12:
        raise ValueError("bracket step underflow")
    n = len(P) // 2
    gf = _grad(f, P, h)
    gg = _grad(g, P, h)
    return complex(gf[n:] @ gg[:n] - gf[:n] @ gg[n:])


def p_theta_symbol() -> SymbolFn:
    return SymbolFn(lambda P: complex(P[9]), 1, "p_theta")


def q_symbol(frame: FrameField, P) -> float:
    """q = (1/2) g^{-1}(xi_H, xi_H), xi_H = xi on horizontal lifts of R^4."""
    P = np.asarray(P, float)
    q, xi = P[:5], P[5:]
    x = q[:4]
    # horizontal lift of e_i is e_i - beta(e_i) d/dtheta
    H = np.zeros((5, 4))
    H[:4, :4] = np.eye(4)
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1
        H[4, i] = -_beta(x, e)
    xiH = H.T @ xi
    return float(0.5 * xiH @ np.linalg.solve(frame.metric(x), xiH))


def q_decomposition_residual(frame: FrameField, P) -> float:
    """Relative gap between q and sum_j |zeta1_j|^2."""
    a = q_symbol(frame, P)
    b = sum(abs(zeta1(frame, P, j)) ** 2 for j in range(frame.m))
    return abs(a - b) / max(abs(a), 1e-300)


# ------------------------------------------------------------ ideal membership
DEFAULT_BASE = np.array([0.1, -0.2, 0.15, 0.05, 0.3])


def ideal_residual(frame: FrameField, order: int, delta: float, base=None, r: float = 1.0,
                   n: int = 30, seed: int = 0, j: int = 0, k: int = 1) -> float:
    """Max least-squares residual of {zeta_j, zeta_k} against the span of
    zeta_1, zeta_2, all products conj(zeta_a) conj(zeta_b), and constants,
    over n points at distance delta from the cone.
    """
    if not 0 < delta <= 0.1:
        raise ValueError("delta must lie in (0, 0.1]")
    base = DEFAULT_BASE if base is None else np.asarray(base, float)
    rng = np.random.default_rng(seed)
    m = frame.m
    N0 = None
    if order == 1:
        fs = [lambda P, p=p: zeta1(frame, P, p) for p in range(m)]
    elif order == 2:
        fs = [lambda P, p=p: zeta2(frame, P, p) for p in range(m)]
    else:
        raise ValueError("order must be 1 or 2")
    rows, rhs = [], []
    for _ in range(n):
        dq = rng.normal(size=5)
        dq *= delta / np.linalg.norm(dq)
        q = base + dq
        dxi = rng.normal(size=5)
        dxi[4] = 0.0
        dxi *= delta / np.linalg.norm(dxi)
        P = cotangent_point(q, r * alpha(q) + dxi)
        B = poisson_bracket(fs[j], fs[k], P)
        z = np.array([f(P) for f in fs])
        zb = np.conj(z)
        quad = [zb[a] * zb[b] for a in range(m) for b in range(a, m)]
        rows.append(list(z) + quad + [1.0])
        rhs.append(B)
    A = np.array(rows, complex)
    b = np.array(rhs)
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    return float(np.abs(A @ c - b).max())


def ideal_slope(frame: FrameField, order: int, deltas: Sequence[float] = (1e-1, 3e-2, 1e-2, 3e-3),
                **kw):
    res = [ideal_residual(frame, order, d, **kw) for d in deltas]
    slope = float(np.polyfit(np.log(deltas), np.log(res), 1)[0])
    return res, slope


def bracket_conj_coefficients(frame: FrameField, base=None, r: float = 1.0, delta: float = 1e-4,
                              n: int = 12, seed: int = 0, j: int = 0, k: int = 1) -> np.ndarray:
    """Fitted conj(zeta_p) coefficients of {zeta1_j, zeta1_k} near the cone at a fixed base point."""
    base = DEFAULT_BASE if base is None else np.asarray(base, float)
    rng = np.random.default_rng(seed)
    m = frame.m
    rows, rhs = [], []
    for _ in range(n):
        dxi = rng.normal(size=5)
        dxi[4] = 0.0
        dxi *= delta / np.linalg.norm(dxi)
        P = cotangent_point(base, r * alpha(base) + dxi)
        B = poisson_bracket(lambda P: zeta1(frame, P, j), lambda P: zeta1(frame, P, k), P)
        z = np.array([zeta1(frame, P, p) for p in range(m)])
        rows.append(list(z) + list(np.conj(z)))
        rhs.append(B)
    c, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    return c[m:]


# ------------------------------------------------------------ phase
def contact_form(geometry: ModelGeometry, z) -> np.ndarray:
    """alpha = d theta + Im(d phi . dz) on the real basis (x_1..x_m, y_1..y_m, theta)."""
    z = as_points(z, geometry.m).reshape(geometry.m)
    d = geometry.dlog_a(z).reshape(geometry.m)
    # Im(d (dx + i dy)) -> dx coefficient Im d, dy coefficient Re d
    return np.concatenate([d.imag, d.real, [1.0]])


def phase_psi(geometry: ModelGeometry, x: BundlePoint, y: BundlePoint, max_distance: Optional[float] = None) -> complex:
    """psi(x, y) = i (1 - e^{i(theta_x - theta_y)} a(z, w) / sqrt(a(z) a(w)))."""
    if geometry.kind == "projective_line_perturbed":
        raise ModelError("phase needs a closed-form polarization")
    z = as_points(x.z, geometry.m).reshape(geometry.m)
    w = as_points(y.z, geometry.m).reshape(geometry.m)
    lim = geometry.chart_radius if max_distance is None else max_distance
    if np.isfinite(lim) and np.linalg.norm(z - w) > lim:
        raise ValueError("points too far from the diagonal for the polarization")
    aw = geometry.polarized_a(z, w)
    ratio = aw * np.exp(-0.5 * (geometry.log_a(z) + geometry.log_a(w)))
    return complex(np.reshape(1j * (1 - np.exp(1j * (x.theta - y.theta)) * ratio), ()))


def phase_jet_residual(geometry: ModelGeometry, z, theta: float = 0.0, h: float = 1e-5) -> dict:
    """Finite-difference d_x psi and d_y psi on the diagonal against +alpha and -alpha."""
    m = geometry.m
    z = as_points(z, m).reshape(m)
    a = contact_form(geometry, z)
    base = BundlePoint(z, theta)

    def shifted(i, s):
        if i < 2 * m:
            dz = np.zeros(m, complex)
            dz[i % m] = s if i < m else 1j * s
            return BundlePoint(z + dz, theta)
        return BundlePoint(z, theta + s)

    dx = np.array([(phase_psi(geometry, shifted(i, h), base) - phase_psi(geometry, shifted(i, -h), base)) / (2 * h)
                   for i in range(2 * m + 1)])
    dy = np.array([(phase_psi(geometry, base, shifted(i, h)) - phase_psi(geometry, base, shifted(i, -h))) / (2 * h)
                   for i in range(2 * m + 1)])
    return {"dx": float(np.abs(dx - a).max()), "dy": float(np.abs(dy + a).max()),
            "diag": abs(phase_psi(geometry, base, base))}


def phase_positivity(geometry: ModelGeometry, eps: float = 0.2, n: int = 9,
                     thetas=None) -> float:
    """min Re[psi(0,0; z,theta)/i] over a grid |z| < eps, |theta| < pi/2 (should be >= 0)."""
    m = geometry.m
    z0 = np.zeros(m, complex)
    thetas = np.linspace(-0.49 * np.pi, 0.49 * np.pi, n) if thetas is None else thetas
    g = np.linspace(-eps, eps, n) / np.sqrt(2)
    vals = []
    for th in thetas:
        for a in g:
            for b in g:
                z = np.full(m, (a + 1j * b) / np.sqrt(m))
                vals.append((phase_psi(geometry, BundlePoint(z0, 0.0), BundlePoint(z, th)) / 1j).real)
    return float(min(vals))


# ------------------------------------------------------------ bracket checks
def commutator_matrix(frame: FrameField, P) -> np.ndarray:
    """(1/i) {zeta1_j, conj(zeta1_k)} at P; equals p_theta * I on the cone."""
    m = frame.m
    out = np.zeros((m, m), complex)
    for j in range(m):
        for k in range(m):
            out[j, k] = poisson_bracket(lambda Q: zeta1(frame, Q, j),
                                        lambda Q: np.conj(zeta1(frame, Q, k)), P) / 1j
    return out


def jacobi_residual(f, g, h, P, step: float = 1e-3) -> float:
    """|{f,{g,h}} + {g,{h,f}} + {h,{f,g}}| with nested central differences."""
    def br(a, b):
        return lambda Q: poisson_bracket(a, b, Q, step)

    return abs(poisson_bracket(f, br(g, h), P, step) + poisson_bracket(g, br(h, f), P, step)
               + poisson_bracket(h, br(f, g), P, step))


def kappa_sweep(kappas: Sequence[float], delta: float = 1e-2, n: int = 12, seed: int = 0) -> dict:
    """zeta2 - zeta1 gap and order-1 ideal residual as the witness is deformed to kappa = 0."""
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(n):
        q = DEFAULT_BASE + 0.05 * rng.normal(size=5)
        xi = alpha(q) + delta * rng.normal(size=5)
        pts.append(cotangent_point(q, xi))
    gaps, res = [], []
    for k in kappas:
        F = FrameField(k)
        gaps.append(max(abs(zeta2(F, P, p) - zeta1(F, P, p)) for P in pts for p in range(F.m)))
        res.append(ideal_residual(F, 1, delta, n=n, seed=seed))
    return {"kappa": list(map(float, kappas)), "gap": gaps, "residual": res}
