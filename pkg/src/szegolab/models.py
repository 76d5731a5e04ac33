"""Model geometries with computable level-N section spaces and Szegő kernels.

Conventions used throughout the package
---------------------------------------
A model is a positive line bundle L -> M with a local holomorphic frame e_L.
We store the Kähler potential phi = log a, where a = |e_L^*|^2 = |e_L|^{-2}, so
that omega = (i/2) dd-bar phi. A level-N section f e_L^N lifts to the circle
bundle as

    S(z, theta) = exp(i N theta) f(z) a(z)^{-N/2},

and the L^2 product (1/2pi) int_X F1 conj(F2) dV_X reduces to
int_M f1 conj(f2) a^{-N} dV_M with dV_M = omega^m / m!.

Points of M are complex arrays whose last axis has length m; a bundle point
is ``BundlePoint(z, theta)``. Kernels are returned in the frame e_L at
theta = 0; the theta dependence is the factor exp(iN(theta_x - theta_y)).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

GRAM_TOL_EXACT = 1e-10
GRAM_TOL_PERTURBED = 1e-8
# theta-series cutoff: drop terms below exp(-THETA_CUT) relative to the peak
THETA_CUT = 40.0


class ModelError(ValueError):
    """Invalid model data or unresolved quadrature."""


def as_points(z, m: int) -> np.ndarray:
    """Coerce input to a complex array of shape (..., m)."""
    z = np.asarray(z, dtype=complex)
    if m == 1 and (z.ndim == 0 or z.shape[-1] != 1):
        z = z[..., None]
    if z.shape[-1] != m:
        raise ValueError(f"expected trailing dimension {m}, got shape {z.shape}")
    return z


@dataclass(frozen=True)
class BundlePoint:
    """Point of the circle bundle X: base point z (shape (m,)) and fiber angle."""

    z: np.ndarray
    theta: float = 0.0

    def rotate(self, phi: float) -> "BundlePoint":
        return BundlePoint(self.z, self.theta + phi)


@dataclass(frozen=True)
class ModelGeometry:
    """One of the bundled models.

    kind is one of 'bargmann_fock', 'projective_line',
    'projective_line_perturbed', 'torus'. The perturbed projective line uses
    a = (1 + |z|^2) exp(eps * chi), chi(z) = exp(-|z - c|^2 / s^2), i.e. the
    Fubini-Study metric times exp(-eps chi). The torus is C / (Z + tau Z)
    with tau purely imaginary and log a = 2 pi y^2 / Im(tau).
    """

    kind: str
    m: int = 1
    eps: float = 0.0
    bump_center: complex = 0.5
    bump_width: float = 0.5
    tau: complex = 1j

    def __post_init__(self):
        if self.kind not in ("bargmann_fock", "projective_line",
                             "projective_line_perturbed", "torus"):
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.kind != "bargmann_fock" and self.m != 1:
            raise ModelError("compact models are one-dimensional")
        if self.kind == "torus":
            if abs(complex(self.tau).real) > 0 or complex(self.tau).imag <= 0:
                raise ModelError("torus requires purely imaginary tau with Im tau > 0")
        if self.kind == "projective_line_perturbed":
            self._check_positive()

    # ------------------------------------------------------------------ ids
    @property
    def model_id(self) -> str:
        if self.kind == "bargmann_fock":
            return f"bargmann_fock_m{self.m}"
        if self.kind == "projective_line":
            return "projective_line"
        if self.kind == "torus":
            return f"torus_tau{complex(self.tau).imag:.17g}"
        c = complex(self.bump_center)
        return (f"projective_line_perturbed_eps{self.eps:.17g}"
                f"_c{c.real:.17g},{c.imag:.17g}_s{self.bump_width:.17g}")

    @property
    def is_compact(self) -> bool:
        return self.kind != "bargmann_fock"

    @property
    def degree(self) -> Optional[int]:
        return None if self.kind == "bargmann_fock" else 1

    @property
    def volume(self) -> float:
        return np.inf if self.kind == "bargmann_fock" else np.pi * self.degree

    @property
    def chart_radius(self) -> float:
        """Half the injectivity radius (in metric units)."""
        if self.kind == "bargmann_fock":
            return np.inf
        if self.kind == "torus":
            t = complex(self.tau).imag
            return 0.25 * np.sqrt(np.pi / t) * min(1.0, t)
        return np.pi / 4

    @property
    def is_integrable(self) -> bool:
        return True

    def dim_sections(self, N: int) -> Optional[int]:
        if self.kind == "bargmann_fock":
            return None
        if self.kind == "torus":
            return N
        return N + 1

    # ---------------------------------------------------------- potential
    def _bump(self, z):
        w = z - self.bump_center
        s2 = self.bump_width ** 2
        return np.exp(-np.abs(w) ** 2 / s2), w, s2

    def log_a(self, z) -> np.ndarray:
        """Kähler potential phi = log a at points z (..., m)."""
        z = as_points(z, self.m)
        if self.kind == "bargmann_fock":
            return np.sum(np.abs(z) ** 2, axis=-1)
        z1 = z[..., 0]
        if self.kind == "torus":
            t = complex(self.tau).imag
            return 2 * np.pi * z1.imag ** 2 / t
        out = np.log1p(np.abs(z1) ** 2)
        if self.kind == "projective_line_perturbed":
            out = out + self.eps * self._bump(z1)[0]
        return out

    def dlog_a(self, z) -> np.ndarray:
        """Holomorphic gradient d phi / d z_j, shape (..., m)."""
        z = as_points(z, self.m)
        if self.kind == "bargmann_fock":
            return np.conj(z)
        z1 = z[..., 0]
        if self.kind == "torus":
            t = complex(self.tau).imag
            # phi = 2 pi y^2 / t, dy/dz = 1/(2i)
            return (2 * np.pi * z1.imag / t / 1j)[..., None]
        out = np.conj(z1) / (1 + np.abs(z1) ** 2)
        if self.kind == "projective_line_perturbed":
            chi, w, s2 = self._bump(z1)
            out = out - self.eps * np.conj(w) / s2 * chi
        return out[..., None]

    def ddlog_a(self, z) -> np.ndarray:
        """Holomorphic Hessian d^2 phi / dz_j dz_k, shape (..., m, m)."""
        z = as_points(z, self.m)
        if self.kind == "bargmann_fock":
            return np.zeros(z.shape + (self.m,), dtype=complex)
        z1 = z[..., 0]
        if self.kind == "torus":
            t = complex(self.tau).imag
            out = np.full(z1.shape, -np.pi / t, dtype=complex)
            return out[..., None, None]
        out = -np.conj(z1) ** 2 / (1 + np.abs(z1) ** 2) ** 2
        if self.kind == "projective_line_perturbed":
            chi, w, s2 = self._bump(z1)
            out = out + self.eps * np.conj(w) ** 2 / s2 ** 2 * chi
        return out[..., None, None]

    def levi(self, z) -> np.ndarray:
        """Levi form H_jk = d^2 phi / dz_j dzbar_k, shape (..., m, m)."""
        z = as_points(z, self.m)
        if self.kind == "bargmann_fock":
            return np.broadcast_to(np.eye(self.m, dtype=complex),
                                   z.shape + (self.m,)).copy()
        z1 = z[..., 0]
        if self.kind == "torus":
            t = complex(self.tau).imag
            out = np.full(z1.shape, np.pi / t, dtype=complex)
            return out[..., None, None]
        out = 1 / (1 + np.abs(z1) ** 2) ** 2 + 0j
        if self.kind == "projective_line_perturbed":
            chi, w, s2 = self._bump(z1)
            out = out + self.eps * (-1 / s2 + np.abs(w) ** 2 / s2 ** 2) * chi
        return out[..., None, None]

    def polarized_a(self, z, w) -> np.ndarray:
        """Holomorphic-antiholomorphic extension a(z, w) with a(z, z) = a(z)."""
        z = as_points(z, self.m)
        w = as_points(w, self.m)
        if self.kind == "bargmann_fock":
            return np.exp(np.sum(z * np.conj(w), axis=-1))
        if self.kind == "projective_line":
            return 1 + z[..., 0] * np.conj(w[..., 0])
        if self.kind == "torus":
            t = complex(self.tau).imag
            return np.exp(-np.pi / (2 * t) * (z[..., 0] - np.conj(w[..., 0])) ** 2)
        raise ModelError("no closed-form polarization for the perturbed model")

    # --------------------------------------------------- real tensors
    def omega_matrix(self, z) -> np.ndarray:
        """Real 2m x 2m matrix of omega in coordinates (x_1..x_m, y_1..y_m)."""
        H = self.levi(as_points(z, self.m).reshape(self.m))
        return _real_forms(H)[1]

    def metric_matrix(self, z) -> np.ndarray:
        H = self.levi(as_points(z, self.m).reshape(self.m))
        return _real_forms(H)[0]

    def complex_structure(self, z=None) -> np.ndarray:
        """J acting on real tangent vectors; standard for all bundled models."""
        I = np.eye(self.m)
        Z = np.zeros((self.m, self.m))
        return np.block([[Z, -I], [I, Z]])

    def _check_positive(self):
        if self.eps < 0:
            raise ModelError("eps must be non-negative")
        c = complex(self.bump_center)
        r = 3 * self.bump_width
        x = np.linspace(c.real - r, c.real + r, 241)
        X, Y = np.meshgrid(x, np.linspace(c.imag - r, c.imag + r, 241))
        H = self.levi(X + 1j * Y)[..., 0, 0].real
        if H.min() <= 0:
            raise ModelError(
                f"perturbed metric not positive (min Levi form {H.min():.3g}); reduce eps")

    def sample_points(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n random base points, shape (n, m), inside the standard atlas."""
        if self.kind == "torus":
            t = complex(self.tau).imag
            return (rng.uniform(0, 1, n) + 1j * t * rng.uniform(0, 1, n))[:, None]
        r = 1.5 * np.sqrt(rng.uniform(0, 1, (n, self.m)))
        return r * np.exp(2j * np.pi * rng.uniform(0, 1, (n, self.m)))


def _real_forms(H: np.ndarray):
    """(g, omega) real matrices from a Hermitian Levi form H.

    With v_j = dz_j(v): g(v, w) = Re(v^T H conj(w)), omega(v, w) = -Im(v^T H conj(w)).
    """
    m = H.shape[-1]
    E = np.concatenate([np.eye(m), 1j * np.eye(m)], axis=0)  # rows: dz(e_a)
    B = E @ H @ np.conj(E).T
    return B.real.copy(), -B.imag.copy()


def bargmann_fock(m: int = 1) -> ModelGeometry:
    return ModelGeometry("bargmann_fock", m=m)


def projective_line() -> ModelGeometry:
    return ModelGeometry("projective_line")


def projective_line_perturbed(eps: float = 0.05, bump_center: complex = 0.5,
                              bump_width: float = 0.5) -> ModelGeometry:
    return ModelGeometry("projective_line_perturbed", eps=eps,
                         bump_center=bump_center, bump_width=bump_width)


def torus(tau: complex = 1j) -> ModelGeometry:
    return ModelGeometry("torus", tau=tau)


def model_from_name(name: str, **kw) -> ModelGeometry:
    name = name.replace("-", "_")
    if name in ("bargmann_fock", "bf"):
        return bargmann_fock(int(kw.get("m", 1)))
    if name in ("projective_line", "p1"):
        return projective_line()
    if name in ("projective_line_perturbed", "p1_perturbed"):
        return projective_line_perturbed(float(kw.get("eps", 0.05)))
    if name == "torus":
        return torus(complex(kw.get("tau", 1j)))
    raise ModelError(f"unknown model {name!r}")


# ----------------------------------------------------------------- quadrature
@dataclass(frozen=True)
class Quadrature:
    """Nodes on M with weights for dV_M (weights may absorb a Gaussian factor)."""

    points: np.ndarray
    weights: np.ndarray
    spec: dict = field(default_factory=dict)

    def integrate(self, values: np.ndarray) -> complex:
        return np.sum(self.weights * values)


def sphere_quadrature(geometry: ModelGeometry, nt: int, nphi: int) -> Quadrature:
    """Gauss-Legendre in t = cos(vartheta) times trapezoid in the azimuth.

    z = tan(vartheta/2) e^{i phi}; the Euclidean area element is
    (1 + |z|^2)^2 / 4 dt dphi, multiplied by the Levi form for dV_M.
    """
    x, w = leggauss(nt)
    phi = 2 * np.pi * (np.arange(nphi) + 0.5) / nphi
    r = np.sqrt((1 - x) / (1 + x))
    Z = r[:, None] * np.exp(1j * phi)[None, :]
    if geometry.kind == "projective_line":
        dens = np.ones_like(Z.real)
    else:
        dens = geometry.levi(Z)[..., 0, 0].real * (1 + np.abs(Z) ** 2) ** 2
    W = 0.25 * w[:, None] * (2 * np.pi / nphi) * dens
    return Quadrature(Z.reshape(-1, 1), W.reshape(-1),
                      {"kind": "sphere", "nt": nt, "nphi": nphi})


def torus_quadrature(geometry: ModelGeometry, n: int) -> Quadrature:
    """Uniform n x n trapezoid grid on the fundamental domain."""
    t = complex(geometry.tau).imag
    s = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(s, t * s, indexing="ij")
    W = np.full(X.shape, (np.pi / t) * t / n ** 2)
    return Quadrature((X + 1j * Y).reshape(-1, 1), W.reshape(-1),
                      {"kind": "torus", "n": n})


def hermite_quadrature(geometry: ModelGeometry, N: int, n: int) -> Quadrature:
    """Gauss-Hermite grid adapted to exp(-N|z|^2) on C^m.

    Weights carry exp(+N|z|^2), so they integrate lifted products (which
    contain exp(-N|z|^2)) against plain Lebesgue measure.
    """
    x, w = hermgauss(n)
    x = x / np.sqrt(N)
    w = w / np.sqrt(N) * np.exp(N * x ** 2)
    pts1 = (x[:, None] + 1j * x[None, :]).reshape(-1)
    w1 = (w[:, None] * w[None, :]).reshape(-1)
    pts, wts = pts1[:, None], w1
    for _ in range(geometry.m - 1):
        pts = np.concatenate([np.repeat(pts, len(pts1), axis=0),
                              np.tile(pts1, len(wts))[:, None]], axis=1)
        wts = np.repeat(wts, len(w1)) * np.tile(w1, len(wts))
    return Quadrature(pts, wts, {"kind": "hermite", "n": n, "N": N})


def default_quadrature(geometry: ModelGeometry, N: int, refine: float = 1.0) -> Quadrature:
    """Grid sized per N so that the Gram threshold is met."""
    if geometry.kind == "torus":
        n = int(np.ceil(refine * max(64, 10 * np.sqrt(N))))
        return torus_quadrature(geometry, n)
    if geometry.kind == "projective_line":
        return sphere_quadrature(geometry, int(refine * (N // 2 + 24)),
                                 int(refine * (N + 32)))
    if geometry.kind == "projective_line_perturbed":
        extra = int(8 * np.sqrt(N * max(geometry.eps, 1e-3)) / geometry.bump_width)
        return sphere_quadrature(geometry, int(refine * (N // 2 + 96 + extra)),
                                 int(refine * (N + 96 + 2 * extra)))
    return hermite_quadrature(geometry, N, int(refine * 60))


# ------------------------------------------------------------------ bases
def _fs_log_coeffs(N: int) -> np.ndarray:
    k = np.arange(N + 1)
    return 0.5 * (gammaln(N + 2) - gammaln(k + 1) - gammaln(N - k + 1) - np.log(np.pi))


def _fs_monomials(z1: np.ndarray, N: int) -> np.ndarray:
    """FS-orthonormal lifted monomials c_k z^k (1+|z|^2)^{-N/2}, shape (..., N+1).

    Powers are built by cumulative products of z (|z| < 1) or of 1/z
    (|z| >= 1, using z^k |z|^{-N} = (z/|z|)^N z^{k-N}), so nothing overflows.
    """
    z1 = np.asarray(z1, dtype=complex)
    r = np.abs(z1)
    big = r >= 1
    zs = np.where(big, 0.0, z1)
    ws = np.where(big, 1 / np.where(big, z1, 1.0), 0.0)
    k = np.arange(N + 1)
    low = np.cumprod(np.concatenate([np.ones(z1.shape + (1,), complex),
                                     np.repeat(zs[..., None], N, axis=-1)], axis=-1), axis=-1)
    low = low * ((1 + np.where(big, 0.0, r) ** 2) ** (-N / 2))[..., None]
    high = np.cumprod(np.concatenate([np.ones(z1.shape + (1,), complex),
                                      np.repeat(ws[..., None], N, axis=-1)], axis=-1), axis=-1)
    ph = np.where(big, z1 / np.where(big, r, 1.0), 1.0) ** N
    rb = np.where(big, r, 1.0)
    high = high[..., ::-1] * (ph * (1 + rb ** -2) ** (-N / 2))[..., None]
    out = np.where(big[..., None], high, low)
    return np.exp(_fs_log_coeffs(N))[None, :].reshape((1,) * z1.ndim + (N + 1,)) * out


def _sphere_monomial_gram(geometry: ModelGeometry, N: int, quad: Quadrature) -> np.ndarray:
    """Gram matrix of the (weighted) FS monomials on a sphere grid, via FFT in phi.

    u_j = c_j r^j e^{ij phi} (1+r^2)^{-N/2} E^{1/2}, with E = exp(-N eps chi), so
    G_jk = sum_t w_t R_j(t) R_k(t) sum_phi e^{i(j-k) phi} E(t, phi) dens.
    """
    nt, nphi = quad.spec["nt"], quad.spec["nphi"]
    Z = quad.points[:, 0].reshape(nt, nphi)
    W = quad.weights.reshape(nt, nphi)
    r = np.abs(Z[:, 0])
    k = np.arange(N + 1)
    logR = _fs_log_coeffs(N)[None, :] + k[None, :] * np.log(r)[:, None] \
        - 0.5 * N * np.log1p(r ** 2)[:, None]
    E = W.copy()
    if geometry.kind == "projective_line_perturbed":
        E = E * np.exp(-N * geometry.eps * geometry._bump(Z)[0])
    F = np.fft.fft(E, axis=1)  # F[t, n] = sum_l E_l e^{-2 pi i n l / nphi}
    d = k[:, None] - k[None, :]
    # sum_l E_l e^{i d phi_l}, phi_l = 2 pi (l + 1/2) / nphi
    idx = (-d) % nphi
    shift = np.exp(1j * np.pi * d / nphi)
    G = np.zeros((N + 1, N + 1), dtype=complex)
    for t in range(nt):
        R = np.exp(logR[t])
        G += np.outer(R, R) * F[t, idx] * shift
    return G


def _theta_sections(geometry: ModelGeometry, z1: np.ndarray, N: int) -> np.ndarray:
    """Lifted level-N theta functions, orthonormal, shape (..., N).

    theta_j(z) = sum_n exp(pi i N tau k^2 + 2 pi i N k z), k = n + j/N,
    combined with a^{-N/2} = exp(-pi N y^2 / t) termwise so every term has
    modulus exp(-pi N (t k + y)^2 / t).
    """
    t = complex(geometry.tau).imag
    x, y = z1.real[..., None, None], z1.imag[..., None, None]
    j = np.arange(N)[:, None]
    W = int(np.ceil(np.sqrt(THETA_CUT / (np.pi * N * t)))) + 1
    off = np.arange(-W, W + 1)[None, :]
    n0 = np.round(-y / t - j / N)
    k = n0 + off + j / N
    expo = -np.pi * N * (t * k + y) ** 2 / t + 2j * np.pi * N * k * x
    vals = np.exp(expo).sum(axis=-1)
    norm2 = (np.pi / t) * np.sqrt(t / (2 * N))
    return vals / np.sqrt(norm2)


def theta_combination(geometry: ModelGeometry, z1: np.ndarray, N: int, coeffs: np.ndarray) -> np.ndarray:
    """sum_j c_j theta_j(z) for the lifted orthonormal theta basis.

    With M = N n + j the double sum collapses to one sum over integers M with
    terms c_{M mod N} exp(-pi (t M + N y)^2 / (N t) + 2 pi i M x); only
    O(sqrt N) of them exceed the cutoff.
    """
    t = complex(geometry.tau).imag
    z1 = np.asarray(z1, complex)
    x, y = z1.real[..., None], z1.imag[..., None]
    R = int(np.ceil(np.sqrt(THETA_CUT * N / (np.pi * t)))) + 1
    M = np.round(-N * y / t) + np.arange(-R, R + 1)
    c = np.asarray(coeffs, complex)[np.mod(M, N).astype(int)]
    expo = -np.pi * (t * M + N * y) ** 2 / (N * t) + 2j * np.pi * M * x
    norm2 = (np.pi / t) * np.sqrt(t / (2 * N))
    return (c * np.exp(expo)).sum(axis=-1) / np.sqrt(norm2)


def _bf_monomials(geometry: ModelGeometry, z: np.ndarray, N: int, K: int) -> np.ndarray:
    """Truncated Bargmann-Fock basis sqrt(N^{|a|+m}/(pi^m a!)) z^a e^{-N|z|^2/2}."""
    z = as_points(z, geometry.m)
    k = np.arange(K + 1)
    one = []
    for j in range(geometry.m):
        zj = z[..., j][..., None]
        logc = 0.5 * ((k + 1) * np.log(N) - gammaln(k + 1) - np.log(np.pi))
        one.append(np.exp(logc) * zj ** k * np.exp(-N * np.abs(zj) ** 2 / 2))
    out = one[0]
    for o in one[1:]:
        out = (out[..., :, None] * o[..., None, :]).reshape(out.shape[:-1] + (-1,))
    return out


@dataclass
class SectionBasis:
    """Orthonormal basis of level-N sections, evaluated as lifts at theta = 0."""

    geometry: ModelGeometry
    level: int
    dim: int
    gram_residual: float
    transform: Optional[np.ndarray] = None  # perturbed: rows map FS monomials to basis
    truncation: Optional[int] = None  # Bargmann-Fock only
    grid: dict = field(default_factory=dict)

    def values(self, z) -> np.ndarray:
        """Array (..., dim) of S_j(z, 0)."""
        g = self.geometry
        z = as_points(z, g.m)
        N = self.level
        if g.kind == "bargmann_fock":
            return _bf_monomials(g, z, N, self.truncation)
        if g.kind == "torus":
            return _theta_sections(g, z[..., 0], N)
        u = _fs_monomials(z[..., 0], N)
        if g.kind == "projective_line":
            return u
        u = u * np.exp(-N * g.eps * g._bump(z[..., 0])[0] / 2)[..., None]
        return u @ self.transform.T

    def eval(self, j: int, x: BundlePoint) -> complex:
        return complex(self.values(x.z)[..., j].reshape(()) * np.exp(1j * self.level * x.theta))

    def monomial_coefficients(self) -> np.ndarray:
        """Matrix C with S_j = sum_k C[j, k] z^k (projective line models only)."""
        g = self.geometry
        if g.kind not in ("projective_line", "projective_line_perturbed"):
            raise ModelError("monomial coefficients exist only on the projective line")
        N = self.level
        k = np.arange(N + 1)
        c = np.exp(0.5 * (gammaln(N + 2) - gammaln(k + 1) - gammaln(N - k + 1) - np.log(np.pi)))
        T = np.eye(N + 1) if self.transform is None else self.transform
        return T * c[None, :]


def gram_matrix(basis_values: Callable[[np.ndarray], np.ndarray], quad: Quadrature,
                chunk: int = 8192) -> np.ndarray:
    """Quadrature Gram matrix, accumulated over fixed-size node chunks."""
    G = None
    for s in range(0, len(quad.weights), chunk):
        U = basis_values(quad.points[s:s + chunk])
        part = U.T @ (quad.weights[s:s + chunk, None] * np.conj(U))
        G = part if G is None else G + part
    return G


def basis_sections(geometry: ModelGeometry, N: int, cache=None,
                   refine: float = 1.0) -> SectionBasis:
    """Orthonormal level-N basis; raises ModelError if the Gram check fails."""
    if int(N) != N or N < 1:
        raise ModelError("level N must be a positive integer")
    N = int(N)
    g = geometry
    if g.kind == "bargmann_fock":
        # truncation covers |z| <= 3 to double precision
        K = int(np.ceil(N * 9 * np.e)) + 40
        K = min(K, 400)
        b = SectionBasis(g, N, (K + 1) ** g.m, 0.0, truncation=K)
        quad = hermite_quadrature(g, N, 40)
        small = SectionBasis(g, N, 0, 0.0, truncation=min(K, 12))
        G = gram_matrix(small.values, quad)
        b.gram_residual = float(np.abs(G - np.eye(len(G))).max())
        b.grid = dict(quad.spec)
        return b
    memo_key = (g, N, refine)
    if memo_key in _MEMO:
        return _MEMO[memo_key]
    d = g.dim_sections(N)
    quad = default_quadrature(g, N, refine)
    check = default_quadrature(g, N, 1.5 * refine)
    key = None
    if cache is not None:
        key = cache.key(g.model_id, N, quad.spec)
        hit = cache.lookup(key)
        if hit is not None:
            T = hit.get("transform")
            return SectionBasis(g, N, d, float(hit["gram_residual"]),
                                transform=T, grid=dict(quad.spec))
    transform = None
    tol = GRAM_TOL_EXACT
    if g.kind == "projective_line_perturbed":
        tol = GRAM_TOL_PERTURBED
        G = _sphere_monomial_gram(g, N, quad)
        # Jacobi scaling first: exp(-N eps chi) shrinks some monomials a lot
        s = 1 / np.sqrt(np.diag(G).real)
        try:
            L = np.linalg.cholesky(s[:, None] * G * s[None, :])
        except np.linalg.LinAlgError as exc:
            raise ModelError(f"Gram matrix not positive definite at N={N}") from exc
        transform = np.linalg.solve(L, np.diag(s))
    b = SectionBasis(g, N, d, 0.0, transform=transform, grid=dict(quad.spec))
    if g.kind == "torus":
        G = gram_matrix(b.values, check)
    else:
        G = _sphere_monomial_gram(g, N, check)
        if transform is not None:
            G = transform @ G @ np.conj(transform).T
    b.gram_residual = float(np.abs(G - np.eye(d)).max())
    if b.gram_residual > tol:
        raise ModelError(f"quadrature underresolved for {g.model_id} at N={N}: "
                         f"Gram residual {b.gram_residual:.3g} > {tol:g}")
    if cache is not None:
        cache.store(key, {"gram_residual": b.gram_residual, "transform": transform})
    _MEMO[memo_key] = b
    return b


_MEMO: dict = {}


# ----------------------------------------------------------------- kernels
class SzegoEvaluator:
    """Level-N Szegő kernel Pi_N(x, y) = sum_j S_j(x) conj(S_j(y))."""

    def __init__(self, geometry: ModelGeometry, N: int, basis: Optional[SectionBasis] = None,
                 cache=None):
        self.geometry = geometry
        self.level = int(N)
        self.m = geometry.m
        closed = geometry.kind in ("bargmann_fock", "projective_line")
        if basis is None and not closed:
            basis = basis_sections(geometry, N, cache=cache)
        self.basis = basis
        self._closed = closed

    @property
    def dim(self) -> Optional[int]:
        return self.geometry.dim_sections(self.level)

    def lift(self, z) -> np.ndarray:
        if self.basis is None:
            self.basis = basis_sections(self.geometry, self.level)
        return self.basis.values(z)

    def kernel(self, z, w) -> np.ndarray:
        """Pi_N((z,0),(w,0)) broadcasting over leading axes."""
        g, N = self.geometry, self.level
        z = as_points(z, self.m)
        w = as_points(w, self.m)
        if g.kind == "bargmann_fock":
            e = np.sum(z * np.conj(w) - 0.5 * np.abs(z) ** 2 - 0.5 * np.abs(w) ** 2, axis=-1)
            return (N / np.pi) ** self.m * np.exp(N * e)
        if g.kind == "projective_line":
            z1, w1 = z[..., 0], w[..., 0]
            e = (np.log(1 + z1 * np.conj(w1)) - 0.5 * np.log1p(np.abs(z1) ** 2)
                 - 0.5 * np.log1p(np.abs(w1) ** 2))
            return (N + 1) / np.pi * np.exp(N * e)
        U = self.basis.values(z)
        V = self.basis.values(w)
        return np.sum(U * np.conj(V), axis=-1)

    def diagonal(self, z) -> np.ndarray:
        return self.kernel(z, z).real

    def __call__(self, x: BundlePoint, y: BundlePoint) -> complex:
        k = self.kernel(x.z, y.z)
        return complex(np.reshape(k, ()) * np.exp(1j * self.level * (x.theta - y.theta)))


def szego_eval(evaluator: SzegoEvaluator, x: BundlePoint, y: BundlePoint) -> complex:
    return evaluator(x, y)


def heisenberg_model_kernel(u, theta, v, phi, m: int = 1) -> np.ndarray:
    """pi^{-m} exp(i(theta - phi) + u.conj(v) - (|u|^2 + |v|^2)/2)."""
    u = as_points(u, m)
    v = as_points(v, m)
    e = np.sum(u * np.conj(v) - 0.5 * np.abs(u) ** 2 - 0.5 * np.abs(v) ** 2, axis=-1)
    return np.pi ** (-m) * np.exp(1j * (np.asarray(theta) - np.asarray(phi)) + e)


def inner_product(F1, F2, quad: Quadrature, level1: int, level2: int) -> complex:
    """(1/2pi) int_X F1 conj(F2) dV_X for level-N equivariant F(z, theta).

    The fiber integral cancels the 1/2pi, leaving a quadrature over M at theta = 0.
    """
    if level1 != level2:
        raise ValueError(f"mismatched levels {level1} != {level2}")
    a = F1(quad.points, 0.0)
    b = F2(quad.points, 0.0)
    return complex(quad.integrate(a * np.conj(b)))


def kernel_axioms(evaluator: SzegoEvaluator, n: int = 5, seed: int = 0, refine: float = 1.5) -> dict:
    """Hermiticity, equivariance, reproducing and dimension residuals on sampled points.

    reproducing: max over an n x n sample of (x, z) pairs of
    |int Pi(x, y) Pi(y, z) dV(y) - Pi(x, z)|; dimension: |int Pi(x, x) dV - d_N| / d_N.
    The dimension identity needs a compact model (nan otherwise).
    """
    g, N = evaluator.geometry, evaluator.level
    rng = np.random.default_rng(seed)
    X = g.sample_points(rng, n)
    Z = g.sample_points(rng, n)
    K = evaluator.kernel(X[:, None, :], Z[None, :, :])
    Kt = evaluator.kernel(Z[None, :, :], X[:, None, :])
    out = {"hermitian": float(np.abs(K - np.conj(Kt)).max())}
    phi = rng.uniform(-np.pi, np.pi, n)
    x0 = BundlePoint(X[0], 0.0)
    out["equivariance"] = float(max(abs(evaluator(x0.rotate(p), BundlePoint(Z[i], 0.3))
                                        - np.exp(1j * N * p) * evaluator(x0, BundlePoint(Z[i], 0.3)))
                                    for i, p in enumerate(phi)))
    if g.kind == "bargmann_fock":
        quad = hermite_quadrature(g, N, 60 if g.m == 1 else 28)
    else:
        quad = default_quadrature(g, N, refine)
    Y = quad.points
    A = evaluator.kernel(X[:, None, :], Y[None, :, :])  # (n, q)
    B = evaluator.kernel(Y[:, None, :], Z[None, :, :])  # (q, n)
    R = (A * quad.weights[None, :]) @ B
    out["reproducing"] = float(np.abs(R - K).max())
    if not g.is_compact:
        out["dimension"] = float("nan")  # infinite-dimensional section space
        return out
    d = g.dim_sections(N)
    out["dimension"] = float(abs(quad.integrate(evaluator.diagonal(Y)) - d) / d)
    return out
