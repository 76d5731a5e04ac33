"""Preferred coordinates, preferred frames and Heisenberg charts.

A preferred chart at P0 is complex-affine, z = P0 + T zeta, with T chosen so
that g and omega at P0 become the standard g0 = I and omega0 = sum dx_j^dy_j.
The preferred frame is e' = e_L exp(q) with the quadratic holomorphic
polynomial

    q(zeta) = phi0/2 + b.zeta + zeta^T c zeta,
    b = T^T d phi(P0),  c = (1/2) T^T (dd phi)(P0) T,

which removes the pluriharmonic 2-jet of phi = log a, so that

    log a'(zeta) = phi(P0 + T zeta) - 2 Re q(zeta) = |zeta|^2 + O(|zeta|^3).

In the Heisenberg chart a bundle point (zeta, theta') corresponds to the
original fiber coordinate theta = theta' - Im q(zeta) + theta0. The
connection coefficients are A_j = -(i/2) d log a' / d zeta_j.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .models import BundlePoint, ModelGeometry, as_points

FD_STEP = 1e-4


class ChartError(ValueError):
    """Model data that cannot be normalized, or a point outside the chart."""


def standard_forms(m: int):
    """(g0, omega0, J0) in the real basis (x_1..x_m, y_1..y_m)."""
    I = np.eye(m)
    Z = np.zeros((m, m))
    return np.eye(2 * m), np.block([[Z, I], [-I, Z]]), np.block([[Z, -I], [I, Z]])


def real_to_complex(R: np.ndarray) -> np.ndarray:
    """Complex m x m matrix of a complex-linear real 2m x 2m map (error otherwise)."""
    m = R.shape[0] // 2
    A, B = R[:m, :m], R[:m, m:]
    C, D = R[m:, :m], R[m:, m:]
    if np.abs(A - D).max() > 1e-10 * max(1, np.abs(R).max()) or \
            np.abs(B + C).max() > 1e-10 * max(1, np.abs(R).max()):
        raise ChartError("normalizing map is not complex linear")
    return A + 1j * C


def complex_to_real(T: np.ndarray) -> np.ndarray:
    return np.block([[T.real, -T.imag], [T.imag, T.real]])


def normalize_forms(G: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Real R with R^T G R = I and R^T W R = omega0.

    Symmetric inverse square root of G followed by an orthogonal change of
    basis from the real Schur form of the (now orthogonal) symplectic matrix.
    """
    m = G.shape[0] // 2
    g0, w0, _ = standard_forms(m)
    evals, V = np.linalg.eigh(G)
    if evals.min() <= 0:
        raise ChartError("metric is not positive definite")
    S = V @ np.diag(evals ** -0.5) @ V.T
    M = S.T @ W @ S
    if np.abs(M - w0).max() < 1e-12:
        return S
    Tm, Q = sla.schur(M, output="real")
    # 2x2 blocks [[0, b], [-b, 0]] with |b| = 1 for a compatible pair
    cols_x, cols_y = [], []
    i = 0
    while i < 2 * m:
        b = Tm[i, i + 1]
        if abs(abs(b) - 1) > 1e-8:
            raise ChartError("omega and g are not compatible at this point")
        if b > 0:
            cols_x.append(Q[:, i]); cols_y.append(Q[:, i + 1])
        else:
            cols_x.append(Q[:, i + 1]); cols_y.append(Q[:, i])
        i += 2
    Qs = np.column_stack(cols_x + cols_y)
    R = S @ Qs
    if np.abs(R.T @ W @ R - w0).max() > 1e-10 or np.abs(R.T @ G @ R - g0).max() > 1e-10:
        raise ChartError("normalization failed")
    return R


@dataclass(frozen=True)
class PreferredChart:
    center: np.ndarray
    T: np.ndarray  # complex m x m, z = center + T zeta
    jacobian_at_center: np.ndarray  # real 2m x 2m
    radius: float

    @property
    def m(self) -> int:
        return len(self.center)

    def coord_map(self, zeta) -> np.ndarray:
        """Complex chart coordinates zeta (..., m) -> manifold points (..., m)."""
        zeta = as_points(zeta, self.m)
        return self.center + zeta @ self.T.T

    def coord_map_real(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        m = self.m
        return self.coord_map(xi[..., :m] + 1j * xi[..., m:])

    def inverse(self, z) -> np.ndarray:
        z = as_points(z, self.m)
        return (z - self.center) @ np.linalg.inv(self.T).T

    def pullback_forms(self, geometry: ModelGeometry, zeta=None):
        """(g, omega) of the model in chart coordinates at the point zeta."""
        zeta = np.zeros(self.m, complex) if zeta is None else as_points(zeta, self.m)
        z = self.coord_map(zeta)
        R = complex_to_real(self.T)
        return (R.T @ geometry.metric_matrix(z) @ R, R.T @ geometry.omega_matrix(z) @ R)


def build_preferred_chart(geometry: ModelGeometry, P0, rotation: float = 0.0) -> PreferredChart:
    """Deterministic preferred chart at P0; rotation applies a unitary e^{i rotation}."""
    P0 = as_points(P0, geometry.m).reshape(geometry.m)
    if not np.all(np.isfinite(P0)):
        raise ChartError("P0 outside the atlas")
    R = normalize_forms(geometry.metric_matrix(P0), geometry.omega_matrix(P0))
    T = real_to_complex(R) * np.exp(1j * rotation)
    return PreferredChart(P0.copy(), T, complex_to_real(T), geometry.chart_radius)


@dataclass(frozen=True)
class PreferredFrame:
    """Frame e' = e_L exp(q) with log a'(zeta) = |zeta|^2 + O(3).

    Jets are the closed-form model jets at the chart center.
    """

    geometry: ModelGeometry
    chart: PreferredChart
    phi0: float
    b: np.ndarray
    c: np.ndarray

    def q(self, zeta) -> np.ndarray:
        zeta = as_points(zeta, self.chart.m)
        return (0.5 * self.phi0 + zeta @ self.b
                + np.einsum("...j,jk,...k->...", zeta, self.c, zeta))

    def log_a(self, zeta) -> np.ndarray:
        """log a' = log |e'^*|^2 in chart coordinates."""
        zeta = as_points(zeta, self.chart.m)
        return self.geometry.log_a(self.chart.coord_map(zeta)) - 2 * self.q(zeta).real

    def weight_a(self, zeta) -> np.ndarray:
        return np.exp(self.log_a(zeta))

    def norm(self, zeta) -> np.ndarray:
        """Pointwise h-norm |e'| = a'^{-1/2}."""
        return np.exp(-0.5 * self.log_a(zeta))

    def dlog_a(self, zeta) -> np.ndarray:
        """d log a' / d zeta_j (closed form)."""
        zeta = as_points(zeta, self.chart.m)
        T = self.chart.T
        grad = self.geometry.dlog_a(self.chart.coord_map(zeta)) @ T
        return grad - self.b - 2 * zeta @ self.c

    def connection_form(self, zeta) -> np.ndarray:
        """Chern connection 1-form of e' evaluated on the real basis, shape (..., 2m).

        nabla e' = -d log a' (1,0-part) e'; on e_x: -d_j, on e_y: -i d_j.
        """
        d = self.dlog_a(zeta)
        return np.concatenate([-d, -1j * d], axis=-1)

    def hessian_at_center(self, h: float = FD_STEP) -> np.ndarray:
        """Finite-difference nabla^2 e' at 0 as the tensor (X, Y) -> X(phi(Y))."""
        m = self.chart.m

        def central(step):
            out = np.zeros((2 * m, 2 * m), dtype=complex)
            for a in range(2 * m):
                e = np.zeros(2 * m)
                e[a] = step
                zp = e[:m] + 1j * e[m:]
                out[a] = (self.connection_form(zp) - self.connection_form(-zp)) / (2 * step)
            return out

        return (4 * central(h / 2) - central(h)) / 3


def build_preferred_frame(geometry: ModelGeometry, chart: PreferredChart) -> PreferredFrame:
    P0 = chart.center
    T = chart.T
    phi0 = float(geometry.log_a(P0))
    b = geometry.dlog_a(P0) @ T
    c = 0.5 * T.T @ geometry.ddlog_a(P0) @ T
    return PreferredFrame(geometry, chart, phi0, np.asarray(b), np.asarray(c))


@dataclass(frozen=True)
class HeisenbergChart:
    geometry: ModelGeometry
    preferred_chart: PreferredChart
    preferred_frame: PreferredFrame
    theta0: float = 0.0

    @property
    def m(self) -> int:
        return self.preferred_chart.m

    @property
    def center(self) -> np.ndarray:
        return self.preferred_chart.center

    def weight_a(self, zeta) -> np.ndarray:
        return self.preferred_frame.weight_a(zeta)

    def connection_A(self, zeta) -> np.ndarray:
        """A_j(zeta) with alpha = d theta + sum A_j dzeta_j + conj."""
        return -0.5j * self.preferred_frame.dlog_a(zeta)

    def to_bundle(self, zeta, theta: float = 0.0):
        """Heisenberg coordinates -> (base point z, original fiber angle)."""
        zeta = as_points(zeta, self.m)
        z = self.preferred_chart.coord_map(zeta)
        th = np.asarray(theta) - self.preferred_frame.q(zeta).imag + self.theta0
        return z, th

    def bundle_point(self, zeta, theta: float = 0.0) -> BundlePoint:
        z, th = self.to_bundle(zeta, theta)
        return BundlePoint(z.reshape(self.m), float(th))

    def check_inside(self, zeta) -> None:
        r = np.sqrt(np.sum(np.abs(as_points(zeta, self.m)) ** 2, axis=-1))
        if np.any(r > self.preferred_chart.radius):
            raise ChartError(f"point at chart radius {r.max():.3g} > {self.preferred_chart.radius:.3g}")


def heisenberg_chart(geometry: ModelGeometry, x0, rotation: float = 0.0) -> HeisenbergChart:
    """Heisenberg chart at a bundle point (BundlePoint or bare base point, theta0 = 0)."""
    if isinstance(x0, BundlePoint):
        P0, theta0 = x0.z, x0.theta
    else:
        P0, theta0 = x0, 0.0
    chart = build_preferred_chart(geometry, P0, rotation)
    return HeisenbergChart(geometry, chart, build_preferred_frame(geometry, chart), float(theta0))


def horizontal_lift_coeffs(chart: HeisenbergChart, zeta):
    """Vertical components (-A_j, -conj(A_j)) of d^h/dzeta_j and d^h/dzetabar_j."""
    zeta = as_points(zeta, chart.m)
    chart.check_inside(zeta)
    A = chart.connection_A(zeta)
    return -A, -np.conj(A)


# ----------------------------------------------------------- jet checks
def _fd_complex_derivs(f, m: int, h: float = FD_STEP):
    """First and second Wirtinger derivatives of f at 0 by central differences."""
    def shift(a, s):
        e = np.zeros(m, complex)
        if a < m:
            e[a] = s
        else:
            e[a - m] = 1j * s
        return e

    f0 = f(np.zeros(m, complex))
    d1 = np.zeros(2 * m, complex)
    d2 = np.zeros((2 * m, 2 * m), complex)
    for a in range(2 * m):
        d1[a] = (f(shift(a, h)) - f(shift(a, -h))) / (2 * h)
        for b in range(2 * m):
            if a == b:
                d2[a, a] = (f(shift(a, h)) - 2 * f0 + f(shift(a, -h))) / h ** 2
            else:
                d2[a, b] = (f(shift(a, h) + shift(b, h)) - f(shift(a, h) + shift(b, -h))
                            - f(shift(a, -h) + shift(b, h)) + f(shift(a, -h) + shift(b, -h))) / (4 * h * h)
    # real -> Wirtinger
    dx, dy = d1[:m], d1[m:]
    dz, dzb = 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)
    Dxx, Dxy, Dyx, Dyy = d2[:m, :m], d2[:m, m:], d2[m:, :m], d2[m:, m:]
    dzz = 0.25 * (Dxx - 1j * Dxy - 1j * Dyx - Dyy)
    dzzb = 0.25 * (Dxx + 1j * Dxy - 1j * Dyx + Dyy)
    dzbzb = 0.25 * (Dxx + 1j * Dxy + 1j * Dyx - Dyy)
    return f0, dz, dzb, dzz, dzzb, dzbzb


def jet_identities(chart: HeisenbergChart, h: float = FD_STEP) -> dict:
    """Residuals of the preferred-frame jet identities at the chart center.

    Returns max-abs residuals for: a(0) = 1, da(0) = 0, A(0) = 0,
    the four second-order relations between log a and A, and
    d^2a/dz dz = 0, d^2a/dz dzbar = delta.
    """
    m = chart.m
    la = lambda zeta: chart.preferred_frame.log_a(zeta)
    a = lambda zeta: chart.weight_a(zeta)
    a0, adz, adzb, adzz, adzzb, _ = _fd_complex_derivs(a, m, h)
    _, _, _, lzz, lzzb, lzbzb = _fd_complex_derivs(la, m, h)
    dA = np.zeros((m, 2 * m), complex)  # dA_j / d zeta_k, dA_j / d zetabar_k
    for j in range(m):
        Aj = lambda zeta, j=j: chart.connection_A(zeta)[..., j]
        _, dz, dzb, _, _, _ = _fd_complex_derivs(Aj, m, h)
        dA[j, :m], dA[j, m:] = dz, dzb
    I = np.eye(m)
    e1 = 0.5 * lzz + 1j * dA[:, :m]
    e2 = 0.5 * lzzb + 1j * dA[:, m:] - I
    e3 = 0.5 * lzzb.T + 1j * np.conj(dA[:, m:])
    e4 = 0.5 * lzbzb + 1j * np.conj(dA[:, :m])
    A0 = chart.connection_A(np.zeros(m, complex))
    return {
        "a0": abs(a0 - 1),
        "da": float(max(np.abs(adz).max(), np.abs(adzb).max())),
        "A0": float(np.abs(A0).max()),
        "eq_zz": float(np.abs(e1).max()),
        "eq_zzbar": float(np.abs(e2).max()),
        "eq_zbarz": float(np.abs(e3).max()),
        "eq_zbarzbar": float(np.abs(e4).max()),
        "d2a_zz": float(np.abs(adzz).max()),
        "d2a_zzbar": float(np.abs(adzzb - I).max()),
        "dA_dzbar": float(np.abs(dA[:, m:] + 0.5j * I).max()),
    }


def chart_invariants(geometry: ModelGeometry, chart: PreferredChart) -> dict:
    """Residuals of g = g0, omega = omega0 and sum dz (x) dzbar = g - i omega at P0."""
    g, w = chart.pullback_forms(geometry)
    g0, w0, _ = standard_forms(chart.m)
    m = chart.m
    E = np.concatenate([np.eye(m), 1j * np.eye(m)], axis=0)
    herm = E @ np.conj(E).T  # sum dz_j(v) conj(dz_j(w))
    return {"g": float(np.abs(g - g0).max()), "omega": float(np.abs(w - w0).max()),
            "hermitian": float(np.abs(herm - (g - 1j * w)).max())}
