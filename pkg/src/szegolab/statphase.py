"""Oscillatory integrals with phase Psi(t, theta) = i t (1 - e^{i theta}) - theta.

I_1 = N int_0^3 int_{-pi}^{pi} e^{i N Psi} rho_1(t) A(t, theta) dtheta dt is
evaluated by tensor quadrature (Gauss-Legendre in t, trapezoid in theta; the
integrand is 2 pi periodic in theta for integer N) and compared with the
stationary-phase expansion at the nondegenerate critical point (1, 0).

Expansion terms follow the standard complex stationary-phase formula

    L_j A = sum_{nu - mu = j, 2 nu >= 3 mu} i^{-j} 2^{-nu}
            <Psi''^{-1} D, D>^nu (g^mu A)(1, 0) / (mu! nu!),

with D = -i d, g the third-order Taylor remainder of Psi, and
<Psi''^{-1} D, D> = i d_t^2 - 2 d_t d_theta. Taylor data come from a
two-dimensional Cauchy integral evaluated by FFT, so amplitudes must accept
complex (t, theta).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import factorial
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

CRIT = (1.0, 0.0)
HESSIAN = np.array([[0.0, 1.0], [1.0, 1j]])
TAYLOR_ORDER = 16
TAYLOR_RADIUS = 0.5
TAYLOR_NODES = 64


class StatPhaseError(RuntimeError):
    pass


def psi(t, th):
    return 1j * t * (1 - np.exp(1j * th)) - th


def psi_grad(t, th):
    """(d Psi/dt, d Psi/dtheta) = (i(1 - e^{i theta}), t e^{i theta} - 1)."""
    return 1j * (1 - np.exp(1j * th)), t * np.exp(1j * th) - 1


def psi_hessian(t, th):
    e = np.exp(1j * th)
    return np.array([[0.0 * e, e], [e, 1j * t * e]])


def _smoothstep(x):
    x = np.clip(np.asarray(x, float), 0.0, 1.0)
    out = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = np.where(inner, x, 0.5)
    e1 = np.exp(-1 / xi)
    e2 = np.exp(-1 / (1 - xi))
    out[inner] = (e1 / (e1 + e2))[inner]
    out[x >= 1] = 1.0
    return out


def cutoff(t):
    """Smooth rho_1: 1 on [0.4, 2], 0 outside (0.2, 2.8)."""
    t = np.asarray(t, float)
    return _smoothstep((t - 0.2) / 0.2) * _smoothstep((2.8 - t) / 0.8)


@dataclass(frozen=True)
class AmplitudeSpec:
    """Amplitude A(t, theta); the cutoff rho_1 is applied inside the integral.

    eval must be analytic and accept complex arrays (Taylor data use a
    Cauchy integral around (1, 0)).
    """

    eval: Callable
    name: str = "amplitude"
    support: tuple = (0.2, 2.8)

    def __call__(self, t, th):
        return self.eval(t, th)

    def __add__(self, other: "AmplitudeSpec") -> "AmplitudeSpec":
        return AmplitudeSpec(lambda t, th: self.eval(t, th) + other.eval(t, th),
                             f"{self.name}+{other.name}")

    def scale(self, c: complex) -> "AmplitudeSpec":
        return AmplitudeSpec(lambda t, th: c * self.eval(t, th), f"{c}*{self.name}")


def _ones(t, th):
    return np.ones(np.broadcast(t, th).shape, dtype=complex)


BUNDLED_AMPLITUDES = {
    "constant": AmplitudeSpec(_ones, "constant"),
    "exp": AmplitudeSpec(lambda t, th: np.exp(0.7 * t * np.exp(1j * th)) * t ** 2, "exp"),
    "poly": AmplitudeSpec(lambda t, th: (t ** 3 - 0.5j * t) * np.cos(th) + 0.3 * np.sin(2 * th),
                          "poly"),
    "gauss": AmplitudeSpec(lambda t, th: np.exp(-(t - 1.2) ** 2) * (1 + 0.5 * np.sin(th) ** 2),
                           "gauss"),
}
TEST_AMPLITUDES = ("exp", "poly", "gauss")


def _integral(amp: AmplitudeSpec, N: int, nt: int, nth: int) -> complex:
    x, w = leggauss(nt)
    t = 1.5 * (x + 1)
    wt = 1.5 * w
    th = -np.pi + 2 * np.pi * np.arange(nth) / nth
    total = 0.0 + 0.0j
    for s in range(0, nt, 64):
        T, TH = np.meshgrid(t[s:s + 64], th, indexing="ij")
        f = np.exp(1j * N * psi(T, TH)) * cutoff(T) * amp(T, TH)
        total += np.sum(wt[s:s + 64, None] * f)
    return N * total * (2 * np.pi / nth)


def oscillatory_integral(amp: AmplitudeSpec, N: int, tol: float = 1e-10,
                         max_refine: int = 4, return_error: bool = False):
    """Tensor quadrature of I_1 with grid refinement until two levels agree."""
    if N < 8:
        raise StatPhaseError("N must be >= 8 for a resolvable oscillation")
    nt, nth = 240, 4 * N + 256
    prev = _integral(amp, N, nt, nth)
    for _ in range(max_refine):
        nt, nth = int(nt * 1.5), int(nth * 1.25)
        cur = _integral(amp, N, nt, nth)
        err = abs(cur - prev)
        if err <= tol * max(abs(cur), 1e-300) or (abs(cur) == 0 and err == 0):
            return (cur, err) if return_error else cur
        prev = cur
    raise StatPhaseError(f"quadrature did not converge: last change {err:.3g}, value {abs(cur):.3g}")


# --------------------------------------------------------- Taylor algebra
def taylor_coefficients(f: Callable, center=CRIT, radius: float = TAYLOR_RADIUS,
                        n: int = TAYLOR_NODES, K: int = TAYLOR_ORDER) -> np.ndarray:
    """c[a, b] with f(center + (s, u)) = sum c[a, b] s^a u^b, via a 2-D Cauchy FFT."""
    z = radius * np.exp(2j * np.pi * np.arange(n) / n)
    S, U = np.meshgrid(z, z, indexing="ij")
    F = np.asarray(f(center[0] + S, center[1] + U), dtype=complex)
    C = np.fft.fft2(F) / n ** 2
    a = np.arange(n)
    C = C / (radius ** a)[:, None] / (radius ** a)[None, :]
    return C[:K, :K]


def _mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    K = a.shape[0]
    out = np.zeros_like(a)
    for i, j in zip(*np.nonzero(a)):
        out[i:, j:] += a[i, j] * b[:K - i, :K - j]
    return out


def _dt(c):
    K = c.shape[0]
    out = np.zeros_like(c)
    out[:-1, :] = c[1:, :] * np.arange(1, K)[:, None]
    return out


def _dth(c):
    K = c.shape[1]
    out = np.zeros_like(c)
    out[:, :-1] = c[:, 1:] * np.arange(1, K)[None, :]
    return out


def hessian_operator(c: np.ndarray) -> np.ndarray:
    """<Psi''^{-1} D, D> = i d_t^2 - 2 d_t d_theta on Taylor coefficient arrays."""
    return 1j * _dt(_dt(c)) - 2 * _dt(_dth(c))


def phase_remainder_coeffs() -> np.ndarray:
    """Taylor coefficients of Psi minus its quadratic Taylor polynomial at (1, 0)."""
    c = taylor_coefficients(lambda t, th: psi(t, th))
    for i, j in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
        c[i, j] = 0
    return c


def max_order(K: int = TAYLOR_ORDER) -> int:
    """Largest J whose terms need derivatives of order < K (order 6J)."""
    return (K - 1) // 6


def expansion_terms(amp: AmplitudeSpec, J: int) -> list:
    """[L_0 A, ..., L_J A] at the critical point."""
    if J > max_order():
        raise StatPhaseError(f"J={J} exceeds available derivative order (max {max_order()})")
    cA = taylor_coefficients(amp.eval)
    g = phase_remainder_coeffs()
    out = []
    for j in range(J + 1):
        tot = 0.0 + 0.0j
        for mu in range(0, 2 * j + 1):
            nu = j + mu
            c = cA.copy()
            for _ in range(mu):
                c = _mul(c, g)
            for _ in range(nu):
                c = hessian_operator(c)
            tot += c[0, 0] / (2 ** nu * 1j ** j * factorial(mu) * factorial(nu))
        out.append(tot)
    return out


_GAMMA_CACHE: dict = {}


def calibrate_gamma(N_ref: int = 1024, J: int = 2) -> float | complex:
    """Prefactor gamma from the constant amplitude at one reference level."""
    key = (N_ref, J)
    if key not in _GAMMA_CACHE:
        amp = BUNDLED_AMPLITUDES["constant"]
        L = expansion_terms(amp, J)
        series = sum(L[j] / N_ref ** j for j in range(J + 1))
        _GAMMA_CACHE[key] = oscillatory_integral(amp, N_ref) / series
    return _GAMMA_CACHE[key]


@dataclass
class StatPhaseResult:
    N: int
    J: int
    partial_sums: list
    quadrature: complex
    errors: list
    gamma: complex
    remainder_scale: list = field(default_factory=list)  # N^{-(j+1)} per order

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("partial_sums",):
            d[k] = [[v.real, v.imag] for v in d[k]]
        d["quadrature"] = [self.quadrature.real, self.quadrature.imag]
        d["gamma"] = [complex(self.gamma).real, complex(self.gamma).imag]
        return d


def stationary_phase_expansion(amp: AmplitudeSpec, N: int, J: int,
                               gamma: Optional[complex] = None,
                               quadrature: Optional[complex] = None) -> StatPhaseResult:
    g = calibrate_gamma() if gamma is None else gamma
    L = expansion_terms(amp, J)
    sums, acc = [], 0.0 + 0.0j
    for j in range(J + 1):
        acc += g * L[j] / N ** j
        sums.append(acc)
    q = oscillatory_integral(amp, N) if quadrature is None else quadrature
    errs = [abs(q - s) for s in sums]
    return StatPhaseResult(N, J, sums, q, errs, g, [float(N) ** -(j + 1) for j in range(J + 1)])


def error_orders(amp: AmplitudeSpec, Ns: Sequence[int] = (64, 128, 256), J: int = 2,
                 gamma: Optional[complex] = None) -> list:
    """Empirical log-log slopes of |expansion_J - quadrature| versus N, for j = 0..J."""
    errs = []
    for N in Ns:
        errs.append(stationary_phase_expansion(amp, N, J, gamma).errors)
    errs = np.array(errs)
    return [float(np.polyfit(np.log(Ns), np.log(errs[:, j]), 1)[0]) for j in range(J + 1)]


# ----------------------------------------------------------- tail piece
def tail_bump(t):
    """Smooth bump supported in [2, 4]."""
    t = np.asarray(t, float)
    return _smoothstep((t - 2) / 0.5) * _smoothstep((4 - t) / 0.5)


def i2_tail_integral(amp: Optional[Callable], N: int, nt: int = 200, nth: int = 256) -> complex:
    """N int_2^4 int e^{i N Psi} A dtheta dt with the theta contour shifted to Im = log t.

    For integer N the integrand is periodic and analytic in theta, so the
    shift is exact; it removes the cancellation (|e^{iN Psi}| drops to
    e^{-N(t - 1 - log t)}), and the tiny true value is resolved.
    amp(t, theta) must be analytic in theta and is multiplied by tail_bump(t).
    """
    if amp is None:
        return 0.0 + 0.0j
    x, w = leggauss(nt)
    t = 3 + x
    th = -np.pi + 2 * np.pi * np.arange(nth) / nth
    T, TH = np.meshgrid(t, th, indexing="ij")
    Z = TH + 1j * np.log(T)
    f = np.exp(1j * N * psi(T, Z)) * amp(T, Z) * tail_bump(T)
    return N * np.sum(w[:, None] * f) * (2 * np.pi / nth)


def i2_tail_bound(amp: Optional[Callable], Ns: Sequence[int], k: int, m: int = 1) -> dict:
    """|I_2| per N, the constants C_k = |I_2| / N^{m+1-k}, and the log-log slope."""
    vals = [abs(i2_tail_integral(amp, N)) for N in Ns]
    C = [v / N ** (m + 1 - k) for v, N in zip(vals, Ns)]
    slope = None
    if all(v > 0 for v in vals) and len(Ns) >= 2:
        slope = float(np.polyfit(np.log(Ns), np.log(vals), 1)[0])
    return {"Ns": list(Ns), "values": vals, "C_k": C, "k": k, "slope": slope}
