"""Weak-coupling (second-order TCL) dynamics with stationary rates.

Equations of motion for the Bloch vector (x, y, z) = (<sx>, <sy>, <sz>):

    dx/dt = -G_xx x - G_x
    dy/dt = -(2 Delta - G_yz) z - G_yy y
    dz/dt = 2 Delta y

The sign of ``G_yz`` is the one for which the closed-form propagator below is
the exact solution; with it ``G_yz > 0`` lowers the oscillation frequency to

    Delta~ = 1/2 sqrt(8 Delta (2 Delta - G_yz) - G_yy**2).

Rates from a spectral density use the T = 0 bath correlation function
C(tau) = (1/pi) int J(w) exp(-i w tau) dw and its long-time half-Fourier
integrals at the spin frequency 2 Delta:

    G_xx = G_yy = G_x = 2 J(2 Delta)
    G_yz = (4/pi) P int J(w) 2 Delta / (w**2 - 4 Delta**2) dw
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, NumericalConsistencyError, OverdampedError
from .propagator import Trajectory
from .spectral import SpectralDensity
from .dynmap import trajectory_from_bloch


@dataclass(frozen=True)
class Tcl2Rates:
    gamma_xx: float
    gamma_x: float
    gamma_yy: float
    gamma_yz: float

    def __iter__(self):
        return iter(astuple(self))

    def is_physical(self) -> bool:
        return self.gamma_xx > 0 and self.gamma_yy >= 0

    def scaled(self, factor: float) -> "Tcl2Rates":
        return Tcl2Rates(*(factor * g for g in self))


ZERO_RATES = Tcl2Rates(0.0, 0.0, 0.0, 0.0)


def renormalized_frequency(delta: float, rates: Tcl2Rates) -> float:
    disc = 8.0 * delta * (2.0 * delta - rates.gamma_yz) - rates.gamma_yy**2
    if disc <= 0:
        raise OverdampedError(
            f"8 Delta (2 Delta - G_yz) - G_yy^2 = {disc:.6g} <= 0: no oscillatory solution; "
            "use solve_tcl2_ode instead"
        )
    return 0.5 * math.sqrt(disc)


def _yz_block(delta: float, rates: Tcl2Rates, t: np.ndarray):
    dt_ = renormalized_frequency(delta, rates)
    s, c = np.sin(dt_ * t), np.cos(dt_ * t)
    k = rates.gamma_yy / (2.0 * dt_)
    g = (2.0 * delta - rates.gamma_yz) / dt_
    h = 2.0 * delta / dt_
    return dt_, s, c, k, g, h


def analytic_affine(delta: float, rates: Tcl2Rates, t) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form M(t) (shape (K, 3, 3)) and b(t) (shape (K, 3))."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    _, s, c, k, g, h = _yz_block(delta, rates, t)
    damp = np.exp(-0.5 * rates.gamma_yy * t)
    ex = np.exp(-rates.gamma_xx * t)
    M = np.zeros((t.size, 3, 3))
    M[:, 0, 0] = ex
    M[:, 1, 1] = damp * (c - k * s)
    M[:, 1, 2] = -g * damp * s
    M[:, 2, 1] = h * damp * s
    M[:, 2, 2] = damp * (c + k * s)
    b = np.zeros((t.size, 3))
    if rates.gamma_xx != 0.0:
        b[:, 0] = -rates.gamma_x / rates.gamma_xx * (1.0 - ex)
    else:
        b[:, 0] = -rates.gamma_x * t
    return M, b


def modulation_terms(delta: float, rates: Tcl2Rates, t) -> tuple[np.ndarray, np.ndarray]:
    """A(t), B(t): squared Frobenius norm and squared determinant of the undamped (y, z) block."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    dt_, s, c, k, g, h = _yz_block(delta, rates, t)
    A = (2.0 * k**2 + h**2 + g**2) * s**2 + 2.0 * c**2
    # det = c^2 + (h g - k^2) s^2, and h g - k^2 = 1 by the definition of Delta~
    B = (c**2 + (h * g - k**2) * s**2) ** 2
    return A, B


def analytic_singular_values(delta: float, rates: Tcl2Rates, t, tol: float = 1e-12):
    """(S_plus, S_minus, S_x): singular values of the closed-form M(t).

    S_pm = exp(-G_yy t / 2) / 2 * (sqrt(A + 2 sqrt(B)) +- sqrt(A - 2 sqrt(B))),
    S_x = exp(-G_xx t).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    A, B = modulation_terms(delta, rates, t)
    root_b = np.sqrt(B)
    gap = A - 2.0 * root_b
    if np.any(A * A - 4.0 * B < -tol * np.maximum(A * A, 1.0)):
        raise NumericalConsistencyError("A^2 - 4B is negative beyond rounding")
    gap = np.clip(gap, 0.0, None)
    damp = np.exp(-0.5 * rates.gamma_yy * t)
    s_plus = 0.5 * damp * (np.sqrt(A + 2.0 * root_b) + np.sqrt(gap))
    s_minus = 0.5 * damp * (np.sqrt(A + 2.0 * root_b) - np.sqrt(gap))
    return s_plus, s_minus, np.exp(-rates.gamma_xx * t)


def sorted_singular_values(delta: float, rates: Tcl2Rates, t) -> np.ndarray:
    """Closed-form singular values sorted descending, shape (K, 3)."""
    return -np.sort(-np.stack(analytic_singular_values(delta, rates, t), axis=1), axis=1)


def generator(delta: float, rates: Tcl2Rates) -> tuple[np.ndarray, np.ndarray]:
    """Linear part L and offset f of da/dt = L a + f."""
    L = np.array([
        [-rates.gamma_xx, 0.0, 0.0],
        [0.0, -rates.gamma_yy, -(2.0 * delta - rates.gamma_yz)],
        [0.0, 2.0 * delta, 0.0],
    ])
    return L, np.array([-rates.gamma_x, 0.0, 0.0])


def solve_tcl2_ode(delta: float, rates: Tcl2Rates | Callable[[float], Tcl2Rates],
                   a0, t_grid, rtol: float = 1e-10, atol: float = 1e-10,
                   label: str = "tcl2") -> Trajectory:
    """Integrate the Bloch equations with an embedded 8(5,3) Runge-Kutta scheme.

    ``rates`` may be a callable ``t -> Tcl2Rates`` for time-dependent rates.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    rate_fn = rates if callable(rates) else (lambda _t, _r=rates: _r)

    def rhs(t, a):
        L, f = generator(delta, rate_fn(t))
        return L @ a + f

    if t_grid.size == 1:
        return trajectory_from_bloch(t_grid, np.atleast_2d(np.asarray(a0, dtype=float)), label)
    sol = integrate.solve_ivp(rhs, (t_grid[0], t_grid[-1]), np.asarray(a0, dtype=float),
                              method="DOP853", t_eval=t_grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise ConvergenceError(f"TCL2 integration failed: {sol.message}", float("nan"))
    return trajectory_from_bloch(t_grid, sol.y.T, label)


def analytic_bloch(delta: float, rates: Tcl2Rates, a0, t) -> np.ndarray:
    M, b = analytic_affine(delta, rates, t)
    return M @ np.asarray(a0, dtype=float) + b


def _principal_value(f: Callable[[float], float], pole: float, lo: float, hi: float) -> float:
    """P int_lo^hi f(w) / (w - pole) dw, pole strictly inside (lo, hi)."""
    val, err, *rest = integrate.quad(f, lo, hi, weight="cauchy", wvar=pole, limit=500,
                                     epsabs=1e-13, epsrel=1e-11, full_output=1)
    if len(rest) > 1 and rest[0] > 0 and err > 1e-8 * max(1.0, abs(val)):
        raise ConvergenceError("principal-value integral did not converge", err)
    return val


def _quad(f, lo, hi) -> float:
    val, err, *rest = integrate.quad(f, lo, hi, limit=500, epsabs=1e-13, epsrel=1e-11,
                                     full_output=1)
    if len(rest) > 1 and rest[0] > 0 and err > 1e-8 * max(1.0, abs(val)):
        raise ConvergenceError("rate integral did not converge", err)
    return val


def rates_from_spectral_density(density: SpectralDensity, delta: float) -> Tcl2Rates:
    """Long-time TCL2 rates at zero temperature for H = Delta sx + sz sum c_n q_n."""
    omega = 2.0 * delta
    j0 = float(density(omega))
    lo, hi = density.support()
    # P int J(w) w0 / (w^2 - w0^2) dw = P int [J(w) w0 / (w + w0)] / (w - w0) dw
    g = lambda w: float(density(w)) * omega / (w + omega)
    if lo < omega < hi:
        cut = hi if np.isfinite(hi) else max(4.0 * omega, omega + 50.0 * _scale(density))
        pv = _principal_value(g, omega, lo, cut)
        if not np.isfinite(hi):
            pv += _quad(lambda w: g(w) / (w - omega), cut, np.inf)
    else:
        pv = _quad(lambda w: g(w) / (w - omega), lo, hi)
    return Tcl2Rates(2.0 * j0, 2.0 * j0, 2.0 * j0, 4.0 / np.pi * pv)


def _scale(density: SpectralDensity) -> float:
    return float(getattr(density, "omega_c", 1.0))
