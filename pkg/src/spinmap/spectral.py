"""Spectral densities and their equidistant discretization into bath modes.

Frequencies are in units of the tunnelling amplitude Delta unless noted.
A discretized bath realizes

    J(w) = pi/2 * sum_n c_n**2 / w_n * delta(w - w_n)

with midpoint couplings ``c_n**2 = (2/pi) J(w_n) w_n dw`` so that every bin
carries the continuum weight ``J(w_n) dw``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy import integrate

from .errors import InvalidDensityError

# fit of the trapped-ion spectral density, frequencies in units of the trap frequency
TRAP_FIT = (0.677, 0.541, 1.280)


@dataclass(frozen=True)
class OhmicDensity:
    """J(w) = pi/2 * alpha * w * exp(-w / omega_c)."""

    alpha: float
    omega_c: float

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidDensityError(f"alpha must be >= 0, got {self.alpha}")
        if self.omega_c <= 0:
            raise InvalidDensityError(f"omega_c must be > 0, got {self.omega_c}")

    def __call__(self, omega):
        return ohmic_j(omega, self)

    def support(self) -> tuple[float, float]:
        return 0.0, np.inf

    def scaled(self, factor: float) -> "OhmicDensity":
        return OhmicDensity(self.alpha * factor, self.omega_c)


def gapped_peak(b: float, c: float) -> float:
    """Location of the maximum of (w-b) exp(-((w-b)/c)**3)."""
    return b + c * 3.0 ** (-1.0 / 3.0)


@dataclass(frozen=True)
class GappedDensity:
    """Trapped-ion fit J(x) = alpha * pi/4 * a (x-b) exp(-((x-b)/c)**3) on [x_min, x_max].

    ``a``, ``b``, ``c``, ``omega_min`` and ``omega_max`` are given in units of
    the trap frequency w1.  ``unit`` is w1 expressed in the caller's frequency
    unit; values and arguments are converted as ``J(w) = unit * J_fit(w / unit)``.
    ``omega_min``/``omega_max`` default to ``b`` and ``b + 3c``.
    """

    alpha: float
    a: float = TRAP_FIT[0]
    b: float = TRAP_FIT[1]
    c: float = TRAP_FIT[2]
    omega_min: float | None = None
    omega_max: float | None = None
    unit: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidDensityError(f"alpha must be >= 0, got {self.alpha}")
        if self.omega_min is None:
            object.__setattr__(self, "omega_min", self.b)
        if self.omega_max is None:
            object.__setattr__(self, "omega_max", self.b + 3.0 * self.c)
        if not 0 < self.omega_min < self.omega_max:
            raise InvalidDensityError(
                f"need 0 < omega_min < omega_max, got {self.omega_min}, {self.omega_max}"
            )
        if self.unit <= 0:
            raise InvalidDensityError("unit must be positive")

    @classmethod
    def spin_resonant(cls, alpha: float, delta: float = 1.0, **kwargs) -> "GappedDensity":
        """Density in units of Delta with its maximum at the spin frequency 2*Delta."""
        b = kwargs.get("b", TRAP_FIT[1])
        c = kwargs.get("c", TRAP_FIT[2])
        return cls(alpha, unit=2.0 * delta / gapped_peak(b, c), **kwargs)

    def __call__(self, omega):
        return gapped_j(omega, self)

    @property
    def peak(self) -> float:
        return self.unit * gapped_peak(self.b, self.c)

    def support(self) -> tuple[float, float]:
        return self.unit * self.omega_min, self.unit * self.omega_max

    def scaled(self, factor: float) -> "GappedDensity":
        return GappedDensity(self.alpha * factor, self.a, self.b, self.c,
                             self.omega_min, self.omega_max, self.unit)


SpectralDensity = Union[OhmicDensity, GappedDensity]


def ohmic_j(omega, d: OhmicDensity):
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for omega >= 0 only")
    out = 0.5 * np.pi * d.alpha * w * np.exp(-w / d.omega_c)
    return out if out.ndim else float(out)


def gapped_j(omega, d: GappedDensity):
    w = np.asarray(omega, dtype=float)
    x = w / d.unit
    inside = (x >= d.omega_min) & (x <= d.omega_max)
    s = np.where(inside, x - d.b, 0.0)
    val = d.unit * d.alpha * 0.25 * np.pi * d.a * s * np.exp(-((s / d.c) ** 3))
    out = np.where(inside, val, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DiscretizedBath:
    omega: np.ndarray
    coupling: np.ndarray

    def __post_init__(self):
        w = np.array(self.omega, dtype=float)
        c = np.array(self.coupling, dtype=float)
        if w.shape != c.shape or w.ndim != 1:
            raise ValueError("omega and coupling must be 1-d arrays of equal length")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValueError("bath frequencies must be positive and strictly increasing")
        if np.any(~np.isfinite(c)) or np.any(c < 0):
            raise ValueError("couplings must be finite and non-negative")
        w.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "coupling", c)

    @property
    def n_modes(self) -> int:
        return self.omega.size

    def moment(self, f: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
        """Discrete analogue of int J(w) f(w) dw."""
        weights = 0.5 * np.pi * self.coupling**2 / self.omega
        fw = np.ones_like(self.omega) if f is None else f(self.omega)
        return float(np.sum(weights * fw))

    def reorganization_energy(self) -> float:
        """sum_n c_n**2 / (2 w_n**2), i.e. (1/pi) int J(w)/w dw."""
        return float(np.sum(self.coupling**2 / (2.0 * self.omega**2)))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "omega", "coupling"])
            for i, (w, c) in enumerate(zip(self.omega, self.coupling)):
                writer.writerow([i, repr(float(w)), repr(float(c))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "DiscretizedBath":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["omega"]) for r in rows]),
                   np.array([float(r["coupling"]) for r in rows]))

    @classmethod
    def single_mode(cls, omega: float, coupling: float) -> "DiscretizedBath":
        return cls(np.array([omega]), np.array([coupling]))


def default_range(density: SpectralDensity, n_modes: int) -> tuple[float, float]:
    """Discretization window for ``n_modes`` midpoint bins.

    Ohmic: bins centred on w_n = n w_max / N_b (n = 1..N_b) with w_max = 6 w_c.
    Gapped: the support of the density.
    """
    if isinstance(density, OhmicDensity):
        hi = 6.0 * density.omega_c
        half = 0.5 * hi / n_modes
        return half, hi + half
    return density.support()


def discretize(density: SpectralDensity, n_modes: int,
               omega_range: tuple[float, float] | None = None) -> DiscretizedBath:
    if n_modes < 1:
        raise ValueError("need at least one bath mode")
    lo, hi = default_range(density, n_modes) if omega_range is None else omega_range
    if not 0 <= lo < hi:
        raise ValueError(f"invalid frequency range [{lo}, {hi}]")
    dw = (hi - lo) / n_modes
    w = lo + dw * (np.arange(n_modes) + 0.5)
    j = np.asarray(density(w), dtype=float)
    if np.any(j < 0):
        raise InvalidDensityError("spectral density is negative inside the range")
    if not np.any(j > 0):
        warnings.warn("spectral density vanishes on the whole range; bath is uncoupled",
                      RuntimeWarning, stacklevel=2)
    c2 = (2.0 / np.pi) * j * w * dw
    return DiscretizedBath(w, np.sqrt(c2))


def continuum_moment(density: SpectralDensity, lo: float, hi: float,
                     f: Callable[[float], float] | None = None) -> float:
    """Adaptive quadrature of int_lo^hi J(w) f(w) dw."""
    g = (lambda w: density(w)) if f is None else (lambda w: density(w) * f(w))
    s_lo, s_hi = density.support()
    points = [p for p in (s_lo, s_hi) if lo < p < hi] or None
    val, _ = integrate.quad(g, lo, hi, points=points, limit=500, epsabs=0, epsrel=1e-12)
    return float(val)


def sum_rule_error(bath: DiscretizedBath, density: SpectralDensity,
                   omega_range: tuple[float, float],
                   f: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """Relative error of the discrete moment against quadrature."""
    exact = continuum_moment(density, *omega_range, f=f)
    if exact == 0:
        return abs(bath.moment(f))
    return abs(bath.moment(f) - exact) / abs(exact)
