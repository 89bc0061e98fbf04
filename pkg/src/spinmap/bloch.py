"""Density matrices, generalized Bloch vectors and observables.

A state of an ``N``-level system is written as

    rho = I/N + 1/2 * sum_n a_n T_n,      a_n = tr(rho T_n),

with ``T_n`` the ``N**2 - 1`` generalized Gell-Mann matrices normalised to
``tr(T_n T_m) = 2 delta_nm``.  For ``N = 2`` the generators are the Pauli
matrices in the order (sigma_x, sigma_y, sigma_z).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatchError, InvalidDimensionError, InvalidStateError

DEFAULT_TOL = 1e-10

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
for _m in (SIGMA_X, SIGMA_Y, SIGMA_Z):
    _m.setflags(write=False)


@lru_cache(maxsize=None)
def _generators(n: int) -> np.ndarray:
    mats = []
    for j in range(n):
        for k in range(j + 1, n):
            sym = np.zeros((n, n), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0
            anti = np.zeros((n, n), dtype=complex)
            anti[j, k] = -1.0j
            anti[k, j] = 1.0j
            mats.append(sym)
            mats.append(anti)
    for l in range(1, n):
        diag = np.zeros(n, dtype=complex)
        diag[:l] = 1.0
        diag[l] = -l
        mats.append(np.sqrt(2.0 / (l * (l + 1))) * np.diag(diag))
    out = np.array(mats)
    out.setflags(write=False)
    return out


def su_generators(n: int) -> np.ndarray:
    """Return the ``n**2 - 1`` generators of SU(n) as an array ``(n**2-1, n, n)``.

    Off-diagonal symmetric/antisymmetric pairs come first (pair by pair),
    followed by the diagonal generators, so ``n = 2`` gives the Pauli
    matrices in x, y, z order.  The returned array is read-only.
    """
    if int(n) != n or n < 2:
        raise InvalidDimensionError(f"SU(N) generators need N >= 2, got {n!r}")
    return _generators(int(n))


def _check_square(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"expected a square matrix, got shape {rho.shape}")
    return rho


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T)))


def validate_density(rho: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; return ``rho`` as complex array."""
    rho = _check_square(rho)
    if hermiticity_error(rho) > tol:
        raise InvalidStateError(f"matrix is not Hermitian (error {hermiticity_error(rho):.2e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol:
        raise InvalidStateError(f"trace is {tr.real:.12g}, expected 1")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -tol:
        raise InvalidStateError(f"matrix has negative eigenvalue {lo:.3e}")
    return rho


def is_physical(rho: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    try:
        validate_density(rho, tol)
    except InvalidStateError:
        return False
    return True


def density_to_bloch(rho: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    rho = _check_square(rho)
    if hermiticity_error(rho) > tol:
        raise InvalidStateError("density_to_bloch needs a Hermitian matrix")
    gens = su_generators(rho.shape[0])
    # tr(rho T_n) = sum_ij rho_ij (T_n)_ji
    vals = np.einsum("ij,nji->n", rho, gens)
    return vals.real.copy()


def bloch_to_density(a: np.ndarray) -> np.ndarray:
    """Map a Bloch vector back to a matrix.  Positivity is not checked."""
    a = np.asarray(a, dtype=float)
    n = int(round(np.sqrt(a.size + 1)))
    if a.ndim != 1 or n * n - 1 != a.size:
        raise InvalidDimensionError(f"vector of length {a.size} is not N**2-1 for any N")
    gens = su_generators(n)
    rho = np.eye(n, dtype=complex) / n + 0.5 * np.tensordot(a, gens, axes=1)
    # exact Hermiticity regardless of rounding in the tensordot
    return 0.5 * (rho + rho.conj().T)


def inner_sphere_radius(n: int) -> float:
    """Radius of the ball of Bloch vectors guaranteed to be physical."""
    return float(np.sqrt(2.0 / (n * (n - 1))))


def spin_state_vector(theta: float, phi: float) -> np.ndarray:
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], dtype=complex)


def spin_initial_state(theta: float, phi: float) -> np.ndarray:
    """Pure spin state cos(theta/2)|up> + e^{i phi} sin(theta/2)|down>."""
    psi = spin_state_vector(theta, phi)
    return np.outer(psi, psi.conj())


@dataclass(frozen=True)
class Observable:
    """Hermitian operator with its largest-magnitude eigenvalue cached."""

    matrix: np.ndarray
    o_max: float = field(init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidStateError(f"observable must be square, got {m.shape}")
        if hermiticity_error(m) > DEFAULT_TOL:
            raise InvalidStateError("observable is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        eig = np.linalg.eigvalsh(m)
        object.__setattr__(self, "o_max", float(eig[np.argmax(np.abs(eig))]))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def expectation(rho: np.ndarray, obs: Observable | np.ndarray) -> float:
    o = obs.matrix if isinstance(obs, Observable) else np.asarray(obs)
    rho = np.asarray(rho)
    if rho.shape != o.shape:
        raise DimensionMismatchError(f"state {rho.shape} and observable {o.shape} differ")
    return float(np.trace(o @ rho).real)


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density matrix from a Ginibre ensemble (test and sampling helper)."""
    rank = n if rank is None else rank
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
