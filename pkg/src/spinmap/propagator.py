"""Exact wave-function propagation of the spin-boson model in a truncated Fock basis.

The Hamiltonian (hbar = 1, mass-weighted bath coordinates)

    H = Delta sigma_x + sum_n w_n (a_n^+ a_n + 1/2) + sigma_z sum_n c_n q_n,
    q_n = (a_n + a_n^+) / sqrt(2 w_n),

acts on ``C^2 (x) C^{d_1} (x) ... (x) C^{d_N}`` with the spin as the slowest
index.  Time stepping uses a Lanczos approximation of ``exp(-i H dt)`` with an
a-posteriori error estimate; steps that do not converge are split in halves.

Checkpoint format (``.npz``, version 1): ``format_version`` (int),
``step`` (int), ``time`` (float), ``psi`` (complex128 amplitudes),
``times`` and ``rho`` (snapshots recorded so far), ``config_hash`` (str).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .bloch import SIGMA_X, SIGMA_Y, SIGMA_Z, spin_state_vector
from .errors import ConvergenceError, MemoryBudgetError, NotPureError
from .spectral import DiscretizedBath

DEFAULT_MAX_DIM = 4_000_000
CHECKPOINT_VERSION = 1
TOL_FLOOR = 1e-14

# initial spin states used to reconstruct the map: up, down, +x, +y
BASIS_ANGLES = (
    ("up", 0.0, 0.0),
    ("down", math.pi, 0.0),
    ("plus_x", math.pi / 2, 0.0),
    ("plus_y", math.pi / 2, math.pi / 2),
)


@dataclass(frozen=True)
class HilbertSpaceSpec:
    bath: DiscretizedBath
    cutoffs: tuple[int, ...]
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        cut = tuple(int(d) for d in self.cutoffs)
        if len(cut) != self.bath.n_modes:
            raise ValueError(f"{len(cut)} cutoffs given for {self.bath.n_modes} bath modes")
        if any(d < 2 for d in cut):
            raise ValueError("every Fock cutoff must be >= 2")
        object.__setattr__(self, "cutoffs", cut)
        if self.dim > self.max_dim:
            raise MemoryBudgetError(self.dim, self.max_dim)

    @classmethod
    def uniform(cls, bath: DiscretizedBath, cutoff: int, max_dim: int = DEFAULT_MAX_DIM):
        return cls(bath, (cutoff,) * bath.n_modes, max_dim)

    @property
    def bath_dim(self) -> int:
        return math.prod(self.cutoffs)

    @property
    def dim(self) -> int:
        return 2 * self.bath_dim


def _ladder(d: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, d, dtype=float)), 1, format="csr")


def _embed(op: sp.spmatrix, k: int, cutoffs: Sequence[int]) -> sp.csr_matrix:
    left = math.prod(cutoffs[:k])
    right = math.prod(cutoffs[k + 1:])
    out = sp.kron(sp.identity(left, format="csr"), op, format="csr")
    return sp.kron(out, sp.identity(right, format="csr"), format="csr")


def build_hamiltonian(bath: DiscretizedBath, delta: float, spec: HilbertSpaceSpec) -> sp.csr_matrix:
    """Sparse real-symmetric Hamiltonian, zero-point energy included."""
    if spec.bath is not bath and (
        not np.array_equal(spec.bath.omega, bath.omega)
        or not np.array_equal(spec.bath.coupling, bath.coupling)
    ):
        raise ValueError("Hilbert space spec was built for a different bath")
    cut = spec.cutoffs
    nb = spec.bath_dim
    # diagonal bath energy from the occupation numbers of every basis state
    occ = np.indices(cut).reshape(len(cut), -1).T if cut else np.zeros((1, 0))
    e_bath = occ @ bath.omega + 0.5 * bath.omega.sum()
    h_bath = sp.diags(e_bath, 0, format="csr")
    x_op = sp.csr_matrix((nb, nb))
    for k, (w, c) in enumerate(zip(bath.omega, bath.coupling)):
        if c == 0.0:
            continue
        a = _ladder(cut[k])
        x_op = x_op + (c / math.sqrt(2.0 * w)) * _embed(a + a.T, k, cut)
    sx = sp.csr_matrix(SIGMA_X.real)
    sz = sp.csr_matrix(SIGMA_Z.real)
    h = (delta * sp.kron(sx, sp.identity(nb), format="csr")
         + sp.kron(sp.identity(2), h_bath, format="csr")
         + sp.kron(sz, x_op, format="csr"))
    h = sp.csr_matrix(h)
    h.sum_duplicates()
    h.eliminate_zeros()
    return h


def vacuum_index() -> int:
    return 0


def initial_joint_state(rho_spin: np.ndarray, spec: HilbertSpaceSpec, tol: float = 1e-10) -> np.ndarray:
    """Pure spin state (x) bath vacuum."""
    vals, vecs = np.linalg.eigh(np.asarray(rho_spin, dtype=complex))
    if abs(vals[-1] - 1.0) > tol:
        raise NotPureError(
            f"spin state is mixed (largest eigenvalue {vals[-1]:.12g}); "
            "propagate its pure components separately"
        )
    spin = vecs[:, -1]
    # fix the global phase so the first non-zero amplitude is real positive
    k = int(np.argmax(np.abs(spin) > 1e-12))
    spin = spin * np.exp(-1j * np.angle(spin[k]))
    return joint_state_from_spin(spin, spec)


def joint_state_from_spin(spin: np.ndarray, spec: HilbertSpaceSpec) -> np.ndarray:
    psi = np.zeros(spec.dim, dtype=complex)
    psi[0] = spin[0]
    psi[spec.bath_dim] = spin[1]
    return psi / np.linalg.norm(psi)


def _expm_tridiag_e1(alpha: np.ndarray, beta: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i T dt) e_1 for the symmetric tridiagonal T(alpha, beta)."""
    if alpha.size == 1:
        return np.array([np.exp(-1j * alpha[0] * dt)])
    evals, evecs = eigh_tridiagonal(alpha, beta, check_finite=False)
    return evecs @ (np.exp(-1j * evals * dt) * evecs[0].conj())


def krylov_step(h: sp.spmatrix, psi: np.ndarray, dt: float, krylov_dim: int = 30,
                tol: float = 1e-12) -> tuple[np.ndarray, float, bool]:
    """One Lanczos approximation of exp(-i H dt) psi.

    Returns ``(psi_new, error_estimate, converged)``.  The error estimate is
    ``|psi| beta_{m+1} |e_m^T exp(-i T_m dt) e_1|``.  A breakdown of the
    recursion means an invariant subspace was found and the step is exact.
    """
    norm0 = np.linalg.norm(psi)
    if norm0 == 0.0:
        return psi.copy(), 0.0, True
    m = max(2, min(krylov_dim, psi.size))
    basis = np.empty((m + 1, psi.size), dtype=complex)
    basis[0] = psi / norm0
    alpha = np.empty(m)
    beta = np.empty(m)
    err = np.inf
    for j in range(m):
        w = h @ basis[j]
        alpha[j] = np.vdot(basis[j], w).real
        w -= alpha[j] * basis[j]
        if j:
            w -= beta[j - 1] * basis[j - 1]
        # full reorthogonalization keeps the basis orthonormal to rounding
        w -= basis[: j + 1].T @ (basis[: j + 1] @ w.conj()).conj()
        b = np.linalg.norm(w)
        beta[j] = b
        breakdown = b <= 1e-13 * max(1.0, abs(alpha[j]))
        # the error estimate is only evaluated every other step once j >= 3
        if breakdown or (j >= 3 and j % 2 == 1) or j == m - 1:
            coeffs = _expm_tridiag_e1(alpha[: j + 1], beta[:j], dt)
            err = 0.0 if breakdown else norm0 * b * abs(coeffs[-1])
            if err <= tol or j == m - 1:
                out = norm0 * (coeffs @ basis[: j + 1])
                return out, err, err <= tol
        basis[j + 1] = w / b
    raise AssertionError("unreachable")


def evolve(h: sp.spmatrix, psi: np.ndarray, dt: float, krylov_dim: int = 30,
           tol: float = 1e-12, max_splits: int = 12) -> np.ndarray:
    """Apply exp(-i H dt), halving the step until the Krylov estimate meets ``tol``."""
    out, err, ok = krylov_step(h, psi, dt, krylov_dim, tol)
    if ok:
        return out
    if max_splits == 0:
        raise ConvergenceError("Krylov step did not converge", err)
    # each half carries half the error budget, but never below rounding level
    sub_tol = max(0.5 * tol, TOL_FLOOR)
    half = evolve(h, psi, dt / 2, krylov_dim, sub_tol, max_splits - 1)
    return evolve(h, half, dt / 2, krylov_dim, sub_tol, max_splits - 1)


def iter_propagate(psi: np.ndarray, h: sp.spmatrix, dt: float, steps: int,
                   krylov_dim: int = 30, tol: float = 1e-12,
                   start_step: int = 0) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(step, psi)`` for step = start_step..steps, the input first."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if krylov_dim < 2:
        raise ValueError("krylov_dim must be >= 2")
    psi = np.asarray(psi, dtype=complex)
    h = h.astype(complex) if not np.iscomplexobj(h.data) else h
    yield start_step, psi
    for k in range(start_step + 1, steps + 1):
        psi = evolve(h, psi, dt, krylov_dim, tol)
        yield k, psi


@dataclass
class Propagation:
    times: np.ndarray
    states: np.ndarray


def propagate(psi: np.ndarray, h: sp.spmatrix, dt: float, steps: int, krylov_dim: int = 30,
              tol: float = 1e-12, stride: int = 1) -> Propagation:
    """Wave-function snapshots every ``stride`` steps (the final step is always kept)."""
    times, states = [], []
    for k, state in iter_propagate(psi, h, dt, steps, krylov_dim, tol):
        if k % stride == 0 or k == steps:
            times.append(k * dt)
            states.append(state.copy())
    return Propagation(np.array(times), np.array(states))


def reduced_density(psi: np.ndarray) -> np.ndarray:
    """Spin density matrix tr_E |psi><psi|."""
    amp = np.asarray(psi).reshape(2, -1)
    rho = amp @ amp.conj().T
    return 0.5 * (rho + rho.conj().T)


def cutoff_monitor(psi: np.ndarray, spec: HilbertSpaceSpec) -> np.ndarray:
    """Population of the highest retained Fock level, mode by mode."""
    prob = np.abs(np.asarray(psi).reshape((2,) + spec.cutoffs)) ** 2
    out = np.empty(len(spec.cutoffs))
    for k, d in enumerate(spec.cutoffs):
        out[k] = np.take(prob, d - 1, axis=k + 1).sum()
    return out


def top_level_population(psi: np.ndarray, spec: HilbertSpaceSpec) -> float:
    """Population of basis states with any mode at its highest Fock level."""
    prob = np.abs(np.asarray(psi).reshape((2,) + spec.cutoffs)) ** 2
    below = prob[(slice(None),) + tuple(slice(0, d - 1) for d in spec.cutoffs)]
    return float(max(0.0, prob.sum() - below.sum()))


@dataclass
class Trajectory:
    """Reduced spin states on a time grid, plus run diagnostics."""

    times: np.ndarray
    states: np.ndarray
    label: str = ""
    theta: float | None = None
    phi: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=complex)
        if self.states.shape[0] != self.times.size:
            raise ValueError("one state per time sample is required")

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    def bloch(self) -> np.ndarray:
        """Bloch vectors (<sx>, <sy>, <sz>) at every sample."""
        return np.stack([np.einsum("kij,ji->k", self.states, s).real
                         for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)], axis=1)


def energy(h: sp.spmatrix, psi: np.ndarray) -> float:
    return float(np.vdot(psi, h @ psi).real)


def simulate_spin_state(h: sp.spmatrix, spec: HilbertSpaceSpec, spin: np.ndarray, dt: float,
                        steps: int, stride: int = 1, krylov_dim: int = 30, tol: float = 1e-12,
                        label: str = "", theta: float | None = None, phi: float | None = None,
                        checkpoint: str | Path | None = None, checkpoint_every: int = 0,
                        config_hash: str = "") -> Trajectory:
    """Propagate spin (x) vacuum and record the reduced state every ``stride`` steps."""
    psi0 = joint_state_from_spin(spin, spec)
    e0 = energy(h, psi0)
    times, rhos = [], []
    start = 0
    psi_start = psi0
    if checkpoint is not None and Path(checkpoint).exists():
        ck = load_checkpoint(checkpoint)
        if ck["config_hash"] == config_hash and ck["step"] <= steps:
            start, psi_start = ck["step"], ck["psi"]
            times, rhos = list(ck["times"]), list(ck["rho"])
    norm_drift = energy_drift = top_pop = 0.0
    for k, psi in iter_propagate(psi_start, h, dt, steps, krylov_dim, tol, start_step=start):
        if k % stride == 0 or k == steps:
            if k != start or not times:
                times.append(k * dt)
                rhos.append(reduced_density(psi))
            norm_drift = max(norm_drift, abs(np.linalg.norm(psi) - 1.0))
            energy_drift = max(energy_drift, abs(energy(h, psi) - e0) / max(abs(e0), 1e-300))
            top_pop = max(top_pop, top_level_population(psi, spec))
            if checkpoint is not None and checkpoint_every and k % (stride * checkpoint_every) == 0:
                save_checkpoint(checkpoint, k, k * dt, psi, np.array(times), np.array(rhos),
                                config_hash)
    diagnostics = {
        "norm_drift": norm_drift,
        "energy_drift": energy_drift,
        "max_cutoff_population": top_pop,
    }
    return Trajectory(np.array(times), np.array(rhos), label, theta, phi, diagnostics)


def _basis_job(args):
    h, spec, label, theta, phi, dt, steps, stride, krylov_dim, tol = args
    return simulate_spin_state(h, spec, spin_state_vector(theta, phi), dt, steps, stride,
                               krylov_dim, tol, label, theta, phi)


def run_trajectories(bath: DiscretizedBath, delta: float, spec: HilbertSpaceSpec,
                     angles: Sequence[tuple[str, float, float]], dt: float, steps: int,
                     stride: int = 1, krylov_dim: int = 30, tol: float = 1e-12,
                     workers: int = 1, h: sp.spmatrix | None = None) -> list[Trajectory]:
    """Independent trajectories for labelled (theta, phi) spin states."""
    h = build_hamiltonian(bath, delta, spec) if h is None else h
    jobs = [(h, spec, lab, th, ph, dt, steps, stride, krylov_dim, tol) for lab, th, ph in angles]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_basis_job, jobs))
    return [_basis_job(j) for j in jobs]


def run_basis_trajectories(bath: DiscretizedBath, delta: float, spec: HilbertSpaceSpec,
                           dt: float, steps: int, stride: int = 1, krylov_dim: int = 30,
                           tol: float = 1e-12, workers: int = 1,
                           h: sp.spmatrix | None = None) -> list[Trajectory]:
    """The four trajectories from |up>, |down>, |+x>, |+y> needed for reconstruction."""
    return run_trajectories(bath, delta, spec, BASIS_ANGLES, dt, steps, stride,
                            krylov_dim, tol, workers, h)


def mix_trajectories(weights: Sequence[float], trajs: Sequence[Trajectory],
                     label: str = "mixture") -> Trajectory:
    """Reduced dynamics of a convex mixture of initial states (linearity of the map)."""
    w = np.asarray(weights, dtype=float)
    states = np.tensordot(w, np.array([t.states for t in trajs]), axes=1)
    return Trajectory(trajs[0].times.copy(), states, label)


def cutoff_convergence(bath: DiscretizedBath, delta: float, spec: HilbertSpaceSpec,
                       spin: np.ndarray, dt: float, steps: int, stride: int = 1,
                       threshold: float = 1e-4, krylov_dim: int = 30,
                       tol: float = 1e-12) -> tuple[float, bool]:
    """Change of <sigma_z>(t) when every cutoff is doubled; ``(max_change, converged)``."""
    fine_spec = HilbertSpaceSpec(bath, tuple(2 * d for d in spec.cutoffs), spec.max_dim)
    runs = []
    for s in (spec, fine_spec):
        h = build_hamiltonian(bath, delta, s)
        runs.append(simulate_spin_state(h, s, spin, dt, steps, stride, krylov_dim, tol).bloch()[:, 2])
    change = float(np.max(np.abs(runs[0] - runs[1])))
    return change, change < threshold


def save_checkpoint(path: str | Path, step: int, time: float, psi: np.ndarray,
                    times: np.ndarray, rho: np.ndarray, config_hash: str = "") -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, format_version=CHECKPOINT_VERSION, step=step, time=time, psi=psi,
             times=times, rho=rho, config_hash=np.array(config_hash))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return {
            "step": int(data["step"]),
            "time": float(data["time"]),
            "psi": data["psi"].astype(complex),
            "times": data["times"],
            "rho": data["rho"],
            "config_hash": str(data["config_hash"]),
        }
