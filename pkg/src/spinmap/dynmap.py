"""Dynamical-map reconstruction and the singular-value influence measure.

From ``N**2`` trajectories with linearly independent initial states the map
is recovered as a superoperator ``Phi[ij, kl]`` acting on row-major vectorized
density matrices, then rewritten as an affine map on Bloch vectors,
``a(t) = M(t) a(0) + b(t)``.  The largest singular value of ``M(t)`` bounds
how far two initial states can be told apart by any observable at time t.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bloch import (DEFAULT_TOL, Observable, bloch_to_density, density_to_bloch,
                    su_generators)
from .errors import (BoundViolationError, DimensionMismatchError, InvalidMapError,
                     NotApplicableError, ReconstructionError, WindowError)
from .propagator import Trajectory

MAX_CONDITION = 1e6


@dataclass(frozen=True)
class MapTensor:
    """Phi[t, i, j, k, l] with rho_ij(t) = sum_kl Phi[t, i, j, k, l] rho_kl(0)."""

    times: np.ndarray
    tensor: np.ndarray

    @property
    def dim(self) -> int:
        return self.tensor.shape[1]

    def superoperators(self) -> np.ndarray:
        n = self.dim
        return self.tensor.reshape(len(self.times), n * n, n * n)

    def apply(self, rho0: np.ndarray) -> np.ndarray:
        """Image of ``rho0`` at every time, shape (K, N, N)."""
        return np.einsum("tijkl,kl->tij", self.tensor, np.asarray(rho0, dtype=complex))

    def trace_error(self) -> float:
        """max |sum_i Phi_ii,kl - delta_kl| over all times."""
        n = self.dim
        tr = np.einsum("tiikl->tkl", self.tensor)
        return float(np.max(np.abs(tr - np.eye(n))))

    def hermiticity_error(self) -> float:
        swapped = np.conj(np.transpose(self.tensor, (0, 2, 1, 4, 3)))
        return float(np.max(np.abs(self.tensor - swapped)))


def _vec_stack(states: np.ndarray) -> np.ndarray:
    return states.reshape(states.shape[0], -1)


def reconstruct_map(trajs: Sequence[Trajectory], max_condition: float = MAX_CONDITION,
                    tol: float = 1e-10) -> MapTensor:
    """Invert rho(t) = Phi(t) rho(0) for N**2 trajectories on a common time grid."""
    if not trajs:
        raise ReconstructionError("no trajectories given")
    times = trajs[0].times
    n = trajs[0].states.shape[-1]
    if len(trajs) != n * n:
        raise ReconstructionError(f"need {n * n} trajectories for N={n}, got {len(trajs)}")
    for tr in trajs[1:]:
        if tr.times.shape != times.shape or not np.allclose(tr.times, times, rtol=0, atol=1e-12):
            raise ReconstructionError("trajectories are not on a common time grid")
    # columns are vectorized initial states
    r0 = np.stack([tr.states[0].reshape(-1) for tr in trajs], axis=1)
    cond = np.linalg.cond(r0)
    if not np.isfinite(cond) or cond > max_condition:
        raise ReconstructionError(f"initial states are ill-conditioned (condition number {cond:.3e})")
    rt = np.stack([_vec_stack(tr.states) for tr in trajs], axis=2)
    r0_inv = np.linalg.inv(r0)
    phi = rt @ r0_inv
    residual = float(np.max(np.abs(phi @ r0 - rt)))
    if residual > tol:
        raise ReconstructionError(f"reconstruction residual {residual:.3e} exceeds {tol:.1e}")
    return MapTensor(times.copy(), phi.reshape(len(times), n, n, n, n))


@dataclass(frozen=True)
class AffineBlochMap:
    times: np.ndarray
    M: np.ndarray
    b: np.ndarray

    def apply(self, a0: np.ndarray) -> np.ndarray:
        return self.M @ np.asarray(a0, dtype=float) + self.b

    def identity_error(self) -> float:
        n = self.M.shape[-1]
        return float(max(np.max(np.abs(self.M[0] - np.eye(n))), np.max(np.abs(self.b[0]))))

    def orthogonality_error(self) -> np.ndarray:
        n = self.M.shape[-1]
        mtm = np.einsum("tji,tjk->tik", self.M, self.M)
        return np.max(np.abs(mtm - np.eye(n)), axis=(1, 2))

    def ball_violation(self, rng: np.random.Generator, samples: int = 200) -> float:
        """Largest excess of |M a + b| over 1 for random a on the unit sphere (qubit only)."""
        a = rng.normal(size=(samples, self.M.shape[-1]))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        out = np.einsum("tij,sj->tsi", self.M, a) + self.b[:, None, :]
        return float(np.max(np.linalg.norm(out, axis=2)) - 1.0)


def tensor_to_affine(phi: MapTensor, tol: float = DEFAULT_TOL) -> AffineBlochMap:
    """M_mn = tr(T_m Phi[T_n]) / 2 and b_m = tr(T_m Phi[I/N])."""
    err = phi.trace_error()
    if err > tol:
        raise InvalidMapError(f"map is not trace preserving (error {err:.3e})")
    n = phi.dim
    gens = su_generators(n)
    images = np.einsum("tijkl,nkl->tnij", phi.tensor, gens)
    # images[t, n] = Phi_t[T_n];  tr(T_m X) = sum_ij (T_m)_ji X_ij
    M = 0.5 * np.einsum("mji,tnij->tmn", gens, images).real
    center = np.einsum("tijkk->tij", phi.tensor) / n
    b = np.einsum("mji,tij->tm", gens, center).real
    return AffineBlochMap(phi.times.copy(), M, b)


@dataclass(frozen=True)
class SvdSeries:
    """Per-time SVD M = V diag(S) W^T with S sorted descending."""

    times: np.ndarray
    S: np.ndarray
    V: np.ndarray
    W: np.ndarray

    @property
    def s_max(self) -> np.ndarray:
        return self.S[:, 0]

    def reconstruct(self) -> np.ndarray:
        return np.einsum("tij,tj,tkj->tik", self.V, self.S, self.W)

    def tracked(self) -> np.ndarray:
        """Singular values reordered to follow singular-vector continuity in time.

        Unlike ``S`` the columns may cross; useful when inspecting branch
        crossings at early times.
        """
        out = np.empty_like(self.S)
        out[0] = self.S[0]
        perm = np.arange(self.S.shape[1])
        for k in range(1, len(self.times)):
            overlap = (np.abs(self.V[k - 1][:, perm].T @ self.V[k])
                       + np.abs(self.W[k - 1][:, perm].T @ self.W[k]))
            rows, cols = linear_sum_assignment(-overlap)
            new = np.empty_like(perm)
            new[rows] = cols
            perm = new
            out[k] = self.S[k][perm]
        return out


def svd_series(abm: AffineBlochMap) -> SvdSeries:
    """SVD at every time with singular-vector signs kept continuous between samples."""
    V, S, Wt = np.linalg.svd(abm.M)
    W = np.transpose(Wt, (0, 2, 1)).copy()
    for k in range(1, len(abm.times)):
        overlap = (np.einsum("ij,ij->j", V[k], V[k - 1])
                   + np.einsum("ij,ij->j", W[k], W[k - 1]))
        flip = np.where(overlap < 0, -1.0, 1.0)
        V[k] *= flip
        W[k] *= flip
    return SvdSeries(abm.times.copy(), S, V, W)


def delta_observable(traj1: Trajectory, traj2: Trajectory, obs: Observable) -> np.ndarray:
    """|tr(O (rho1(t) - rho2(t)))| on the common time grid."""
    if traj1.times.shape != traj2.times.shape or not np.allclose(traj1.times, traj2.times,
                                                                 rtol=0, atol=1e-12):
        raise DimensionMismatchError("trajectories are on different time grids")
    diff = traj1.states - traj2.states
    return np.abs(np.einsum("ij,tji->t", obs.matrix, diff))


@dataclass
class BoundReport:
    times: np.ndarray
    delta: np.ndarray
    bound_general: np.ndarray
    bound_sigma_z: np.ndarray
    violations: int = 0
    max_ratio: float = 0.0


def general_bound(n: int, obs: Observable, s_max: np.ndarray, distance: float) -> np.ndarray:
    return n**1.5 / np.sqrt(2.0) * abs(obs.o_max) * s_max * distance


def qubit_bound(obs: Observable, s_max: np.ndarray, distance: float) -> np.ndarray:
    """Tighter two-level bound: half the eigenvalue spread of O times |M da|.

    For sigma_z this is ``S_max |a1 - a2|``, i.e. ``2 S_max`` for antipodal states.
    """
    eig = np.linalg.eigvalsh(obs.matrix)
    return 0.5 * (eig[-1] - eig[0]) * s_max * distance


def bound_check(svd: SvdSeries, a1: np.ndarray, a2: np.ndarray, obs: Observable,
                delta: np.ndarray, tol: float = 1e-12, raise_on_violation: bool = True) -> BoundReport:
    """Compare delta(t; O) with the singular-value bounds at every sample."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != svd.times.shape:
        raise DimensionMismatchError("delta series and SVD series have different grids")
    n = obs.dim
    dist = float(np.linalg.norm(np.asarray(a1) - np.asarray(a2)))
    gen = general_bound(n, obs, svd.s_max, dist)
    tight = qubit_bound(obs, svd.s_max, dist) if n == 2 else np.full_like(gen, np.nan)
    excess = delta - (tight if n == 2 else gen)
    excess = np.maximum(excess, delta - gen)
    bad = excess > tol
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gen > 0, delta / gen, 0.0)
    report = BoundReport(svd.times, delta, gen, tight, int(bad.sum()),
                         float(np.max(ratio)) if ratio.size else 0.0)
    if bad.any() and raise_on_violation:
        k = int(np.argmax(excess))
        raise BoundViolationError(float(svd.times[k]), float(excess[k]))
    return report


class Asymptotics(str, enum.Enum):
    UNIQUE = "UniqueAsymptotic"
    INITIAL_STATE_DEPENDENT = "InitialStateDependent"
    NON_STATIONARY = "NonStationary"


@dataclass
class AsymptoticReport:
    classification: Asymptotics
    window: tuple[float, float]
    fluctuation: float
    s_window_max: np.ndarray
    M_inf: np.ndarray | None = None
    b_inf: np.ndarray | None = None
    s_inf: np.ndarray | None = None
    V_inf: np.ndarray | None = None
    W_inf: np.ndarray | None = None
    tol_zero: float = 1e-2
    extras: dict = field(default_factory=dict)

    @property
    def rank(self) -> int | None:
        if self.s_inf is None:
            return None
        return int(np.sum(self.s_inf >= self.tol_zero))

    def asymptotic_state(self, a0: np.ndarray) -> np.ndarray:
        if self.M_inf is None:
            raise NotApplicableError("no asymptotic state: dynamics are not stationary")
        return self.M_inf @ np.asarray(a0, dtype=float) + self.b_inf


def classify_asymptotics(abm: AffineBlochMap, svd: SvdSeries | None = None,
                         window: float | None = None, tol_stationary: float = 1e-3,
                         tol_zero: float = 1e-2) -> AsymptoticReport:
    """Sort long-time behaviour into unique / initial-state dependent / non-stationary.

    Over the trailing ``window`` (default: last 20% of the run) every entry of
    M and b must vary by less than ``tol_stationary``.  Entries of M are used
    rather than only the singular values so that undamped rotations, whose
    singular values are constant, count as non-stationary.
    """
    svd = svd_series(abm) if svd is None else svd
    t = abm.times
    span = t[-1] - t[0]
    window = 0.2 * span if window is None else window
    if window <= 0 or window > span:
        raise WindowError(f"window {window} does not fit in a run of length {span}")
    mask = t >= t[-1] - window
    if mask.sum() < 2:
        raise WindowError("window contains fewer than two samples")
    Mw, bw, Sw = abm.M[mask], abm.b[mask], svd.S[mask]
    fluct = float(max(np.ptp(Mw, axis=0).max(), np.ptp(bw, axis=0).max(),
                      np.ptp(Sw, axis=0).max()))
    s_max_w = Sw.max(axis=0)
    win = (float(t[mask][0]), float(t[-1]))
    if fluct >= tol_stationary:
        return AsymptoticReport(Asymptotics.NON_STATIONARY, win, fluct, s_max_w, tol_zero=tol_zero)
    M_inf = Mw.mean(axis=0)
    b_inf = bw.mean(axis=0)
    V, s, Wt = np.linalg.svd(M_inf)
    kind = Asymptotics.UNIQUE if np.all(s_max_w < tol_zero) else Asymptotics.INITIAL_STATE_DEPENDENT
    return AsymptoticReport(kind, win, fluct, s_max_w, M_inf, b_inf, s, V, Wt.T, tol_zero)


def asymptotic_projection(report: AsymptoticReport) -> tuple[float, np.ndarray, np.ndarray]:
    """Rank-one factors (s, v, w) with a_inf = s <w, a(0)> v + b_inf.

    The sign is fixed so that the largest component of w is positive.
    """
    if report.s_inf is None or report.rank != 1:
        raise NotApplicableError(
            f"rank-one projection needs exactly one non-vanishing singular value "
            f"(rank {report.rank})"
        )
    s = float(report.s_inf[0])
    v = report.V_inf[:, 0].copy()
    w = report.W_inf[:, 0].copy()
    if w[np.argmax(np.abs(w))] < 0:
        v, w = -v, -w
    return s, v, w


def predict(phi: MapTensor, rho0: np.ndarray, label: str = "prediction") -> Trajectory:
    return Trajectory(phi.times.copy(), phi.apply(rho0), label)


def prediction_error(phi: MapTensor, reference: Trajectory) -> float:
    """Largest Bloch-vector deviation between Phi(t) rho(0) and a directly propagated run."""
    pred = predict(phi, reference.initial)
    return float(np.max(np.abs(pred.bloch() - reference.bloch())))


def bloch_series(traj: Trajectory) -> np.ndarray:
    """Generalized Bloch vectors of every state in a trajectory."""
    return np.array([density_to_bloch(r) for r in traj.states])


def trajectory_from_bloch(times: np.ndarray, bloch: np.ndarray, label: str = "") -> Trajectory:
    return Trajectory(times, np.array([bloch_to_density(a) for a in bloch]), label)
