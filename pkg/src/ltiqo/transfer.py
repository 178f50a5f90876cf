"""Transfer function evaluation and sampled H-infinity norm estimates.

``G1(s) = C (sI - A)^{-1} B + D`` is the linear transfer function and

    K_j(s1, s2) = B^T (s2 I - A^T)^{-1} M_j (s1 I - A)^{-1} B + P_j

is the quadratic kernel of output ``j``; row ``j`` of ``G2(s1, s2)`` is
``vec(K_j)^T``.  Output indices are zero-based throughout.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import ResolventSingularError, UnstableSystemError
from .model import LtiqoSystem, validate

__all__ = [
    "eval_G1",
    "eval_K",
    "eval_G2",
    "sigma_profile",
    "SigmaProfile",
    "SamplingConfig",
    "HinfEstimate",
    "hinf_estimate",
    "TransferCache",
    "state_response",
    "vec",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def vec(X: np.ndarray) -> np.ndarray:
    """Column-major vectorization (works on stacks along the leading axes)."""
    X = np.asarray(X)
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (-1,))


def _lu(A: np.ndarray, s: complex):
    n = A.shape[0]
    shifted = s * np.eye(n) - A
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(shifted, check_finite=False)
    pivots = np.abs(np.diag(lu))
    scale = max(np.linalg.norm(shifted, 1), np.finfo(float).tiny)
    if pivots.size and pivots.min() <= n * np.finfo(float).eps * scale:
        raise ResolventSingularError(f"s = {s} is (numerically) an eigenvalue of A")
    return lu, piv


def _resolvent_apply(A: np.ndarray, rhs: np.ndarray, s: complex) -> np.ndarray:
    return sla.lu_solve(_lu(A, s), rhs.astype(complex), check_finite=False)


def state_response(A: np.ndarray, B: np.ndarray, omegas, chunk: int = 256) -> np.ndarray:
    """``(i w I - A)^{-1} B`` for every ``w`` in ``omegas``; shape ``(F, n, m)``.

    Batched LU solves; raises :class:`ResolventSingularError` if a shift hits
    the spectrum.
    """
    omegas = np.asarray(omegas, dtype=float).ravel()
    n = A.shape[0]
    out = np.empty((omegas.size, n, B.shape[1]), dtype=complex)
    eye = np.eye(n)
    for start in range(0, omegas.size, chunk):
        w = omegas[start:start + chunk]
        shifted = 1j * w[:, None, None] * eye - A
        try:
            out[start:start + chunk] = np.linalg.solve(shifted, np.broadcast_to(B, (w.size,) + B.shape))
        except np.linalg.LinAlgError:
            raise ResolventSingularError("a sampled frequency hits the spectrum of A") from None
    return out


def eval_G1(sys: LtiqoSystem, s: complex) -> np.ndarray:
    """Linear transfer function at ``s`` (p x m, complex)."""
    return sys.C @ _resolvent_apply(sys.A, sys.B, complex(s)) + sys.D


def eval_K(sys: LtiqoSystem, j: int, s1: complex, s2: complex) -> np.ndarray:
    """Quadratic kernel ``K_j(s1, s2)`` (m x m, complex)."""
    if not 0 <= j < sys.p:
        raise IndexError(f"output index {j} out of range for p = {sys.p}")
    X1 = _resolvent_apply(sys.A, sys.B, complex(s1))
    X2 = X1 if s2 == s1 else _resolvent_apply(sys.A, sys.B, complex(s2))
    return X2.T @ sys.M[j] @ X1 + sys.P[j]


def eval_G2(sys: LtiqoSystem, s1: complex, s2: complex) -> np.ndarray:
    """Quadratic transfer function, ``p x m^2`` with rows ``vec(K_j)^T``."""
    X1 = _resolvent_apply(sys.A, sys.B, complex(s1))
    X2 = X1 if s2 == s1 else _resolvent_apply(sys.A, sys.B, complex(s2))
    rows = [vec(X2.T @ Mj @ X1 + Pj) for Mj, Pj in zip(sys.M, sys.P)]
    return np.array(rows)


class SigmaProfile(NamedTuple):
    values: np.ndarray
    left: np.ndarray
    right: np.ndarray


def sigma_profile(G: np.ndarray) -> SigmaProfile:
    """Full SVD ``G = U diag(values) V^*``; columns of ``left``/``right`` are u_i, v_i."""
    U, s, Vh = np.linalg.svd(np.asarray(G), full_matrices=True)
    return SigmaProfile(s, U, Vh.conj().T)


class TransferCache:
    """Memoized state responses and transfer values of one fixed system.

    Keys are the exact shift ``i*w``.  Safe for concurrent readers/writers.
    """

    def __init__(self, sys: LtiqoSystem):
        self.sys = sys
        self._X: dict[complex, np.ndarray] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._X)

    def state(self, omegas) -> np.ndarray:
        omegas = np.asarray(omegas, dtype=float).ravel()
        missing = sorted({w for w in omegas.tolist() if complex(0.0, w) not in self._X})
        if missing:
            X = state_response(self.sys.A, self.sys.B, missing)
            with self._lock:
                for w, Xw in zip(missing, X):
                    self._X[complex(0.0, w)] = Xw
        return np.stack([self._X[complex(0.0, w)] for w in omegas.tolist()]) if omegas.size else \
            np.empty((0, self.sys.n, self.sys.m), dtype=complex)

    def G1(self, omegas) -> np.ndarray:
        X = self.state(omegas)
        return np.einsum("pn,fnm->fpm", self.sys.C, X) + self.sys.D

    def K(self, pairs, outputs) -> np.ndarray:
        """``K_j`` at each pair for each ``j`` in ``outputs``; shape (G, len(outputs), m, m)."""
        pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
        X1 = self.state(pairs[:, 0])
        X2 = self.state(pairs[:, 1])
        out = np.empty((pairs.shape[0], len(outputs), self.sys.m, self.sys.m), dtype=complex)
        for k, j in enumerate(outputs):
            MX1 = np.einsum("ab,gbm->gam", self.sys.M[j], X1)
            out[:, k] = np.einsum("gan,gam->gnm", X2, MX1) + self.sys.P[j]
        return out


@dataclass
class SamplingConfig:
    """Sampling density and refinement settings for :func:`hinf_estimate`."""

    omega_min: float = 1e-4
    omega_max: float = 1e4
    points_per_decade: int = 400
    grid_quad: tuple = (120, 60)
    refine_tol: float = 1e-6
    n_candidates: int = 8
    resonances: int = 8

    def axis_grid(self) -> np.ndarray:
        decades = math.log10(self.omega_max / self.omega_min)
        count = max(int(round(decades * self.points_per_decade)) + 1, 2)
        return np.concatenate([[0.0], np.logspace(math.log10(self.omega_min), math.log10(self.omega_max), count)])

    def quad_axes(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = self.grid_quad
        lo, hi = math.log10(self.omega_min), math.log10(self.omega_max)
        half = np.logspace(lo, hi, max(n1 // 2, 1))
        w1 = np.concatenate([-half[::-1], [0.0], half])
        w2 = np.concatenate([[0.0], np.logspace(lo, hi, max(n2 - 1, 1))])
        return w1, w2


@dataclass
class HinfEstimate:
    linear_part: float
    quadratic_part: float
    total: float
    argmax_lin: float
    argmax_quad: tuple
    certified_grid_size: int
    extra: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "linear_part": self.linear_part,
            "quadratic_part": self.quadratic_part,
            "total": self.total,
            "argmax_lin": self.argmax_lin,
            "argmax_quad": list(self.argmax_quad),
            "certified_grid_size": self.certified_grid_size,
        }


def _golden_max(f, a: float, b: float, tol: float, max_iter: int = 200):
    """Golden-section search for a maximum of ``f`` on ``[a, b]``; returns (x, fx, evaluations)."""
    best_x, best_f = a, f(a)
    fb = f(b)
    evals = 2
    if fb > best_f:
        best_x, best_f = b, fb
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    evals += 2
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
        evals += 1
    for x, fx in ((c, fc), (d, fd)):
        if fx > best_f:
            best_x, best_f = x, fx
    return best_x, best_f, evals


def _local_maxima_1d(values: np.ndarray, count: int) -> np.ndarray:
    left = np.concatenate([[-np.inf], values[:-1]])
    right = np.concatenate([values[1:], [-np.inf]])
    idx = np.flatnonzero((values >= left) & (values >= right))
    return idx[np.argsort(values[idx])[::-1][:count]]


def _local_maxima_2d(values: np.ndarray, count: int) -> list[tuple[int, int]]:
    padded = np.pad(values, 1, constant_values=-np.inf)
    is_max = np.ones(values.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = padded[1 + di:1 + di + values.shape[0], 1 + dj:1 + dj + values.shape[1]]
            is_max &= values >= shifted
    idx = np.argwhere(is_max)
    order = np.argsort(values[is_max])[::-1][:count]
    return [tuple(i) for i in idx[order]]


def _bracket(axis: np.ndarray, i: int) -> tuple[float, float]:
    return float(axis[max(i - 1, 0)]), float(axis[min(i + 1, axis.size - 1)])


def _quad_sigma_stack(K: np.ndarray) -> np.ndarray:
    """sigma_max of G2 from kernels of shape (..., q, m, m)."""
    rows = K.reshape(K.shape[:-2] + (-1,))
    if K.shape[-3] == 1:
        return np.linalg.norm(rows[..., 0, :], axis=-1)
    return np.linalg.norm(rows, ord=2, axis=(-2, -1))


def hinf_estimate(sys: LtiqoSystem, cfg: SamplingConfig | None = None) -> HinfEstimate:
    """Sampled lower bound of the H-infinity norm (linear plus quadratic part).

    Dense logarithmic grid on the imaginary axis, then golden-section
    refinement around the best local maxima.  The quadratic part samples
    ``w1`` over the whole axis and ``w2 >= 0`` only (conjugate symmetry).
    """
    cfg = cfg or SamplingConfig()
    if not validate(sys).stable:
        raise UnstableSystemError("H-infinity estimate needs an asymptotically stable system")

    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    tol_of = lambda w: cfg.refine_tol * max(abs(w), cfg.omega_min * 1e-2)

    def sig_lin(w: float) -> float:
        return float(np.linalg.norm(C @ _resolvent_apply(A, B, 1j * w) + D, 2))

    grid = cfg.axis_grid()
    X = state_response(A, B, grid)
    lin_vals = np.linalg.norm(np.einsum("pn,fnm->fpm", C, X) + D, ord=2, axis=(1, 2))
    n_points = grid.size

    has_linear = bool(np.any(C) or np.any(D))
    lin_best, lin_arg = 0.0, 0.0
    if has_linear:
        i0 = int(np.argmax(lin_vals))
        lin_best, lin_arg = float(lin_vals[i0]), float(grid[i0])
        for i in _local_maxima_1d(lin_vals, cfg.n_candidates):
            a, b = _bracket(grid, int(i))
            w, val, ev = _golden_max(sig_lin, a, b, tol_of(grid[i]))
            n_points += ev
            if val > lin_best:
                lin_best, lin_arg = val, w
        at_inf = float(np.linalg.norm(D, 2))
        if at_inf > lin_best:
            lin_best, lin_arg = at_inf, math.inf

    quad_idx = sys.quadratic_outputs()
    quad_best, quad_arg = 0.0, (0.0, 0.0)
    if quad_idx:
        w1, w2 = cfg.quad_axes()
        if cfg.resonances:
            resp = np.linalg.norm(X.reshape(X.shape[0], -1), axis=1)
            peaks = grid[_local_maxima_1d(resp, cfg.resonances)]
            w1 = np.unique(np.concatenate([w1, peaks, -peaks]))
            w2 = np.unique(np.concatenate([w2, peaks]))
        pos = state_response(A, B, np.abs(w1))
        X1 = np.where((w1 < 0)[:, None, None], pos.conj(), pos)
        X2 = state_response(A, B, w2)
        K = np.empty((w1.size, w2.size, len(quad_idx), sys.m, sys.m), dtype=complex)
        for k, j in enumerate(quad_idx):
            MX1 = np.einsum("ab,ibm->iam", sys.M[j], X1)
            K[:, :, k] = np.einsum("jan,iam->ijnm", X2, MX1) + sys.P[j]
        quad_vals = _quad_sigma_stack(K)
        n_points += w1.size * w2.size

        def sig_quad(a: float, b: float) -> float:
            X1p = _resolvent_apply(A, B, 1j * a)
            X2p = X1p if b == a else _resolvent_apply(A, B, 1j * b)
            Kp = np.stack([X2p.T @ sys.M[j] @ X1p + sys.P[j] for j in quad_idx])
            return float(_quad_sigma_stack(Kp[None])[0])

        i0, j0 = np.unravel_index(int(np.argmax(quad_vals)), quad_vals.shape)
        quad_best, quad_arg = float(quad_vals[i0, j0]), (float(w1[i0]), float(w2[j0]))
        starts = [(float(w1[i]), float(w2[j]), float(quad_vals[i, j]))
                  for i, j in _local_maxima_2d(quad_vals, cfg.n_candidates)]

        # ridges of the kernel often run along w1 = w2 and w1 = -w2
        for sign in (1.0, -1.0):
            Xa = X if sign > 0 else X.conj()
            Kl = np.empty((grid.size, len(quad_idx), sys.m, sys.m), dtype=complex)
            for k, j in enumerate(quad_idx):
                Kl[:, k] = np.einsum("fan,ab,fbm->fnm", X, sys.M[j], Xa) + sys.P[j]
            line_vals = _quad_sigma_stack(Kl)
            n_points += grid.size
            for i in _local_maxima_1d(line_vals, max(cfg.n_candidates // 2, 1)):
                starts.append((sign * float(grid[i]), float(grid[i]), float(line_vals[i])))
                if line_vals[i] > quad_best:
                    quad_best, quad_arg = float(line_vals[i]), (sign * float(grid[i]), float(grid[i]))

        for x1, x2, val in starts:
            rad = 0.25
            for _ in range(12):
                prev = val
                for d1, d2 in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (-1.0, 1.0)):
                    h = rad * max(abs(x1), abs(x2), cfg.omega_min)
                    t, v, ev = _golden_max(lambda t: sig_quad(x1 + d1 * t, x2 + d2 * t), -h, h, tol_of(h))
                    n_points += ev
                    if v > val:
                        x1, x2, val = x1 + d1 * t, x2 + d2 * t, v
                rad = max(0.5 * rad, 1e-3)
                if val - prev <= 1e-13 * max(val, 1e-300):
                    break
            if val > quad_best:
                quad_best, quad_arg = val, (x1, x2)
        at_inf = float(_quad_sigma_stack(np.stack([sys.P[j] for j in quad_idx])[None].astype(complex))[0])
        if at_inf > quad_best:
            quad_best, quad_arg = at_inf, (math.inf, math.inf)

    return HinfEstimate(lin_best, quad_best, lin_best + quad_best, lin_arg, quad_arg, int(n_points))
