"""System types: LTI systems with quadratic output and port-Hamiltonian systems.

An LTIQO system is

    x'(t) = A x(t) + B u(t),
    y_i(t) = x^T M_i x + (C x)_i + u^T P_i u + (D u)_i,    i = 0..p-1,

with x(0) = 0.  A pHQO system is the port-Hamiltonian system
x' = (J - R) Q x + B u with outputs B^T Q x and the Hamiltonian
1/2 x^T Q x appended as an extra (quadratic) output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, StructureError

__all__ = [
    "LtiqoSystem",
    "PhqoSystem",
    "ValidationReport",
    "validate",
    "phqo_to_ltiqo",
    "build_error_system",
    "condense_ph",
    "strict_upper",
    "skew_from_upper",
]

SYMMETRY_REPORT_TOL = 1e-8


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _as_matrix(a, shape, name) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape != shape:
        raise DimensionError(f"{name} has shape {a.shape}, expected {shape}")
    if not np.all(np.isfinite(a)):
        raise StructureError(f"{name} contains non-finite entries")
    return a


def _symmetry_defect(X: np.ndarray) -> float:
    scale = np.linalg.norm(X)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(X - X.T) / scale)


def strict_upper(X: np.ndarray) -> np.ndarray:
    """Entries strictly above the diagonal, read column by column."""
    X = np.asarray(X)
    rows, cols = np.triu_indices(X.shape[0], k=1)
    order = np.lexsort((rows, cols))
    return X[rows[order], cols[order]]


def skew_from_upper(upper, n: int) -> np.ndarray:
    """Skew-symmetric matrix whose strict upper triangle is ``upper``."""
    upper = np.asarray(upper, dtype=float)
    if upper.size != n * (n - 1) // 2:
        raise DimensionError(f"expected {n * (n - 1) // 2} upper entries, got {upper.size}")
    rows, cols = np.triu_indices(n, k=1)
    order = np.lexsort((rows, cols))
    J = np.zeros((n, n))
    J[rows[order], cols[order]] = upper
    return J - J.T


@dataclass(frozen=True, eq=False)
class LtiqoSystem:
    """Real LTI system with quadratic output.

    Missing output blocks default to zero.  ``M`` and ``P`` are sequences of
    ``p`` square matrices; they are symmetrized on construction and the
    relative asymmetry of the inputs is kept for :func:`validate`.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None = None
    D: np.ndarray | None = None
    M: tuple | None = None
    P: tuple | None = None
    p: int | None = None
    _input_defects: tuple = field(default=(), repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        m = B.shape[1]
        B = _as_matrix(B, (n, m), "B")

        p = self.p
        if p is None:
            if self.C is not None:
                p = np.atleast_2d(self.C).shape[0]
            elif self.D is not None:
                p = np.atleast_2d(self.D).shape[0]
            elif self.M is not None:
                p = len(self.M)
            elif self.P is not None:
                p = len(self.P)
            else:
                p = 1
        p = int(p)
        if p < 1:
            raise DimensionError("p must be positive")

        C = np.zeros((p, n)) if self.C is None else _as_matrix(np.reshape(self.C, (p, n)), (p, n), "C")
        D = np.zeros((p, m)) if self.D is None else _as_matrix(np.reshape(self.D, (p, m)), (p, m), "D")

        defects = []
        Ms = self._blocks(self.M, p, n, "M", defects)
        Ps = self._blocks(self.P, p, m, "P", defects)

        set_ = object.__setattr__
        set_(self, "A", _frozen(_as_matrix(A, (n, n), "A")))
        set_(self, "B", _frozen(B))
        set_(self, "C", _frozen(C))
        set_(self, "D", _frozen(D))
        set_(self, "M", tuple(_frozen(X) for X in Ms))
        set_(self, "P", tuple(_frozen(X) for X in Ps))
        set_(self, "p", p)
        set_(self, "_input_defects", tuple(defects))

    @staticmethod
    def _blocks(blocks, p, k, name, defects):
        if blocks is None:
            return [np.zeros((k, k)) for _ in range(p)]
        blocks = list(blocks)
        if len(blocks) != p:
            raise DimensionError(f"expected {p} {name} matrices, got {len(blocks)}")
        out = []
        for i, X in enumerate(blocks):
            X = _as_matrix(np.reshape(np.asarray(X, dtype=float), (k, k)), (k, k), f"{name}[{i}]")
            defects.append((f"{name}[{i}]", _symmetry_defect(X)))
            out.append(0.5 * (X + X.T))
        return out

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.n, self.m, self.p

    def quadratic_outputs(self) -> list[int]:
        """Indices of outputs with a nonzero quadratic term."""
        return [j for j in range(self.p) if np.any(self.M[j]) or np.any(self.P[j])]

    def scaled_output(self, alpha: float) -> "LtiqoSystem":
        """Same dynamics, every output matrix multiplied by ``alpha``."""
        return LtiqoSystem(self.A, self.B, alpha * self.C, alpha * self.D,
                           [alpha * X for X in self.M], [alpha * X for X in self.P])


@dataclass(frozen=True, eq=False)
class PhqoSystem:
    """Port-Hamiltonian system with the Hamiltonian as extra quadratic output.

    ``J`` is kept only through its strict upper triangle, so it is exactly
    skew-symmetric.  Construct from a full matrix with :meth:`from_matrices`.
    """

    J_upper: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n = R.shape[0]
        R = _as_matrix(R, (n, n), "R")
        Q = _as_matrix(self.Q, (n, n), "Q")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        B = _as_matrix(B, (n, B.shape[1]), "B")
        upper = np.asarray(self.J_upper, dtype=float).ravel()
        if upper.size != n * (n - 1) // 2:
            raise DimensionError(f"J_upper needs {n * (n - 1) // 2} entries, got {upper.size}")

        if _symmetry_defect(R) > SYMMETRY_REPORT_TOL or _symmetry_defect(Q) > SYMMETRY_REPORT_TOL:
            raise StructureError("R and Q must be symmetric")
        R = 0.5 * (R + R.T)
        Q = 0.5 * (Q + Q.T)
        eig_R = np.linalg.eigvalsh(R)
        if eig_R.size and eig_R[0] < -1e-10 * max(np.linalg.norm(R, 2), 1.0):
            raise StructureError(f"R is not positive semi-definite (min eigenvalue {eig_R[0]:.3e})")
        try:
            np.linalg.cholesky(Q)
        except np.linalg.LinAlgError:
            raise StructureError("Q is not positive definite") from None

        set_ = object.__setattr__
        set_(self, "J_upper", _frozen(upper))
        set_(self, "R", _frozen(R))
        set_(self, "Q", _frozen(Q))
        set_(self, "B", _frozen(B))

    @classmethod
    def from_matrices(cls, J, R, Q, B) -> "PhqoSystem":
        J = np.atleast_2d(np.asarray(J, dtype=float))
        if np.max(np.abs(J + J.T), initial=0.0) > 1e-12 * max(np.max(np.abs(J), initial=0.0), 1.0):
            raise StructureError("J is not skew-symmetric")
        return cls(strict_upper(J), R, Q, B)

    @property
    def J(self) -> np.ndarray:
        return skew_from_upper(self.J_upper, self.n)

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def A(self) -> np.ndarray:
        return (self.J - self.R) @ self.Q


@dataclass
class ValidationReport:
    stable: bool
    spectral_abscissa: float
    symmetry_defects: list
    messages: list


def validate(sys: LtiqoSystem) -> ValidationReport:
    """Stability and symmetry diagnostics; never raises."""
    eigs = np.linalg.eigvals(sys.A)
    abscissa = float(np.max(eigs.real))
    defects = list(sys._input_defects)
    messages = []
    stable = abscissa < 0.0
    if not stable:
        messages.append(f"A is not asymptotically stable (spectral abscissa {abscissa:.3e})")
    for name, d in defects:
        if d > SYMMETRY_REPORT_TOL:
            messages.append(f"{name} was not symmetric (relative defect {d:.3e}); symmetrized")
    return ValidationReport(stable, abscissa, defects, messages)


def phqo_to_ltiqo(ph: PhqoSystem) -> LtiqoSystem:
    """LTIQO realization: outputs B^T Q x (m rows) and 1/2 x^T Q x (last row)."""
    n, m = ph.n, ph.m
    p = m + 1
    C = np.zeros((p, n))
    C[:m] = ph.B.T @ ph.Q
    M = [np.zeros((n, n)) for _ in range(p)]
    M[m] = 0.5 * ph.Q
    return LtiqoSystem(ph.A, ph.B, C, np.zeros((p, m)), M, [np.zeros((m, m)) for _ in range(p)])


def build_error_system(fom: LtiqoSystem, rom: LtiqoSystem) -> LtiqoSystem:
    """System whose output is ``y_fom - y_rom`` for the same input."""
    if fom.m != rom.m or fom.p != rom.p:
        raise DimensionError(
            f"FOM (m={fom.m}, p={fom.p}) and ROM (m={rom.m}, p={rom.p}) are incompatible")
    A = sla.block_diag(fom.A, rom.A)
    B = np.vstack([fom.B, rom.B])
    C = np.hstack([fom.C, -rom.C])
    M = [sla.block_diag(Mf, -Mr) for Mf, Mr in zip(fom.M, rom.M)]
    P = [Pf - Pr for Pf, Pr in zip(fom.P, rom.P)]
    return LtiqoSystem(A, B, C, fom.D - rom.D, M, P)


def condense_ph(ph: PhqoSystem) -> PhqoSystem:
    """Equivalent pHQO realization with ``Q = I`` and diagonal ``R``.

    With ``Q = L L^T`` and ``Phi`` the eigenvectors of ``L^T R L``, the state
    transform ``x = L^{-T} Phi z`` leaves outputs and Hamiltonian unchanged.
    """
    try:
        L = np.linalg.cholesky(ph.Q)
    except np.linalg.LinAlgError:
        raise StructureError("Q is not positive definite") from None
    RL = L.T @ ph.R @ L
    lam, Phi = np.linalg.eigh(0.5 * (RL + RL.T))
    T = L @ Phi                      # V^{-T}; V^{-1} = Phi^T L^T = T^T
    J_new = T.T @ ph.J @ T
    B_new = T.T @ ph.B
    n = ph.n
    return PhqoSystem(strict_upper(J_new), np.diag(np.clip(lam, 0.0, None)), np.eye(n), B_new)
