"""Analytic gradients of error singular values with respect to ROM parameters.

All schemes share one reverse-mode core.  A real-valued function ``f`` of the
reduced transfer values is described by complex weights ``W`` with

    df = Re sum_ab W_ab dG_ab,

first turned into gradients with respect to the LTIQO matrices of the ROM
(``A, B, C, D, M_j, P_j``) and then pulled back to the parameter vector of
the active scheme.  Resolvents only ever act on ``r x m`` blocks, so no
Kronecker products are formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateSingularValueError, LayoutError, ResolventSingularError,
                     UnsupportedStructureError)
from .model import LtiqoSystem
from .param import (Scheme, ThetaVector, decode_ltiqo, diag_embed_adjoint, duplication_adjoint,
                    sutv_apply, vec)
from .transfer import eval_G1, eval_K

__all__ = [
    "MatrixGrads",
    "AdjointAccumulator",
    "rom_state",
    "pullback",
    "quadratic_index",
    "GradContext",
    "dsigma1_full",
    "dKfrob2_full",
    "dsigma1_ph",
    "dKfrob2_ph",
    "fd_gradient",
]

DEGENERACY_GAP = 1e-10


def rom_state(rom: LtiqoSystem, shifts) -> np.ndarray:
    """``(s I - A)^{-1} B`` for each complex shift; shape ``(S, r, m)``."""
    shifts = np.asarray(shifts, dtype=complex).ravel()
    r = rom.n
    lhs = shifts[:, None, None] * np.eye(r) - rom.A
    try:
        X = np.linalg.solve(lhs, np.broadcast_to(rom.B, (shifts.size, r, rom.m)))
    except np.linalg.LinAlgError:
        raise ResolventSingularError("a sampled shift hits the spectrum of the reduced model") from None
    if not np.all(np.isfinite(X)):
        raise ResolventSingularError("non-finite reduced resolvent")
    return X


@dataclass
class MatrixGrads:
    """Real gradients with respect to the LTIQO matrices of a reduced model."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    M: list = field(default_factory=list)
    P: list = field(default_factory=list)

    @classmethod
    def zeros(cls, rom: LtiqoSystem) -> "MatrixGrads":
        r, m, p = rom.dims
        return cls(np.zeros((r, r)), np.zeros((r, m)), np.zeros((p, r)), np.zeros((p, m)),
                   [np.zeros((r, r)) for _ in range(p)], [np.zeros((m, m)) for _ in range(p)])


class AdjointAccumulator:
    """Collects weighted transfer-value sensitivities at a fixed set of shifts.

    Parameters
    ----------
    rom : LtiqoSystem
        The reduced model.
    shifts : array of complex
        Distinct shifts; terms refer to them by index.
    X : ndarray, optional
        Precomputed ``rom_state(rom, shifts)``.
    """

    def __init__(self, rom: LtiqoSystem, shifts, X=None):
        self.rom = rom
        self.shifts = np.asarray(shifts, dtype=complex).ravel()
        self.X = rom_state(rom, self.shifts) if X is None else X
        self.gX = np.zeros_like(self.X)
        self.grads = MatrixGrads.zeros(rom)

    def add_linear(self, idx, W) -> None:
        """Add ``Re sum W * dG1hat`` at shifts ``idx``; ``W`` has shape (F, p, m)."""
        idx = np.asarray(idx, dtype=int).ravel()
        W = np.asarray(W, dtype=complex).reshape(idx.size, self.rom.p, self.rom.m)
        X = self.X[idx]
        self.grads.D += W.real.sum(axis=0)
        self.grads.C += np.einsum("fpm,fnm->pn", W, X).real
        np.add.at(self.gX, idx, np.einsum("pn,fpm->fnm", self.rom.C, W))

    def add_quadratic(self, j: int, idx1, idx2, W) -> None:
        """Add ``Re sum W * dKhat_j`` at shift pairs; ``W`` has shape (G, m, m)."""
        idx1 = np.asarray(idx1, dtype=int).ravel()
        idx2 = np.asarray(idx2, dtype=int).ravel()
        W = np.asarray(W, dtype=complex).reshape(idx1.size, self.rom.m, self.rom.m)
        X1, X2 = self.X[idx1], self.X[idx2]
        Mj = self.rom.M[j]
        self.grads.P[j] += W.real.sum(axis=0)
        self.grads.M[j] += np.einsum("gna,gab,gkb->nk", X2, W, X1).real
        X2W = np.einsum("gna,gab->gnb", X2, W)
        X1Wt = np.einsum("gna,gba->gnb", X1, W)
        np.add.at(self.gX, idx1, np.einsum("kn,gkb->gnb", Mj, X2W))
        np.add.at(self.gX, idx2, np.einsum("nk,gkb->gnb", Mj, X1Wt))

    def finish(self) -> MatrixGrads:
        """Propagate the state sensitivities through the resolvent."""
        g = self.grads
        active = np.flatnonzero(np.any(self.gX != 0, axis=(1, 2)))
        if active.size:
            s = self.shifts[active]
            lhs = s[:, None, None] * np.eye(self.rom.n) - self.rom.A.T
            H = np.linalg.solve(lhs, self.gX[active])
            g.B += H.real.sum(axis=0)
            g.A += np.einsum("fna,fka->nk", H, self.X[active]).real
        return g


def pullback(theta: ThetaVector, g: MatrixGrads) -> np.ndarray:
    """Gradient with respect to ``theta`` from matrix gradients of its LTIQO form."""
    lay = theta.layout
    out = np.zeros(lay.size)
    if lay.scheme is Scheme.PH:
        m = lay.m
        out[lay["J"]] = sutv_apply(g.A.T - g.A)
        out[lay["R"]] = -2.0 * theta.segment("R") * np.diag(g.A)
        out[lay["B"]] = vec(g.B + g.C[:m].T)
        return out
    r = lay.r
    out[lay["A"]] = vec(g.A)
    out[lay["B"]] = vec(g.B)
    out[lay["C"]] = vec(g.C)
    out[lay["D"]] = vec(g.D)
    for j in range(lay.p):
        if lay.scheme is Scheme.DIAGM:
            out[lay[f"M{j}"]] = diag_embed_adjoint(vec(g.M[j]), r)
        else:
            out[lay[f"M{j}"]] = duplication_adjoint(vec(g.M[j]), r)
        out[lay[f"P{j}"]] = duplication_adjoint(vec(g.P[j]), lay.m)
    return out


def quadratic_index(fom: LtiqoSystem, rom: LtiqoSystem) -> list[int]:
    """Outputs on which the error system depends quadratically."""
    return sorted(set(fom.quadratic_outputs()) | set(rom.quadratic_outputs()))


def single_quadratic_index(fom: LtiqoSystem, rom: LtiqoSystem) -> int | None:
    idx = quadratic_index(fom, rom)
    if len(idx) > 1:
        raise UnsupportedStructureError(
            f"gradients need at most one quadratic output, error system has {len(idx)} (outputs {idx})")
    return idx[0] if idx else None


class GradContext:
    """FOM, parameter vector and decoded ROM for pointwise gradient queries."""

    def __init__(self, fom: LtiqoSystem, theta: ThetaVector):
        self.fom = fom
        self.theta = theta
        self.rom = decode_ltiqo(theta)
        if self.rom.m != fom.m or self.rom.p != fom.p:
            raise LayoutError(f"ROM (m={self.rom.m}, p={self.rom.p}) does not match FOM "
                              f"(m={fom.m}, p={fom.p})")
        self._rom_X: dict[complex, np.ndarray] = {}
        self._fom_G1: dict[complex, np.ndarray] = {}

    def rom_X(self, s: complex) -> np.ndarray:
        s = complex(s)
        if s not in self._rom_X:
            self._rom_X[s] = rom_state(self.rom, [s])[0]
        return self._rom_X[s]

    def error_G1(self, s: complex) -> np.ndarray:
        s = complex(s)
        if s not in self._fom_G1:
            self._fom_G1[s] = eval_G1(self.fom, s)
        return self._fom_G1[s] - (self.rom.C @ self.rom_X(s) + self.rom.D)

    def error_K(self, j: int, s1: complex, s2: complex) -> np.ndarray:
        X1, X2 = self.rom_X(s1), self.rom_X(s2)
        return eval_K(self.fom, j, s1, s2) - (X2.T @ self.rom.M[j] @ X1 + self.rom.P[j])


def _check_scheme(theta: ThetaVector, ph: bool, name: str):
    is_ph = theta.layout.scheme is Scheme.PH
    if is_ph != ph:
        raise LayoutError(f"{name} does not apply to the {theta.layout.scheme.value} scheme")


def _dsigma(ctx: GradContext, s: complex, i: int) -> np.ndarray:
    G = ctx.error_G1(s)
    U, sig, Vh = np.linalg.svd(G)
    if not 0 <= i < sig.size:
        raise IndexError(f"singular index {i} out of range ({sig.size} values)")
    gap_tol = DEGENERACY_GAP * sig[0]
    neighbours = np.delete(sig, i)
    if sig[i] <= gap_tol or sig[i] == 0.0 or np.any(np.abs(neighbours - sig[i]) <= gap_tol):
        raise DegenerateSingularValueError(f"singular value {i} at s = {s} is zero or not simple")
    acc = AdjointAccumulator(ctx.rom, [s], ctx.rom_X(s)[None])
    W = -np.outer(U[:, i].conj(), Vh[i].conj())
    acc.add_linear([0], W[None])
    return pullback(ctx.theta, acc.finish())


def _dkfrob2(ctx: GradContext, s1: complex, s2: complex) -> np.ndarray:
    q = single_quadratic_index(ctx.fom, ctx.rom)
    if q is None:
        return np.zeros(ctx.theta.layout.size)
    Ke = ctx.error_K(q, s1, s2)
    s1, s2 = complex(s1), complex(s2)
    shifts = [s1] if s1 == s2 else [s1, s2]
    acc = AdjointAccumulator(ctx.rom, shifts, np.stack([ctx.rom_X(s) for s in shifts]))
    acc.add_quadratic(q, [0], [0 if s1 == s2 else 1], (-2.0 * Ke.conj())[None])
    return pullback(ctx.theta, acc.finish())


def dsigma1_full(ctx: GradContext, s: complex, i: int = 0) -> np.ndarray:
    """Gradient of ``sigma_i(G1_err(s))`` for the full and diagonal-M schemes.

    Only the A, B, C and D segments can be nonzero.

    Raises
    ------
    DegenerateSingularValueError
        If ``sigma_i`` is zero or within ``1e-10 * sigma_1`` of a neighbour.
    """
    _check_scheme(ctx.theta, False, "dsigma1_full")
    return _dsigma(ctx, s, i)


def dKfrob2_full(ctx: GradContext, s1: complex, s2: complex) -> np.ndarray:
    """Gradient of ``||K_err(s1, s2)||_F^2`` for the full and diagonal-M schemes."""
    _check_scheme(ctx.theta, False, "dKfrob2_full")
    return _dkfrob2(ctx, s1, s2)


def dsigma1_ph(ctx: GradContext, s: complex, i: int = 0) -> np.ndarray:
    """Gradient of ``sigma_i(G1_err(s))`` over ``(theta_J, theta_R, theta_B)``."""
    _check_scheme(ctx.theta, True, "dsigma1_ph")
    return _dsigma(ctx, s, i)


def dKfrob2_ph(ctx: GradContext, s1: complex, s2: complex) -> np.ndarray:
    """Gradient of ``||K_err(s1, s2)||_F^2`` over ``(theta_J, theta_R, theta_B)``."""
    _check_scheme(ctx.theta, True, "dKfrob2_ph")
    return _dkfrob2(ctx, s1, s2)


def fd_gradient(fun, theta, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of ``fun`` at ``theta``.

    ``theta`` may be an array or a :class:`ThetaVector`; in the latter case
    ``fun`` receives perturbed ``ThetaVector`` instances.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    is_theta = isinstance(theta, ThetaVector)
    x = np.array(theta.data if is_theta else theta, dtype=float).ravel()
    wrap = (lambda v: theta.with_data(v)) if is_theta else (lambda v: v)
    g = np.empty_like(x)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (fun(wrap(xp)) - fun(wrap(xm))) / (2.0 * h)
    return g
