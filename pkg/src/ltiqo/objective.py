"""Leveled least-squares objective on sampled error transfer functions.

For a level ``g`` (``gamma`` or ``gamma / 2``, see :class:`LevelMode`)

    f = (1/g) * [ sum_{w in W1} sum_k ([sigma_k G1_err(iw) - g]_+)^2
                + sum_{(w1,w2) in W2} sum_k ([sigma_k G2_err(iw1, iw2) - g]_+)^2 ].

``f = 0`` certifies that every sampled error singular value is at most ``g``.
Sampling sets only hold ``w >= 0`` (and ``w2 >= 0``); the mirrored points
carry the conjugate values and are not summed again.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ResolventSingularError, UnsupportedStructureError
from .grad import AdjointAccumulator, pullback, quadratic_index, rom_state
from .model import LtiqoSystem
from .param import ThetaVector, decode_ltiqo
from .transfer import TransferCache, eval_G1, eval_K

__all__ = [
    "LevelMode",
    "FrequencySets",
    "ObjectiveValue",
    "ErrorModel",
    "f_lls",
    "grad_f_lls",
]

TINY_SIGMA = 1e-14


class LevelMode(enum.Enum):
    SUM = "sum"      # both parts compared against gamma
    HALF = "half"    # both parts compared against gamma / 2

    @classmethod
    def parse(cls, value) -> "LevelMode":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"sumlevel": "sum", "halflevel": "half"}
        return cls(aliases.get(key, key))

    def level(self, gamma: float) -> float:
        return gamma if self is LevelMode.SUM else 0.5 * gamma


def _log_axis(lo: float, hi: float, per_decade: int) -> np.ndarray:
    count = int(round(np.log10(hi / lo) * per_decade)) + 1
    return np.logspace(np.log10(lo), np.log10(hi), count)


@dataclass(frozen=True, eq=False)
class FrequencySets:
    """Sampling sets: ``omega1 >= 0`` (sorted, unique) and pairs with ``omega2 >= 0``."""

    omega1: np.ndarray
    omega2: np.ndarray

    def __post_init__(self):
        w1 = np.unique(np.asarray(self.omega1, dtype=float).ravel())
        w2 = np.asarray(self.omega2, dtype=float).reshape(-1, 2)
        if np.any(w1 < 0) or not np.all(np.isfinite(w1)):
            raise ValueError("omega1 must hold finite nonnegative frequencies")
        if np.any(w2[:, 1] < 0) or not np.all(np.isfinite(w2)):
            raise ValueError("omega2 pairs must be finite with a nonnegative second entry")
        w2 = np.unique(w2, axis=0) if w2.size else w2
        for a in (w1, w2):
            a.setflags(write=False)
        object.__setattr__(self, "omega1", w1)
        object.__setattr__(self, "omega2", w2)

    @classmethod
    def default(cls, omega_min: float = 1e-4, omega_max: float = 1e4, per_decade: int = 10) -> "FrequencySets":
        """Logarithmic axis grid plus 0, and the symmetric decade grid for pairs."""
        w1 = np.concatenate([[0.0], _log_axis(omega_min, omega_max, per_decade)])
        dec = 10.0 ** np.arange(-2, 3)
        first = np.concatenate([-dec[::-1], [0.0], dec])
        second = np.concatenate([[0.0], dec])
        pairs = np.array([(a, b) for a in first for b in second])
        return cls(w1, pairs)

    @property
    def sizes(self) -> tuple[int, int]:
        return self.omega1.size, self.omega2.shape[0]

    def union(self, omega1=(), omega2=()) -> "FrequencySets":
        extra2 = np.asarray(omega2, dtype=float).reshape(-1, 2)
        return FrequencySets(np.concatenate([self.omega1, np.ravel(omega1)]),
                             np.vstack([self.omega2, extra2]))

    def to_dict(self) -> dict:
        return {"omega1": self.omega1.tolist(), "omega2": self.omega2.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencySets":
        return cls(d.get("omega1", []), d.get("omega2", []))


@dataclass
class ObjectiveValue:
    value: float
    n_violations_lin: int
    n_violations_quad: int
    max_sigma_lin: float
    max_sigma_quad: float


class ErrorModel:
    """Error between a fixed FOM and parametrized ROMs on sampled frequencies.

    FOM transfer values are computed once per frequency and kept for the
    lifetime of the object.
    """

    def __init__(self, fom: LtiqoSystem):
        self.fom = fom
        self.cache = TransferCache(fom)
        self._G1: dict[float, np.ndarray] = {}
        self._K: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    def fom_G1(self, omegas) -> np.ndarray:
        omegas = np.asarray(omegas, dtype=float).ravel()
        missing = [w for w in dict.fromkeys(omegas.tolist()) if w not in self._G1]
        if missing:
            vals = self.cache.G1(missing)
            with self._lock:
                self._G1.update(zip(missing, vals))
        if not omegas.size:
            return np.empty((0, self.fom.p, self.fom.m), dtype=complex)
        return np.stack([self._G1[w] for w in omegas.tolist()])

    def fom_K(self, pairs, outputs) -> np.ndarray:
        """FOM kernels, shape (G, len(outputs), m, m)."""
        pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
        outputs = tuple(outputs)
        keys = [(a, b, outputs) for a, b in pairs.tolist()]
        missing = [k for k in dict.fromkeys(keys) if k not in self._K]
        if missing:
            vals = self.cache.K([k[:2] for k in missing], outputs)
            with self._lock:
                self._K.update(zip(missing, vals))
        if not keys:
            return np.empty((0, len(outputs), self.fom.m, self.fom.m), dtype=complex)
        return np.stack([self._K[k] for k in keys])

    # ------------------------------------------------------------------
    def error_sigmas(self, rom: LtiqoSystem, omega1, omega2):
        """All error singular values at the given points.

        Returns ``(sig1, sig2)`` with shapes ``(F, min(p, m))`` and
        ``(G, min(q, m^2))``; ``q`` is the number of quadratic outputs.
        """
        terms = self._terms(rom, omega1, omega2, need_vectors=False)
        return terms["sig1"], terms["sig2"]

    def point_sigma(self, rom: LtiqoSystem, w: float) -> float:
        """Largest linear error singular value at ``iw`` (not cached)."""
        G = eval_G1(self.fom, 1j * w) - eval_G1(rom, 1j * w)
        return float(np.linalg.norm(G, 2))

    def pair_sigma(self, rom: LtiqoSystem, w1: float, w2: float) -> float:
        """Largest quadratic error singular value at ``(iw1, iw2)`` (not cached)."""
        quad = quadratic_index(self.fom, rom)
        if not quad:
            return 0.0
        rows = [(eval_K(self.fom, j, 1j * w1, 1j * w2) - eval_K(rom, j, 1j * w1, 1j * w2)).ravel()
                for j in quad]
        return float(np.linalg.norm(np.array(rows), 2))

    def _terms(self, rom, omega1, omega2, need_vectors: bool):
        fom = self.fom
        omega1 = np.asarray(omega1, dtype=float).ravel()
        omega2 = np.asarray(omega2, dtype=float).reshape(-1, 2)
        linear = bool(np.any(fom.C) or np.any(fom.D) or np.any(rom.C) or np.any(rom.D))
        quad = quadratic_index(fom, rom)
        if not linear:
            omega1 = omega1[:0]
        if not quad:
            omega2 = omega2[:0]
        shifts, inv = np.unique(np.concatenate([omega1, omega2.ravel()]), return_inverse=True)
        X = rom_state(rom, 1j * shifts) if shifts.size else np.empty((0, rom.n, rom.m), dtype=complex)
        i1 = inv[:omega1.size]
        i2 = inv[omega1.size:].reshape(-1, 2)
        out = {"shifts": shifts, "X": X, "i1": i1, "i2": i2, "quad": quad}

        G = self.fom_G1(omega1) - (np.einsum("pn,fnm->fpm", rom.C, X[i1]) + rom.D)
        if need_vectors:
            U, s1, Vh = np.linalg.svd(G)
            out.update(U=U, Vh=Vh)
        else:
            s1 = np.linalg.svd(G, compute_uv=False)
        out["sig1"] = s1

        Ke = np.empty((omega2.shape[0], len(quad), rom.m, rom.m), dtype=complex)
        if quad:
            Kf = self.fom_K(omega2, quad)
            X1, X2 = X[i2[:, 0]], X[i2[:, 1]]
            for k, j in enumerate(quad):
                Kr = np.einsum("gna,nk,gkb->gab", X2, rom.M[j], X1) + rom.P[j]
                Ke[:, k] = Kf[:, k] - Kr
        out["Ke"] = Ke
        if len(quad) == 1:
            s2 = np.linalg.norm(Ke[:, 0].reshape(Ke.shape[0], rom.m * rom.m), axis=1)[:, None]
        elif quad:
            s2 = np.linalg.svd(Ke.reshape(Ke.shape[0], len(quad), rom.m * rom.m), compute_uv=False)
        else:
            s2 = np.zeros((0, 0))
        out["sig2"] = s2
        return out

    # ------------------------------------------------------------------
    def evaluate(self, theta: ThetaVector, gamma: float, freqs: FrequencySets,
                 mode=LevelMode.HALF, want_grad: bool = False):
        """Objective value and, optionally, its gradient with respect to ``theta``."""
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        lvl = LevelMode.parse(mode).level(gamma)
        rom = decode_ltiqo(theta)
        try:
            t = self._terms(rom, freqs.omega1, freqs.omega2, need_vectors=want_grad)
        except ResolventSingularError:
            val = ObjectiveValue(np.inf, 0, 0, np.inf, np.inf)
            return (val, np.full(theta.layout.size, np.nan)) if want_grad else val

        s1, s2 = t["sig1"], t["sig2"]
        ex1 = np.where(s1 > TINY_SIGMA * gamma, s1 - lvl, 0.0).clip(min=0.0)
        ex2 = np.where(s2 > TINY_SIGMA * gamma, s2 - lvl, 0.0).clip(min=0.0)
        value = (np.sum(ex1 ** 2) + np.sum(ex2 ** 2)) / lvl
        val = ObjectiveValue(
            float(value),
            int(np.count_nonzero(ex1)),
            int(np.count_nonzero(ex2)),
            float(s1.max()) if s1.size else 0.0,
            float(s2.max()) if s2.size else 0.0,
        )
        if not want_grad:
            return val

        grad = np.zeros(theta.layout.size)
        if value == 0.0:
            return val, grad
        acc = AdjointAccumulator(rom, 1j * t["shifts"], t["X"])
        c1 = (2.0 / lvl) * ex1
        rows = np.flatnonzero(np.any(c1 > 0, axis=1))
        if rows.size:
            k = s1.shape[1]
            U, Vh = t["U"][rows, :, :k], t["Vh"][rows, :k, :]
            W = -np.conj((U * c1[rows, None, :]) @ Vh)
            acc.add_linear(t["i1"][rows], W)
        c2 = (2.0 / lvl) * ex2
        rows = np.flatnonzero(np.any(c2 > 0, axis=1)) if c2.size else np.empty(0, dtype=int)
        if rows.size:
            if len(t["quad"]) > 1:
                raise UnsupportedStructureError(
                    "gradients need at most one quadratic output in the error system")
            Ke = t["Ke"][rows, 0]
            W = -np.conj(Ke) * (c2[rows, 0] / s2[rows, 0])[:, None, None]
            acc.add_quadratic(t["quad"][0], t["i2"][rows, 0], t["i2"][rows, 1], W)
        grad = pullback(theta, acc.finish())
        return val, grad


def f_lls(fom: LtiqoSystem, theta: ThetaVector, gamma: float, freqs: FrequencySets,
          mode=LevelMode.HALF, model: ErrorModel | None = None) -> ObjectiveValue:
    """Leveled least-squares value; an unevaluable ROM gives ``value = inf``."""
    model = model or ErrorModel(fom)
    return model.evaluate(theta, gamma, freqs, mode)


def grad_f_lls(fom: LtiqoSystem, theta: ThetaVector, gamma: float, freqs: FrequencySets,
               mode=LevelMode.HALF, model: ErrorModel | None = None) -> np.ndarray:
    """Gradient of :func:`f_lls` with respect to ``theta``.

    Terms at or below the level contribute exactly zero.
    """
    model = model or ErrorModel(fom)
    return model.evaluate(theta, gamma, freqs, mode, want_grad=True)[1]
