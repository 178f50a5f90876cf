"""Time-domain simulation, L2 norms and the frequency-domain gain bound check."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, trapezoid
from scipy.signal import chirp

from .model import LtiqoSystem

__all__ = [
    "Signal",
    "InputSignal",
    "simulate",
    "l2_norm",
    "l2_norm_trapezoid",
    "GainReport",
    "check_gain_bound",
    "sine_product_input",
    "chirp_input",
    "standard_inputs",
    "default_dt",
    "write_signal_csv",
]


@dataclass(frozen=True, eq=False)
class Signal:
    """Samples on a uniform time grid; ``values`` has shape (len(times), k)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != t.size:
            raise ValueError(f"{t.size} time points but {v.shape[0]} samples")
        if t.size > 2:
            dt = np.diff(t)
            if np.max(np.abs(dt - dt[0])) > 1e-9 * max(abs(dt[0]), 1.0):
                raise ValueError("time grid is not uniform")
        if not np.all(np.isfinite(v)):
            raise ValueError("signal has non-finite samples")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __sub__(self, other: "Signal") -> "Signal":
        return Signal(self.times, self.values - other.values)


@dataclass(frozen=True)
class InputSignal:
    """Callable input ``u(t)`` (vectorized over ``t``) with its highest frequency in rad/s."""

    func: object
    omega_max: float
    name: str = "input"

    def __call__(self, t):
        return self.func(t)


def sine_product_input(s: float, m: int = 2) -> InputSignal:
    """``u(t) = [sin(st) cos(st), cos(st) sin(st), ...]``."""
    def u(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        col = np.sin(s * t) * np.cos(s * t)
        return np.repeat(col[:, None], m, axis=1)
    return InputSignal(u, 2.0 * s, f"sin{s:g}")


def chirp_input(T: float = 100.0, f1: float = 2.0, m: int = 2) -> InputSignal:
    """Linear chirp 0 -> ``f1`` Hz in the first component, quadratic chirp in the second.

    Further components repeat the pattern.
    """
    def u(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lin = chirp(t, f0=0.0, t1=T, f1=f1, method="linear")
        quad = chirp(t, f0=0.0, t1=T, f1=f1, method="quadratic")
        cols = [lin if k % 2 == 0 else quad for k in range(m)]
        return np.stack(cols, axis=1)
    return InputSignal(u, 2.0 * np.pi * f1, "chirp")


def standard_inputs(m: int = 2, T: float = 100.0) -> list[InputSignal]:
    """Slow and fast sine products and the chirp pair."""
    return [sine_product_input(0.02, m), sine_product_input(4.1, m), chirp_input(T, 2.0, m)]


def default_dt(u: InputSignal) -> float:
    return min(1e-2, 0.05 / u.omega_max) if u.omega_max > 0 else 1e-2


def _outputs(sys: LtiqoSystem, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    y = X @ sys.C.T + U @ sys.D.T
    for j in range(sys.p):
        if np.any(sys.M[j]):
            y[:, j] += np.einsum("ti,ij,tj->t", X, sys.M[j], X)
        if np.any(sys.P[j]):
            y[:, j] += np.einsum("ti,ij,tj->t", U, sys.P[j], U)
    return y


def simulate(sys: LtiqoSystem, u, T: float, dt: float | None = None):
    """Classical RK4 from ``x(0) = 0``; returns ``(state, output)`` signals.

    ``u`` maps an array of times to an array of shape (len(t), m).  The
    grid is uniform with ``ceil(T / dt)`` steps ending exactly at ``T``.
    """
    if dt is None:
        dt = default_dt(u) if isinstance(u, InputSignal) else 1e-2
    if dt <= 0 or T <= 0:
        raise ValueError("T and dt must be positive")
    steps = int(np.ceil(T / dt - 1e-9))
    h = T / steps
    t = np.linspace(0.0, T, steps + 1)
    U = np.asarray(u(t), dtype=float).reshape(t.size, sys.m)
    Uh = np.asarray(u(t[:-1] + 0.5 * h), dtype=float).reshape(steps, sys.m)
    BU, BUh = U @ sys.B.T, Uh @ sys.B.T
    A = sys.A
    X = np.zeros((t.size, sys.n))
    x = np.zeros(sys.n)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            k1 = A @ x + BU[k]
            k2 = A @ (x + 0.5 * h * k1) + BUh[k]
            k3 = A @ (x + 0.5 * h * k2) + BUh[k]
            k4 = A @ (x + h * k3) + BU[k + 1]
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise FloatingPointError(f"state blew up at t = {t[k + 1]:.6g}")
            X[k + 1] = x
    return Signal(t, X), Signal(t, _outputs(sys, X, U))


def l2_norm(sig: Signal) -> float:
    """``(int ||v(t)||^2 dt)^{1/2}`` by composite Simpson quadrature."""
    sq = np.sum(sig.values ** 2, axis=1)
    return float(np.sqrt(max(simpson(sq, x=sig.times), 0.0)))


def l2_norm_trapezoid(sig: Signal) -> float:
    sq = np.sum(sig.values ** 2, axis=1)
    return float(np.sqrt(max(trapezoid(sq, x=sig.times), 0.0)))


@dataclass
class GainReport:
    lhs: float
    rhs: float
    u_norm: float
    tol: float
    ok: bool
    ratio: float


def check_gain_bound(fom: LtiqoSystem, rom: LtiqoSystem, u, T: float, dt: float | None,
                     hinf_parts, tol: float = 0.05) -> GainReport:
    """Compare ``||y - yhat||_2`` with ``h1 ||u||_2 + h2 ||u||_2^2``.

    ``hinf_parts`` is ``(h1, h2)`` or an ``HinfEstimate`` of the error
    system.  Sampled norms are lower bounds, so the bound is only flagged
    when exceeded by more than the relative ``tol``.
    """
    if hasattr(hinf_parts, "linear_part"):
        h1, h2 = hinf_parts.linear_part, hinf_parts.quadratic_part
    else:
        h1, h2 = hinf_parts
    _, y = simulate(fom, u, T, dt)
    _, yr = simulate(rom, u, T, dt)
    t = y.times
    u_sig = Signal(t, np.asarray(u(t), dtype=float).reshape(t.size, fom.m))
    un = l2_norm(u_sig)
    lhs = l2_norm(y - yr)
    rhs = h1 * un + h2 * un ** 2
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return GainReport(lhs, rhs, un, tol, bool(lhs <= rhs * (1.0 + tol)), float(ratio))


def write_signal_csv(sig: Signal, path, prefix: str = "y") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{prefix}{k}" for k in range(sig.values.shape[1])])
        for t, row in zip(sig.times, sig.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
