"""Level bisection, inner quasi-Newton minimization and the reduction driver.

The reduction loop alternates

1. minimize the leveled least-squares objective at level ``gamma``,
2. check the result on a dense randomized frequency set and add violators,
3. move ``gamma`` by bisection: a level reached with zero objective becomes
   the new upper bound, a level that could not be reached the new lower one.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, LayoutError, UnstableSystemError
from .model import LtiqoSystem, validate
from .objective import ErrorModel, FrequencySets, LevelMode
from .transfer import _golden_max
from .param import Scheme, ThetaVector, decode, decode_ltiqo, encode, layout_for

log = logging.getLogger(__name__)

__all__ = [
    "GammaConfig",
    "GammaState",
    "initialize_gamma",
    "update_gamma",
    "converged",
    "InnerConfig",
    "InnerResult",
    "bfgs",
    "minimize_inner",
    "CheckConfig",
    "CheckSet",
    "update_frequencies",
    "peak_points",
    "ReduceConfig",
    "ReductionResult",
    "initial_theta",
    "reduce",
    "write_trace_csv",
]


# ------------------------------------------------------------------ bisection

@dataclass
class GammaConfig:
    gamma_l_init: float = 0.0
    gamma_u_init: float = 100.0
    eps_gamma: float = 0.01
    N_r: int = 3
    eps_tol: float = 1e-12
    literal: bool = False


@dataclass
class GammaState:
    gamma_l: float
    gamma_u: float
    gamma: float
    n_r: int
    N_r: int
    gamma_l_init: float
    gamma_u_init: float
    eps_tol: float
    eps_gamma: float
    literal: bool = False


def initialize_gamma(cfg: GammaConfig | None = None) -> GammaState:
    """Fresh bisection state; the first level tried is ``gamma_u_init``."""
    cfg = cfg or GammaConfig()
    if not 0.0 <= cfg.gamma_l_init < cfg.gamma_u_init:
        raise ValueError(f"need 0 <= gamma_l_init < gamma_u_init, got {cfg.gamma_l_init}, {cfg.gamma_u_init}")
    if cfg.N_r < 0:
        raise ValueError("N_r must be nonnegative")
    return GammaState(cfg.gamma_l_init, cfg.gamma_u_init, cfg.gamma_u_init, 0, cfg.N_r,
                      cfg.gamma_l_init, cfg.gamma_u_init, cfg.eps_tol, cfg.eps_gamma, cfg.literal)


def update_gamma(state: GammaState, eps: float) -> float:
    """Advance the bisection after the inner solve reached objective ``eps``.

    Success (``eps < eps_tol``) lowers the upper bound to the current level,
    failure raises the lower bound.  After a success with a raised lower
    bound, the lower bound is reset to its initial value at most ``N_r``
    times, so levels that failed only through a poor local minimum are
    retried.  The next level is the midpoint.

    With ``state.literal`` the branches and the update line are applied as
    originally printed (success raises ``gamma_l``, failure lowers
    ``gamma_u``, next level ``gamma_l + (gamma_l + gamma_u) / 2``); kept for
    auditing only.
    """
    success = eps < state.eps_tol
    if state.literal:
        if success:
            state.gamma_l = state.gamma
        else:
            state.gamma_u = state.gamma
    elif success:
        state.gamma_u = state.gamma
    else:
        state.gamma_l = state.gamma

    reset_ok = state.n_r < state.N_r and state.gamma_l > state.gamma_l_init and state.gamma != state.gamma_l
    if reset_ok:
        state.n_r += 1
        state.gamma_l = state.gamma_l_init

    if state.literal:
        state.gamma = state.gamma_l + 0.5 * (state.gamma_l + state.gamma_u)
    else:
        state.gamma = 0.5 * (state.gamma_l + state.gamma_u)
    return state.gamma


def converged(state: GammaState) -> bool:
    return state.gamma_u - state.gamma_l < state.eps_gamma * (state.gamma_u + state.gamma_l)


# -------------------------------------------------------------------- BFGS

@dataclass
class InnerConfig:
    eps_tol: float = 1e-12
    gtol: float = 1e-10
    max_iter: int = 500
    armijo: float = 1e-4
    max_backtracks: int = 40
    stall_iters: int = 10
    stall_rtol: float = 1e-12


@dataclass
class InnerResult:
    x: np.ndarray
    f: float
    iterations: int
    evaluations: int
    status: str

    @property
    def line_search_failed(self) -> bool:
        return self.status == "line-search"


def _backtrack(phi, f0: float, d0: float, alpha: float, c1: float, max_steps: int):
    """Armijo backtracking with quadratic then cubic interpolation.

    Returns ``(alpha, f_alpha, g_alpha, evaluations)``; ``alpha = 0`` on failure.
    """
    prev = None
    evals = 0
    for _ in range(max_steps):
        fa, ga = phi(alpha)
        evals += 1
        if np.isfinite(fa) and fa <= f0 + c1 * alpha * d0:
            return alpha, fa, ga, evals
        if not np.isfinite(fa):
            new = 0.1 * alpha
        elif prev is None:
            new = -d0 * alpha ** 2 / (2.0 * (fa - f0 - d0 * alpha))
        else:
            a0, f_a0 = prev
            r1 = fa - f0 - d0 * alpha
            r0 = f_a0 - f0 - d0 * a0
            den = alpha ** 2 * a0 ** 2 * (alpha - a0)
            a = (a0 ** 2 * r1 - alpha ** 2 * r0) / den
            b = (-a0 ** 3 * r1 + alpha ** 3 * r0) / den
            if a == 0.0:
                new = -d0 / (2.0 * b) if b != 0.0 else 0.5 * alpha
            else:
                disc = b * b - 3.0 * a * d0
                new = (-b + math.sqrt(disc)) / (3.0 * a) if disc >= 0 else 0.5 * alpha
        if np.isfinite(fa):
            prev = (alpha, fa)
        if not np.isfinite(new):
            new = 0.5 * alpha
        alpha = min(max(new, 0.1 * alpha), 0.5 * alpha)
    return 0.0, f0, None, evals


def bfgs(fun_grad, x0, cfg: InnerConfig | None = None) -> InnerResult:
    """Minimize with BFGS on the inverse Hessian and an order-3 backtracking search.

    ``fun_grad(x)`` returns ``(f, g)``.  The returned point is never worse
    than ``x0``.
    """
    cfg = cfg or InnerConfig()
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    evals = 1
    if not np.isfinite(f):
        return InnerResult(x, f, 0, evals, "non-finite")
    n = x.size
    H = np.eye(n)
    scaled = False
    stall = 0
    status = "max-iter"
    it = 0
    for it in range(cfg.max_iter + 1):
        if f <= cfg.eps_tol:
            status = "tolerance"
            break
        if np.max(np.abs(g), initial=0.0) < cfg.gtol:
            status = "gradient"
            break
        if it == cfg.max_iter:
            break
        d = -H @ g
        slope = float(g @ d)
        if slope >= 0.0:
            H = np.eye(n)
            d = -g
            slope = float(g @ d)
        alpha0 = 1.0 if scaled else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))

        def phi(a):
            return fun_grad(x + a * d)

        alpha, f_new, g_new, ev = _backtrack(phi, f, slope, alpha0, cfg.armijo, cfg.max_backtracks)
        evals += ev
        if alpha == 0.0:
            status = "line-search"
            break
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = (sy / float(y @ y)) * np.eye(n)
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
        decrease = f - f_new
        stall = stall + 1 if decrease <= cfg.stall_rtol * max(abs(f), 1e-300) else 0
        x, f, g = x + s, f_new, g_new
        if stall >= cfg.stall_iters:
            status = "stagnation"
            it += 1
            break
    return InnerResult(x, float(f), it, evals, status)


def minimize_inner(model: ErrorModel, theta0: ThetaVector, gamma: float, freqs: FrequencySets,
                   cfg: InnerConfig | None = None, mode=LevelMode.HALF):
    """Minimize the leveled objective at fixed ``gamma`` and frequencies.

    Returns ``(theta, f_value, iterations, result)``.
    """
    layout = theta0.layout

    def fun_grad(x):
        val, g = model.evaluate(ThetaVector(x, layout), gamma, freqs, mode, want_grad=True)
        return val.value, g

    res = bfgs(fun_grad, theta0.data, cfg)
    return ThetaVector(res.x, layout), res.f, res.iterations, res


# ------------------------------------------------------- frequency updates

@dataclass
class CheckConfig:
    n_axis: int = 512
    n_grid: int = 64
    omega_min: float = 1e-4
    omega_max: float = 1e4
    max_additions: int = 20
    refine: int = 4
    refine_radius: float = 1.25
    prune: bool = False
    certify: int = 8


class CheckSet:
    """Randomized dense check frequencies, drawn once per reduction run.

    The axis set holds 0 and log-uniform points.  The pair set is the tensor
    grid of a symmetric first axis (0 and +-log-uniform points) and a
    nonnegative second axis, plus the pairs ``(w, w)`` and ``(-w, w)`` for
    every axis point ``w``.
    """

    def __init__(self, cfg: CheckConfig, rng: np.random.Generator):
        lo, hi = math.log10(cfg.omega_min), math.log10(cfg.omega_max)
        self.omega1 = np.concatenate([[0.0], 10.0 ** rng.uniform(lo, hi, cfg.n_axis)])
        k = cfg.n_grid - 1
        mags = 10.0 ** rng.uniform(lo, hi, k)
        signs = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
        first = np.concatenate([[0.0], signs * mags])
        second = np.concatenate([[0.0], 10.0 ** rng.uniform(lo, hi, k)])
        grid = np.array(np.meshgrid(first, second, indexing="ij")).reshape(2, -1).T
        # kernels of resonant systems peak along w1 = -w2 and w1 = w2
        w = self.omega1[1:]
        diag = np.concatenate([np.column_stack([w, w]), np.column_stack([-w, w])])
        self.omega2 = np.vstack([grid, diag])
        self.cfg = cfg


def _bracket(w: float, radius: float) -> tuple[float, float]:
    if w == 0.0:
        return 0.0, 0.0
    lo, hi = sorted((w / radius, w * radius))
    return lo, hi


def _refine_axis(model: ErrorModel, rom, w: float, radius: float) -> float:
    lo, hi = _bracket(w, radius)
    if lo == hi:
        return w
    x, fx, _ = _golden_max(lambda t: model.point_sigma(rom, t), lo, hi, 1e-4 * abs(w), max_iter=40)
    return x if fx > model.point_sigma(rom, w) else w


def _refine_pair(model: ErrorModel, rom, pt, radius: float):
    w1, w2 = float(pt[0]), float(pt[1])
    best = model.pair_sigma(rom, w1, w2)
    for _ in range(2):
        lo, hi = _bracket(w1, radius)
        if lo != hi:
            x, fx, _ = _golden_max(lambda t: model.pair_sigma(rom, t, w2), lo, hi, 1e-4 * abs(w1), max_iter=40)
            if fx > best:
                w1, best = x, fx
        lo, hi = _bracket(w2, radius)
        if lo != hi:
            x, fx, _ = _golden_max(lambda t: model.pair_sigma(rom, w1, t), lo, hi, 1e-4 * abs(w2), max_iter=40)
            if fx > best:
                w2, best = x, fx
    return (w1, w2)


def update_frequencies(model: ErrorModel, freqs: FrequencySets, theta: ThetaVector, gamma: float,
                       check: CheckSet, mode=LevelMode.HALF, inactive: dict | None = None) -> FrequencySets:
    """Add the worst check points whose error exceeds the level.

    At most ``check.cfg.max_additions`` points are added per domain, largest
    violation first; existing points are never duplicated.  The worst
    ``check.cfg.refine`` of them are first moved to a nearby local maximum
    (golden-section search within a factor ``refine_radius``).  With
    ``check.cfg.prune`` points whose terms were zero in two consecutive
    rounds are dropped (``inactive`` carries the counters between calls).
    """
    lvl = LevelMode.parse(mode).level(gamma)
    rom = decode_ltiqo(theta)
    sig1, sig2 = model.error_sigmas(rom, check.omega1, check.omega2)
    new1 = np.empty(0)
    new2 = np.empty((0, 2))
    if sig1.size:
        smax = sig1.max(axis=1)
        mask = (smax > lvl) & ~np.isin(check.omega1, freqs.omega1)
        idx = np.flatnonzero(mask)
        idx = idx[np.argsort(smax[idx])[::-1][:check.cfg.max_additions]]
        new1 = check.omega1[idx]
        new1 = np.array([_refine_axis(model, rom, w, check.cfg.refine_radius) if k < check.cfg.refine else w
                         for k, w in enumerate(new1)])
    if sig2.size:
        smax = sig2.max(axis=1)
        existing = {tuple(p) for p in freqs.omega2.tolist()}
        fresh = np.array([tuple(p) not in existing for p in check.omega2.tolist()])
        idx = np.flatnonzero((smax > lvl) & fresh)
        idx = idx[np.argsort(smax[idx])[::-1][:check.cfg.max_additions]]
        new2 = check.omega2[idx]
        new2 = np.array([_refine_pair(model, rom, pt, check.cfg.refine_radius) if k < check.cfg.refine else pt
                         for k, pt in enumerate(new2)]).reshape(-1, 2)
    out = freqs.union(new1, new2)

    if check.cfg.prune and inactive is not None:
        s1, s2 = model.error_sigmas(rom, out.omega1, out.omega2)
        keep1 = np.ones(out.omega1.size, dtype=bool)
        keep2 = np.ones(out.omega2.shape[0], dtype=bool)
        for keep, pts, sig in ((keep1, out.omega1, s1), (keep2, out.omega2, s2)):
            if not sig.size:
                continue
            for i, (pt, smax) in enumerate(zip(pts.tolist(), sig.max(axis=1))):
                key = tuple(np.ravel(pt))
                inactive[key] = inactive.get(key, 0) + 1 if smax <= lvl else 0
                if inactive[key] >= 2:
                    keep[i] = False
        out = FrequencySets(out.omega1[keep1], out.omega2[keep2])
    return out


def _near(a: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    """Coordinatewise: same sign and within a factor ``radius`` (zero only matches zero)."""
    same = np.sign(a) == np.sign(b)
    ratio = np.abs(a) / np.where(b == 0.0, 1.0, np.abs(b))
    close = (ratio <= radius) & (ratio >= 1.0 / radius)
    return np.all(same & (close | ((a == 0.0) & (b == 0.0))), axis=-1)


def _distinct_peaks(points: np.ndarray, values: np.ndarray, k: int, radius: float) -> np.ndarray:
    """Up to ``k`` largest points, skipping points near one already taken."""
    pts = points.reshape(points.shape[0], -1)
    taken: list[int] = []
    for i in np.argsort(values)[::-1]:
        if len(taken) == k:
            break
        if not taken or not np.any(_near(pts[taken], pts[i], radius)):
            taken.append(i)
    return points[taken]


def peak_points(model: ErrorModel, theta: ThetaVector, check: CheckSet):
    """Refined local maxima of the error around the strongest check points.

    The ``check.cfg.certify`` largest well-separated check points of each
    domain are moved uphill by golden-section search.  Returns
    ``(omega1, omega2)``.
    """
    rom = decode_ltiqo(theta)
    k, radius = check.cfg.certify, check.cfg.refine_radius
    sig1, sig2 = model.error_sigmas(rom, check.omega1, check.omega2)
    new1, new2 = np.empty(0), np.empty((0, 2))
    if sig1.size and k:
        top = _distinct_peaks(check.omega1, sig1.max(axis=1), k, radius)
        new1 = np.array([_refine_axis(model, rom, w, radius) for w in top])
    if sig2.size and k:
        top = _distinct_peaks(check.omega2, sig2.max(axis=1), k, radius)
        new2 = np.array([_refine_pair(model, rom, pt, radius) for pt in top]).reshape(-1, 2)
    return new1, new2


# ------------------------------------------------------------ the driver

@dataclass
class ReduceConfig:
    """Settings of :func:`reduce`; every field has a command-line flag."""

    gamma_u_init: float = 100.0
    gamma_l_init: float = 0.0
    eps_gamma: float = 0.01
    N_r: int = 3
    eps_tol: float = 1e-12
    literal_bisection: bool = False
    mode: str = "half"
    max_outer: int = 200
    max_refits: int = 3
    expand_upper: bool = True
    seed: int | None = 0
    restarts: int = 0
    omega_min: float = 1e-4
    omega_max: float = 1e4
    per_decade: int = 10
    inner: InnerConfig = field(default_factory=InnerConfig)
    check: CheckConfig = field(default_factory=CheckConfig)

    def gamma_config(self) -> GammaConfig:
        return GammaConfig(self.gamma_l_init, self.gamma_u_init, self.eps_gamma, self.N_r,
                           self.eps_tol, self.literal_bisection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ReduceConfig":
        d = dict(d)
        inner = InnerConfig(**d.pop("inner", {}))
        check = CheckConfig(**d.pop("check", {}))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown reduce settings: {sorted(unknown)}")
        return cls(inner=inner, check=check, **d)


@dataclass
class ReductionResult:
    theta_final: ThetaVector
    scheme: Scheme
    gamma_certified: float
    freqs_final: FrequencySets
    trace: list
    converged: bool
    seed: int | None = None
    mode: str = "half"
    wall_time: float = 0.0

    @property
    def rom(self):
        return decode(self.theta_final)

    @property
    def rom_ltiqo(self) -> LtiqoSystem:
        return decode_ltiqo(self.theta_final)


TRACE_FIELDS = ("iteration", "gamma", "f_value", "n_omega1", "n_omega2", "inner_iterations", "success")


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for row in trace:
            w.writerow([row[k] for k in TRACE_FIELDS])


def _time_scale(A: np.ndarray) -> float:
    med = float(np.median(np.abs(np.linalg.eigvals(A))))
    return med if med > 0 else 1.0


def initial_theta(fom: LtiqoSystem, r: int, scheme, rng: np.random.Generator) -> ThetaVector:
    """Random stable starting point.

    ``A = S - 1.1 ||S|| I`` with a standard normal ``S``.  Output matrices
    start random on the outputs the FOM uses; ``C`` starts at zero when the
    FOM has no linear part and ``D``, ``P_j`` start at the FOM values.
    The state matrix is then rescaled so the median eigenvalue modulus
    matches that of the FOM, which puts the reduced poles on the FOM's
    time scale.
    """
    scheme = Scheme.parse(scheme)
    m, p = fom.m, fom.p
    if scheme is Scheme.PH:
        lay = layout_for(scheme, r, m)
        data = np.concatenate([rng.standard_normal(r * (r - 1) // 2), np.abs(rng.standard_normal(r)),
                               rng.standard_normal(r * m)])
        theta = ThetaVector(data, lay)
        c = _time_scale(fom.A) / _time_scale(decode_ltiqo(theta).A)
        seg = lay.split(data)
        # A = J - R with R = diag(theta_R)^2, so A scales by c
        return ThetaVector(np.concatenate([c * seg["J"], np.sqrt(c) * seg["R"], seg["B"]]), lay)
    S = rng.standard_normal((r, r))
    A = S - 1.1 * np.linalg.norm(S, 2) * np.eye(r)
    A *= _time_scale(fom.A) / _time_scale(A)
    B = rng.standard_normal((r, m))
    linear = bool(np.any(fom.C) or np.any(fom.D))
    C = rng.standard_normal((p, r)) if linear else np.zeros((p, r))
    quad = set(fom.quadratic_outputs())
    Ms = []
    for j in range(p):
        if j not in quad:
            Ms.append(np.zeros((r, r)))
        elif scheme is Scheme.DIAGM:
            Ms.append(np.diag(rng.standard_normal(r)))
        else:
            X = rng.standard_normal((r, r))
            Ms.append(0.5 * (X + X.T))
    rom = LtiqoSystem(A, B, C, fom.D, Ms, fom.P)
    return encode(rom, scheme)


def _needed_level(model: ErrorModel, theta: ThetaVector, freqs: FrequencySets, mode: LevelMode) -> float:
    s1, s2 = model.error_sigmas(decode_ltiqo(theta), freqs.omega1, freqs.omega2)
    top = max(float(s1.max()) if s1.size else 0.0, float(s2.max()) if s2.size else 0.0)
    return top if mode is LevelMode.SUM else 2.0 * top


def _reduce_once(fom, r, scheme, cfg: ReduceConfig, seed, model: ErrorModel, theta0=None,
                 freqs0=None) -> ReductionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mode = LevelMode.parse(cfg.mode)
    theta = theta0 if theta0 is not None else initial_theta(fom, r, scheme, rng)
    check = CheckSet(cfg.check, rng)
    freqs = freqs0 or FrequencySets.default(cfg.omega_min, cfg.omega_max, cfg.per_decade)
    state = initialize_gamma(cfg.gamma_config())
    inner_cfg = dataclasses.replace(cfg.inner, eps_tol=cfg.eps_tol)
    inactive: dict = {}

    best = None
    trace = []
    for it in range(cfg.max_outer):
        gamma = state.gamma
        cand, fval, iters, _ = minimize_inner(model, theta, gamma, freqs, inner_cfg, mode)
        for _ in range(cfg.max_refits + 1):
            grown = update_frequencies(model, freqs, cand, gamma, check, mode,
                                       inactive if cfg.check.prune else None)
            if fval < cfg.eps_tol:
                # a success must also hold at the refined error peaks
                grown = grown.union(*peak_points(model, cand, check))
            added = grown.sizes != freqs.sizes or not np.array_equal(grown.omega1, freqs.omega1)
            freqs = grown
            if not added or fval >= cfg.eps_tol:
                break
            cand, fval, more, _ = minimize_inner(model, cand, gamma, freqs, inner_cfg, mode)
            iters += more
        eps = model.evaluate(cand, gamma, freqs, mode).value
        success = eps < cfg.eps_tol
        trace.append({"iteration": it, "gamma": gamma, "f_value": eps, "n_omega1": freqs.sizes[0],
                      "n_omega2": freqs.sizes[1], "inner_iterations": iters, "success": success})
        log.info("outer %d: gamma=%.6g f=%.3e |W1|=%d |W2|=%d inner=%d", it, gamma, eps,
                 *freqs.sizes, iters)

        if success:
            if best is None or gamma <= best[1]:
                best = (cand, gamma)
            theta = cand
        else:
            theta = best[0] if best is not None else cand
            if best is None and cfg.expand_upper and not state.literal and gamma >= state.gamma_u:
                # nothing certified yet and the top level failed: widen the bracket
                state.gamma_l = gamma
                state.gamma_u = 2.0 * gamma
                state.gamma = state.gamma_u
                continue
        update_gamma(state, eps)
        if converged(state):
            break
        if not success and best is not None and np.isfinite(eps):
            # a capped inner run often stalls just short of the level; keep its
            # progress when it scores better at the next level than the best success
            f_cand = model.evaluate(cand, state.gamma, freqs, mode).value
            f_best = model.evaluate(best[0], state.gamma, freqs, mode).value
            theta = cand if f_cand < f_best else best[0]
    is_converged = best is not None and converged(state)

    if best is None:
        theta_final, gamma_cert = theta, math.inf
    else:
        theta_final, gamma_cert = best
        for attempt in range(cfg.max_refits + 1):
            # the certificate must cover the refined error peaks and every point collected so far
            freqs = freqs.union(*peak_points(model, theta_final, check))
            if model.evaluate(theta_final, gamma_cert, freqs, mode).value < cfg.eps_tol:
                break
            if attempt < cfg.max_refits:
                polished, fval, _, _ = minimize_inner(model, theta_final, gamma_cert, freqs, inner_cfg, mode)
                if fval < cfg.eps_tol:
                    theta_final = polished
                    continue
            gamma_cert = max(gamma_cert, _needed_level(model, theta_final, freqs, mode) * (1 + 1e-12))
            break
    return ReductionResult(theta_final, Scheme.parse(scheme), float(gamma_cert), freqs, trace,
                           bool(is_converged), seed, mode.value, time.perf_counter() - t0)


def reduce(fom: LtiqoSystem, r: int, scheme="full", cfg: ReduceConfig | None = None,
           theta0: ThetaVector | None = None) -> ReductionResult:
    """Reduced model of order ``r`` minimizing the sampled H-infinity error.

    With ``cfg.restarts > 0`` further runs with seeds ``seed + 1, ...`` are
    made and the run with the smallest certified level is returned.
    """
    cfg = cfg or ReduceConfig()
    scheme = Scheme.parse(scheme)
    if not validate(fom).stable:
        raise UnstableSystemError("the full-order model must be asymptotically stable")
    if not 1 <= r < fom.n:
        raise DimensionError(f"reduced order must satisfy 1 <= r < n = {fom.n}, got {r}")
    if scheme is Scheme.PH and fom.p != fom.m + 1:
        raise LayoutError("the pH scheme needs a FOM with p = m + 1 outputs (see phqo_to_ltiqo)")
    model = ErrorModel(fom)
    best = None
    for k in range(cfg.restarts + 1):
        seed = None if cfg.seed is None else cfg.seed + k
        res = _reduce_once(fom, r, scheme, cfg, seed, model, theta0 if k == 0 else None)
        key = (not res.converged, res.gamma_certified)
        if best is None or key < (not best.converged, best.gamma_certified):
            best = res
    return best
