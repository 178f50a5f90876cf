"""Mass-spring-damper benchmarks, random test systems and the experiment driver."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import StructureError
from .model import LtiqoSystem, PhqoSystem, build_error_system, phqo_to_ltiqo
from .optimizer import ReduceConfig, reduce
from .param import Scheme
from .timedomain import check_gain_bound, simulate, standard_inputs
from .transfer import SamplingConfig, hinf_estimate

log = logging.getLogger(__name__)

__all__ = [
    "MsdParams",
    "msd_phqo",
    "msd_ltiqo",
    "random_ltiqo",
    "random_phqo",
    "ExperimentSpec",
    "run_experiment",
]


@dataclass
class MsdParams:
    mass: float = 4.0
    stiffness: float = 4.0
    damping: float = 1.0
    n_inputs: int = 2

    def check(self):
        if min(self.mass, self.stiffness, self.damping) <= 0:
            raise StructureError("mass, stiffness and damping must be positive")
        if self.n_inputs < 1:
            raise StructureError("need at least one input")


def msd_phqo(n_masses: int, params: MsdParams | None = None) -> PhqoSystem:
    """Chain of ``n_masses`` masses in port-Hamiltonian form, ``n = 2 n_masses``.

    Mass 1 is tied to a wall, neighbours are coupled by springs and every
    mass has a damper.  The state is ``(q_1, p_1, q_2, p_2, ...)``; the
    Hamiltonian is ``q^T K q / 2 + p^T p / (2 mass)`` and the inputs are
    forces on the first ``n_inputs`` masses.
    """
    params = params or MsdParams()
    params.check()
    if n_masses < 1:
        raise StructureError("need at least one mass")
    N, k = n_masses, params.stiffness
    K = np.zeros((N, N))
    for i in range(N):
        K[i, i] = k if i == N - 1 else 2.0 * k
        if i + 1 < N:
            K[i, i + 1] = K[i + 1, i] = -k
    if N == 1:
        K[0, 0] = k
    n = 2 * N
    q, p = np.arange(0, n, 2), np.arange(1, n, 2)
    Q = np.zeros((n, n))
    Q[np.ix_(q, q)] = K
    Q[p, p] = 1.0 / params.mass
    J = np.zeros((n, n))
    J[q, p] = 1.0
    J[p, q] = -1.0
    R = np.zeros((n, n))
    R[p, p] = params.damping
    m = min(params.n_inputs, N)
    B = np.zeros((n, m))
    B[p[:m], np.arange(m)] = 1.0
    return PhqoSystem.from_matrices(J, R, Q, B)


def msd_ltiqo(n_masses: int, params: MsdParams | None = None) -> LtiqoSystem:
    """Same chain with the single quadratic output ``x^T Q x`` and no linear part."""
    ph = msd_phqo(n_masses, params)
    return LtiqoSystem(ph.A, ph.B, M=[ph.Q], p=1)


def random_ltiqo(n: int, m: int, p: int, rng: np.random.Generator, quadratic: str = "last",
                 margin: float = 0.5) -> LtiqoSystem:
    """Random stable LTIQO system.

    ``quadratic`` selects which outputs get random ``M_j, P_j``: ``"last"``,
    ``"all"`` or ``"none"``.
    """
    S = rng.standard_normal((n, n))
    A = S - (max(np.linalg.eigvals(S).real) + margin) * np.eye(n)
    quad = {"last": [p - 1], "all": list(range(p)), "none": []}[quadratic]
    M, P = [], []
    for j in range(p):
        if j in quad:
            X, Y = rng.standard_normal((n, n)), rng.standard_normal((m, m))
            M.append(X + X.T)
            P.append(Y + Y.T)
        else:
            M.append(np.zeros((n, n)))
            P.append(np.zeros((m, m)))
    return LtiqoSystem(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                       rng.standard_normal((p, m)), M, P)


def random_phqo(n: int, m: int, rng: np.random.Generator) -> PhqoSystem:
    """Random pHQO system with ``R`` positive definite (so it is stable)."""
    X = rng.standard_normal((n, n))
    Y = rng.standard_normal((n, n))
    Z = rng.standard_normal((n, n))
    return PhqoSystem.from_matrices(X - X.T, Y @ Y.T / n + 0.1 * np.eye(n), Z @ Z.T / n + np.eye(n),
                                    rng.standard_normal((n, m)))


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentSpec:
    """Contents of a benchmark spec file.

    ``system`` is ``{"generator": "msd_ltiqo" | "msd_phqo", "n": state dim,
    "params": {...}}``.
    """

    system: dict = field(default_factory=lambda: {"generator": "msd_ltiqo", "n": 100, "params": {}})
    scheme: str = "full"
    r_list: list = field(default_factory=lambda: [2, 6, 12])
    optimizer: dict = field(default_factory=dict)
    outputs: str = "bench_out"
    seeds: list | None = None
    heatmap: dict = field(default_factory=lambda: {"r": None, "n1": 81, "n2": 41, "wmax": 100.0})
    time_domain: dict = field(default_factory=lambda: {"r": None, "T": 100.0})
    figures: bool = True
    jobs: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known - {"format"}
        if unknown:
            raise ValueError(f"unknown bench spec fields: {sorted(unknown)}")
        spec = cls(**{k: v for k, v in d.items() if k in known})
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        gen = self.system.get("generator")
        if gen not in ("msd_ltiqo", "msd_phqo"):
            raise ValueError(f"unknown generator {gen!r}")
        n = int(self.system.get("n", 0))
        if n < 2 or n % 2:
            raise ValueError("system.n must be a positive even number")
        Scheme.parse(self.scheme)
        if gen == "msd_ltiqo" and Scheme.parse(self.scheme) is Scheme.PH:
            raise ValueError("the pH scheme needs the msd_phqo generator")
        if not self.r_list or any(int(r) < 1 or int(r) >= n for r in self.r_list):
            raise ValueError(f"r_list entries must lie in [1, {n - 1}]")
        if self.seeds is not None and len(self.seeds) != len(self.r_list):
            raise ValueError("seeds must have one entry per r")
        ReduceConfig.from_dict(self.optimizer)

    def build_fom(self) -> LtiqoSystem:
        params = MsdParams(**self.system.get("params", {}))
        n_masses = int(self.system["n"]) // 2
        if self.system["generator"] == "msd_phqo":
            return phqo_to_ltiqo(msd_phqo(n_masses, params))
        return msd_ltiqo(n_masses, params)


def _run_one(args):
    fom, r, scheme, cfg_dict, seed = args
    cfg = ReduceConfig.from_dict(cfg_dict)
    cfg.seed = seed
    t0 = time.perf_counter()
    res = reduce(fom, r, scheme, cfg)
    return r, res, time.perf_counter() - t0


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run_experiment(spec: ExperimentSpec, outdir=None, figures: bool | None = None, jobs: int | None = None) -> dict:
    """Run an order sweep and write the result tables (and optional figures).

    Files written to ``outdir``:

    ``sweep.csv``
        ``r, gamma_certified, hinf_linear, hinf_quadratic, hinf_total,
        max_sampled_sigma, converged, outer_iterations, n_omega1, n_omega2,
        seed, wall_time``
    ``heatmap.csv``
        ``omega1, omega2, kerr_fro`` on the requested grid
    ``cross_section.csv``
        ``omega2, kerr_fro`` at ``omega1 = 0``
    ``time_domain.csv``
        ``input, l2_u, l2_error, bound, ratio, ok``
    ``metadata.json``
        spec, per-run trace summaries and timings
    """
    from .io import dump_result
    from .objective import ErrorModel
    from .param import decode_ltiqo

    outdir = Path(outdir or spec.outputs)
    outdir.mkdir(parents=True, exist_ok=True)
    figures = spec.figures if figures is None else figures
    jobs = max(1, int(jobs or spec.jobs or 1))
    t_start = time.perf_counter()
    fom = spec.build_fom()
    scheme = Scheme.parse(spec.scheme)
    r_list = sorted(int(r) for r in spec.r_list)
    base_seed = int(spec.optimizer.get("seed", 0) or 0)
    seeds = spec.seeds or [base_seed + i for i in range(len(r_list))]
    tasks = [(fom, r, scheme.value, spec.optimizer, int(s)) for r, s in zip(r_list, seeds)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_one, tasks))
    else:
        runs = [_run_one(t) for t in tasks]
    runs.sort(key=lambda x: x[0])

    model = ErrorModel(fom)
    sweep_rows, meta_runs, results = [], [], {}
    for r, res, wall in runs:
        rom = decode_ltiqo(res.theta_final)
        err = build_error_system(fom, rom)
        est = hinf_estimate(err, SamplingConfig())
        s1, s2 = model.error_sigmas(rom, res.freqs_final.omega1, res.freqs_final.omega2)
        sampled = max(float(s1.max()) if s1.size else 0.0, float(s2.max()) if s2.size else 0.0)
        sweep_rows.append([r, res.gamma_certified, est.linear_part, est.quadratic_part, est.total, sampled,
                           int(res.converged), len(res.trace), *res.freqs_final.sizes, res.seed, wall])
        meta_runs.append({"r": r, "seed": res.seed, "wall_time": wall, "converged": res.converged,
                          "gamma_certified": res.gamma_certified, "trace": res.trace})
        dump_result(res, outdir / f"result_r{r}.json")
        results[r] = res
    _write_csv(outdir / "sweep.csv",
               ["r", "gamma_certified", "hinf_linear", "hinf_quadratic", "hinf_total", "max_sampled_sigma",
                "converged", "outer_iterations", "n_omega1", "n_omega2", "seed", "wall_time"], sweep_rows)

    # error kernel surface and its omega1 = 0 cross section
    hm = dict({"r": None, "n1": 81, "n2": 41, "wmax": 100.0}, **spec.heatmap)
    r_hm = hm["r"] if hm["r"] in results else r_list[-1]
    rom_hm = decode_ltiqo(results[r_hm].theta_final)
    w1 = np.linspace(-hm["wmax"], hm["wmax"], int(hm["n1"]))
    w2 = np.linspace(0.0, hm["wmax"], int(hm["n2"]))
    pairs = np.array(np.meshgrid(w1, w2, indexing="ij")).reshape(2, -1).T
    _, kerr = model.error_sigmas(rom_hm, [], pairs)
    kerr = kerr.max(axis=1) if kerr.size else np.zeros(pairs.shape[0])
    _write_csv(outdir / "heatmap.csv", ["omega1", "omega2", "kerr_fro"],
               [[a, b, v] for (a, b), v in zip(pairs.tolist(), kerr.tolist())])
    w2c = np.concatenate([[0.0], np.logspace(-3, np.log10(hm["wmax"]), 400)])
    _, cross = model.error_sigmas(rom_hm, [], np.column_stack([np.zeros_like(w2c), w2c]))
    cross = cross.max(axis=1) if cross.size else np.zeros_like(w2c)
    _write_csv(outdir / "cross_section.csv", ["omega2", "kerr_fro"], np.column_stack([w2c, cross]).tolist())

    # time-domain errors against the frequency-domain bound
    td = dict({"r": None, "T": 100.0}, **spec.time_domain)
    r_td = td["r"] if td["r"] in results else r_list[-1]
    rom_td = decode_ltiqo(results[r_td].theta_final)
    est_td = hinf_estimate(build_error_system(fom, rom_td), SamplingConfig())
    td_rows, signals = [], {}
    for u in standard_inputs(fom.m, float(td["T"])):
        rep = check_gain_bound(fom, rom_td, u, float(td["T"]), None, est_td)
        td_rows.append([u.name, rep.u_norm, rep.lhs, rep.rhs, rep.ratio, int(rep.ok)])
        if figures:
            _, y = simulate(fom, u, float(td["T"]))
            _, yr = simulate(rom_td, u, float(td["T"]))
            signals[u.name] = (y, yr)
    _write_csv(outdir / "time_domain.csv", ["input", "l2_u", "l2_error", "bound", "ratio", "ok"], td_rows)

    meta = {"format": 1, "spec": spec.__dict__, "n": fom.n, "m": fom.m, "p": fom.p, "scheme": scheme.value,
            "heatmap_r": r_hm, "time_domain_r": r_td, "runs": meta_runs,
            "wall_time": time.perf_counter() - t_start}
    with open(outdir / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=float)

    if figures:
        from .plotting import render_all
        render_all(outdir, signals)
    return {"outdir": str(outdir), "sweep": sweep_rows, "results": results, "time_domain": td_rows}
