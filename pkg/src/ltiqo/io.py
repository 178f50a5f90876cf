"""JSON exchange format for systems and reduction results.

Every document carries ``"format": 1`` and a ``"kind"``:

``ltiqo``
    ``n, m, p, A, B, C, D`` (row-major nested lists), ``M`` and ``P`` (lists
    of ``p`` matrices).
``phqo``
    ``n, m, J_upper`` (strict upper triangle of ``J``, column by column),
    ``R, Q, B``.
``result``
    ``scheme, r, m, p, theta, gamma_certified, converged, mode, seed,
    freqs {omega1, omega2}, trace`` and the decoded ``rom`` document.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import DimensionError, LtiqoError
from .model import LtiqoSystem, PhqoSystem
from .objective import FrequencySets
from .param import Scheme, ThetaVector, decode, layout_for

__all__ = ["system_to_dict", "system_from_dict", "load_system", "dump_system",
           "result_to_dict", "load_result", "dump_result", "FORMAT"]

FORMAT = 1


class FormatError(LtiqoError):
    """A JSON document does not follow the exchange format."""


def _mat(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def system_to_dict(sys) -> dict:
    if isinstance(sys, PhqoSystem):
        return {"format": FORMAT, "kind": "phqo", "n": sys.n, "m": sys.m,
                "J_upper": _mat(sys.J_upper), "R": _mat(sys.R), "Q": _mat(sys.Q), "B": _mat(sys.B)}
    return {"format": FORMAT, "kind": "ltiqo", "n": sys.n, "m": sys.m, "p": sys.p,
            "A": _mat(sys.A), "B": _mat(sys.B), "C": _mat(sys.C), "D": _mat(sys.D),
            "M": [_mat(X) for X in sys.M], "P": [_mat(X) for X in sys.P]}


def _field(d, key):
    if key not in d:
        raise FormatError(f"missing field {key!r}")
    return d[key]


def _array(d, key, shape) -> np.ndarray:
    a = np.asarray(_field(d, key), dtype=float)
    if a.size == 0 and 0 in shape:
        return a.reshape(shape)
    if a.shape != shape:
        raise DimensionError(f"field {key!r} has shape {a.shape}, expected {shape}")
    return a


def system_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise FormatError(f"unsupported format {d.get('format')!r}; expected {FORMAT}")
    kind = d.get("kind", "ltiqo")
    n, m = int(_field(d, "n")), int(_field(d, "m"))
    if kind == "phqo":
        upper = np.asarray(_field(d, "J_upper"), dtype=float).ravel()
        return PhqoSystem(upper, _array(d, "R", (n, n)), _array(d, "Q", (n, n)), _array(d, "B", (n, m)))
    if kind != "ltiqo":
        raise FormatError(f"unknown system kind {kind!r}")
    p = int(_field(d, "p"))
    C = _array(d, "C", (p, n)) if "C" in d else None
    D = _array(d, "D", (p, m)) if "D" in d else None
    M = [np.asarray(X, dtype=float) for X in d["M"]] if "M" in d else None
    P = [np.asarray(X, dtype=float) for X in d["P"]] if "P" in d else None
    return LtiqoSystem(_array(d, "A", (n, n)), _array(d, "B", (n, m)), C, D, M, P, p=p)


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def load_system(path):
    """System stored at ``path``; a result document yields its reduced model."""
    d = _read_json(path)
    if d.get("kind") == "result":
        return system_from_dict(_field(d, "rom"))
    return system_from_dict(d)


def dump_system(sys, path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(sys), indent=1))


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def result_to_dict(res) -> dict:
    lay = res.theta_final.layout
    return {"format": FORMAT, "kind": "result", "scheme": lay.scheme.value, "r": lay.r, "m": lay.m,
            "p": lay.p, "theta": res.theta_final.data.tolist(),
            "gamma_certified": _finite_or_none(res.gamma_certified), "converged": bool(res.converged),
            "mode": res.mode, "seed": res.seed, "wall_time": res.wall_time,
            "freqs": res.freqs_final.to_dict(), "trace": res.trace,
            "rom": system_to_dict(decode(res.theta_final))}


def dump_result(res, path) -> None:
    Path(path).write_text(json.dumps(result_to_dict(res), indent=1, default=float))


def load_result(path) -> dict:
    """Result document with ``theta`` as :class:`ThetaVector`, ``freqs`` as :class:`FrequencySets`
    and ``rom`` as a system object."""
    d = _read_json(path)
    if d.get("format") != FORMAT or d.get("kind") != "result":
        raise FormatError(f"{path} is not a format-{FORMAT} result document")
    lay = layout_for(Scheme.parse(d["scheme"]), int(d["r"]), int(d["m"]), int(d["p"]))
    out = dict(d)
    out["theta"] = ThetaVector(d["theta"], lay)
    out["freqs"] = FrequencySets.from_dict(d["freqs"])
    out["rom"] = system_from_dict(d["rom"])
    if out.get("gamma_certified") is None:
        out["gamma_certified"] = math.inf
    return out
