"""Flat parameter vectors for reduced models and the structural linear maps.

Three encodings are supported:

``Scheme.FULL``
    ``[vec A, vec B, hvec M_0..M_{p-1}, vec C, vec D, hvec P_0..P_{p-1}]``
``Scheme.DIAGM``
    as ``FULL`` but every ``M_j`` is diagonal and stored by its diagonal.
``Scheme.PH``
    condensed port-Hamiltonian form ``[theta_J, theta_R, vec B]`` with
    ``J = vtsu(theta_J)^T - vtsu(theta_J)``, ``R = diag(theta_R)^2``, ``Q = I``.

``vec`` is column-major.  ``hvec`` stacks the lower triangle column by
column.  ``sutv`` reads the strict upper triangle column by column, i.e. in
the order (0,1), (0,2), (1,2), (0,3), ...  All structural maps are applied as
index operations; no dense Kronecker-type matrices are formed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import LayoutError, StructureError
from .model import LtiqoSystem, PhqoSystem, phqo_to_ltiqo

__all__ = [
    "Scheme",
    "ThetaLayout",
    "ThetaVector",
    "encode",
    "decode",
    "decode_ltiqo",
    "layout_for",
    "vec",
    "unvec",
    "hvec",
    "unhvec",
    "commutation_apply",
    "duplication_apply",
    "duplication_adjoint",
    "diag_embed_apply",
    "diag_embed_adjoint",
    "sutv_apply",
    "vtsu_apply",
    "vtsu_adjoint",
]


class Scheme(enum.Enum):
    FULL = "full"
    DIAGM = "diagm"
    PH = "ph"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise LayoutError(f"unknown scheme {value!r}; expected one of full, diagm, ph") from None


# ---------------------------------------------------------------- structural maps

def vec(X) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v)
    if v.size != rows * cols:
        raise LayoutError(f"vector of length {v.size} cannot be a {rows}x{cols} matrix")
    return v.reshape((rows, cols), order="F")


@lru_cache(maxsize=None)
def _lower_index(n: int):
    # column-major lower triangle: for each column j, rows j..n-1
    cols, rows = np.triu_indices(n)
    return rows, cols


@lru_cache(maxsize=None)
def _strict_upper_index(n: int):
    rows, cols = np.triu_indices(n, k=1)
    order = np.lexsort((rows, cols))
    return rows[order], cols[order]


def hvec(X) -> np.ndarray:
    """Half-vectorization of a symmetric matrix (column-major lower triangle)."""
    X = np.asarray(X)
    rows, cols = _lower_index(X.shape[0])
    return X[rows, cols]


def unhvec(h, n: int) -> np.ndarray:
    """Symmetric ``n x n`` matrix with ``hvec`` equal to ``h``."""
    h = np.asarray(h)
    if h.size != n * (n + 1) // 2:
        raise LayoutError(f"hvec of an {n}x{n} matrix has {n * (n + 1) // 2} entries, got {h.size}")
    rows, cols = _lower_index(n)
    X = np.zeros((n, n), dtype=h.dtype)
    X[rows, cols] = h
    X[cols, rows] = h
    return X


def commutation_apply(v, mdim: int, ndim: int) -> np.ndarray:
    """``vec(X^T)`` from ``vec(X)`` for an ``mdim x ndim`` matrix ``X``."""
    return vec(unvec(v, mdim, ndim).T)


def duplication_apply(h, n: int) -> np.ndarray:
    """``D_n h = vec(X)`` for the symmetric ``X`` with ``hvec(X) = h``."""
    return vec(unhvec(h, n))


def duplication_adjoint(v, n: int) -> np.ndarray:
    """``D_n^T v``: off-diagonal pairs of ``unvec(v)`` are summed."""
    X = unvec(v, n, n)
    return hvec(X + X.T - np.diag(np.diag(X)))


def diag_embed_apply(d, n: int) -> np.ndarray:
    """``C_n d = vec(diag(d))``."""
    d = np.asarray(d)
    if d.size != n:
        raise LayoutError(f"expected {n} diagonal entries, got {d.size}")
    return vec(np.diag(d))


def diag_embed_adjoint(v, n: int) -> np.ndarray:
    """``C_n^T v``: the diagonal of ``unvec(v)``."""
    return np.diag(unvec(v, n, n)).copy()


def sutv_apply(X) -> np.ndarray:
    """Strict upper triangle, column by column."""
    X = np.asarray(X)
    rows, cols = _strict_upper_index(X.shape[0])
    return X[rows, cols]


def vtsu_apply(x, n: int) -> np.ndarray:
    """Strictly upper triangular ``n x n`` matrix with ``sutv`` equal to ``x``."""
    x = np.asarray(x)
    if x.size != n * (n - 1) // 2:
        raise LayoutError(f"expected {n * (n - 1) // 2} strict-upper entries, got {x.size}")
    rows, cols = _strict_upper_index(n)
    X = np.zeros((n, n), dtype=x.dtype)
    X[rows, cols] = x
    return X


def vtsu_adjoint(Y) -> np.ndarray:
    """Adjoint of ``x -> vtsu(x)`` under the Frobenius inner product."""
    return sutv_apply(Y)


# ------------------------------------------------------------------- layouts

@dataclass(frozen=True)
class ThetaLayout:
    """Segment table of a parameter vector.

    ``segments`` maps a block name (``A``, ``B``, ``M0``, ..., ``J``, ``R``)
    to its slice in the flat vector, in storage order.
    """

    scheme: Scheme
    r: int
    m: int
    p: int
    segments: tuple

    @property
    def size(self) -> int:
        return self.segments[-1][1].stop if self.segments else 0

    def __getitem__(self, name: str) -> slice:
        for key, sl in self.segments:
            if key == name:
                return sl
        raise KeyError(name)

    def names(self) -> list[str]:
        return [key for key, _ in self.segments]

    def split(self, data) -> dict:
        data = np.asarray(data)
        return {key: data[sl] for key, sl in self.segments}


def layout_for(scheme, r: int, m: int, p: int | None = None) -> ThetaLayout:
    """Layout of a reduced model of order ``r`` with ``m`` inputs and ``p`` outputs.

    For ``Scheme.PH`` the output count is fixed to ``m + 1``.
    """
    scheme = Scheme.parse(scheme)
    if r < 1 or m < 1:
        raise LayoutError("r and m must be positive")
    sizes = []
    if scheme is Scheme.PH:
        if p is not None and p != m + 1:
            raise LayoutError(f"the pH scheme has p = m + 1 = {m + 1} outputs, got {p}")
        p = m + 1
        sizes = [("J", r * (r - 1) // 2), ("R", r), ("B", r * m)]
    else:
        if p is None or p < 1:
            raise LayoutError("p must be positive")
        m_len = r if scheme is Scheme.DIAGM else r * (r + 1) // 2
        sizes = [("A", r * r), ("B", r * m)]
        sizes += [(f"M{j}", m_len) for j in range(p)]
        sizes += [("C", p * r), ("D", p * m)]
        sizes += [(f"P{j}", m * (m + 1) // 2) for j in range(p)]
    segments, offset = [], 0
    for key, length in sizes:
        segments.append((key, slice(offset, offset + length)))
        offset += length
    return ThetaLayout(scheme, r, m, p, tuple(segments))


@dataclass(frozen=True, eq=False)
class ThetaVector:
    data: np.ndarray
    layout: ThetaLayout

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True).ravel()
        if data.size != self.layout.size:
            raise LayoutError(f"parameter vector has length {data.size}, layout expects {self.layout.size}")
        if not np.all(np.isfinite(data)):
            raise LayoutError("parameter vector contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def with_data(self, data) -> "ThetaVector":
        return ThetaVector(data, self.layout)

    def segment(self, name: str) -> np.ndarray:
        return self.data[self.layout[name]]

    @property
    def scheme(self) -> Scheme:
        return self.layout.scheme


# -------------------------------------------------------------- encode/decode

def encode(rom, scheme) -> ThetaVector:
    """Parameter vector of ``rom`` (an :class:`LtiqoSystem` or :class:`PhqoSystem`)."""
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.PH:
        if not isinstance(rom, PhqoSystem):
            raise StructureError("the pH scheme encodes PhqoSystem instances")
        if not np.array_equal(rom.Q, np.eye(rom.n)):
            raise StructureError("the pH scheme needs a condensed system with Q = I (see condense_ph)")
        if np.any(rom.R != np.diag(np.diag(rom.R))):
            raise StructureError("the pH scheme needs a diagonal R (see condense_ph)")
        layout = layout_for(scheme, rom.n, rom.m)
        # J = vtsu(t)^T - vtsu(t) puts -t above the diagonal
        data = np.concatenate([-rom.J_upper, np.sqrt(np.diag(rom.R)), vec(rom.B)])
        return ThetaVector(data, layout)

    if not isinstance(rom, LtiqoSystem):
        raise StructureError(f"the {scheme.value} scheme encodes LtiqoSystem instances")
    layout = layout_for(scheme, rom.n, rom.m, rom.p)
    if scheme is Scheme.DIAGM:
        for j, Mj in enumerate(rom.M):
            if np.any(Mj != np.diag(np.diag(Mj))):
                raise StructureError(f"the diagm scheme needs diagonal M matrices; M[{j}] is not")
        m_parts = [np.diag(Mj) for Mj in rom.M]
    else:
        m_parts = [hvec(Mj) for Mj in rom.M]
    data = np.concatenate([vec(rom.A), vec(rom.B), *m_parts, vec(rom.C), vec(rom.D),
                           *[hvec(Pj) for Pj in rom.P]])
    return ThetaVector(data, layout)


def _ph_matrices(theta: ThetaVector):
    lay = theta.layout
    U = vtsu_apply(theta.segment("J"), lay.r)
    J = U.T - U
    R = np.diag(theta.segment("R") ** 2)
    B = unvec(theta.segment("B"), lay.r, lay.m)
    return J, R, B


def decode(theta: ThetaVector):
    """Reduced model described by ``theta``.

    Returns a :class:`PhqoSystem` for the pH scheme, otherwise an
    :class:`LtiqoSystem`.
    """
    lay = theta.layout
    if lay.scheme is Scheme.PH:
        J, R, B = _ph_matrices(theta)
        rows, cols = _strict_upper_index(lay.r)
        return PhqoSystem(J[rows, cols], R, np.eye(lay.r), B)
    r, m, p = lay.r, lay.m, lay.p
    seg = lay.split(theta.data)
    if lay.scheme is Scheme.DIAGM:
        Ms = [np.diag(seg[f"M{j}"]) for j in range(p)]
    else:
        Ms = [unhvec(seg[f"M{j}"], r) for j in range(p)]
    return LtiqoSystem(unvec(seg["A"], r, r), unvec(seg["B"], r, m), unvec(seg["C"], p, r),
                       unvec(seg["D"], p, m), Ms, [unhvec(seg[f"P{j}"], m) for j in range(p)])


def decode_ltiqo(theta: ThetaVector) -> LtiqoSystem:
    """Reduced model as an LTIQO system for every scheme."""
    if theta.layout.scheme is Scheme.PH:
        lay = theta.layout
        J, R, B = _ph_matrices(theta)
        r, m = lay.r, lay.m
        C = np.zeros((m + 1, r))
        C[:m] = B.T
        M = [np.zeros((r, r)) for _ in range(m + 1)]
        M[m] = 0.5 * np.eye(r)
        return LtiqoSystem(J - R, B, C, np.zeros((m + 1, m)), M, [np.zeros((m, m)) for _ in range(m + 1)])
    return decode(theta)


def to_ltiqo(rom) -> LtiqoSystem:
    return phqo_to_ltiqo(rom) if isinstance(rom, PhqoSystem) else rom
