import numpy as np
import pytest

from ltiqo.model import LtiqoSystem, PhqoSystem


def stable_matrix(rng, n, margin=0.5):
    S = rng.standard_normal((n, n))
    return S - (max(np.linalg.eigvals(S).real) + margin) * np.eye(n)


def sym(rng, n):
    X = rng.standard_normal((n, n))
    return X + X.T


def make_ltiqo(rng, n, m, p, quad=(-1,)):
    quad = {q % p for q in quad}
    M = [sym(rng, n) if j in quad else np.zeros((n, n)) for j in range(p)]
    P = [sym(rng, m) if j in quad else np.zeros((m, m)) for j in range(p)]
    return LtiqoSystem(stable_matrix(rng, n), rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                       rng.standard_normal((p, m)), M, P)


def make_phqo(rng, n, m):
    X, Y, Z = (rng.standard_normal((n, n)) for _ in range(3))
    return PhqoSystem.from_matrices(X - X.T, Y @ Y.T / n + 0.1 * np.eye(n), Z @ Z.T / n + np.eye(n),
                                    rng.standard_normal((n, m)))


def rom_for(rng, scheme, r, m, p):
    """Random stable ROM encoded in ``scheme``; matches a FOM with p outputs (p = m + 1 for pH)."""
    from ltiqo.model import condense_ph
    from ltiqo.param import encode

    if scheme == "ph":
        return encode(condense_ph(make_phqo(rng, r, m)), "ph")
    rom = make_ltiqo(rng, r, m, p)
    if scheme == "diagm":
        rom = LtiqoSystem(rom.A, rom.B, rom.C, rom.D, [np.diag(np.diag(X)) for X in rom.M], rom.P)
    return encode(rom, scheme)


def grad_instance(rng, scheme, r, m, extra=3):
    """(fom, theta) pair with FOM order r + extra and one quadratic output."""
    from ltiqo.model import phqo_to_ltiqo

    if scheme == "ph":
        fom = phqo_to_ltiqo(make_phqo(rng, r + extra, m))
    else:
        fom = make_ltiqo(rng, r + extra, m, 2)
    return fom, rom_for(rng, scheme, r, m, fom.p)


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance summary lines, filled by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
