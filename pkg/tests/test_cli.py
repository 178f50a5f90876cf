import csv
import json

import numpy as np
import pytest

from conftest import make_ltiqo
from ltiqo.cli import main
from ltiqo.io import dump_system, load_result, load_system
from ltiqo.model import LtiqoSystem
from ltiqo.objective import ErrorModel

FAST = ["--points-per-decade", "40", "--grid-quad", "40", "20"]


@pytest.fixture
def small_sys(tmp_path, rng):
    path = tmp_path / "fom.json"
    dump_system(make_ltiqo(rng, 4, 1, 1), path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_generate_msd(tmp_path, capsys):
    out = tmp_path / "msd.json"
    code, _ = run(capsys, "generate-msd", "--n", 10, "--out", out)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["format"] == 1 and doc["kind"] == "ltiqo" and doc["n"] == 10
    code, _ = run(capsys, "generate-msd", "--n", 10, "--kind", "phqo", "--out", out)
    assert code == 0 and json.loads(out.read_text())["kind"] == "phqo"
    assert run(capsys, "generate-msd", "--n", 7, "--out", out)[0] == 2


def test_reduce_missing_input(tmp_path, capsys):
    code, cap = run(capsys, "reduce", "--input", tmp_path / "nope.json", "--order", 2)
    assert code == 2 and "not found" in cap.err


def test_reduce_order_too_large(small_sys, capsys):
    code, cap = run(capsys, "reduce", "--input", small_sys, "--order", 4)
    assert code == 2 and "order" in cap.err


def test_reduce_writes_result_and_trace(small_sys, tmp_path, capsys):
    res, trace = tmp_path / "res.json", tmp_path / "trace.csv"
    code, cap = run(capsys, "reduce", "--input", small_sys, "--order", 2, "--seed", 4, "--max-outer", 5,
                    "--out", res, "--trace", trace)
    assert code in (0, 1)
    assert "certified gamma" in cap.out
    doc = load_result(res)
    rows = list(csv.DictReader(open(trace)))
    assert len(rows) == len(doc["trace"]) == 5
    # the error estimate of the stored ROM is at least the largest sampled error
    code, cap = run(capsys, "hinf", "--input", small_sys, "--rom", res, "--json", *FAST)
    est = json.loads(cap.out)
    fom = load_system(small_sys)
    s1, s2 = ErrorModel(fom).error_sigmas(doc["rom"], doc["freqs"].omega1, doc["freqs"].omega2)
    assert est["total"] >= max(s1.max(), s2.max()) * (1 - 1e-9)


def test_reduce_deterministic(small_sys, tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        run(capsys, "reduce", "--input", small_sys, "--order", 1, "--seed", 7, "--max-outer", 4, "--out", path)
        outs.append(load_result(path)["theta"].data)
    np.testing.assert_array_equal(*outs)


def test_reduce_config_file(small_sys, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_outer": 3, "mode": "sum", "inner": {"max_iter": 50}}))
    res = tmp_path / "res.json"
    code, _ = run(capsys, "reduce", "--input", small_sys, "--order", 1, "--config", cfg, "--out", res)
    doc = load_result(res)
    assert code == 1 and len(doc["trace"]) == 3 and doc["mode"] == "sum"
    cfg.write_text(json.dumps({"unknown_setting": 1}))
    assert run(capsys, "reduce", "--input", small_sys, "--order", 1, "--config", cfg)[0] == 2


def test_hinf_zero_system(tmp_path, capsys):
    path = tmp_path / "zero.json"
    dump_system(LtiqoSystem([[-1.0, 0.0], [0.0, -2.0]], [[1.0], [1.0]], M=[np.zeros((2, 2))], p=1), path)
    code, cap = run(capsys, "hinf", "--input", path, "--json", *FAST)
    assert code == 0 and json.loads(cap.out)["total"] == 0.0
    code, cap = run(capsys, "hinf", "--input", path, *FAST)
    assert "total" in cap.out


def test_hinf_self_cancellation(small_sys, capsys):
    code, cap = run(capsys, "hinf", "--input", small_sys, "--json", *FAST)
    norm = json.loads(cap.out)["total"]
    code, cap = run(capsys, "hinf", "--input", small_sys, "--rom", small_sys, "--json", *FAST)
    assert code == 0 and json.loads(cap.out)["total"] <= 1e-12 * norm


@pytest.mark.parametrize("kind", ["sin", "chirp"])
def test_simulate_builtin(small_sys, tmp_path, capsys, kind):
    out = tmp_path / "y.csv"
    code, cap = run(capsys, "simulate", "--input", small_sys, "--input-signal", kind, "--T", 5, "--out", out)
    assert code == 0 and "||y||_2" in cap.out
    assert out.read_text().startswith("t,y0")


def test_simulate_file_and_rom(small_sys, tmp_path, capsys):
    sig = tmp_path / "u.csv"
    t = np.linspace(0, 5, 51)
    np.savetxt(sig, np.column_stack([t, np.sin(t)]), delimiter=",", header="t,u0", comments="")
    code, cap = run(capsys, "simulate", "--input", small_sys, "--input-signal", "file", "--signal-file", sig,
                    "--T", 5, "--dt", 0.01, "--rom", small_sys)
    assert code == 0 and "ok" in cap.out
    assert run(capsys, "simulate", "--input", small_sys, "--input-signal", "file")[0] == 2


@pytest.mark.parametrize("scheme", ["full", "diagm", "ph"])
def test_grad_check(capsys, scheme):
    code, cap = run(capsys, "grad-check", "--scheme", scheme, "--order", 3, "--instances", 2)
    assert code == 0 and "pass" in cap.out
    code, _ = run(capsys, "grad-check", "--scheme", scheme, "--order", 3, "--instances", 1, "--tol", 1e-30)
    assert code == 1


def test_bench_dry_run_and_errors(tmp_path, capsys, monkeypatch):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"system": {"generator": "msd_ltiqo", "n": 6}, "r_list": [1]}))
    code, cap = run(capsys, "bench-msd", "--spec", spec, "--dry-run")
    assert code == 0 and "spec ok" in cap.out
    assert run(capsys, "bench-msd", "--spec", tmp_path / "missing.json")[0] == 2
    spec.write_text(json.dumps({"system": {"generator": "msd_ltiqo", "n": 5}}))
    assert run(capsys, "bench-msd", "--spec", spec, "--dry-run")[0] == 2
    monkeypatch.setenv("LTIQO_JOBS", "many")
    assert run(capsys, "bench-msd", "--spec", spec, "--dry-run")[0] == 2


def test_bench_run(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"system": {"generator": "msd_ltiqo", "n": 6}, "r_list": [2],
                                "heatmap": {"n1": 3, "n2": 3}, "time_domain": {"T": 2.0}}))
    code, cap = run(capsys, "bench-msd", "--spec", spec, "--out", tmp_path / "o", "--no-figures", "--jobs", 1)
    assert code == 0
    assert (tmp_path / "o" / "sweep.csv").is_file()
    assert not list((tmp_path / "o").glob("*.png"))
