import csv
import json

import numpy as np
import pytest

from ltiqo.bench import ExperimentSpec, MsdParams, msd_ltiqo, msd_phqo, random_ltiqo, random_phqo, run_experiment
from ltiqo.errors import StructureError
from ltiqo.model import phqo_to_ltiqo, validate


def test_msd_dimensions_and_stability():
    ph = msd_phqo(50)
    assert (ph.n, ph.m) == (100, 2)
    sys = phqo_to_ltiqo(ph)
    assert validate(sys).stable
    assert np.max(np.linalg.eigvals(sys.A).real) < 0


def test_single_mass_characteristic_roots():
    mass, k, c = 2.0, 3.0, 0.5
    ph = msd_phqo(1, MsdParams(mass=mass, stiffness=k, damping=c, n_inputs=1))
    roots = np.roots([1.0, c / mass, k / mass])
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(ph.A)), np.sort_complex(roots), atol=1e-12)


@pytest.mark.parametrize("params", [MsdParams(), MsdParams(1.0, 10.0, 0.1), MsdParams(0.5, 0.2, 3.0, 1)])
def test_structure_by_construction(params):
    ph = msd_phqo(7, params)
    assert np.array_equal(ph.J, -ph.J.T)
    assert np.min(np.linalg.eigvalsh(ph.R)) >= 0
    assert np.min(np.linalg.eigvalsh(ph.Q)) > 0
    assert validate(phqo_to_ltiqo(ph)).stable


@pytest.mark.parametrize("bad", [dict(mass=0.0), dict(stiffness=-1.0), dict(damping=0.0), dict(n_inputs=0)])
def test_nonpositive_parameters_rejected(bad):
    with pytest.raises(StructureError):
        msd_phqo(3, MsdParams(**bad))


def test_ltiqo_variant():
    sys = msd_ltiqo(10)
    ph = msd_phqo(10)
    assert sys.p == 1
    assert not np.any(sys.C) and not np.any(sys.D) and not np.any(sys.P[0])
    np.testing.assert_array_equal(sys.M[0], ph.Q)
    assert np.min(np.linalg.eigvalsh(sys.M[0])) > 0
    via = phqo_to_ltiqo(ph)
    np.testing.assert_array_equal(sys.A, via.A)
    np.testing.assert_allclose(2.0 * via.M[-1], sys.M[0])


def test_random_generators(rng):
    sys = random_ltiqo(6, 2, 3, rng, quadratic="all")
    assert validate(sys).stable and all(np.any(M) for M in sys.M)
    assert validate(phqo_to_ltiqo(random_phqo(6, 2, rng))).stable


# ---------------------------------------------------------------- spec files

def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"system": {"generator": "msd_ltiqo", "n": 7}})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"system": {"generator": "msd_ltiqo", "n": 8}, "scheme": "ph"})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"system": {"generator": "msd_ltiqo", "n": 8}, "r_list": [8]})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"optimizer": {"nope": 1}})
    spec = ExperimentSpec.from_dict({"format": 1, "system": {"generator": "msd_phqo", "n": 8}, "scheme": "ph",
                                     "r_list": [2]})
    assert spec.build_fom().n == 8


def tiny_spec(tmp_path):
    return ExperimentSpec.from_dict({
        "system": {"generator": "msd_ltiqo", "n": 6, "params": {}},
        "scheme": "full", "r_list": [2, 1], "optimizer": {"max_outer": 6},
        "outputs": str(tmp_path / "out"),
        "heatmap": {"n1": 5, "n2": 3, "wmax": 10.0},
        "time_domain": {"T": 5.0},
    })


def test_run_experiment_artifacts(tmp_path):
    out = run_experiment(tiny_spec(tmp_path))
    d = tmp_path / "out"
    for name in ("sweep.csv", "heatmap.csv", "cross_section.csv", "time_domain.csv", "metadata.json",
                 "result_r1.json", "result_r2.json", "fig_sweep.png", "fig_heatmap.png",
                 "fig_cross_section.png", "fig_time_domain.png"):
        assert (d / name).is_file(), name
    rows = list(csv.DictReader(open(d / "sweep.csv")))
    assert [int(r["r"]) for r in rows] == [1, 2]
    for r in rows:
        assert float(r["hinf_total"]) >= float(r["max_sampled_sigma"]) * (1 - 1e-9)
    assert len(list(csv.DictReader(open(d / "heatmap.csv")))) == 5 * 3
    td = list(csv.DictReader(open(d / "time_domain.csv")))
    assert [r["input"] for r in td] == ["sin0.02", "sin4.1", "chirp"]
    meta = json.load(open(d / "metadata.json"))
    assert meta["n"] == 6 and len(meta["runs"]) == 2
    assert set(out["results"]) == {1, 2}


def test_run_experiment_without_figures(tmp_path):
    run_experiment(tiny_spec(tmp_path), figures=False)
    assert not list((tmp_path / "out").glob("*.png"))
