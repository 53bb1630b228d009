import copy
import json

import numpy as np
import pytest

from transport_spde.errors import ConfigError, PathParseError
from transport_spde.experiments import (
    DICTIONARY_SIZE, ExperimentConfig, build_path, build_problem, dictionary, run, thread_count,
)
from transport_spde.field import Geometry
from transport_spde.noise import wong_zakai
from transport_spde.solver import solve_spde

BASE = {
    "kind": "wong_zakai",
    "name": "small",
    "problem": {
        "geometry": {"kind": "torus1d", "N": 16},
        "form": "gradient_type",
        "j": {"kind": "quadratic", "c": 0.05},
        "transport": [{"kind": "constant1d", "a0": 0.5}],
        "initial": [{"amplitude": 1.0, "k": [1], "shape": "sin"}, {"amplitude": 0.5, "k": [2], "shape": "cos"}],
        "T": 0.5,
    },
    "noise": {"kind": "brownian", "seed": 3, "M": 64, "levels": [4, 16]},
    "solver": {"K": 64, "certificate": False},
    "output": "out",
}


def cfg_from(mutate=None, tmp=None):
    d = copy.deepcopy(BASE)
    if mutate:
        mutate(d)
    return ExperimentConfig.from_dict(d, str(tmp) if tmp else ".")


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(colour="red"),
    lambda d: d["noise"].update(levels=[16, 4]),
    lambda d: d["noise"].update(levels=[4, 128]),
    lambda d: d.update(kind="homogenization"),
    lambda d: d["solver"].update(tolerance=1e-3),
    lambda d: d["problem"].update(j={"kind": "cubic"}),
    lambda d: d["problem"]["geometry"].update(kind="interval_dirichlet"),
    lambda d: d["noise"].update(kind="table"),
    lambda d: d.update(stability={"members": [8, 2]}),
], ids=["unknown-key", "levels-order", "K-below-level", "kind", "solver-key", "potential", "transport-on-interval",
        "wz-needs-brownian", "members-order"])
def test_invalid_configs_rejected(mutate):
    with pytest.raises(ConfigError):
        cfg_from(mutate)


def test_config_roundtrip():
    cfg = cfg_from()
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_thread_count(monkeypatch):
    monkeypatch.delenv("SPDE_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("SPDE_THREADS", "3")
    assert thread_count() == 3
    for bad in ("zero", "0"):
        monkeypatch.setenv("SPDE_THREADS", bad)
        with pytest.raises(ConfigError):
            thread_count()


@pytest.mark.parametrize("geo", [
    {"kind": "torus1d", "N": 16}, {"kind": "interval_dirichlet", "N": 16}, {"kind": "interval_neumann", "N": 16},
    {"kind": "rect2d", "Nx": 8, "Ny": 8}, {"kind": "rect2d", "Nx": 8, "Ny": 8, "boundary": "neumann"},
])
def test_dictionary_is_independent(geo):
    g = Geometry.from_config(geo)
    chi = dictionary(g)
    assert chi.shape == (DICTIONARY_SIZE, g.free.size)
    assert np.linalg.matrix_rank(chi) == DICTIONARY_SIZE


def test_wong_zakai_report_shape_and_files(tmp_path):
    cfg = cfg_from(tmp=tmp_path)
    rep = run(cfg)
    assert [r["label"] for r in rep.rows] == ["n=4", "n=16"]
    assert all(len(r["weak"]) == DICTIONARY_SIZE for r in rep.rows)
    assert set(rep.gates) >= {f"weak_{m}_nonincreasing" for m in range(1, 9)} | {"strong_reduction"}
    out = tmp_path / "out"
    for name in ("metrics.json", "report.json", "levels.csv", "gates.csv"):
        assert (out / name).exists()
    metrics = json.loads((out / "metrics.json").read_text())
    assert "timing" not in metrics and metrics["passed"] == rep.passed
    assert "timing" in json.loads((out / "report.json").read_text())


def test_metrics_are_byte_identical_across_reruns_and_thread_counts(tmp_path, monkeypatch):
    texts = []
    for i, threads in enumerate(("1", "1", "3")):
        monkeypatch.setenv("SPDE_THREADS", threads)
        where = tmp_path / f"run{i}"
        where.mkdir()
        run(cfg_from(tmp=where))
        texts.append((where / "out" / "metrics.json").read_bytes())
    assert texts[0] == texts[1] == texts[2]


def test_two_channels_with_zero_second_field_match_one_channel():
    one = run(cfg_from(), write=False)
    two = run(cfg_from(lambda d: d["problem"]["transport"].append({"kind": "zero"})), write=False)
    for a, b in zip(one.rows, two.rows):
        assert abs(a["strong"] - b["strong"]) <= 1e-10
        assert np.max(np.abs(np.subtract(a["weak"], b["weak"]))) <= 1e-10


def test_zero_transport_levels_coincide():
    rep = run(cfg_from(lambda d: d["problem"].update(transport=[{"kind": "zero"}])), write=False)
    assert max(r["strong"] for r in rep.rows) <= 1e-9


def test_full_resolution_level_reproduces_reference():
    cfg = cfg_from(lambda d: d["noise"].update(levels=[4, 64]))
    path = build_path(cfg)
    ref = solve_spde(build_problem(cfg), path, 64)
    fine = solve_spde(build_problem(cfg), wong_zakai(path, 64), 64)
    assert np.max(np.abs(ref.X - fine.X)) <= 1e-9


def _linear_table(tmp_path, rows=65, T=0.5):
    t = np.linspace(0.0, T, rows)
    (tmp_path / "beta.csv").write_text("t,beta1\n" + "".join(f"{float(a)!r},{float(a)!r}\n" for a in t))


def test_deterministic_smooth_path_matches_its_approximants(tmp_path):
    _linear_table(tmp_path)
    cfg = cfg_from(lambda d: d.update(kind="deterministic_path") or d["noise"].update(kind="table", file="beta.csv"),
                   tmp_path)
    rep = run(cfg, write=False)
    assert rep.passed
    assert max(r["strong"] for r in rep.rows) <= 1e-6


def test_deterministic_path_errors(tmp_path):
    (tmp_path / "empty.csv").write_text("")
    cfg = cfg_from(lambda d: d.update(kind="deterministic_path") or d["noise"].update(kind="table", file="empty.csv"),
                   tmp_path)
    with pytest.raises(PathParseError):
        run(cfg, write=False)
    _linear_table(tmp_path, T=1.0)
    cfg = cfg_from(lambda d: d.update(kind="deterministic_path") or d["noise"].update(kind="table", file="beta.csv"),
                   tmp_path)
    with pytest.raises(ConfigError):
        run(cfg, write=False)


def test_stability_report_contains_conjugate_samples():
    def mutate(d):
        d.update(kind="stability")
        d["problem"]["j"] = {"kind": "power", "p": 4, "a": 0.25}
        d["stability"] = {"family": "quadratic", "members": [2, 8, 32], "coefficient": 0.05}
    rep = run(cfg_from(mutate), write=False)
    conj = rep.extra["conjugates"]
    assert [c["member"] for c in conj] == [2, 8, 32]
    errs = [c["max_error"] for c in conj]
    assert errs[0] > errs[1] > errs[2]
    assert "conjugate_samples_converge" in rep.gates


@pytest.mark.parametrize("family", ["exponent", "forcing", "transport"])
def test_other_families_run(family):
    def mutate(d):
        d.update(kind="stability")
        d["problem"]["j"] = {"kind": "power", "p": 3, "a": 0.25}
        d["stability"] = {"family": family, "members": [2, 8]}
        d["solver"]["K"] = 32
        d["noise"]["levels"] = []
    rep = run(cfg_from(mutate), write=False)
    assert len(rep.rows) == 2


def test_example_driver_reports_regularity_and_certificate():
    def mutate(d):
        d.update(kind="diffusion")
        d["solver"].update(K=32, certificate=True, interpolation="exponential")
        d["noise"]["levels"] = []
    rep = run(cfg_from(mutate), write=False)
    assert rep.gates["regularity_bounded"]
    assert rep.certificate is not None and rep.certificate["nonnegative"]
    assert rep.extra["regularity"]["sup_norm"] <= rep.extra["regularity"]["energy_bound"] * 1.01


def test_solver_failure_produces_failed_report():
    rep = run(cfg_from(lambda d: d["solver"].update(max_newton=1, tol=1e-30)), write=False)
    assert not rep.passed
    assert rep.gates == {"all_solves_completed": False}
    assert rep.notes
