import json

import numpy as np
import pandas as pd
import pytest

from ep_spectra.cli import EXIT_INPUT, EXIT_OK, EXIT_SEARCH, main

REAL_SWEEP = {
    "kind": "two_level",
    "parameters": {"eps2": [0, 0], "omega": [0.1, 0]},
    "sweep": {
        "path": [
            {"parameter": "eps1", "coefficients": [[1, 0]]},
            {"parameter": "eps2", "coefficients": [[-1, 0]]},
        ],
        "grid": {"start": -1, "stop": 1, "count": 21},
    },
}

PT_SWEEP = {
    "kind": "pt_dimer",
    "parameters": {"b": [1, 0]},
    "sweep": {
        "path": [{"parameter": "gamma", "coefficients": [[1, 0]]}],
        "grid": {"start": 0, "stop": 4, "count": 40},
    },
}

EP_PLANE = {
    "kind": "two_level",
    "parameters": {"omega": [0.5, 0]},
    "sweep": {
        "variables": ["X", "Y"],
        "path": [{"parameter": "eps1", "coefficients": [[1, 0], [0, -1]]}],
    },
}

TRAP = {
    "kind": "n_level",
    "parameters": {"n": 10, "k": 1},
    "seed": 11,
    "sweep": {
        "path": [{"parameter": "alpha", "coefficients": [[1, 0]]}],
        "grid": {"start": 0.01, "stop": 100, "count": 61, "scale": "log"},
    },
}

MIRROR = {
    "kind": "n_level",
    "parameters": {"h_b": [[0, 0.5], [0.5, 0]], "v": [[0.5], [0.5]]},
    "symmetry": [1, 0],
    "sweep": {
        "path": [{"parameter": "alpha", "coefficients": [[1, 0]]}],
        "grid": {"start": 0.01, "stop": 10, "count": 16, "scale": "log"},
    },
}


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("EP_SPECTRA_LOG_LEVEL", "EP_SPECTRA_MAX_WORKERS", "EP_SPECTRA_ENCIRCLE_STEPS"):
        monkeypatch.delenv(name, raising=False)


def _run(command, instance, out, *extra):
    return main([command, "--instance", instance, "--out", str(out), *extra])


def test_real_sweep_is_fully_rigid(write_instance, tmp_path):
    out = tmp_path / "real.csv"
    assert _run("sweep", write_instance(REAL_SWEEP), out, "--no-timestamp") == EXIT_OK
    frame = pd.read_csv(out)
    assert len(frame) == 21
    np.testing.assert_allclose(frame[["r_0", "r_1"]].to_numpy(), 1.0, atol=1e-12)
    np.testing.assert_allclose(frame[["im_z_0", "im_z_1"]].to_numpy(), 0.0, atol=1e-12)


def test_pt_sweep_columns(write_instance, tmp_path):
    out = tmp_path / "pt.csv"
    assert _run("sweep", write_instance(PT_SWEEP), out) == EXIT_OK
    frame = pd.read_csv(out)
    imag = frame[["im_z_0", "im_z_1"]].abs().max(axis=1).to_numpy()
    below = frame["x"].to_numpy() < 2
    assert np.all(imag[below] <= 1e-8)
    assert np.all(imag[~below] > 1e-3)


def test_sweep_is_deterministic_without_timestamp(write_instance, tmp_path):
    instance = write_instance(PT_SWEEP)
    for suffix in ("csv", "json"):
        first, second = tmp_path / f"a.{suffix}", tmp_path / f"b.{suffix}"
        assert _run("sweep", instance, first, "--no-timestamp") == EXIT_OK
        assert _run("sweep", instance, second, "--no-timestamp") == EXIT_OK
        assert first.read_bytes() == second.read_bytes()


def test_json_sweep_records_metadata(write_instance, tmp_path):
    out = tmp_path / "sweep.json"
    assert _run("sweep", write_instance(REAL_SWEEP), out, "--seed", "5") == EXIT_OK
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["metadata"]["seed"] == 5
    assert payload["metadata"]["kind"] == "two_level"
    assert payload["metadata"]["timestamp"] is not None
    assert len(payload["metadata"]["instance_hash"]) == 64
    assert len(payload["avoided_crossings"]) == 1


def test_sweep_with_plot(write_instance, tmp_path):
    plot = tmp_path / "trajectory.svg"
    out = tmp_path / "sweep.csv"
    assert _run("sweep", write_instance(REAL_SWEEP), out, "--plot", str(plot)) == EXIT_OK
    assert plot.read_bytes().startswith(b"<?xml")


@pytest.mark.parametrize(
    "content",
    [
        '{"kind": "two_level", "sweep": ',
        '{"kind": "two_level", "sweep": {"path": []}}',
        '{"kind": "pt_dimer", "parameters": {"gamma": -1}, "sweep": {"path": [{"parameter": "b", "coefficients": [[1, 0]]}]}}',
    ],
)
def test_malformed_instance_writes_nothing(write_instance, tmp_path, content, capsys):
    out = tmp_path / "out.csv"
    assert _run("sweep", write_instance(content), out) == EXIT_INPUT
    assert not out.exists()
    assert "input error" in capsys.readouterr().err


def test_sweep_needs_a_grid_and_one_variable(write_instance, tmp_path):
    out = tmp_path / "out.csv"
    assert _run("sweep", write_instance(EP_PLANE), out) == EXIT_INPUT
    assert not out.exists()


def test_ep_find(write_instance, tmp_path):
    out = tmp_path / "ep.json"
    code = _run("ep-find", write_instance(EP_PLANE), out, "--guess", "0.3", "0.7", "--no-timestamp")
    assert code == EXIT_OK
    payload = json.loads(out.read_text(encoding="utf-8"))
    np.testing.assert_allclose(payload["location"], [0.0, 1.0], atol=1e-8)
    assert payload["residual"] <= 1e-10
    assert payload["rigidity_at_offset"] < 1e-2


def test_ep_find_failure_records_best_point(write_instance, tmp_path, capsys):
    document = json.loads(json.dumps(EP_PLANE))
    document["sweep"]["path"][0]["coefficients"] = [[1, 0], [0, 0]]
    out = tmp_path / "ep.json"
    code = _run("ep-find", write_instance(document), out, "--guess", "0.5", "0")
    assert code == EXIT_SEARCH
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["residual"] >= 0.99
    assert "error" in payload
    assert "EP search failed" in capsys.readouterr().err


def test_ep_find_needs_two_variables(write_instance, tmp_path):
    out = tmp_path / "ep.json"
    assert _run("ep-find", write_instance(REAL_SWEEP), out, "--guess", "0", "1") == EXIT_INPUT


def test_trap(write_instance, tmp_path, capsys):
    out = tmp_path / "trap.json"
    assert _run("trap", write_instance(TRAP), out, "--no-timestamp") == EXIT_OK
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["metadata"]["seed"] == 11
    assert payload["report"]["broad_count"] == 1
    assert "broad_count=1" in capsys.readouterr().out

    widths = pd.read_csv(tmp_path / "trap.widths.csv")
    assert list(widths.columns) == ["alpha"] + [f"gamma_{lam}" for lam in range(10)]
    assert len(widths) == 61


def test_trap_seed_override(write_instance, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    instance = write_instance(TRAP)
    assert _run("trap", instance, first, "--no-timestamp", "--seed", "12") == EXIT_OK
    assert _run("trap", instance, second, "--no-timestamp") == EXIT_OK
    one = json.loads(first.read_text(encoding="utf-8"))
    other = json.loads(second.read_text(encoding="utf-8"))
    assert one["metadata"]["seed"] == 12
    assert one["report"]["widths"] != other["report"]["widths"]


def test_trap_reports_symmetry_protected_bic(write_instance, tmp_path):
    out = tmp_path / "mirror.json"
    assert _run("trap", write_instance(MIRROR), out) == EXIT_OK
    bics = json.loads(out.read_text(encoding="utf-8"))["bics"]
    certified = [b for b in bics if b["certified"]]
    assert len(certified) == 16
    assert all(b["width"] == 0.0 for b in certified)


def test_trap_rejects_other_kinds(write_instance, tmp_path):
    assert _run("trap", write_instance(PT_SWEEP), tmp_path / "t.json") == EXIT_INPUT


def test_encircle(write_instance, tmp_path, capsys):
    out = tmp_path / "loop.json"
    code = _run(
        "encircle",
        write_instance(EP_PLANE),
        out,
        "--center", "0", "1",
        "--radius", "0.3",
        "--loops", "2",
        "--steps", "128",
    )
    assert code == EXIT_OK
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["permutation"] == [0, 1]
    assert payload["per_loop"]["1"]["permutation"] == [1, 0]
    np.testing.assert_allclose(payload["overlaps"], [[-1, 0], [-1, 0]], atol=1e-6)
    assert "permutation=[0, 1]" in capsys.readouterr().out


def test_encircle_through_ep_is_a_search_failure(write_instance, tmp_path):
    out = tmp_path / "loop.json"
    code = _run(
        "encircle",
        write_instance(EP_PLANE),
        out,
        "--center", "0", "1.05",
        "--radius", "0.05",
        "--steps", "64",
    )
    assert code == EXIT_SEARCH
    assert not out.exists()


def test_unwritable_output_is_an_input_error(write_instance, tmp_path, capsys):
    out = tmp_path / "missing" / "out.csv"
    assert _run("sweep", write_instance(REAL_SWEEP), out) == EXIT_INPUT
    assert not out.exists()
    assert "output error" in capsys.readouterr().err


def test_bad_environment_is_an_input_error(write_instance, tmp_path, monkeypatch):
    monkeypatch.setenv("EP_SPECTRA_MAX_WORKERS", "0")
    assert _run("sweep", write_instance(REAL_SWEEP), tmp_path / "x.csv") == EXIT_INPUT
