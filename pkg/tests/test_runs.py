import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nullwave.errors import ConfigError, IoError
from nullwave.runs import KEYS, PRESETS, SCHEMA, RunConfig, config_reference, load_manifest, report, run, sweep


@pytest.fixture(scope="module")
def free_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    return run(RunConfig.from_preset("freewave"), out), out


@pytest.fixture(scope="module")
def john_run(free_run):
    return run(RunConfig.from_preset("john_blowup", grid__T=30.0), free_run[1])


def test_freewave_run(free_run):
    m, _ = free_run
    assert m.status == "completed"
    d = m.path.parent
    for f in ("energy.csv", "energy.json", "slices/slices.csv", "report.md", "config.txt"):
        assert (d / f).exists()
    assert d.name == RunConfig.from_preset("freewave").run_id()
    data = json.loads(m.path.read_text())
    assert data["diagnostics"]["lemma_checks"]["passed"]
    assert set(data["files"]) >= {"energy.csv", "report.md"}


def test_john_run(john_run):
    assert john_run.status == "blowup_detected"
    assert 0 < john_run["t_star"] < 30 and john_run["expectation_met"]


def test_missing_alpha():
    with pytest.raises(ConfigError) as e:
        RunConfig.parse("[problem]\nepsilon = 1e-3\n[grid]\nT = 10\nh = 0.1\n")
    assert e.value.key == "alpha"


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as e:
        RunConfig.parse("[run]\npreset = freewave\n[grid]\nhh = 0.1\n")
    assert e.value.key == "hh" and e.value.line == 4
    with pytest.raises(ConfigError):
        RunConfig.parse("[nope]\n")
    with pytest.raises(ConfigError):
        RunConfig.parse("[run]\npreset = nope\n")
    with pytest.raises(ConfigError):
        RunConfig.parse("[run]\npreset = freewave\n[problem]\nA = 1 2 3\n")


def test_dotted_keys_and_comments():
    c = RunConfig.parse("preset = freewave  # base\ngrid.h = 0.025\n[data]\nR0 = 1.5\n")
    assert c["grid.h"] == 0.025 and c["data.R0"] == 1.5 and c["grid.T"] == 50.0


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_round_trip(name):
    vals = {"problem__epsilon": 1e-3, "problem__alpha": 0.25, "grid__T": 10.0, "grid__h": 0.1} if name == "custom" else {}
    c = RunConfig.from_preset(name, **vals)
    back = RunConfig.parse(c.serialize())
    assert back.values == c.values and back.run_id() == c.run_id()


floats = st.floats(1e-6, 1e3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(name=st.sampled_from(sorted(PRESETS)), h=floats, eps=floats, p=st.lists(st.floats(0, 2), min_size=1, max_size=4),
       checks=st.booleans())
def test_round_trip_property(name, h, eps, p, checks):
    c = RunConfig.from_preset(name, grid__h=h, problem__epsilon=eps, problem__alpha=0.25, grid__T=10.0,
                              diagnostics__p_list=p, diagnostics__checks=checks)
    assert RunConfig.parse(c.serialize()).values == c.values


def test_config_reference_lists_all_keys():
    ref = config_reference()
    for k in SCHEMA:
        assert f"`{k.dotted}`" in ref


def test_deterministic_outputs(tmp_path):
    c = RunConfig.from_preset("nullform", grid__T=20.0, grid__h=0.05, diagnostics__fit_window=[2.0, 15.0])
    a = run(c, tmp_path / "a").path.parent
    b = run(c, tmp_path / "b").path.parent
    for f in ("energy.csv", "slices/slices.csv", "config.txt"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    ma, mb = json.loads((a / "manifest.json").read_text()), json.loads((b / "manifest.json").read_text())
    assert ma["field_sha256"] == mb["field_sha256"]


def test_sweep_empty():
    rep = sweep(RunConfig.from_preset("freewave"), "h", [])
    assert rep.runs == [] and rep.comparisons == {}


def test_sweep_h_orders(tmp_path):
    base = RunConfig.from_preset("freewave", grid__T=14.0, grid__margin=2.0, diagnostics__checks=True)
    rep = sweep(base, "h", [0.04, 0.02, 0.01], tmp_path, workers=3)
    assert all(r["ok"] for r in rep.runs)
    for name in ("energy_T", "energy_morawetz"):
        o = rep.comparisons[f"order_{name}"]["pairwise"]
        assert all(1.8 <= x <= 2.2 for x in o), (name, o)


def test_sweep_isolates_errors(tmp_path):
    base = RunConfig.from_preset("freewave", grid__T=6.0, grid__margin=2.0)
    rep = sweep(base, "h", [0.1, 0.03], tmp_path, workers=1)
    assert rep.runs[0]["ok"] and not rep.runs[1]["ok"]


def test_sweep_epsilon(tmp_path):
    base = RunConfig.from_preset("nullform", grid__T=60.0, grid__h=0.04, diagnostics__fit_window=[10.0, 50.0])
    rep = sweep(base, "epsilon", [1e-3, 5e-4], tmp_path, workers=2)
    ratio = rep.comparisons["epsilon_scaling"]["E_ratio"]
    assert 3.4 <= ratio <= 4.6


def test_report_single_free(free_run, tmp_path):
    m, _ = free_run
    path, failures = report([m.path], tmp_path)
    text = path.read_text()
    assert "conservation residual" in text and "after the pulse leaves" in text
    assert failures == []
    assert (tmp_path / "decay.csv").exists() and (tmp_path / "identities.csv").exists()


def test_report_contrast(free_run, john_run, tmp_path):
    null = run(RunConfig.from_preset("nullform", grid__T=30.0, grid__h=0.05, diagnostics__fit_window=[5.0, 25.0]),
               free_run[1])
    path, _ = report([null.path, john_run.path], tmp_path)
    text = path.read_text()
    assert "Global existence vs blowup" in text and "blowup_detected" in text


def test_report_stale_and_missing(free_run, tmp_path):
    import shutil
    src = free_run[0].path.parent
    d = tmp_path / "copy"
    shutil.copytree(src, d)
    (d / "energy.csv").write_text("tau,E\n0,1\n")
    with pytest.raises(IoError) as e:
        load_manifest(d)
    assert "energy.csv" in str(e.value)
    (d / "energy.csv").unlink()
    with pytest.raises(IoError) as e:
        report([d])
    assert "energy.csv" in str(e.value)
    with pytest.raises(IoError):
        report([tmp_path / "nothing"])
