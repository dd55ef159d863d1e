import json

import pytest

from rfrlab.cli import main

BASE = {
    "version": 1,
    "schedule": {"roll_over": [0.25, 0.5, 1.0, 1.5], "expected_jumps": [0.5, 1.2], "horizon": 2.0},
    "params": {"rho0": 0.02, "beta": -0.3, "sigma": 0.01, "alpha": 0.005,
               "jumps": [{"date": 0.5, "mean": 0.001, "std": 0.005}, {"date": 1.2, "mean": -0.002, "std": 0.004}]},
    "instruments": {"bond": {"maturity": 2.0}, "caplet": {"start": 1.5, "end": 2.0, "strike": 0.02}},
    "simulation": {"n_paths": 20000, "seed": 3, "step": 0.25},
}

HEDGE = {
    "version": 1,
    "schedule": {"expected_jumps": [0.5, 0.8], "horizon": 1.5},
    "params": {"rho0": 0.02, "beta": -0.3, "sigma": 0.01, "alpha": 0.005,
               "jumps": [{"date": 0.5, "mean": 0.001, "std": 0.005}, {"date": 0.8, "mean": -0.002, "std": 0.004}]},
    "instruments": {"caplet": {"start": 1.0, "end": 1.5, "strike": 0.022}, "futures": {"start": 1.0, "end": 1.5}},
    "simulation": {"n_paths": 5000, "seed": 4, "step": 0.1},
}


def run(tmp_path, capsys, cfg, *argv):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    code = main([argv[0], "--config", str(path), *argv[1:]])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


def test_price_bond_cross_check(tmp_path, capsys):
    code, out, _ = run(tmp_path, capsys, BASE, "price", "--instrument", "bond", "--cross-check")
    assert code == 0 and out["passed"]
    pair = next(d for d in out["deviations"] if d["pair"] == ["analytic", "riccati"])
    assert pair["abs_deviation"] <= 1e-6 * out["cross_check"]["analytic"]["value"]


def test_price_caplet_mc(tmp_path, capsys):
    code, out, _ = run(tmp_path, capsys, BASE, "price", "--instrument", "caplet", "--method", "mc")
    assert code == 0 and out["method"] == "mc" and out["std_error"] > 0


def test_bond_at_zero(tmp_path, capsys):
    cfg = dict(BASE, instruments={"bond": {"maturity": 0.0}})
    for method in ("analytic", "riccati"):
        code, out, _ = run(tmp_path, capsys, cfg, "price", "--method", method)
        assert code == 0 and out["value"] == 1.0


def test_unsupported_combination(tmp_path, capsys):
    code, _, err = run(tmp_path, capsys, BASE, "price", "--instrument", "caplet", "--method", "riccati")
    assert code == 2 and err["error"]["type"] == "ConfigurationError"
    cfg = dict(BASE, instruments={"futures": {"start": 1.0, "end": 1.5}})
    code, _, err = run(tmp_path, capsys, cfg, "price", "--instrument", "futures")
    assert code == 2 and "roll-over" in err["error"]["message"]


def test_cross_check_failure_exits_nonzero(tmp_path, capsys):
    cfg = dict(BASE, riccati={"step": 0.5, "tolerance": 1e-14})
    code, out, err = run(tmp_path, capsys, cfg, "price", "--instrument", "bond", "--cross-check")
    assert code == 1 and not out["passed"] and err["error"]["type"] == "CheckFailed"


def test_riccati_verify(tmp_path, capsys):
    cfg = dict(BASE, riccati={"maturities": [0.5, 1.0, 2.0]})
    code, out, _ = run(tmp_path, capsys, cfg, "riccati-verify")
    assert code == 0 and out["max_rel_error"] < 1e-6 and len(out["results"]) == 3


@pytest.mark.parametrize("mutate,field", [
    (lambda c: c["simulation"].__setitem__("n_paths", 0), "simulation.n_paths"),
    (lambda c: c.__setitem__("colour", "red"), "colour"),
    (lambda c: c.__setitem__("version", 2), "version"),
    (lambda c: c["params"].__setitem__("sigma", -1.0), "params"),
])
def test_validation_reports_field_paths(tmp_path, capsys, mutate, field):
    cfg = json.loads(json.dumps(BASE))
    mutate(cfg)
    code, _, err = run(tmp_path, capsys, cfg, "price")
    assert code == 2
    assert any(d["loc"].startswith(field) for d in err["error"]["details"])


def test_jump_dates_must_match_schedule(tmp_path, capsys):
    cfg = json.loads(json.dumps(BASE))
    cfg["schedule"]["expected_jumps"] = [0.5]
    code, _, err = run(tmp_path, capsys, cfg, "price")
    assert code == 2 and "expected_jumps" in json.dumps(err)


def test_simulate_example_is_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        code = main(["simulate", "--example-4-4", "--seed", "7", "--out", str(tmp_path / name)])
        capsys.readouterr()
        assert code == 0
        outs.append((tmp_path / name / "paths.csv").read_bytes())
    assert outs[0] == outs[1]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["seed"] == 7 and summary["n_paths"] == 1
    assert [e["kind"] for e in summary["structure"]["events"]] == ["spike", "spike", "level_jump"]


def test_simulate_rejects_zero_paths(capsys):
    assert main(["simulate", "--example-4-4", "--paths", "0"]) == 2
    assert "n_paths" in capsys.readouterr().err


def test_simulate_config_needs_seed(tmp_path, capsys):
    cfg = json.loads(json.dumps(BASE))
    del cfg["simulation"]["seed"]
    code, _, err = run(tmp_path, capsys, cfg, "simulate", "--paths", "2")
    assert code == 2 and "seed" in err["error"]["message"]
    code, out, _ = run(tmp_path, capsys, cfg, "simulate", "--paths", "2", "--seed", "1")
    assert code == 0 and out["n_paths"] == 2


def test_hedge(tmp_path, capsys):
    cfg = dict(HEDGE, hedge={"refine_steps": [0.1, 0.05]})
    code, out, _ = run(tmp_path, capsys, cfg, "hedge", "--out", str(tmp_path / "h"))
    assert code == 0
    assert len(out["jump_diagnostics"]) == 2
    for d in out["jump_diagnostics"]:
        assert abs(d["E_dL"]) <= 3 * d["se"]
    conv = out["convergence"]
    assert conv[0]["total_cost_var"] > conv[1]["total_cost_var"]
    assert (tmp_path / "h" / "hedge.csv").exists()


def test_hedge_needs_futures(tmp_path, capsys):
    cfg = json.loads(json.dumps(HEDGE))
    del cfg["instruments"]["futures"]
    code, _, err = run(tmp_path, capsys, cfg, "hedge")
    assert code == 2 and "futures" in err["error"]["message"]


def test_calibrate(tmp_path, capsys):
    from rfrlab.model import HullWhiteParams
    from rfrlab.pricing import bond_price
    from rfrlab.schedule import PiecewiseConstant, Schedule

    truth = HullWhiteParams(0.02, -0.3, 0.01, PiecewiseConstant((1.0,), (0.004, 0.006)))
    pillars = [[T, bond_price(0.0, T, None, truth, Schedule())] for T in (1.0, 2.0)]
    cfg = {"version": 1, "params": {"rho0": 0.02, "beta": -0.3, "sigma": 0.01}, "curve": {"pillars": pillars}}
    code, out, _ = run(tmp_path, capsys, cfg, "calibrate")
    assert code == 0 and out["max_pillar_error"] <= 1e-10
    assert out["params"]["alpha"]["values"] == pytest.approx([0.004, 0.006], abs=1e-9)
    cfg["curve"]["pillars"] = [[2.0, 0.95], [1.0, 0.97]]
    code, _, err = run(tmp_path, capsys, cfg, "calibrate")
    assert code == 2 and err["error"]["details"][0]["loc"].startswith("curve.pillars")


def test_floats_have_17_digits(tmp_path, capsys):
    code, out, _ = run(tmp_path, capsys, BASE, "price", "--instrument", "bond")
    path = tmp_path / "cfg.json"
    main(["price", "--config", str(path), "--instrument", "bond"])
    raw = capsys.readouterr().out
    value = raw.split('"value": ')[1].split("\n")[0]
    assert len(value.replace("0.", "", 1).lstrip("0")) == 17
