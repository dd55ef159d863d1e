"""Command-line front end: ``rfrlab {simulate,price,hedge,calibrate,riccati-verify}``.

Scenarios are single JSON documents validated against a versioned schema;
unknown fields are rejected. Results go to stdout as JSON, files go to
``--out``. Failures print an error JSON on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import hedging, montecarlo
from .errors import ConfigurationError, RfrError
from .jsonio import dumps
from .model import HullWhiteParams, JumpSpec, as_factors
from .pricing import CapletSpec, DiscountCurve, bond_price, caplet_price, fit_drift_to_curve, futures_rate
from .riccati import build_gaussian_hw_spec, transform
from .schedule import PiecewiseConstant, Schedule

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


# -- configuration schema -------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class JumpConfig(_Strict):
    date: float = Field(ge=0)
    mean: float = 0.0
    std: float = Field(0.0, ge=0)


class AlphaConfig(_Strict):
    breakpoints: list[float] = []
    values: list[float]


class FactorConfig(_Strict):
    rho0: float = 0.0
    beta: float = 0.0
    sigma: float = Field(0.0, ge=0)
    alpha: Union[float, AlphaConfig] = 0.0
    jumps: list[JumpConfig] = []

    def build(self) -> HullWhiteParams:
        alpha = self.alpha
        if isinstance(alpha, AlphaConfig):
            alpha = PiecewiseConstant(tuple(alpha.breakpoints), tuple(alpha.values))
        return HullWhiteParams(self.rho0, self.beta, self.sigma, alpha,
                               tuple(JumpSpec(j.date, j.mean, j.std) for j in self.jumps))


class ScheduleConfig(_Strict):
    roll_over: list[float] = []
    expected_jumps: list[float] = []
    horizon: Optional[float] = None


class CurveConfig(_Strict):
    pillars: list[tuple[float, float]] = Field(min_length=1)

    @field_validator("pillars")
    @classmethod
    def _increasing(cls, pillars):
        for (a, _), (b, _) in zip(pillars, pillars[1:]):
            if not b > a:
                raise ValueError("pillar maturities must be strictly increasing")
        for _, df in pillars:
            if not df > 0:
                raise ValueError("discount factors must be positive")
        return pillars


class BondConfig(_Strict):
    maturity: float = Field(ge=0)


class CapletConfig(_Strict):
    start: float = Field(ge=0)
    end: float
    strike: float


class FuturesConfig(_Strict):
    start: float = Field(ge=0)
    end: float
    h: float = 0.0


class InstrumentsConfig(_Strict):
    bond: Optional[BondConfig] = None
    caplet: Optional[CapletConfig] = None
    futures: Optional[FuturesConfig] = None


class SimulationConfig(_Strict):
    n_paths: int = Field(10_000, ge=1)
    seed: Optional[int] = None
    step: Optional[float] = Field(None, gt=0)
    scheme: Literal["exact", "euler"] = "exact"
    n_workers: int = Field(1, ge=1)


class HedgeConfig(_Strict):
    rebalance_grid: Optional[list[float]] = None
    gh_nodes: int = Field(64, ge=2)
    refine_steps: list[float] = []


class RiccatiConfig(_Strict):
    step: float = Field(1e-3, gt=0)
    maturities: list[float] = []
    tolerance: float = Field(1e-6, gt=0)


class ScenarioConfig(_Strict):
    version: Literal[1]
    schedule: ScheduleConfig = ScheduleConfig()
    params: Union[FactorConfig, list[FactorConfig]]
    curve: Optional[CurveConfig] = None
    instruments: InstrumentsConfig = InstrumentsConfig()
    simulation: SimulationConfig = SimulationConfig()
    hedge: HedgeConfig = HedgeConfig()
    riccati: RiccatiConfig = RiccatiConfig()
    mc_tolerance_se: float = Field(3.0, gt=0)

    @model_validator(mode="after")
    def _consistent(self):
        factors = self.params if isinstance(self.params, list) else [self.params]
        if not factors:
            raise ValueError("params must contain at least one factor")
        dates = [j.date for f in factors for j in f.jumps]
        expected = set(self.schedule.expected_jumps)
        if set(dates) != expected:
            raise ValueError("factor jump dates must match schedule.expected_jumps")
        horizon = self.schedule_obj().horizon
        inst = self.instruments
        ends = []
        if inst.bond:
            ends.append(inst.bond.maturity)
        for spec in (inst.caplet, inst.futures):
            if spec is not None:
                if not spec.end > spec.start:
                    raise ValueError("instrument end must exceed start")
                ends.append(spec.end)
        if any(e > horizon for e in ends):
            raise ValueError(f"instrument dates exceed the schedule horizon {horizon}")
        return self

    def schedule_obj(self) -> Schedule:
        s = self.schedule
        return Schedule(tuple(s.roll_over), tuple(s.expected_jumps), s.horizon)

    def params_obj(self):
        if isinstance(self.params, list):
            built = tuple(f.build() for f in self.params)
            return built[0] if len(built) == 1 else built
        return self.params.build()

    def instrument_times(self) -> list[float]:
        inst = self.instruments
        out = []
        if inst.bond:
            out.append(inst.bond.maturity)
        for spec in (inst.caplet, inst.futures):
            if spec is not None:
                out += [spec.start, spec.end]
        return out


def load_config(path: str) -> ScenarioConfig:
    text = Path(path).read_text()
    return ScenarioConfig.model_validate_json(text)


# -- helpers ------------------------------------------------------------------------


class CheckFailed(Exception):
    """A cross-check exceeded its tolerance; carries the result record."""

    def __init__(self, record: dict):
        super().__init__("cross-check deviation beyond tolerance")
        self.record = record


def _seed(cfg: ScenarioConfig | None, args) -> int:
    seed = args.seed if args.seed is not None else (cfg.simulation.seed if cfg else None)
    if seed is None:
        raise ConfigurationError("a seed is required for simulation (config simulation.seed or --seed)")
    return int(seed)


def _n_paths(cfg: ScenarioConfig | None, args, default: int = 10_000) -> int:
    n = args.paths if args.paths is not None else (cfg.simulation.n_paths if cfg else default)
    if n < 1:
        raise ConfigurationError("n_paths must be at least 1")
    return int(n)


def _simulate_cfg(cfg: ScenarioConfig, args, horizon: float | None = None, retain: bool = False,
                  step: float | None = None):
    schedule = cfg.schedule_obj()
    grid = montecarlo.build_grid(schedule, horizon=horizon, step=step or cfg.simulation.step,
                                 times=cfg.instrument_times())
    return montecarlo.simulate(
        cfg.params_obj(), schedule, grid, n_paths=_n_paths(cfg, args), seed=_seed(cfg, args),
        scheme=cfg.simulation.scheme, retain_increments=retain, n_workers=cfg.simulation.n_workers,
    )


def _write(out: str | None, name: str, text: str) -> str | None:
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)
    return str(path / name)


def _require_config(args) -> ScenarioConfig:
    if not args.config:
        raise ConfigurationError("--config is required for this command")
    return load_config(args.config)


# -- commands -----------------------------------------------------------------------


def cmd_simulate(args) -> dict:
    if args.example_4_4:
        n = args.paths if args.paths is not None else 1
        if n < 1:
            raise ConfigurationError("n_paths must be at least 1")
        seed = args.seed if args.seed is not None else 0
        paths = montecarlo.example_4_4_scenario(seed, n_paths=n)
        structure = montecarlo.scenario_structure(paths)
    else:
        cfg = _require_config(args)
        paths = _simulate_cfg(cfg, args)
        structure = None
    est = montecarlo.mc_price(paths, lambda p: 1.0)
    summary = {"value": est.value, "std_error": est.std_error, "n_paths": paths.n_paths, "seed": paths.seed}
    if structure is not None:
        summary["structure"] = structure
    if args.out:
        _write(args.out, "paths.csv", paths.to_csv())
        _write(args.out, "summary.json", dumps(summary) + "\n")
    return summary


def _price_bond(cfg, args, method):
    T = cfg.instruments.bond.maturity
    params, schedule = cfg.params_obj(), cfg.schedule_obj()
    if method == "analytic":
        return {"value": bond_price(0.0, T, None, params, schedule)}
    if method == "riccati":
        if T == 0:
            return {"value": 1.0}
        spec = build_gaussian_hw_spec(params, schedule)
        x0 = [p.rho0 for p in as_factors(params)]
        val = transform(spec, 0.0, T, np.zeros(spec.dim), -1.0, x0, 0.0, cfg.riccati.step)
        return {"value": val.real}
    paths = _simulate_cfg(cfg, args)
    est = montecarlo.mc_price(paths, lambda p: 1.0, at=T)
    return {"value": est.value, "std_error": est.std_error, "n_paths": est.n_paths}


def _price_caplet(cfg, args, method):
    c = cfg.instruments.caplet
    spec = CapletSpec(c.start, c.end, c.strike)
    params, schedule = cfg.params_obj(), cfg.schedule_obj()
    if method == "analytic":
        x0 = as_factors(params)[0].rho0
        return {"value": caplet_price(x0, 0.0, spec, params, schedule)}
    if method == "riccati":
        raise ConfigurationError("caplet pricing via riccati is not supported")
    paths = _simulate_cfg(cfg, args)
    est = montecarlo.mc_price(paths, lambda p: montecarlo.caplet_payoff(p, spec, params, schedule), at=spec.end)
    return {"value": est.value, "std_error": est.std_error, "n_paths": est.n_paths}


def _price_futures(cfg, args, method):
    f = cfg.instruments.futures
    params, schedule = cfg.params_obj(), cfg.schedule_obj()
    if schedule.atoms_in(0.0, f.end):
        raise ConfigurationError("futures pricing needs a schedule without roll-over dates in the window")
    if method == "analytic":
        p = as_factors(params)
        if len(p) != 1:
            raise ConfigurationError("futures pricing supports single-factor models only")
        return {"value": futures_rate(0.0, f.start, f.end, p[0].rho0, params, schedule, h=f.h)}
    if method == "riccati":
        raise ConfigurationError("futures pricing via riccati is not supported")
    paths = _simulate_cfg(cfg, args, retain=f.h != 0.0)
    payoff = lambda p: montecarlo.futures_payoff(p, f.start, f.end)  # noqa: E731
    if f.h == 0.0:
        est = montecarlo.mc_price(paths, payoff, discount="none")
        return {"value": est.value, "std_error": est.std_error, "n_paths": est.n_paths}
    w = montecarlo.MinimalMeasureWeight(f.h, f.start, f.end, as_factors(params)[0])
    est = montecarlo.weighted_expectation(paths, payoff, w)
    return est.to_dict()


PRICERS = {"bond": (_price_bond, ("analytic", "riccati", "mc")),
           "caplet": (_price_caplet, ("analytic", "mc")),
           "futures": (_price_futures, ("analytic", "mc"))}


def _default_instrument(cfg: ScenarioConfig) -> str:
    for name in ("bond", "caplet", "futures"):
        if getattr(cfg.instruments, name) is not None:
            return name
    raise ConfigurationError("config defines no instrument")


def cmd_price(args) -> dict:
    cfg = _require_config(args)
    instrument = args.instrument or _default_instrument(cfg)
    if getattr(cfg.instruments, instrument) is None:
        raise ConfigurationError(f"config has no instruments.{instrument} section")
    pricer, supported = PRICERS[instrument]
    if not args.cross_check:
        method = args.method or "analytic"
        if method not in supported:
            raise ConfigurationError(f"{instrument} pricing via {method} is not supported")
        return {"instrument": instrument, "method": method, **pricer(cfg, args, method)}
    results = {m: pricer(cfg, args, m) for m in supported}
    deviations = []
    ok = True
    names = list(results)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ra, rb = results[a], results[b]
            diff = abs(ra["value"] - rb["value"])
            se = math.hypot(ra.get("std_error", 0.0), rb.get("std_error", 0.0))
            if se > 0:
                tol = cfg.mc_tolerance_se * se
            else:
                tol = cfg.riccati.tolerance * max(abs(ra["value"]), abs(rb["value"]), 1e-300)
            passed = diff <= tol
            ok &= passed
            deviations.append({"pair": [a, b], "abs_deviation": diff, "tolerance": tol, "passed": passed})
    record = {
        "instrument": instrument,
        "cross_check": results,
        "deviations": deviations,
        "max_deviation": max((d["abs_deviation"] for d in deviations), default=0.0),
        "passed": ok,
    }
    if not ok:
        raise CheckFailed(record)
    return record


def cmd_hedge(args) -> dict:
    cfg = _require_config(args)
    inst = cfg.instruments
    if inst.caplet is None or inst.futures is None:
        raise ConfigurationError("hedge needs instruments.caplet and instruments.futures")
    caplet = CapletSpec(inst.caplet.start, inst.caplet.end, inst.caplet.strike)
    futures = hedging.FuturesSpec(inst.futures.start, inst.futures.end, inst.futures.h)
    params, schedule = cfg.params_obj(), cfg.schedule_obj()

    def run(step):
        paths = _simulate_cfg(cfg, args, horizon=caplet.start, step=step)
        return hedging.run_hedge(paths, caplet, futures, params, schedule,
                                 rebalance_grid=cfg.hedge.rebalance_grid, n_nodes=cfg.hedge.gh_nodes)

    report = run(None)
    result = {
        "initial_value": report.initial_value,
        "total_cost_var": report.total_cost_var,
        "discretization_cost_var": float(np.var(report.discretization_cost, ddof=1)) if report.discretization_cost.size > 1 else 0.0,
        "jump_cost_var": float(np.var(report.jump_cost, ddof=1)) if report.jump_cost.size > 1 else 0.0,
        "terminal_error": report.terminal_error,
        "jump_diagnostics": report.diagnostics_json(),
    }
    if cfg.hedge.refine_steps:
        result["convergence"] = [{"step": s, "total_cost_var": run(s).total_cost_var}
                                 for s in sorted(cfg.hedge.refine_steps, reverse=True)]
    if args.out:
        hedging.write_hedge_outputs(report, args.out)
    return result


def cmd_calibrate(args) -> dict:
    cfg = _require_config(args)
    if cfg.curve is None:
        raise ConfigurationError("calibrate needs a curve section")
    factors = as_factors(cfg.params_obj())
    if len(factors) != 1:
        raise ConfigurationError("calibration supports single-factor models only")
    params, schedule = factors[0], cfg.schedule_obj()
    curve = DiscountCurve(tuple(tuple(p) for p in cfg.curve.pillars))
    alpha = fit_drift_to_curve(curve, params, schedule)
    fitted = params.with_alpha(alpha)
    errors = [abs(bond_price(0.0, T, None, fitted, schedule) - df) for T, df in curve.pillars]
    result = {"params": fitted.to_dict(), "max_pillar_error": max(errors)}
    _write(args.out, "calibrated.json", dumps(result) + "\n")
    return result


def cmd_riccati_verify(args) -> dict:
    cfg = _require_config(args)
    params, schedule = cfg.params_obj(), cfg.schedule_obj()
    maturities = cfg.riccati.maturities or [schedule.horizon]
    spec = build_gaussian_hw_spec(params, schedule)
    x0 = [p.rho0 for p in as_factors(params)]
    rows = []
    for T in maturities:
        a = bond_price(0.0, T, None, params, schedule)
        r = 1.0 if T == 0 else transform(spec, 0.0, T, np.zeros(spec.dim), -1.0, x0, 0.0, cfg.riccati.step).real
        rows.append({"maturity": T, "analytic": a, "riccati": r, "rel_error": abs(r - a) / abs(a)})
    worst = max(r["rel_error"] for r in rows)
    record = {"results": rows, "max_rel_error": worst, "tolerance": cfg.riccati.tolerance,
              "passed": worst <= cfg.riccati.tolerance}
    if not record["passed"]:
        raise CheckFailed(record)
    return record


COMMANDS = {
    "simulate": cmd_simulate,
    "price": cmd_price,
    "hedge": cmd_hedge,
    "calibrate": cmd_calibrate,
    "riccati-verify": cmd_riccati_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfrlab", description="Overnight-rate term-structure toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="scenario JSON file")
        p.add_argument("--seed", type=int, help="override simulation seed")
        p.add_argument("--paths", type=int, help="override number of paths")
        p.add_argument("--out", help="output directory")
        if name == "simulate":
            p.add_argument("--example-4-4", action="store_true", help="built-in two-factor spike/jump scenario")
        if name == "price":
            p.add_argument("--instrument", choices=sorted(PRICERS))
            p.add_argument("--method", choices=("analytic", "riccati", "mc"))
            p.add_argument("--cross-check", action="store_true", help="run every supported method and compare")
    return parser


def _error_json(exc: Exception) -> dict:
    if isinstance(exc, ValidationError):
        details = [{"loc": ".".join(str(x) for x in e["loc"]), "msg": e["msg"]} for e in exc.errors()]
        return {"error": {"type": "ValidationError", "message": "invalid configuration", "details": details}}
    return {"error": {"type": type(exc).__name__, "message": str(exc)}}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except CheckFailed as exc:
        print(dumps(exc.record))
        print(dumps({"error": {"type": "CheckFailed", "message": str(exc)}}), file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (ValidationError, RfrError, ValueError, OSError) as exc:
        print(dumps(_error_json(exc)), file=sys.stderr)
        return EXIT_ERROR
    print(dumps(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
