"""Locally risk-minimizing hedge of a forward-looking caplet with RFR futures.

The hedge instrument is the discounted futures gain ``X = int df / S0``.
Between expected jump dates the hedge ratio is the caplet delta divided by
the futures loading ``B(t, S, T)``; at a jump date it is the conditional
regression coefficient of the caplet jump on the futures jump. All caplet
values are computed under the minimal martingale measure, i.e. with the drift
``alpha - h / B(t, S, T)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .model import HullWhiteParams, ParamsLike, single_factor
from .montecarlo import PathSet
from .pricing import (
    CapletCoefficients,
    CapletSpec,
    HLike,
    caplet_coefficients,
    futures_loading,
    futures_rate,
    minimal_measure_alpha,
    minimal_measure_params,
)
from .schedule import Schedule

GH_NODES = 64


@dataclass(frozen=True)
class FuturesSpec:
    """Futures on the compounded rate over ``[start, end]``.

    ``h`` is the deterministic drift of the futures rate under the
    risk-neutral measure; ``0`` makes the futures rate a martingale.
    """

    start: float
    end: float
    h: HLike = 0.0

    def __post_init__(self):
        if not self.start < self.end:
            raise DomainError("futures reference period needs start < end")
        if not callable(self.h) and not math.isfinite(float(self.h)):
            raise DomainError("futures drift h must be finite")

    def loading(self, t: float, beta: float) -> float:
        return futures_loading(t, self.start, self.end, beta)


def _require_no_atoms(schedule: Schedule, futures: FuturesSpec) -> None:
    if schedule.atoms_in(0.0, futures.end, include_left=True):
        raise ConfigurationError("hedging assumes a schedule without roll-over dates before the futures end")


def minimal_measure_drift(t: float, futures: FuturesSpec, params: ParamsLike) -> float:
    """``alpha(t) - h(t) / B(t, S, T)``."""
    if not t < futures.end:
        raise DomainError("minimal_measure_drift needs t < T")
    p = single_factor(params)
    if futures.loading(t, p.beta) == 0.0:
        raise DomainError("futures loading vanishes: singular configuration")
    return float(minimal_measure_alpha(p, futures.start, futures.end, futures.h)(t))


def _hat_params(params: ParamsLike, futures: FuturesSpec) -> HullWhiteParams:
    return minimal_measure_params(params, futures.start, futures.end, futures.h)


def _zeta_c(coeffs: CapletCoefficients, x, t: float, futures: FuturesSpec, beta: float):
    return coeffs.delta(x) / futures.loading(t, beta)


def zeta_continuous(rho_t, t: float, caplet: CapletSpec, futures: FuturesSpec, params: ParamsLike,
                    schedule: Schedule):
    """Hedge ratio between jump dates: ``dG/dx / B(t, S, T)`` under the minimal measure."""
    if schedule.is_expected_jump(t):
        raise DomainError(f"t={t} is an expected jump date; use zeta_jump")
    _require_no_atoms(schedule, futures)
    p_hat = _hat_params(params, futures)
    value = _zeta_c(caplet_coefficients(t, caplet, p_hat, schedule), rho_t, t, futures, p_hat.beta)
    return float(value) if np.ndim(value) == 0 else value


def _jump_at(params: HullWhiteParams, s: float):
    for j in params.jumps:
        if j.date == s:
            return j
    raise DomainError(f"no expected jump at s={s}")


def _zeta_d(coeffs: CapletCoefficients, y, s: float, jump, futures: FuturesSpec, beta: float,
            n_nodes: int, numeraire=1.0):
    y = np.asarray(y, dtype=float)
    if jump.std == 0.0:
        return _zeta_c(coeffs, y + jump.mean, s, futures, beta)
    z, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / math.sqrt(2.0 * math.pi)
    g = coeffs.price(y[..., None] + jump.mean + jump.std * z) / numeraire
    expectation = (g * (jump.std * z)) @ w
    return expectation / (futures.loading(s, beta) * jump.variance / numeraire)


def zeta_jump(rho_left, s: float, caplet: CapletSpec, futures: FuturesSpec, params: ParamsLike,
              schedule: Schedule, n_nodes: int = GH_NODES, numeraire=1.0):
    """Hedge ratio at an expected jump date ``s``.

    ``E[G(y + xi, s) (xi - m)] / (B(s, S, T) gamma**2)`` with ``y`` the rate
    just before ``s``, by Gauss-Hermite quadrature. ``numeraire`` discounts
    both the caplet and the futures jump; it cancels. A degenerate jump
    (``gamma = 0``) falls back to the continuous ratio at the post-jump rate.
    """
    if not 0.0 < s <= caplet.start:
        raise DomainError("zeta_jump needs 0 < s <= S")
    _require_no_atoms(schedule, futures)
    p_hat = _hat_params(params, futures)
    coeffs = caplet_coefficients(s, caplet, p_hat, schedule)
    value = _zeta_d(coeffs, rho_left, s, _jump_at(p_hat, s), futures, p_hat.beta, n_nodes, numeraire)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class JumpDiagnostics:
    """Orthogonality statistics of the hedge residual at one jump date."""

    s: float
    E_dL: float
    se: float
    cov_dL_dM: float
    se_cov: float
    n: int
    r_squared: float
    regression_coef: float
    regression_target: float
    regression_se: float

    def to_dict(self) -> dict:
        return {
            "s_i": self.s, "E_dL": self.E_dL, "cov_dL_dM": self.cov_dL_dM, "se": self.se, "n": self.n,
            "se_cov": self.se_cov, "r_squared": self.r_squared, "regression_coef": self.regression_coef,
            "regression_target": self.regression_target, "regression_se": self.regression_se,
        }


@dataclass(frozen=True)
class HedgeReport:
    """Aggregated hedge run.

    ``times``/``is_jump`` index the hedge nodes (jump dates appear twice);
    ``zeta_mean`` has one entry per step, starting at the corresponding node.
    ``discretization_cost`` and ``jump_cost`` split each path's total cost
    into the part accrued between jump dates and the irreducible jump part.
    """

    times: np.ndarray
    is_jump: np.ndarray
    zeta_mean: np.ndarray
    V_mean: np.ndarray
    cost_var: np.ndarray
    initial_value: float
    terminal_error: float
    discretization_cost: np.ndarray
    jump_cost: np.ndarray
    continuous_increment_mean: np.ndarray
    continuous_increment_se: np.ndarray
    jump_diagnostics: tuple[JumpDiagnostics, ...] = field(default_factory=tuple)

    @property
    def total_cost_var(self) -> float:
        return float(self.cost_var[-1])

    def to_csv(self, fh=None) -> str | None:
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "zeta", "V_mean", "cost_var"])
        for k, t in enumerate(self.times):
            z = f"{self.zeta_mean[k]:.17g}" if k < len(self.zeta_mean) else ""
            writer.writerow([f"{t:.17g}", z, f"{self.V_mean[k]:.17g}", f"{self.cost_var[k]:.17g}"])
        return buf.getvalue() if fh is None else None

    def diagnostics_json(self) -> list[dict]:
        return [d.to_dict() for d in self.jump_diagnostics]


def _hedge_nodes(paths: PathSet, S: float, rebalance_grid: Sequence[float] | None, jump_dates):
    if rebalance_grid is None:
        times = sorted({float(t) for t in paths.times if t <= S})
    else:
        times = sorted({float(t) for t in rebalance_grid})
        if times[0] != 0.0 or times[-1] != S:
            raise ConfigurationError("rebalance grid must start at 0 and end at the caplet start")
        missing = [s for s in jump_dates if s not in times]
        if missing:
            raise ConfigurationError(f"rebalance grid misses expected jump dates {missing}")
    nodes = []
    for t in times:
        hits = np.flatnonzero(paths.times == t)
        if hits.size == 0:
            raise ConfigurationError(f"rebalance time {t} is not on the simulation grid")
        if t in jump_dates:
            if hits.size != 2:
                raise ConfigurationError(f"jump date {t} lacks left/right samples")
            nodes += [(t, int(hits[0]), True), (t, int(hits[-1]), False)]
        else:
            nodes.append((t, int(hits[-1]), False))
    return nodes


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def run_hedge(paths: PathSet, caplet: CapletSpec, futures: FuturesSpec, params: ParamsLike,
              schedule: Schedule, rebalance_grid: Sequence[float] | None = None,
              n_nodes: int = GH_NODES) -> HedgeReport:
    """Discrete-time locally risk-minimizing hedge along simulated paths.

    Parameters
    ----------
    paths : PathSet
        Single-factor paths covering ``[0, S]`` under the risk-neutral measure.
    rebalance_grid : sequence of float, optional
        Hedge dates; defaults to every grid time up to ``S``. Must contain
        0, ``S`` and every expected jump date before ``S``.
    """
    p = single_factor(params)
    if paths.n_factors != 1:
        raise ConfigurationError("run_hedge supports single-factor paths")
    if (futures.start, futures.end) != (caplet.start, caplet.end):
        raise ConfigurationError("caplet and futures must reference the same period")
    _require_no_atoms(schedule, futures)
    S = caplet.start
    jump_dates = {j.date for j in p.jumps if 0.0 < j.date <= S}
    nodes = _hedge_nodes(paths, S, rebalance_grid, jump_dates)
    p_hat = _hat_params(p, futures)
    load = {t: futures.loading(t, p.beta) for t, _, _ in nodes}

    rho = paths.rho
    V, F, num = [], [], []
    coeffs = []
    for t, col, left in nodes:
        c = caplet_coefficients(t, caplet, p_hat, schedule, left=left)
        coeffs.append(c)
        s0 = np.exp(paths.R[:, col])
        x = rho[:, col]
        V.append(c.price(x) / s0)
        f0 = futures_rate(t, S, futures.end, 0.0, p, schedule, h=futures.h, left=left)
        F.append(load[t] * x + f0)
        num.append(s0)

    n_steps = len(nodes) - 1
    cost = np.zeros((paths.n_paths,))
    disc_cost = np.zeros_like(cost)
    jump_cost = np.zeros_like(cost)
    zeta_mean = np.empty(n_steps)
    cost_var = np.empty(n_steps + 1)
    cost_var[0] = 0.0
    cont_mean, cont_se = [], []
    diagnostics = []
    for k in range(n_steps):
        t, col, left = nodes[k]
        t1, _, _ = nodes[k + 1]
        dV = V[k + 1] - V[k]
        dX = (F[k + 1] - F[k]) / num[k]
        if t1 == t:
            jump = _jump_at(p_hat, t)
            zeta = _zeta_d(coeffs[k + 1], rho[:, col], t, jump, futures, p.beta, n_nodes)
            dL = dV - zeta * dX
            jump_cost += dL
            diagnostics.append(_jump_stats(t, dL, dX, dV, zeta))
        else:
            zeta = _zeta_c(coeffs[k], rho[:, col], t, futures, p.beta)
            dL = dV - zeta * dX
            disc_cost += dL
            m, se = _mean_se(dL)
            cont_mean.append(m)
            cont_se.append(se)
        cost += dL
        zeta_mean[k] = float(np.mean(zeta))
        cost_var[k + 1] = float(cost.var(ddof=1)) if paths.n_paths > 1 else 0.0

    t_end, col_end, _ = nodes[-1]
    p_S = np.exp(-coeffs[-1].loading_ST * rho[:, col_end] - coeffs[-1].xi_ST)
    payoff = np.maximum(1.0 - caplet.strike_factor * p_S, 0.0) / num[-1]
    return HedgeReport(
        times=np.array([n[0] for n in nodes]),
        is_jump=np.array([n[2] for n in nodes]),
        zeta_mean=zeta_mean,
        V_mean=np.array([v.mean() for v in V]),
        cost_var=cost_var,
        initial_value=float(V[0][0]),
        terminal_error=float(np.max(np.abs(V[-1] - payoff))),
        discretization_cost=disc_cost,
        jump_cost=jump_cost,
        continuous_increment_mean=np.array(cont_mean),
        continuous_increment_se=np.array(cont_se),
        jump_diagnostics=tuple(diagnostics),
    )


def _jump_stats(s, dL, dM, dV, zeta) -> JumpDiagnostics:
    n = dL.size
    mean_L, se_L = _mean_se(dL)
    prod = (dL - dL.mean()) * (dM - dM.mean())
    cov, se_cov = _mean_se(prod)
    var_v = float(dV.var(ddof=1))
    r2 = 1.0 - float(dL.var(ddof=1)) / var_v if var_v > 0 else float("nan")
    # regression through the origin (both increments have zero conditional
    # mean); its gap to the dM**2-weighted hedge ratio is sum(dL dM) / sum(dM**2)
    ss = float(np.sum(dM * dM))
    coef = float(np.sum(dV * dM)) / ss
    target = float(np.sum(zeta * dM * dM)) / ss
    reg_se = float(math.sqrt(np.sum((dL * dM) ** 2))) / ss
    return JumpDiagnostics(s, mean_L, se_L, cov, se_cov, n, r2, coef, target, reg_se)


def write_hedge_outputs(report: HedgeReport, out_dir) -> tuple[str, str]:
    """Write ``hedge.csv`` and ``hedge_diagnostics.json`` into ``out_dir``."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "hedge.csv"
    json_path = out / "hedge_diagnostics.json"
    with open(csv_path, "w", newline="") as fh:
        report.to_csv(fh)
    from .jsonio import dumps

    json_path.write_text(dumps({"jump_diagnostics": report.diagnostics_json(),
                                "initial_value": report.initial_value,
                                "total_cost_var": report.total_cost_var}) + "\n")
    return str(csv_path), str(json_path)
