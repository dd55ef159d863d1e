"""Exact simulation of the overnight rate, its accrual integral and the numeraire.

Each continuous step draws ``(W increment, rho noise, R noise)`` from their
exact joint Gaussian law, so the ``exact`` scheme has no discretization bias.
Jumps are applied between the left and right samples of their date, followed
by the atom of a roll-over date (which integrates the post-jump rate).

Random numbers come from counter-based Philox streams keyed by
``(seed, block index)`` with a fixed block size; path ``i`` always consumes
the same normals for a given seed and model layout, independent of
``n_paths`` and of the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .model import HullWhiteParams, ParamsLike, as_factors, check_consistency, single_factor
from .pricing import bond_coefficients, futures_loading
from .schedule import PiecewiseConstant, Schedule, drift_A, drift_a, kernel_B, kernel_BB, kernel_C

BLOCK_SIZE = 4096
SIDES = ("none", "left", "right")


def build_grid(schedule: Schedule, horizon: float | None = None, step: float | None = None,
               times: Iterable[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Simulation grid covering ``[0, horizon]``.

    Every expected jump date and roll-over date in ``(0, horizon]`` appears
    twice, as a left and a right sample.

    Returns
    -------
    times : ndarray
    sides : ndarray of str
    """
    horizon = schedule.horizon if horizon is None else float(horizon)
    pts = {0.0, horizon}
    pts.update(float(t) for t in times if 0.0 <= t <= horizon)
    if step is not None:
        if not step > 0:
            raise DomainError("grid step must be positive")
        n = int(math.floor(horizon / step + 1e-9))
        pts.update(np.round(np.arange(1, n + 1) * step, 12).tolist())
        pts = {p for p in pts if p <= horizon}
    events = {t for t in schedule.event_dates() if 0.0 < t <= horizon}
    pts |= events
    out_t: list[float] = []
    out_s: list[str] = []
    for t in sorted(pts):
        if t in events:
            out_t += [t, t]
            out_s += ["left", "right"]
        else:
            out_t.append(t)
            out_s.append("none")
    return np.array(out_t), np.array(out_s)


@dataclass(frozen=True)
class PathSet:
    """Simulated paths of the factor rates, their sum ``rho`` and ``R``.

    Arrays are read-only; ``factor_rho`` has shape ``(n_factors, n_paths,
    n_points)`` and ``R`` shape ``(n_paths, n_points)``.
    """

    times: np.ndarray
    sides: np.ndarray
    factor_rho: np.ndarray
    R: np.ndarray
    seed: int
    scheme: str
    dW: np.ndarray | None = None
    jump_draws: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.times, self.sides, self.factor_rho, self.R, self.dW):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.R.shape[0]

    @property
    def n_factors(self) -> int:
        return self.factor_rho.shape[0]

    @property
    def rho(self) -> np.ndarray:
        if self.n_factors == 1:
            return self.factor_rho[0]
        return self.factor_rho.sum(axis=0)

    @property
    def S0(self) -> np.ndarray:
        return np.exp(self.R)

    def index(self, t: float, side: str = "right") -> int:
        """Grid column of time ``t``; never interpolates."""
        idx = np.flatnonzero(self.times == t)
        if idx.size == 0:
            raise DomainError(f"t={t} is not on the simulation grid (no interpolation)")
        if idx.size == 1:
            return int(idx[0])
        if side not in ("left", "right"):
            raise DomainError("side must be 'left' or 'right'")
        return int(idx[0] if side == "left" else idx[-1])

    def rho_at(self, t: float, side: str = "right") -> np.ndarray:
        return self.rho[:, self.index(t, side)]

    def R_at(self, t: float, side: str = "right") -> np.ndarray:
        return self.R[:, self.index(t, side)]

    def S0_at(self, t: float, side: str = "right") -> np.ndarray:
        return np.exp(self.R_at(t, side))

    def factors_at(self, t: float, side: str = "right") -> np.ndarray:
        """Factor states at ``t``, shape ``(n_paths, n_factors)``."""
        return self.factor_rho[:, :, self.index(t, side)].T

    def to_csv(self, fh=None) -> str | None:
        """Write ``path,time,side,rho,R,S0`` rows with 17 significant digits."""
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "time", "side", "rho", "R", "S0"])
        rho, R = self.rho, self.R
        S0 = np.exp(R)
        for i in range(self.n_paths):
            for k, t in enumerate(self.times):
                writer.writerow([i, f"{t:.17g}", self.sides[k], f"{rho[i, k]:.17g}",
                                 f"{R[i, k]:.17g}", f"{S0[i, k]:.17g}"])
        return buf.getvalue() if fh is None else None


# -- simulation ----------------------------------------------------------------------


def _step_cholesky(beta: float, sigma: float, dt: float) -> np.ndarray:
    """Lower factor of the covariance of ``(dW, sigma I1, sigma I2)`` over one step.

    ``I1 = int e^{beta (t1-u)} dW`` drives the rate, ``I2 = int B(t1-u) dW`` its
    time integral.
    """
    b = kernel_B(beta, dt)
    c = [
        [dt, sigma * b, sigma * kernel_C(beta, dt)],
        [sigma * b, sigma**2 * kernel_B(2 * beta, dt), sigma**2 * 0.5 * b * b],
        [sigma * kernel_C(beta, dt), sigma**2 * 0.5 * b * b, sigma**2 * kernel_BB(beta, dt)],
    ]
    L = np.zeros((3, 3))
    for i in range(3):
        for j in range(i + 1):
            acc = c[i][j] - sum(L[i, k] * L[j, k] for k in range(j))
            if i == j:
                # near-singular for tiny steps: clamp rounding noise
                L[i, i] = math.sqrt(acc) if acc > 1e-300 * max(1.0, c[i][i]) else 0.0
            else:
                L[i, j] = acc / L[j, j] if L[j, j] > 0 else 0.0
    return L


def _exact_step(p: HullWhiteParams, t0: float, t1: float, cache: dict):
    dt = t1 - t0
    if isinstance(p.alpha, PiecewiseConstant):
        key = (id(p), dt, tuple((lo - t0, hi - t0, v) for lo, hi, v in p.alpha.pieces(t0, t1)))
        hit = cache.get(key)
        if hit is not None:
            return hit
    else:
        key = None
    value = (
        math.exp(p.beta * dt), drift_a(t0, t1, p.beta, p.alpha),
        kernel_B(p.beta, dt), drift_A(t0, t1, p.beta, p.alpha),
        _step_cholesky(p.beta, p.sigma, dt),
    )
    if key is not None:
        cache[key] = value
    return value


@dataclass
class _Plan:
    """Precomputed per-step coefficients shared by all blocks."""

    kinds: list
    n_normals: int


def _make_plan(factors, schedule, times, sides, scheme):
    kinds = []
    col = 0
    cache: dict = {}
    atoms = set(schedule.roll_over_dates)
    for k in range(len(times) - 1):
        t0, t1 = times[k], times[k + 1]
        if t1 == t0:
            jumps = []
            for f, p in enumerate(factors):
                for j in p.jumps:
                    if j.date == t0:
                        jumps.append((f, j.mean, j.std, col))
                        col += 1
            kinds.append(("event", t0, jumps, t0 in atoms))
            continue
        dt = t1 - t0
        per_factor = []
        for f, p in enumerate(factors):
            if scheme == "exact":
                per_factor.append(_exact_step(p, t0, t1, cache) + (col,))
            else:
                per_factor.append((p.alpha(t0), p.beta, p.sigma, dt, col))
            col += 3
        kinds.append(("step", t0, t1, per_factor))
    return _Plan(kinds, col)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def _simulate_block(plan, factors, n_points, n, seed, block, retain, scheme):
    Z = _block_rng(seed, block).standard_normal((n, plan.n_normals))
    nf = len(factors)
    rho = np.empty((nf, n, n_points))
    R = np.empty((n, n_points))
    dW = np.zeros((nf, n, n_points - 1)) if retain else None
    jump_draws = {}
    x = np.array([[p.rho0] * n for p in factors], dtype=float)
    r = np.zeros(n)
    rho[:, :, 0] = x
    R[:, 0] = r
    for k, kind in enumerate(plan.kinds):
        if kind[0] == "event":
            _, t, jumps, is_atom = kind
            for f, m, s, c in jumps:
                xi = m + s * Z[:, c]
                x[f] = x[f] + xi
                jump_draws.setdefault(t, np.zeros((nf, n)))[f] = xi
            if is_atom:
                r = r + x.sum(axis=0)
        elif scheme == "exact":
            _, t0, t1, per_factor = kind
            for f, (decay, a, b, A, L, c) in enumerate(per_factor):
                z = Z[:, c:c + 3]
                noise = z @ L.T
                r = r + x[f] * b + A + noise[:, 2]
                x[f] = x[f] * decay + a + noise[:, 1]
                if retain:
                    dW[f, :, k] = noise[:, 0]
        else:
            _, t0, t1, per_factor = kind
            for f, (alpha0, beta, sigma, dt, c) in enumerate(per_factor):
                w = math.sqrt(dt) * Z[:, c]
                r = r + x[f] * dt
                x[f] = x[f] + (alpha0 + beta * x[f]) * dt + sigma * w
                if retain:
                    dW[f, :, k] = w
        rho[:, :, k + 1] = x
        R[:, k + 1] = r
    return rho, R, dW, jump_draws


def simulate(params: ParamsLike, schedule: Schedule, grid: tuple[np.ndarray, np.ndarray] | None = None,
             n_paths: int = 1, seed: int = 0, scheme: str = "exact", retain_increments: bool = False,
             n_workers: int = 1, step: float | None = None) -> PathSet:
    """Simulate ``n_paths`` joint paths of ``(rho, R)``.

    Parameters
    ----------
    grid : (times, sides), optional
        As returned by :func:`build_grid`; built from ``step`` when omitted.
    scheme : {"exact", "euler"}
        ``euler`` is a first-order cross-check sharing the Brownian increments
        of the exact scheme.
    retain_increments : bool
        Keep the Brownian increments (needed for minimal-measure weights).
    """
    if n_paths < 1:
        raise ConfigurationError("n_paths must be at least 1")
    if scheme not in ("exact", "euler"):
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    factors = as_factors(params)
    check_consistency(factors, schedule)
    if grid is None:
        grid = build_grid(schedule, step=step)
    times, sides = (np.asarray(g) for g in grid)
    if times[0] != 0.0:
        raise ConfigurationError("grid must start at 0")
    if np.any(np.diff(times) < 0):
        raise ConfigurationError("grid times must be nondecreasing")
    for d in schedule.event_dates():
        if 0.0 < d <= times[-1]:
            hits = np.flatnonzero(times == d)
            if hits.size != 2 or list(sides[hits]) != ["left", "right"]:
                raise ConfigurationError(f"grid is missing the left/right samples of event date {d}")
    plan = _make_plan(factors, schedule, times, sides, scheme)
    n_blocks = (n_paths + BLOCK_SIZE - 1) // BLOCK_SIZE
    sizes = [min(BLOCK_SIZE, n_paths - b * BLOCK_SIZE) for b in range(n_blocks)]

    def run(b):
        return _simulate_block(plan, factors, len(times), sizes[b], seed, b, retain_increments, scheme)

    if n_workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, range(n_blocks)))
    else:
        results = [run(b) for b in range(n_blocks)]
    rho = np.concatenate([r[0] for r in results], axis=1)
    R = np.concatenate([r[1] for r in results], axis=0)
    dW = np.concatenate([r[2] for r in results], axis=1) if retain_increments else None
    jump_draws = {}
    for d in {d for r in results for d in r[3]}:
        jump_draws[d] = np.concatenate([r[3][d] for r in results], axis=1)
        jump_draws[d].setflags(write=False)
    return PathSet(times, sides, rho, R, int(seed), scheme, dW, jump_draws)


# -- Monte Carlo pricing -------------------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    value: float
    std_error: float
    n_paths: int
    weight_mean: float | None = None
    weight_std_error: float | None = None

    def to_dict(self) -> dict:
        out = {"value": self.value, "std_error": self.std_error, "n_paths": self.n_paths}
        if self.weight_mean is not None:
            out["weight_mean"] = self.weight_mean
            out["weight_std_error"] = self.weight_std_error
        return out


def _estimate(samples: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def mc_price(paths: PathSet, payoff: Callable[[PathSet], np.ndarray], discount: str = "numeraire",
             at: float | None = None) -> MCEstimate:
    """Sample mean and standard error of a path payoff.

    With ``discount="numeraire"`` the payoff is divided by the numeraire at
    the payoff date ``at`` (default: the last grid time).
    """
    values = np.broadcast_to(np.asarray(payoff(paths), dtype=float), (paths.n_paths,))
    if discount == "numeraire":
        t = paths.times[-1] if at is None else at
        values = values / paths.S0_at(t)
    elif discount != "none":
        raise ConfigurationError(f"unknown discount mode {discount!r}")
    mean, se = _estimate(values)
    return MCEstimate(mean, se, paths.n_paths)


@dataclass(frozen=True)
class ForwardMeasureWeight:
    """Density ``1 / (S0_S P(0, S))`` of the ``S``-forward measure."""

    S: float
    params: ParamsLike
    schedule: Schedule

    def weights(self, paths: PathSet) -> np.ndarray:
        from .pricing import bond_price

        p0 = bond_price(0.0, self.S, None, self.params, self.schedule)
        return 1.0 / (paths.S0_at(self.S) * p0)


@dataclass(frozen=True)
class MinimalMeasureWeight:
    """Stochastic exponential of ``-int h(u) / (sigma B(u, S, T)) dW_u`` up to ``until``.

    The integrand is frozen at each step midpoint; the weight stays an exact
    unit-mean martingale.
    """

    h: float | Callable[[float], float]
    S: float
    T: float
    params: HullWhiteParams
    until: float | None = None

    def weights(self, paths: PathSet) -> np.ndarray:
        if paths.dW is None:
            raise ConfigurationError("minimal-measure weights need retain_increments=True")
        p = single_factor(self.params)
        if p.sigma <= 0:
            raise ConfigurationError("minimal-measure weights need sigma > 0")
        hf = self.h if callable(self.h) else (lambda _t, _v=float(self.h): _v)
        until = self.T if self.until is None else self.until
        log_z = np.zeros(paths.n_paths)
        times = paths.times
        for k in range(len(times) - 1):
            t0, t1 = times[k], times[k + 1]
            if t1 == t0 or t0 >= until:
                continue
            t1 = min(t1, until)
            tm = 0.5 * (t0 + t1)
            theta = hf(tm) / (p.sigma * futures_loading(tm, self.S, self.T, p.beta))
            log_z -= theta * paths.dW[0, :, k] + 0.5 * theta * theta * (t1 - t0)
        return np.exp(log_z)


def weighted_expectation(paths: PathSet, payoff: Callable[[PathSet], np.ndarray], weight) -> MCEstimate:
    """Radon-Nikodym weighted sample mean; also reports the weight mean (should be 1)."""
    w = weight.weights(paths)
    values = np.broadcast_to(np.asarray(payoff(paths), dtype=float), (paths.n_paths,))
    mean, se = _estimate(w * values)
    wm, wse = _estimate(w)
    return MCEstimate(mean, se, paths.n_paths, wm, wse)


def rollover_numeraire(paths: PathSet, params: ParamsLike, schedule: Schedule):
    """Discrete overnight account compounded at the model's one-period bond fixings.

    Returns ``(account, fixings)`` where ``account`` maps each roll-over date
    (and 0) to the per-path account value and ``fixings`` maps ``(t_n,
    t_{n+1})`` to the per-path bond price ``P(t_n, t_{n+1})``.
    """
    dates = [0.0] + [d for d in schedule.roll_over_dates if 0.0 < d <= paths.times[-1]]
    account = {0.0: np.ones(paths.n_paths)}
    fixings = {}
    for a, b in zip(dates, dates[1:]):
        loads, x = bond_coefficients(a, b, params, schedule)
        states = paths.factors_at(a, side="right")
        fix = np.exp(-states @ loads - x)
        fixings[(a, b)] = fix
        account[b] = account[a] / fix
    return account, fixings


def caplet_payoff(paths: PathSet, spec, params: ParamsLike, schedule: Schedule) -> np.ndarray:
    """``(T - S) (F(S, T) - K)^+`` per path, paid at ``T``; ``F`` uses the model bond ``P(S, T)``."""
    loads, x = bond_coefficients(spec.start, spec.end, params, schedule)
    bond = np.exp(-paths.factors_at(spec.start) @ loads - x)
    rate = (1.0 / bond - 1.0) / spec.accrual
    return spec.accrual * np.maximum(rate - spec.strike, 0.0)


def futures_payoff(paths: PathSet, S: float, T: float) -> np.ndarray:
    """Settlement value ``(R_T - R_S) / (T - S)`` per path."""
    return (paths.R_at(T) - paths.R_at(S)) / (T - S)


# -- Example scenario ------------------------------------------------------------------


EXAMPLE_JUMP_MEAN = 0.1
EXAMPLE_JUMP_STD = 0.4


def example_4_4_params() -> tuple[tuple[HullWhiteParams, HullWhiteParams], Schedule]:
    """Two-factor spike-and-jump specification.

    The slow factor mean-reverts at speed 0.2 and jumps at t = 150; the fast
    factor has no diffusion, reverts at speed 80 and jumps at t = 50 and 100.
    Mean-reversion speeds enter ``beta`` with a negative sign.
    """
    slow = HullWhiteParams(
        rho0=0.01875, beta=-0.20, sigma=0.012, alpha=PiecewiseConstant.constant(0.01),
        jumps=(_example_jump(150.0),),
    )
    fast = HullWhiteParams(
        rho0=0.0, beta=-80.0, sigma=0.0, alpha=PiecewiseConstant.constant(0.0),
        jumps=(_example_jump(50.0), _example_jump(100.0)),
    )
    return (slow, fast), Schedule((), (50.0, 100.0, 150.0), 200.0)


def _example_jump(date):
    from .model import JumpSpec

    return JumpSpec(date, EXAMPLE_JUMP_MEAN, EXAMPLE_JUMP_STD)


def example_4_4_scenario(seed: int, n_paths: int = 1, step: float = 0.01) -> PathSet:
    params, schedule = example_4_4_params()
    return simulate(params, schedule, build_grid(schedule, step=step), n_paths=n_paths, seed=seed)


def scenario_structure(paths: PathSet, path: int = 0) -> dict:
    """Per-jump-date summary used to flag the spike/jump structure of a path."""
    params, schedule = example_4_4_params()
    out = []
    for d in schedule.expected_jump_dates:
        before = float(paths.rho[path, paths.index(d, "left")])
        after = float(paths.rho[path, paths.index(d, "right")])
        later_t = min((t for t in paths.times if t >= d + 1.0), default=None)
        later = float(paths.rho[path, paths.index(later_t)]) if later_t is not None else None
        fast = float(paths.factor_rho[1, path, paths.index(d, "right")] - paths.factor_rho[1, path, paths.index(d, "left")])
        slow = float(paths.factor_rho[0, path, paths.index(d, "right")] - paths.factor_rho[0, path, paths.index(d, "left")])
        kind = "spike" if fast != 0.0 else "level_jump"
        out.append({
            "date": d, "kind": kind, "rho_left": before, "rho_right": after,
            "rho_one_unit_later": later, "jump_fast": fast, "jump_slow": slow,
        })
    return {"path": path, "events": out}


def jump_half_life(factor: HullWhiteParams, s: float, jump: float = 1.0, rho_before: float = 0.0) -> float:
    """Lag after which a jump's effect on the conditional mean path has halved.

    Compares the analytic conditional mean of the factor after ``s`` with and
    without a realized jump of size ``jump`` and solves for the lag at which
    the excess equals half the jump.
    """
    from scipy.optimize import brentq

    from .model import rho_moments

    if jump == 0.0:
        raise DomainError("jump size must be nonzero")
    if factor.beta >= 0:
        raise DomainError("a half-life needs a mean-reverting factor (beta < 0)")
    quiet = HullWhiteParams(factor.rho0, factor.beta, factor.sigma, factor.alpha, ())
    empty = Schedule()

    def excess_ratio(lag: float) -> float:
        hit = rho_moments(s, s + lag, s + lag, rho_before + jump, quiet, empty).mean_at_T1
        miss = rho_moments(s, s + lag, s + lag, rho_before, quiet, empty).mean_at_T1
        return (hit - miss) / jump - 0.5

    hi = 1.0 / abs(factor.beta)
    while excess_ratio(hi) > 0:
        hi *= 2.0
    return brentq(excess_ratio, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
