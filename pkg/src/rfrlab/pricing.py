"""Closed-form valuation in the Gaussian Hull-White model with scheduled jumps.

Bonds, the forward-measure law of the overnight rate, forward-looking
caplets, backward-looking and forward term rates, futures rates and the
bootstrap of a piecewise-constant drift to an initial discount curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .errors import CalibrationError, ConfigurationError, DataError, DomainError
from .model import (
    HullWhiteParams,
    ParamsLike,
    R_moments,
    as_factors,
    factor_states,
    joint_gaussian_law,
    rho_moments,
    single_factor,
)
from .schedule import PiecewiseConstant, Schedule, drift_A, kernel_B, kernel_Bprime


@dataclass(frozen=True)
class DiscountCurve:
    """Discount factors observed at increasing maturities."""

    pillars: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pillars = tuple((float(T), float(df)) for T, df in self.pillars)
        if not pillars:
            raise DomainError("curve needs at least one pillar")
        for T, df in pillars:
            if not (math.isfinite(T) and math.isfinite(df)):
                raise DomainError("curve pillars must be finite")
            if df <= 0:
                raise DomainError(f"discount factor at {T!r} must be positive")
            if T < 0:
                raise DomainError("pillar maturities must be nonnegative")
            if T == 0 and df != 1.0:
                raise DomainError("discount factor at maturity 0 must equal 1")
        for (a, _), (b, _) in zip(pillars, pillars[1:]):
            if not b > a:
                raise DomainError("pillar maturities must be strictly increasing")
        object.__setattr__(self, "pillars", pillars)

    @property
    def maturities(self) -> np.ndarray:
        return np.array([T for T, _ in self.pillars])

    @property
    def discount_factors(self) -> np.ndarray:
        return np.array([df for _, df in self.pillars])

    def to_dict(self) -> dict:
        return {"pillars": [list(p) for p in self.pillars]}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscountCurve":
        return cls(tuple(tuple(p) for p in data["pillars"]))


@dataclass(frozen=True)
class CapletSpec:
    """Forward-looking caplet paying ``(end - start) (F(start, end) - strike)^+`` at ``end``."""

    start: float
    end: float
    strike: float

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise DomainError("caplet needs 0 <= start < end")
        if not math.isfinite(self.strike) or not self.strike_factor > 0:
            raise DomainError("caplet needs 1 + (end - start) * strike > 0")

    @property
    def accrual(self) -> float:
        return self.end - self.start

    @property
    def strike_factor(self) -> float:
        """``K' = 1 + (T - S) K``."""
        return 1.0 + self.accrual * self.strike


# -- bonds -------------------------------------------------------------------------


def xi(t: float, S: float, params: ParamsLike, schedule: Schedule, left: bool = False) -> float:
    """Part of ``-log P(t, S)`` not multiplying the current rate.

    ``P(t, S) = exp(-rho_t B'(t, S) - xi(t, S))``; independent of the state.
    """
    if t > S:
        raise DomainError("xi needs t <= S")
    factors = as_factors(params)
    zero = np.zeros(len(factors))
    m = R_moments(t, S, zero, 0.0, params, schedule, left=left)
    return m.mean - 0.5 * m.variance


def bond_loading(t: float, S: float, params: HullWhiteParams, schedule: Schedule, left: bool = False) -> float:
    """Coefficient of the rate in ``-log P(t, S)``, i.e. ``B'(t, S)``."""
    p = single_factor(params)
    if left:
        return kernel_B(p.beta, S - t) + sum(
            math.exp(p.beta * (a - t)) for a in schedule.atoms_in(t, S, include_left=True))
    return kernel_Bprime(t, S, p.beta, schedule)


def bond_coefficients(t: float, T: float, params: ParamsLike, schedule: Schedule,
                      left: bool = False) -> tuple[np.ndarray, float]:
    """``(loadings, xi)`` with ``P(t, T) = exp(-<loadings, factor states> - xi)``."""
    factors = as_factors(params)
    loads = np.array([bond_loading(t, T, p, schedule, left=left) for p in factors])
    return loads, xi(t, T, params, schedule, left=left)


def bond_price(t: float, T: float, rho_t, params: ParamsLike, schedule: Schedule, left: bool = False) -> float:
    """Zero-coupon bond price ``P(t, T)`` given the current rate state."""
    if t > T:
        raise DomainError("bond_price needs t <= T")
    if t == T and not left:
        return 1.0
    m = R_moments(t, T, rho_t, 0.0, params, schedule, left=left)
    return math.exp(-m.mean + 0.5 * m.variance)


def bond_price_extended(t: float, S: float, fixings: Mapping[tuple[float, float], float],
                        schedule: Schedule, stub: tuple[float, float] | None = None) -> float:
    """Bond price beyond its maturity, rolled over at the overnight fixings.

    Parameters
    ----------
    fixings : mapping
        Realized one-period bond prices ``P(t_n, t_{n+1})`` keyed by ``(t_n, t_{n+1})``.
    stub : (P(t, t_n(t)), P(t_{n(t)-1}, t_n(t))), optional
        Current price of the next roll-over bond and its fixing at the
        previous roll-over date; required whenever ``t`` is not itself a
        roll-over date.
    """
    if t < S:
        raise DomainError("bond_price_extended needs t >= S")
    if t == S:
        return 1.0
    dates = (0.0,) + tuple(d for d in schedule.roll_over_dates if d > 0.0)
    value = 1.0
    for a, b in zip(dates, dates[1:]):
        if S <= a and b <= t:
            if (a, b) not in fixings:
                raise DataError(f"missing fixing P({a}, {b})")
            value /= fixings[(a, b)]
    if stub is None:
        # on a roll-over date the stub ratio is P(t, t_n) / P(t, t_n) = 1
        if t in dates:
            return value
        raise DataError("stub bond prices are required between roll-over dates")
    current, fixing = stub
    if current <= 0 or fixing <= 0:
        raise DataError("stub prices must be positive")
    return value * current / fixing


def backward_rate(S: float, T: float, fixings: Mapping[tuple[float, float], float] | None = None,
                  numeraire: tuple[float, float] | None = None,
                  schedule: Schedule | None = None) -> float:
    """Setting-in-arrears rate over ``[S, T]``.

    Either compounds the one-period bond fixings of the roll periods contained
    in ``[S, T]`` or, given ``numeraire = (S0_S, S0_T)``, uses the numeraire
    ratio. The two agree when the numeraire is the rolled overnight account.
    """
    if not S < T:
        raise DomainError("backward_rate needs S < T")
    accrual = T - S
    if numeraire is not None:
        s0_S, s0_T = numeraire
        return (s0_T / s0_S - 1.0) / accrual
    if fixings is None or schedule is None:
        raise DataError("backward_rate needs fixings with a schedule, or numeraire values")
    dates = (0.0,) + tuple(d for d in schedule.roll_over_dates if d > 0.0)
    growth = 1.0
    for a, b in zip(dates, dates[1:]):
        if S <= a and b <= T:
            if (a, b) not in fixings:
                raise DataError(f"missing fixing P({a}, {b})")
            growth /= fixings[(a, b)]
    return (growth - 1.0) / accrual


def forward_term_rate(t: float, S: float, T: float, params: ParamsLike, schedule: Schedule, rho_t=None,
                      realized: Callable[[float], float] | None = None) -> float:
    """``R(t, S, T) = (P(t, S) / P(t, T) - 1) / (T - S)``.

    For ``t > S`` the bond maturing at ``S`` is rolled over; ``realized`` then
    supplies ``P(t, S)`` (e.g. a closure over :func:`bond_price_extended`).
    """
    if not S < T:
        raise DomainError("forward_term_rate needs S < T")
    if t > T:
        raise DomainError("forward_term_rate needs t <= T")
    if t <= S:
        pS = bond_price(t, S, rho_t, params, schedule)
    else:
        if realized is None:
            raise DataError("t > S needs the realized rolled-over bond value")
        pS = realized(t)
    pT = bond_price(t, T, rho_t, params, schedule)
    return (pS / pT - 1.0) / (T - S)


# -- forward measure and caplets -------------------------------------------------------


@dataclass(frozen=True)
class ForwardMeasureParams:
    gamma1: float
    gamma2: float


def forward_measure_params(t: float, S: float, params: ParamsLike, schedule: Schedule,
                           left: bool = False) -> ForwardMeasureParams:
    """Drift shift and variance of ``rho_S`` under the ``S``-forward measure.

    ``rho_S ~ N(rho_t e^{beta (S - t)} + gamma1, gamma2)``. The shift is the
    Gaussian exponential tilt ``-Cov(rho_S, R_S)``; for the diffusion part
    this is the drift correction ``-sigma**2 B'(s, S)``.
    """
    if t > S:
        raise DomainError("forward_measure_params needs t <= S")
    p = single_factor(params)
    law = joint_gaussian_law(t, S, 0.0, 0.0, p, schedule, left=left)
    gamma1 = law.mean[0] - law.cov[0, 1]
    gamma2 = max(law.cov[0, 0], 0.0)
    return ForwardMeasureParams(gamma1, gamma2)


@dataclass(frozen=True)
class CapletCoefficients:
    """State-independent pieces of the caplet formula at one valuation time.

    ``price`` and ``delta`` are vectorized over the rate ``x``.
    """

    t: float
    spec: CapletSpec
    loading_tS: float
    xi_tS: float
    loading_tT: float
    loading_ST: float
    xi_ST: float
    decay: float
    gamma1: float
    gamma2: float

    def bond_S(self, x):
        return np.exp(-np.asarray(x, dtype=float) * self.loading_tS - self.xi_tS)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        Kp = self.spec.strike_factor
        mu = x * self.decay + self.gamma1
        if self.gamma2 <= 0.0:
            # deterministic rho_S: in or out of the money with certainty
            itm = 1.0 - Kp * np.exp(-self.xi_ST - self.loading_ST * mu) > 0
            return np.where(itm, np.inf, -np.inf)
        sd = math.sqrt(self.gamma2)
        return (-math.log(Kp) + self.xi_ST) / (self.loading_ST * sd) + mu / sd

    def price(self, x):
        x = np.asarray(x, dtype=float)
        Kp = self.spec.strike_factor
        b = self.loading_ST
        mu = x * self.decay + self.gamma1
        bond_S = self.bond_S(x)
        if self.gamma2 <= 0.0:
            return bond_S * np.maximum(1.0 - Kp * np.exp(-self.xi_ST - b * mu), 0.0)
        d1 = self.d1(x)
        d2 = d1 - b * math.sqrt(self.gamma2)
        value = bond_S * (norm.cdf(d1) - Kp * np.exp(-self.xi_ST - b * (mu - 0.5 * b * self.gamma2)) * norm.cdf(d2))
        return np.maximum(value, 0.0)

    def delta(self, x):
        """``dG/dx = -G B'(t,T) + B'(S,T) e^{beta (S-t)} P(t,S) N(d1)``."""
        x = np.asarray(x, dtype=float)
        return -self.price(x) * self.loading_tT + self.loading_ST * self.decay * self.bond_S(x) * norm.cdf(self.d1(x))


def caplet_coefficients(t: float, spec: CapletSpec, params: ParamsLike, schedule: Schedule,
                        left: bool = False) -> CapletCoefficients:
    p = single_factor(params)
    S, T = spec.start, spec.end
    if t > S:
        raise DomainError("caplet valuation needs t <= S")
    fm = forward_measure_params(t, S, p, schedule, left=left)
    return CapletCoefficients(
        t=t,
        spec=spec,
        loading_tS=bond_loading(t, S, p, schedule, left=left),
        xi_tS=xi(t, S, p, schedule, left=left),
        loading_tT=bond_loading(t, T, p, schedule, left=left),
        loading_ST=kernel_Bprime(S, T, p.beta, schedule),
        xi_ST=xi(S, T, p, schedule),
        decay=math.exp(p.beta * (S - t)),
        gamma1=fm.gamma1,
        gamma2=fm.gamma2,
    )


def caplet_price(x, t: float, spec: CapletSpec, params: ParamsLike, schedule: Schedule, left: bool = False):
    """Price at ``t`` of a forward-looking caplet when the rate equals ``x``.

    Returns a float for scalar ``x`` and an array otherwise.
    """
    value = caplet_coefficients(t, spec, params, schedule, left=left).price(x)
    return float(value) if np.ndim(value) == 0 else value


def caplet_delta(x, t: float, spec: CapletSpec, params: ParamsLike, schedule: Schedule):
    """Analytic sensitivity of the caplet price to the current rate."""
    value = caplet_coefficients(t, spec, params, schedule).delta(x)
    return float(value) if np.ndim(value) == 0 else value


# -- futures ----------------------------------------------------------------------------


HLike = Union[float, Callable[[float], float]]


def futures_loading(t: float, S: float, T: float, beta: float) -> float:
    """``B(t, S, T) = (B(T - t) - B(S - t)) / (T - S)``."""
    if not S < T:
        raise DomainError("futures reference period needs S < T")
    # e^{beta (S-t)} B(T-S) avoids the cancellation of the difference
    return math.exp(beta * (S - t)) * kernel_B(beta, T - S) / (T - S)


def _h_callable(h: HLike) -> Callable[[float], float]:
    if callable(h):
        return h
    value = float(h)
    return lambda _t: value


def minimal_measure_alpha(params: HullWhiteParams, S: float, T: float, h: HLike = 0.0):
    """Drift of the rate under the minimal martingale measure.

    Returns the original drift when ``h`` is identically zero, otherwise a
    callable ``alpha(t) - h(t) / B(t, S, T)``.
    """
    p = single_factor(params)
    if not callable(h) and float(h) == 0.0:
        return p.alpha
    hf = _h_callable(h)
    alpha = p.alpha

    def alpha_hat(t: float) -> float:
        return alpha(t) - hf(t) / futures_loading(t, S, T, p.beta)

    return alpha_hat


def minimal_measure_params(params: ParamsLike, S: float, T: float, h: HLike = 0.0) -> HullWhiteParams:
    p = single_factor(params)
    alpha_hat = minimal_measure_alpha(p, S, T, h)
    return p if alpha_hat is p.alpha else p.with_alpha(alpha_hat)


def futures_rate(t: float, S: float, T: float, rho_t: float, params: ParamsLike, schedule: Schedule,
                 h: HLike = 0.0, left: bool = False) -> float:
    """Futures rate settling on ``(R_T - R_S) / (T - S)``, valued under the minimal measure.

    With ``left=True`` the state is the rate just before ``t`` and a jump at
    ``t`` is still ahead.
    """
    if not (0 <= t <= S < T):
        raise DomainError("futures_rate needs 0 <= t <= S < T")
    if schedule.atoms_in(t, T):
        raise ConfigurationError("futures_rate assumes no roll-over dates inside (t, T]")
    p_hat = minimal_measure_params(params, S, T, h)
    mS = R_moments(t, S, rho_t, 0.0, p_hat, schedule, left=left).mean
    mT = R_moments(t, T, rho_t, 0.0, p_hat, schedule, left=left).mean
    return (mT - mS) / (T - S)


# -- curve fitting -----------------------------------------------------------------------


def fit_drift_to_curve(curve: DiscountCurve, params: HullWhiteParams, schedule: Schedule,
                       tol: float = 1e-12) -> PiecewiseConstant:
    """Bootstrap a piecewise-constant drift that reprices every pillar.

    The drift is constant between consecutive pillar maturities (the last
    value extends beyond the last pillar); each bucket is solved by bracketed
    root finding on the log discount factor of its pillar.
    """
    p = single_factor(params)
    pillars = [(T, df) for T, df in curve.pillars if T > 0]
    if not pillars:
        raise CalibrationError("curve has no pillar with positive maturity")
    breakpoints: list[float] = []
    values: list[float] = []
    for k, (T, df) in enumerate(pillars):
        target = -math.log(df)

        def residual(v: float) -> float:
            alpha = PiecewiseConstant(tuple(breakpoints), tuple(values + [v]))
            m = R_moments(0.0, T, p.rho0, 0.0, p.with_alpha(alpha), schedule)
            return m.mean - 0.5 * m.variance - target

        lo, hi = -0.1, 0.1
        flo, fhi = residual(lo), residual(hi)
        expansions = 0
        while flo * fhi > 0:
            lo, hi = 2 * lo, 2 * hi
            flo, fhi = residual(lo), residual(hi)
            expansions += 1
            if expansions > 60:
                raise CalibrationError(f"could not bracket the drift for pillar T={T}", pillar=T)
        root = brentq(residual, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
        values.append(root)
        breakpoints.append(T)
    return PiecewiseConstant(tuple(breakpoints[:-1]), tuple(values))
