"""Discontinuity schedules and integration kernels against the accrual measure.

The accrual measure is Lebesgue time plus a unit Dirac mass at every
roll-over date::

    eta(du) = du + sum_j delta_{t_j}(du)

All intervals are half-open on the left, ``(a, b]``: an atom sitting exactly
at ``a`` is excluded, one at ``b`` is included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericalError

# |beta * tau| below this uses the power series of the exponential kernels
SERIES_THRESHOLD = 1e-4
_PHI_SERIES_CUTOFF = 0.5
_PHI_TERMS = 30


def _as_dates(values: Sequence[float], name: str) -> tuple[float, ...]:
    dates = tuple(float(v) for v in values)
    for d in dates:
        if not math.isfinite(d):
            raise DomainError(f"{name}: non-finite date {d!r}")
        if d < 0.0:
            raise DomainError(f"{name}: negative date {d!r}")
    for a, b in zip(dates, dates[1:]):
        if not b > a:
            raise DomainError(f"{name}: dates must be strictly increasing ({a!r} >= {b!r})")
    return dates


@dataclass(frozen=True)
class Schedule:
    """Roll-over dates and expected jump dates.

    Parameters
    ----------
    roll_over_dates : sequence of float
        Dates at which the overnight numeraire compounds; each one carries a
        unit atom of the accrual measure.
    expected_jump_dates : sequence of float
        Dates at which the overnight rate may jump.
    horizon : float, optional
        Upper bound for all dates. Defaults to the largest date (or 0).
    """

    roll_over_dates: tuple[float, ...] = ()
    expected_jump_dates: tuple[float, ...] = ()
    horizon: float | None = None

    def __post_init__(self):
        ro = _as_dates(self.roll_over_dates, "roll_over_dates")
        ej = _as_dates(self.expected_jump_dates, "expected_jump_dates")
        horizon = self.horizon
        if horizon is None:
            horizon = max(ro + ej, default=0.0)
        horizon = float(horizon)
        if not math.isfinite(horizon):
            raise DomainError("horizon must be finite")
        for d in ro + ej:
            if d > horizon:
                raise DomainError(f"date {d!r} lies beyond horizon {horizon!r}")
        object.__setattr__(self, "roll_over_dates", ro)
        object.__setattr__(self, "expected_jump_dates", ej)
        object.__setattr__(self, "horizon", horizon)

    def atoms_in(self, a: float, b: float, include_left: bool = False) -> tuple[float, ...]:
        """Roll-over dates in ``(a, b]`` (or ``[a, b]`` with ``include_left``)."""
        if include_left:
            return tuple(t for t in self.roll_over_dates if a <= t <= b)
        return tuple(t for t in self.roll_over_dates if a < t <= b)

    def is_roll_over(self, t: float) -> bool:
        return t in self.roll_over_dates

    def is_expected_jump(self, t: float) -> bool:
        return t in self.expected_jump_dates

    def overlap(self) -> tuple[float, ...]:
        """Dates that are both roll-over dates and expected jump dates."""
        jumps = set(self.expected_jump_dates)
        return tuple(t for t in self.roll_over_dates if t in jumps)

    def event_dates(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.roll_over_dates) | set(self.expected_jump_dates)))

    def without_roll_over(self) -> "Schedule":
        return Schedule((), self.expected_jump_dates, self.horizon)

    def to_dict(self) -> dict:
        return {
            "roll_over": list(self.roll_over_dates),
            "expected_jumps": list(self.expected_jump_dates),
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        return cls(
            tuple(data.get("roll_over", ())),
            tuple(data.get("expected_jumps", ())),
            data.get("horizon"),
        )


def _check_interval(a: float, b: float) -> None:
    if a > b:
        raise DomainError(f"interval end {b!r} precedes start {a!r}")


def phi(k: int, x: float) -> float:
    """Entire function ``sum_j x**j / (j + k)!``.

    ``phi(0, x) = exp(x)``, ``phi(1, x) = (exp(x) - 1) / x`` and so on. The
    higher orders are the building blocks for every exponential kernel below
    and stay accurate as ``x -> 0``.
    """
    if abs(x) < _PHI_SERIES_CUTOFF:
        term = 1.0 / math.factorial(k)
        total = term
        for j in range(1, _PHI_TERMS):
            term *= x / (j + k)
            total += term
        return total
    value = math.exp(x)
    for n in range(1, k + 1):
        value = (value - 1.0 / math.factorial(n - 1)) / x
    return value


def kernel_B(beta: float, tau: float) -> float:
    """``(exp(beta * tau) - 1) / beta``, continuous through ``beta = 0``."""
    if tau < 0:
        raise DomainError(f"tau must be nonnegative, got {tau!r}")
    x = beta * tau
    if abs(x) < SERIES_THRESHOLD:
        return tau * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0 + x**4 / 120.0)
    return math.expm1(x) / beta


def kernel_C(beta: float, tau: float) -> float:
    """Antiderivative of ``kernel_B``: ``(exp(beta*tau) - 1 - beta*tau) / beta**2``."""
    return tau * tau * phi(2, beta * tau)


def kernel_BB(beta: float, tau: float) -> float:
    """``int_0^tau B(s)**2 ds``."""
    x = beta * tau
    return 2.0 * tau**3 * (2.0 * phi(3, 2.0 * x) - phi(3, x))


def kernel_Bprime(t: float, T: float, beta: float, schedule: Schedule) -> float:
    """``int_{(t,T]} exp(beta (u - t)) eta(du)``."""
    _check_interval(t, T)
    value = kernel_B(beta, T - t)
    for tj in schedule.atoms_in(t, T):
        value += math.exp(beta * (tj - t))
    return value


def kernel_Bbar(t: float, T: float, beta: float, schedule: Schedule) -> float:
    """``int_{(t,T]} exp(2 beta (u - t)) eta(du)``."""
    return kernel_Bprime(t, T, 2.0 * beta, schedule)


def eta_integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    schedule: Schedule,
    antiderivative: Callable[[float], float] | None = None,
    epsabs: float = 1e-12,
    epsrel: float = 1e-12,
    points: Sequence[float] | None = None,
) -> float:
    """Integrate ``f`` over ``(a, b]`` against the accrual measure.

    The Lebesgue part uses ``antiderivative`` when given, otherwise adaptive
    Gauss-Kronrod quadrature; the atom sum is exact.
    """
    _check_interval(a, b)
    if antiderivative is not None:
        lebesgue = antiderivative(b) - antiderivative(a)
    elif b == a:
        lebesgue = 0.0
    else:
        inner = [p for p in (points or ()) if a < p < b]
        lebesgue, err = integrate.quad(
            f, a, b, epsabs=epsabs, epsrel=epsrel, limit=500, points=inner or None
        )
        if not np.isfinite(lebesgue) or err > max(1e3 * epsabs, 1e3 * epsrel * abs(lebesgue)):
            raise NumericalError(f"quadrature did not converge (estimated error {err:.3e})")
    return lebesgue + sum(f(tj) for tj in schedule.atoms_in(a, b))


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function.

    ``values[k]`` holds on ``[breakpoints[k-1], breakpoints[k])`` with the
    first and last pieces extending to minus and plus infinity.
    """

    breakpoints: tuple[float, ...] = ()
    values: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(vals) != len(bps) + 1:
            raise DomainError("piecewise-constant function needs len(values) == len(breakpoints) + 1")
        for a, b in zip(bps, bps[1:]):
            if not b > a:
                raise DomainError("breakpoints must be strictly increasing")
        if not all(math.isfinite(v) for v in bps + vals):
            raise DomainError("piecewise-constant function must be finite")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float) -> "PiecewiseConstant":
        return cls((), (float(value),))

    def __call__(self, t: float) -> float:
        return self.values[int(np.searchsorted(self.breakpoints, t, side="right"))]

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def pieces(self, a: float, b: float):
        """Yield ``(lo, hi, value)`` covering ``[a, b]``."""
        if b <= a:
            return
        k = int(np.searchsorted(self.breakpoints, a, side="right"))
        lo = a
        while lo < b:
            hi = self.breakpoints[k] if k < len(self.breakpoints) else math.inf
            hi = min(hi, b)
            yield lo, hi, self.values[k]
            lo = hi
            k += 1

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "values": list(self.values)}

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseConstant":
        return cls(tuple(data.get("breakpoints", ())), tuple(data["values"]))


AlphaLike = "PiecewiseConstant | Callable[[float], float]"


def drift_a(t: float, T: float, beta: float, alpha) -> float:
    """``a(t, T) = int_t^T exp(beta (T - s)) alpha(s) ds``."""
    _check_interval(t, T)
    if isinstance(alpha, PiecewiseConstant):
        total = 0.0
        for lo, hi, val in alpha.pieces(t, T):
            if val != 0.0:
                total += val * math.exp(beta * (T - hi)) * kernel_B(beta, hi - lo)
        return total
    return _quad(lambda s: math.exp(beta * (T - s)) * alpha(s), t, T)


def drift_A(t: float, T: float, beta: float, alpha) -> float:
    """``A(t, T) = int_t^T a(t, u) du = int_t^T alpha(s) B(T - s) ds``."""
    _check_interval(t, T)
    if isinstance(alpha, PiecewiseConstant):
        total = 0.0
        for lo, hi, val in alpha.pieces(t, T):
            if val != 0.0:
                total += val * (kernel_C(beta, T - lo) - kernel_C(beta, T - hi))
        return total
    return _quad(lambda s: alpha(s) * kernel_B(beta, T - s), t, T)


def kernel_Aprime(t: float, T: float, beta: float, alpha, schedule: Schedule) -> float:
    """``A'(t, T) = int_{(t,T]} a(t, u) eta(du)``."""
    value = drift_A(t, T, beta, alpha)
    for tj in schedule.atoms_in(t, T):
        value += drift_a(t, tj, beta, alpha)
    return value


def _quad(f, a: float, b: float) -> float:
    if b == a:
        return 0.0
    value, err = integrate.quad(f, a, b, epsabs=1e-10, epsrel=1e-12, limit=500)
    if not np.isfinite(value) or err > 1e-8:
        raise NumericalError(f"quadrature did not converge (estimated error {err:.3e})")
    return value
