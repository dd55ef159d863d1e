"""Gaussian Hull-White overnight-rate model with scheduled jumps.

The overnight rate solves::

    d rho_t = (alpha(t) + beta rho_t) dt + sigma dW_t + dJ_t

where ``J`` jumps by ``xi_i ~ N(m_i, gamma_i**2)`` at the fixed dates ``s_i``.
``R_T = int_0^T rho_u eta(du)`` integrates the rate against the accrual
measure of a :class:`~rfrlab.schedule.Schedule`; at a date that is both a
roll-over date and a jump date, the atom integrates the post-jump rate.

A negative ``beta`` gives mean reversion. Multi-factor models are tuples of
independent :class:`HullWhiteParams`; the overnight rate is their sum and the
state ``rho_t`` is then a sequence with one entry per factor.

Every conditional quantity accepts ``left=True`` to condition on the state
just *before* ``t``; a jump or atom scheduled exactly at ``t`` is then still
ahead, so the relevant window is ``[t, T]`` instead of ``(t, T]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DomainError
from .schedule import (
    PiecewiseConstant,
    Schedule,
    drift_a,
    drift_A,
    kernel_B,
    kernel_BB,
)


@dataclass(frozen=True)
class JumpSpec:
    """Gaussian jump ``xi ~ N(mean, std**2)`` scheduled at ``date``."""

    date: float
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        for name in ("date", "mean", "std"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"jump {name} must be finite")
            object.__setattr__(self, name, v)
        if self.std < 0:
            raise DomainError("jump std must be nonnegative")
        if self.date < 0:
            raise DomainError("jump date must be nonnegative")

    @property
    def variance(self) -> float:
        return self.std * self.std


@dataclass(frozen=True)
class HullWhiteParams:
    """One factor of the model.

    Parameters
    ----------
    rho0 : float
        Initial value of the factor.
    beta : float
        Linear drift coefficient; negative values mean-revert.
    sigma : float
        Diffusion volatility, ``>= 0``.
    alpha : PiecewiseConstant or callable
        Deterministic drift. Piecewise-constant drifts get closed-form
        kernels; any other callable falls back to adaptive quadrature.
    jumps : sequence of JumpSpec
        Scheduled Gaussian jumps with strictly increasing dates.
    """

    rho0: float = 0.0
    beta: float = 0.0
    sigma: float = 0.0
    alpha: Union[PiecewiseConstant, Callable[[float], float]] = field(
        default_factory=lambda: PiecewiseConstant.constant(0.0)
    )
    jumps: tuple[JumpSpec, ...] = ()

    def __post_init__(self):
        for name in ("rho0", "beta", "sigma"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")
        alpha = self.alpha
        if isinstance(alpha, (int, float)):
            alpha = PiecewiseConstant.constant(alpha)
        elif not callable(alpha):
            raise DomainError("alpha must be a PiecewiseConstant or a callable")
        object.__setattr__(self, "alpha", alpha)
        jumps = tuple(j if isinstance(j, JumpSpec) else JumpSpec(**j) for j in self.jumps)
        for a, b in zip(jumps, jumps[1:]):
            if not b.date > a.date:
                raise DomainError("jump dates must be strictly increasing")
        object.__setattr__(self, "jumps", jumps)

    @property
    def jump_dates(self) -> tuple[float, ...]:
        return tuple(j.date for j in self.jumps)

    def with_alpha(self, alpha) -> "HullWhiteParams":
        return replace(self, alpha=alpha)

    def to_dict(self) -> dict:
        if not isinstance(self.alpha, PiecewiseConstant):
            raise ConfigurationError("only piecewise-constant alpha can be serialized")
        return {
            "rho0": self.rho0,
            "beta": self.beta,
            "sigma": self.sigma,
            "alpha": self.alpha.to_dict(),
            "jumps": [{"date": j.date, "mean": j.mean, "std": j.std} for j in self.jumps],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HullWhiteParams":
        alpha = data.get("alpha", 0.0)
        if isinstance(alpha, dict):
            alpha = PiecewiseConstant.from_dict(alpha)
        return cls(
            rho0=data.get("rho0", 0.0),
            beta=data.get("beta", 0.0),
            sigma=data.get("sigma", 0.0),
            alpha=alpha,
            jumps=tuple(JumpSpec(**j) for j in data.get("jumps", ())),
        )


ParamsLike = Union[HullWhiteParams, Sequence[HullWhiteParams]]


def as_factors(params: ParamsLike) -> tuple[HullWhiteParams, ...]:
    if isinstance(params, HullWhiteParams):
        return (params,)
    factors = tuple(params)
    if not factors or not all(isinstance(p, HullWhiteParams) for p in factors):
        raise ConfigurationError("params must be HullWhiteParams or a non-empty sequence of them")
    return factors


def single_factor(params: ParamsLike) -> HullWhiteParams:
    factors = as_factors(params)
    if len(factors) != 1:
        raise ConfigurationError("this operation supports single-factor models only")
    return factors[0]


def factor_states(params: ParamsLike, rho_t) -> np.ndarray:
    """Per-factor state vector; ``None`` means the initial values ``rho0``."""
    factors = as_factors(params)
    if rho_t is None:
        return np.array([p.rho0 for p in factors])
    states = np.atleast_1d(np.asarray(rho_t, dtype=float))
    if states.shape != (len(factors),):
        raise ConfigurationError(f"expected {len(factors)} factor state(s), got shape {states.shape}")
    return states


def check_consistency(params: ParamsLike, schedule: Schedule) -> None:
    """Factor jump dates must exactly cover the schedule's expected jump dates."""
    factors = as_factors(params)
    union: set[float] = set()
    expected = set(schedule.expected_jump_dates)
    for p in factors:
        dates = set(p.jump_dates)
        extra = dates - expected
        if extra:
            raise ConfigurationError(f"jump dates {sorted(extra)} are not expected jump dates of the schedule")
        union |= dates
    missing = expected - union
    if missing:
        raise ConfigurationError(f"expected jump dates {sorted(missing)} have no jump specification")


def _window(a: float, t: float, T: float, left: bool) -> bool:
    return (t <= a <= T) if left else (t < a <= T)


def _check(t: float, T: float) -> None:
    if not math.isfinite(t) or not math.isfinite(T):
        raise DomainError("times must be finite")
    if t > T:
        raise DomainError(f"T={T!r} precedes t={t!r}")


def active_jumps(p: HullWhiteParams, t: float, T: float, left: bool = False) -> list[JumpSpec]:
    return [j for j in p.jumps if _window(j.date, t, T, left)]


def active_atoms(schedule: Schedule, t: float, T: float, left: bool = False) -> tuple[float, ...]:
    return schedule.atoms_in(t, T, include_left=left)


def _bprime_from(a: float, T: float, beta: float, atoms: Sequence[float]) -> float:
    # atoms already restricted to the relevant window starting at a
    return kernel_B(beta, T - a) + sum(math.exp(beta * (tj - a)) for tj in atoms if tj >= a)


def _jump_weight(s: float, T: float, beta: float, atoms: Sequence[float]) -> float:
    """Loading of a jump at ``s`` on ``R_T - R_t``: ``B(T-s) + sum_{t_j in [s,T]} e^{beta(t_j-s)}``."""
    return kernel_B(beta, T - s) + sum(math.exp(beta * (tj - s)) for tj in atoms if s <= tj <= T)


def _diffusion_blocks(t: float, T: float, beta: float, atoms: Sequence[float]):
    """Yield ``(lo, hi, D)`` with ``B'(r, T) = B(hi - r) + D e^{beta (hi - r)}`` on ``(lo, hi)``."""
    inner = sorted(a for a in atoms if t < a < T)
    nodes = [t] + inner + [T]
    for lo, hi in zip(nodes, nodes[1:]):
        if hi > lo:
            D = kernel_B(beta, T - hi) + sum(math.exp(beta * (tj - hi)) for tj in atoms if hi <= tj <= T)
            yield lo, hi, D


# -- single-factor building blocks -------------------------------------------------


def _rho_mean(p: HullWhiteParams, t: float, T: float, x: float, left: bool) -> float:
    m = x * math.exp(p.beta * (T - t)) + drift_a(t, T, p.beta, p.alpha)
    for j in active_jumps(p, t, T, left):
        m += j.mean * math.exp(p.beta * (T - j.date))
    return m


def _rho_var(p: HullWhiteParams, t: float, T: float, left: bool) -> float:
    v = p.sigma**2 * kernel_B(2.0 * p.beta, T - t)
    for j in active_jumps(p, t, T, left):
        v += j.variance * math.exp(2.0 * p.beta * (T - j.date))
    return v


def _rho_cov(p: HullWhiteParams, t: float, T1: float, T2: float, left: bool) -> float:
    lo, hi = min(T1, T2), max(T1, T2)
    c = p.sigma**2 * math.exp(p.beta * (hi - lo)) * kernel_B(2.0 * p.beta, lo - t)
    for j in active_jumps(p, t, lo, left):
        c += j.variance * math.exp(p.beta * (T1 + T2 - 2.0 * j.date))
    return c


def _R_mean_increment(p: HullWhiteParams, t: float, T: float, x: float, schedule: Schedule, left: bool) -> float:
    """``E[R_T | rho_t = x] - R_t``."""
    atoms = active_atoms(schedule, t, T, left)
    beta = p.beta
    value = x * _bprime_from(t, T, beta, atoms)
    value += drift_A(t, T, beta, p.alpha)
    for tj in atoms:
        value += drift_a(t, tj, beta, p.alpha)
    for j in active_jumps(p, t, T, left):
        value += j.mean * _jump_weight(j.date, T, beta, atoms)
    return value


def _R_var(p: HullWhiteParams, t: float, T: float, schedule: Schedule, left: bool) -> float:
    atoms = active_atoms(schedule, t, T, left)
    beta = p.beta
    var = 0.0
    if p.sigma > 0:
        diff = 0.0
        for lo, hi, D in _diffusion_blocks(t, T, beta, atoms):
            L = hi - lo
            diff += kernel_BB(beta, L) + D * kernel_B(beta, L) ** 2 + D * D * kernel_B(2.0 * beta, L)
        var += p.sigma**2 * diff
    for j in active_jumps(p, t, T, left):
        var += j.variance * _jump_weight(j.date, T, beta, atoms) ** 2
    return var


def _rho_R_cov(p: HullWhiteParams, t: float, T: float, schedule: Schedule, left: bool) -> float:
    atoms = active_atoms(schedule, t, T, left)
    beta = p.beta
    cov = 0.0
    if p.sigma > 0:
        diff = 0.0
        for lo, hi, D in _diffusion_blocks(t, T, beta, atoms):
            L = hi - lo
            diff += math.exp(beta * (T - hi)) * (0.5 * kernel_B(beta, L) ** 2 + D * kernel_B(2.0 * beta, L))
        cov += p.sigma**2 * diff
    for j in active_jumps(p, t, T, left):
        cov += j.variance * math.exp(beta * (T - j.date)) * _jump_weight(j.date, T, beta, atoms)
    return cov


# -- public operations -------------------------------------------------------------


@dataclass(frozen=True)
class RhoSolutionTerms:
    decay_factor: float
    drift_term: float
    diffusion_variance: float
    jump_contributions: tuple[tuple[float, float], ...]


def rho_solution_terms(t: float, T: float, params: HullWhiteParams, schedule: Schedule,
                       left: bool = False) -> RhoSolutionTerms:
    """Pieces of the explicit solution ``rho_T`` given ``rho_t``."""
    _check(t, T)
    p = single_factor(params)
    return RhoSolutionTerms(
        decay_factor=math.exp(p.beta * (T - t)),
        drift_term=drift_a(t, T, p.beta, p.alpha),
        diffusion_variance=p.sigma**2 * kernel_B(2.0 * p.beta, T - t),
        jump_contributions=tuple(
            (j.date, math.exp(p.beta * (T - j.date))) for j in active_jumps(p, t, T, left)
        ),
    )


@dataclass(frozen=True)
class RhoMoments:
    mean_at_T1: float
    mean_at_T2: float
    covariance: float


def rho_moments(t: float, T1: float, T2: float, rho_t, params: ParamsLike, schedule: Schedule,
                left: bool = False) -> RhoMoments:
    """Conditional means of ``rho_T1``, ``rho_T2`` and their covariance."""
    _check(t, T1)
    _check(t, T2)
    factors = as_factors(params)
    x = factor_states(params, rho_t)
    m1 = sum(_rho_mean(p, t, T1, xi, left) for p, xi in zip(factors, x))
    m2 = sum(_rho_mean(p, t, T2, xi, left) for p, xi in zip(factors, x))
    c = sum(_rho_cov(p, t, T1, T2, left) for p in factors)
    return RhoMoments(m1, m2, c)


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float


def R_moments(t: float, T: float, rho_t, R_t: float, params: ParamsLike, schedule: Schedule,
              left: bool = False) -> Moments:
    """Conditional mean and variance of ``R_T`` given ``(rho_t, R_t)``."""
    _check(t, T)
    factors = as_factors(params)
    x = factor_states(params, rho_t)
    mean = R_t + sum(_R_mean_increment(p, t, T, xi, schedule, left) for p, xi in zip(factors, x))
    var = sum(_R_var(p, t, T, schedule, left) for p in factors)
    return Moments(mean, var)


def char_fn_rho(u: complex, t: float, T: float, rho_t, params: ParamsLike, schedule: Schedule,
                left: bool = False) -> complex:
    """``E[exp(u rho_T) | rho_t]`` for real or imaginary ``u``."""
    _check(t, T)
    if not np.isfinite(u):
        raise DomainError("u must be finite")
    factors = as_factors(params)
    x = factor_states(params, rho_t)
    exponent = 0j
    for p, xi in zip(factors, x):
        psi = u * math.exp(p.beta * (T - t))
        exponent += psi * xi + u * drift_a(t, T, p.beta, p.alpha)
        exponent += 0.5 * (u * p.sigma) ** 2 * kernel_B(2.0 * p.beta, T - t)
        for j in active_jumps(p, t, T, left):
            w = u * math.exp(p.beta * (T - j.date))
            exponent += w * j.mean + 0.5 * w * w * j.variance
    return complex(np.exp(exponent))


@dataclass(frozen=True)
class GaussianLaw2:
    """Bivariate normal law of ``(rho_T, R_T)``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-14 * max(1.0, np.abs(cov).max())):
            raise DomainError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        w = np.linalg.eigvalsh(cov)
        if w.min() < -1e-12 * max(1.0, abs(w.max())):
            raise DomainError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def cholesky(self) -> np.ndarray:
        """Lower factor with negative rounding clamped to zero."""
        v1, c, v2 = self.cov[0, 0], self.cov[0, 1], self.cov[1, 1]
        l11 = math.sqrt(max(v1, 0.0))
        l21 = c / l11 if l11 > 0 else 0.0
        l22 = math.sqrt(max(v2 - l21 * l21, 0.0))
        return np.array([[l11, 0.0], [l21, l22]])


def joint_gaussian_law(t: float, T: float, rho_t, R_t: float, params: ParamsLike, schedule: Schedule,
                       left: bool = False) -> GaussianLaw2:
    """Exact joint law of ``(rho_T, R_T)`` conditional on ``(rho_t, R_t)``."""
    _check(t, T)
    factors = as_factors(params)
    x = factor_states(params, rho_t)
    m_rho = sum(_rho_mean(p, t, T, xi, left) for p, xi in zip(factors, x))
    m_R = R_t + sum(_R_mean_increment(p, t, T, xi, schedule, left) for p, xi in zip(factors, x))
    v_rho = sum(_rho_var(p, t, T, left) for p in factors)
    v_R = sum(_R_var(p, t, T, schedule, left) for p in factors)
    c = sum(_rho_R_cov(p, t, T, schedule, left) for p in factors)
    return GaussianLaw2(np.array([m_rho, m_R]), np.array([[v_rho, c], [c, v_R]]))


def jump_loading(s: float, T: float, params: HullWhiteParams, schedule: Schedule) -> float:
    """Sensitivity of ``R_T`` to a jump at ``s``: ``B'(s, T) + 1{s in roll-over dates}``."""
    p = single_factor(params)
    return _jump_weight(s, T, p.beta, schedule.atoms_in(s, T, include_left=True))
