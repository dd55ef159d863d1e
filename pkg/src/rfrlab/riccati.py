"""Generalized Riccati equations for affine semimartingales with fixed jump dates.

For ``Y = (X, R)`` with ``R = int rho deta`` and ``rho = ell(t) + <Lambda, X>``,
the conditional transform is::

    E[exp(<u, X_T> + v R_T) | F_t] = exp(Phi_t + <Psi_t, X_t> + v R_t)

``Phi`` and ``Psi`` run backward from ``Phi_T = 0``, ``Psi_T = u``. Between
discontinuity dates they follow ``dPsi/dt = -(R^X(t, Psi) + Lambda v)`` and
``dPhi/dt = -(F^X(t, Psi) + ell(t) v)``. At a date ``tau`` the jump ``Delta``
is right-minus-left, so crossing ``tau`` from the right *adds* the jump
exponent::

    Phi_{tau-} = Phi_tau + gamma0(tau, Psi_tau)                       tau not a roll-over date
    Phi_{tau-} = Phi_tau + v ell(tau) + gamma0(tau, Psi_tau + Lambda v)   tau a roll-over date

and likewise for ``Psi`` with ``gamma_bar`` and ``Lambda v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NumericalError
from .model import ParamsLike, as_factors
from .schedule import PiecewiseConstant, Schedule


class RiccatiBlowUpError(NumericalError):
    """The Riccati state became non-finite during backward integration."""

    def __init__(self, message: str, last_valid_time: float):
        super().__init__(message)
        self.last_valid_time = last_valid_time


def _zero_exponent(t, u):
    return 0j


@dataclass(frozen=True)
class AffineSpec:
    """Characteristics of an affine semimartingale ``X`` and the rate map.

    Attributes
    ----------
    dim : int
        Dimension of ``X``.
    F, R : callable
        Continuous Levy-Khintchine exponents ``F(t, u) -> complex`` and
        ``R(t, u) -> complex array of shape (dim,)``.
    jump_dates : tuple of float
        Stochastic discontinuity dates of ``X``.
    gamma0, gamma_bar : callable
        Jump exponents at those dates; must vanish at ``u = 0``.
    ell : callable
        Deterministic part of the rate.
    Lambda : ndarray
        Loading of the rate on ``X``.
    roll_over_dates : tuple of float
        Atoms of the accrual measure.
    smooth_breaks : tuple of float
        Extra grid nodes where ``F`` or ``R`` are discontinuous in time.
    """

    dim: int
    F: Callable
    R: Callable
    jump_dates: tuple[float, ...] = ()
    gamma0: Callable = _zero_exponent
    gamma_bar: Callable | None = None
    ell: Callable[[float], float] = lambda t: 0.0
    Lambda: np.ndarray = None
    roll_over_dates: tuple[float, ...] = ()
    smooth_breaks: tuple[float, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("dimension must be positive")
        lam = np.ones(self.dim) if self.Lambda is None else np.asarray(self.Lambda, dtype=float).reshape(self.dim)
        object.__setattr__(self, "Lambda", lam)
        if self.gamma_bar is None:
            object.__setattr__(self, "gamma_bar", lambda t, u: np.zeros(self.dim, dtype=complex))
        object.__setattr__(self, "jump_dates", tuple(sorted(float(d) for d in self.jump_dates)))
        object.__setattr__(self, "roll_over_dates", tuple(sorted(float(d) for d in self.roll_over_dates)))


def build_gaussian_hw_spec(params: ParamsLike, schedule: Schedule, ell: Callable[[float], float] | float = 0.0,
                           Lambda: Sequence[float] | None = None) -> AffineSpec:
    """Affine characteristics of the (multi-factor) Gaussian Hull-White model.

    ``X`` stacks the factors; ``F^X(t, u) = sum_k alpha_k(t) u_k + sigma_k**2 u_k**2 / 2``,
    ``R^X_k(t, u) = beta_k u_k`` and a Gaussian jump of factor ``k`` at ``s``
    contributes ``m u_k + gamma**2 u_k**2 / 2`` to ``gamma0``.
    """
    factors = as_factors(params)
    d = len(factors)
    alphas = [p.alpha for p in factors]
    betas = np.array([p.beta for p in factors], dtype=float)
    half_var = np.array([0.5 * p.sigma**2 for p in factors])
    ell_fn = ell if callable(ell) else (lambda t, _v=float(ell): _v)

    def F(t, u):
        total = 0j
        for k in range(d):
            total += alphas[k](t) * u[k] + half_var[k] * u[k] * u[k]
        return total

    def R(t, u):
        return betas * u

    by_date: dict[float, list[tuple[int, float, float]]] = {}
    for k, p in enumerate(factors):
        for j in p.jumps:
            by_date.setdefault(j.date, []).append((k, j.mean, j.variance))

    def gamma0(t, u):
        total = 0j
        for k, m, var in by_date.get(t, ()):
            total += m * u[k] + 0.5 * var * u[k] * u[k]
        return total

    breaks = set()
    for a in alphas:
        if isinstance(a, PiecewiseConstant):
            breaks.update(a.breakpoints)
    overlap = tuple(sorted(set(by_date) & set(schedule.roll_over_dates)))
    return AffineSpec(
        dim=d,
        F=F,
        R=R,
        jump_dates=tuple(sorted(by_date)),
        gamma0=gamma0,
        gamma_bar=lambda t, u: np.zeros(d, dtype=complex),
        ell=ell_fn,
        Lambda=np.ones(d) if Lambda is None else np.asarray(Lambda, dtype=float),
        roll_over_dates=schedule.roll_over_dates,
        smooth_breaks=tuple(sorted(breaks)),
        metadata={"overlap_dates": overlap},
    )


@dataclass(frozen=True)
class RiccatiSolution:
    """Backward trajectory of ``(Phi, Psi)``.

    ``times`` decreases from ``T``; ``Phi[k]``, ``Psi[k]`` are right values
    at ``times[k]``. Left limits at discontinuity dates sit in ``left_limits``.
    """

    times: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    left_limits: dict
    terminal: tuple
    overlap_dates: tuple[float, ...] = ()

    def at(self, t: float) -> tuple[complex, np.ndarray]:
        idx = np.flatnonzero(self.times == t)
        if idx.size == 0:
            raise DomainError(f"t={t} is not a node of the solution grid")
        k = idx[-1]
        return complex(self.Phi[k]), self.Psi[k].copy()


def _jump_update(spec: AffineSpec, tau: float, phi: complex, psi: np.ndarray, v: complex):
    in_jumps = tau in spec.jump_dates
    if tau in spec.roll_over_dates:
        shifted = psi + spec.Lambda * v
        dphi = v * spec.ell(tau)
        dpsi = spec.Lambda * v
        if in_jumps:
            dphi = dphi + spec.gamma0(tau, shifted)
            dpsi = dpsi + np.asarray(spec.gamma_bar(tau, shifted), dtype=complex)
        return phi + dphi, psi + dpsi
    if in_jumps:
        return phi + spec.gamma0(tau, psi), psi + np.asarray(spec.gamma_bar(tau, psi), dtype=complex)
    return phi, psi


def solve_riccati(spec: AffineSpec, T: float, u, v: complex, t_min: float, step: float) -> RiccatiSolution:
    """Integrate the generalized Riccati equations backward from ``T`` to ``t_min``.

    Classical fourth-order Runge-Kutta on each interval between consecutive
    discontinuity dates; ``step`` is a maximum, steps shrink to land exactly
    on every date.
    """
    if t_min > T:
        raise DomainError("t_min must not exceed T")
    if not step > 0:
        raise DomainError("step must be positive")
    d = spec.dim
    psi = np.asarray(u, dtype=complex).reshape(d).copy()
    phi = 0j
    v = complex(v)
    lam_v = spec.Lambda * v

    events = sorted({t for t in spec.jump_dates + spec.roll_over_dates if t_min < t <= T})
    nodes = sorted({T, t_min, *events, *(b for b in spec.smooth_breaks if t_min < b < T)}, reverse=True)
    event_set = set(events)

    def rhs(t, psi_):
        dpsi = -(np.asarray(spec.R(t, psi_), dtype=complex) + lam_v)
        dphi = -(spec.F(t, psi_) + spec.ell(t) * v)
        return dphi, dpsi

    times = [T]
    phis = [phi]
    psis = [psi.copy()]
    left_limits = {}
    # overflow is detected below and reported as a blow-up
    with np.errstate(over="ignore", invalid="ignore"):
        for hi, lo in zip(nodes, nodes[1:] + [None]):
            if hi in event_set:
                phi, psi = _jump_update(spec, hi, phi, psi, v)
                left_limits[hi] = (phi, psi.copy())
                if not (np.isfinite(phi) and np.all(np.isfinite(psi))):
                    raise RiccatiBlowUpError(f"non-finite state at jump date {hi}", hi)
            if lo is None:
                break
            n = max(1, math.ceil((hi - lo) / step - 1e-12))
            h = -(hi - lo) / n
            # evaluate the coefficients strictly inside (lo, hi): right-continuous
            # drifts would otherwise leak the neighbouring piece into the endpoints
            inner_hi = np.nextafter(hi, lo)
            inner_lo = np.nextafter(lo, hi)
            t = hi
            for k in range(n):
                t0 = inner_hi if k == 0 else t
                t1 = inner_lo if k == n - 1 else t + h
                tm = t + 0.5 * h
                k1p, k1s = rhs(t0, psi)
                k2p, k2s = rhs(tm, psi + 0.5 * h * k1s)
                k3p, k3s = rhs(tm, psi + 0.5 * h * k2s)
                k4p, k4s = rhs(t1, psi + h * k3s)
                phi = phi + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
                psi = psi + h / 6.0 * (k1s + 2 * k2s + 2 * k3s + k4s)
                t = hi + (k + 1) * h
                if not (np.isfinite(phi) and np.all(np.isfinite(psi))):
                    raise RiccatiBlowUpError(f"non-finite state near t={t}", t - h)
            t = lo
            times.append(lo)
            phis.append(phi)
            psis.append(psi.copy())
    return RiccatiSolution(
        times=np.array(times),
        Phi=np.array(phis, dtype=complex),
        Psi=np.array(psis, dtype=complex),
        left_limits=left_limits,
        terminal=(T, np.asarray(u, dtype=complex).reshape(d), v),
        overlap_dates=tuple(spec.metadata.get("overlap_dates", ())),
    )


def transform(spec: AffineSpec, t: float, T: float, u, v: complex, x_t, r_t: float = 0.0,
              step: float = 1e-3) -> complex:
    """``E[exp(<u, X_T> + v R_T) | X_t = x_t, R_t = r_t]``."""
    sol = solve_riccati(spec, T, u, v, t, step)
    phi, psi = sol.at(t)
    x = np.asarray(x_t, dtype=float).reshape(spec.dim)
    return complex(np.exp(phi + psi @ x + v * r_t))
