"""scikit-learn style wrapper around the drift bootstrap."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .model import HullWhiteParams, JumpSpec
from .pricing import DiscountCurve, bond_price, fit_drift_to_curve
from .schedule import Schedule


class DriftCurveFitter(RegressorMixin, BaseEstimator):
    """Fit a piecewise-constant drift to discount factors.

    ``fit(maturities, discount_factors)`` bootstraps ``alpha_``; ``predict``
    returns model discount factors ``P(0, T)``.

    Parameters
    ----------
    rho0, beta, sigma : float
        Fixed model parameters.
    jumps : sequence of (date, mean, std)
        Expected jumps of the rate.
    roll_over_dates : sequence of float
        Atoms of the accrual measure.
    tol : float
        Root-finding tolerance per pillar.
    """

    def __init__(self, rho0=0.0, beta=-0.1, sigma=0.01, jumps=(), roll_over_dates=(), tol=1e-12):
        self.rho0 = rho0
        self.beta = beta
        self.sigma = sigma
        self.jumps = jumps
        self.roll_over_dates = roll_over_dates
        self.tol = tol

    def _base(self):
        jumps = tuple(JumpSpec(float(d), float(m), float(s)) for d, m, s in self.jumps)
        schedule = Schedule(tuple(self.roll_over_dates), tuple(j.date for j in jumps))
        params = HullWhiteParams(float(self.rho0), float(self.beta), float(self.sigma), 0.0, jumps)
        return params, schedule

    def fit(self, X, y):
        T = np.asarray(X, dtype=float).reshape(-1)
        df = np.asarray(y, dtype=float).reshape(-1)
        if T.size != df.size:
            raise ValueError("maturities and discount factors differ in length")
        params, schedule = self._base()
        curve = DiscountCurve(tuple(zip(T.tolist(), df.tolist())))
        self.alpha_ = fit_drift_to_curve(curve, params, schedule, tol=self.tol)
        self.params_ = params.with_alpha(self.alpha_)
        self.schedule_ = schedule
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "alpha_")
        T = np.asarray(X, dtype=float).reshape(-1)
        return np.array([bond_price(0.0, t, None, self.params_, self.schedule_) for t in T])
