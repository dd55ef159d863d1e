import math

import numpy as np
import pytest

from rfrlab.errors import DomainError
from rfrlab.model import HullWhiteParams, joint_gaussian_law
from rfrlab.pricing import bond_price
from rfrlab.riccati import AffineSpec, RiccatiBlowUpError, build_gaussian_hw_spec, solve_riccati, transform
from rfrlab.schedule import Schedule


def gaussian_transform(law, u, v):
    m = law.mean
    C = law.cov
    return np.exp(u * m[0] + v * m[1] + 0.5 * (u * u * C[0, 0] + 2 * u * v * C[0, 1] + v * v * C[1, 1]))


@pytest.mark.parametrize("T", [0.5, 1.2, 2.0, 3.0])
def test_bond_matches_closed_form(piecewise_params, base_schedule, T):
    spec = build_gaussian_hw_spec(piecewise_params, base_schedule)
    val = transform(spec, 0.0, T, [0.0], -1.0, [0.02], 0.0, 1e-3)
    assert val.real == pytest.approx(bond_price(0.0, T, None, piecewise_params, base_schedule), rel=1e-10)
    assert abs(val.imag) < 1e-15


@pytest.mark.parametrize("u,v", [(1.3, 0.0), (0.8, -0.5), (-2.0, 1.0), (0.7j, -0.3j)])
def test_joint_transform_matches_gaussian_law(base_params, base_schedule, u, v):
    # 0.5 is both a roll-over date and a jump date
    spec = build_gaussian_hw_spec(base_params, base_schedule)
    assert spec.metadata["overlap_dates"] == (0.5,)
    law = joint_gaussian_law(0.1, 2.0, 0.015, 0.0, base_params, base_schedule)
    val = transform(spec, 0.1, 2.0, [u], v, [0.015], 0.0, 1e-3)
    assert val == pytest.approx(gaussian_transform(law, u, v), rel=1e-10)


def test_multi_factor(base_params, base_schedule):
    fast = HullWhiteParams(0.01, -5.0, 0.02, 0.002)
    params = (base_params, fast)
    spec = build_gaussian_hw_spec(params, base_schedule)
    val = transform(spec, 0.0, 2.0, [0.0, 0.0], -1.0, [0.02, 0.01], 0.0, 1e-3)
    assert val.real == pytest.approx(bond_price(0.0, 2.0, None, params, base_schedule), rel=1e-10)


def test_solution_records_left_limits(base_params, base_schedule):
    sol = solve_riccati(build_gaussian_hw_spec(base_params, base_schedule), 2.0, [0.0], -1.0, 0.0, 1e-2)
    assert set(sol.left_limits) == {0.25, 0.5, 1.0, 1.2, 1.5}
    phi_right, psi_right = sol.at(0.5)
    phi_left, psi_left = sol.left_limits[0.5]
    # crossing a roll-over date shifts Psi by Lambda v
    assert psi_left[0] - psi_right[0] == pytest.approx(-1.0)
    with pytest.raises(DomainError):
        sol.at(0.333)
    assert np.all(np.diff(sol.times) <= 0)


def test_blow_up_reported():
    # dPsi/dt = -Psi^2 from Psi_T = 1 explodes one time unit before T
    spec = AffineSpec(dim=1, F=lambda t, u: 0j, R=lambda t, u: u * u)
    with pytest.raises(RiccatiBlowUpError) as info:
        solve_riccati(spec, 2.0, [1.0], 0.0, 0.0, 1e-3)
    assert 0.99 < info.value.last_valid_time < 1.1


def test_argument_validation(base_params, base_schedule):
    spec = build_gaussian_hw_spec(base_params, base_schedule)
    with pytest.raises(DomainError):
        solve_riccati(spec, 1.0, [0.0], -1.0, 1.5, 1e-3)
    with pytest.raises(DomainError):
        solve_riccati(spec, 1.0, [0.0], -1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        AffineSpec(dim=0, F=None, R=None)


def test_zero_transform_is_one(base_params, base_schedule):
    spec = build_gaussian_hw_spec(base_params, base_schedule)
    assert transform(spec, 0.0, 1.0, [0.0], 0.0, [0.02]) == pytest.approx(1.0, abs=1e-15)
