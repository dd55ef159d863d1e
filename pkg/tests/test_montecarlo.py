import math

import numpy as np
import pytest
from scipy import stats

from rfrlab.errors import ConfigurationError, DomainError
from rfrlab.model import HullWhiteParams, JumpSpec, R_moments, joint_gaussian_law, rho_moments
from rfrlab.montecarlo import (
    BLOCK_SIZE,
    ForwardMeasureWeight,
    MinimalMeasureWeight,
    build_grid,
    caplet_payoff,
    example_4_4_params,
    example_4_4_scenario,
    jump_half_life,
    mc_price,
    rollover_numeraire,
    scenario_structure,
    simulate,
    weighted_expectation,
)
from rfrlab.pricing import CapletSpec, backward_rate, bond_price, forward_measure_params, futures_rate
from rfrlab.schedule import PiecewiseConstant, Schedule


def within(est, ref, k=3.0):
    return abs(est.value - ref) <= k * est.std_error


@pytest.fixture(scope="module")
def base_paths():
    s = Schedule((0.25, 0.5, 1.0, 1.5), (0.5, 1.2), 3.0)
    p = HullWhiteParams(0.02, -0.3, 0.01, 0.005, (JumpSpec(0.5, 0.001, 0.005), JumpSpec(1.2, -0.002, 0.004)))
    return p, s, simulate(p, s, build_grid(s, horizon=2.0, step=0.25), n_paths=100_000, seed=42)


class TestGrid:
    def test_event_dates_doubled(self):
        times, sides = build_grid(Schedule((0.5,), (0.7,), 1.0), step=0.25)
        assert list(times) == [0.0, 0.25, 0.5, 0.5, 0.7, 0.7, 0.75, 1.0]
        assert list(sides) == ["none", "none", "left", "right", "left", "right", "none", "none"]

    def test_extra_times(self):
        times, _ = build_grid(Schedule((), (), 1.0), times=[0.33, 2.0])
        assert list(times) == [0.0, 0.33, 1.0]

    def test_missing_event_rejected(self, base_params, base_schedule):
        grid = (np.array([0.0, 1.0, 2.0]), np.array(["none"] * 3))
        with pytest.raises(ConfigurationError):
            simulate(base_params, base_schedule, grid, n_paths=1, seed=0)

    def test_bad_arguments(self, base_params, base_schedule):
        with pytest.raises(ConfigurationError):
            simulate(base_params, base_schedule, n_paths=0, seed=0, step=0.1)
        with pytest.raises(ConfigurationError):
            simulate(base_params, base_schedule, n_paths=1, seed=0, step=0.1, scheme="milstein")


class TestExactScheme:
    def test_deterministic_equals_ode(self):
        p = HullWhiteParams(0.03, -0.5, 0.0, 0.01, (JumpSpec(0.4, 0.002, 0.0),))
        s = Schedule((0.5,), (0.4,), 1.0)
        paths = simulate(p, s, build_grid(s, step=0.1), n_paths=3, seed=1)

        def rho(t):
            v = 0.02 + 0.01 * math.exp(-0.5 * t)
            return v + (0.002 * math.exp(-0.5 * (t - 0.4)) if t >= 0.4 else 0.0)

        for k, t in enumerate(paths.times):
            if paths.sides[k] != "left":
                assert np.allclose(paths.rho[:, k], rho(t), rtol=0, atol=1e-12)
        R1 = R_moments(0.0, 1.0, None, 0.0, p, s).mean
        assert np.allclose(paths.R[:, -1], R1, rtol=0, atol=1e-12)

    def test_moments(self, base_paths):
        p, s, paths = base_paths
        law = joint_gaussian_law(0.0, 2.0, None, 0.0, p, s)
        rho, R = paths.rho_at(2.0), paths.R_at(2.0)
        n = paths.n_paths
        assert abs(rho.mean() - law.mean[0]) <= 3 * rho.std() / math.sqrt(n)
        assert abs(R.mean() - law.mean[1]) <= 3 * R.std() / math.sqrt(n)
        dev = (R - R.mean()) ** 2
        assert abs(dev.mean() - law.cov[1, 1]) <= 3 * dev.std() / math.sqrt(n)

    def test_bond_within_three_se(self, base_paths):
        p, s, paths = base_paths
        est = mc_price(paths, lambda q: 1.0, at=2.0)
        assert within(est, bond_price(0.0, 2.0, None, p, s))

    def test_invariants(self, base_paths):
        _, _, paths = base_paths
        assert np.all(paths.R[:, 0] == 0.0)
        assert np.all(paths.S0 > 0)
        for d, xi in paths.jump_draws.items():
            jump = paths.rho_at(d, "right") - paths.rho_at(d, "left")
            assert np.allclose(jump, xi.sum(axis=0), rtol=0, atol=1e-15)
        # the atom at 0.5 adds the post-jump rate
        dR = paths.R_at(0.5, "right") - paths.R_at(0.5, "left")
        assert np.allclose(dR, paths.rho_at(0.5, "right"), rtol=0, atol=1e-15)

    def test_R_nondecreasing_for_positive_rate(self):
        p = HullWhiteParams(0.05, -0.3, 0.005, 0.015)
        s = Schedule((0.5,), (), 1.0)
        paths = simulate(p, s, build_grid(s, step=0.05), n_paths=500, seed=3)
        pos = np.all(paths.rho >= 0, axis=1)
        assert pos.sum() > 400
        assert np.all(np.diff(paths.R[pos], axis=1) >= 0)

    def test_ks_against_closed_form(self, base_paths):
        p, s, paths = base_paths
        law = joint_gaussian_law(0.0, 2.0, None, 0.0, p, s)
        for i, x in enumerate((paths.rho_at(2.0), paths.R_at(2.0))):
            res = stats.kstest(x, "norm", args=(law.mean[i], math.sqrt(law.cov[i, i])))
            assert res.pvalue > 0.01

    def test_readonly(self, base_paths):
        _, _, paths = base_paths
        with pytest.raises(ValueError):
            paths.R[0, 0] = 1.0


class TestDeterminism:
    def test_worker_count_and_prefix_invariance(self, base_params, base_schedule):
        grid = build_grid(base_schedule, step=0.5)
        a = simulate(base_params, base_schedule, grid, n_paths=2 * BLOCK_SIZE + 17, seed=9)
        b = simulate(base_params, base_schedule, grid, n_paths=2 * BLOCK_SIZE + 17, seed=9, n_workers=3)
        assert a.R.tobytes() == b.R.tobytes()
        assert a.factor_rho.tobytes() == b.factor_rho.tobytes()
        c = simulate(base_params, base_schedule, grid, n_paths=100, seed=9)
        assert np.array_equal(c.R, a.R[:100])
        d = simulate(base_params, base_schedule, grid, n_paths=100, seed=10)
        assert not np.array_equal(c.R, d.R)

    def test_csv_is_reproducible(self, base_params, base_schedule):
        grid = build_grid(base_schedule, step=0.5)
        one = simulate(base_params, base_schedule, grid, n_paths=2, seed=5).to_csv()
        two = simulate(base_params, base_schedule, grid, n_paths=2, seed=5).to_csv()
        assert one == two
        lines = one.splitlines()
        assert lines[0] == "path,time,side,rho,R,S0"
        assert "left" in one and "right" in one


class TestEuler:
    def test_bias_linear_in_step(self):
        p = HullWhiteParams(0.1, -2.0, 0.01, 0.02)
        s = Schedule((), (), 1.0)
        exact_mean = rho_moments(0.0, 1.0, 1.0, None, p, s).mean_at_T1
        steps = [0.1, 0.05, 0.025]
        biases = []
        for h in steps:
            e = simulate(p, s, build_grid(s, step=h), n_paths=20_000, seed=4, scheme="euler")
            biases.append(abs(e.rho_at(1.0).mean() - exact_mean))
        slope = np.polyfit(np.log(steps), np.log(biases), 1)[0]
        assert 0.85 < slope < 1.15


class TestPricingHarness:
    def test_zero_payoff(self, base_paths):
        est = mc_price(base_paths[2], lambda q: 0.0)
        assert (est.value, est.std_error) == (0.0, 0.0)

    def test_off_grid_rejected(self, base_paths):
        with pytest.raises(DomainError):
            mc_price(base_paths[2], lambda q: q.rho_at(0.3))
        with pytest.raises(ConfigurationError):
            mc_price(base_paths[2], lambda q: 1.0, discount="bank")

    def test_caplet(self, base_paths):
        from rfrlab.pricing import caplet_price

        p, s, paths = base_paths
        spec = CapletSpec(1.5, 2.0, 0.02)
        est = mc_price(paths, lambda q: caplet_payoff(q, spec, p, s), at=2.0)
        assert within(est, caplet_price(0.02, 0.0, spec, p, s))

    def test_forward_measure_weights(self, base_paths):
        p, s, paths = base_paths
        w = ForwardMeasureWeight(1.5, p, s)
        one = weighted_expectation(paths, lambda q: 1.0, w)
        assert within(one, 1.0)
        assert abs(one.weight_mean - 1.0) <= 3 * one.weight_std_error
        fm = forward_measure_params(0.0, 1.5, p, s)
        est = weighted_expectation(paths, lambda q: q.rho_at(1.5), w)
        assert within(est, 0.02 * math.exp(-0.45) + fm.gamma1)

    def test_minimal_measure_weights(self, hedge_params, hedge_schedule):
        grid = build_grid(hedge_schedule, step=0.01, times=[1.0, 1.5])
        h = 0.002
        w = MinimalMeasureWeight(h, 1.0, 1.5, hedge_params)
        paths = simulate(hedge_params, hedge_schedule, grid, n_paths=50_000, seed=8)
        with pytest.raises(ConfigurationError):
            weighted_expectation(paths, lambda q: 1.0, w)
        paths = simulate(hedge_params, hedge_schedule, grid, n_paths=50_000, seed=8, retain_increments=True)
        est = weighted_expectation(paths, lambda q: (q.R_at(1.5) - q.R_at(1.0)) / 0.5, w)
        assert within(est, futures_rate(0.0, 1.0, 1.5, 0.02, hedge_params, hedge_schedule, h=h))
        assert abs(est.weight_mean - 1.0) <= 3 * est.weight_std_error
        # the tilt is visible: the unweighted mean sits elsewhere
        plain = mc_price(paths, lambda q: (q.R_at(1.5) - q.R_at(1.0)) / 0.5, discount="none")
        assert not within(plain, est.value, k=1.0)


class TestRollOver:
    def test_backward_rate_identity(self, base_paths):
        p, s, paths = base_paths
        account, fixings = rollover_numeraire(paths, p, s)
        S, T = 0.5, 1.5
        for i in range(0, paths.n_paths, 997):
            fix_i = {k: v[i] for k, v in fixings.items()}
            r4 = backward_rate(S, T, fix_i, schedule=s)
            r5 = backward_rate(S, T, numeraire=(account[S][i], account[T][i]))
            assert r4 == pytest.approx(r5, rel=1e-12, abs=1e-14)


class TestExample44:
    def test_structure(self):
        paths = example_4_4_scenario(seed=7)
        info = scenario_structure(paths)
        kinds = {e["date"]: e["kind"] for e in info["events"]}
        assert kinds == {50.0: "spike", 100.0: "spike", 150.0: "level_jump"}
        for e in info["events"]:
            if e["kind"] == "spike":
                # after one time unit the fast factor has decayed by e^{-80}
                assert abs(e["rho_one_unit_later"] - e["rho_left"]) < abs(e["jump_fast"])

    def test_half_lives(self):
        (slow, fast), _ = example_4_4_params()
        assert fast.beta == -80.0 and slow.beta == -0.2
        assert jump_half_life(fast, 50.0, 0.1) == pytest.approx(math.log(2) / 80, abs=1e-10)
        assert jump_half_life(fast, 100.0, -0.3) == pytest.approx(math.log(2) / 80, abs=1e-10)
        assert jump_half_life(slow, 150.0, 0.1, rho_before=0.05) == pytest.approx(math.log(2) / 0.2, abs=1e-10)

    def test_csv_deterministic(self):
        a = example_4_4_scenario(seed=7, step=0.5).to_csv()
        b = example_4_4_scenario(seed=7, step=0.5).to_csv()
        assert a == b
