import math

import numpy as np
import pytest

from qfuse.model import ContractViolation, Scenario, scenario_truth
from qfuse.solver import SolverConfig, brute_force_fit, fit, l2_fused_fit
from qfuse.tuning import (
    Asymptotic,
    Fixed,
    OracleMSE,
    TargetK,
    default_grid,
    lambda_asymptotic,
    lambda_for_k,
    lambda_max,
    lambda_oracle_mse,
    parse_mode,
    resolve,
    solution_path,
)

DP = SolverConfig(algorithm="dp")


class TestModes:
    def test_parse(self):
        assert parse_mode("as:10") == Asymptotic(10.0)
        assert parse_mode("as") == Asymptotic(10.0)
        assert parse_mode("k:2") == TargetK(2)
        assert parse_mode("mse") == OracleMSE()
        assert parse_mode("fixed:0.5") == Fixed(0.5)
        for bad in ["", "k:x", "as:-1", "k:-1", "mse:3", "cv"]:
            with pytest.raises(ContractViolation):
                parse_mode(bad)

    def test_labels(self):
        assert [m.label for m in (Asymptotic(10), TargetK(2), OracleMSE(), Fixed(1.5))] == \
            ["as:10", "k:2", "mse", "fixed:1.5"]

    def test_grid_validation(self):
        with pytest.raises(ContractViolation):
            OracleMSE(grid=(2.0, 1.0))
        with pytest.raises(ContractViolation):
            OracleMSE(grid=(0.0, 1.0))


class TestAsymptotic:
    @pytest.mark.parametrize("n,expected", [(20, 3.87), (100, 2.15), (500, 1.11)])
    def test_table_values(self, n, expected):
        assert abs(lambda_asymptotic(n, 10) - expected) <= 0.01

    def test_formula(self):
        assert lambda_asymptotic(1000, 3.0) == 3.0 * math.sqrt(math.log(1000) / 1000)
        with pytest.raises(ContractViolation):
            lambda_asymptotic(1)


class TestLambdaMax:
    def test_examples(self):
        assert lambda_max([3.0, 3.0, 3.0], 0.5) == 0.0
        assert lambda_max([0.0, 2.0], 0.5) == pytest.approx(0.5, abs=1e-9)

    def test_two_point_grid_oracle(self):
        for w in np.linspace(0.3, 0.7, 41):
            jumps = brute_force_fit([0.0, 2.0], 0.5, w).n_jumps
            assert jumps == (1 if w < 0.5 - 1e-12 else 0)

    def test_threshold_definition(self, rng):
        for _ in range(40):
            n = int(rng.integers(2, 9))
            y = np.round(rng.normal(size=n) * 2, 1)
            tau = float(rng.choice([0.25, 0.5, 0.75]))
            lm = lambda_max(y, tau)
            if lm == 0:
                continue
            assert brute_force_fit(y, tau, 1.01 * lm).n_jumps == 0
            assert brute_force_fit(y, tau, 0.99 * lm).n_jumps >= 1
            assert fit(y, tau, 1.01 * lm, DP).n_jumps == 0
            assert fit(y, tau, 0.99 * lm, DP).n_jumps >= 1

    def test_l2_threshold(self, rng):
        y = rng.normal(size=40)
        lm = lambda_max(y, 0.5, "l2lasso")
        assert l2_fused_fit(y, lm * 1.0001).n_jumps == 0
        assert l2_fused_fit(y, lm * 0.999).n_jumps >= 1


class TestTargetK:
    def test_example(self):
        y = [0, 0, 0, 2, 2, 2, 1, 1]
        sel = lambda_for_k(y, 0.5, 2)
        assert sel.exact and sel.fit.changepoints.indices == (4, 7)
        # the brute-force oracle agrees on a nonempty weight interval
        hits = [w for w in np.linspace(0.05, 1.0, 20) if brute_force_fit(y, 0.5, w).changepoints.indices == (4, 7)]
        assert hits and sel.w >= max(hits) - 0.05

    def test_zero_target(self, rng):
        y = rng.normal(size=15)
        sel = lambda_for_k(y, 0.5, 0)
        assert sel.w == lambda_max(y, 0.5) and sel.fit.n_jumps == 0 and sel.exact

    def test_constant_signal(self):
        sel = lambda_for_k([2.0] * 6, 0.5, 0)
        assert sel.w == 0 and sel.fit.n_jumps == 0

    def test_unreachable_target_is_flagged(self):
        sel = lambda_for_k([2.0] * 6, 0.5, 3)
        assert not sel.exact and sel.fit.n_jumps == 0

    def test_exact_means_count(self, rng):
        for _ in range(20):
            y = rng.normal(size=30) + np.repeat([0, 3, 1], 10)
            for k in (1, 2, 3):
                sel = lambda_for_k(y, 0.5, k, DP)
                if sel.exact:
                    assert sel.fit.n_jumps == k

    def test_noiseless_recovers_truth(self):
        u, _, cps = scenario_truth(Scenario.sim1(100), 0.5)
        for cfg in (None, DP):
            assert lambda_for_k(u, 0.5, 2, cfg).fit.changepoints == cps

    def test_bounds(self):
        with pytest.raises(ContractViolation):
            lambda_for_k([1.0, 2.0], 0.5, 2)


class TestOracleMSE:
    def test_noiseless_exact_recovery(self):
        u, u_tau, _ = scenario_truth(Scenario.sim1(60), 0.5)
        sel = lambda_oracle_mse(u, u_tau, 0.5, [0.01, 0.1, 1.0, 10.0], DP)
        assert np.mean((sel.fit.u_hat - u_tau) ** 2) <= 1e-12

    def test_single_point_grid(self, rng):
        y = rng.normal(size=20)
        assert lambda_oracle_mse(y, np.zeros(20), 0.5, [0.7]).w == 0.7

    def test_is_argmin_over_grid(self, rng):
        u, u_tau, _ = scenario_truth(Scenario.sim1(100), 0.5)
        y = u + rng.normal(size=100)
        las = lambda_asymptotic(100)
        grid = np.sort(np.append(default_grid(y, 0.5, size=20), las))
        sel = lambda_oracle_mse(y, u_tau, 0.5, grid, DP)
        mses = [np.mean((fit(y, 0.5, w, DP).u_hat - u_tau) ** 2) for w in grid]
        best = np.mean((sel.fit.u_hat - u_tau) ** 2)
        assert best == pytest.approx(min(mses), abs=1e-12)
        assert best <= mses[list(grid).index(las)]
        # ties go to the larger weight
        assert sel.w == max(w for w, m in zip(grid, mses) if m <= min(mses) + 1e-15)

    def test_truth_shape_checked(self):
        with pytest.raises(ContractViolation):
            lambda_oracle_mse([1.0, 2.0, 3.0], [0.0, 0.0], 0.5, [1.0])

    def test_resolve_needs_truth(self):
        with pytest.raises(ContractViolation):
            resolve(OracleMSE(), [1.0, 2.0], 0.5)


class TestPath:
    def test_examples(self, rng):
        y = rng.normal(size=30)
        lm = lambda_max(y, 0.5)
        assert solution_path(y, 0.5, [lm], DP)[0].k_hat == 0
        p0 = solution_path(y, 0.5, [0.0])[0]
        np.testing.assert_array_equal(p0.fit.u_hat, y)
        assert p0.k_hat == np.count_nonzero(np.diff(y))

    @pytest.mark.parametrize("cfg", [None, DP], ids=["admm", "dp"])
    def test_objective_nondecreasing(self, rng, cfg):
        for _ in range(5):
            y = rng.standard_t(3, size=80)
            grid = default_grid(y, 0.3, size=25)
            obj = [p.objective for p in solution_path(y, 0.3, grid, cfg)]
            assert all(b >= a - 1e-7 for a, b in zip(obj, obj[1:]))

    def test_grid_order_preserved(self, rng):
        y = rng.normal(size=20)
        grid = [1.0, 0.1, 5.0]
        assert [p.w for p in solution_path(y, 0.5, grid)] == grid

    def test_l2_path(self, rng):
        y = rng.normal(size=20)
        pts = solution_path(y, 0.5, [0.1, 1.0], method="l2lasso")
        assert pts[1].k_hat <= pts[0].k_hat
