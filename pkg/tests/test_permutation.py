import itertools
import math

import numpy as np
import pytest

from slicebf import (
    EmpiricalFormulaConstants,
    Hyperparams,
    InputError,
    PermutationPlan,
    SlicedDataset,
    add_one_pvalue,
    bf_dynamic_program,
    conditional_shuffle,
    fit_formula,
    formula_pvalue,
    lookup_constants,
    mc_pvalue,
)
from slicebf.permutation import (
    builtin_constants,
    config_frequencies,
    load_calibration_table,
    mc_null_sample,
    save_calibration_entry,
)

H = Hyperparams()


def _grouped_dataset(seed=0, n=60):
    rng = np.random.default_rng(seed)
    return SlicedDataset.from_values(
        rng.normal(size=n), rng.integers(0, 2, n), rng.integers(0, 3, n),
        n_x_levels=2, n_z_levels=3,
    )


class TestConditionalShuffle:
    def test_preserves_group_multisets(self):
        d = _grouped_dataset()
        sh = conditional_shuffle(d, 1)
        for j in range(3):
            assert sorted(sh.x[sh.z == j]) == sorted(d.x[d.z == j])
        assert np.array_equal(sh.y, d.y)
        assert np.array_equal(sh.z, d.z)

    def test_single_group_is_plain_permutation(self):
        d = SlicedDataset.from_values(np.arange(30.0), np.arange(30) % 3, n_x_levels=3)
        sh = conditional_shuffle(d, 2)
        assert sorted(sh.x) == sorted(d.x)
        assert not np.array_equal(sh.x, d.x)  # astronomically unlikely to be identity

    def test_seed_determinism(self):
        d = _grouped_dataset()
        a = conditional_shuffle(d, 7)
        b = conditional_shuffle(d, 7)
        c = conditional_shuffle(d, 8)
        assert np.array_equal(a.x, b.x)
        assert not np.array_equal(a.x, c.x)

    def test_composition_stays_valid(self):
        d = _grouped_dataset()
        twice = conditional_shuffle(conditional_shuffle(d, 3), 4)
        for j in range(3):
            assert sorted(twice.x[twice.z == j]) == sorted(d.x[d.z == j])


class TestMcPvalue:
    def test_add_one_examples(self):
        null = np.arange(999, dtype=float)
        assert add_one_pvalue(1e9, null) == pytest.approx(1 / 1000)
        assert add_one_pvalue(-1.0, null) == pytest.approx(1.0)
        null9 = np.array([0, 1, 2, 3, 4, 5, 6, 7, 8], dtype=float)
        # equal to exactly one null value and above the rest
        assert add_one_pvalue(8.0, null9) == pytest.approx(2 / 10)

    def test_bounds_and_monotonicity(self):
        rng = np.random.default_rng(0)
        null = rng.normal(size=200)
        ps = [add_one_pvalue(obs, null) for obs in np.linspace(-4, 4, 33)]
        assert all(1 / 201 <= p <= 1 for p in ps)
        assert all(a >= b for a, b in zip(ps, ps[1:]))

    def test_mc_pvalue_deterministic_and_diffuse_under_null(self):
        d = _grouped_dataset(seed=5, n=80)
        obs = bf_dynamic_program(d, H).log_bf
        plan = PermutationPlan(replicates=79, seed=123)
        r1 = mc_pvalue(obs, d, H, plan)
        r2 = mc_pvalue(obs, d, H, plan)
        assert r1.pvalue == r2.pvalue
        assert np.array_equal(r1.null_log_bf, r2.null_log_bf)
        assert 1 / 80 <= r1.pvalue <= 1.0
        assert r1.null_log_bf.shape == (79,)

    def test_jobs_do_not_change_results(self):
        d = _grouped_dataset(seed=6, n=50)
        base = mc_null_sample(d, H, PermutationPlan(replicates=40, seed=9, jobs=1))
        threaded = mc_null_sample(d, H, PermutationPlan(replicates=40, seed=9, jobs=4))
        assert np.array_equal(base, threaded)

    def test_plan_validation(self):
        with pytest.raises(InputError):
            PermutationPlan(replicates=0)
        with pytest.raises(InputError):
            PermutationPlan(scheme="bogus")


class TestExactAgreement:
    @pytest.mark.slow
    def test_shuffle_rates_match_exact_enumeration(self):
        # all C(10,5) covariate arrangements are equally likely under the
        # shuffle; MC exceedance rates must agree with exact enumeration
        n = 10
        y = np.arange(n, dtype=float)
        vals = []
        for ones in itertools.combinations(range(n), 5):
            x = np.zeros(n, dtype=int)
            x[list(ones)] = 1
            vals.append(bf_dynamic_program(SlicedDataset.from_values(y, x, n_x_levels=2), H).log_bf)
        vals = np.array(vals)
        x = np.zeros(n, dtype=int)
        x[:5] = 1
        d = SlicedDataset.from_values(y, x, n_x_levels=2)
        null = mc_null_sample(d, H, PermutationPlan(replicates=20000, seed=11))
        for b in (1.0, 1.5, 2.0):
            exact = float(np.mean(vals > math.log(b)))
            mc = float(np.mean(null > math.log(b)))
            se = math.sqrt(exact * (1 - exact) / 20000)
            assert abs(mc - exact) < 5 * se + 1e-12


class TestNullRateVsFormula:
    @pytest.mark.slow
    def test_balanced_null_rate_within_factor_two(self):
        # module-level check at one cell; the acceptance suite sweeps the
        # full (n, b) grid at >= 5000 shuffles per cell
        n = 400
        x = np.zeros(n, dtype=int)
        x[: n // 2] = 1
        d = SlicedDataset.from_values(np.arange(n, dtype=float), x, n_x_levels=2)
        null = mc_null_sample(d, H, PermutationPlan(replicates=3000, seed=400400))
        rate = float(np.mean(null > 0.0))
        assert 0.0209 / 2 <= rate <= 0.0209 * 2


class TestFormula:
    def test_shipped_value_examples(self):
        c_u = builtin_constants()[(2, 1, (0.5, 0.5), 1.0, 1.0)]
        assert formula_pvalue(1, 400, c_u) == pytest.approx(0.0209, abs=2e-4)
        assert formula_pvalue(10, 400, c_u) == pytest.approx(1.58e-3, abs=2e-5)
        c_c = builtin_constants()[(2, 2, (0.25, 0.25, 0.25, 0.25), 1.0, 1.0)]
        assert formula_pvalue(1, 400, c_c) == pytest.approx(0.022, abs=5e-4)

    def test_clamped_to_one(self):
        c = EmpiricalFormulaConstants(alpha=1.0, beta=1.0, gamma=3.8)
        assert formula_pvalue(1, 1, c) == 1.0

    def test_preconditions(self):
        c = EmpiricalFormulaConstants(alpha=1.0, beta=1.0, gamma=1.0)
        with pytest.raises(InputError):
            formula_pvalue(0.5, 100, c)
        with pytest.raises(InputError):
            formula_pvalue(2.0, 0, c)
        with pytest.raises(InputError):
            EmpiricalFormulaConstants(alpha=-1.0, beta=1.0, gamma=1.0)


class TestFitFormula:
    @staticmethod
    def _noiseless_grid(alpha, beta, gamma):
        return [
            (b, n, gamma / (b**alpha * n**beta))
            for b in (1.0, 2.0, 5.0, 10.0)
            for n in (100, 200, 400, 800)
        ]

    def test_exact_recovery(self):
        for truth in ((1.12, 0.6, 0.76), (1.07, 0.86, 3.8)):
            fit = fit_formula(self._noiseless_grid(*truth))
            assert fit.alpha == pytest.approx(truth[0], abs=1e-6)
            assert fit.beta == pytest.approx(truth[1], abs=1e-6)
            assert fit.gamma == pytest.approx(truth[2], abs=1e-6)
            assert fit.residual_rms == pytest.approx(0.0, abs=1e-9)

    def test_zero_rate_rejected(self):
        grid = self._noiseless_grid(1.12, 0.6, 0.76)
        grid[0] = (1.0, 100, 0.0)
        with pytest.raises(InputError):
            fit_formula(grid)

    def test_degenerate_design_rejected(self):
        with pytest.raises(InputError):
            fit_formula([(1.0, n, 0.01) for n in (100, 200, 400)])
        with pytest.raises(InputError):
            fit_formula([(b, 100, 0.01) for b in (1.0, 2.0, 5.0)])
        with pytest.raises(InputError):
            fit_formula([(1.0, 100, 0.01), (2.0, 200, 0.005)])


class TestCalibrationTable:
    def test_builtin_lookup(self):
        x = np.tile([0, 1], 200)
        d = SlicedDataset.from_values(np.arange(400.0), x, n_x_levels=2)
        c = lookup_constants(d, H)
        assert c is not None and c.alpha == 1.12

        z = np.repeat([0, 1], 200)
        x2 = np.tile([0, 1], 200)
        d2 = SlicedDataset.from_values(np.arange(400.0), x2, z, n_x_levels=2, n_z_levels=2)
        c2 = lookup_constants(d2, H)
        assert c2 is not None and c2.gamma == 3.8

    def test_no_match_for_other_settings(self):
        x = np.tile([0, 1], 200)
        d = SlicedDataset.from_values(np.arange(400.0), x, n_x_levels=2)
        assert lookup_constants(d, Hyperparams(1.0, 2.0)) is None
        skew = np.zeros(400, dtype=int)
        skew[:100] = 1  # p = 0.25: no shipped entry
        d2 = SlicedDataset.from_values(np.arange(400.0), skew, n_x_levels=2)
        assert lookup_constants(d2, H) is None

    def test_save_load_roundtrip(self, tmp_path):
        path = tmp_path / "calib.json"
        c = EmpiricalFormulaConstants(alpha=1.3, beta=0.7, gamma=2.0, context="test", residual_rms=0.1)
        save_calibration_entry(path, 2, 1, (0.3, 0.7), Hyperparams(1.0, 2.0), c)
        table = load_calibration_table(path)
        key = (2, 1, (0.3, 0.7), 2.0, 1.0)
        assert key in table
        assert table[key].alpha == pytest.approx(1.3)

        # user entries win over builtins for the same key
        x = np.zeros(400, dtype=int)
        x[:120] = 1
        d = SlicedDataset.from_values(np.arange(400.0), x, n_x_levels=2)
        assert config_frequencies(d) == (0.7, 0.3)


class TestConfigFrequencies:
    def test_group_major_order(self):
        z = np.array([0, 0, 1, 1])
        x = np.array([0, 1, 1, 1])
        d = SlicedDataset.from_values(np.arange(4.0), x, z, n_x_levels=2, n_z_levels=2)
        assert config_frequencies(d) == (0.25, 0.25, 0.0, 0.5)
