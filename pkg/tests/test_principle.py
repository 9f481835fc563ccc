import numpy as np
import pytest

from dyadlab.grid import GridSet, VectorSignal, measure
from dyadlab.harness import (
    maximal_operator_family,
    random_grid_set,
    random_signal,
    random_vector,
)
from dyadlab.principle import (
    LinearOperator,
    OperatorFamily,
    SubsetBuilder,
    conjugate_exponent,
    decay_base,
    densify,
    level_budget,
    measure_condition,
    power_iteration,
    splitting_cascade,
    trim_both_builder,
    trim_g_builder,
    trim_h_builder,
    vector_inequality_ratio,
)


def identity_family(count=1):
    return OperatorFamily([LinearOperator(lambda v: v, lambda v: v)] * count, l2_bound=1.0)


def zero_family():
    return OperatorFamily(
        [LinearOperator(lambda v: np.zeros_like(v), lambda v: np.zeros_like(v))],
        l2_bound=0.0,
    )


class TestDecayScalars:
    def test_base_values(self):
        assert decay_base(2.0) == 36.0
        assert decay_base(3.0) == 216.0

    def test_base_symmetric_in_conjugate(self):
        for p in (1.2, 1.7, 2.5, 4.0):
            assert decay_base(p) == pytest.approx(decay_base(conjugate_exponent(p)), rel=1e-12)

    @pytest.mark.parametrize("p", [1.1, 1.5, 2.0, 3.0, 10.0])
    def test_budget_halves(self, p):
        assert abs(level_budget(p, 1) - 0.5) < 1e-12
        for k in range(2, 11):
            assert abs(level_budget(p, k) - 0.5**k) < 1e-12

    def test_rejects_bad_exponent(self):
        with pytest.raises(ValueError):
            decay_base(1.0)


class TestPowerIteration:
    @pytest.mark.parametrize("n", [8, 32, 64])
    def test_matches_dense_svd(self, n):
        rng = np.random.default_rng(n)
        matrix = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        res = power_iteration(
            lambda v: matrix @ v,
            lambda v: matrix.conj().T @ v,
            (n,),
            iters=2000,
            tol=1e-14,
            seed=1,
        )
        top = np.linalg.svd(matrix, compute_uv=False)[0]
        assert res.norm == pytest.approx(top, abs=1e-6 * top)

    def test_monotone_in_iterations(self):
        rng = np.random.default_rng(3)
        n = 32
        matrix = rng.standard_normal((n, n))
        norms = []
        for iters in (1, 2, 4, 8, 16, 32, 64):
            res = power_iteration(
                lambda v: matrix @ v,
                lambda v: matrix.T @ v,
                (n,),
                iters=iters,
                tol=0.0,
                seed=5,
            )
            norms.append(res.norm)
        assert all(b >= a - 1e-12 for a, b in zip(norms, norms[1:]))

    def test_zero_operator(self):
        res = power_iteration(
            lambda v: np.zeros_like(v), lambda v: np.zeros_like(v), (16,), seed=0
        )
        assert res.norm == 0.0 and res.converged

    def test_densify_oracle(self):
        rng = np.random.default_rng(4)
        matrix = rng.standard_normal((10, 10))
        rebuilt = densify(lambda v: matrix @ v, 10)
        assert np.allclose(rebuilt, matrix)


class TestSubsetBuilders:
    def test_trim_builders_keep_half(self):
        rng = np.random.default_rng(6)
        for builder in (trim_h_builder(), trim_g_builder(), trim_both_builder()):
            for _ in range(20):
                h = random_grid_set(rng, 6)
                g = random_grid_set(rng, 6)
                h_sub, g_sub = builder(h, g)
                assert measure(h_sub) >= 0.5 * measure(h)
                assert measure(g_sub) >= 0.5 * measure(g)
                assert not np.any(h_sub.mask & ~h.mask)
                assert not np.any(g_sub.mask & ~g.mask)

    def test_violating_builder_raises(self):
        bad = SubsetBuilder(lambda h, g: (GridSet.empty(h.resolution), g), label="bad")
        with pytest.raises(ValueError):
            bad(GridSet.full(4), GridSet.full(4))

    def test_escaping_builder_raises(self):
        swap = SubsetBuilder(lambda h, g: (g, g), label="swap")
        h = GridSet(3, np.array([1, 1, 1, 1, 0, 0, 0, 0], dtype=bool))
        g = GridSet(3, np.array([0, 0, 1, 1, 1, 1, 0, 0], dtype=bool))
        with pytest.raises(ValueError):
            swap(h, g)


class TestMeasureCondition:
    def test_identity_equal_measures(self):
        h = GridSet(4, np.arange(16) < 8)
        g = GridSet(4, np.arange(16) >= 8)
        keep_all = SubsetBuilder(lambda h, g: (h, g), label="keep")
        report = measure_condition(identity_family(), h, g, keep_all, p=3.0)
        # localized identity between disjoint equal-measure sets has norm 0;
        # with overlapping sets the norm is 1
        assert report.C_p == 0.0
        overlap = measure_condition(identity_family(), h, h, keep_all, p=3.0)
        assert overlap.C_p == pytest.approx(1.0, abs=1e-9)

    def test_zero_family(self):
        h = GridSet.full(4)
        g = GridSet.full(4)
        keep_all = SubsetBuilder(lambda h, g: (h, g), label="keep")
        report = measure_condition(zero_family(), h, g, keep_all, p=2.5)
        assert report.C_p == 0.0 and report.B_p == 0.0

    def test_power_iteration_matches_dense_oracle(self):
        rng = np.random.default_rng(8)
        resolution = 5
        family, _ = maximal_operator_family(rng, resolution, 3)
        h = random_grid_set(rng, resolution)
        g = random_grid_set(rng, resolution)
        builder = trim_h_builder(4.0)
        report = measure_condition(family, h, g, builder, p=3.0, iters=3000, tol=1e-14)
        h_sub, g_sub = builder(h, g)
        dense_best = 0.0
        for op in family.operators:
            matrix = densify(lambda v: op.apply(v * h_sub.mask) * g_sub.mask, 1 << resolution)
            dense_best = max(dense_best, float(np.linalg.svd(matrix, compute_uv=False)[0]))
        ratio_pow = (measure(g) / measure(h)) ** (1.0 - 2.0 / 3.0)
        assert report.C_p == pytest.approx(dense_best**2 / ratio_pow, abs=1e-6)

    def test_series_doubles_b(self):
        rng = np.random.default_rng(9)
        family, _ = maximal_operator_family(rng, 5, 2)
        h = random_grid_set(rng, 5)
        g = random_grid_set(rng, 5)
        report = measure_condition(family, h, g, trim_h_builder(), p=2.5)
        assert report.A_p == pytest.approx(2.0 * report.B_p, rel=1e-12)

    def test_requires_positive_measures(self):
        keep_all = SubsetBuilder(lambda h, g: (h, g), label="keep")
        with pytest.raises(ValueError):
            measure_condition(identity_family(), GridSet.empty(4), GridSet.full(4), keep_all, 2.5)


class TestSplittingCascade:
    def test_level_one_three_pairs(self):
        rng = np.random.default_rng(10)
        h = random_grid_set(rng, 6)
        g = random_grid_set(rng, 6)
        levels = splitting_cascade(h, g, trim_both_builder(), p=2.0, k_max=1)
        assert levels[0].k == 1
        assert levels[0].max_product_measure <= 0.5 * measure(g) * measure(h) + 1e-15
        assert levels[0].budget == pytest.approx(0.5, abs=1e-12)

    def test_ten_levels_random(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            h = random_grid_set(rng, 6)
            g = random_grid_set(rng, 6)
            levels = splitting_cascade(h, g, trim_both_builder(), p=1.5, k_max=10)
            assert len(levels) == 10
            base = measure(g) * measure(h)
            for stat in levels:
                assert stat.max_product_measure <= base * 0.5**stat.k + 1e-15
                assert stat.budget == pytest.approx(0.5**stat.k, abs=1e-12)

    def test_one_sided_builder_chain(self):
        rng = np.random.default_rng(12)
        h = random_grid_set(rng, 5)
        g = random_grid_set(rng, 5)
        levels = splitting_cascade(h, g, trim_h_builder(), p=2.0, k_max=6)
        assert len(levels) == 6

    def test_requires_depth(self):
        with pytest.raises(ValueError):
            splitting_cascade(GridSet.full(3), GridSet.full(3), trim_h_builder(), 2.0, 0)


class TestVectorConclusion:
    def test_identity_single(self):
        rng = np.random.default_rng(13)
        fam = random_vector(rng, 5, 1)
        report = vector_inequality_ratio(identity_family(), fam, 2.5)
        assert report.ratio == pytest.approx(1.0, abs=1e-12)

    def test_duplicates_invariant(self):
        rng = np.random.default_rng(14)
        resolution = 5
        family, _ = maximal_operator_family(rng, resolution, 1)
        f = random_signal(rng, resolution)
        one = vector_inequality_ratio(family, VectorSignal.from_signals([f]), 2.5)
        many = vector_inequality_ratio(family, VectorSignal.from_signals([f] * 9), 2.5)
        assert many.ratio == pytest.approx(one.ratio, rel=1e-12)

    def test_family_l2_bound_certificate(self):
        rng = np.random.default_rng(15)
        family, _ = maximal_operator_family(rng, 5, 4)
        probe = random_signal(rng, 5, complex_values=True).values
        assert family.check_l2_bound(probe)

    def test_family_adjoints_are_transposes(self):
        rng = np.random.default_rng(16)
        family, _ = maximal_operator_family(rng, 4, 3)
        for op in family.operators:
            forward = densify(op.apply, 16)
            backward = densify(op.adjoint, 16)
            assert np.allclose(backward, forward.conj().T, atol=1e-12)
