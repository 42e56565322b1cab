import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import simplexrl.diagnostics as dg
from simplexrl.autodiff import Rng
from simplexrl.heads import SemConfig, sem_forward
from simplexrl.autodiff import Tensor


def _fb(matrix):
    return dg.FeatureBatch(np.asarray(matrix, dtype=np.float64), "actor")


class TestEffectiveRank:
    def test_identity_spectrum_is_full_rank(self):
        d = 8
        # centered features with equal singular values in all d directions
        z = np.vstack([np.eye(d), -np.eye(d)])
        assert dg.effective_rank(_fb(z)) == d

    def test_rank_one_features(self):
        v = np.outer(np.arange(1, 11, dtype=float), np.ones(5))
        assert dg.effective_rank(_fb(v)) == 1

    def test_all_zero_features(self):
        assert dg.effective_rank(_fb(np.zeros((4, 3)))) == 0

    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 2**31 - 1))
    def test_rotation_invariance(self, seed):
        rng = Rng(seed)
        z = rng.normal(size=(32, 6))
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        assert dg.effective_rank(_fb(z)) == dg.effective_rank(_fb(z @ q))

    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 20), st.integers(2, 10))
    def test_upper_bound(self, seed, n, d):
        z = Rng(seed).normal(size=(n, d))
        assert dg.effective_rank(_fb(z)) <= min(n - 1, d)


class TestStableRank:
    def test_identity_covariance(self):
        d = 6
        z = np.vstack([np.eye(d), -np.eye(d)])  # covariance = I/d * const
        assert dg.stable_rank(_fb(z)) == pytest.approx(d, rel=1e-9)

    def test_rank_one_is_one(self):
        v = np.outer(np.arange(1, 9, dtype=float), np.ones(4))
        assert dg.stable_rank(_fb(v)) == pytest.approx(1.0, rel=1e-9)

    def test_zero_features(self):
        assert dg.stable_rank(_fb(np.zeros((4, 3)))) == 0.0

    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 2**31 - 1))
    def test_rotation_invariance(self, seed):
        rng = Rng(seed)
        z = rng.normal(size=(40, 5))
        q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        assert dg.stable_rank(_fb(z)) == pytest.approx(
            dg.stable_rank(_fb(z @ q)), abs=1e-6)

    def test_bounded_by_dimension(self):
        z = Rng(3).normal(size=(50, 7))
        assert dg.stable_rank(_fb(z)) <= 7 + 1e-9


class TestDormantFraction:
    def test_no_dormant_units(self):
        assert dg.dormant_fraction(_fb(np.ones((4, 5)))) == 0.0

    def test_all_dormant(self):
        assert dg.dormant_fraction(_fb(np.zeros((4, 5)))) == 100.0

    def test_partial(self):
        z = np.zeros((10, 4))
        z[:, :2] = 1.0
        assert dg.dormant_fraction(_fb(z)) == pytest.approx(50.0)


class TestGini:
    def test_uniform_is_zero(self):
        assert dg.gini(_fb(np.full((1, 10), 0.3))) == pytest.approx(0.0, abs=1e-12)

    def test_one_hot(self):
        v = np.zeros((1, 16))
        v[0, 3] = 5.0
        assert dg.gini(_fb(v)) == pytest.approx(1 - 1 / 16, abs=1e-12)

    def test_all_zero(self):
        assert dg.gini(_fb(np.zeros((2, 4)))) == 0.0

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 2**31 - 1), st.floats(0.01, 100.0))
    def test_scale_invariance(self, seed, c):
        z = Rng(seed).normal(size=(3, 8))
        assert dg.gini(_fb(z)) == pytest.approx(dg.gini(_fb(c * z)), abs=1e-9)


class TestSimplexEntropy:
    def test_uniform_blocks(self):
        L, V = 3, 8
        z = np.full((4, L * V), 1.0 / V)
        assert dg.simplex_entropy(_fb(z), L, V) == pytest.approx(
            np.log(V), abs=1e-4)

    def test_one_hot_blocks_near_zero(self):
        L, V = 2, 4
        z = np.zeros((3, L * V))
        z[:, 0] = 1.0
        z[:, V] = 1.0
        assert dg.simplex_entropy(_fb(z), L, V) < 1e-4

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            dg.simplex_entropy(_fb(-np.ones((2, 4))), 2, 2)

    def test_temperature_trend_on_sem_outputs(self):
        # lower tau concentrates blocks: gini up, entropy down
        rng = Rng(0)
        L, V = 4, 8
        z = rng.normal(size=(16, L * V))
        taus = [1.0, 0.3, 0.1, 0.03]
        ents, ginis = [], []
        for tau in taus:
            out = sem_forward(Tensor(z), SemConfig(L, V, tau)).data
            ents.append(dg.simplex_entropy(_fb(out), L, V))
            ginis.append(dg.gini(_fb(out)))
        assert all(a > b for a, b in zip(ents, ents[1:]))
        assert all(a < b for a, b in zip(ginis, ginis[1:]))


class TestActionStd:
    def test_constant_actions(self):
        assert dg.action_std(np.ones((5, 3))) == 0.0

    def test_mean_of_dim_stds(self):
        rng = np.random.default_rng(0)
        a = np.column_stack([rng.normal(0, 1, 4000), rng.normal(0, 3, 4000)])
        assert dg.action_std(a) == pytest.approx(2.0, rel=0.05)

    def test_matches_two_pass_oracle(self):
        a = Rng(1).normal(size=(100, 4))
        mean = a.sum(axis=0) / len(a)
        var = ((a - mean) ** 2).sum(axis=0) / len(a)
        assert dg.action_std(a) == pytest.approx(np.sqrt(var).mean(), abs=1e-10)


class TestGradientEnergy:
    def test_zero_residual(self):
        z = Rng(0).normal(size=(10, 3))
        w = np.array([1.0, -2.0, 0.5])
        measured, _ = dg.gradient_energy(w, z, z @ w)
        assert measured == 0.0

    def test_scalar_hand_case(self):
        # z=1, delta=1: gradient of (w*z-y)^2 is 2*delta*z = 2 -> energy 4
        measured, bound = dg.gradient_energy(np.array([1.0]),
                                             np.ones((2, 1)),
                                             np.zeros(2))
        assert measured == pytest.approx(4.0)
        assert bound == pytest.approx(4.0)

    def test_independence_construction_matches_bound(self):
        rng = Rng(42)
        n, d = 100_000, 4
        z = rng.normal(size=(n, d))          # zero-mean features
        delta = rng.split(1).normal(size=n)  # independent of z
        w = np.zeros(d)
        y = -delta                            # so z@w - y = delta
        measured, bound = dg.gradient_energy(w, z, y)
        assert measured == pytest.approx(bound, rel=0.05)


class TestWeightNorm:
    def test_total_is_norm_of_concatenation(self):
        params = [("a", np.array([3.0])), ("b", np.array([4.0]))]
        out = dg.weight_norm(params)
        assert out["total"] == pytest.approx(5.0)
        assert out["a"] == pytest.approx(3.0)


class TestMetricsRow:
    def test_schema_order_fixed(self):
        assert dg.METRICS_COLUMNS[0] == "step"
        assert len(dg.METRICS_COLUMNS) == 16
