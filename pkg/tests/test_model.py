import numpy as np
import pytest

from filterlab.errors import (
    BadPartition,
    NegativeDensity,
    NonStochastic,
    NonStochasticEmission,
    StateSpaceMismatch,
    UnknownObservation,
)
from filterlab.model import (
    DensityVector,
    HmmModel,
    ObsSpace,
    StateSpace,
    build_model,
    compose,
    iterate,
    markov_kernel,
    partition_model,
    product_model,
    simulate,
    stationary,
    stepping_kernel,
)

from conftest import P_SYM, Q_SYM, e, random_model

M2_SPEC = {
    "states": {"ids": [1, 2], "lambda": [1.0, 1.0]},
    "obs": {"ids": [1, 2], "tau": [1.0, 1.0]},
    "m": {"p": P_SYM, "q": Q_SYM},
}


class TestBuildModel:
    def test_m2_valid(self):
        model = build_model(M2_SPEC)
        # hand check: sum_t p(s,t) * sum_a q(t,a) = sum_t p(s,t) = 1
        rows = np.einsum("sta,t,a->s", model.m, model.states.lambda_weights,
                         model.obs.tau_weights)
        np.testing.assert_allclose(rows, 1.0, atol=1e-14)
        assert model.normalization_residual < 1e-12

    def test_m2_dense_equals_factored(self):
        dense = {
            "states": M2_SPEC["states"], "obs": M2_SPEC["obs"],
            "m": {"dense": (np.array(P_SYM)[:, :, None]
                            * np.array(Q_SYM)[None, :, :]).tolist()},
        }
        np.testing.assert_array_equal(build_model(dense).m, build_model(M2_SPEC).m)

    def test_row_deficit_rejected(self):
        bad = np.array(P_SYM)[:, :, None] * np.array(Q_SYM)[None, :, :]
        bad[0] *= 0.9
        with pytest.raises(NonStochastic):
            HmmModel(StateSpace([1, 2], [1, 1]), ObsSpace([1, 2], [1, 1]), bad)

    def test_negative_density_rejected(self):
        bad = np.array(P_SYM)[:, :, None] * np.array(Q_SYM)[None, :, :]
        bad[0, 0, 0] = -bad[0, 0, 0]
        with pytest.raises(NegativeDensity):
            HmmModel(StateSpace([1, 2], [1, 1]), ObsSpace([1, 2], [1, 1]), bad)

    def test_one_state_one_obs(self):
        model = build_model({
            "states": {"ids": ["s"]}, "obs": {"ids": ["a"]},
            "m": {"dense": [[[1.0]]]},
        })
        np.testing.assert_array_equal(markov_kernel(model), [[1.0]])

    def test_rows_renormalized_inside_tolerance(self):
        m = np.array(P_SYM)[:, :, None] * np.array(Q_SYM)[None, :, :]
        model = HmmModel(StateSpace([1, 2], [1, 1]), ObsSpace([1, 2], [1, 1]),
                         m * (1.0 + 5e-10))
        rows = np.einsum("sta,t,a->s", model.m, [1.0, 1.0], [1.0, 1.0])
        np.testing.assert_allclose(rows, 1.0, atol=1e-15)


class TestSteppingKernel:
    def test_m2_values(self, m2):
        np.testing.assert_allclose(stepping_kernel(m2, 1).matrix,
                                   [[0.56, 0.06], [0.24, 0.14]], atol=1e-14)
        np.testing.assert_allclose(stepping_kernel(m2, 2).matrix,
                                   [[0.14, 0.24], [0.06, 0.56]], atol=1e-14)

    def test_partition_identity(self, m2):
        total = sum(stepping_kernel(m2, a).matrix for a in m2.obs.cells)
        np.testing.assert_allclose(total, markov_kernel(m2), atol=1e-12)

    def test_partition_identity_weighted(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            model = random_model(rng, 4, 3, weighted=True)
            tau = model.obs.tau_weights
            total = sum(tau[i] * stepping_kernel(model, a).matrix
                        for i, a in enumerate(model.obs.cells))
            np.testing.assert_allclose(total, markov_kernel(model), atol=1e-12)

    def test_row_sums_sub_markov_for_counting_tau(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            model = random_model(rng, 4, 3)
            for a in model.obs.cells:
                assert stepping_kernel(model, a).matrix.sum(axis=1).max() <= 1 + 1e-12

    def test_unknown_observation(self, m2):
        with pytest.raises(UnknownObservation):
            stepping_kernel(m2, 99)

    def test_one_state(self):
        model = build_model({
            "states": {"ids": [0]}, "obs": {"ids": [0]}, "m": {"dense": [[[1.0]]]},
        })
        np.testing.assert_array_equal(stepping_kernel(model, 0).matrix, [[1.0]])


class TestMarkovKernel:
    def test_m2(self, m2):
        np.testing.assert_allclose(markov_kernel(m2), P_SYM, atol=1e-14)

    def test_permutation_model(self, periodic_fixture):
        np.testing.assert_allclose(markov_kernel(periodic_fixture),
                                   [[0, 1], [1, 0]], atol=0)

    def test_composed_is_product(self):
        rng = np.random.default_rng(11)
        m1 = random_model(rng, 3, 2)
        m2_ = random_model(rng, 3, 2)
        composed = compose(m1, m2_)
        np.testing.assert_allclose(markov_kernel(composed),
                                   markov_kernel(m1) @ markov_kernel(m2_),
                                   atol=1e-12)


class TestCompose:
    def test_m2_squared_observations(self, m2):
        comp = compose(m2, m2)
        assert comp.n_obs == 4
        assert comp.obs.cells == ((1, 1), (1, 2), (2, 1), (2, 2))
        total = sum(comp.stepping_matrix(a) for a in comp.obs.cells)
        np.testing.assert_allclose(total, np.linalg.matrix_power(np.array(P_SYM), 2),
                                   atol=1e-12)

    def test_identity_model_neutral(self, m2):
        ident = build_model({
            "states": {"ids": [1, 2]}, "obs": {"ids": ["e"]},
            "m": {"dense": np.eye(2)[:, :, None].tolist()},
        })
        comp = compose(m2, ident)
        for a in m2.obs.cells:
            np.testing.assert_allclose(comp.stepping_matrix((a, "e")),
                                       m2.stepping_matrix(a), atol=1e-14)

    def test_associativity_random(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            a = random_model(rng, 3, 2)
            b = random_model(rng, 3, 2)
            c = random_model(rng, 3, 2)
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
            # observation labels nest differently; tensors must agree
            assert np.max(np.abs(left.m - right.m)) < 1e-12

    def test_state_space_mismatch(self, m2):
        other = random_model(np.random.default_rng(0), 3, 2)
        with pytest.raises(StateSpaceMismatch):
            compose(m2, other)


class TestIterate:
    def test_n1_is_same(self, m2):
        assert iterate(m2, 1) is m2

    def test_n2_stepping_is_matrix_product(self, m2):
        it = iterate(m2, 2)
        m1 = m2.stepping_matrix(1)
        np.testing.assert_allclose(it.stepping_matrix((1, 1)), m1 @ m1, atol=1e-13)

    def test_tau_weights_multiply(self):
        # emission rows integrate to one against tau = (0.5, 1.5)
        model = product_model(P_SYM, [[1.0, 1 / 3], [1.0, 1 / 3]],
                              tau_weights=[0.5, 1.5])
        it = iterate(model, 3)
        for seq, w in zip(it.obs.cells, it.obs.tau_weights):
            expected = np.prod([model.obs.tau_weights[model.obs.index(a)]
                                for a in seq])
            assert w == pytest.approx(expected, abs=1e-15)

    def test_lexicographic_order(self, m2):
        assert iterate(m2, 2).obs.cells == ((1, 1), (1, 2), (2, 1), (2, 2))

    def test_n0_rejected(self, m2):
        with pytest.raises(ValueError):
            iterate(m2, 0)


class TestStationary:
    def test_m2_pi_and_decay(self, m2):
        pi, report = stationary(m2)
        np.testing.assert_allclose(pi.values, [0.5, 0.5], atol=1e-12)
        assert report.converged and report.ergodic
        # eigendecomposition oracle: rows of P^n are pi +- 0.4^n/2 (1,-1)
        expected = [0.4 ** (n + 1) for n in range(6)]
        np.testing.assert_allclose(report.sup_tv[:6], expected, atol=1e-12)

    def test_identity_chain_flagged(self):
        model = partition_model(np.eye(2), [[1, 2]])
        pi, report = stationary(model)
        assert report.residual < 1e-12
        assert not report.ergodic

    def test_two_cycle_flagged(self, periodic_fixture):
        pi, report = stationary(periodic_fixture)
        assert not report.ergodic
        assert "periodic" in report.note

    def test_sup_distance_non_increasing(self, m2):
        rng = np.random.default_rng(13)
        models = [m2] + [random_model(rng, 4, 2) for _ in range(5)]
        for model in models:
            _, report = stationary(model)
            diffs = np.diff(report.sup_tv)
            assert np.all(diffs <= 1e-12)


class TestSimulate:
    def test_constant_model(self):
        model = build_model({
            "states": {"ids": ["s"]}, "obs": {"ids": ["a"]}, "m": {"dense": [[[1.0]]]},
        })
        path = simulate(model, DensityVector.uniform(model.states), 20, seed=1)
        assert set(path.states) == {"s"}
        assert set(path.observations) == {"a"}

    def test_seed_reproducible(self, m2):
        x0 = DensityVector.uniform(m2.states)
        assert simulate(m2, x0, 50, seed=7) == simulate(m2, x0, 50, seed=7)
        assert simulate(m2, x0, 50, seed=7) != simulate(m2, x0, 50, seed=8)

    def test_state_frequency_matches_pi(self, m2):
        x0 = DensityVector(m2.states, [0.5, 0.5])
        path = simulate(m2, x0, 100_000, seed=42)
        freq = np.mean([s == 1 for s in path.states])
        assert abs(freq - 0.5) < 0.01

    def test_joint_frequency_matches_density(self, m2):
        x0 = DensityVector(m2.states, [0.5, 0.5])
        n = 200_000
        path = simulate(m2, x0, n, seed=9)
        states = np.array([m2.states.index(s) for s in path.states])
        obs = np.array([m2.obs.index(a) for a in path.observations])
        for s in range(2):
            from_s = states[:-1] == s
            count_s = from_s.sum()
            for t in range(2):
                for a in range(2):
                    hits = ((states[1:] == t) & (obs == a) & from_s).sum()
                    p = m2.m[s, t, a]
                    sigma = np.sqrt(p * (1 - p) / count_s)
                    assert abs(hits / count_s - p) < 3.5 * sigma


class TestPartitionBuilder:
    def test_column_masking(self):
        model = partition_model(P_SYM, [[1], [2]])
        np.testing.assert_allclose(model.stepping_matrix(1),
                                   [[0.7, 0.0], [0.3, 0.0]], atol=1e-14)

    def test_overlap_rejected(self):
        with pytest.raises(BadPartition):
            partition_model(P_SYM, [[1, 2], [2]])

    def test_missing_cell_rejected(self):
        with pytest.raises(BadPartition):
            partition_model(P_SYM, [[1]])


class TestProductBuilder:
    def test_emission_must_be_stochastic(self):
        with pytest.raises(NonStochasticEmission):
            product_model(P_SYM, [[0.8, 0.1], [0.2, 0.8]])
