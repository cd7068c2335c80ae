import numpy as np
import pytest

from filterlab.errors import BadPartition, NonStochasticEmission
from filterlab.filter import (
    LipschitzFunction,
    mass_functional,
    pushforward_n,
)
from filterlab.lab import (
    barycenter_identity_check,
    example_partition,
    example_product,
    osc_decay_report,
    partition_hypothesis_report,
    periodic_control_model,
    product_hypothesis_check,
    restricted_perron_density,
    simplex_grid,
    tightness_probe,
    weak_contraction_report,
)
from filterlab.model import DensityVector, markov_kernel, stationary

from conftest import P_SYM, Q_SYM, e, random_model


class TestExamplePartition:
    def test_column_masking(self):
        model = example_partition(P_SYM, [[1], [2]])
        np.testing.assert_allclose(model.stepping_matrix(1),
                                   [[0.7, 0.0], [0.3, 0.0]], atol=1e-14)

    def test_single_block_filter_is_chain_marginal(self):
        model = example_partition(P_SYM, [[1, 2]])
        x = DensityVector(model.states, [0.9, 0.1])
        P = markov_kernel(model)
        for n in range(1, 5):
            law = pushforward_n(model, x, n)
            assert law.n_atoms == 1
            np.testing.assert_allclose(law.points[0],
                                       x.masses @ np.linalg.matrix_power(P, n),
                                       atol=1e-13)

    def test_bad_partition(self):
        with pytest.raises(BadPartition):
            example_partition(P_SYM, [[1], [1, 2]])

    def test_hypothesis_report(self, partition_fixture):
        report = partition_hypothesis_report(partition_fixture)
        assert report.ok
        cand = {c["observation"]: c for c in report.candidates}
        assert cand[1]["d0"] == pytest.approx(0.7)
        assert cand[1]["D0"] == pytest.approx(0.7)
        assert cand[1]["pi_mass"] == pytest.approx(0.5)

    def test_hypothesis_report_periodic(self, periodic_fixture):
        report = partition_hypothesis_report(periodic_fixture)
        assert not report.ok


class TestExampleProduct:
    def test_m2_form(self, m2):
        built = example_product(P_SYM, Q_SYM)
        np.testing.assert_array_equal(built.m, m2.m)

    def test_uniform_emission_uninformative(self):
        model = example_product(P_SYM, [[0.5, 0.5], [0.5, 0.5]])
        x = DensityVector(model.states, [0.9, 0.1])
        law = pushforward_n(model, x, 1)
        assert law.n_atoms == 1  # both observations update identically
        np.testing.assert_allclose(law.points[0],
                                   x.masses @ markov_kernel(model), atol=1e-14)

    def test_emission_rows_checked(self):
        with pytest.raises(NonStochasticEmission):
            example_product(P_SYM, [[0.9, 0.2], [0.2, 0.8]])

    def test_block_positive_candidate_constants(self):
        # q constant on its support block, p pinched on F0 x F0: the extracted
        # bounds are exactly the products of the factor bounds
        p = [[0.2, 0.5, 0.3], [0.4, 0.2, 0.4], [1 / 3, 1 / 3, 1 / 3]]
        q = [[0.4, 0.6], [0.4, 0.6], [0.0, 1.0]]
        model = example_product(p, q)
        cert = product_hypothesis_check(model, F0=[1, 2], B0=[1])
        assert cert.ok
        assert cert.d0 == pytest.approx(0.2 * 0.4, abs=1e-15)
        assert cert.D0 == pytest.approx(0.5 * 0.4, abs=1e-15)
        assert cert.beta0 == pytest.approx(2.0)
        assert cert.F1 == {1: (1, 2)}


class TestWeakContraction:
    def test_equal_starts_zero(self, m2):
        x = DensityVector(m2.states, [0.4, 0.6])
        report = weak_contraction_report(m2, [(x, x)], n_max=4)
        np.testing.assert_allclose(report.distances, 0.0, atol=1e-12)
        assert report.floor_ok

    def test_m2_vertex_pair(self, m2):
        report = weak_contraction_report(m2, [(e(m2, 1), e(m2, 2))], n_max=6)
        # hand value at n=1: sorted atom coupling costs 2*0.4
        assert report.distances[0, 0] == pytest.approx(0.8, abs=1e-12)
        expected_floor = 2.0 * 0.4 ** np.arange(1, 7)
        np.testing.assert_allclose(report.lower_bounds[0], expected_floor,
                                   atol=1e-12)
        assert report.floor_ok
        assert np.all(np.diff(report.distances[0]) < 0)
        rate, _ = report.rates[0]
        assert rate == pytest.approx(0.4, abs=1e-6)

    def test_uninformative_observations_reduce_to_chain(self):
        model = example_partition(P_SYM, [[1, 2]])
        x, y = e(model, 1), e(model, 2)
        report = weak_contraction_report(model, [(x, y)], n_max=5)
        np.testing.assert_allclose(report.distances, report.lower_bounds,
                                   atol=1e-12)

    def test_csv(self, m2, tmp_path):
        report = weak_contraction_report(m2, [(e(m2, 1), e(m2, 2))], n_max=2)
        out = tmp_path / "wc.csv"
        report.to_csv(out)
        assert len(out.read_text().strip().splitlines()) == 3


class TestOscDecay:
    def test_constant_function(self, m2):
        u = LipschitzFunction(fn=lambda m: np.full(m.shape[:-1], 1.0),
                              gamma=0.0, sup_norm=1.0, name="const")
        report = osc_decay_report(m2, [u], n_max=4)
        np.testing.assert_allclose(report.oscillations, 0.0, atol=1e-15)

    def test_m2_geometric_decay(self, m2):
        # averaging the cell-1 mass n times gives (xP^n)(1): oscillation 0.4^n
        u = mass_functional(m2, [1])
        report = osc_decay_report(m2, [u], n_max=6)
        np.testing.assert_allclose(report.oscillations[0],
                                   0.4 ** np.arange(7), atol=1e-12)
        assert report.monotone_ok
        assert report.decay_detected == [True]
        rate, _ = report.rates[0]
        assert rate == pytest.approx(0.4, abs=1e-9)

    def test_periodic_fixture_plateau(self, periodic_fixture):
        u = mass_functional(periodic_fixture, [1])
        report = osc_decay_report(periodic_fixture, [u], n_max=6)
        np.testing.assert_allclose(report.oscillations[0], 1.0, atol=1e-12)
        assert report.monotone_ok
        assert report.decay_detected == [False]

    def test_csv(self, m2, tmp_path):
        u = mass_functional(m2, [1])
        report = osc_decay_report(m2, [u], n_max=2)
        out = tmp_path / "osc.csv"
        report.to_csv(out)
        assert out.read_text().startswith("function,n,oscillation")


class TestBarycenterIdentity:
    def test_zero_horizon(self, m2):
        assert barycenter_identity_check(m2, [e(m2, 1)], n_max=0) == 0.0

    def test_m2(self, m2):
        residual = barycenter_identity_check(m2, [e(m2, 1), e(m2, 2)], n_max=6)
        assert residual < 1e-12

    def test_random_models(self):
        rng = np.random.default_rng(0)
        for _ in range(3):
            model = random_model(rng, 5, 2, weighted=True)
            x = DensityVector.from_masses(model.states,
                                          rng.dirichlet(np.ones(5)))
            assert barycenter_identity_check(model, [x], n_max=4) < 1e-10


class TestTightness:
    def test_degenerate_model(self):
        from filterlab.model import build_model
        model = build_model({
            "states": {"ids": ["s"]}, "obs": {"ids": ["a"]},
            "m": {"dense": [[[1.0]]]},
        })
        x0 = DensityVector.uniform(model.states)
        report = tightness_probe(model, x0, 0.5, [x0], n_max=4)
        np.testing.assert_array_equal(report.masses, 1.0)
        assert report.liminf_estimate == 1.0

    def test_diameter_epsilon_full_mass(self, m2):
        pi, _ = stationary(m2)
        report = tightness_probe(m2, pi, 2.0, [e(m2, 1), e(m2, 2)], n_max=4)
        np.testing.assert_allclose(report.masses, 1.0, atol=1e-12)

    def test_partition_fixture_positive_liminf(self, partition_fixture):
        x0 = restricted_perron_density(partition_fixture, [1], 1)
        np.testing.assert_allclose(x0.values, [1.0, 0.0], atol=1e-12)
        starts = [e(partition_fixture, 1), e(partition_fixture, 2)]
        report = tightness_probe(partition_fixture, x0, 0.1, starts, n_max=8)
        assert report.liminf_estimate > 0.3

    def test_csv(self, m2, tmp_path):
        pi, _ = stationary(m2)
        report = tightness_probe(m2, pi, 1.0, [e(m2, 1)], n_max=2)
        out = tmp_path / "tight.csv"
        report.to_csv(out)
        assert out.read_text().startswith("start,n,ball_mass")


class TestGrids:
    def test_two_cells(self, m2):
        grid = simplex_grid(m2.states, step=0.25)
        np.testing.assert_allclose(grid.sum(axis=1), 1.0, atol=1e-12)
        assert len(grid) == 5

    def test_three_cells(self):
        from filterlab.model import StateSpace
        space = StateSpace([1, 2, 3], [1, 1, 1])
        grid = simplex_grid(space, step=0.25)
        np.testing.assert_allclose(grid.sum(axis=1), 1.0, atol=1e-12)
        assert len(grid) == 15

    def test_many_cells_seeded(self):
        from filterlab.model import StateSpace
        space = StateSpace([1, 2, 3, 4, 5], [1, 1, 1, 1, 1])
        a = simplex_grid(space, seed=3, mc_points=64)
        b = simplex_grid(space, seed=3, mc_points=64)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)


def test_periodic_control_is_two_cycle():
    model = periodic_control_model()
    np.testing.assert_array_equal(markov_kernel(model), [[0, 1], [1, 0]])
    assert model.n_obs == 1
