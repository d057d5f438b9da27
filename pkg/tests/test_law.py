import json
import math

import numpy as np
import pytest
from scipy import stats

from prodlimits.law import (
    CallbackLaw,
    MatrixLaw,
    arithmeticity_heuristic,
    dumps_recipe,
    law_condition_report,
    law_identity,
    law_rank_one,
    law_symmetric,
    law_to_recipe,
    loads_recipe,
    make_law,
    sample_index,
    sample_matrix,
)
from prodlimits.semigroup import column_constant, interior_margin, project_act
from prodlimits.streams import CounterStream


class Fixed:
    """Stream that always returns the same uniform."""

    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


class TestMakeLaw:
    def test_two_atom_law(self, ab_law):
        assert ab_law.dim == 2 and len(ab_law.weights) == 2
        np.testing.assert_array_equal(ab_law.atoms[1], [[1, 2], [3, 1]])

    def test_rank_one_recipe(self, rank_one):
        np.testing.assert_allclose(rank_one.atoms[0], math.exp(-1) * np.ones((2, 2)))
        np.testing.assert_allclose(rank_one.atoms[1], math.e * np.ones((2, 2)))

    def test_point_mass(self, sym_law):
        assert len(sym_law.atoms) == 1 and sym_law.weights[0] == 1.0

    def test_a3_random_respects_column_constant(self):
        law = make_law({"kind": "a3_random", "dim": 3, "C": 4.0, "n_atoms": 5, "seed": 1})
        assert law.dim == 3
        assert all(column_constant(g) <= 4.0 for g in law.atoms)

    @pytest.mark.parametrize("recipe", [
        {"kind": "atoms", "atoms": [[[1, 0], [0, 1]]], "weights": [0.5]},
        {"kind": "atoms", "atoms": [[[1, 0], [0, 1]], [[1]]], "weights": [0.5, 0.5]},
        {"kind": "atoms", "atoms": [[[1, 0], [0, 1]]], "weights": [-1.0]},
        {"kind": "rank_one", "dim": 2, "scalars": [-1.0, 1.0]},
        {"kind": "nope"},
    ])
    def test_invalid_recipes(self, recipe):
        with pytest.raises(ValueError):
            make_law(recipe)

    def test_weight_tolerance(self):
        make_law({"kind": "atoms", "atoms": [np.eye(2).tolist()] * 2, "weights": [0.5, 0.5 + 1e-13]})
        with pytest.raises(ValueError):
            make_law({"kind": "atoms", "atoms": [np.eye(2).tolist()] * 2,
                      "weights": [0.5, 0.5 + 1e-9]})

    def test_immutable(self, ab_law):
        with pytest.raises(ValueError):
            ab_law.atoms[0, 0, 0] = 5.0

    def test_recipe_round_trip_is_exact(self):
        rng = np.random.default_rng(3)
        atoms = rng.exponential(size=(3, 3, 3))
        w = rng.dirichlet(np.ones(3))
        w[-1] = 1.0 - w[:-1].sum()
        law = MatrixLaw(atoms, w)
        back = make_law(loads_recipe(dumps_recipe(law_to_recipe(law))))
        np.testing.assert_array_equal(back.atoms, law.atoms)
        np.testing.assert_array_equal(back.weights, law.weights)
        assert back.fingerprint() == law.fingerprint()
        json.loads(dumps_recipe(law_to_recipe(law)))


class TestSampling:
    def test_single_atom(self, sym_law):
        rng = CounterStream(0, 0)
        for _ in range(10):
            np.testing.assert_array_equal(sample_matrix(sym_law, rng), sym_law.atoms[0])

    def test_forced_uniform_picks_by_prefix_sums(self, ab_law):
        np.testing.assert_array_equal(sample_matrix(ab_law, Fixed(0.2)), ab_law.atoms[0])
        np.testing.assert_array_equal(sample_matrix(ab_law, Fixed(0.7)), ab_law.atoms[1])

    def test_frequencies_chi_square(self):
        law = make_law({"kind": "atoms", "atoms": [np.eye(2).tolist()] * 3,
                        "weights": [0.2, 0.3, 0.5]})
        rng = CounterStream(42, 0)
        counts = np.bincount([sample_index(law, rng) for _ in range(100_000)], minlength=3)
        p = stats.chisquare(counts, 100_000 * law.weights).pvalue
        assert p > 1e-3

    def test_callback_law(self):
        law = CallbackLaw(2, lambda rng: np.eye(2) * (1 + rng.random()))
        g = sample_matrix(law, CounterStream(0, 0))
        assert g.shape == (2, 2) and g[0, 0] == g[1, 1]


class TestConditionReport:
    def test_two_atoms(self, ab_law):
        rep = law_condition_report(ab_law)
        assert rep.a3_constant == 3.0
        assert rep.harmonic_ok and rep.delta == 1.0 and rep.eta_estimate == 1.0
        assert rep.arithmetic_warning is False
        assert rep.epsilon == pytest.approx(1 / 6)

    def test_point_mass_is_lattice(self, sym_law):
        assert law_condition_report(sym_law).arithmetic_warning is True

    def test_rank_one(self, rank_one):
        assert law_condition_report(rank_one).a3_constant == 1.0

    def test_identity_has_no_column_constant(self):
        rep = law_condition_report(law_identity())
        assert rep.a3_constant is None and not rep.harmonic_ok
        assert rep.arithmetic_warning is None  # no strictly positive product

    def test_a3_constant_is_max_over_atoms(self):
        law = make_law({"kind": "a3_random", "dim": 3, "C": 6.0, "n_atoms": 4, "seed": 9})
        rep = law_condition_report(law)
        assert rep.a3_constant == max(column_constant(g) for g in law.atoms)

    def test_callback_law_report_is_approximate(self):
        law = CallbackLaw(2, lambda rng: np.array([[1.0, 1.0], [1.0, 1.0 + rng.random()]]))
        rep = law_condition_report(law, samples=500)
        assert rep.approximate and rep.harmonic_ok and rep.a3_constant <= 2.0

    @pytest.mark.parametrize("recipe", [
        {"kind": "a3_random", "dim": 2, "C": 3.0, "n_atoms": 3, "seed": 2},
        {"kind": "a3_random", "dim": 3, "C": 5.0, "n_atoms": 3, "seed": 4},
        {"kind": "atoms", "atoms": [[[2, 1], [1, 2]], [[1, 2], [3, 1]]], "weights": [0.5, 0.5]},
    ])
    def test_products_land_in_the_interior(self, recipe):
        law = make_law(recipe)
        eps = law_condition_report(law).epsilon
        rng = np.random.default_rng(0)
        for _ in range(1000):
            length = rng.integers(1, 6)
            g = np.eye(law.dim)
            for i in rng.integers(0, len(law.weights), size=length):
                g = law.atoms[i] @ g
            x = rng.exponential(size=law.dim)
            x[rng.integers(law.dim)] = 0.0  # include boundary points
            x /= np.linalg.norm(x)
            y, _ = project_act(g, x)
            assert interior_margin(y) >= eps - 1e-12


class TestArithmeticity:
    def test_point_mass(self, sym_law):
        assert arithmeticity_heuristic(sym_law, depth=3) is True

    def test_two_atoms(self, ab_law):
        assert arithmeticity_heuristic(ab_law, depth=2) is False

    def test_scaled_all_ones(self):
        law = make_law({"kind": "atoms", "atoms": [[[2, 2], [2, 2]], [[4, 4], [4, 4]]],
                        "weights": [0.5, 0.5]})
        assert arithmeticity_heuristic(law) is True

    def test_rank_one_is_a_known_false_negative(self, rank_one):
        # log rho = log 2 +- 1: a shifted lattice, but {log 2 - 1, log 2 + 1}
        # generate a dense subgroup, so the subgroup test cannot see it
        assert arithmeticity_heuristic(rank_one) is False

    def test_identity_is_inconclusive(self):
        assert arithmeticity_heuristic(law_identity()) is None
