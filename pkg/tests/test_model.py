import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmmqcd import Gaussian, Model, ModelError, build_augmented, constant_rho_mode_chain, mode_marginal
from hmmqcd.model import (StateSpacePair, check_column_stochastic, constant_rho_matrix, load_model,
                          model_from_dict, model_to_dict, save_model)
from hmmqcd.scenarios import A_ALPHA, A_BETA, A_NU

from oracles import random_stochastic


def _obs(n):
    return [Gaussian(float(i), 1.0) for i in range(n)]


class TestBuildAugmented:
    def test_paper_matrices(self, example_aug):
        a = example_aug.a
        assert a.shape == (5, 5)
        np.testing.assert_array_equal(a[:2, :2], 0.9995 * A_ALPHA)
        np.testing.assert_array_equal(a[2:, :2], 0.0005 * A_NU)
        np.testing.assert_array_equal(a[:2, 2:], np.zeros((2, 3)))
        np.testing.assert_array_equal(a[2:, 2:], A_BETA)
        # hand-checked column sums: 0.9995 * 1 + 0.0005 * 1 for pre-change columns
        np.testing.assert_allclose(a.sum(axis=0), 1.0, atol=1e-12)

    def test_constant_rho_matches_scalar_blocks(self):
        rho = 0.37
        m = Model(A_ALPHA, A_BETA, A_NU, [rho, rho], _obs(5))
        aug = build_augmented(m)
        expected = np.block([[(1 - rho) * A_ALPHA, np.zeros((2, 3))], [rho * A_NU, A_BETA]])
        assert np.array_equal(aug.a, expected)
        assert np.array_equal(aug.a, constant_rho_matrix(A_ALPHA, A_BETA, A_NU, rho))

    def test_smallest_model(self):
        m = Model([[1.0]], [[1.0]], [[1.0]], 0.5, _obs(2))
        np.testing.assert_array_equal(build_augmented(m).a, [[0.5, 0.0], [0.5, 1.0]])

    def test_state_dependent_rho_blocks(self):
        rho = np.array([0.1, 0.4])
        aug = build_augmented(Model(A_ALPHA, A_BETA, A_NU, rho, _obs(5)))
        for i in range(2):
            for j in range(2):
                assert aug.a[i, j] == (1 - rho[j]) * A_ALPHA[i, j]
        for i in range(3):
            for j in range(2):
                assert aug.a[2 + i, j] == rho[j] * A_NU[i, j]

    def test_initial_vector(self, example_aug):
        np.testing.assert_array_equal(example_aug.initial, [0.5, 0.5, 0, 0, 0])
        m = Model(A_ALPHA, A_BETA, A_NU, 0.1, _obs(5), initial_alpha=[1.0, 0.0])
        np.testing.assert_array_equal(build_augmented(m).initial, [1, 0, 0, 0, 0])

    def test_immutable(self, example_aug):
        with pytest.raises(ValueError):
            example_aug.a[0, 0] = 0.0

    @settings(max_examples=60, deadline=None)
    @given(na=st.integers(1, 4), nb=st.integers(1, 4), seed=st.integers(0, 2 ** 32 - 1),
           constant=st.booleans())
    def test_random_models_are_stochastic(self, na, nb, seed, constant):
        rng = np.random.default_rng(seed)
        rho = rng.uniform(1e-6, 1 - 1e-6) if constant else rng.uniform(1e-6, 1 - 1e-6, na)
        m = Model(random_stochastic(rng, na, na, 0.3), random_stochastic(rng, nb, nb, 0.3),
                  random_stochastic(rng, nb, na, 0.3), rho, _obs(na + nb))
        a = build_augmented(m).a
        assert np.all(a[:na, na:] == 0)
        assert np.all(np.abs(a.sum(axis=0) - 1) <= 1e-12)


class TestValidation:
    def test_rho_out_of_range(self):
        with pytest.raises(ModelError, match="rho: entry 2"):
            Model(A_ALPHA, A_BETA, A_NU, [0.1, 1.0], _obs(5))
        with pytest.raises(ModelError):
            Model(A_ALPHA, A_BETA, A_NU, 0.0, _obs(5))

    def test_non_stochastic(self):
        bad = A_BETA.copy()
        bad[0, 1] = 0.2
        with pytest.raises(ModelError, match="A_beta: column 2"):
            Model(A_ALPHA, bad, A_NU, 0.1, _obs(5))

    def test_dimension_mismatch(self):
        with pytest.raises(ModelError, match="A_nu"):
            Model(A_ALPHA, A_BETA, A_NU[:2], 0.1, _obs(5))
        with pytest.raises(ModelError, match="observations"):
            Model(A_ALPHA, A_BETA, A_NU, 0.1, _obs(4))

    def test_negative_entry_reported(self):
        with pytest.raises(ModelError, match=r"\(1, 2\)"):
            check_column_stochastic([[0.5, -0.1], [0.5, 1.1]], "X")

    def test_state_space_pair(self):
        sp = StateSpacePair(2, 3)
        assert sp.n == 5
        with pytest.raises(ModelError):
            StateSpacePair(0, 3)


class TestModeMarginal:
    @pytest.mark.parametrize("i, expected", [(0, (1.0, 0.0)), (1, (1.0, 0.0)), (2, (0.0, 1.0)), (4, (0.0, 1.0))])
    def test_indicators(self, i, expected):
        assert mode_marginal(np.eye(5)[i], StateSpacePair(2, 3)) == expected

    def test_uniform(self):
        m1, m2 = mode_marginal(np.full(5, 0.2), StateSpacePair(2, 3))
        assert m1 == pytest.approx(0.4)
        assert m2 == pytest.approx(0.6)

    def test_rejects_unnormalized(self):
        with pytest.raises(ModelError):
            mode_marginal(np.full(5, 0.3), StateSpacePair(2, 3))


class TestModeChain:
    def test_values(self):
        np.testing.assert_array_equal(constant_rho_mode_chain(0.0005), [[0.9995, 0.0], [0.0005, 1.0]])
        np.testing.assert_array_equal(constant_rho_mode_chain(0.5), [[0.5, 0.0], [0.5, 1.0]])

    @given(st.floats(1e-9, 1 - 1e-9))
    def test_columns_sum_to_one(self, rho):
        np.testing.assert_allclose(constant_rho_mode_chain(rho).sum(axis=0), 1.0, atol=1e-15)

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.1, 2.0])
    def test_out_of_range(self, rho):
        with pytest.raises(ModelError):
            constant_rho_mode_chain(rho)


class TestJson:
    def test_round_trip(self, example_model, tmp_path):
        path = tmp_path / "m.json"
        save_model(example_model, path)
        doc = json.loads(path.read_text())
        assert doc["n_alpha"] == 2 and doc["n_beta"] == 3
        # arrays of columns
        assert doc["A_beta"][1] == [0.0, 0.9, 0.1]
        assert doc["rho"] == 0.0005
        back = load_model(path)
        np.testing.assert_array_equal(build_augmented(back).a, build_augmented(example_model).a)

    def test_vector_rho_and_product_obs(self):
        doc = {
            "n_alpha": 1, "n_beta": 1, "A_alpha": [[1.0]], "A_beta": [[1.0]], "A_nu": [[1.0]],
            "rho": [0.2], "initial_alpha": [1.0],
            "observations": [{"kind": "product_gaussian", "means": [0, 0], "variances": [1, 1]},
                             {"kind": "product_gaussian", "means": [1, 0], "variances": [1, 2]}],
        }
        m = model_from_dict(doc)
        assert m.obs.dim == 2
        assert model_to_dict(m)["observations"] == doc["observations"]

    def test_dimension_disagreement(self, example_model):
        doc = model_to_dict(example_model)
        doc["n_beta"] = 4
        with pytest.raises(ModelError, match="n_beta"):
            model_from_dict(doc)

    def test_missing_field(self, example_model):
        doc = model_to_dict(example_model)
        del doc["A_nu"]
        with pytest.raises(ModelError, match="A_nu"):
            model_from_dict(doc)
