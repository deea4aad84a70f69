import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmmqcd import (Gaussian, LogDensity, Model, build_augmented, filter_init, filter_run, filter_step, FilterUnderflow)
from hmmqcd.filter import change_statistic, log_likelihood, read_observations_csv, write_trace_csv
from hmmqcd.scenarios import A_ALPHA, A_BETA, A_NU

from oracles import gaussian_density_table, path_posterior, random_stochastic

MEANS = [0.5, 1.0, 0.5, 1.0, 0.75]


def random_model(rng, na, nb):
    means = rng.normal(0, 1.5, na + nb)
    variances = rng.uniform(0.3, 2.0, na + nb)
    rho = rng.uniform(0.05, 0.95, na)
    model = Model(random_stochastic(rng, na, na, 0.25), random_stochastic(rng, nb, nb, 0.25),
                  random_stochastic(rng, nb, na, 0.25), rho,
                  [Gaussian(m, v) for m, v in zip(means, variances)],
                  initial_alpha=rng.dirichlet(np.ones(na)))
    return model, means, variances


class TestInit:
    def test_uniform_initial(self, example_aug):
        b = filter_init(example_aug)
        np.testing.assert_array_equal(b.z, [0.5, 0.5, 0, 0, 0])
        assert b.m2 == 0.0 and b.k == 0

    def test_point_mass(self):
        m = Model(A_ALPHA, A_BETA, A_NU, 0.01, [Gaussian(x) for x in MEANS], initial_alpha=[1, 0])
        b = filter_init(build_augmented(m))
        np.testing.assert_array_equal(b.z, np.eye(5)[0])
        assert b.m2 == 0.0


class TestStep:
    def test_equal_densities_is_pure_prediction(self, rng):
        m = Model(A_ALPHA, A_BETA, A_NU, [0.2, 0.3], [Gaussian(0.0, 2.0)] * 5)
        aug = build_augmented(m)
        z = rng.dirichlet(np.ones(5))
        from hmmqcd.filter import Belief
        b = filter_step(Belief(z, 1 - z[:2].sum(), 3), 0.7, aug)
        np.testing.assert_allclose(b.z, aug.a @ z, atol=1e-15)
        assert b.k == 4

    def test_one_step_change_mass_is_rho(self):
        rho = 0.0005
        m = Model(A_ALPHA, A_BETA, A_NU, rho, [Gaussian(1.0)] * 5)
        b = filter_step(filter_init(build_augmented(m)), 0.3, build_augmented(m))
        assert b.m2 == pytest.approx(rho, abs=1e-15)

    def test_example_model_six_steps_match_enumeration(self, example_aug):
        ys = np.array([0.2, 1.4, 0.9, -0.3, 0.75, 2.1])
        b = filter_run(example_aug, ys)[-1]
        table = gaussian_density_table(ys, MEANS, [1.0] * 5)
        post, total = path_posterior(A_ALPHA, A_BETA, A_NU, 0.0005, [0.5, 0.5], table)
        assert np.max(np.abs(b.z - post)) < 1e-10
        assert math.exp(b.log_norm_sum) == pytest.approx(total, rel=1e-8)

    def test_underflow_raises(self):
        def box(y):
            return np.where(np.abs(y) <= 1.0, math.log(0.5), -np.inf)

        m = Model([[1.0]], [[1.0]], [[1.0]], 0.1, [LogDensity(box), LogDensity(box)])
        aug = build_augmented(m)
        with pytest.raises(FilterUnderflow) as err:
            filter_run(aug, [0.0, 5.0])
        assert err.value.k == 2

    def test_extreme_tail_does_not_underflow(self):
        m = Model([[1.0]], [[1.0]], [[1.0]], 0.1, [Gaussian(0.0, 1e-4), Gaussian(1.0, 1e-4)])
        b = filter_run(build_augmented(m), [0.0, 1e6])[-1]
        assert b.m2 == pytest.approx(1.0)

    def test_nan_rejected(self, example_aug):
        with pytest.raises(ValueError):
            filter_step(filter_init(example_aug), float("nan"), example_aug)


class TestRun:
    def test_empty(self, example_aug):
        out = filter_run(example_aug, [])
        assert len(out) == 1 and out[0].k == 0

    def test_length_one_equals_step(self, example_aug):
        out = filter_run(example_aug, [0.4])
        step = filter_step(filter_init(example_aug), 0.4, example_aug)
        np.testing.assert_array_equal(out[1].z, step.z)
        assert out[1].log_norm_sum == step.log_norm_sum

    def test_run_equals_repeated_steps(self, example_aug, rng):
        ys = rng.normal(0.8, 1, 50)
        b = filter_init(example_aug)
        for y in ys:
            b = filter_step(b, y, example_aug)
        last = filter_run(example_aug, ys)[-1]
        np.testing.assert_allclose(last.z, b.z, atol=1e-14)
        assert last.log_norm_sum == pytest.approx(b.log_norm_sum, rel=1e-13)

    def test_streaming_callback(self, example_aug, rng):
        ys = rng.normal(0.8, 1, 20)
        seen = []
        out = filter_run(example_aug, ys, callback=lambda b: seen.append(b.k), keep=False)
        assert seen == list(range(1, 21))
        assert len(out) == 2 and out[-1].k == 20
        full = filter_run(example_aug, ys)
        np.testing.assert_array_equal(out[-1].z, full[-1].z)

    def test_change_statistic_trace(self, example_aug, rng):
        ys = rng.normal(0.8, 1, 30)
        m2 = change_statistic(example_aug, ys)
        assert m2[0] == 0.0 and m2.size == 31
        np.testing.assert_allclose(m2[1:], [b.m2 for b in filter_run(example_aug, ys)[1:]])

    def test_log_likelihood(self, example_aug):
        ys = [0.1, 0.9]
        table = gaussian_density_table(ys, MEANS, [1.0] * 5)
        _, total = path_posterior(A_ALPHA, A_BETA, A_NU, 0.0005, [0.5, 0.5], table)
        assert log_likelihood(example_aug, ys) == pytest.approx(math.log(total), rel=1e-10)


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), na=st.integers(1, 3), nb=st.integers(1, 3), T=st.integers(1, 4))
    def test_oracle_equivalence(self, seed, na, nb, T):
        rng = np.random.default_rng(seed)
        model, means, variances = random_model(rng, na, nb)
        aug = build_augmented(model)
        ys = rng.normal(0, 2, T)
        b = filter_run(aug, ys)[-1]
        post, total = path_posterior(model.a_alpha, model.a_beta, model.a_nu, model.rho, model.initial_alpha,
                                     gaussian_density_table(ys, means, variances))
        assert np.max(np.abs(b.z - post)) < 1e-10
        assert math.exp(b.log_norm_sum) == pytest.approx(total, rel=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), na=st.integers(1, 4), nb=st.integers(1, 4))
    def test_normalization_and_prediction_absorption(self, seed, na, nb):
        rng = np.random.default_rng(seed)
        model, _, _ = random_model(rng, na, nb)
        aug = build_augmented(model)
        ys = rng.normal(0, 3, 40)
        beliefs = filter_run(aug, ys)
        for b in beliefs:
            assert abs(b.z.sum() - 1) <= 1e-9
            assert np.all(b.z >= 0)
            assert b.m2 == pytest.approx(1 - b.z[:na].sum(), abs=1e-15)
            pred = aug.a @ b.z
            pre_mass = b.z[:na].sum()
            if pre_mass > 0:
                assert pred[:na].sum() < pre_mass


def test_trace_csv_round_trip(example_aug, tmp_path):
    ys = np.array([0.123456789012345678, 1.5, -0.25])
    beliefs = filter_run(example_aug, ys)
    buf = io.StringIO()
    write_trace_csv(buf, ys, beliefs)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "k,y,zhat_1,zhat_2,zhat_3,zhat_4,zhat_5,m2"
    assert len(lines) == 4
    fields = lines[1].split(",")
    assert float(fields[1]) == ys[0]
    assert float(fields[-1]) == beliefs[1].m2
    obs = tmp_path / "obs.csv"
    obs.write_text("k,y\n1,0.5\n2,1.5\n")
    np.testing.assert_array_equal(read_observations_csv(obs), [0.5, 1.5])


def test_read_observations_rejects_bad_header(tmp_path):
    p = tmp_path / "o.csv"
    p.write_text("time,y\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_observations_csv(p)
