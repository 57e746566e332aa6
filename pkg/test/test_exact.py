# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.
import argparse
import math

import numpy as np
import pytest
import torch
from _utils_internal import diabetes, synthetic_data, synthetic_rows
from momsjump.errors import (
    EnumerationRefusedError,
    InconsistentEnumerationError,
    InsufficientDataError,
    QuadratureError,
)
from momsjump.exact import (
    enumerate_models,
    GPriorSpec,
    log_bf_vs_null,
    model_conditional_moments,
    posterior_g_moments,
    QuadratureConfig,
    summarize_exact,
)
from momsjump.linmodel import fit_model, load_data, ModelIndicator
from scipy import integrate, special

# diabetes data: inclusion probability, model-averaged mean and sd
DIABETES_EXACT = {
    "AGE": (0.079, -0.001, 0.061),
    "SEX": (0.987, -21.399, 6.234),
    "BMI": (1.000, 5.699, 0.712),
    "BP": (1.000, 1.115, 0.219),
    "S1": (0.661, -0.448, 0.464),
    "S2": (0.453, 0.260, 0.432),
    "S3": (0.515, -0.484, 0.548),
    "S4": (0.257, 1.830, 4.324),
    "S5": (1.000, 55.362, 14.173),
    "S6": (0.125, 0.035, 0.133),
}


def log_bf_on_log_g(n, dim, R2, power=0):
    """Bayes factor integral over ``log g`` with plain numpy, and ``E[s**power]`` weights."""

    def log_f(u):
        g = np.exp(u)
        return (
            0.5 * math.log(0.5 * n)
            - special.gammaln(0.5)
            - 1.5 * u
            - 0.5 * n / g
            + 0.5 * (n - 1 - dim) * np.log1p(g)
            - 0.5 * (n - 1) * np.log1p((1.0 - R2) * g)
            + u
        )

    grid = np.linspace(-30, 30, 20001)
    shift = log_f(grid).max()
    value, _ = integrate.quad(
        lambda u: (np.exp(u) / (1 + np.exp(u))) ** power * np.exp(log_f(u) - shift),
        -30,
        30,
        points=[float(grid[np.argmax(log_f(grid))])],
        limit=500,
        epsabs=0,
        epsrel=1e-12,
    )
    return shift + math.log(value)


@pytest.fixture(scope="module")
def diabetes_exact():
    data = diabetes()
    scores = enumerate_models(data)
    return data, scores, summarize_exact(scores, data)


class TestPosteriorG:
    @pytest.mark.parametrize(
        "n,dim,R2", [(30, 1, 0.1), (30, 2, 0.4), (100, 5, 0.8), (442, 8, 0.52)]
    )
    def test_log_bf(self, n, dim, R2):
        post = posterior_g_moments(n, dim, R2)
        assert post.log_bf == pytest.approx(log_bf_on_log_g(n, dim, R2), abs=1e-7)

    @pytest.mark.parametrize("n,dim,R2", [(30, 2, 0.4), (100, 5, 0.8)])
    def test_shrinkage_moments(self, n, dim, R2):
        post = posterior_g_moments(n, dim, R2)
        base = log_bf_on_log_g(n, dim, R2)
        first = math.exp(log_bf_on_log_g(n, dim, R2, 1) - base)
        second = math.exp(log_bf_on_log_g(n, dim, R2, 2) - base)
        assert post.shrinkage_mean == pytest.approx(first, rel=1e-7)
        assert post.shrinkage_sq_mean == pytest.approx(second, rel=1e-7)
        assert 0 < post.shrinkage_sq_mean < post.shrinkage_mean < 1
        assert post.shrinkage_sq_mean >= post.shrinkage_mean**2

    @pytest.mark.parametrize(
        "n,R2", [(50, 0.0), (50, 1e-4), (50, 0.15), (50, 0.99), (442, 0.146294)]
    )
    def test_one_predictor(self, n, R2):
        post = posterior_g_moments(n, 1, R2)
        base = log_bf_on_log_g(n, 1, R2)
        assert post.log_bf == pytest.approx(base, abs=1e-7)
        first = math.exp(log_bf_on_log_g(n, 1, R2, 1) - base)
        assert post.shrinkage_mean == pytest.approx(first, rel=1e-7)
        assert 0 < post.shrinkage_sq_mean < post.shrinkage_mean < 1

    def test_bayes_factor_increases_with_fit(self):
        values = [posterior_g_moments(50, 3, r2, moments=False).log_bf for r2 in (0.1, 0.3, 0.5, 0.7)]
        assert values == sorted(values)

    def test_no_moments(self):
        post = posterior_g_moments(50, 3, 0.3, moments=False)
        assert math.isnan(post.shrinkage_mean)

    def test_quadrature_failure(self):
        with pytest.raises(QuadratureError, match="did not converge"):
            posterior_g_moments(442, 8, 0.52, QuadratureConfig(tolerance=1e-15))

    @pytest.mark.parametrize("shape,scale", [(0.0, 1.0), (1.0, -2.0)])
    def test_prior_validation(self, shape, scale):
        with pytest.raises(ValueError, match="positive shape and scale"):
            GPriorSpec(shape, scale)

    def test_prior_log_prob(self):
        prior = GPriorSpec.for_n(20)
        # Inv-Gamma(1/2, 10) at g = 10
        expected = 0.5 * math.log(10) - special.gammaln(0.5) - 1.5 * math.log(10) - 1.0
        assert prior.log_prob(10.0) == pytest.approx(expected)

    def test_quadrature_config_validation(self):
        with pytest.raises(ValueError, match="tolerance must be positive"):
            QuadratureConfig(tolerance=0.0)


class TestBayesFactor:
    def test_null_model(self):
        data = diabetes()
        assert log_bf_vs_null(data, ModelIndicator.null(data.p)) == 0.0

    def test_matches_r2(self):
        data = synthetic_data(n=40, coef=(0.8, 0.0, 0.3))
        gamma = ModelIndicator((True, False, True))
        fit = fit_model(data, gamma)
        assert log_bf_vs_null(data, gamma) == pytest.approx(
            log_bf_on_log_g(40, 2, fit.R2), abs=1e-7
        )


class TestEnumerate:
    def test_one_predictor(self):
        data = load_data([(1.0, 1.1), (2.0, 1.9), (3.0, 3.2), (4.0, 3.9), (5.0, 5.3)])
        scores = enumerate_models(data)
        assert [s.gamma for s in scores] == list(ModelIndicator.all_models(1))
        probs = [math.exp(s.log_post_prob) for s in scores]
        assert sum(probs) == pytest.approx(1.0, abs=1e-12)
        assert scores[0].log_bf_vs_null == 0.0

    def test_noise_predictor(self):
        data = synthetic_data(n=100, coef=(0.8, 0.0))
        scores = enumerate_models(data)
        total = torch.tensor([s.log_post_prob for s in scores], dtype=torch.float64).logsumexp(0)
        assert float(total) == pytest.approx(0.0, abs=1e-12)
        summary = summarize_exact(scores, data)
        assert float(summary.pip[0]) > 0.99
        assert 0.0 < float(summary.pip[1]) < 1.0

    def test_scale_invariance(self):
        rows = synthetic_rows(40, (0.8, 0.0, 0.3))
        scales = (3.0, 0.1, 20.0, 7.5)
        rescaled = [tuple(c * v for c, v in zip(scales, row)) for row in rows]
        scores = enumerate_models(load_data(rows))
        rescaled_scores = enumerate_models(load_data(rescaled))
        for s, r in zip(scores, rescaled_scores):
            assert s.gamma == r.gamma
            assert r.log_bf_vs_null == pytest.approx(s.log_bf_vs_null, abs=1e-8)

    def test_permutation_invariance(self):
        rows = synthetic_rows(40, (0.8, 0.0, 0.3))
        order = (2, 0, 1)
        permuted = [tuple(row[j] for j in order) + (row[3],) for row in rows]
        data, permuted_data = load_data(rows), load_data(permuted)
        pip = summarize_exact(enumerate_models(data), data).pip
        permuted_pip = summarize_exact(enumerate_models(permuted_data), permuted_data).pip
        torch.testing.assert_close(permuted_pip, pip[list(order)], rtol=0, atol=1e-8)

    def test_refused(self):
        data = synthetic_data(n=40, coef=[0.1] * 4)
        with pytest.raises(EnumerationRefusedError, match="moms or rjmcmc"):
            enumerate_models(data, max_p=3)

    def test_workers_do_not_change_scores(self):
        data = synthetic_data(n=40, coef=(0.5, 0.0, 0.2))
        serial = enumerate_models(data)
        pooled = enumerate_models(data, workers=2)
        assert serial == pooled

    def test_missing_model(self):
        data = synthetic_data()
        scores = enumerate_models(data)
        with pytest.raises(InconsistentEnumerationError, match="missing"):
            summarize_exact(scores[:-1], data)
        with pytest.raises(InconsistentEnumerationError, match="duplicated"):
            summarize_exact(scores[:-1] + scores[:1], data)

    def test_conditional_moments(self):
        data = synthetic_data(n=40, coef=(0.8, 0.3))
        gamma = ModelIndicator.full(2)
        fit = fit_model(data, gamma)
        mean, sd = model_conditional_moments(data, gamma)
        s = posterior_g_moments(data.n, 2, fit.R2).shrinkage_mean
        torch.testing.assert_close(mean, s * fit.beta_hat)
        assert (sd > 0).all()
        null_mean, null_sd = model_conditional_moments(data, ModelIndicator.null(2))
        assert null_mean.shape == null_sd.shape == (0,)

    def test_conditional_moments_small_n(self):
        data = load_data([(1.0, 2.0), (2.0, 1.0), (3.0, 4.0)])
        with pytest.raises(InsufficientDataError, match="n > 3"):
            model_conditional_moments(data, ModelIndicator.full(1))


class TestDiabetes:
    def test_probabilities_normalized(self, diabetes_exact):
        _, scores, summary = diabetes_exact
        assert len(scores) == 1024
        total = torch.tensor([s.log_post_prob for s in scores], dtype=torch.float64).logsumexp(0)
        assert float(total) == pytest.approx(0.0, abs=1e-12)
        probs = [prob for _, prob in summary.top_models]
        assert probs == sorted(probs, reverse=True)
        assert len(probs) == 10

    @pytest.mark.parametrize("name", list(DIABETES_EXACT))
    def test_table(self, diabetes_exact, name):
        data, _, summary = diabetes_exact
        j = data.column_index(name)
        pip, mean, sd = DIABETES_EXACT[name]
        assert round(float(summary.pip[j]), 3) == pip
        assert float(summary.bma_mean[j]) == pytest.approx(mean, abs=max(0.005, 1e-3 * abs(mean)))
        assert float(summary.bma_sd[j]) == pytest.approx(sd, abs=max(0.005, 1e-3 * sd))

    def test_frame(self, diabetes_exact):
        data, _, summary = diabetes_exact
        frame = summary.to_frame()
        assert list(frame.columns) == ["name", "pip", "bma_mean", "bma_sd"]
        assert list(frame["name"]) == list(data.column_names)


if __name__ == "__main__":
    args, unknown = argparse.ArgumentParser().parse_known_args()
    pytest.main([__file__, "--capture", "no", "--exitfirst"] + unknown)
