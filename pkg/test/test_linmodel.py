# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.
import argparse

import pandas as pd
import pytest
import torch
from _utils_internal import diabetes, synthetic_data, synthetic_rows
from momsjump.errors import DataError, InsufficientDataError, RankDeficiencyError
from momsjump.linmodel import (
    DEFAULT_CACHE_SIZE,
    fit_model,
    intercept_posterior,
    load_data,
    ModelCache,
    ModelIndicator,
)


class TestModelIndicator:
    def test_key_order(self):
        models = list(ModelIndicator.all_models(4))
        assert [m.key for m in models] == list(range(16))
        assert models == sorted(models)
        assert models[0] == ModelIndicator.null(4)
        assert models[-1] == ModelIndicator.full(4)

    @pytest.mark.parametrize("p", [0, 1, 3, 7])
    def test_from_key(self, p):
        for key in range(1 << p):
            gamma = ModelIndicator.from_key(key, p)
            assert gamma.key == key
            assert gamma.p == p
            assert ModelIndicator.from_tensor(gamma.to_tensor()) == gamma

    def test_from_key_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            ModelIndicator.from_key(8, 3)

    def test_flip(self):
        gamma = ModelIndicator((False, True, True))
        flipped = gamma.flip(0)
        assert flipped == ModelIndicator((True, True, True))
        assert flipped.flip(0) == gamma
        assert gamma.size == 2
        assert gamma.included == (1, 2)

    def test_names_and_str(self):
        gamma = ModelIndicator.from_indices(4, [0, 2])
        assert str(gamma) == "1010"
        assert repr(gamma) == "ModelIndicator(1010)"
        assert gamma.names(["a", "b", "c", "d"]) == ("a", "c")

    def test_hashable(self):
        a = ModelIndicator((True, False))
        b = ModelIndicator.from_key(2, 2)
        assert {a: 1}[b] == 1


class TestLoadData:
    def test_centering(self):
        data = load_data([(1, 2), (2, 4), (3, 6)], response_column=1)
        torch.testing.assert_close(
            data.y_centered, torch.tensor([-2.0, 0.0, 2.0], dtype=torch.float64)
        )
        assert data.y_mean == 4.0
        assert data.n == 3 and data.p == 1
        assert data.yty == 8.0
        torch.testing.assert_close(
            data.XtX, torch.tensor([[2.0]], dtype=torch.float64)
        )

    def test_diabetes(self):
        data = diabetes()
        assert data.n == 442
        assert data.p == 10
        assert data.column_names == (
            "AGE", "SEX", "BMI", "BP", "S1", "S2", "S3", "S4", "S5", "S6"
        )
        assert data.response_name == "Y"
        assert data.full_rank
        torch.testing.assert_close(data.XtX, data.XtX.T, rtol=0, atol=0)
        assert data.X_centered.mean(0).abs().max() < 1e-10

    def test_default_response_is_last(self):
        data = load_data("diabetes")
        assert data.response_name == "Y"

    def test_local_file_named_diabetes(self, tmp_path, monkeypatch):
        (tmp_path / "diabetes").write_text("a,y\n1,1.5\n2,2.5\n3,2.0\n4,5.0\n")
        monkeypatch.chdir(tmp_path)
        data = load_data("diabetes")
        assert data.column_names == ("a",)
        assert data.n == 4

    def test_csv_file(self, tmp_path):
        path = tmp_path / "toy.csv"
        path.write_text("a,b,y\n1,0,1.5\n2,1,2.5\n3,0,2.0\n4,1,5.0\n")
        data = load_data(str(path), "y")
        assert data.column_names == ("a", "b")
        assert data.n == 4

    @pytest.mark.parametrize("response", ["y", 2, -1])
    def test_response_column(self, response):
        frame = pd.DataFrame({"a": [1.0, 2.0, 3.0, 5.0], "b": [0.0, 1.0, 0.0, 2.0], "y": [1.0, 3.0, 2.0, 4.0]})
        data = load_data(frame, response)
        assert data.response_name == "y"
        assert data.column_names == ("a", "b")

    def test_dict_records(self):
        rows = [{"x": 1.0, "y": 2.0}, {"x": 2.0, "y": 3.5}, {"x": 3.0, "y": 3.0}]
        data = load_data(rows)
        assert data.column_names == ("x",)

    def test_missing_response(self):
        with pytest.raises(DataError, match="response column 'z' not found"):
            load_data([(1, 2), (2, 3), (3, 5)], "z", columns=["x", "y"])

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n2,oops\n3,4\n")
        with pytest.raises(DataError, match="row 2, column 'b'"):
            load_data(str(path))

    def test_missing_value(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n2,\n3,4\n")
        with pytest.raises(DataError, match="missing value"):
            load_data(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="could not read"):
            load_data(str(tmp_path / "nope.csv"))

    def test_constant_predictor(self):
        with pytest.raises(DataError, match="predictor 'c' is constant"):
            load_data([(1, 5, 1), (2, 5, 3), (3, 5, 2)], columns=["a", "c", "y"])

    def test_constant_response(self):
        with pytest.raises(DataError, match="response 'y' is constant"):
            load_data([(1, 1), (2, 1), (3, 1)], columns=["a", "y"])

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError, match="at least 2 rows"):
            load_data([(1, 2)])

    def test_underdetermined_warns(self):
        rows = synthetic_rows(4, [1.0, 0.5, 0.2, 0.1])
        with pytest.warns(UserWarning, match="under-determined"):
            data = load_data(rows)
        assert not data.full_rank

    def test_column_index(self):
        data = diabetes()
        assert data.column_index("BMI") == 2
        with pytest.raises(KeyError, match="not found"):
            data.column_index("BMX")


class TestFitModel:
    @pytest.mark.parametrize("key", [1, 5, 100, 512, 1023])
    def test_least_squares(self, key):
        data = diabetes()
        gamma = ModelIndicator.from_key(key, data.p)
        fit = fit_model(data, gamma)
        X = data.X_centered[:, list(gamma.included)]
        expected = torch.linalg.lstsq(X, data.y_centered.unsqueeze(-1)).solution.squeeze(-1)
        torch.testing.assert_close(fit.beta_hat, expected, rtol=1e-8, atol=1e-8)
        resid = data.y_centered - X @ expected
        assert fit.rss == pytest.approx(float(resid @ resid), rel=1e-9)
        assert fit.R2 == pytest.approx(1.0 - fit.rss / data.yty, rel=1e-12)
        assert 0.0 <= fit.R2 <= 1.0
        torch.testing.assert_close(
            fit.XtX_sub_inv @ data.XtX[fit.index][:, fit.index],
            torch.eye(gamma.size, dtype=torch.float64),
            rtol=1e-8,
            atol=1e-8,
        )
        assert fit.logdet == pytest.approx(
            float(torch.logdet(data.XtX[fit.index][:, fit.index])), rel=1e-10
        )

    @pytest.mark.parametrize("key", [1, 5, 100, 512, 1023])
    def test_sum_of_squares_decomposition(self, key):
        data = diabetes()
        gamma = ModelIndicator.from_key(key, data.p)
        fit = fit_model(data, gamma)
        fitted = data.X_centered[:, list(gamma.included)] @ fit.beta_hat
        assert fit.rss + float(fitted @ fitted) == pytest.approx(data.yty, rel=1e-10)

    @pytest.mark.parametrize("order", [range(10), [8, 2, 3, 0, 9, 5, 1, 7, 4, 6]])
    def test_r2_grows_along_nested_models(self, order):
        data = diabetes()
        included = []
        previous = fit_model(data, ModelIndicator.null(data.p)).R2
        for i in order:
            included.append(i)
            R2 = fit_model(data, ModelIndicator.from_indices(data.p, included)).R2
            assert R2 >= previous - 1e-12
            previous = R2
        assert previous <= 1.0

    def test_null_model(self):
        data = diabetes()
        fit = fit_model(data, ModelIndicator.null(data.p))
        assert fit.beta_hat.shape == (0,)
        assert fit.R2 == 0.0
        assert fit.rss == data.yty
        assert fit.logdet == 0.0

    @pytest.mark.filterwarnings("ignore")
    def test_rank_deficient(self):
        rows = [(x, 2.0 * x, y) for x, _, y in synthetic_rows(20, [1.0, 0.0])]
        data = load_data(rows, columns=["a", "b", "y"])
        with pytest.raises(RankDeficiencyError, match="rank deficient"):
            fit_model(data, ModelIndicator.full(2))
        fit = fit_model(data, ModelIndicator((True, False)))
        assert fit.beta_hat.shape == (1,)

    def test_wrong_length(self):
        data = diabetes()
        with pytest.raises(ValueError, match="has 3 indicators, expected 10"):
            fit_model(data, ModelIndicator.null(3))

    def test_cache(self):
        data = synthetic_data()
        cache = ModelCache(data)
        gamma = ModelIndicator((True, False))
        assert cache.fit(gamma) is cache.fit(gamma)
        assert cache[gamma.key] is cache.fit(gamma)

    def test_cache_bounded(self):
        data = diabetes()
        cache = ModelCache(data, max_size=3)
        first = cache[1]
        for key in (2, 1, 3, 4):
            cache[key]
        assert len(cache) == 3
        assert sorted(cache) == [1, 3, 4]
        assert cache[1] is first
        cache[5]
        assert sorted(cache) == [1, 4, 5]
        torch.testing.assert_close(cache[2].beta_hat, fit_model(data, ModelIndicator.from_key(2, 10)).beta_hat)

    def test_cache_sizes(self):
        data = diabetes()
        assert ModelCache(data).max_size == DEFAULT_CACHE_SIZE
        unbounded = ModelCache(data, max_size=None)
        for key in range(50):
            unbounded[key]
        assert len(unbounded) == 50
        with pytest.raises(ValueError, match="max_size must be a positive integer"):
            ModelCache(data, max_size=0)

    def test_intercept_posterior(self):
        data = synthetic_data(n=25)
        mean, sd = intercept_posterior(data, 4.0)
        assert mean == data.y_mean
        assert sd == pytest.approx(0.4)


if __name__ == "__main__":
    args, unknown = argparse.ArgumentParser().parse_known_args()
    pytest.main([__file__, "--capture", "no", "--exitfirst"] + unknown)
