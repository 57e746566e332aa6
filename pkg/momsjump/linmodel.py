# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Sequence, Tuple, Union
from warnings import warn

import numpy as np
import pandas as pd
import torch
from torch import Tensor

from momsjump.errors import DataError, InsufficientDataError, RankDeficiencyError
from momsjump.utils import DTYPE, KeyDependentDefaultDict

logger = logging.getLogger(__name__)

DEFAULT_COND_CAP = 1e12
DEFAULT_CACHE_SIZE = 4096
DIABETES_PATH = os.path.join(os.path.dirname(__file__), "data", "diabetes.csv")

ROWS_TYPING = Union[str, "os.PathLike[str]", pd.DataFrame, Sequence[Any]]


@dataclass(frozen=True, order=True)
class ModelIndicator:
    """Inclusion indicator vector of a linear regression model.

    ``bits[i]`` tells whether predictor ``i`` enters the model. Indicators are
    hashable and totally ordered (lexicographically on ``bits``, ``False <
    True``), which is the canonical enumeration order. The integer ``key``
    preserves that order and is used to index per-model caches.

    Examples:
        >>> gamma = ModelIndicator((False, True, True))
        >>> gamma.size, gamma.included, gamma.key
        (2, (1, 2), 3)
        >>> gamma.flip(0)
        ModelIndicator(110)
        >>> ModelIndicator.from_key(3, 3) == gamma
        True

    """

    bits: Tuple[bool, ...]
    _key: int = field(init=False, repr=False, compare=False)
    _included: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bits = tuple(bool(b) for b in self.bits)
        object.__setattr__(self, "bits", bits)
        key = 0
        for b in bits:
            key = (key << 1) | int(b)
        object.__setattr__(self, "_key", key)
        object.__setattr__(
            self, "_included", tuple(i for i, b in enumerate(bits) if b)
        )

    @classmethod
    def null(cls, p: int) -> ModelIndicator:
        return cls((False,) * p)

    @classmethod
    def full(cls, p: int) -> ModelIndicator:
        return cls((True,) * p)

    @classmethod
    def from_key(cls, key: int, p: int) -> ModelIndicator:
        if key < 0 or key >= (1 << p):
            raise ValueError(f"key {key} is out of range for p={p} predictors.")
        return cls(tuple(bool((key >> (p - 1 - i)) & 1) for i in range(p)))

    @classmethod
    def from_indices(cls, p: int, indices: Sequence[int]) -> ModelIndicator:
        bits = [False] * p
        for i in indices:
            bits[i] = True
        return cls(tuple(bits))

    @classmethod
    def from_tensor(cls, tensor: Tensor) -> ModelIndicator:
        return cls(tuple(bool(b) for b in tensor.tolist()))

    @staticmethod
    def all_models(p: int) -> Iterator[ModelIndicator]:
        """Iterates over the 2**p models in canonical order."""
        for key in range(1 << p):
            yield ModelIndicator.from_key(key, p)

    @property
    def p(self) -> int:
        return len(self.bits)

    @property
    def size(self) -> int:
        return len(self._included)

    @property
    def key(self) -> int:
        return self._key

    @property
    def included(self) -> Tuple[int, ...]:
        return self._included

    def flip(self, index: int) -> ModelIndicator:
        bits = list(self.bits)
        bits[index] = not bits[index]
        return ModelIndicator(tuple(bits))

    def to_tensor(self) -> Tensor:
        return torch.tensor(self.bits, dtype=torch.bool)

    def names(self, column_names: Sequence[str]) -> Tuple[str, ...]:
        return tuple(column_names[i] for i in self._included)

    def __getitem__(self, index: int) -> bool:
        return self.bits[index]

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self})"


@dataclass(frozen=True)
class RegressionData:
    """Centered regression data with cached cross-products.

    The intercept is integrated out analytically: with both the response and
    the predictors mean-centered, the intercept decouples from the slopes and
    its posterior given ``sigma2`` is ``Normal(y_mean, sigma2 / n)``.

    Instances are built by :func:`load_data` and are read-only afterwards.
    """

    n: int
    p: int
    y_centered: Tensor
    X_centered: Tensor
    XtX: Tensor
    Xty: Tensor
    yty: float
    y_mean: float
    column_names: Tuple[str, ...]
    response_name: str
    x_means: Tensor
    full_rank: bool = True

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise KeyError(
                f"predictor '{name}' not found, available predictors are {list(self.column_names)}"
            )


@dataclass(frozen=True)
class ModelFit:
    """Least-squares quantities of one model.

    ``chol`` is the lower Cholesky factor of the included-column Gram matrix and
    ``logdet`` its log-determinant; both are reused by the samplers.
    """

    gamma: ModelIndicator
    beta_hat: Tensor
    R2: float
    XtX_sub_inv: Tensor
    rss: float
    chol: Tensor
    logdet: float
    index: Tensor


def _as_frame(rows: ROWS_TYPING, columns: Optional[Sequence[str]]) -> pd.DataFrame:
    if isinstance(rows, pd.DataFrame):
        return rows.copy()
    if isinstance(rows, (str, os.PathLike)):
        if str(rows) == "diabetes" and not os.path.exists(rows):
            rows = DIABETES_PATH
        try:
            return pd.read_csv(rows, dtype=str, skipinitialspace=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
            raise DataError(f"could not parse {rows}: {err}") from err
        except OSError as err:
            raise DataError(f"could not read {rows}: {err}") from err
    rows = list(rows)
    if len(rows) and isinstance(rows[0], dict):
        return pd.DataFrame.from_records(rows)
    if columns is None and len(rows):
        columns = [f"x{i}" for i in range(len(rows[0]))]
    try:
        return pd.DataFrame(rows, columns=columns)
    except ValueError as err:
        raise DataError(f"ragged records: {err}") from err


def _to_numeric(frame: pd.DataFrame) -> pd.DataFrame:
    out = {}
    for j, column in enumerate(frame.columns):
        raw = frame[column]
        values = pd.to_numeric(raw, errors="coerce")
        bad = values.isna()
        if bad.any():
            r = int(np.flatnonzero(bad.to_numpy())[0])
            cell = raw.iloc[r]
            what = "missing value" if pd.isna(cell) else f"non-numeric value {cell!r}"
            raise DataError(
                f"row {r + 1}, column '{column}' (index {j}): {what}. "
                "Only complete numeric tables are supported."
            )
        out[column] = values.astype(np.float64)
    return pd.DataFrame(out)


def load_data(
    rows: ROWS_TYPING,
    response_column: Optional[Union[str, int]] = None,
    columns: Optional[Sequence[str]] = None,
) -> RegressionData:
    """Loads a numeric table and centers it.

    Args:
        rows (path, DataFrame or sequence of records): a CSV file with a header
            row, a :class:`pandas.DataFrame`, a sequence of dicts or a sequence
            of tuples (see ``columns``). The string ``"diabetes"`` selects the
            bundled diabetes data unless a file of that name exists.
        response_column (str or int, optional): name or position of the
            response. Defaults to the last column. Every other column is a
            predictor.
        columns (sequence of str, optional): column names for tuple records.
            Defaults to ``x0, x1, ...``.

    Returns:
        a :class:`RegressionData` instance.

    Examples:
        >>> data = load_data([(1, 2), (2, 4), (3, 6)], response_column=1)
        >>> data.y_centered
        tensor([-2.,  0.,  2.], dtype=torch.float64)
        >>> data.X_centered[:, 0]
        tensor([-1.,  0.,  1.], dtype=torch.float64)

    """
    frame = _as_frame(rows, columns)
    frame.columns = [str(c).strip() for c in frame.columns]
    if frame.shape[1] < 1:
        raise DataError("the table has no column.")
    if response_column is None:
        response_name = frame.columns[-1]
    elif isinstance(response_column, int):
        if not -frame.shape[1] <= response_column < frame.shape[1]:
            raise DataError(
                f"response column index {response_column} is out of range for a table with {frame.shape[1]} columns."
            )
        response_name = frame.columns[response_column]
    else:
        response_name = str(response_column)
        if response_name not in frame.columns:
            raise DataError(
                f"response column '{response_name}' not found, available columns are {list(frame.columns)}."
            )
    if frame.shape[0] < 2:
        raise InsufficientDataError(
            f"at least 2 rows are required, got {frame.shape[0]}."
        )
    frame = _to_numeric(frame)

    names = tuple(c for c in frame.columns if c != response_name)
    y = torch.as_tensor(frame[response_name].to_numpy(), dtype=DTYPE)
    X = torch.as_tensor(frame[list(names)].to_numpy(), dtype=DTYPE).reshape(
        y.shape[0], len(names)
    )
    n, p = X.shape
    for j, name in enumerate(names):
        if bool((X[:, j] == X[0, j]).all()):
            raise DataError(
                f"predictor '{name}' is constant and cannot be separated from the intercept."
            )
    y_mean = y.mean()
    y_centered = y - y_mean
    yty = float(y_centered @ y_centered)
    if yty <= 0.0:
        raise DataError(f"response '{response_name}' is constant.")
    x_means = X.mean(0)
    X_centered = X - x_means
    XtX = X_centered.T @ X_centered
    XtX = 0.5 * (XtX + XtX.T)
    Xty = X_centered.T @ y_centered

    full_rank = True
    if n <= p + 1:
        full_rank = False
        warn(
            f"n={n} observations for p={p} predictors: the full model is under-determined, "
            "reversible-jump (Forster) proposals are unavailable."
        )
    elif p:
        full_rank = bool(torch.linalg.cholesky_ex(XtX).info == 0)
        if not full_rank:
            warn("the full-model Gram matrix is not positive definite.")
    logger.info(
        "loaded %d observations, %d predictors, response '%s'", n, p, response_name
    )
    return RegressionData(
        n=n,
        p=p,
        y_centered=y_centered,
        X_centered=X_centered,
        XtX=XtX,
        Xty=Xty,
        yty=yty,
        y_mean=float(y_mean),
        column_names=names,
        response_name=response_name,
        x_means=x_means,
        full_rank=full_rank,
    )


def fit_model(
    data: RegressionData, gamma: ModelIndicator, cond_cap: float = DEFAULT_COND_CAP
) -> ModelFit:
    """Fits a model by least squares on its included columns.

    The Gram submatrix is factorized by Cholesky; its condition number must stay
    below ``cond_cap``.

    Args:
        data (RegressionData): the data.
        gamma (ModelIndicator): the model.
        cond_cap (float, optional): condition number above which the submatrix
            is considered singular. Defaults to 1e12.

    Returns:
        a :class:`ModelFit`. The null model has an empty ``beta_hat``, ``R2 = 0``
        and ``rss = yty``.

    """
    if len(gamma) != data.p:
        raise ValueError(
            f"model {gamma} has {len(gamma)} indicators, expected {data.p}."
        )
    index = torch.tensor(gamma.included, dtype=torch.long)
    k = gamma.size
    if k == 0:
        empty = data.XtX.new_zeros(0)
        square = data.XtX.new_zeros(0, 0)
        return ModelFit(
            gamma=gamma,
            beta_hat=empty,
            R2=0.0,
            XtX_sub_inv=square,
            rss=data.yty,
            chol=square,
            logdet=0.0,
            index=index,
        )
    A = data.XtX[index][:, index]
    b = data.Xty[index]
    eigvals = torch.linalg.eigvalsh(A)
    lo, hi = float(eigvals[0]), float(eigvals[-1])
    cond = hi / lo if lo > 0 else float("inf")
    if not cond < cond_cap:
        raise RankDeficiencyError(
            f"model {gamma} {list(gamma.names(data.column_names))} is rank deficient: "
            f"condition number {cond:.3e} exceeds the cap {cond_cap:.1e}."
        )
    L, info = torch.linalg.cholesky_ex(A)
    if info != 0:
        raise RankDeficiencyError(
            f"model {gamma} {list(gamma.names(data.column_names))}: Cholesky factorization failed."
        )
    beta_hat = torch.cholesky_solve(b.unsqueeze(-1), L).squeeze(-1)
    explained = float(b @ beta_hat)
    return ModelFit(
        gamma=gamma,
        beta_hat=beta_hat,
        R2=explained / data.yty,
        XtX_sub_inv=torch.cholesky_inverse(L),
        rss=data.yty - explained,
        chol=L,
        logdet=2.0 * float(L.diagonal().log().sum()),
        index=index,
    )


def intercept_posterior(data: RegressionData, sigma2: float) -> Tuple[float, float]:
    """Mean and standard deviation of the intercept given the error variance."""
    return data.y_mean, (sigma2 / data.n) ** 0.5


class ModelCache(KeyDependentDefaultDict):
    """Lazily filled ``model key -> ModelFit`` memo of one chain.

    At most ``max_size`` fits are kept, least recently used first out, so
    long chains over large model spaces run in bounded memory. ``None``
    keeps every fit.

    Examples:
        >>> data = load_data("diabetes")
        >>> cache = ModelCache(data)
        >>> fit = cache[ModelIndicator.full(data.p).key]

    """

    def __init__(
        self,
        data: RegressionData,
        cond_cap: float = DEFAULT_COND_CAP,
        max_size: Optional[int] = DEFAULT_CACHE_SIZE,
    ):
        self.data = data
        self.cond_cap = cond_cap
        super().__init__(self._fit, max_size)

    def _fit(self, key: int) -> ModelFit:
        return fit_model(
            self.data, ModelIndicator.from_key(key, self.data.p), self.cond_cap
        )

    def fit(self, gamma: ModelIndicator) -> ModelFit:
        return self[gamma.key]
