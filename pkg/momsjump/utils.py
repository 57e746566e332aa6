# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from __future__ import annotations

import collections
import logging
import math
import time
from contextlib import contextmanager
from functools import wraps
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import torch
from torch import Tensor

logger = logging.getLogger(__name__)

DTYPE = torch.float64
LOG_2PI = math.log(2.0 * math.pi)

ARRAY_TYPING = Union[Tensor, np.ndarray, Sequence[float]]


def as_tensor(value: ARRAY_TYPING, dtype: torch.dtype = DTYPE) -> Tensor:
    """Converts a sequence, numpy array or tensor to a tensor of the package dtype.

    Tensors are returned as-is when they already have the right dtype.
    """
    if isinstance(value, Tensor):
        if value.dtype is dtype:
            return value
        return value.to(dtype)
    return torch.as_tensor(np.asarray(value), dtype=dtype)


def normal_logpdf(x: float, loc: float, scale: float) -> float:
    """Log-density of a univariate Normal(loc, scale**2) at x, on python floats."""
    z = (x - loc) / scale
    return -0.5 * z * z - math.log(scale) - 0.5 * LOG_2PI


@contextmanager
def seeded(seed: int) -> Iterator[None]:
    """Runs the enclosed code on a private, seeded copy of the CPU random stream.

    The global torch generator is restored on exit, so chains executed one after
    the other in the same process do not interfere with each other.

    Examples:
        >>> with seeded(0):
        ...     a = torch.randn(3)
        >>> with seeded(0):
        ...     b = torch.randn(3)
        >>> assert (a == b).all()

    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


class KeyDependentDefaultDict(collections.defaultdict):
    """A key-dependent default dict.

    With ``max_size`` set, the dict keeps at most that many entries and drops
    the least recently read one when a new key is computed.

    Examples:
        >>> squares = KeyDependentDefaultDict(lambda key: key * key)
        >>> print(squares[3])
        9
        >>> lru = KeyDependentDefaultDict(lambda key: key * key, max_size=2)
        >>> [lru[k] for k in (1, 2, 1, 3)]
        [1, 4, 1, 9]
        >>> sorted(lru)
        [1, 3]
    """

    def __init__(self, fun: Callable, max_size: Optional[int] = None):
        if max_size is not None and max_size < 1:
            raise ValueError(f"max_size must be a positive integer, got {max_size}.")
        self.fun = fun
        self.max_size = max_size
        super().__init__()

    def __getitem__(self, key):
        if self.max_size is None or key not in self:
            return super().__getitem__(key)
        # reinsert so that dict order is the read order
        value = self.pop(key)
        dict.__setitem__(self, key, value)
        return value

    def __missing__(self, key):
        value = self.fun(key)
        if self.max_size is not None:
            while len(self) >= self.max_size:
                del self[next(iter(self))]
        self[key] = value
        return value


class timeit:
    """A decorator and context manager timing code regions on a monotonic clock.

    Timings are accumulated per name in a class-level registry; the instance
    also exposes the duration of its last use as ``elapsed`` (seconds).

    Examples:
        >>> with timeit("sampling") as timer:
        ...     _ = sum(range(1000))
        >>> assert timer.elapsed >= 0.0
    """

    _REG: Dict[str, List[float]] = {}

    def __init__(self, name: str):
        self.name = name
        self.elapsed = 0.0

    def __call__(self, fn):
        @wraps(fn)
        def decorated_fn(*args, **kwargs):
            with self:
                out = fn(*args, **kwargs)
                return out

        return decorated_fn

    def __enter__(self) -> "timeit":
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        t = time.perf_counter() - self.t0
        self.elapsed = t
        val = self._REG.setdefault(self.name, [0.0, 0.0, 0])

        count = val[2]
        N = count + 1
        val[0] = val[0] * (count / N) + t / N
        val[1] += t
        val[2] = N

    @staticmethod
    def print(prefix: Optional[str] = None) -> None:
        for name in sorted(timeit._REG):
            strings = []
            if prefix:
                strings.append(prefix)
            mean, total, count = timeit._REG[name]
            strings.append(
                f"{name} took {mean * 1000:4.4} msec (total = {total:.3f} sec, calls = {int(count)})"
            )
            logger.info(" -- ".join(strings))

    @staticmethod
    def erase() -> None:
        for k in timeit._REG:
            timeit._REG[k] = [0.0, 0.0, 0]
