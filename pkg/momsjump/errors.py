# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Exception hierarchy.

Errors derive from the builtin family they belong to so that callers catching
``ValueError`` / ``RuntimeError`` keep working. The CLI maps the three roots
:class:`ConfigError`, :class:`DataError` and :class:`NumericalError` to exit
codes 2, 3 and 4.
"""


class ConfigError(ValueError):
    """Invalid, unknown or out-of-range configuration value."""


class DataError(ValueError):
    """Input data could not be ingested (parse error, degenerate column...)."""


class InsufficientDataError(DataError):
    """Too few observations or draws for the requested computation."""


class EnumerationRefusedError(DataError):
    """The model space is too large to be enumerated."""


class NumericalError(RuntimeError):
    """Base class for numerical failures."""


class RankDeficiencyError(NumericalError):
    """A Gram submatrix is singular or too badly conditioned."""


class QuadratureError(NumericalError):
    """The Bayes factor integral did not reach the requested accuracy."""


class DegenerateProposalError(NumericalError):
    """The Forster proposal variance is not positive (collinear column)."""


class AnchorError(NumericalError):
    """The full-model anchor of the reversible-jump proposals is unavailable."""


class CorruptedStateError(NumericalError):
    """The log-posterior of a chain state is not finite."""


class InvalidRatioError(NumericalError):
    """A Metropolis-Hastings log-ratio evaluated to NaN."""


class InconsistentEnumerationError(NumericalError):
    """A set of model scores does not cover the model space exactly once."""


class AdaptationFrozenError(RuntimeError):
    """Proposal scales were updated after warmup ended."""
