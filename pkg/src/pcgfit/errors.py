"""Exception hierarchy shared across the package.

Two broad families matter for the CLI exit-code mapping: ``InputError``
(bad files, configs, or flag combinations; exit code 2) and ``StatError``
(the data cannot support the requested statistical procedure; exit code 3).
Anything else escaping to the CLI is an internal error (exit code 4).
"""

from __future__ import annotations


class PcgfitError(Exception):
    """Base class for all package errors."""


class InputError(PcgfitError):
    """Malformed user input: files, configuration, flag combinations."""


class ParseError(InputError):
    """A data file could not be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class ConfigError(InputError):
    """A scenario or run configuration violates the schema."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(prefix + message)


class IndexOutOfRange(InputError):
    """An item or triad index lies outside 1..K."""


class StatError(PcgfitError):
    """The requested statistical procedure cannot run on the given data."""


class DisconnectedGraph(StatError):
    """The comparison graph has more than one connected component."""

    def __init__(self, components: tuple[tuple[int, ...], ...]):
        self.components = components
        super().__init__(
            f"comparison graph has {len(components)} components: "
            + "; ".join("{" + ",".join(map(str, c)) + "}" for c in components)
        )


class DisconnectedSubgraph(StatError):
    """An induced block of the graph is disconnected."""


class EmptyRegime(StatError):
    """The resolved edge subset for a regime is empty."""


class EmptyBlock(StatError):
    """An item block contains no comparisons at all."""


class EmptyCandidateSet(StatError):
    """No candidate items were identified or supplied."""


class SigmaUnidentifiable(StatError):
    """No replicated edge exists and no error variance was supplied."""


class NotComplete(StatError):
    """The statistic requires a complete comparison graph."""


class UnequalCounts(StatError):
    """The statistic requires a constant number of comparisons per pair."""


class MTooSmall(StatError):
    """The per-pair sample size is too small for the estimator."""


class SplitInvalid(StatError):
    """The candidate subset is empty, not proper, or out of range."""


class DeltaNotCyclic(StatError):
    """The supplied shift has a non-negligible linear component."""


class RankDeficientDesign(StatError):
    """The regression design matrix is rank deficient."""


class NoResidualDf(StatError):
    """No residual degrees of freedom remain for the F reference."""


class RetriesExhausted(StatError):
    """A random scheme failed its validity check too many times."""


class NotSymmetric(StatError):
    """A matrix expected to be symmetric is not."""


class NotPSD(StatError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""
