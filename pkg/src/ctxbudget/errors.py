"""Exception hierarchy shared across the package."""


class CtxBudgetError(Exception):
    """Base class for all errors raised by this package."""


class EmptyDocumentError(CtxBudgetError):
    """Document text is empty or whitespace-only."""


class FeatureMismatchError(CtxBudgetError):
    """Feature arrays are not sized to the unit list they describe."""


class DegenerateFeaturesError(CtxBudgetError):
    """Embeddings collapse to a zero vector where a direction is required."""


class NonSquareKernelError(CtxBudgetError):
    """Kernel conditioning was given a non-square matrix."""


class NumericalBreakdownError(CtxBudgetError):
    """Incremental factorization hit a non-positive pivot.

    Signals that the kernel was not conditioned (not PSD) or is so
    ill-scaled that the log-det update cannot proceed.
    """


class CorpusFormatError(CtxBudgetError):
    """Corpus file failed to parse; message carries the offending line number(s)."""


class IncompleteSweepError(CtxBudgetError):
    """A sweep is missing (budget, method) cells required by the caller."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        cells = ", ".join(f"(budget={b}, method={m})" for b, m in self.missing)
        super().__init__(f"sweep is missing required cells: {cells}")


class UnknownMetricError(CtxBudgetError):
    """Requested metric key is not a column of the report."""


class EmbeddingServiceError(CtxBudgetError):
    """Transport or protocol failure talking to an external embedding service."""


class EmbeddingDimensionError(CtxBudgetError):
    """External embedding service returned vectors of the wrong dimension."""


class GenerationServiceError(CtxBudgetError):
    """Transport or protocol failure talking to a generation service."""


class ConfigError(CtxBudgetError):
    """Invalid run configuration; message names the offending field."""
