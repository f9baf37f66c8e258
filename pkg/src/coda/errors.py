"""Exception taxonomy shared across the pipeline.

ValidationError subclasses map to CLI exit code 2 (bad inputs or config);
everything else under CodaError maps to exit code 3 (runtime failure).
"""

from __future__ import annotations


class CodaError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(CodaError):
    """Input, format, or configuration rejected before any real work."""


# embedding-io
class MalformedHeader(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class MissingLabels(ValidationError):
    pass


class DuplicateSampleId(ValidationError):
    pass


class UnknownClass(ValidationError):
    pass


# preprocess
class DegenerateInput(CodaError):
    pass


class BadDim(ValidationError):
    pass


# density-clustering / kmeans
class TooFewPoints(CodaError):
    pass


class DuplicateSeeds(CodaError):
    pass


class TooFewCandidates(CodaError):
    pass


class Exhausted(CodaError):
    pass


# ipc-matching
class EmptyCluster(CodaError):
    pass


class InsufficientOutliers(CodaError):
    pass


class CannotReachIPC(CodaError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# diffusion-sandbox
class BadT(ValidationError):
    pass


class NumericalUnderflow(CodaError):
    pass


class DimMismatch(ValidationError):
    pass


# evaluation
class EmptyClass(CodaError):
    pass


class ZeroVector(CodaError):
    pass


class DegenerateCovariance(CodaError):
    pass


# cli / benchmark
class BadSpec(ValidationError):
    pass
