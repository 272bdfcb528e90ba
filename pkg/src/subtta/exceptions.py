"""Exception hierarchy shared across the package."""


class SubttaError(Exception):
    """Base class for all package-specific errors."""


class InvalidMatrix(SubttaError):
    """Input matrix violates a structural precondition (non-finite, asymmetric)."""


class NoConvergence(SubttaError):
    """An iterative numerical routine failed to converge."""


class DimensionMismatch(SubttaError):
    """Operands have incompatible shapes."""


class DegenerateAnchors(SubttaError):
    """Anchor set contains zero (or near-zero) rows."""


class RankTooLarge(SubttaError):
    """Requested subspace rank exceeds the ambient dimension."""


class InvalidRotation(SubttaError):
    """Matrix expected to be orthogonal is not."""


class NumericalBlowup(SubttaError):
    """A gradient or loss came out non-finite; the caller should skip the step."""


class DegenerateEmbedding(SubttaError):
    """An embedding collapsed to (near) zero norm."""


class ConfigError(SubttaError):
    """Configuration values are inconsistent."""


class FormatError(SubttaError):
    """Embedding file has a bad magic number or malformed header."""


class TruncationError(FormatError):
    """Embedding file payload is shorter than the header declares."""


class UnsupportedDtype(FormatError):
    """Embedding file declares a dtype this reader does not handle."""


class DegenerateGapWarning(UserWarning):
    """Eigengap at the subspace cut is (near) zero; the basis is ill-conditioned."""


class NoSignalWarning(UserWarning):
    """Embedding projected to (near) zero; prediction falls back to uniform."""


class SingleClusterWarning(UserWarning):
    """All pseudo-labels in a batch agree; the cluster objective is inert."""
