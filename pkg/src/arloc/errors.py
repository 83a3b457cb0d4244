"""Domain-specific error types shared across the package."""


class DegenerateFingerprintError(ValueError):
    """Fingerprint has no signal above the RSS floor, so cosine similarity is undefined."""


class InsufficientMatchesError(ValueError):
    """Too few accepted keypoint matches to compute a distance ratio."""


class DegenerateGeometryError(ValueError):
    """All pairwise keypoint distances in the query image are below epsilon."""


class NoCandidateError(ValueError):
    """Ranked image list is empty; no reference point can be selected."""


class DatabaseFormatError(ValueError):
    """Database file violates the expected schema."""


class DatabaseVersionError(DatabaseFormatError):
    """Database file was written with an unsupported format version."""
