"""Repository error classes."""


class RepositoryError(Exception):
    """Repository operation error."""
    pass


class SnapshotFormatError(RepositoryError):
    """Raised when a snapshot or lift file does not match its binary layout."""
    pass


class RunNotFoundError(RepositoryError):
    """Raised when a run directory does not exist."""
    pass
