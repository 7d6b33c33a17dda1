"""Exception types shared across the package."""


class CapExceeded(Exception):
    """A requested enumeration or memory budget was exceeded."""


class NumericsError(Exception):
    """A runtime numerical assertion (mass balance, maximum principle, ...) failed."""
