"""Exception types shared across the package (mapped to CLI exit codes)."""


class RegimeError(ValueError):
    """Parameters violate the admissible exponent chain."""


class SolverFailure(RuntimeError):
    """An iterative solver did not converge or left its admissible set."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class StructuralFailure(RuntimeError):
    """Computed geometry contradicts a proven structural property."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}
