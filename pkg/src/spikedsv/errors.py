"""Exception hierarchy.  The CLI maps these onto its exit codes."""


class ModelError(ValueError):
    """A model, spec or configuration violates a structural requirement."""


class NumericalError(ArithmeticError):
    """A numerical routine could not deliver a result within its contract."""


class DegenerateSpectrumError(NumericalError):
    """Eigenvalues are repeated or vanish (outside the covered regime)."""
