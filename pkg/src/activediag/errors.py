"""Exception hierarchy shared by all modules."""


class DiagnosisError(Exception):
    """Base class for every error raised by this package."""


class ModelError(DiagnosisError, ValueError):
    """A model, circuit, fault spec or config file violates its invariants."""


class UnknownIdentifierError(DiagnosisError, KeyError):
    """An identifier does not name a state, mode, action or outcome of the model."""

    def __init__(self, kind, ident):
        super().__init__(f"unknown {kind} {ident!r}")
        self.kind = kind
        self.ident = ident

    def __str__(self):
        return self.args[0]


class ContradictionError(DiagnosisError):
    """An observation leaves no supported (state, mode) pair.

    Carries the offending action and outcome so an interactive caller can
    reject the entry and keep its previous belief.
    """

    def __init__(self, action, outcome):
        super().__init__(
            f"observation ({action!r}, {outcome!r}) contradicts every supported state/mode pair"
        )
        self.action = action
        self.outcome = outcome


class ExhaustedError(DiagnosisError):
    """No untaken action is left to choose from."""


class SizeCapError(DiagnosisError):
    """An enumeration would exceed its configured size cap."""
