"""Exception hierarchy.

The CLI maps these onto exit codes: configuration and input problems exit
with 2, numerical failures with 3.
"""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class BinCollisionError(InvalidInputError):
    """Date binning would merge two samples of the same record."""

    def __init__(self, record_id, dates):
        self.record_id = record_id
        self.dates = tuple(dates)
        shown = ", ".join(f"{d:g}" for d in self.dates)
        super().__init__(
            f"binning collapses dates {shown} of record {record_id!r} into one bin"
        )


class ConfigurationError(ValueError):
    """Settings are inconsistent with each other or with the data."""


class NumericalError(ArithmeticError):
    """A factorization or density evaluation failed."""


class UnsupportedModeError(ValueError):
    """The operation is not defined for the configured model variant."""
