"""Exception types raised across the package."""


class ParameterDomainError(ValueError):
    """A model parameter lies outside its admissible domain."""


class NumericalFailureError(ArithmeticError):
    """A propagator lost probability mass beyond round-off."""


class DegenerateDataError(ValueError):
    """Count data carries no information (e.g. all cells zero)."""


class ConfigurationError(ValueError):
    """Inputs are inconsistent with each other (missing fits, cells, timings)."""


class DataValidationError(ValueError):
    """One or more trial rows failed validation.

    ``problems`` holds ``(file, line, column, reason)`` tuples.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{f}:{ln}: column {col!r}: {reason}" for f, ln, col, reason in self.problems[:20]]
        if len(self.problems) > 20:
            lines.append(f"... and {len(self.problems) - 20} more")
        super().__init__("invalid trial data\n" + "\n".join(lines))
