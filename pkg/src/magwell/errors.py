"""Exception hierarchy.

Every failure that maps to a CLI exit code derives from one of the four
top-level families below; the CLI reads ``exit_code`` off the class.
"""


class MagwellError(Exception):
    exit_code = 1


class InputError(MagwellError):
    """Malformed field file, configuration or argument."""

    exit_code = 2


class FieldParseError(InputError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class DegreeOverflowError(InputError):
    pass


class AssumptionViolation(MagwellError):
    """One of the magnetic-well hypotheses fails for the given field."""

    exit_code = 3


class ZeroFieldViolation(AssumptionViolation):
    pass


class NonDegenerateWellViolation(AssumptionViolation):
    pass


class NonUniqueMinimum(AssumptionViolation):
    pass


class WellOutsideDomain(AssumptionViolation):
    pass


class ConstructionError(MagwellError):
    """Internal consistency failure while assembling operators or correctors."""

    exit_code = 1


class NotSecondOrder(ConstructionError):
    pass


class SolvabilityViolation(ConstructionError):
    pass


class ConvergenceError(MagwellError):
    exit_code = 4

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class ResolutionError(MagwellError):
    exit_code = 5

    def __init__(self, message, required_spacing=None):
        self.required_spacing = required_spacing
        super().__init__(message)


class InconclusiveResolution(ResolutionError):
    pass


class BoundaryError(ResolutionError):
    pass
