"""Exception types shared across the package."""


class ContactHJError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(ContactHJError, ValueError):
    """Malformed expression source.

    Carries the 1-based ``line``/``column`` of the offending token and the set
    of tokens the parser would have accepted there.
    """

    def __init__(self, message, line=1, column=1, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(sorted(expected))
        detail = f"{message} at line {line}, column {column}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class UnknownIdentifier(ContactHJError, KeyError):
    def __init__(self, name, line=1, column=1):
        self.name = name
        self.line = line
        self.column = column
        super().__init__(name)

    def __str__(self):
        return f"unknown identifier {self.name!r} at line {self.line}, column {self.column}"


class EvaluationError(ContactHJError, ArithmeticError):
    """A field was evaluated at a pole or outside its domain."""


class ChartError(ContactHJError, ValueError):
    """A point lies outside the chart of a coordinate map."""


class AssumptionError(ContactHJError, ValueError):
    """Hypotheses of a construction do not hold on the sample grid."""


class IntegrabilityError(ContactHJError, ValueError):
    """The lift PDE fails its integrability condition on the sample grid."""
