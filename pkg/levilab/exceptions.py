"""
Custom exceptions for the application
"""


class LeviLabError(Exception):
    """Base class for every error raised by the toolkit"""
    pass


class ExprSyntaxError(LeviLabError):
    """Raised when DSL source does not parse"""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownIdentifierError(LeviLabError):
    """Raised when the DSL references a name that is neither a variable nor a function"""
    pass


class VariableIndexError(LeviLabError):
    """Raised when a variable index exceeds the declared ambient dimension"""
    pass


class DimensionMismatchError(LeviLabError):
    """Raised when points, matrices or mappings disagree on dimension"""
    pass


class ExprDomainError(LeviLabError):
    """Raised when evaluation leaves the domain of a node (log 0, division by 0, ...)"""

    def __init__(self, message, path=()):
        where = "/".join(path) if path else "<root>"
        super().__init__(f"{message} at {where}")
        self.path = tuple(path)


class NonSmoothError(LeviLabError):
    """Raised when differentiation meets a non-smooth node"""

    def __init__(self, message, path=()):
        where = "/".join(path) if path else "<root>"
        super().__init__(f"{message} at {where}")
        self.path = tuple(path)


class SingularPointError(LeviLabError):
    """Raised when a jet is requested on the guard set of a piecewise expression"""
    pass


class NonHermitianError(LeviLabError):
    """Raised when a matrix expected to be Hermitian is not"""
    pass


class VanishingGradientError(LeviLabError):
    """Raised when a defining function has (numerically) zero gradient"""
    pass


class NotOnBoundaryError(LeviLabError):
    """Raised when a point expected on (or strictly inside) a boundary is not"""
    pass


class UnboundedDirectionError(LeviLabError):
    """Raised when no boundary point is found along any sampled ray"""
    pass


class FamilyNotAdmissibleError(LeviLabError):
    """Raised when an analytic family violates its own invariants"""
    pass


class NotOnGraphError(LeviLabError):
    """Raised when a point does not lie on the graph"""
    pass


class NotTangentError(LeviLabError):
    """Raised when a vector is not in the holomorphic tangent space"""
    pass


class CertificateError(LeviLabError):
    """Raised when an operation needs a certified foliation and none is available"""
    pass


class ReprojectionError(LeviLabError):
    """Raised when Newton reprojection onto the graph diverges"""
    pass


class TangentDegeneracyError(LeviLabError):
    """Raised when the holomorphic tangent line field degenerates during tracing"""
    pass


class InvariantViolation(LeviLabError):
    """Raised when an internal mathematical invariant fails at runtime"""
    pass


class UnknownExampleError(LeviLabError):
    """Raised when a catalog name is not known"""
    pass


class ScenarioValidationError(LeviLabError):
    """Raised when a scenario file does not validate"""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class SamplingError(LeviLabError):
    """Raised when rejection sampling cannot produce enough points"""
    pass


class DomainInclusionError(LeviLabError):
    """Raised when a subdomain is not a proper subset of its ambient domain on samples"""
    pass
