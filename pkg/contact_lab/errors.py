"""
Exceptions raised by contact-lab. Failed numerical checks are reported as
values in a RunReport; these are for broken preconditions and for
computations that cannot produce a result at all.
"""

class ContactLabError(RuntimeError):
    pass

class DomainError(ContactLabError):
    """Point outside a declared domain, or a non-finite evaluation."""
    pass

class RankError(ContactLabError):
    """Jacobian or basis with rank below the declared dimension."""
    pass

class PreconditionError(ContactLabError):
    pass

class TableRangeError(ContactLabError):
    """G-calculus request outside the tabulated range."""
    pass

class QuadratureError(ContactLabError):
    pass

class ScheduleError(ContactLabError):
    """Mollification width or stage parameter budget exhausted."""
    pass

class FlowTruncated(ContactLabError):

    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = trajectory

class DisjunctionError(ContactLabError):

    def __init__(self, message, certificate):
        super().__init__(message)
        self.certificate = certificate

class ConfigError(ContactLabError):

    def __init__(self, message, schema=None):
        super().__init__(message)
        self.schema = schema
