"""Exception hierarchy shared by all lipset modules."""


class LipsetError(Exception):
    pass


class NotOnManifold(LipsetError):
    pass


class NoChart(LipsetError):
    """Raised when a manifold point is not covered by any chart (atlas bug)."""


class DegenerateSample(LipsetError):
    pass


class PreconditionViolated(LipsetError):
    pass


class CQViolated(LipsetError):
    """No column selection of the partial Jacobian is invertible."""


class Diverged(LipsetError):
    pass


class OutOfDomain(LipsetError):
    pass


class EmptyFeasibleSet(LipsetError):
    pass


class InadmissibleSample(LipsetError):
    pass


class ConstraintDrift(LipsetError):
    pass
