"""Exception taxonomy for the whole library.

Every error raised on a contract violation derives from FrontgeomError so
callers (and the CLI) can map failures to exit codes uniformly.
"""


class FrontgeomError(Exception):
    """Base class for all library errors."""


# --- jet / expression layer -------------------------------------------------

class DomainError(FrontgeomError):
    """Evaluation at a point where a sub-expression is not analytic."""


class OrderExceeded(FrontgeomError):
    """A derivative of higher order than the jet carries was requested."""


class OrderMismatch(FrontgeomError):
    """Jets with incompatible truncation orders or base points combined."""


class ParseError(FrontgeomError):
    """Bad expression or scene text; carries line/column when known."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


# --- atlas / quadrature -----------------------------------------------------

class NoConvergence(FrontgeomError):
    """Adaptive quadrature failed to meet its tolerance; carries last values."""

    def __init__(self, message, last=None, previous=None):
        self.last = last
        self.previous = previous
        super().__init__(message)


# --- bundle -----------------------------------------------------------------

class DegenerateFrame(FrontgeomError):
    """Frame of E not linearly independent where orthonormalization was asked."""


class SingularPointError(FrontgeomError):
    """Operation undefined on the singular set was evaluated there."""


class NotArclength(FrontgeomError):
    """Curve parameter is not ds^2-arclength where the contract requires it."""


# --- singular set -----------------------------------------------------------

class DegeneratePoint(FrontgeomError):
    """Zero of lambda with vanishing gradient; carries the location."""

    def __init__(self, message, chart=None, point=None):
        self.chart = chart
        self.point = point
        super().__init__(message)


class OpenCurve(FrontgeomError):
    """Singular-curve stitching failed to close a component (internal error)."""


class RankZero(FrontgeomError):
    """phi has rank 0 where a 1-dimensional kernel was required."""


class HigherDegeneracy(FrontgeomError):
    """Singular point is neither A2 nor A3 at the working tolerances."""


class InconclusiveSign(FrontgeomError):
    """A3 sign test exponent gap too small to call; carries both exponents."""

    def __init__(self, message, k_minus=None, k_plus=None):
        self.k_minus = k_minus
        self.k_plus = k_plus
        super().__init__(message)


class AtA3Point(FrontgeomError):
    """Singular curvature requested at (or too close to) an A3 point."""


class TailFitFailure(FrontgeomError):
    """Power-law tail fit near an A3 point did not produce an integrable law."""


# --- topology ---------------------------------------------------------------

class GluingError(FrontgeomError):
    """Cell complex failed to close up into the expected surface."""


class NoStabilization(FrontgeomError):
    """Region counts kept changing after the allowed number of refinements."""


# --- surfaces / blaschke ----------------------------------------------------

class ImmersionFailure(FrontgeomError):
    """|f_u x f_v| vanished somewhere on the sampled surface."""


class NotConvex(FrontgeomError):
    """det L <= 0 somewhere: input surface is not strictly convex."""


class LinearSolveFailure(FrontgeomError):
    """A pointwise linear system (frame decomposition) was singular."""


class FrontConditionViolated(FrontgeomError):
    """Legendrian-immersion check fell below tolerance."""


class CriteriaMismatch(FrontgeomError):
    """psi-based and d(lambda)(eta)-based singularity classifiers disagree."""


# --- verification -----------------------------------------------------------

class TriangleTouchesSigma(FrontgeomError):
    """Triangle domain for the local Gauss-Bonnet check meets the singular set."""


class UnclassifiedSingularity(FrontgeomError):
    """A global identity was requested before every singular point was classified."""


class SceneError(FrontgeomError):
    """Scene file invalid; carries the full list of collected errors."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(str(p) for p in self.problems))
