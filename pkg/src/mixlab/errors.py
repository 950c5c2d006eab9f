"""Exception types shared across mixlab modules."""


class MixlabError(Exception):
    """Base class for all mixlab errors."""


class BoundaryPoint(MixlabError):
    """Evaluation requested exactly on a partition boundary."""


class InadmissibleItinerary(MixlabError):
    """Itinerary contains a transition forbidden by the transition matrix."""


class NoReturn(MixlabError):
    """The chosen base cell is not recurrent under the transition matrix."""


class InsufficientDepth(MixlabError):
    """Too few tail points enumerated for a statistics fit."""


class ProtectedOrbitHit(MixlabError):
    """A bump support intersects a protected orbit."""


class FiberEscape(MixlabError):
    """A fiber map sent a point outside the fiber ball (model bug)."""


class DepthOverflow(MixlabError):
    """Inverse-branch tree exceeded the node budget."""


class BinMisalignment(MixlabError):
    """Ulam bins do not refine the Markov partition."""


class NoConvergence(MixlabError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class WindowTooShort(MixlabError):
    """Not enough correlation points above the noise floor to fit a rate."""


class BracketUndefined(MixlabError):
    """Points do not lie in a common product chart; no bracket exists."""


class GeometryViolation(MixlabError):
    """A solenoid parameter set violates invariance or injectivity."""


class ConfigError(MixlabError):
    """Malformed experiment configuration."""
