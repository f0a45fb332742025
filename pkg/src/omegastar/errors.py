"""Exception hierarchy shared by every module."""


class OmegaStarError(Exception):
    """Base class; ``code`` is the machine-readable name used in CLI error JSON."""

    code = "Error"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details

    def to_json(self):
        out = {"error": self.code, "message": str(self)}
        out.update({k: _jsonable(v) for k, v in self.details.items()})
        return out


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return str(v)


class BadParams(OmegaStarError):
    code = "BadParams"


class EmptyResult(OmegaStarError):
    code = "EmptyResult"


class BudgetExhausted(OmegaStarError):
    code = "BudgetExhausted"


class SizeCap(OmegaStarError):
    code = "SizeCap"


class Incompatible(OmegaStarError):
    code = "Incompatible"


class NotNice(OmegaStarError):
    code = "NotNice"


class TooLarge(OmegaStarError):
    code = "TooLarge"


class NotChainTransitive(OmegaStarError):
    code = "NotChainTransitive"


class LadderNotRefining(OmegaStarError):
    code = "LadderNotRefining"


class OutOfDomain(OmegaStarError):
    code = "OutOfDomain"


class LengthMismatch(OmegaStarError):
    code = "LengthMismatch"


class NotFiniteToOne(OmegaStarError):
    code = "NotFiniteToOne"


class PrefixExhausted(OmegaStarError):
    code = "PrefixExhausted"

    def __init__(self, message="", witness=None, **details):
        super().__init__(message, **details)
        self.witness = witness


class OutOfRange(OmegaStarError):
    code = "OutOfRange"
