"""Exception hierarchy shared by all foilforge modules."""


class FoilforgeError(Exception):
    """Base class for every error raised by this package."""


# --- geometry ---------------------------------------------------------------

class MalformedLine(FoilforgeError):
    def __init__(self, lineno: int, content: str):
        super().__init__(f"line {lineno}: cannot parse {content!r}")
        self.lineno = lineno
        self.content = content


class TooFewPoints(FoilforgeError):
    pass


class NonFiniteValue(FoilforgeError):
    pass


class DegenerateChord(FoilforgeError):
    pass


class SelfIntersecting(FoilforgeError):
    pass


class NonMonotonicSurface(FoilforgeError):
    pass


class InvalidAirfoil(FoilforgeError):
    pass


# --- panelflow --------------------------------------------------------------

class SingularSystem(FoilforgeError):
    pass


class NonFiniteResult(FoilforgeError):
    pass


class PoleProximity(FoilforgeError):
    pass


# --- dataset ----------------------------------------------------------------

class EmptyCorpus(FoilforgeError):
    pass


class AllSamplesFailed(FoilforgeError):
    pass


class InsufficientPoints(FoilforgeError):
    pass


class TooFewSamples(FoilforgeError):
    pass


# --- binary container formats ------------------------------------------------

class BadMagic(FoilforgeError):
    pass


class VersionMismatch(FoilforgeError):
    pass


class TruncatedFile(FoilforgeError):
    pass


class ChecksumMismatch(FoilforgeError):
    pass


class SpecMismatch(FoilforgeError):
    pass


# --- neuralcore / models ----------------------------------------------------

class ShapeMismatch(FoilforgeError):
    pass


class NumericalDivergence(FoilforgeError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class CaseMismatch(FoilforgeError):
    pass


class EmptyTrainSplit(FoilforgeError):
    pass


# --- evaluation ---------------------------------------------------------------

class ConstantTruth(FoilforgeError):
    pass


class EmptyTestSplit(FoilforgeError):
    pass
