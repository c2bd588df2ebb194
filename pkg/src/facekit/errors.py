"""Exception and warning types raised across facekit."""


class FaceKitError(Exception):
    """Base class for all facekit errors."""


# -- image core ---------------------------------------------------------------

class MalformedPgm(FaceKitError):
    def __init__(self, reason, offset=0):
        super().__init__(f"malformed PGM at byte {offset}: {reason}")
        self.reason = reason
        self.offset = offset


class ZeroDimension(FaceKitError, ValueError):
    pass


class OutOfBounds(FaceKitError, IndexError):
    pass


# -- cascades -----------------------------------------------------------------

class CascadeError(FaceKitError):
    """Anything that stops a cascade document from becoming a model."""


class XmlMalformed(CascadeError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnsupportedCascade(CascadeError):
    pass


class BoundsViolation(CascadeError):
    def __init__(self, feature_index, reason="rectangle escapes the detection window"):
        super().__init__(f"feature {feature_index}: {reason}")
        self.feature_index = feature_index


# -- detection ----------------------------------------------------------------

class ImageTooSmall(FaceKitError, ValueError):
    pass


# -- training -----------------------------------------------------------------

class DegenerateLabels(FaceKitError, ValueError):
    pass


class EmptyPositives(FaceKitError, ValueError):
    pass


class EmptyNegatives(FaceKitError, ValueError):
    pass


class TargetsUnreachable(UserWarning):
    """A stage hit max_weak_per_stage before reaching its false-positive target."""


class NegativePoolExhausted(UserWarning):
    """Bootstrapping found no false positives; the cascade stops early."""


# -- linear algebra -----------------------------------------------------------

class NotSymmetric(FaceKitError, ValueError):
    pass


class NoConvergence(FaceKitError, ArithmeticError):
    def __init__(self, sweeps):
        super().__init__(f"Jacobi iteration did not converge in {sweeps} sweeps")
        self.sweeps = sweeps


class RankDeficient(UserWarning):
    pass


# -- recognizers ----------------------------------------------------------------

class EqualSizeRequired(FaceKitError, ValueError):
    def __init__(self, expected_pixels, actual_pixels, method="Eigenfaces"):
        super().__init__(
            f"In the {method} method all input samples (training images) must be of "
            f"equal size! Expected {expected_pixels} pixels, but was {actual_pixels} pixels."
        )
        self.expected_pixels = expected_pixels
        self.actual_pixels = actual_pixels


class InsufficientSamples(FaceKitError, ValueError):
    pass


class SingleClass(FaceKitError, ValueError):
    pass


class EmptyTrainingSet(FaceKitError, ValueError):
    pass


class LengthMismatch(FaceKitError, ValueError):
    pass


class ModelFormatError(FaceKitError):
    pass


class FormatVersionMismatch(ModelFormatError):
    pass


class CorruptModel(ModelFormatError):
    def __init__(self, line, reason="unexpected content"):
        super().__init__(f"corrupt model file at line {line}: {reason}")
        self.line = line


# -- dataset ------------------------------------------------------------------

class MissingRoot(FaceKitError, FileNotFoundError):
    pass


class NoFacesAnywhere(FaceKitError):
    pass


class AnnotationParseError(FaceKitError, ValueError):
    def __init__(self, line, reason="expected '<path> <x> <y> <w> <h>'"):
        super().__init__(f"annotation line {line}: {reason}")
        self.line = line
