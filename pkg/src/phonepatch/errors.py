"""Exception types shared across the package."""


class PhonepatchError(Exception):
    """Base class for all package-specific errors."""


# -- segmentation / windowing -------------------------------------------------

class SegmentOutOfRange(PhonepatchError):
    pass


class WindowTooLong(PhonepatchError):
    pass


class ShapeMismatch(PhonepatchError):
    pass


# -- audio --------------------------------------------------------------------

class UnsupportedFormat(PhonepatchError):
    pass


class CorruptFile(PhonepatchError):
    pass


class RateMismatch(PhonepatchError):
    pass


class FadeOutOfRange(PhonepatchError):
    pass


# -- corpus -------------------------------------------------------------------

class MissingAlignment(PhonepatchError):
    pass


class UnknownPhoneme(PhonepatchError):
    def __init__(self, item_id: str, symbol: str):
        super().__init__(f"item {item_id!r}: phoneme {symbol!r} not in inventory")
        self.item_id = item_id
        self.symbol = symbol


class FrameCountMismatch(PhonepatchError):
    pass


class TooFewItems(PhonepatchError):
    pass


class PhonemeAbsent(PhonepatchError):
    pass


# -- models / training ----------------------------------------------------------

class InvalidConfig(PhonepatchError):
    pass


class EmptySegment(PhonepatchError):
    pass


class SamePhoneme(PhonepatchError):
    pass


class TooFewClasses(PhonepatchError):
    pass


class PhonemeTooRare(PhonepatchError):
    pass


class ModelMissing(PhonepatchError):
    pass


# -- correction pipeline --------------------------------------------------------

class UtteranceTooShort(PhonepatchError):
    pass


class InvalidPhoneme(PhonepatchError):
    pass


class BlendTooWide(PhonepatchError):
    pass


class ExternalVocoderFailed(PhonepatchError):
    pass


# -- baseline -------------------------------------------------------------------

class NoDonor(PhonepatchError):
    pass


class ZeroVectorWarning(UserWarning):
    """Cosine similarity was asked about a zero vector (degenerate ReLU collapse)."""
