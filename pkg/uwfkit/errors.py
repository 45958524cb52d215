"""Exception hierarchy shared by every uwfkit module."""

from __future__ import annotations


class UwfkitError(Exception):
    """Base class. Batch code turns these into per-record rejections."""

    reason = "error"

    def __str__(self) -> str:
        msg = super().__str__()
        return msg or self.reason


# ── raster ──────────────────────────────────────────────────────

class UnsupportedFormat(UwfkitError):
    reason = "unsupported format"


class CorruptFile(UwfkitError):
    reason = "corrupt file"


class ImageIoError(UwfkitError):
    reason = "io error"


# ── vesselness ─────────────────────────────────────────────────

class EmptyScaleList(UwfkitError):
    reason = "empty scale list"


class DegenerateHistogram(UwfkitError):
    reason = "degenerate histogram"


# ── features / metrics ──────────────────────────────────────────

class ImageTooSmall(UwfkitError):
    reason = "image too small"


class DimensionMismatch(UwfkitError):
    reason = "dimension mismatch"


class PatchSizeInvalid(UwfkitError):
    reason = "patch size invalid"


# ── geometry ───────────────────────────────────────────────────

class DegenerateConfiguration(UwfkitError):
    reason = "degenerate configuration"


class TooFewMatches(UwfkitError):
    reason = "too few matches"


class NoConsensus(UwfkitError):
    reason = "no consensus"


class SingularUpperBlock(UwfkitError):
    reason = "singular upper block"


class SingularHomography(UwfkitError):
    reason = "singular homography"


# ── pipeline ───────────────────────────────────────────────────

class NegativeElapsed(UwfkitError):
    reason = "negative elapsed time"


class EmptyRecordList(UwfkitError):
    reason = "empty record list"


class EmptyInput(UwfkitError):
    reason = "empty input"


class MetricOutOfRange(UwfkitError):
    reason = "metric out of range"


class ManifestError(UwfkitError):
    reason = "invalid manifest"
