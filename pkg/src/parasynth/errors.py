"""Exception hierarchy shared by every stage of the toolkit."""


class ParasynthError(Exception):
    """Base class for all toolkit errors."""


class ArgumentError(ParasynthError, ValueError):
    """An argument violates an operation's precondition."""


class IngestionError(ParasynthError):
    """Input text could not be read as a corpus."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class AlignmentError(ParasynthError):
    """Line-aligned streams have different lengths."""

    def __init__(self, counts):
        self.counts = tuple(counts)
        super().__init__(
            "line counts differ: " + " vs ".join(str(c) for c in self.counts)
        )


class TrainingError(ParasynthError):
    """A model could not be trained from the given data."""


class TransportError(ParasynthError):
    """A remote service failed after all retries."""

    def __init__(self, message, retries=0, indices=None):
        super().__init__(message)
        self.retries = retries
        self.indices = list(indices) if indices is not None else []


class UnknownSpeakerError(ParasynthError, KeyError):
    def __init__(self, speaker, index):
        self.speaker = speaker
        self.index = index
        super().__init__(f"unknown speaker id {speaker!r} at pair {index}")

    def __str__(self):
        return self.args[0]


class StageFailure(ParasynthError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


class ManifestParseError(ParasynthError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")
