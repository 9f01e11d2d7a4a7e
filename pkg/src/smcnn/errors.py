"""Exception hierarchy shared by the on-disk formats and the training loop."""


class SmcnnError(Exception):
    pass


class ConfigError(SmcnnError):
    """Unknown key, bad value or missing section in a run configuration."""


class FormatError(SmcnnError):
    """A file does not follow the expected binary layout."""


class MagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class DegenerateDataError(SmcnnError):
    """Input is well formed but unusable, e.g. only one class present."""


class TrainingDivergedError(SmcnnError):
    pass


class BenchmarkError(SmcnnError):
    pass
