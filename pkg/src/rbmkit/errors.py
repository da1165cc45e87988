"""Exception types raised by loaders, serialization and training."""


class DataFormatError(Exception):
    """Base for all malformed-input errors; no partial data escapes."""


class IdxMagicError(DataFormatError):
    """IDX file does not start with the expected magic number."""


class IdxTruncatedError(DataFormatError):
    """IDX file ends before the payload promised by its header."""


class IdxCountMismatchError(DataFormatError):
    """Image and label IDX files disagree on the sample count."""


class CsvFormatError(DataFormatError):
    """CSV row with the wrong column count or an unparsable field."""


class ModelFormatError(DataFormatError):
    """Model JSON failed version, schema or finiteness validation."""


class TrainingDivergedError(RuntimeError):
    """Parameters went non-finite during training."""
