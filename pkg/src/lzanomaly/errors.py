"""Exception hierarchy shared by every module."""


class LZAnomalyError(Exception):
    """Base class for all package errors."""


class InvalidAlphabetError(LZAnomalyError, ValueError):
    pass


class InvalidSymbolError(LZAnomalyError, ValueError):
    def __init__(self, position, symbol, alphabet_size, sequence_index=None):
        self.position = position
        self.symbol = symbol
        self.alphabet_size = alphabet_size
        self.sequence_index = sequence_index
        where = f"position {position}"
        if sequence_index is not None:
            where = f"sequence {sequence_index}, " + where
        super().__init__(
            f"symbol {symbol!r} at {where} is outside alphabet [0, {alphabet_size})"
        )


class EmptyInputError(LZAnomalyError, ValueError):
    pass


class EmptyTrainingError(LZAnomalyError, ValueError):
    pass


class TooShortError(LZAnomalyError, ValueError):
    pass


class InsufficientDataError(LZAnomalyError, ValueError):
    pass


class CorruptModelError(LZAnomalyError, ValueError):
    pass


class IncompatibleModelError(LZAnomalyError, ValueError):
    pass


class IncompatibleSupportError(LZAnomalyError, ValueError):
    pass


class InvalidTypeError(LZAnomalyError, ValueError):
    pass


class InvalidSpecError(LZAnomalyError, ValueError):
    pass


class SchemaError(LZAnomalyError, ValueError):
    pass


class RecordError(LZAnomalyError, ValueError):
    """A single input row failed to parse. ``row`` is 1-based, header excluded."""

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")
