"""Exception types raised across the toolkit."""


class TabFormulaError(Exception):
    """Base class for all toolkit errors."""


class AddressParseError(TabFormulaError, ValueError):
    pass


class NotANumber(TabFormulaError, ValueError):
    pass


class NotADataCell(TabFormulaError, ValueError):
    pass


class TableError(TabFormulaError, ValueError):
    """Inconsistent table construction (bad grid, bad header spans)."""


class ParseError(TabFormulaError, ValueError):
    """Formula grammar violation; ``span`` holds byte offsets into the input."""

    def __init__(self, message, span=None):
        super().__init__(message if span is None else f"{message} at bytes {span[0]}:{span[1]}")
        self.span = span


class DanglingReference(TabFormulaError):
    pass


class MissingHeader(TabFormulaError):
    pass


class UnreachableReference(TabFormulaError):
    pass


class TextTooLong(TabFormulaError):
    pass


class GoldParseError(TabFormulaError):
    pass


class EmptyEvalSet(TabFormulaError, ValueError):
    pass


class SchemaError(TabFormulaError):
    """Input document does not match the table file schema."""

    def __init__(self, message, source=None, pointer=""):
        where = f"{source}:{pointer}" if source and pointer else (source or pointer)
        super().__init__(f"{where}: {message}" if where else message)
        self.source = source
        self.pointer = pointer
