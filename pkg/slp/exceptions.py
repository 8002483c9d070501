USAGE = 1
DATA = 2
NUMERIC = 3


class SLPError(Exception):
    """
    Base for every error this package raises on purpose. ``exit_code`` is the
    status a command exits with when the error escapes it.
    """
    exit_code = NUMERIC


class ConfigError(SLPError):
    exit_code = USAGE


class DimensionError(SLPError):
    """ Operand shapes do not agree """

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]

    def __str__(self):
        shapes = ' vs '.join(str(s) for s in self.shapes)
        return '%s: %s shape mismatch: %s' % (self.__class__.__name__, self.op, shapes)


class ContractError(SLPError):
    pass


class DegenerateInputError(SLPError):
    pass


class NumericError(SLPError):
    pass


class DataError(SLPError):
    exit_code = DATA


class MagicMismatch(DataError):

    def __init__(self, expected, found):
        self.expected = expected
        self.found = found

    def __str__(self):
        return '%s: expected %r, found %r' % (
            self.__class__.__name__, self.expected, self.found)


class MalformedHeader(DataError):
    pass


class IncompatibleVersion(DataError):
    pass


class TruncatedPayload(DataError):
    """ The file ended before ``needed`` bytes could be read at ``offset`` """

    def __init__(self, offset, needed, available):
        self.offset = offset
        self.needed = needed
        self.available = available

    def __str__(self):
        return '%s: needed %s bytes at byte offset %s, only %s available' % (
            self.__class__.__name__, self.needed, self.offset, self.available)
