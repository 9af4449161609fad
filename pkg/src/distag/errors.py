class DistagError(Exception):
    pass


class TagSetError(DistagError):
    pass


class SegmentationError(DistagError):
    pass


class ModelError(DistagError):
    pass


class InfeasibleConstraintError(ModelError):
    pass


class AlignError(DistagError):
    pass


class CorpusError(DistagError):
    pass


class DataError(DistagError):
    pass


class EvalError(DistagError):
    pass


class FormatError(DistagError):
    """Malformed input file. Carries file/line/token coordinates when known."""

    def __init__(self, message, path=None, line=None, token=None):
        self.path = path
        self.line = line
        self.token = token
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if token is not None:
            where.append(f"token {token}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
