"""Exception hierarchy shared across the pipeline."""


class AfgnnError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(AfgnnError):
    def __init__(self, message, line=0, column=0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class FormatError(AfgnnError):
    def __init__(self, message, line_index=None):
        where = f" at line {line_index}" if line_index is not None else ""
        super().__init__(f"{message}{where}")
        self.line_index = line_index


class NoCallsiteError(AfgnnError):
    pass


class MissingEmbedding(AfgnnError):
    def __init__(self, graph_id, line):
        super().__init__(f"no external vector for graph {graph_id!r}, line {line}")
        self.graph_id = graph_id
        self.line = line


class DimensionMismatch(AfgnnError):
    pass


class NoApiNode(AfgnnError):
    pass


class ChecksumError(AfgnnError):
    pass


class VersionError(AfgnnError):
    pass


class EmptyCorpus(AfgnnError):
    pass


class InvalidK(AfgnnError):
    pass


class DegenerateClustering(AfgnnError):
    pass


class AllDegenerate(AfgnnError):
    pass
