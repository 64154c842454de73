"""Exception hierarchy shared across the toolkit."""


class DepFuseError(Exception):
    """Base class for every error raised by depfuse."""


# parse ingest
class MalformedLine(DepFuseError):
    pass


class NonTree(DepFuseError):
    pass


class DuplicateIndex(DepFuseError):
    pass


class TokenizationMismatch(DepFuseError):
    def __init__(self, tree: int, position: int, detail: str = ""):
        self.tree = tree
        self.position = position
        msg = f"tree {tree} diverges at position {position}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class UnknownLabel(DepFuseError):
    pass


class SpanOutOfRange(DepFuseError):
    pass


class MissingField(DepFuseError):
    pass


class WidthMismatch(DepFuseError):
    pass


class NonCoveringAlignment(DepFuseError):
    pass


class NonMonotoneAlignment(DepFuseError):
    pass


# graphs
class NodeCountMismatch(DepFuseError):
    pass


# numeric core
class ShapeMismatch(DepFuseError):
    pass


class EmptyMaskRow(DepFuseError):
    pass


class IndexOutOfRange(DepFuseError):
    pass


class DetachedGraph(DepFuseError):
    pass


class BackwardTwice(DepFuseError):
    pass


class CheckpointError(DepFuseError):
    pass


# model / training
class PositionOverflow(DepFuseError):
    pass


class DimensionMismatch(DepFuseError):
    pass


class InvalidConfig(DepFuseError):
    pass


class NonFiniteLoss(DepFuseError):
    pass


class TooSmall(DepFuseError):
    pass
