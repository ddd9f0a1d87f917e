"""Exception types shared across the package."""
from __future__ import annotations


class QotlabError(Exception):
    """Base class for all package errors."""


class LengthMismatch(QotlabError, ValueError):
    pass


class ShapeMismatch(QotlabError, ValueError):
    pass


class EmptyDistribution(QotlabError, ValueError):
    pass


class DomainTooLarge(QotlabError, ValueError):
    pass


class CapExceeded(QotlabError, ValueError):
    pass


class UnknownEprPair(QotlabError, KeyError):
    pass


class NonUnitaryGate(QotlabError, ValueError):
    pass


class IndexOutOfRange(QotlabError, IndexError):
    pass


class OpaqueEngine(QotlabError):
    """Committed values were requested from an engine outside transparent mode."""


class RetryBudgetExceeded(QotlabError):
    def __init__(self, iteration: int, retries: int):
        super().__init__(f"iteration {iteration}: no matching challenge after {retries} retries")
        self.iteration = iteration
        self.retries = retries


class ZeroSuccessProbability(QotlabError, ValueError):
    pass


class HypothesisViolated(QotlabError, ValueError):
    def __init__(self, which: str, detail: str = ""):
        super().__init__(f"{which}: {detail}" if detail else which)
        self.which = which


# wire errors

class TruncatedFrame(QotlabError):
    def __init__(self, offset: int, msg: str = "truncated frame"):
        super().__init__(f"{msg} at offset {offset}")
        self.offset = offset


class UnknownType(QotlabError):
    def __init__(self, msg_type: int, offset: int = 0):
        super().__init__(f"unknown message type {msg_type} at offset {offset}")
        self.msg_type = msg_type
        self.offset = offset


class OversizePayload(QotlabError, ValueError):
    pass


class PeerClosed(QotlabError):
    pass


# protocol outcomes

class ProtocolAbort(QotlabError):
    """A party stopped the protocol; carried to the peer as an abort message."""

    reason = "abort"

    def __init__(self, detail: str = "", iteration: int | None = None, index: int | None = None):
        super().__init__(detail or self.reason)
        self.detail = detail
        self.iteration = iteration
        self.index = index


class ReceiverAbort(ProtocolAbort):
    reason = "receiver-abort"


class CommitterAbort(ProtocolAbort):
    reason = "committer-abort"


class SenderAbort(ProtocolAbort):
    reason = "sender-abort"


class ExtractAbort(ProtocolAbort):
    reason = "extract-abort"


class PeerAborted(ProtocolAbort):
    """Raised inside a party when the peer sent an abort message."""

    reason = "peer-aborted"


class ProtocolViolation(ProtocolAbort):
    """Unexpected message type or malformed payload from the peer."""

    reason = "protocol-violation"
