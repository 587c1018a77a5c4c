"""Exception types shared across the package.

Every error carries a stable ``reason`` string (the class name by default)
that is what services put on the wire.
"""


class HotProofError(Exception):
    @property
    def reason(self) -> str:
        return type(self).__name__


# channel model
class InvariantViolation(HotProofError):
    pass


class WrongPhase(HotProofError):
    pass


class InsufficientLiquidity(HotProofError):
    pass


class UnknownHtlc(HotProofError):
    pass


class ChannelMismatch(HotProofError):
    pass


# routing / probing
class UnknownNode(HotProofError):
    pass


class NoRoute(HotProofError):
    pass


# chain oracle
class OracleUnavailable(HotProofError):
    pass


class UnknownOutpoint(HotProofError):
    pass


# enclave
class StaleState(HotProofError):
    def __init__(self, message: str = "", outpoint=None):
        super().__init__(message or f"stale state: {outpoint}")
        self.outpoint = outpoint


class BadOracleSignature(HotProofError):
    pass


class HtlcPolicyViolation(HotProofError):
    pass


class BadNonceLength(HotProofError):
    pass


class ThresholdNotMet(HotProofError):
    pass


# transcripts
class EmptyResponse(HotProofError):
    pass


class IndexOutOfRange(HotProofError):
    pass


# services
class ServiceUnavailable(HotProofError):
    """A service answered with a non-2xx status; ``reason`` comes from the body."""

    def __init__(self, status: int, reason: str, message: str = ""):
        super().__init__(message or f"{status} {reason}")
        self.status = status
        self._reason = reason

    @property
    def reason(self) -> str:
        return self._reason


class NotaryUnavailable(HotProofError):
    pass


class BadConfig(HotProofError):
    pass
