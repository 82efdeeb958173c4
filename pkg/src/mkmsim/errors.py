"""Exception hierarchy shared by all simulator layers."""


class SimError(Exception):
    """Base class for every error raised by the simulator."""


# crypto primitives

class DigestTooLarge(SimError):
    pass


class MalformedSignature(SimError):
    pass


class EmptyPlaintext(SimError):
    pass


# core state machines

class CoreNotEnabled(SimError):
    pass


class NoInputStaged(SimError):
    pass


class NoGrant(SimError):
    pass


class DuplicateKeyId(SimError):
    pass


class KeyNotFound(SimError):
    pass


class KeyTypeMismatch(SimError):
    pass


class IsolationViolation(SimError):
    """Raw key material reached processor-visible memory."""


# control word / routing

class InvalidSource(SimError):
    pass


class InvalidDestination(SimError):
    pass


class SourceNotReady(SimError):
    pass


class CbiDisabled(SimError):
    pass


class PreconditionViolated(SimError):
    pass


# ledger

class EmptyBuffer(SimError):
    pass


class SignerMismatch(SimError):
    pass


class MalformedDump(SimError):
    pass


class UnknownKeyId(SimError):
    pass


# harness

class ScenarioError(SimError):
    pass


class ExpectationMismatch(SimError):
    pass


class OutOfRange(SimError):
    pass
