# SPDX-License-Identifier: MIT-0

from typing import Optional


class QgoError(Exception):
    """Base class for every error raised by the simulator and verifier
    """


# qcore
class IdCollision(QgoError):
    pass


class UnknownRegister(QgoError):
    pass


class BadOutcome(QgoError):
    pass


class ShapeError(QgoError):
    pass


class ZeroProbabilityHistory(QgoError):
    pass


class CapacityError(QgoError):
    pass


class InvalidOperation(QgoError):
    pass


# sysmodel
class OwnershipViolation(QgoError):
    pass


class DuplicateMessage(QgoError):
    pass


class EmptyChannel(QgoError):
    pass


class NotRecipient(QgoError):
    pass


class LocalityViolation(QgoError):
    pass


# execution
class ReplayError(QgoError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"\nInvalid step at index {index}: {reason}")
        self.index = index
        self.reason = reason


class ConcatMismatch(QgoError):
    pass


# causality
class NotComparable(QgoError):
    pass


class CausalDependency(QgoError):
    pass


class LemmaViolation(QgoError):
    pass


class SubstitutionMismatch(QgoError):
    pass


# qgo / specmachine
class ConcurrentInvocation(QgoError):
    pass


class AlreadyActive(QgoError):
    pass


class UnknownGlobalOp(QgoError):
    pass


class SpecViolation(QgoError):
    pass


# verifier
class HypothesisViolation(QgoError):
    pass


class ProtocolIncomplete(QgoError):
    pass


class ClaimViolation(QgoError):
    def __init__(self, step: str, reason: str):
        super().__init__(f"\n{step}: {reason}")
        self.step = step
        self.reason = reason


# harness
class UnknownScenario(QgoError):
    pass


class ConfigError(QgoError):
    pass


class TraceParseError(QgoError):
    def __init__(self, line: int, reason: str, path: Optional[str] = None):
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"\nCould not parse trace at {where}: {reason}")
        self.line = line
        self.reason = reason
