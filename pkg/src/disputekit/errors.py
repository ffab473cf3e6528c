"""Shared exception hierarchy and the accept/reject verdict type.

Every rule violation in the protocol surfaces either as a ProtocolError
subclass (for operations that must not proceed) or as a rejecting Verdict
(for checks whose callers need the reason without a control-flow break,
e.g. signal verification and audit replay).
"""
from __future__ import annotations

from dataclasses import dataclass


class ProtocolError(Exception):
    """Base class for every rule violation raised by this package."""


# ---- crypto primitives ------------------------------------------------------

class InvalidKey(ProtocolError):
    """Public key material is malformed or does not decode."""


class AuthFailure(ProtocolError):
    """Authenticated decryption failed (wrong key or tampered ciphertext)."""


class TreeFull(ProtocolError):
    """Merkle tree has no free leaf slots left."""


class IndexOutOfRange(ProtocolError):
    """Leaf index does not refer to an occupied tree slot."""


class DecodeError(ProtocolError):
    """Canonical byte string is truncated, oversized, or malformed."""


# ---- identity / registry ----------------------------------------------------

class DuplicateHuman(ProtocolError):
    """A non-rejected registry record already exists for this human."""


class VoucherNotApproved(ProtocolError):
    """The vouching registrant is not in the Approved state."""


class ChallengeTooLate(ProtocolError):
    """The challenge window for this registration has already closed."""


class NotApproved(ProtocolError):
    """The human behind this action has no Approved registry record."""


class AlreadyJoined(ProtocolError):
    """This human is already bound to a leaf of the group (bans persist)."""


class NotAMember(ProtocolError):
    """The identity commitment is not an occupied leaf of the group."""


# ---- coordinator / polls ----------------------------------------------------

class DuplicateKey(ProtocolError):
    """This public key is already registered for the poll."""


class PollClosed(ProtocolError):
    """Message intake deadline has passed (or the poll was finalized)."""


class CommitBeforeProcessing(ProtocolError):
    """Tally commitment requested before message processing ran."""


class AlreadyCommitted(ProtocolError):
    """The poll already has a tally commitment (single-commitment rule)."""


# ---- dispute lifecycle ------------------------------------------------------

class ZeroFee(ProtocolError):
    """Disputes require a positive fee."""


class SelfDispute(ProtocolError):
    """A party cannot open a dispute against itself."""


class WrongFee(ProtocolError):
    """Join deposit does not match the dispute fee."""


class JoinAfterDeadline(ProtocolError):
    """Party tried to join once the joining window was over."""


class NotAParty(ProtocolError):
    """Actor is not one of the dispute's named parties."""


class WrongState(ProtocolError):
    """Operation is not legal in the dispute's current state."""


class EnrollmentClosed(ProtocolError):
    """Judge enrollment window (before t1) is over."""


class InvalidSignal(ProtocolError):
    """Judge enrollment signal was rejected; .reason carries the cause."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class TooEarly(ProtocolError):
    """Deadline-gated operation attempted before its deadline."""


# ---- vote tallying ----------------------------------------------------------

class UnknownParty(ProtocolError):
    """Ballot names a party that is not in the dispute."""


class UnknownProposal(ProtocolError):
    """Allocation names a proposal id that was never submitted."""


# ---- strategy oracle --------------------------------------------------------

class InvalidResponse(ProtocolError):
    """Counter-allocation is negative or exceeds the responder's budget."""


class NonPositiveBudget(ProtocolError):
    """Budget arguments must be positive (V_A > 0) and non-negative (V_B)."""


# ---- incentives -------------------------------------------------------------

class NotTheAuthor(ProtocolError):
    """Fee claim by a judge who did not author the winning proposal."""


# ---- scenario harness -------------------------------------------------------

class MalformedScript(ProtocolError):
    """Scenario script violates ordering or references unknown actors/ops."""


# ---- verdicts ---------------------------------------------------------------

# Reason strings reused across modules; kept here so verdict producers and
# the tests agree on spelling.
REASON_BAD_MEMBERSHIP = "BadMembership"
REASON_DOUBLE_SIGNAL = "DoubleSignal"
REASON_AUTH_FAILURE = "AuthFailure"
REASON_DECODE_ERROR = "DecodeError"
REASON_UNKNOWN_VOTER = "UnknownVoter"
REASON_BAD_SIGNATURE = "BadSignature"
REASON_BAD_AMOUNT = "BadAmount"
REASON_OVER_BUDGET = "OverBudget"
REASON_MESSAGE_SET_MISMATCH = "MessageSetMismatch"
REASON_REPLAY_MISMATCH = "ReplayMismatch"
REASON_TALLY_MISMATCH = "TallyMismatch"
REASON_COMMITMENT_MISMATCH = "CommitmentMismatch"


@dataclass(frozen=True)
class Verdict:
    """Outcome of a check: accepted, or rejected with a named reason."""

    ok: bool
    reason: str | None = None

    @staticmethod
    def accept() -> "Verdict":
        return Verdict(True)

    @staticmethod
    def reject(reason: str) -> "Verdict":
        return Verdict(False, reason)

    def __bool__(self) -> bool:
        return self.ok
