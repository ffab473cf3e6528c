"""Encrypted ballot intake with a single trusted coordinator.

Voters register a public key and a credit budget, then send encrypted,
signed commands. The poll contract is deliberately blind at intake — any
ciphertext is accepted before the deadline — and all meaning is assigned
at processing time:

* only the sender's *last valid* command counts;
* a command may rotate the voter's key, and every later command must be
  signed with the rotated key (stale-key messages are discarded), which
  is what makes coerced ballots cheaply revocable;
* spending above the voter's budget invalidates the command.

Processing emits an ``AuditTranscript``: decrypted commands, per-message
verdicts, final voter states, the tally, and the commitment salt. The
transcript replaces succinct proofs at simulation fidelity — anyone can
re-derive verdicts, states, tally, and commitment from it via
``verify_audit``. What it cannot prove is honest decryption of messages
the coordinator *claims* are garbage; that residual trust in the
coordinator is the modeled boundary.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from . import canonical
from .errors import (
    AlreadyCommitted,
    AuthFailure,
    CommitBeforeProcessing,
    DecodeError,
    DuplicateKey,
    InvalidKey,
    PollClosed,
    REASON_AUTH_FAILURE,
    REASON_BAD_AMOUNT,
    REASON_BAD_SIGNATURE,
    REASON_COMMITMENT_MISMATCH,
    REASON_DECODE_ERROR,
    REASON_MESSAGE_SET_MISMATCH,
    REASON_OVER_BUDGET,
    REASON_REPLAY_MISMATCH,
    REASON_TALLY_MISMATCH,
    REASON_UNKNOWN_VOTER,
    TooEarly,
    Verdict,
    WrongState,
)
from .primitives import (
    Ciphertext,
    KeyPair,
    PublicKey,
    decrypt,
    encrypt,
    hash_fields,
    key_agree,
    random_bytes,
    sign,
    verify_sig,
)

# Spending rules, keyed by name so transcripts can say which one applied.
# "linear": unit-priced votes, negatives forbidden (juror phase).
# "quadratic": v votes cost v*v, negatives allowed (party runoff phase).
COST_RULES: dict[str, Callable[[Sequence[int]], int]] = {
    "linear": lambda amounts: sum(abs(a) for a in amounts),
    "quadratic": lambda amounts: sum(a * a for a in amounts),
}
NEGATIVES_ALLOWED = {"linear": False, "quadratic": True}


@dataclass(frozen=True)
class Command:
    """One decrypted ballot instruction.

    ``new_public_key`` is the key later commands must be signed with
    (repeat the current key to keep it). ``memo`` carries phase-specific
    payload (the juror phase puts the proposal hash there).
    """

    new_public_key: PublicKey
    vote_option: tuple[int, ...]
    vote_amount: tuple[int, ...]
    memo: bytes
    voter_registration_index: int

    def signing_bytes(self) -> bytes:
        return b"ballot-command-v1" + self._body()

    def _body(self) -> bytes:
        return b"".join(
            (
                canonical.encode_bytes(self.new_public_key.encode()),
                canonical.encode_int_list(self.vote_option),
                canonical.encode_int_list(self.vote_amount),
                canonical.encode_bytes(self.memo),
                canonical.encode_int64(self.voter_registration_index),
            )
        )

    def encode_signed(self, signature: bytes) -> bytes:
        return self._body() + canonical.encode_bytes(signature)


def decode_signed_command(plaintext: bytes) -> tuple[Command, bytes]:
    reader = canonical.Reader(plaintext)
    key = PublicKey.decode(reader.read_bytes())
    options = tuple(reader.read_int_list())
    amounts = tuple(reader.read_int_list())
    memo = reader.read_bytes()
    index = reader.read_int64()
    signature = reader.read_bytes()
    reader.expect_end()
    return Command(key, options, amounts, memo, index), signature


def build_message(
    *,
    signer: KeyPair,
    shared_key: bytes,
    voter_registration_index: int,
    votes: Mapping[int, int],
    new_public_key: Optional[PublicKey] = None,
    memo: bytes = b"",
    rng: Optional[random.Random] = None,
) -> Ciphertext:
    """Client-side helper: canonical command, signed, sealed for the
    coordinator. Options are sorted so equal ballots byte-match."""
    options = tuple(sorted(votes))
    command = Command(
        new_public_key=new_public_key or signer.public,
        vote_option=options,
        vote_amount=tuple(votes[o] for o in options),
        memo=memo,
        voter_registration_index=voter_registration_index,
    )
    signature = sign(signer, command.signing_bytes())
    return encrypt(shared_key, command.encode_signed(signature), rng)


# ---- poll state -----------------------------------------------------------------


@dataclass
class RegisteredVoter:
    registration_index: int
    registered_key: PublicKey  # fixed; derives the encryption channel
    current_key: PublicKey  # rotates via commands
    voice_credits: int


@dataclass(frozen=True)
class MaciMessage:
    arrival_index: int
    ciphertext: Ciphertext


@dataclass(frozen=True)
class FinalVote:
    vote_option: tuple[int, ...]
    vote_amount: tuple[int, ...]
    memo: bytes
    arrival_index: int


@dataclass(frozen=True)
class VoterFinalState:
    registration_index: int
    current_key_bytes: bytes
    voice_credits: int
    vote: Optional[FinalVote]


@dataclass(frozen=True)
class TranscriptEntry:
    arrival_index: int
    ciphertext_digest: bytes
    plaintext: Optional[bytes]  # None when the coordinator could not decrypt
    valid: bool
    reason: Optional[str]


@dataclass(frozen=True)
class TallyCommitment:
    digest: bytes


@dataclass(frozen=True)
class AuditTranscript:
    poll_id: int
    cost_rule: str
    initial_voters: tuple[tuple[int, bytes, int], ...]  # (index, key, credits)
    entries: tuple[TranscriptEntry, ...]
    final_states: tuple[VoterFinalState, ...]
    message_set_digest: bytes
    tally: Mapping[int, int]
    salt: bytes


def ciphertext_digest(ciphertext: Ciphertext) -> bytes:
    return hash_fields(b"ballot-ct", ciphertext.encode())


def message_set_digest(ciphertexts: Sequence[Ciphertext]) -> bytes:
    """Order-sensitive digest over the intake, chained through per-message
    digests so an audit can re-derive it from transcript entries alone."""
    return digest_over_entries(ciphertext_digest(ct) for ct in ciphertexts)


def digest_over_entries(entry_digests) -> bytes:
    return hash_fields(b"message-set", *entry_digests)


def commitment_digest(tally: Mapping[int, int], salt: bytes) -> bytes:
    return hash_fields(b"tally-commitment", canonical.encode_int_map(tally), salt)


class MaciPoll:
    """One poll: intake before the deadline, then process/commit/publish."""

    def __init__(
        self,
        poll_id: int,
        coordinator_public: PublicKey,
        deadline: int,
        cost_rule: str = "linear",
    ):
        if cost_rule not in COST_RULES:
            raise ValueError(f"unknown cost rule {cost_rule!r}")
        self.poll_id = poll_id
        self.coordinator_public = coordinator_public
        self.deadline = deadline
        self.cost_rule = cost_rule
        self.voters: list[RegisteredVoter] = []
        self.messages: list[MaciMessage] = []
        self.closed = False
        self._keys_seen: set[bytes] = set()
        self._processed: Optional[tuple[tuple[VoterFinalState, ...], AuditTranscript]] = None
        self._committed_tally: Optional[dict[int, int]] = None
        self._salt: Optional[bytes] = None
        self.commitment: Optional[TallyCommitment] = None
        self.published = False

    # -- intake ------------------------------------------------------------

    def has_key(self, public_key: PublicKey) -> bool:
        return public_key.encode() in self._keys_seen

    def register_voter(self, public_key: PublicKey, credits: int) -> RegisteredVoter:
        if self.closed:
            raise PollClosed("registration after close")
        if credits < 0:
            raise ValueError("credits must be non-negative")
        encoded = public_key.encode()
        if encoded in self._keys_seen:
            raise DuplicateKey("public key already registered")
        self._keys_seen.add(encoded)
        voter = RegisteredVoter(len(self.voters), public_key, public_key, credits)
        self.voters.append(voter)
        return voter

    def submit_message(self, ciphertext: Ciphertext, now: int) -> int:
        """Content-blind intake; only the clock can refuse a message."""
        if self.closed or now >= self.deadline:
            raise PollClosed(f"deadline {self.deadline}, now {now}")
        index = len(self.messages)
        self.messages.append(MaciMessage(index, ciphertext))
        return index

    def extend_deadline(self, new_deadline: int) -> None:
        if self.closed:
            raise PollClosed("cannot extend a closed poll")
        if new_deadline <= self.deadline:
            raise ValueError("deadline can only move forward")
        self.deadline = new_deadline

    def close(self, now: int) -> None:
        if now < self.deadline:
            raise TooEarly(f"deadline {self.deadline}, now {now}")
        self.closed = True

    # -- processing ----------------------------------------------------------

    def shared_key_for(self, coordinator_secret: KeyPair, voter_index: int) -> bytes:
        return key_agree(coordinator_secret, self.voters[voter_index].registered_key)

    def preview_valid_votes(self, coordinator_secret: KeyPair) -> tuple[VoterFinalState, ...]:
        """Pure dry run over the current message list (no state change);
        used to test quorum before deciding whether to extend."""
        final_states, _ = self._run(coordinator_secret)
        return final_states

    def process_messages(
        self, coordinator_secret: KeyPair
    ) -> tuple[tuple[VoterFinalState, ...], AuditTranscript]:
        if not self.closed:
            raise WrongState("process requires a closed poll")
        if self._processed is None:
            self._processed = self._run(coordinator_secret)
            for voter, state in zip(self.voters, self._processed[0]):
                voter.current_key = PublicKey.decode(state.current_key_bytes)
        return self._processed

    def _run(
        self, coordinator_secret: KeyPair
    ) -> tuple[tuple[VoterFinalState, ...], AuditTranscript]:
        cost = COST_RULES[self.cost_rule]
        negatives_ok = NEGATIVES_ALLOWED[self.cost_rule]
        shared_keys = [
            key_agree(coordinator_secret, voter.registered_key)
            for voter in self.voters
        ]
        current_keys = [voter.registered_key for voter in self.voters]
        pending: list[Optional[FinalVote]] = [None] * len(self.voters)
        entries: list[TranscriptEntry] = []

        for message in self.messages:
            ct = message.ciphertext
            ct_digest = ciphertext_digest(ct)
            plaintext = None
            for key in shared_keys:
                try:
                    plaintext = decrypt(key, ct)
                    break
                except AuthFailure:
                    continue
            if plaintext is None:
                entries.append(
                    TranscriptEntry(
                        message.arrival_index, ct_digest, None, False,
                        REASON_AUTH_FAILURE,
                    )
                )
                continue

            valid, reason, command = _judge_plaintext(
                plaintext, current_keys, [v.voice_credits for v in self.voters],
                cost, negatives_ok,
            )
            entries.append(
                TranscriptEntry(
                    message.arrival_index, ct_digest, plaintext, valid, reason
                )
            )
            if valid:
                assert command is not None
                idx = command.voter_registration_index
                current_keys[idx] = command.new_public_key
                pending[idx] = FinalVote(
                    command.vote_option,
                    command.vote_amount,
                    command.memo,
                    message.arrival_index,
                )

        final_states = tuple(
            VoterFinalState(
                voter.registration_index,
                current_keys[i].encode(),
                voter.voice_credits,
                pending[i],
            )
            for i, voter in enumerate(self.voters)
        )
        tally = _aggregate(final_states)
        transcript = AuditTranscript(
            poll_id=self.poll_id,
            cost_rule=self.cost_rule,
            initial_voters=tuple(
                (v.registration_index, v.registered_key.encode(), v.voice_credits)
                for v in self.voters
            ),
            entries=tuple(entries),
            final_states=final_states,
            message_set_digest=message_set_digest(
                [m.ciphertext for m in self.messages]
            ),
            tally=tally,
            salt=b"",  # filled at publish time; commitments carry their own salt
        )
        return final_states, transcript

    @property
    def tally(self) -> dict[int, int]:
        if self._processed is None:
            raise CommitBeforeProcessing("no processing result yet")
        return dict(self._processed[1].tally)

    # -- commitment ----------------------------------------------------------

    def commit_tally(
        self, tally: Mapping[int, int], rng: Optional[random.Random] = None
    ) -> TallyCommitment:
        if self._processed is None:
            raise CommitBeforeProcessing("commit requires processed messages")
        if self.commitment is not None:
            raise AlreadyCommitted("a tally commitment already exists")
        self._salt = random_bytes(32, rng)
        self._committed_tally = dict(tally)
        self.commitment = TallyCommitment(commitment_digest(tally, self._salt))
        return self.commitment

    def publish_tally(self) -> tuple[dict[int, int], bytes]:
        if self.commitment is None or self._committed_tally is None or self._salt is None:
            raise WrongState("publish requires a commitment")
        self.published = True
        return dict(self._committed_tally), self._salt

    def audit_transcript(self) -> AuditTranscript:
        """Transcript with the commitment salt attached (post-publication)."""
        if self._processed is None:
            raise CommitBeforeProcessing("no processing result yet")
        if self._salt is None:
            raise WrongState("transcript is published together with the salt")
        transcript = self._processed[1]
        return AuditTranscript(
            poll_id=transcript.poll_id,
            cost_rule=transcript.cost_rule,
            initial_voters=transcript.initial_voters,
            entries=transcript.entries,
            final_states=transcript.final_states,
            message_set_digest=transcript.message_set_digest,
            tally=transcript.tally,
            salt=self._salt,
        )


def _judge_plaintext(
    plaintext: bytes,
    current_keys: list[PublicKey],
    credits: list[int],
    cost: Callable[[Sequence[int]], int],
    negatives_ok: bool,
) -> tuple[bool, Optional[str], Optional[Command]]:
    """Validity rules shared by processing and audit replay."""
    try:
        command, signature = decode_signed_command(plaintext)
    except (DecodeError, InvalidKey):
        return False, REASON_DECODE_ERROR, None
    if len(command.vote_option) != len(command.vote_amount):
        return False, REASON_DECODE_ERROR, None
    if any(
        b <= a for a, b in zip(command.vote_option, command.vote_option[1:])
    ):
        return False, REASON_DECODE_ERROR, None  # non-canonical option order
    idx = command.voter_registration_index
    if not 0 <= idx < len(current_keys):
        return False, REASON_UNKNOWN_VOTER, None
    if not verify_sig(current_keys[idx], command.signing_bytes(), signature):
        return False, REASON_BAD_SIGNATURE, None
    if not negatives_ok and any(a < 0 for a in command.vote_amount):
        return False, REASON_BAD_AMOUNT, None
    if cost(command.vote_amount) > credits[idx]:
        return False, REASON_OVER_BUDGET, None
    return True, None, command


def _aggregate(final_states: Sequence[VoterFinalState]) -> dict[int, int]:
    tally: dict[int, int] = {}
    for state in final_states:
        if state.vote is None:
            continue
        for option, amount in zip(state.vote.vote_option, state.vote.vote_amount):
            tally[option] = tally.get(option, 0) + amount
    return tally


# ---- transparent audit -------------------------------------------------------


def verify_audit(
    transcript: AuditTranscript,
    intake_digest: bytes,
    commitment: TallyCommitment,
) -> Verdict:
    """Re-derive everything the coordinator claimed; reject on the first
    check that fails.

    1. the transcript covers exactly the observed message set;
    2. replaying the decrypted commands reproduces every verdict and the
       final voter states;
    3. aggregating the final votes reproduces the tally;
    4. the published commitment opens to (tally, salt).
    """
    if transcript.message_set_digest != intake_digest:
        return Verdict.reject(REASON_MESSAGE_SET_MISMATCH)
    derived_set = digest_over_entries(
        entry.ciphertext_digest for entry in transcript.entries
    )
    if derived_set != intake_digest:
        return Verdict.reject(REASON_MESSAGE_SET_MISMATCH)

    cost = COST_RULES.get(transcript.cost_rule)
    if cost is None:
        return Verdict.reject(REASON_REPLAY_MISMATCH)
    negatives_ok = NEGATIVES_ALLOWED[transcript.cost_rule]

    try:
        current_keys = [
            PublicKey.decode(key_bytes)
            for _, key_bytes, _ in transcript.initial_voters
        ]
    except Exception:
        return Verdict.reject(REASON_REPLAY_MISMATCH)
    credits = [c for _, _, c in transcript.initial_voters]
    pending: list[Optional[FinalVote]] = [None] * len(current_keys)

    for position, entry in enumerate(transcript.entries):
        if entry.arrival_index != position:
            return Verdict.reject(REASON_REPLAY_MISMATCH)
        if entry.plaintext is None:
            # Undecryptable by the coordinator's claim; unverifiable without
            # the key, but it must at least be marked invalid.
            if entry.valid or entry.reason != REASON_AUTH_FAILURE:
                return Verdict.reject(REASON_REPLAY_MISMATCH)
            continue
        valid, reason, command = _judge_plaintext(
            entry.plaintext, current_keys, credits, cost, negatives_ok
        )
        if valid != entry.valid or reason != entry.reason:
            return Verdict.reject(REASON_REPLAY_MISMATCH)
        if valid:
            assert command is not None
            idx = command.voter_registration_index
            current_keys[idx] = command.new_public_key
            pending[idx] = FinalVote(
                command.vote_option,
                command.vote_amount,
                command.memo,
                entry.arrival_index,
            )

    derived_states = tuple(
        VoterFinalState(index, current_keys[i].encode(), credit, pending[i])
        for i, (index, _, credit) in enumerate(transcript.initial_voters)
    )
    if derived_states != transcript.final_states:
        return Verdict.reject(REASON_REPLAY_MISMATCH)

    if _aggregate(derived_states) != dict(transcript.tally):
        return Verdict.reject(REASON_TALLY_MISMATCH)

    if commitment_digest(transcript.tally, transcript.salt) != commitment.digest:
        return Verdict.reject(REASON_COMMITMENT_MISMATCH)
    return Verdict.accept()
