"""Dispute lifecycle: escrowed fees, strict deadlines, two voting phases.

The clock is a logical integer supplied by the caller on every operation;
nothing in here reads wall time. Deadline semantics are uniformly strict:
an action gated by deadline T is allowed while ``now < T`` and refused at
``now == T``.

Lifecycle (states in parentheses):

    open (Opened -> AwaitingJoin) -> all parties join (EvidenceOpen)
    -> t1 reached (Phase1Voting) -> close at t2:
         quorum met      -> Phase1Tallied -> Phase2Voting -> Resolved
         quorum missed   -> one deadline extension, then Aborted + refunds
    missing party at t1  -> DefaultJudgment + refunds

Fees: every party escrows the same fee f at entry; a resolved dispute
pays the whole pool (n*f) to the judge who authored the winning proposal;
aborts and defaults refund everyone in full. The escrow ledger records
every movement so conservation can be replayed.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

from .errors import (
    AlreadyJoined,
    EnrollmentClosed,
    InvalidKey,
    InvalidSignal,
    JoinAfterDeadline,
    NotAParty,
    SelfDispute,
    TooEarly,
    WrongFee,
    WrongState,
    ZeroFee,
)
from .identity import SemaphoreGroup, Signal
from .maci import MaciPoll, VoterFinalState
from .primitives import Ciphertext, DIGEST_SIZE, KeyPair, PublicKey
from .voting import (
    Phase1Ballot,
    Phase1Tally,
    Phase2Tally,
    Proposal,
    QuadraticAllocation,
    tally_phase1,
    tally_phase2,
)

Observer = Callable[[str, dict], None]


def _no_observer(kind: str, payload: dict) -> None:
    pass


def enrollment_scope(dispute_id: int) -> int:
    """External nullifier for judge enrollment: one slot per dispute."""
    return (dispute_id << 4) | 1


class DisputeState(Enum):
    OPENED = "Opened"
    AWAITING_JOIN = "AwaitingJoin"
    EVIDENCE_OPEN = "EvidenceOpen"
    PHASE1_VOTING = "Phase1Voting"
    PHASE1_TALLIED = "Phase1Tallied"
    PHASE2_VOTING = "Phase2Voting"
    RESOLVED = "Resolved"
    DEFAULT_JUDGMENT = "DefaultJudgment"
    ABORTED = "Aborted"


_ALLOWED_TRANSITIONS: dict[DisputeState, set[DisputeState]] = {
    DisputeState.OPENED: {DisputeState.AWAITING_JOIN},
    DisputeState.AWAITING_JOIN: {
        DisputeState.EVIDENCE_OPEN,
        DisputeState.DEFAULT_JUDGMENT,
    },
    DisputeState.EVIDENCE_OPEN: {DisputeState.PHASE1_VOTING},
    DisputeState.PHASE1_VOTING: {
        DisputeState.PHASE1_TALLIED,
        DisputeState.ABORTED,
    },
    DisputeState.PHASE1_TALLIED: {DisputeState.PHASE2_VOTING},
    DisputeState.PHASE2_VOTING: {DisputeState.RESOLVED},
    DisputeState.RESOLVED: set(),
    DisputeState.DEFAULT_JUDGMENT: set(),
    DisputeState.ABORTED: set(),
}

TERMINAL_STATES = {
    DisputeState.RESOLVED,
    DisputeState.DEFAULT_JUDGMENT,
    DisputeState.ABORTED,
}


@dataclass(frozen=True)
class DisputeConfig:
    """Per-dispute timing and quorum. Deadlines are absolute logical times:
    judges enroll before t1, Phase-1 votes land before t2. The quorum
    extension and the Phase-2 window both default to the voting span
    t2 - t1 when not set explicitly."""

    t1: int
    t2: int
    min_judges: int
    extension: Optional[int] = None
    phase2_window: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0 < self.t1 < self.t2:
            raise ValueError("need 0 < t1 < t2")
        if self.min_judges < 1:
            raise ValueError("quorum must be at least one judge")
        for window in (self.extension, self.phase2_window):
            if window is not None and window < 1:
                raise ValueError("windows must be positive")

    @property
    def extension_value(self) -> int:
        return self.extension if self.extension is not None else self.t2 - self.t1

    @property
    def phase2_window_value(self) -> int:
        return (
            self.phase2_window
            if self.phase2_window is not None
            else self.t2 - self.t1
        )


@dataclass(frozen=True)
class EvidenceRef:
    party: str
    content_hash: bytes
    label: str


@dataclass(frozen=True)
class EngineProposal:
    """Proposal as the engine sees it after Phase-1 processing."""

    proposal_id: int
    text_hash: bytes
    author_registration_index: int
    arrival_index: int  # of the message that established it; the tie-break order


# ---- escrow -------------------------------------------------------------------


@dataclass(frozen=True)
class EscrowEntry:
    kind: str  # deposit | refund | payout
    dispute_id: int
    actor: str
    amount: int


class Escrow:
    """Append-only ledger of fee movements, balances derived from it."""

    def __init__(self) -> None:
        self.entries: list[EscrowEntry] = []

    def deposit(self, dispute_id: int, actor: str, amount: int) -> EscrowEntry:
        if amount <= 0:
            raise ValueError("deposits must be positive")
        entry = EscrowEntry("deposit", dispute_id, actor, amount)
        self.entries.append(entry)
        return entry

    def _pay(self, kind: str, dispute_id: int, actor: str, amount: int) -> EscrowEntry:
        if amount <= 0:
            raise ValueError("outflows must be positive")
        if amount > self.balance(dispute_id):
            raise ValueError(
                f"dispute {dispute_id} holds {self.balance(dispute_id)}, "
                f"cannot pay {amount}"
            )
        entry = EscrowEntry(kind, dispute_id, actor, amount)
        self.entries.append(entry)
        return entry

    def refund(self, dispute_id: int, actor: str, amount: int) -> EscrowEntry:
        return self._pay("refund", dispute_id, actor, amount)

    def payout(self, dispute_id: int, actor: str, amount: int) -> EscrowEntry:
        return self._pay("payout", dispute_id, actor, amount)

    def balance(self, dispute_id: int) -> int:
        total = 0
        for entry in self.entries:
            if entry.dispute_id != dispute_id:
                continue
            total += entry.amount if entry.kind == "deposit" else -entry.amount
        return total

    def total(self, kind: str) -> int:
        return sum(e.amount for e in self.entries if e.kind == kind)

    def conserved(self) -> bool:
        """Replay the ledger: deposits fund outflows exactly, never below zero."""
        balances: dict[int, int] = {}
        for entry in self.entries:
            delta = entry.amount if entry.kind == "deposit" else -entry.amount
            balances[entry.dispute_id] = balances.get(entry.dispute_id, 0) + delta
            if balances[entry.dispute_id] < 0:
                return False
        return self.total("deposit") == self.total("refund") + self.total(
            "payout"
        ) + sum(balances.values())

    def net_position(self, actor: str) -> int:
        """Actor's cumulative flow: refunds and payouts minus deposits."""
        total = 0
        for entry in self.entries:
            if entry.actor != actor:
                continue
            total += -entry.amount if entry.kind == "deposit" else entry.amount
        return total


# ---- dispute record --------------------------------------------------------------


@dataclass
class Dispute:
    dispute_id: int
    parties: list[str]  # initiator first
    fee: int
    config: DisputeConfig
    state: DisputeState = DisputeState.OPENED
    party_keys: dict[str, PublicKey] = field(default_factory=dict)
    joined: set[str] = field(default_factory=set)
    evidence: list[EvidenceRef] = field(default_factory=list)
    transitions: list[tuple[int, str, str]] = field(default_factory=list)
    phase1_poll: Optional[MaciPoll] = None
    extension_used: bool = False
    t2_effective: int = 0
    phase1_tally: Optional[Phase1Tally] = None
    proposals: list[EngineProposal] = field(default_factory=list)
    phase2_poll: Optional[MaciPoll] = None
    phase2_deadline: Optional[int] = None
    phase2_tally: Optional[Phase2Tally] = None
    winning_proposal_id: Optional[int] = None
    dropped_allocations: list[str] = field(default_factory=list)
    default_winner: Optional[str] = None
    settled: bool = False

    @property
    def initiator(self) -> str:
        return self.parties[0]

    def proposal_by_id(self, proposal_id: int) -> EngineProposal:
        for proposal in self.proposals:
            if proposal.proposal_id == proposal_id:
                return proposal
        raise KeyError(proposal_id)


class DisputeEngine:
    """Owns every dispute plus the shared coordinator, juror group, escrow."""

    def __init__(
        self,
        coordinator: KeyPair,
        group: SemaphoreGroup,
        escrow: Optional[Escrow] = None,
        rng: Optional[random.Random] = None,
        observer: Observer = _no_observer,
    ):
        self.coordinator = coordinator
        self.group = group
        self.escrow = escrow if escrow is not None else Escrow()
        self.rng = rng
        self.observe = observer
        self.disputes: dict[int, Dispute] = {}
        self._next_id = 0

    # -- helpers ---------------------------------------------------------

    def _get(self, dispute_id: int) -> Dispute:
        try:
            return self.disputes[dispute_id]
        except KeyError:
            raise WrongState(f"no dispute {dispute_id}") from None

    def _transition(self, dispute: Dispute, new: DisputeState, now: int) -> None:
        if new not in _ALLOWED_TRANSITIONS[dispute.state]:
            raise WrongState(f"{dispute.state.value} cannot become {new.value}")
        old = dispute.state
        dispute.state = new
        dispute.transitions.append((now, old.value, new.value))
        self.observe(
            "dispute_state",
            {
                "dispute_id": dispute.dispute_id,
                "old": old.value,
                "new": new.value,
                "time": now,
            },
        )

    def _sync(self, dispute: Dispute, now: int) -> None:
        """Deadline-driven transition: evidence freezes when voting begins."""
        if dispute.state == DisputeState.EVIDENCE_OPEN and now >= dispute.config.t1:
            self._transition(dispute, DisputeState.PHASE1_VOTING, now)

    # -- lifecycle ---------------------------------------------------------

    def open_dispute(
        self,
        initiator: str,
        respondents: Sequence[str],
        fee: int,
        config: DisputeConfig,
        initiator_key: PublicKey,
        now: int,
    ) -> Dispute:
        if fee <= 0:
            raise ZeroFee("dispute fee must be positive")
        if initiator in respondents:
            raise SelfDispute(initiator)
        if not respondents:
            raise ValueError("a dispute needs at least one respondent")
        if len(set(respondents)) != len(respondents):
            raise ValueError("duplicate respondent")

        dispute = Dispute(
            dispute_id=self._next_id,
            parties=[initiator, *respondents],
            fee=fee,
            config=config,
            t2_effective=config.t2,
        )
        self._next_id += 1
        self.disputes[dispute.dispute_id] = dispute
        dispute.phase1_poll = MaciPoll(
            dispute.dispute_id * 2,
            self.coordinator.public,
            deadline=config.t2,
            cost_rule="linear",
        )
        dispute.party_keys[initiator] = initiator_key
        entry = self.escrow.deposit(dispute.dispute_id, initiator, fee)
        self.observe("escrow", _escrow_event(entry))
        self._transition(dispute, DisputeState.AWAITING_JOIN, now)
        dispute.joined.add(initiator)
        return dispute

    def join_dispute(
        self,
        dispute_id: int,
        party: str,
        fee: int,
        party_key: PublicKey,
        now: int,
    ) -> None:
        dispute = self._get(dispute_id)
        if dispute.state != DisputeState.AWAITING_JOIN:
            raise WrongState(f"cannot join in {dispute.state.value}")
        if party not in dispute.parties:
            raise NotAParty(party)
        if party in dispute.joined:
            raise AlreadyJoined(party)
        if now >= dispute.config.t1:
            raise JoinAfterDeadline(f"joining closed at t1={dispute.config.t1}")
        if fee != dispute.fee:
            raise WrongFee(f"fee is {dispute.fee}, got {fee}")
        entry = self.escrow.deposit(dispute_id, party, fee)
        self.observe("escrow", _escrow_event(entry))
        dispute.party_keys[party] = party_key
        dispute.joined.add(party)
        if dispute.joined == set(dispute.parties):
            self._transition(dispute, DisputeState.EVIDENCE_OPEN, now)

    def default_if_absent(self, dispute_id: int, now: int) -> str:
        """Close a dispute nobody answered: initiator wins by default and
        every deposit goes back."""
        dispute = self._get(dispute_id)
        if dispute.state != DisputeState.AWAITING_JOIN:
            raise WrongState(f"no default from {dispute.state.value}")
        if now < dispute.config.t1:
            raise TooEarly(f"joining stays open until t1={dispute.config.t1}")
        self._refund_joined(dispute)
        dispute.default_winner = dispute.initiator
        self._transition(dispute, DisputeState.DEFAULT_JUDGMENT, now)
        return dispute.initiator

    def submit_evidence(
        self, dispute_id: int, party: str, content_hash: bytes, label: str, now: int
    ) -> EvidenceRef:
        dispute = self._get(dispute_id)
        self._sync(dispute, now)
        if dispute.state != DisputeState.EVIDENCE_OPEN:
            raise WrongState(f"evidence not accepted in {dispute.state.value}")
        if party not in dispute.parties:
            raise NotAParty(party)
        ref = EvidenceRef(party, content_hash, label)
        dispute.evidence.append(ref)
        self.observe(
            "evidence",
            {
                "dispute_id": dispute_id,
                "party": party,
                "content_hash": content_hash,
                "label": label,
            },
        )
        return ref

    # -- judges and phase 1 --------------------------------------------------

    def enroll_judge(self, dispute_id: int, signal: Signal, now: int) -> int:
        """Admit an anonymous juror: the signal proves group membership and
        delivers the fresh ballot key; its nullifier burns the one
        enrollment this identity gets for this dispute."""
        dispute = self._get(dispute_id)
        self._sync(dispute, now)
        if now >= dispute.config.t1:
            raise EnrollmentClosed(f"enrollment closed at t1={dispute.config.t1}")
        if dispute.state != DisputeState.EVIDENCE_OPEN:
            raise WrongState(f"cannot enroll in {dispute.state.value}")
        if signal.external_nullifier != enrollment_scope(dispute_id):
            raise InvalidSignal("BadScope")
        try:
            ballot_key = PublicKey.decode(signal.data)
        except InvalidKey:
            raise InvalidSignal("BadKey") from None
        poll = dispute.phase1_poll
        assert poll is not None
        if poll.has_key(ballot_key):
            # refuse before burning the nullifier
            raise InvalidSignal("DuplicateKey")
        verdict = self.group.verify_signal(signal)
        if not verdict.ok:
            raise InvalidSignal(verdict.reason or "BadMembership")
        voter = poll.register_voter(ballot_key, credits=1)
        self.observe(
            "judge_enrolled",
            {
                "dispute_id": dispute_id,
                "registration_index": voter.registration_index,
                "nullifier_hash": signal.nullifier_hash,
                "root": signal.claimed_root,
            },
        )
        return voter.registration_index

    def submit_phase1_ballot(
        self, dispute_id: int, ciphertext: Ciphertext, now: int
    ) -> int:
        dispute = self._get(dispute_id)
        self._sync(dispute, now)
        if dispute.state not in (
            DisputeState.EVIDENCE_OPEN,
            DisputeState.PHASE1_VOTING,
        ):
            raise WrongState(f"no Phase-1 intake in {dispute.state.value}")
        poll = dispute.phase1_poll
        assert poll is not None
        index = poll.submit_message(ciphertext, now)
        self.observe(
            "ballot",
            {
                "dispute_id": dispute_id,
                "poll_id": poll.poll_id,
                "arrival_index": index,
                "ciphertext": ciphertext.encode(),
            },
        )
        return index

    def close_phase1(self, dispute_id: int, now: int) -> str:
        """Returns "tallied", "extended", or "aborted"."""
        dispute = self._get(dispute_id)
        self._sync(dispute, now)
        if dispute.state != DisputeState.PHASE1_VOTING:
            raise WrongState(f"cannot close Phase 1 from {dispute.state.value}")
        poll = dispute.phase1_poll
        assert poll is not None
        if now < poll.deadline:
            raise TooEarly(f"Phase 1 runs until {poll.deadline}")

        preview = poll.preview_valid_votes(self.coordinator)
        ballots, proposals = self._extract_phase1(dispute, preview)

        if len(ballots) >= dispute.config.min_judges:
            poll.close(now)
            poll.process_messages(self.coordinator)
            commitment = poll.commit_tally(poll.tally, self.rng)
            self.observe(
                "tally_commitment",
                {
                    "dispute_id": dispute_id,
                    "poll_id": poll.poll_id,
                    "digest": commitment.digest,
                },
            )
            dispute.phase1_tally = tally_phase1(ballots, dispute.parties)
            dispute.proposals = proposals
            self._transition(dispute, DisputeState.PHASE1_TALLIED, now)
            return "tallied"

        if not dispute.extension_used:
            dispute.extension_used = True
            new_deadline = poll.deadline + dispute.config.extension_value
            poll.extend_deadline(new_deadline)
            dispute.t2_effective = new_deadline
            self.observe(
                "deadline_extended",
                {"dispute_id": dispute_id, "new_deadline": new_deadline},
            )
            return "extended"

        self._refund_joined(dispute)
        self._transition(dispute, DisputeState.ABORTED, now)
        return "aborted"

    def _extract_phase1(
        self, dispute: Dispute, final_states: Sequence[VoterFinalState]
    ) -> tuple[list[Phase1Ballot], list[EngineProposal]]:
        """Interpret final juror votes. A well-formed ballot names exactly
        one party, spends exactly one credit, and carries a proposal hash;
        anything else counts as not having voted."""
        ballots: list[Phase1Ballot] = []
        raw: list[tuple[int, int, bytes]] = []  # (arrival, author, text_hash)
        for state in final_states:
            vote = state.vote
            if vote is None:
                continue
            if len(vote.vote_option) != 1 or vote.vote_amount != (1,):
                continue
            option = vote.vote_option[0]
            if not 0 <= option < len(dispute.parties):
                continue
            if len(vote.memo) != DIGEST_SIZE:
                continue
            ballots.append(
                Phase1Ballot(
                    dispute.parties[option],
                    Proposal(vote.memo, state.registration_index),
                )
            )
            raw.append((vote.arrival_index, state.registration_index, vote.memo))
        raw.sort()
        proposals = [
            EngineProposal(
                proposal_id=position,
                text_hash=text_hash,
                author_registration_index=author,
                arrival_index=arrival,
            )
            for position, (arrival, author, text_hash) in enumerate(raw)
        ]
        return ballots, proposals

    # -- phase 2 -----------------------------------------------------------

    def start_phase2(self, dispute_id: int, now: int) -> MaciPoll:
        """Open the runoff: reveal Phase-1 scores, register the parties as
        voters funded by their own scores."""
        dispute = self._get(dispute_id)
        if dispute.state != DisputeState.PHASE1_TALLIED:
            raise WrongState(f"cannot start Phase 2 from {dispute.state.value}")
        phase1_poll = dispute.phase1_poll
        assert phase1_poll is not None and dispute.phase1_tally is not None
        tally, salt = phase1_poll.publish_tally()
        self.observe(
            "tally_published",
            {
                "dispute_id": dispute_id,
                "poll_id": phase1_poll.poll_id,
                "tally": tally,
                "salt": salt,
            },
        )
        deadline = now + dispute.config.phase2_window_value
        poll = MaciPoll(
            dispute.dispute_id * 2 + 1,
            self.coordinator.public,
            deadline=deadline,
            cost_rule="quadratic",
        )
        for party in dispute.parties:
            poll.register_voter(
                dispute.party_keys[party],
                credits=dispute.phase1_tally.scores[party],
            )
        dispute.phase2_poll = poll
        dispute.phase2_deadline = deadline
        self._transition(dispute, DisputeState.PHASE2_VOTING, now)
        return poll

    def submit_phase2_ballot(
        self, dispute_id: int, ciphertext: Ciphertext, now: int
    ) -> int:
        dispute = self._get(dispute_id)
        if dispute.state != DisputeState.PHASE2_VOTING:
            raise WrongState(f"no Phase-2 intake in {dispute.state.value}")
        poll = dispute.phase2_poll
        assert poll is not None
        index = poll.submit_message(ciphertext, now)
        self.observe(
            "ballot",
            {
                "dispute_id": dispute_id,
                "poll_id": poll.poll_id,
                "arrival_index": index,
                "ciphertext": ciphertext.encode(),
            },
        )
        return index

    def close_phase2(self, dispute_id: int, now: int) -> Phase2Tally:
        dispute = self._get(dispute_id)
        if dispute.state != DisputeState.PHASE2_VOTING:
            raise WrongState(f"cannot close Phase 2 from {dispute.state.value}")
        poll = dispute.phase2_poll
        assert poll is not None
        if now < poll.deadline:
            raise TooEarly(f"Phase 2 runs until {poll.deadline}")
        poll.close(now)
        final_states, _ = poll.process_messages(self.coordinator)
        commitment = poll.commit_tally(poll.tally, self.rng)
        self.observe(
            "tally_commitment",
            {
                "dispute_id": dispute_id,
                "poll_id": poll.poll_id,
                "digest": commitment.digest,
            },
        )
        allocations = self._extract_phase2(dispute, final_states)
        order = [p.proposal_id for p in dispute.proposals]
        dispute.phase2_tally = tally_phase2(allocations, order)
        dispute.winning_proposal_id = dispute.phase2_tally.winner
        tally, salt = poll.publish_tally()
        self.observe(
            "tally_published",
            {
                "dispute_id": dispute_id,
                "poll_id": poll.poll_id,
                "tally": tally,
                "salt": salt,
            },
        )
        self._transition(dispute, DisputeState.RESOLVED, now)
        return dispute.phase2_tally

    def _extract_phase2(
        self, dispute: Dispute, final_states: Sequence[VoterFinalState]
    ) -> list[QuadraticAllocation]:
        known = {p.proposal_id for p in dispute.proposals}
        allocations = []
        for state in final_states:
            vote = state.vote
            if vote is None:
                continue
            party = dispute.parties[state.registration_index]
            if any(option not in known for option in vote.vote_option):
                dispute.dropped_allocations.append(party)
                continue
            allocations.append(
                QuadraticAllocation(
                    party, dict(zip(vote.vote_option, vote.vote_amount))
                )
            )
        return allocations

    # -- settlement -----------------------------------------------------------

    def settle(self, dispute_id: int, winning_judge: str) -> EscrowEntry:
        """Pay the escrowed pool (n*f) to the winning juror's wallet.
        Authorship of the winning proposal is the caller's claim to check —
        see the incentives layer."""
        dispute = self._get(dispute_id)
        if dispute.state != DisputeState.RESOLVED or dispute.settled:
            raise WrongState("settle requires a freshly resolved dispute")
        pool = dispute.fee * len(dispute.parties)
        entry = self.escrow.payout(dispute_id, winning_judge, pool)
        dispute.settled = True
        self.observe("escrow", _escrow_event(entry))
        return entry

    def _refund_joined(self, dispute: Dispute) -> None:
        for party in dispute.parties:
            if party in dispute.joined:
                entry = self.escrow.refund(dispute.dispute_id, party, dispute.fee)
                self.observe("escrow", _escrow_event(entry))


def _escrow_event(entry: EscrowEntry) -> dict:
    return {
        "dispute_id": entry.dispute_id,
        "kind": entry.kind,
        "actor": entry.actor,
        "amount": entry.amount,
    }
