"""Tally rules for both phases: pure functions, no I/O, no crypto.

Phase 1 is one-juror-one-vote over the parties, each ballot carrying the
juror's proposed resolution. Phase 2 is quadratic voting by the parties
over those proposals: casting v votes on a proposal costs v² credits,
negative votes allowed, ties broken toward the earliest-submitted
proposal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import (
    REASON_OVER_BUDGET,
    UnknownParty,
    UnknownProposal,
    Verdict,
)


@dataclass(frozen=True)
class Proposal:
    """A juror's proposed resolution: content hash plus author pseudonym."""

    text_hash: bytes
    judge_registration_index: int


@dataclass(frozen=True)
class Phase1Ballot:
    party_choice: str
    proposal: Proposal


@dataclass(frozen=True)
class Phase1Tally:
    scores: Mapping[str, int]
    total_ballots: int


def tally_phase1(
    ballots: Iterable[Phase1Ballot], parties: Sequence[str]
) -> Phase1Tally:
    """Count one vote per ballot; every party appears in scores, even at 0."""
    scores = {party: 0 for party in parties}
    total = 0
    for ballot in ballots:
        if ballot.party_choice not in scores:
            raise UnknownParty(ballot.party_choice)
        scores[ballot.party_choice] += 1
        total += 1
    return Phase1Tally(scores, total)


# ---- quadratic phase -----------------------------------------------------------


@dataclass(frozen=True)
class QuadraticAllocation:
    """One party's Phase-2 ballot: signed votes per proposal id."""

    voter: str
    votes: Mapping[int, int]


def quadratic_cost(votes: Mapping[int, int]) -> int:
    """Credits consumed by an allocation: sum of squared vote counts."""
    return sum(v * v for v in votes.values())


def validate_allocation(
    allocation: QuadraticAllocation, credits: int
) -> Verdict:
    """Budget rule: the whole allocation must fit, not each entry alone."""
    if quadratic_cost(allocation.votes) > credits:
        return Verdict.reject(REASON_OVER_BUDGET)
    return Verdict.accept()


@dataclass(frozen=True)
class Phase2Tally:
    proposal_scores: Mapping[int, int]
    winner: int


def tally_phase2(
    allocations: Iterable[QuadraticAllocation],
    proposals_in_submission_order: Sequence[int],
) -> Phase2Tally:
    """Sum signed votes per proposal; highest score wins, earliest-submitted
    proposal wins ties. Works with zero allocations (all scores 0)."""
    order = list(proposals_in_submission_order)
    if not order:
        raise ValueError("cannot tally without proposals")
    if len(set(order)) != len(order):
        raise ValueError("duplicate proposal id in submission order")
    scores = {proposal_id: 0 for proposal_id in order}
    for allocation in allocations:
        for proposal_id, votes in allocation.votes.items():
            if proposal_id not in scores:
                raise UnknownProposal(str(proposal_id))
            scores[proposal_id] += votes
    winner = max(order, key=lambda pid: (scores[pid], -order.index(pid)))
    return Phase2Tally(scores, winner)
