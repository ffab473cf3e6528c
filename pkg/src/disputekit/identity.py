"""Personhood registry and the anonymous membership group.

Two layers keep jurors simultaneously unique and anonymous:

* ``PohRegistry`` — a mock proof-of-humanity court: register with a video
  hash and a voucher, survive a challenge window, come out Approved.
* ``SemaphoreGroup`` — a Merkle tree of identity commitments. Approved
  humans insert a commitment once; afterwards they act by emitting
  *signals* that prove membership (path to a known root) without naming
  the leaf owner, and a nullifier hash burns one action per identity per
  scope.

The registry binds human ids to leaves forever: a removed (banned) member
cannot re-enter with a fresh commitment.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import (
    AlreadyJoined,
    ChallengeTooLate,
    DuplicateHuman,
    IndexOutOfRange,
    NotAMember,
    NotApproved,
    REASON_BAD_MEMBERSHIP,
    REASON_DOUBLE_SIGNAL,
    Verdict,
    VoucherNotApproved,
)
from .primitives import (
    MerklePath,
    MerkleTree,
    ZERO_DIGEST,
    hash_bytes,
    merkle_verify,
    random_bytes,
)


class RegistryStatus(Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    CHALLENGED = "Challenged"
    REJECTED = "Rejected"


@dataclass
class HumanRecord:
    human_id: str
    video_hash: bytes
    voucher: Optional[str]
    status: RegistryStatus
    challenge_deadline: int
    challenge_reason: Optional[str] = None


class PohRegistry:
    """Vouch-and-challenge personhood registry (adjudication simplified:
    any challenge inside the window sinks the registration)."""

    def __init__(self, challenge_window: int = 10):
        if challenge_window < 1:
            raise ValueError("challenge window must be positive")
        self.challenge_window = challenge_window
        self.records: dict[str, HumanRecord] = {}

    def seed_approved(self, human_id: str) -> HumanRecord:
        """Bootstrap a genesis human (someone has to vouch first)."""
        if self._active(human_id) is not None:
            raise DuplicateHuman(human_id)
        record = HumanRecord(
            human_id, ZERO_DIGEST, None, RegistryStatus.APPROVED, 0
        )
        self.records[human_id] = record
        return record

    def _active(self, human_id: str) -> Optional[HumanRecord]:
        record = self.records.get(human_id)
        if record is not None and record.status != RegistryStatus.REJECTED:
            return record
        return None

    def is_approved(self, human_id: str) -> bool:
        record = self.records.get(human_id)
        return record is not None and record.status == RegistryStatus.APPROVED

    def register(
        self, human_id: str, video_hash: bytes, voucher_id: str, now: int
    ) -> HumanRecord:
        if self._active(human_id) is not None:
            raise DuplicateHuman(human_id)
        if not self.is_approved(voucher_id):
            raise VoucherNotApproved(voucher_id)
        record = HumanRecord(
            human_id,
            video_hash,
            voucher_id,
            RegistryStatus.PENDING,
            now + self.challenge_window,
        )
        self.records[human_id] = record
        return record

    def challenge(self, human_id: str, reason: str, now: int) -> HumanRecord:
        record = self.records.get(human_id)
        if record is None or record.status != RegistryStatus.PENDING:
            raise ChallengeTooLate(f"no pending registration for {human_id}")
        if now >= record.challenge_deadline:
            raise ChallengeTooLate(
                f"window closed at {record.challenge_deadline}, now {now}"
            )
        record.status = RegistryStatus.CHALLENGED
        record.challenge_reason = reason
        return record

    def finalize(self, now: int) -> list[HumanRecord]:
        """Settle every record whose window has run: challenged ones are
        rejected, unchallenged pending ones past deadline are approved.
        Returns the records that changed."""
        changed = []
        for record in self.records.values():
            if record.status == RegistryStatus.CHALLENGED:
                record.status = RegistryStatus.REJECTED
                changed.append(record)
            elif (
                record.status == RegistryStatus.PENDING
                and now >= record.challenge_deadline
            ):
                record.status = RegistryStatus.APPROVED
                changed.append(record)
        return changed


# ---- identities and signals ---------------------------------------------------

@dataclass(frozen=True)
class Identity:
    """Juror identity: two secrets and their public commitment.

    secret = hash(trapdoor || nullifier); commitment = hash(secret). Only
    the commitment ever enters the tree.
    """

    trapdoor: bytes
    nullifier: bytes
    secret: bytes
    commitment: bytes

    @staticmethod
    def generate(rng: Optional[random.Random] = None) -> "Identity":
        trapdoor = random_bytes(32, rng)
        nullifier = random_bytes(32, rng)
        secret = hash_bytes(trapdoor + nullifier)
        return Identity(trapdoor, nullifier, secret, hash_bytes(secret))


def nullifier_hash(identity: Identity, external_nullifier: int) -> bytes:
    """One-per-scope tag: hash(nullifier || scope). Same identity and scope
    always collide; different scopes never do."""
    if not 0 <= external_nullifier < 1 << 64:
        raise ValueError("external nullifier must fit in 64 bits")
    return hash_bytes(identity.nullifier + external_nullifier.to_bytes(8, "big"))


@dataclass(frozen=True)
class Signal:
    """Anonymous group action: payload plus a membership proof and the
    double-signal tag. Carries no direct pointer to who sent it (the leaf
    index in the path is pseudonymous)."""

    data: bytes
    membership_path: MerklePath
    claimed_root: bytes
    external_nullifier: int
    nullifier_hash: bytes


class SemaphoreGroup:
    """Merkle tree of commitments with double-signal protection."""

    def __init__(
        self,
        group_id: str,
        registry: PohRegistry,
        tree_depth: int = 20,
        zero_value: bytes = ZERO_DIGEST,
    ):
        self.group_id = group_id
        self.registry = registry
        self.tree = MerkleTree(tree_depth, zero_value)
        self._zero_value = zero_value
        # human_id -> leaf index; never deleted, so bans are permanent.
        self.member_bindings: dict[str, int] = {}
        self._leaf_by_commitment: dict[bytes, int] = {}
        self.seen_nullifier_hashes: set[bytes] = set()

    @property
    def root(self) -> bytes:
        return self.tree.root

    def join(self, human_id: str, identity_commitment: bytes) -> int:
        """Admit an approved, never-before-seen human; returns the leaf index."""
        if not self.registry.is_approved(human_id):
            raise NotApproved(human_id)
        if human_id in self.member_bindings:
            raise AlreadyJoined(human_id)
        index = self.tree.insert(identity_commitment)
        self.member_bindings[human_id] = index
        self._leaf_by_commitment[identity_commitment] = index
        return index

    def remove(self, leaf_index: int) -> bytes:
        """Zero out a leaf (ban); the human's binding stays so they cannot
        rejoin. Returns the new root."""
        commitment = self.tree.leaf(leaf_index)
        new_root = self.tree.update(leaf_index, self._zero_value)
        self._leaf_by_commitment.pop(commitment, None)
        return new_root

    def leaf_index_of(self, identity: Identity) -> int:
        index = self._leaf_by_commitment.get(identity.commitment)
        if index is None:
            raise NotAMember("commitment is not an occupied leaf")
        return index

    def verify_signal(self, signal: Signal) -> Verdict:
        """Accept iff the path proves membership under the current root and
        the nullifier hash is fresh. Accepting records the nullifier."""
        if signal.claimed_root != self.root:
            return Verdict.reject(REASON_BAD_MEMBERSHIP)
        try:
            leaf = self.tree.leaf(signal.membership_path.leaf_index)
        except IndexOutOfRange:
            return Verdict.reject(REASON_BAD_MEMBERSHIP)
        if leaf == self._zero_value:
            return Verdict.reject(REASON_BAD_MEMBERSHIP)
        if not merkle_verify(signal.claimed_root, leaf, signal.membership_path):
            return Verdict.reject(REASON_BAD_MEMBERSHIP)
        if signal.nullifier_hash in self.seen_nullifier_hashes:
            return Verdict.reject(REASON_DOUBLE_SIGNAL)
        self.seen_nullifier_hashes.add(signal.nullifier_hash)
        return Verdict.accept()


def create_signal(
    identity: Identity,
    group: SemaphoreGroup,
    data: bytes,
    external_nullifier: int,
) -> Signal:
    """Emit a group signal for ``identity``; raises NotAMember if its
    commitment is not an occupied leaf."""
    index = group.leaf_index_of(identity)
    return Signal(
        data=data,
        membership_path=group.tree.prove(index),
        claimed_root=group.root,
        external_nullifier=external_nullifier,
        nullifier_hash=nullifier_hash(identity, external_nullifier),
    )
