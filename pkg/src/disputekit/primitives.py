"""Hashing, keys, authenticated encryption, signatures, and the member tree.

Concrete algorithm choices (SHA-256, Ed25519, X25519, ChaCha20-Poly1305)
live behind this module's functions; nothing above it names an algorithm.
One seed yields one participant keypair that can both sign and derive
shared encryption keys — the two underlying curve keys are derived from
the seed with domain-separated hashing, so the public half is a pure
function of the seed.

All randomness is drawn through ``random_bytes`` so callers can inject a
seeded generator and replay byte-identical protocol runs.
"""
from __future__ import annotations

import hashlib
import os
import random
from dataclasses import dataclass, field
from typing import Optional

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .errors import AuthFailure, IndexOutOfRange, InvalidKey, TreeFull

DIGEST_SIZE = 32
SEED_SIZE = 32
NONCE_SIZE = 12
TAG_SIZE = 16
ZERO_DIGEST = bytes(DIGEST_SIZE)


def hash_bytes(data: bytes) -> bytes:
    """Protocol hash: 32-byte SHA-256 digest."""
    return hashlib.sha256(data).digest()


def hash_fields(*fields_: bytes) -> bytes:
    """Hash a fixed sequence of length-prefixed fields (no concat ambiguity)."""
    h = hashlib.sha256()
    for item in fields_:
        h.update(len(item).to_bytes(4, "big"))
        h.update(item)
    return h.digest()


def random_bytes(count: int, rng: Optional[random.Random] = None) -> bytes:
    """Fresh bytes from the injected generator, or the OS if none given."""
    if rng is None:
        return os.urandom(count)
    return rng.randbytes(count)


# ---- keypairs: one seed, signing + key agreement ----------------------------

@dataclass(frozen=True)
class PublicKey:
    """Public half of a participant keypair: signing and agreement points."""

    sign_bytes: bytes
    agree_bytes: bytes

    def encode(self) -> bytes:
        return self.sign_bytes + self.agree_bytes

    @staticmethod
    def decode(data: bytes) -> "PublicKey":
        if len(data) != 64:
            raise InvalidKey(f"public key must be 64 bytes, got {len(data)}")
        return PublicKey(data[:32], data[32:])


def _signing_private(seed: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(hash_fields(b"sign", seed))


def _agreement_private(seed: bytes) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(hash_fields(b"agree", seed))


@dataclass(frozen=True)
class KeyPair:
    """Participant keypair; ``seed`` is the only secret material."""

    seed: bytes
    public: PublicKey = field(compare=False)

    @staticmethod
    def from_seed(seed: bytes) -> "KeyPair":
        if len(seed) != SEED_SIZE:
            raise InvalidKey(f"seed must be {SEED_SIZE} bytes")
        sign_pub = _signing_private(seed).public_key().public_bytes_raw()
        agree_pub = _agreement_private(seed).public_key().public_bytes_raw()
        return KeyPair(seed, PublicKey(sign_pub, agree_pub))

    @staticmethod
    def generate(rng: Optional[random.Random] = None) -> "KeyPair":
        return KeyPair.from_seed(random_bytes(SEED_SIZE, rng))


def key_agree(secret: KeyPair, public: PublicKey) -> bytes:
    """Symmetric 32-byte shared key: agree(a, B) == agree(b, A)."""
    try:
        peer = X25519PublicKey.from_public_bytes(public.agree_bytes)
        raw = _agreement_private(secret.seed).exchange(peer)
    except (ValueError, TypeError) as exc:
        raise InvalidKey(str(exc)) from exc
    return hash_fields(b"shared", raw)


def sign(secret: KeyPair, message: bytes) -> bytes:
    return _signing_private(secret.seed).sign(message)


def verify_sig(public: PublicKey, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public.sign_bytes).verify(
            signature, message
        )
        return True
    except (InvalidSignature, ValueError):
        return False


# ---- authenticated encryption ------------------------------------------------

@dataclass(frozen=True)
class Ciphertext:
    nonce: bytes
    payload: bytes
    tag: bytes

    def encode(self) -> bytes:
        return self.nonce + self.payload + self.tag

    def __len__(self) -> int:
        return len(self.nonce) + len(self.payload) + len(self.tag)


def encrypt(
    key: bytes, plaintext: bytes, rng: Optional[random.Random] = None
) -> Ciphertext:
    nonce = random_bytes(NONCE_SIZE, rng)
    sealed = ChaCha20Poly1305(key).encrypt(nonce, plaintext, None)
    return Ciphertext(nonce, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])


def decrypt(key: bytes, ciphertext: Ciphertext) -> bytes:
    try:
        return ChaCha20Poly1305(key).decrypt(
            ciphertext.nonce, ciphertext.payload + ciphertext.tag, None
        )
    except InvalidTag as exc:
        raise AuthFailure("ciphertext failed authentication") from exc


# ---- fixed-depth Merkle tree --------------------------------------------------

@dataclass(frozen=True)
class MerklePath:
    """Bottom-up sibling digests for one leaf; index selects left/right."""

    leaf_index: int
    siblings: tuple[bytes, ...]


class MerkleTree:
    """Append-only fixed-depth hash tree; absent subtrees hash a zero value.

    Capacity is 2**depth leaves. Root of the empty tree is the depth-th
    iterated zero-subtree digest, and updating any occupied slot (used for
    member removal) changes the root.
    """

    def __init__(self, depth: int = 20, zero_value: bytes = ZERO_DIGEST):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.zeros = [zero_value]
        for _ in range(depth):
            self.zeros.append(hash_bytes(self.zeros[-1] + self.zeros[-1]))
        self._leaves: list[bytes] = []
        self._levels: list[list[bytes]] | None = None

    @property
    def capacity(self) -> int:
        return 1 << self.depth

    @property
    def leaf_count(self) -> int:
        return len(self._leaves)

    def leaf(self, index: int) -> bytes:
        if not 0 <= index < len(self._leaves):
            raise IndexOutOfRange(f"no leaf at index {index}")
        return self._leaves[index]

    def insert(self, leaf: bytes) -> int:
        if len(self._leaves) >= self.capacity:
            raise TreeFull(f"tree holds at most {self.capacity} leaves")
        self._leaves.append(leaf)
        self._levels = None
        return len(self._leaves) - 1

    def update(self, index: int, leaf: bytes) -> bytes:
        if not 0 <= index < len(self._leaves):
            raise IndexOutOfRange(f"no leaf at index {index}")
        self._leaves[index] = leaf
        self._levels = None
        return self.root

    def _node(self, level: int, index: int) -> bytes:
        nodes = self._all_levels()[level]
        return nodes[index] if index < len(nodes) else self.zeros[level]

    def _all_levels(self) -> list[list[bytes]]:
        if self._levels is None:
            levels = [list(self._leaves)]
            for depth_idx in range(self.depth):
                prev, zero = levels[-1], self.zeros[depth_idx]
                nxt = []
                for i in range(0, len(prev), 2):
                    left = prev[i]
                    right = prev[i + 1] if i + 1 < len(prev) else zero
                    nxt.append(hash_bytes(left + right))
                levels.append(nxt)
            self._levels = levels
        return self._levels

    @property
    def root(self) -> bytes:
        top = self._all_levels()[self.depth]
        return top[0] if top else self.zeros[self.depth]

    def prove(self, index: int) -> MerklePath:
        if not 0 <= index < len(self._leaves):
            raise IndexOutOfRange(f"no leaf at index {index}")
        siblings = []
        node = index
        for level in range(self.depth):
            siblings.append(self._node(level, node ^ 1))
            node >>= 1
        return MerklePath(index, tuple(siblings))


def merkle_verify(root: bytes, leaf: bytes, path: MerklePath) -> bool:
    """Fold the leaf up the path and compare with the claimed root."""
    node = leaf
    index = path.leaf_index
    for sibling in path.siblings:
        if index & 1:
            node = hash_bytes(sibling + node)
        else:
            node = hash_bytes(node + sibling)
        index >>= 1
    return node == root
