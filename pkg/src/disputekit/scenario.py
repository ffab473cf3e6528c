"""Deterministic simulation world plus a scripted scenario runner.

Two audiences share this module. The `World` is the programmatic surface:
one personhood registry, one juror group, one coordinator, one escrow, and
any number of disputes, all drawing randomness from a single seeded
generator so a run can be replayed bit-for-bit. The scenario runner drives
a `World` from a plain-dict script (usually parsed from JSON) and produces
a JSON-able report.

Everything a chain observer could see goes through the `AdversaryView`:
an append-only log of schema-checked public events. Ballot plaintexts,
identity secrets, and pre-publication tallies never appear there — tests
and attack probes read the view to confirm exactly that.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

from .engine import (
    DisputeConfig,
    DisputeEngine,
    Escrow,
    enrollment_scope,
)
from .errors import MalformedScript, ProtocolError
from .identity import Identity, PohRegistry, SemaphoreGroup, create_signal
from .incentives import (
    ReputationLedger,
    SbtRegistry,
    Thresholds,
    apply_phase2_scores,
    distribute_fee,
    enforce_thresholds,
    issue_party_sbt,
    sign_claim,
)
from .maci import build_message
from .primitives import KeyPair, hash_bytes, key_agree

# ---- the public record ---------------------------------------------------------

# Field layout of every event kind an observer can ever see. Appends are
# checked against this table so nothing secret can leak in by accident.
EVENT_SCHEMAS: dict[str, dict[str, type]] = {
    "poh_status": {"human": str, "status": str},
    "group_join": {"human": str, "leaf_index": int, "commitment": bytes, "root": bytes},
    "group_remove": {"leaf_index": int, "root": bytes},
    "dispute_state": {"dispute_id": int, "old": str, "new": str, "time": int},
    "escrow": {"dispute_id": int, "kind": str, "actor": str, "amount": int},
    "evidence": {"dispute_id": int, "party": str, "content_hash": bytes, "label": str},
    "judge_enrolled": {
        "dispute_id": int,
        "registration_index": int,
        "nullifier_hash": bytes,
        "root": bytes,
    },
    "ballot": {
        "dispute_id": int,
        "poll_id": int,
        "arrival_index": int,
        "ciphertext": bytes,
    },
    "deadline_extended": {"dispute_id": int, "new_deadline": int},
    "tally_commitment": {"dispute_id": int, "poll_id": int, "digest": bytes},
    "tally_published": {
        "dispute_id": int,
        "poll_id": int,
        "tally": dict,
        "salt": bytes,
    },
}


@dataclass(frozen=True)
class PublicEvent:
    seq: int
    kind: str
    payload: Mapping[str, Any]


class AdversaryView:
    """Append-only log of everything on the public record."""

    def __init__(self) -> None:
        self.events: list[PublicEvent] = []

    def append(self, kind: str, payload: Mapping[str, Any]) -> None:
        schema = EVENT_SCHEMAS.get(kind)
        if schema is None:
            raise ValueError(f"unknown public event kind {kind!r}")
        if set(payload) != set(schema):
            raise ValueError(
                f"{kind} payload fields {sorted(payload)} != {sorted(schema)}"
            )
        for name, expected in schema.items():
            value = payload[name]
            if expected is dict:
                if not isinstance(value, dict) or not all(
                    isinstance(k, int) and isinstance(v, int)
                    for k, v in value.items()
                ):
                    raise ValueError(f"{kind}.{name} must be an int->int map")
            elif not isinstance(value, expected) or isinstance(value, bool):
                raise ValueError(
                    f"{kind}.{name} must be {expected.__name__}, "
                    f"got {type(value).__name__}"
                )
        self.events.append(PublicEvent(len(self.events), kind, dict(payload)))

    def of_kind(self, kind: str) -> list[PublicEvent]:
        return [event for event in self.events if event.kind == kind]

    def kinds(self) -> list[str]:
        return [event.kind for event in self.events]

    def as_jsonable(self) -> list[list[Any]]:
        return [
            [event.seq, event.kind, _jsonable(event.payload)]
            for event in self.events
        ]


def _jsonable(value: Any) -> Any:
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


# ---- the world -------------------------------------------------------------------


class World:
    """Everything one simulation run touches, seeded once.

    Honest actors draw from `rng`; adversarial probes draw from
    `adversary_rng` so a blocked attack cannot shift the honest sequence
    of keys, nonces, and salts.
    """

    def __init__(
        self,
        seed: int,
        *,
        genesis_humans: Sequence[str] = (),
        challenge_window: int = 10,
        tree_depth: int = 12,
        group_id: int = 1,
        thresholds: Optional[Thresholds] = None,
    ):
        self.seed = seed
        self.rng = random.Random(seed)
        self.adversary_rng = random.Random(f"{seed}:adversary")
        self.view = AdversaryView()
        self.registry = PohRegistry(challenge_window=challenge_window)
        self.group = SemaphoreGroup(
            group_id=group_id, registry=self.registry, tree_depth=tree_depth
        )
        self.coordinator = KeyPair.generate(self.rng)
        self.escrow = Escrow()
        self.engine = DisputeEngine(
            self.coordinator,
            self.group,
            self.escrow,
            rng=self.rng,
            observer=self.view.append,
        )
        self.reputation = ReputationLedger()
        self.sbts = SbtRegistry()
        self.thresholds = thresholds if thresholds is not None else Thresholds()
        self.identities: dict[str, Identity] = {}
        self.party_keys: dict[str, KeyPair] = {}
        # per (dispute, judge): fixed encryption channel vs rotating signer
        self.channel_keys: dict[tuple[int, str], KeyPair] = {}
        self.signer_keys: dict[tuple[int, str], KeyPair] = {}
        self.reg_index: dict[tuple[int, str], int] = {}
        self.judge_by_index: dict[int, dict[int, str]] = {}
        for human in genesis_humans:
            self.registry.seed_approved(human)
            self.view.append("poh_status", {"human": human, "status": "Approved"})

    # -- identity layer ---------------------------------------------------

    def poh_register(self, human: str, voucher: str, now: int) -> int:
        record = self.registry.register(
            human, hash_bytes(f"video:{human}".encode()), voucher, now
        )
        self.view.append("poh_status", {"human": human, "status": record.status.value})
        return record.challenge_deadline

    def poh_challenge(self, human: str, reason: str, now: int) -> str:
        record = self.registry.challenge(human, reason, now)
        self.view.append("poh_status", {"human": human, "status": record.status.value})
        return record.status.value

    def poh_finalize(self, now: int) -> dict[str, str]:
        changed = self.registry.finalize(now)
        for record in changed:
            self.view.append(
                "poh_status",
                {"human": record.human_id, "status": record.status.value},
            )
        return {record.human_id: record.status.value for record in changed}

    def group_join(self, human: str) -> int:
        identity = Identity.generate(self.rng)
        leaf = self.group.join(human, identity.commitment)
        self.identities[human] = identity
        self.view.append(
            "group_join",
            {
                "human": human,
                "leaf_index": leaf,
                "commitment": identity.commitment,
                "root": self.group.root,
            },
        )
        return leaf

    # -- dispute lifecycle -------------------------------------------------

    def _party_key(self, party: str) -> KeyPair:
        pair = self.party_keys.get(party)
        if pair is None:
            pair = KeyPair.generate(self.rng)
            self.party_keys[party] = pair
        return pair

    def open_dispute(
        self,
        initiator: str,
        respondents: Sequence[str],
        fee: int,
        *,
        t1: int,
        t2: int,
        min_judges: int,
        extension: Optional[int] = None,
        phase2_window: Optional[int] = None,
        now: int,
    ) -> int:
        config = DisputeConfig(
            t1=t1,
            t2=t2,
            min_judges=min_judges,
            extension=extension,
            phase2_window=phase2_window,
        )
        dispute = self.engine.open_dispute(
            initiator,
            list(respondents),
            fee,
            config,
            self._party_key(initiator).public,
            now,
        )
        return dispute.dispute_id

    def join_dispute(self, dispute_id: int, party: str, fee: int, now: int) -> None:
        self.engine.join_dispute(
            dispute_id, party, fee, self._party_key(party).public, now
        )

    def submit_evidence(
        self, dispute_id: int, party: str, label: str, text: str, now: int
    ) -> str:
        ref = self.engine.submit_evidence(
            dispute_id, party, hash_bytes(text.encode()), label, now
        )
        return ref.content_hash.hex()

    def default_if_absent(self, dispute_id: int, now: int) -> str:
        return self.engine.default_if_absent(dispute_id, now)

    # -- judging -----------------------------------------------------------

    def enroll_judge(self, dispute_id: int, human: str, now: int) -> int:
        identity = self.identities[human]
        ballot_key = KeyPair.generate(self.rng)
        signal = create_signal(
            identity,
            self.group,
            ballot_key.public.encode(),
            enrollment_scope(dispute_id),
        )
        index = self.engine.enroll_judge(dispute_id, signal, now)
        self.channel_keys[(dispute_id, human)] = ballot_key
        self.signer_keys[(dispute_id, human)] = ballot_key
        self.reg_index[(dispute_id, human)] = index
        self.judge_by_index.setdefault(dispute_id, {})[index] = human
        return index

    def phase1_vote(
        self,
        dispute_id: int,
        human: str,
        party: str,
        proposal_text: str,
        now: int,
        *,
        rotate_key: bool = False,
    ) -> int:
        dispute = self.engine.disputes[dispute_id]
        option = dispute.parties.index(party)
        channel = self.channel_keys[(dispute_id, human)]
        signer = self.signer_keys[(dispute_id, human)]
        fresh = KeyPair.generate(self.rng) if rotate_key else None
        ciphertext = build_message(
            signer=signer,
            shared_key=key_agree(channel, self.coordinator.public),
            voter_registration_index=self.reg_index[(dispute_id, human)],
            votes={option: 1},
            new_public_key=fresh.public if fresh else None,
            memo=hash_bytes(proposal_text.encode()),
            rng=self.rng,
        )
        index = self.engine.submit_phase1_ballot(dispute_id, ciphertext, now)
        if fresh is not None:
            self.signer_keys[(dispute_id, human)] = fresh
        return index

    def close_phase1(self, dispute_id: int, now: int) -> str:
        return self.engine.close_phase1(dispute_id, now)

    def start_phase2(self, dispute_id: int, now: int) -> dict[str, int]:
        self.engine.start_phase2(dispute_id, now)
        dispute = self.engine.disputes[dispute_id]
        assert dispute.phase1_tally is not None
        return dict(dispute.phase1_tally.scores)

    def phase2_vote(
        self,
        dispute_id: int,
        party: str,
        allocations: Mapping[Any, int],
        now: int,
    ) -> int:
        dispute = self.engine.disputes[dispute_id]
        pair = self._party_key(party)
        ciphertext = build_message(
            signer=pair,
            shared_key=key_agree(pair, self.coordinator.public),
            voter_registration_index=dispute.parties.index(party),
            votes={int(option): int(amount) for option, amount in allocations.items()},
            rng=self.rng,
        )
        return self.engine.submit_phase2_ballot(dispute_id, ciphertext, now)

    def close_phase2(self, dispute_id: int, now: int) -> dict[str, Any]:
        tally = self.engine.close_phase2(dispute_id, now)
        return {
            "winner": tally.winner,
            "scores": {str(k): v for k, v in tally.proposal_scores.items()},
        }

    # -- aftermath -----------------------------------------------------------

    def claim_fee(self, dispute_id: int, human: str, wallet: str) -> int:
        signer = self.signer_keys[(dispute_id, human)]
        signature = sign_claim(signer, dispute_id, wallet)
        entry = distribute_fee(self.engine, dispute_id, wallet, signature)
        return entry.amount

    def apply_reputation(self, dispute_id: int) -> dict[str, int]:
        dispute = self.engine.disputes[dispute_id]
        return apply_phase2_scores(
            self.reputation, dispute, self.judge_by_index.get(dispute_id, {})
        )

    def enforce_thresholds(self) -> list[tuple[str, str]]:
        before = {judge: self.group.member_bindings.get(judge) for judge in
                  self.reputation.scores}
        actions = enforce_thresholds(
            self.reputation, self.thresholds, self.sbts, self.group
        )
        for action, judge in actions:
            if action == "ban" and before.get(judge) is not None:
                self.view.append(
                    "group_remove",
                    {"leaf_index": before[judge], "root": self.group.root},
                )
        return actions

    def issue_party_sbt(
        self, dispute_id: int, party: str, *, complied: bool, deadline_passed: bool
    ) -> str:
        dispute = self.engine.disputes[dispute_id]
        token = issue_party_sbt(
            self.sbts,
            dispute,
            party,
            complied=complied,
            deadline_passed=deadline_passed,
        )
        return token.kind

    # -- state summary ----------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        """Semantic state only: what the run *decided*, not how it got
        there. Two runs that agree here agree on every verdict, balance,
        and status, regardless of message traffic."""
        disputes: dict[str, Any] = {}
        for dispute in self.engine.disputes.values():
            disputes[str(dispute.dispute_id)] = {
                "state": dispute.state.value,
                "parties": list(dispute.parties),
                "fee": dispute.fee,
                "evidence": [
                    [ref.party, ref.content_hash.hex(), ref.label]
                    for ref in dispute.evidence
                ],
                "phase1_scores": (
                    dict(dispute.phase1_tally.scores)
                    if dispute.phase1_tally
                    else None
                ),
                "proposals": [
                    [p.proposal_id, p.text_hash.hex(), p.author_registration_index]
                    for p in dispute.proposals
                ],
                "phase2_scores": (
                    {str(k): v for k, v in dispute.phase2_tally.proposal_scores.items()}
                    if dispute.phase2_tally
                    else None
                ),
                "winner": dispute.winning_proposal_id,
                "default_winner": dispute.default_winner,
                "settled": dispute.settled,
            }
        actors = sorted({entry.actor for entry in self.escrow.entries})
        return {
            "poh": {
                human: record.status.value
                for human, record in self.registry.records.items()
            },
            "group_root": self.group.root.hex(),
            "group_bindings": dict(self.group.member_bindings),
            "spent_nullifiers": len(self.group.seen_nullifier_hashes),
            "disputes": disputes,
            "escrow_balances": {
                str(d): self.escrow.balance(d) for d in self.engine.disputes
            },
            "escrow_net": {
                actor: self.escrow.net_position(actor) for actor in actors
            },
            "reputation": dict(self.reputation.scores),
            "sbts": [
                list(item)
                for item in sorted(
                    (t.kind, t.subject, -1 if t.dispute_id is None else t.dispute_id)
                    for t in self.sbts.tokens
                )
            ],
        }


# ---- scripted scenarios ---------------------------------------------------------

# op name -> (world method, required fields, optional fields)
_OPS: dict[str, tuple[str, set[str], set[str]]] = {
    "poh_register": ("poh_register", {"human", "voucher"}, set()),
    "poh_challenge": ("poh_challenge", {"human", "reason"}, set()),
    "poh_finalize": ("poh_finalize", set(), set()),
    "group_join": ("group_join", {"human"}, set()),
    "open_dispute": (
        "open_dispute",
        {"initiator", "respondents", "fee", "t1", "t2", "min_judges"},
        {"extension", "phase2_window"},
    ),
    "join_dispute": ("join_dispute", {"dispute", "party", "fee"}, set()),
    "submit_evidence": ("submit_evidence", {"dispute", "party", "label", "text"}, set()),
    "default_if_absent": ("default_if_absent", {"dispute"}, set()),
    "enroll_judge": ("enroll_judge", {"dispute", "judge"}, set()),
    "phase1_vote": (
        "phase1_vote",
        {"dispute", "judge", "party", "proposal"},
        {"rotate_key"},
    ),
    "close_phase1": ("close_phase1", {"dispute"}, set()),
    "start_phase2": ("start_phase2", {"dispute"}, set()),
    "phase2_vote": ("phase2_vote", {"dispute", "party", "allocations"}, set()),
    "close_phase2": ("close_phase2", {"dispute"}, set()),
    "claim_fee": ("claim_fee", {"dispute", "judge", "wallet"}, set()),
    "apply_reputation": ("apply_reputation", {"dispute"}, set()),
    "enforce_thresholds": ("enforce_thresholds", set(), set()),
    "issue_party_sbt": (
        "issue_party_sbt",
        {"dispute", "party", "complied", "deadline_passed"},
        set(),
    ),
}

def op_signatures() -> dict[str, tuple[frozenset[str], frozenset[str]]]:
    """Public catalogue of script operations: op -> (required, optional)
    payload fields, excluding the step metadata (op, t, expect,
    expect_result). The CLI builds its published document schema from
    this, so the two layers cannot drift apart."""
    return {
        op: (frozenset(required), frozenset(optional))
        for op, (_, required, optional) in _OPS.items()
    }


# ops whose world method takes no `now`
_TIMELESS = {
    "group_join",
    "claim_fee",
    "apply_reputation",
    "enforce_thresholds",
    "issue_party_sbt",
}

_STEP_META = {"op", "t", "expect", "expect_result"}


def _call_op(world: World, op: str, step: Mapping[str, Any]) -> Any:
    method = getattr(world, _OPS[op][0])
    args = {
        key: value for key, value in step.items() if key not in _STEP_META
    }
    # script field names -> method parameter names
    renames = {"dispute": "dispute_id", "judge": "human", "proposal": "proposal_text"}
    if op in ("poh_register", "poh_challenge", "group_join"):
        renames = {}
    kwargs = {renames.get(key, key): value for key, value in args.items()}
    if op not in _TIMELESS:
        kwargs["now"] = step["t"]
    return method(**kwargs)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise MalformedScript(message)


def _validate_step(position: int, step: Any, last_t: int) -> int:
    _require(isinstance(step, Mapping), f"step {position}: not an object")
    _require("op" in step, f"step {position}: missing op")
    op = step["op"]
    _require(op in _OPS, f"step {position}: unknown op {op!r}")
    _require(
        isinstance(step.get("t"), int) and not isinstance(step.get("t"), bool),
        f"step {position}: missing integer timestamp",
    )
    _require(
        step["t"] >= last_t,
        f"step {position}: timestamps must be non-decreasing",
    )
    _, required, optional = _OPS[op]
    fields = set(step) - _STEP_META
    _require(
        required <= fields,
        f"step {position}: {op} missing {sorted(required - fields)}",
    )
    _require(
        fields <= required | optional,
        f"step {position}: {op} has unknown fields "
        f"{sorted(fields - required - optional)}",
    )
    expect = step.get("expect", "ok")
    _require(
        expect == "ok" or (isinstance(expect, str) and expect.startswith("error:")),
        f"step {position}: expect must be 'ok' or 'error:<Name>'",
    )
    return step["t"]


_CONFIG_FIELDS = {"genesis_humans", "challenge_window", "tree_depth", "group_id"}


def matches_expected(snapshot: Any, expected: Any) -> bool:
    """Deep subset match: every key in `expected` must exist and match;
    lists and scalars must be equal outright."""
    if isinstance(expected, Mapping):
        if not isinstance(snapshot, Mapping):
            return False
        return all(
            key in snapshot and matches_expected(snapshot[key], value)
            for key, value in expected.items()
        )
    return snapshot == expected


def run_scenario(script: Mapping[str, Any], *, seed: Optional[int] = None) -> dict:
    """Execute a script against a fresh world; returns the run report.

    Structural problems in the script raise MalformedScript. Protocol
    rejections do not raise — each step says what it expects ("ok" by
    default, or "error:SomeError") and the report records whether
    expectations held. `seed` overrides the script's own seed.
    """
    _require(isinstance(script, Mapping), "script must be an object")
    _require(
        set(script) <= {"seed", "config", "timeline", "expected"},
        f"unknown top-level keys {sorted(set(script) - {'seed', 'config', 'timeline', 'expected'})}",
    )
    _require("seed" in script and isinstance(script["seed"], int), "missing integer seed")
    _require(isinstance(script.get("timeline"), list), "missing timeline list")
    config = script.get("config", {})
    _require(isinstance(config, Mapping), "config must be an object")
    _require(
        set(config) <= _CONFIG_FIELDS,
        f"unknown config keys {sorted(set(config) - _CONFIG_FIELDS)}",
    )

    effective_seed = seed if seed is not None else script["seed"]
    world = World(effective_seed, **config)

    steps_report: list[dict] = []
    ok = True
    last_t = 0
    for position, step in enumerate(script["timeline"]):
        last_t = _validate_step(position, step, last_t)
        op = step["op"]
        expect = step.get("expect", "ok")
        entry: dict[str, Any] = {"position": position, "op": op, "t": step["t"]}
        try:
            result = _call_op(world, op, step)
            entry["status"] = "ok"
            entry["result"] = _jsonable(result)
        except ProtocolError as exc:
            entry["status"] = "error"
            entry["error"] = type(exc).__name__
        except KeyError as exc:
            raise MalformedScript(
                f"step {position}: unknown reference {exc}"
            ) from None
        except (TypeError, ValueError) as exc:
            raise MalformedScript(f"step {position}: {exc}") from None

        if expect == "ok":
            step_ok = entry["status"] == "ok"
        else:
            wanted = expect.split(":", 1)[1]
            step_ok = entry["status"] == "error" and entry.get("error") == wanted
        if step_ok and "expect_result" in step:
            step_ok = entry.get("result") == step["expect_result"]
        entry["pass"] = step_ok
        ok = ok and step_ok

        if not world.escrow.conserved():  # pragma: no cover - belt and braces
            entry["pass"] = False
            entry["invariant"] = "escrow conservation violated"
            ok = False
        steps_report.append(entry)

    snapshot = world.snapshot()
    report: dict[str, Any] = {
        "seed": effective_seed,
        "steps": steps_report,
        "snapshot": snapshot,
        "view": world.view.as_jsonable(),
        "ok": ok,
    }
    if "expected" in script:
        matched = matches_expected(snapshot, script["expected"])
        report["expected_match"] = matched
        report["ok"] = ok and matched
    return report
