"""Command-line front end for scripts and CI.

Three subcommands, three artifact formats:

  run <file> [--seed N] [--out PATH]
      Execute a JSON scenario file end-to-end and emit the run report
      (JSON, keys sorted, two-space indent). The file is validated
      against the published document schema before anything runs.
      Exit 0 when every step met its expectation, 1 when one did not,
      2 on a parse or schema error.

  sweep <v_max> <grid_step> [--out PATH]
      Brute-force both runoff pricing rules over every integer budget
      pair in {1..v_max}^2 and cross-check witness existence against the
      closed-form winnable region. Emits CSV. Exit 1 iff the two routes
      disagree anywhere other than within quantization reach of the
      region boundary.

  verify <transcript> <commitment>
      Re-run a coordinator's published audit transcript (JSON) against
      the observed intake digest and tally commitment (JSON). Exit 0 on
      accept, 1 on reject (first failing check named), 2 on malformed
      input.

Exit codes are uniform across subcommands: 0 success, 1 assertion or
verification failure, 2 usage or parse error. All output is
deterministic: the same inputs produce byte-identical reports.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Mapping, Optional

import jsonschema

from .errors import MalformedScript
from .maci import (
    AuditTranscript,
    FinalVote,
    TallyCommitment,
    TranscriptEntry,
    VoterFinalState,
    verify_audit,
)
from .oracle import SweepReport, consistency_sweep, square_grid_pairs
from .scenario import op_signatures, run_scenario

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

# ---- the published scenario-file schema ---------------------------------------

_FIELD_SCHEMAS: dict[str, dict[str, Any]] = {
    "human": {"type": "string"},
    "voucher": {"type": "string"},
    "reason": {"type": "string"},
    "initiator": {"type": "string"},
    "respondents": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    "fee": {"type": "integer"},
    "t1": {"type": "integer"},
    "t2": {"type": "integer"},
    "min_judges": {"type": "integer"},
    "extension": {"type": "integer"},
    "phase2_window": {"type": "integer"},
    "dispute": {"type": "integer"},
    "party": {"type": "string"},
    "label": {"type": "string"},
    "text": {"type": "string"},
    "judge": {"type": "string"},
    "proposal": {"type": "string"},
    "rotate_key": {"type": "boolean"},
    "allocations": {
        "type": "object",
        "propertyNames": {"pattern": "^-?[0-9]+$"},
        "additionalProperties": {"type": "integer"},
    },
    "wallet": {"type": "string"},
    "complied": {"type": "boolean"},
    "deadline_passed": {"type": "boolean"},
}


def scenario_schema() -> dict[str, Any]:
    """JSON Schema for scenario files, generated from the runner's own
    operation catalogue: one branch per op, unknown fields rejected."""
    steps = []
    for op, (required, optional) in sorted(op_signatures().items()):
        properties: dict[str, Any] = {
            "op": {"const": op},
            "t": {"type": "integer"},
            "expect": {"type": "string", "pattern": "^(ok|error:[A-Za-z]+)$"},
            "expect_result": {},
        }
        for field in sorted(required | optional):
            properties[field] = _FIELD_SCHEMAS[field]
        steps.append(
            {
                "type": "object",
                "properties": properties,
                "required": ["op", "t", *sorted(required)],
                "additionalProperties": False,
            }
        )
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "Scenario file",
        "type": "object",
        "properties": {
            "seed": {"type": "integer"},
            "config": {
                "type": "object",
                "properties": {
                    "genesis_humans": {
                        "type": "array",
                        "items": {"type": "string"},
                    },
                    "challenge_window": {"type": "integer"},
                    "tree_depth": {"type": "integer"},
                    "group_id": {"type": "integer"},
                },
                "additionalProperties": False,
            },
            "timeline": {"type": "array", "items": {"oneOf": steps}},
            "expected": {"type": "object"},
        },
        "required": ["seed", "timeline"],
        "additionalProperties": False,
    }


SCENARIO_SCHEMA = scenario_schema()

# ---- audit artifact (de)serialization -------------------------------------------


def transcript_to_jsonable(transcript: AuditTranscript) -> dict[str, Any]:
    return {
        "poll_id": transcript.poll_id,
        "cost_rule": transcript.cost_rule,
        "initial_voters": [
            [index, key.hex(), credits]
            for index, key, credits in transcript.initial_voters
        ],
        "entries": [
            {
                "arrival_index": entry.arrival_index,
                "ciphertext_digest": entry.ciphertext_digest.hex(),
                "plaintext": (
                    None if entry.plaintext is None else entry.plaintext.hex()
                ),
                "valid": entry.valid,
                "reason": entry.reason,
            }
            for entry in transcript.entries
        ],
        "final_states": [
            {
                "registration_index": state.registration_index,
                "current_key": state.current_key_bytes.hex(),
                "voice_credits": state.voice_credits,
                "vote": (
                    None
                    if state.vote is None
                    else {
                        "options": list(state.vote.vote_option),
                        "amounts": list(state.vote.vote_amount),
                        "memo": state.vote.memo.hex(),
                        "arrival_index": state.vote.arrival_index,
                    }
                ),
            }
            for state in transcript.final_states
        ],
        "message_set_digest": transcript.message_set_digest.hex(),
        "tally": {str(option): value for option, value in transcript.tally.items()},
        "salt": transcript.salt.hex(),
    }


def commitment_to_jsonable(
    intake_digest: bytes, commitment: TallyCommitment
) -> dict[str, str]:
    """The observer's side of a verification: what the public record
    pinned down before the coordinator revealed anything."""
    return {
        "intake_digest": intake_digest.hex(),
        "commitment_digest": commitment.digest.hex(),
    }


def _hex(value: Any) -> bytes:
    if not isinstance(value, str):
        raise ValueError(f"expected a hex string, got {type(value).__name__}")
    return bytes.fromhex(value)


def _int(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"expected an integer, got {value!r}")
    return value


def _bool(value: Any) -> bool:
    if not isinstance(value, bool):
        raise ValueError(f"expected a boolean, got {value!r}")
    return value


def _opt_str(value: Any) -> Optional[str]:
    if value is not None and not isinstance(value, str):
        raise ValueError(f"expected a string or null, got {value!r}")
    return value


def transcript_from_jsonable(doc: Any) -> AuditTranscript:
    if not isinstance(doc, Mapping):
        raise ValueError("transcript document must be an object")
    entries = tuple(
        TranscriptEntry(
            arrival_index=_int(entry["arrival_index"]),
            ciphertext_digest=_hex(entry["ciphertext_digest"]),
            plaintext=(
                None if entry["plaintext"] is None else _hex(entry["plaintext"])
            ),
            valid=_bool(entry["valid"]),
            reason=_opt_str(entry["reason"]),
        )
        for entry in doc["entries"]
    )
    final_states = tuple(
        VoterFinalState(
            registration_index=_int(state["registration_index"]),
            current_key_bytes=_hex(state["current_key"]),
            voice_credits=_int(state["voice_credits"]),
            vote=(
                None
                if state["vote"] is None
                else FinalVote(
                    vote_option=tuple(_int(v) for v in state["vote"]["options"]),
                    vote_amount=tuple(_int(v) for v in state["vote"]["amounts"]),
                    memo=_hex(state["vote"]["memo"]),
                    arrival_index=_int(state["vote"]["arrival_index"]),
                )
            ),
        )
        for state in doc["final_states"]
    )
    return AuditTranscript(
        poll_id=_int(doc["poll_id"]),
        cost_rule=str(doc["cost_rule"]),
        initial_voters=tuple(
            (_int(index), _hex(key), _int(credits))
            for index, key, credits in doc["initial_voters"]
        ),
        entries=entries,
        final_states=final_states,
        message_set_digest=_hex(doc["message_set_digest"]),
        tally={int(option): _int(value) for option, value in doc["tally"].items()},
        salt=_hex(doc["salt"]),
    )


# ---- subcommands ----------------------------------------------------------------


def _emit(payload: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(payload)
    else:
        Path(out).write_text(payload)


def _load_json(path: str) -> Any:
    return json.loads(Path(path).read_text())


def cmd_run(args: argparse.Namespace) -> int:
    try:
        script = _load_json(args.file)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        jsonschema.validate(script, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        print(f"scenario fails the schema: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run_scenario(script, seed=args.seed)
    except MalformedScript as exc:
        print(f"malformed scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE

    _emit(json.dumps(report, sort_keys=True, indent=2) + "\n", args.out)
    if not report["ok"]:
        failed = [
            f"step {step['position']} ({step['op']})"
            for step in report["steps"]
            if not step["pass"]
        ]
        if not report.get("expected_match", True):
            failed.append("final-state expectation")
        print("failed: " + "; ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _csv_number(value: float) -> str:
    return str(int(value)) if value == int(value) else repr(value)


def sweep_csv(report: SweepReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        [
            "V_A",
            "V_B",
            "mechanism",
            "always_wins",
            "region_nonempty",
            "witness_y1",
            "witness_y2",
        ]
    )
    for row in report.rows:
        writer.writerow(
            [
                _csv_number(row.v_a),
                _csv_number(row.v_b),
                row.mechanism,
                str(row.always_wins).lower(),
                str(row.region_nonempty).lower(),
                "" if row.witness_y1 is None else _csv_number(row.witness_y1),
                "" if row.witness_y2 is None else _csv_number(row.witness_y2),
            ]
        )
    return buffer.getvalue()


def cmd_sweep(args: argparse.Namespace) -> int:
    report = consistency_sweep(square_grid_pairs(args.v_max), args.grid_step)
    _emit(sweep_csv(report), args.out)
    hard = report.hard_disagreements
    print(
        f"{len(report.rows)} rows, "
        f"{len(report.disagreements) - len(hard)} boundary disagreements, "
        f"{len(hard)} hard disagreements",
        file=sys.stderr,
    )
    for disagreement in hard:
        row = disagreement.row
        print(
            f"disagreement at V_A={_csv_number(row.v_a)} "
            f"V_B={_csv_number(row.v_b)} mechanism={row.mechanism}: "
            f"witness {'found' if row.witness_y1 is not None else 'missing'} "
            f"but region_nonempty={row.region_nonempty}",
            file=sys.stderr,
        )
    return EXIT_FAIL if hard else EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        transcript = transcript_from_jsonable(_load_json(args.transcript))
        record = _load_json(args.commitment)
        intake_digest = _hex(record["intake_digest"])
        commitment = TallyCommitment(_hex(record["commitment_digest"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_USAGE

    verdict = verify_audit(transcript, intake_digest, commitment)
    if verdict:
        print("accepted")
        return EXIT_OK
    print(f"rejected: {verdict.reason}")
    return EXIT_FAIL


# ---- argument parsing -------------------------------------------------------------


def _v_max_arg(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("v_max must be at least 2")
    return value


def _grid_step_arg(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("grid_step must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disputekit",
        description="Scripted dispute-resolution runs, runoff sweeps, audit checks.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="execute a JSON scenario file")
    run.add_argument("file", help="scenario file (JSON)")
    run.add_argument("--seed", type=int, default=None, help="override the script seed")
    run.add_argument("--out", default=None, help="write the report here, not stdout")
    run.set_defaults(func=cmd_run)

    sweep = commands.add_parser(
        "sweep", help="cross-check the runoff brute force against the closed form"
    )
    sweep.add_argument("v_max", type=_v_max_arg, help="top of the budget grid (>= 2)")
    sweep.add_argument("grid_step", type=_grid_step_arg, help="response grid step")
    sweep.add_argument("--out", default=None, help="write the CSV here, not stdout")
    sweep.set_defaults(func=cmd_sweep)

    verify = commands.add_parser(
        "verify", help="re-run a published audit transcript against its commitment"
    )
    verify.add_argument("transcript", help="audit transcript (JSON)")
    verify.add_argument("commitment", help="intake digest + tally commitment (JSON)")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
