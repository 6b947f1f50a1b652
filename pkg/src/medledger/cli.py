"""Operator command line for the ledger, the store and the simulator.

Exit codes: 0 success, 1 domain error (AccessDenied, SubchainClosed, ...),
2 usage or storage error. Output is line-oriented; --porcelain switches to
tab-separated fields for scripting.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import contextmanager
from pathlib import Path

from . import store
from .errors import LedgerError, ScriptError, StorageError
from .ledger import Credential, Ledger, Role, verify_tree
from .network import SimConfig, repair_replicas, run_scenario
from .blocks import mutate_block


@contextmanager
def _locked(directory: Path):
    """One CLI invocation at a time per ledger directory."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StorageError(f"ledger directory {directory} is locked ({lock} exists)") from None
    try:
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock)
        except OSError:
            pass


def _cred(args) -> Credential:
    return Credential(args.actor, Role(args.role), args.valid)


def _parse_catalog(tokens: list[str]) -> list[tuple[str, str]]:
    out = []
    for token in tokens:
        if ":" not in token:
            raise StorageError(f"catalog entry {token!r} is not CODE:LABEL")
        code, label = token.split(":", 1)
        out.append((code, label))
    return out


def _parse_entries(tokens: list[str]) -> list[tuple[str, bytes]]:
    out = []
    for token in tokens:
        if ":" not in token:
            raise StorageError(f"entry {token!r} is not TYPE:PAYLOAD")
        record_type, payload = token.split(":", 1)
        out.append((record_type, payload.encode("utf-8")))
    return out


def _emit(args, human: str, porcelain_fields: list[str]) -> None:
    print("\t".join(porcelain_fields) if args.porcelain else human)


def _show_payload(args, payload: bytes) -> str:
    if args.porcelain:
        return payload.hex()
    return payload.decode("utf-8", errors="replace")


def _cmd_init(args) -> int:
    directory = Path(args.dir)
    if (directory / store.META_NAME).exists():
        raise StorageError(f"{directory} already holds a ledger")
    with _locked(directory):
        ledger = Ledger.genesis(_parse_catalog(args.catalog))
        store.persist(ledger, directory)
    _emit(args, f"initialized ledger at {directory}", ["initialized", str(directory)])
    return 0


def _with_ledger(args, fn) -> int:
    """Load, run one mutating operation, persist, even when the operation
    raised a domain error (failed attempts must reach the audit chain)."""
    directory = Path(args.dir)
    with _locked(directory):
        ledger = store.load(directory)
        try:
            code = fn(ledger)
        except LedgerError as exc:
            store.persist(ledger, directory)
            print(f"ERROR {type(exc).__name__}: {exc}")
            return 1
        store.persist(ledger, directory)
        return code


def _cmd_onboard(args) -> int:
    info = {}
    for token in args.info:
        if "=" not in token:
            raise StorageError(f"--info {token!r} is not KEY=VALUE")
        key, val = token.split("=", 1)
        info[key] = val

    def run(ledger: Ledger) -> int:
        p = ledger.onboard_patient(_cred(args), args.code, info, args.place)
        _emit(args, f"patient {p} onboarded", ["patient", str(p)])
        return 0

    return _with_ledger(args, run)


def _cmd_write(args) -> int:
    entries = _parse_entries(args.entry)

    def run(ledger: Ledger) -> int:
        medical, log = ledger.write_record(_cred(args), args.patient, entries, args.place)
        _emit(
            args,
            f"medical block {medical.coord.label()} written, log {log.coord.label()}",
            ["written", medical.coord.label(), log.coord.label()],
        )
        return 0

    return _with_ledger(args, run)


def _cmd_read(args) -> int:
    def run(ledger: Ledger) -> int:
        matches, log = ledger.read_record(_cred(args), args.patient, args.query, args.place)
        for coord, entry in matches:
            _emit(
                args,
                f"{coord.label()} {entry.record_type}: {_show_payload(args, entry.payload)}",
                [coord.label(), entry.record_type, _show_payload(args, entry.payload)],
            )
        _emit(args, f"{len(matches)} entries, log {log.coord.label()}", ["log", log.coord.label()])
        return 0

    return _with_ledger(args, run)


def _cmd_report(args) -> int:
    def run(ledger: Ledger) -> int:
        report = ledger.assemble_report(_cred(args), args.patient, args.type, args.place)
        for coord, payload in report:
            _emit(
                args,
                f"{coord.label()} {args.type}: {_show_payload(args, payload)}",
                [coord.label(), args.type, _show_payload(args, payload)],
            )
        _emit(args, f"{len(report)} entries (newest first)", ["entries", str(len(report))])
        return 0

    return _with_ledger(args, run)


def _cmd_close(args) -> int:
    def run(ledger: Ledger) -> int:
        final = ledger.close_subchain(_cred(args), args.patient, args.place)
        _emit(args, f"subchain closed with final block {final.coord.label()}", ["closed", final.coord.label()])
        return 0

    return _with_ledger(args, run)


def _cmd_change_code(args) -> int:
    def run(ledger: Ledger) -> int:
        block = ledger.change_fiscal_code(_cred(args), args.patient, args.new_code, args.place)
        _emit(args, f"fiscal code changed, identity block {block.coord.label()}", ["changed", block.coord.label()])
        return 0

    return _with_ledger(args, run)


def _cmd_catalog_add(args) -> int:
    entries = _parse_catalog(args.entry)

    def run(ledger: Ledger) -> int:
        block = ledger.update_catalog(_cred(args), entries, args.place)
        _emit(args, f"catalog block {block.coord.label()} appended", ["catalog", block.coord.label()])
        return 0

    return _with_ledger(args, run)


def _cmd_verify(args) -> int:
    directory = Path(args.dir)
    ledger = store.load_raw(directory)
    violations = verify_tree(ledger)
    if not violations:
        _emit(args, "OK 0 violations", ["OK", "0"])
        return 0
    for v in violations:
        _emit(args, str(v), [v.chain, v.coord, v.check, v.detail])
    _emit(args, f"FAIL {len(violations)} violations", ["FAIL", str(len(violations))])
    return 1


def _cmd_tamper(args) -> int:
    directory = Path(args.dir)
    with _locked(directory):
        ledger = store.load_raw(directory)
        if args.chain == "main":
            blocks = ledger.main_chain
            pos = args.index
        elif args.chain == "yellow":
            blocks = ledger.yellow.get(args.patient, [])
            pos = args.index - 1
        else:
            blocks = ledger.red.get(args.patient, [])
            pos = args.index - 1
        if not 0 <= pos < len(blocks):
            raise StorageError(
                f"no {args.chain} block {args.index} for patient {args.patient} in {directory}"
            )
        try:
            blocks[pos] = mutate_block(blocks[pos], args.field, args.value)
        except ValueError as exc:
            raise StorageError(f"cannot apply mutation: {exc}") from None
        store.persist(ledger, directory)
    _emit(
        args,
        f"tampered {args.chain} block {args.index} field {args.field}",
        ["tampered", args.chain, str(args.index), args.field],
    )
    return 0


def _cmd_sim(args) -> int:
    script = Path(args.script).read_text(encoding="utf-8")
    config = SimConfig(
        node_count=args.nodes,
        seed=args.seed,
        byzantine=frozenset(args.byzantine.split(",")) if args.byzantine else frozenset(),
        drop_rate=args.drop_rate,
    )
    catalog = _parse_catalog(args.catalog or ["general:General checkup"])
    transcript = run_scenario(config, script, tuple(catalog))
    if args.out:
        Path(args.out).write_text(transcript, encoding="utf-8")
        print(f"transcript written to {args.out}")
    else:
        sys.stdout.write(transcript)
    return 0


def _cmd_audit_repair(args) -> int:
    replicas = {d: store.load_raw(Path(d)) for d in args.dirs}
    entries = repair_replicas(replicas, percent=args.threshold)
    for directory, ledger in replicas.items():
        store.persist(ledger, Path(directory))
    for e in entries:
        _emit(args, str(e), [e.action, e.node, e.chain, e.coord])
    _emit(args, f"{len(entries)} repair entries", ["entries", str(len(entries))])
    return 0


def _add_cred_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--actor", required=True, help="credential holder identity")
    parser.add_argument(
        "--role", required=True, choices=[r.value for r in Role], help="credential role"
    )
    parser.add_argument(
        "--valid",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="credential validity (stubbed authentication)",
    )
    parser.add_argument("--place", default="cli", help="node identifier recorded in logs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medledger",
        description="Tamper-evident patient record ledger with audited access",
    )
    parser.add_argument("--porcelain", action="store_true", help="tab-separated output")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("init", help="create a new ledger directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--catalog", action="append", required=True, metavar="CODE:LABEL")
    p.set_defaults(fn=_cmd_init)

    p = sub.add_parser("onboard", help="register a patient")
    p.add_argument("--dir", required=True)
    _add_cred_flags(p)
    p.add_argument("--code", required=True, help="fiscal code")
    p.add_argument("--info", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(fn=_cmd_onboard)

    p = sub.add_parser("write", help="append a medical record block")
    p.add_argument("--dir", required=True)
    _add_cred_flags(p)
    p.add_argument("--patient", type=int, required=True)
    p.add_argument("--entry", action="append", required=True, metavar="TYPE:PAYLOAD")
    p.set_defaults(fn=_cmd_write)

    p = sub.add_parser("read", help="read entries (appends a read log)")
    p.add_argument("--dir", required=True)
    _add_cred_flags(p)
    p.add_argument("--patient", type=int, required=True)
    p.add_argument("--query", required=True, help="record type or 'latest'")
    p.set_defaults(fn=_cmd_read)

    p = sub.add_parser("report", help="typed history, newest first")
    p.add_argument("--dir", required=True)
    _add_cred_flags(p)
    p.add_argument("--patient", type=int, required=True)
    p.add_argument("--type", required=True)
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("close", help="close a patient's medical subchain")
    p.add_argument("--dir", required=True)
    _add_cred_flags(p)
    p.add_argument("--patient", type=int, required=True)
    p.set_defaults(fn=_cmd_close)

    p = sub.add_parser("change-code", help="record a fiscal code change")
    p.add_argument("--dir", required=True)
    _add_cred_flags(p)
    p.add_argument("--patient", type=int, required=True)
    p.add_argument("--new-code", required=True)
    p.set_defaults(fn=_cmd_change_code)

    p = sub.add_parser("catalog-add", help="append catalog codes")
    p.add_argument("--dir", required=True)
    _add_cred_flags(p)
    p.add_argument("--entry", action="append", required=True, metavar="CODE:LABEL")
    p.set_defaults(fn=_cmd_catalog_add)

    p = sub.add_parser("verify", help="recheck every hash, link and cross-hash")
    p.add_argument("--dir", required=True)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("tamper", help="raw-edit one stored block (integrity testing)")
    p.add_argument("--dir", required=True)
    p.add_argument("--chain", required=True, choices=["main", "yellow", "red"])
    p.add_argument("--patient", type=int, default=0)
    p.add_argument("--index", type=int, required=True, help="main position or 1-based record/log index")
    p.add_argument("--field", required=True)
    p.add_argument("--value", required=True)
    p.set_defaults(fn=_cmd_tamper)

    p = sub.add_parser("sim", help="run a scripted network scenario")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drop-rate", type=float, default=0.0)
    p.add_argument("--byzantine", default="", help="comma-separated node ids")
    p.add_argument("--catalog", action="append", metavar="CODE:LABEL")
    p.add_argument("--out", help="write the transcript to a file")
    p.set_defaults(fn=_cmd_sim)

    p = sub.add_parser("audit-repair", help="majority repair across replica directories")
    p.add_argument("--dirs", nargs="+", required=True)
    p.add_argument("--threshold", type=int, default=51, help="repair percent (>=)")
    p.set_defaults(fn=_cmd_audit_repair)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except LedgerError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}")
        return 1
    except (StorageError, ScriptError, OSError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
