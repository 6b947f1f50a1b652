"""Deterministic simulation of the replicated ledger network.

Fixed membership: the approved-node list never changes and only listed
nodes may propose. A proposal commits when strictly more than the
confirmation threshold of all approved nodes confirm it (51% by default,
exact integer arithmetic, the proposer counts); committed commands apply
to every replica in the same order, so honest replicas stay bit-identical.
Byzantine nodes refuse confirmations; state divergence is injected only
through tamper(). audit_and_repair replaces any block that differs from a
valid version held by at least the repair threshold of nodes.

Everything is driven by a logical clock and one seeded RNG (message
drops), so a (config, script) pair always yields the same transcript.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .blocks import Block, block_hash, decode_record, encode_record, mutate_block
from .errors import LedgerError, NoSuchBlock, NotAuthorized, ScriptError
from .ledger import Credential, Ledger, Role

DEFAULT_CATALOG = (("general", "General checkup"),)


@dataclass(frozen=True)
class SimConfig:
    node_count: int
    seed: int = 0
    byzantine: frozenset[str] = frozenset()
    drop_rate: float = 0.0
    confirm_percent: int = 51  # commit needs strictly more than this share
    repair_percent: int = 51  # repair adopts a version held by at least this share


@dataclass
class NodeState:
    """One simulated node: its id, the shared membership list, its replica."""

    node_id: str
    approved_list: tuple[str, ...]
    replica: Ledger


@dataclass(frozen=True)
class Command:
    """One ledger operation as carried by a proposal.

    args is an ordered tuple of (key, value) pairs; repeated keys are
    allowed (multiple entry= items).
    """

    verb: str
    actor: str
    role: Role
    valid: bool
    args: tuple[tuple[str, str], ...] = ()

    def cred(self) -> Credential:
        return Credential(self.actor, self.role, self.valid)

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, val in self.args:
            if k == key:
                return val
        return default

    def need(self, key: str) -> str:
        val = self.get(key)
        if val is None:
            raise ValueError(f"command {self.verb!r} missing {key}=")
        return val

    def getall(self, key: str) -> list[str]:
        return [val for k, val in self.args if k == key]

    def info(self) -> dict[str, str]:
        return {k[len("info.") :]: val for k, val in self.args if k.startswith("info.")}

    def apply(self, ledger: Ledger, place: str) -> str:
        """Run against a replica; returns a short result summary."""
        cred = self.cred()
        if self.verb == "onboard":
            p = ledger.onboard_patient(cred, self.need("code"), self.info(), place)
            return f"patient:{p}"
        if self.verb == "write":
            entries = [_split_entry(e) for e in self.getall("entry")]
            medical, log = ledger.write_record(cred, int(self.need("patient")), entries, place)
            return f"medical:{medical.coord.label()} log:{log.coord.label()}"
        if self.verb == "read":
            matches, log = ledger.read_record(
                cred, int(self.need("patient")), self.need("query"), place
            )
            return f"entries:{len(matches)} log:{log.coord.label()}"
        if self.verb == "report":
            report = ledger.assemble_report(
                cred, int(self.need("patient")), self.need("type"), place
            )
            return f"entries:{len(report)}"
        if self.verb == "close":
            final = ledger.close_subchain(cred, int(self.need("patient")), place)
            return f"final:{final.coord.label()}"
        if self.verb == "change-code":
            block = ledger.change_fiscal_code(
                cred, int(self.need("patient")), self.need("new_code"), place
            )
            return f"identity:{block.coord.label()}"
        if self.verb == "catalog-add":
            entries = [_split_entry(e) for e in self.getall("entry")]
            block = ledger.update_catalog(cred, [(c, p.decode()) for c, p in entries], place)
            return f"catalog:{block.coord.label()}"
        raise ValueError(f"unknown command verb {self.verb!r}")

    def render_args(self) -> str:
        return " ".join(f"{k}={val}" for k, val in self.args)


def _split_entry(token: str) -> tuple[str, bytes]:
    if ":" not in token:
        raise ValueError(f"entry token {token!r} is not type:payload")
    record_type, payload = token.split(":", 1)
    return record_type, payload.encode("utf-8")


@dataclass(frozen=True)
class Proposal:
    seq: int
    proposer: str
    command: Command
    votes: tuple[tuple[str, str], ...]  # (node, yes|no|drop) in membership order
    committed: bool
    outcome: str  # "ok" or the domain error class name
    result: str

    @property
    def confirmers(self) -> frozenset[str]:
        return frozenset(nid for nid, vote in self.votes if vote == "yes")

    @property
    def confirmations(self) -> int:
        return len(self.confirmers)


@dataclass(frozen=True)
class RepairEntry:
    node: str  # "*" for a coordinate nobody could repair
    chain: str
    coord: str
    action: str  # replaced | unrepairable

    def __str__(self) -> str:
        return f"{self.action} node={self.node} chain={self.chain} coord={self.coord}"


def quorum_commits(confirmations: int, node_count: int, percent: int = 51) -> bool:
    """Strictly-more-than share test in exact integer arithmetic."""
    return 100 * confirmations > percent * node_count


def repair_majority(holders: int, node_count: int, percent: int = 51) -> bool:
    """At-least share test in exact integer arithmetic."""
    return 100 * holders >= percent * node_count


class Network:
    def __init__(self, config: SimConfig, catalog_entries=DEFAULT_CATALOG):
        if config.node_count < 1:
            raise ValueError("simulation needs at least one node")
        approved = tuple(f"n{i}" for i in range(1, config.node_count + 1))
        unknown = set(config.byzantine) - set(approved)
        if unknown:
            raise ValueError(f"byzantine nodes not on the approved list: {sorted(unknown)}")
        if not 0.0 <= config.drop_rate < 1.0:
            raise ValueError("drop_rate must be in [0, 1)")
        self.config = config
        self.approved = approved
        self.nodes = {
            nid: NodeState(nid, approved, Ledger.genesis(catalog_entries)) for nid in approved
        }
        self.rng = random.Random(config.seed)
        self.seq = 0

    # -- consensus ----------------------------------------------------------

    def propose(self, node_id: str, command: Command) -> Proposal:
        """Broadcast a command, collect confirmations, apply it if the quorum
        is reached. Applied commands run on every replica in membership
        order, so domain failures (and their audit logs) replicate too."""
        if node_id not in self.approved:
            raise NotAuthorized(f"node {node_id!r} is not on the approved list")
        self.seq += 1
        votes: list[tuple[str, str]] = []
        for nid in self.approved:
            if nid == node_id:
                votes.append((nid, "yes"))
                continue
            if self.rng.random() < self.config.drop_rate:
                votes.append((nid, "drop"))
            elif nid in self.config.byzantine:
                votes.append((nid, "no"))
            else:
                votes.append((nid, "yes" if self._validates(nid, command, node_id) else "no"))
        confirmations = sum(1 for _, vote in votes if vote == "yes")
        committed = quorum_commits(
            confirmations, len(self.approved), self.config.confirm_percent
        )
        outcome, result = "rejected", ""
        if committed:
            outcome, result = self._apply_everywhere(command, node_id)
        return Proposal(
            self.seq, node_id, command, tuple(votes), committed, outcome, result
        )

    def _validates(self, node_id: str, command: Command, place: str) -> bool:
        """Dry-run on a copy of the node's replica.

        Domain errors are valid transitions (they append audit evidence);
        only structurally malformed commands are refused.
        """
        probe = self.nodes[node_id].replica.clone()
        try:
            command.apply(probe, place)
        except LedgerError:
            pass
        except Exception:
            return False
        return True

    def _apply_everywhere(self, command: Command, place: str) -> tuple[str, str]:
        outcome, result = "", ""
        for i, nid in enumerate(self.approved):
            try:
                summary = command.apply(self.nodes[nid].replica, place)
                this = ("ok", summary)
            except LedgerError as exc:
                this = (type(exc).__name__, str(exc))
            if i == 0:
                outcome, result = this
            elif this != (outcome, result):
                raise AssertionError(
                    f"replica divergence applying {command.verb}: {this} != {(outcome, result)}"
                )
        return outcome, result

    # -- fault injection and repair -------------------------------------------

    def _chain(self, node_id: str, chain: str, patient: int) -> list[Block]:
        replica = self.nodes[node_id].replica
        if chain == "main":
            return replica.main_chain
        if chain == "yellow":
            return replica.yellow.get(patient, [])
        if chain == "red":
            return replica.red.get(patient, [])
        raise ValueError(f"unknown chain {chain!r}")

    def tamper(self, node_id: str, chain: str, patient: int, index: int, field_path: str, value) -> None:
        """Raw edit of one block on one node, bypassing every check.

        index is the main-chain position for chain="main", else the
        1-based record/log index. The stored self_hash is left stale.
        """
        if node_id not in self.nodes:
            raise NoSuchBlock(f"unknown node {node_id!r}")
        blocks = self._chain(node_id, chain, patient)
        pos = index if chain == "main" else index - 1
        if not 0 <= pos < len(blocks):
            raise NoSuchBlock(f"no {chain} block {index} for patient {patient} on {node_id}")
        blocks[pos] = mutate_block(blocks[pos], field_path, value)

    def audit_and_repair(self) -> list[RepairEntry]:
        """Majority block repair across all replicas; see repair_replicas."""
        return repair_replicas(
            {nid: self.nodes[nid].replica for nid in self.approved},
            self.config.repair_percent,
        )


def _replica_chain(replica: Ledger, chain: str, patient: int, create: bool = False) -> list[Block]:
    if chain == "main":
        return replica.main_chain
    table = replica.yellow if chain == "yellow" else replica.red
    if create:
        return table.setdefault(patient, [])
    return table.get(patient, [])


def repair_replicas(replicas: dict[str, Ledger], percent: int = 51) -> list[RepairEntry]:
    """Per-coordinate majority vote over stored block bytes.

    A version qualifies only if it is held by at least the repair
    threshold of replicas AND its stored self_hash recomputes, so a raw
    tamper cannot vote itself into being the "right" version. Divergent
    coordinates without a qualifying version are reported unrepairable.
    Replica order (dict order) fixes the report order.
    """
    node_ids = list(replicas)
    total = len(node_ids)
    coords: list[tuple[str, int, int]] = []
    main_len = max(len(r.main_chain) for r in replicas.values())
    coords += [("main", 0, i) for i in range(main_len)]
    patients = sorted({p for r in replicas.values() for p in set(r.yellow) | set(r.red)})
    for p in patients:
        y_len = max(len(r.yellow.get(p, [])) for r in replicas.values())
        r_len = max(len(r.red.get(p, [])) for r in replicas.values())
        coords += [("yellow", p, j) for j in range(1, y_len + 1)]
        coords += [("red", p, k) for k in range(1, r_len + 1)]

    report: list[RepairEntry] = []
    touched: set[str] = set()
    for chain, patient, index in coords:
        pos = index if chain == "main" else index - 1
        versions: dict[bytes, list[str]] = {}
        for nid in node_ids:
            blocks = _replica_chain(replicas[nid], chain, patient)
            key = encode_record(blocks[pos]) if 0 <= pos < len(blocks) else b""
            versions.setdefault(key, []).append(nid)
        if len(versions) == 1:
            continue
        coord = str(index) if chain == "main" else f"{patient}.{index}"
        majority: bytes | None = None
        for key, holders in versions.items():
            if not key or not repair_majority(len(holders), total, percent):
                continue
            candidate = decode_record(key)
            if candidate.self_hash == block_hash(candidate):
                majority = key
                break
        if majority is None:
            report.append(RepairEntry("*", chain, coord, "unrepairable"))
            continue
        good = decode_record(majority)
        for key, holders in versions.items():
            if key == majority:
                continue
            for nid in holders:
                blocks = _replica_chain(replicas[nid], chain, patient, create=True)
                if 0 <= pos < len(blocks):
                    blocks[pos] = good
                elif pos == len(blocks):
                    blocks.append(good)
                else:
                    report.append(RepairEntry(nid, chain, coord, "unrepairable"))
                    continue
                touched.add(nid)
                report.append(RepairEntry(nid, chain, coord, "replaced"))
    for nid in node_ids:
        if nid in touched:
            replicas[nid]._recompute_derived()
    return report


# --- scenario scripts -----------------------------------------------------------


@dataclass(frozen=True)
class ScriptStep:
    line_no: int
    tick: int
    node: str
    verb: str
    params: tuple[tuple[str, str], ...]

    def param(self, key: str, default: str | None = None) -> str | None:
        for k, val in self.params:
            if k == key:
                return val
        return default


_COMMAND_VERBS = {"onboard", "write", "read", "report", "close", "change-code", "catalog-add"}
_DIRECTIVE_VERBS = {"tamper", "audit-repair"}


def parse_script(text: str) -> list[ScriptStep]:
    """Parse the line-oriented scenario format: `tick node verb key=value...`.

    Blank lines and #-comments are skipped; ticks must be strictly
    increasing.
    """
    steps: list[ScriptStep] = []
    last_tick = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 3:
            raise ScriptError(line_no, "expected: tick node verb [key=value ...]")
        try:
            tick = int(fields[0])
        except ValueError:
            raise ScriptError(line_no, f"tick {fields[0]!r} is not an integer") from None
        if tick <= last_tick:
            raise ScriptError(line_no, f"tick {tick} does not increase (previous {last_tick})")
        last_tick = tick
        node, verb = fields[1], fields[2]
        if verb not in _COMMAND_VERBS | _DIRECTIVE_VERBS:
            raise ScriptError(line_no, f"unknown verb {verb!r}")
        params: list[tuple[str, str]] = []
        for token in fields[3:]:
            if "=" not in token:
                raise ScriptError(line_no, f"argument {token!r} is not key=value")
            key, val = token.split("=", 1)
            params.append((key, val))
        steps.append(ScriptStep(line_no, tick, node, verb, tuple(params)))
    return steps


def _step_command(step: ScriptStep) -> Command:
    role_name = step.param("role")
    try:
        role = Role(role_name) if role_name else Role.DOCTOR
    except ValueError:
        raise ScriptError(step.line_no, f"unknown role {role_name!r}") from None
    valid = step.param("valid", "1") in ("1", "true", "yes")
    cred_keys = {"actor", "role", "valid"}
    args = tuple((k, v) for k, v in step.params if k not in cred_keys)
    return Command(step.verb, step.param("actor", "anonymous"), role, valid, args)


def run_scenario(config: SimConfig, script: str, catalog_entries=DEFAULT_CATALOG) -> str:
    """Execute a script and return the full transcript.

    The transcript is line-oriented with a stable field order, so equal
    (config, script) pairs produce byte-identical output.
    """
    steps = parse_script(script)
    # compile commands up front so a malformed line fails before execution
    compiled = {
        step.line_no: _step_command(step) for step in steps if step.verb in _COMMAND_VERBS
    }
    net = Network(config, catalog_entries)
    lines = [
        "CONFIG nodes={} seed={} drop={} byzantine={} confirm>{} repair>={} catalog={}".format(
            config.node_count,
            config.seed,
            config.drop_rate,
            ",".join(sorted(config.byzantine)) or "-",
            config.confirm_percent,
            config.repair_percent,
            ",".join(f"{c}:{l}" for c, l in catalog_entries),
        )
    ]
    for step in steps:
        if step.verb == "tamper":
            try:
                net.tamper(
                    step.node,
                    step.param("chain") or "",
                    int(step.param("patient", "0")),
                    int(step.param("index", "0")),
                    step.param("field") or "",
                    step.param("value") or "",
                )
                status = "ok"
            except (NoSuchBlock, ValueError) as exc:
                status = f"error:{type(exc).__name__}"
            lines.append(
                "TAMPER tick={} node={} chain={} patient={} index={} field={} status={}".format(
                    step.tick,
                    step.node,
                    step.param("chain"),
                    step.param("patient", "0"),
                    step.param("index", "0"),
                    step.param("field"),
                    status,
                )
            )
            continue
        if step.verb == "audit-repair":
            entries = net.audit_and_repair()
            lines.append(f"REPAIR-RUN tick={step.tick} node={step.node} entries={len(entries)}")
            lines += [
                f"REPAIR node={e.node} chain={e.chain} coord={e.coord} action={e.action}"
                for e in entries
            ]
            continue
        command = compiled[step.line_no]
        try:
            proposal = net.propose(step.node, command)
        except NotAuthorized:
            lines.append(
                f"REJECTED tick={step.tick} node={step.node} verb={command.verb} reason=NotAuthorized"
            )
            continue
        lines.append(
            "PROPOSE seq={} tick={} node={} verb={} actor={} role={} valid={} {}".format(
                proposal.seq,
                step.tick,
                step.node,
                command.verb,
                command.actor,
                command.role.value,
                int(command.valid),
                command.render_args(),
            ).rstrip()
        )
        lines += [f"VOTE seq={proposal.seq} node={nid} vote={vote}" for nid, vote in proposal.votes]
        word = "COMMIT" if proposal.committed else "REJECT"
        lines.append(
            f"{word} seq={proposal.seq} yes={proposal.confirmations} n={len(net.approved)}"
        )
        if proposal.committed:
            lines.append(
                f"APPLY seq={proposal.seq} outcome={proposal.outcome} result={proposal.result}"
            )
    for nid in net.approved:
        lines.append(f"FINAL node={nid} state={net.nodes[nid].replica.state_digest()}")
    return "\n".join(lines) + "\n"
