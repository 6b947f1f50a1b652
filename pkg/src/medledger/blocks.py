"""Block types for the three chains, canonical encoding, hashing, linking.

Every block encodes as three byte groups: kind tag + coordinates, payload
fields, link digests. The block hash is the Merkle root over those three
groups, and their concatenation is the canonical record used for hashing,
persistence and golden vectors (a stored record appends the 32-byte
self_hash after the canonical bytes).

Encoding primitives, fixed for all platforms:
    u8 / u32 / u64      unsigned big-endian integers
    string              u32 byte length + UTF-8
    bytes payload       u32 length + raw bytes
    digest              exactly 32 raw bytes
    optional value      u8 presence flag (0 or 1) + value
    list                u32 element count + elements
    string map          u32 count + key/value pairs, keys strictly ascending

Decoding is strict: flags and enum bytes must be canonical values, map
keys must be sorted and unique, and a record must be consumed exactly.
Any deviation raises ValueError, which the store maps to CorruptChain.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from enum import IntEnum

from .errors import NoSuchBlock
from .merkle import DIGEST_SIZE, ZERO_DIGEST, build_tree

Digest = bytes


class BlockKind(IntEnum):
    IDENTITY = 1
    MEDICAL = 2
    LOG = 3
    AUDIT_NOTE = 4


class IdentityVariant(IntEnum):
    SYSTEM_GENESIS = 0
    PATIENT = 1
    FISCAL_CHANGE = 2
    CATALOG = 3


class AccessEvent(IntEnum):
    WRITE = 1
    READ = 2
    FAILED_ATTEMPT = 3


@dataclass(frozen=True)
class BlockCoord:
    """Position of a block: main-chain index, medical index, log index.

    patient 0 is reserved for the system genesis block.
    """

    patient: int
    record: int | None = None
    log: int | None = None

    def label(self) -> str:
        if self.log is not None:
            rec = "-" if self.record is None else str(self.record)
            return f"{self.patient}.{rec}.{self.log}"
        if self.record is not None:
            return f"{self.patient}.{self.record}"
        return str(self.patient)


@dataclass(frozen=True)
class FiscalChange:
    new_code: str
    old_code: str
    prev_identity: Digest


@dataclass(frozen=True)
class CatalogUpdate:
    entries: tuple[tuple[str, str], ...]  # (code, label) pairs, order preserved
    prev_catalog: Digest | None


@dataclass(frozen=True)
class IdentityBlock:
    coord: BlockCoord
    fiscal_code: str
    personal_info: dict[str, str]
    prev_main: Digest
    variant: IdentityVariant
    fiscal_change: FiscalChange | None = None
    catalog: CatalogUpdate | None = None
    self_hash: Digest = ZERO_DIGEST


@dataclass(frozen=True)
class RecordEntry:
    record_type: str
    payload: bytes
    prev_same_type: Digest | None = None


@dataclass(frozen=True)
class MedicalBlock:
    coord: BlockCoord
    entries: tuple[RecordEntry, ...]
    prev_yellow: Digest
    is_final: bool = False
    self_hash: Digest = ZERO_DIGEST


@dataclass(frozen=True)
class LogBlock:
    coord: BlockCoord
    event: AccessEvent
    actor: str
    timestamp: int
    place: str
    viewed: str
    h_main: Digest
    h_yellow: Digest
    h_prev_red: Digest
    self_hash: Digest = ZERO_DIGEST


@dataclass(frozen=True)
class GlobalAuditNote:
    """Failed attempt with no patient anchor; notes form their own hash chain."""

    actor: str
    timestamp: int
    place: str
    detail: str
    prev_hash: Digest
    self_hash: Digest = ZERO_DIGEST


Block = IdentityBlock | MedicalBlock | LogBlock


# --- encoding primitives ---------------------------------------------------


def _u8(x: int) -> bytes:
    return x.to_bytes(1, "big")


def _u32(x: int) -> bytes:
    return x.to_bytes(4, "big")


def _u64(x: int) -> bytes:
    return x.to_bytes(8, "big")


def _string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _u32(len(raw)) + raw


def _blob(b: bytes) -> bytes:
    return _u32(len(b)) + b


def _digest(d: Digest) -> bytes:
    if len(d) != DIGEST_SIZE:
        raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(d)}")
    return d


def _opt(encoded: bytes | None) -> bytes:
    return b"\x00" if encoded is None else b"\x01" + encoded


def _opt_u32(x: int | None) -> bytes:
    return _opt(None if x is None else _u32(x))


def _strmap(m: dict[str, str]) -> bytes:
    out = bytearray(_u32(len(m)))
    for key in sorted(m):
        out += _string(key)
        out += _string(m[key])
    return bytes(out)


class _Reader:
    """Strict cursor over one record; every read is bounds-checked."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise ValueError(f"truncated record at offset {self.pos} (need {n} bytes)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def string(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValueError(f"invalid UTF-8 at offset {self.pos}: {exc}") from None

    def blob(self) -> bytes:
        return self.take(self.u32())

    def digest(self) -> Digest:
        return self.take(DIGEST_SIZE)

    def flag(self) -> bool:
        b = self.u8()
        if b not in (0, 1):
            raise ValueError(f"non-canonical flag byte {b:#x} at offset {self.pos - 1}")
        return b == 1

    def strmap(self) -> dict[str, str]:
        count = self.u32()
        out: dict[str, str] = {}
        prev_key: str | None = None
        for _ in range(count):
            key = self.string()
            if prev_key is not None and key <= prev_key:
                raise ValueError(f"map keys not strictly ascending near offset {self.pos}")
            prev_key = key
            out[key] = self.string()
        return out

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise ValueError(f"{len(self.data) - self.pos} trailing bytes after offset {self.pos}")


# --- field groups and hashing ----------------------------------------------


def _coord_bytes(kind: BlockKind, coord: BlockCoord) -> bytes:
    return _u8(kind) + _u32(coord.patient) + _opt_u32(coord.record) + _opt_u32(coord.log)


def _read_coord(r: _Reader) -> BlockCoord:
    patient = r.u32()
    record = r.u32() if r.flag() else None
    log = r.u32() if r.flag() else None
    return BlockCoord(patient, record, log)


def _entry_bytes(e: RecordEntry) -> bytes:
    return (
        _string(e.record_type)
        + _blob(e.payload)
        + _opt(None if e.prev_same_type is None else _digest(e.prev_same_type))
    )


def _read_entry(r: _Reader) -> RecordEntry:
    record_type = r.string()
    payload = r.blob()
    prev = r.digest() if r.flag() else None
    return RecordEntry(record_type, payload, prev)


def field_groups(block: Block) -> tuple[bytes, bytes, bytes]:
    """The three Merkle leaves: kind+coordinates, payload fields, link digests."""
    if isinstance(block, IdentityBlock):
        fc = block.fiscal_change
        cat = block.catalog
        payload = (
            _string(block.fiscal_code)
            + _strmap(block.personal_info)
            + _u8(block.variant)
            + _opt(
                None
                if fc is None
                else _string(fc.new_code) + _string(fc.old_code) + _digest(fc.prev_identity)
            )
            + _opt(
                None
                if cat is None
                else _u32(len(cat.entries))
                + b"".join(_string(c) + _string(l) for c, l in cat.entries)
                + _opt(None if cat.prev_catalog is None else _digest(cat.prev_catalog))
            )
        )
        return (
            _coord_bytes(BlockKind.IDENTITY, block.coord),
            payload,
            _digest(block.prev_main),
        )
    if isinstance(block, MedicalBlock):
        payload = (
            _u32(len(block.entries))
            + b"".join(_entry_bytes(e) for e in block.entries)
            + _u8(1 if block.is_final else 0)
        )
        return (
            _coord_bytes(BlockKind.MEDICAL, block.coord),
            payload,
            _digest(block.prev_yellow),
        )
    if isinstance(block, LogBlock):
        payload = (
            _u8(block.event)
            + _string(block.actor)
            + _u64(block.timestamp)
            + _string(block.place)
            + _string(block.viewed)
        )
        links = _digest(block.h_main) + _digest(block.h_yellow) + _digest(block.h_prev_red)
        return (_coord_bytes(BlockKind.LOG, block.coord), payload, links)
    raise TypeError(f"not a block: {type(block).__name__}")


def canonical_bytes(block: Block) -> bytes:
    """Deterministic encoding of everything except self_hash."""
    return b"".join(field_groups(block))


def block_hash(block: Block) -> Digest:
    """Merkle root over the block's three field groups."""
    return build_tree(field_groups(block)).root


def sealed(block: Block) -> Block:
    """Copy of the block with self_hash set to its recomputed hash."""
    return replace(block, self_hash=block_hash(block))


def verify_link(child_prev: Digest, parent: Block) -> bool:
    """True iff the child's stored back-link matches the parent's recomputed hash."""
    return child_prev == block_hash(parent)


def verify_log_cross(
    log: LogBlock,
    identity: IdentityBlock,
    yellow: MedicalBlock | None,
    prev_red: LogBlock | IdentityBlock,
) -> bool:
    """Check the three cross-hashes of a log block at once.

    yellow is None for access events on a patient with no medical blocks,
    in which case h_yellow must be the zero digest. prev_red is the
    identity block for the first log of a patient.
    """
    expected_yellow = ZERO_DIGEST if yellow is None else block_hash(yellow)
    return (
        log.h_main == block_hash(identity)
        and log.h_yellow == expected_yellow
        and log.h_prev_red == block_hash(prev_red)
    )


# --- stored records ----------------------------------------------------------


def encode_record(block: Block) -> bytes:
    """Canonical bytes plus the stored self_hash; the unit of persistence."""
    return canonical_bytes(block) + _digest(block.self_hash)


def decode_record(data: bytes) -> Block:
    """Inverse of encode_record; ValueError on any non-canonical byte."""
    r = _Reader(data)
    kind = r.u8()
    if kind == BlockKind.IDENTITY:
        coord = _read_coord(r)
        fiscal_code = r.string()
        personal_info = r.strmap()
        variant_byte = r.u8()
        try:
            variant = IdentityVariant(variant_byte)
        except ValueError:
            raise ValueError(f"unknown identity variant {variant_byte:#x}") from None
        fc = None
        if r.flag():
            fc = FiscalChange(r.string(), r.string(), r.digest())
        cat = None
        if r.flag():
            entries = tuple((r.string(), r.string()) for _ in range(r.u32()))
            prev_catalog = r.digest() if r.flag() else None
            cat = CatalogUpdate(entries, prev_catalog)
        prev_main = r.digest()
        self_hash = r.digest()
        r.expect_end()
        return IdentityBlock(coord, fiscal_code, personal_info, prev_main, variant, fc, cat, self_hash)
    if kind == BlockKind.MEDICAL:
        coord = _read_coord(r)
        entries = tuple(_read_entry(r) for _ in range(r.u32()))
        is_final_byte = r.u8()
        if is_final_byte not in (0, 1):
            raise ValueError(f"non-canonical final flag {is_final_byte:#x}")
        prev_yellow = r.digest()
        self_hash = r.digest()
        r.expect_end()
        return MedicalBlock(coord, entries, prev_yellow, is_final_byte == 1, self_hash)
    if kind == BlockKind.LOG:
        coord = _read_coord(r)
        event_byte = r.u8()
        try:
            event = AccessEvent(event_byte)
        except ValueError:
            raise ValueError(f"unknown access event {event_byte:#x}") from None
        actor = r.string()
        timestamp = r.u64()
        place = r.string()
        viewed = r.string()
        h_main = r.digest()
        h_yellow = r.digest()
        h_prev_red = r.digest()
        self_hash = r.digest()
        r.expect_end()
        return LogBlock(
            coord, event, actor, timestamp, place, viewed, h_main, h_yellow, h_prev_red, self_hash
        )
    raise ValueError(f"unknown block kind {kind:#x}")


def note_canonical(note: GlobalAuditNote) -> bytes:
    return (
        _u8(BlockKind.AUDIT_NOTE)
        + _string(note.actor)
        + _u64(note.timestamp)
        + _string(note.place)
        + _string(note.detail)
        + _digest(note.prev_hash)
    )


def note_hash(note: GlobalAuditNote) -> Digest:
    return hashlib.sha256(note_canonical(note)).digest()


def sealed_note(note: GlobalAuditNote) -> GlobalAuditNote:
    return replace(note, self_hash=note_hash(note))


def encode_note(note: GlobalAuditNote) -> bytes:
    return note_canonical(note) + _digest(note.self_hash)


def decode_note(data: bytes) -> GlobalAuditNote:
    r = _Reader(data)
    kind = r.u8()
    if kind != BlockKind.AUDIT_NOTE:
        raise ValueError(f"not an audit note record (kind {kind:#x})")
    actor = r.string()
    timestamp = r.u64()
    place = r.string()
    detail = r.string()
    prev_hash = r.digest()
    self_hash = r.digest()
    r.expect_end()
    return GlobalAuditNote(actor, timestamp, place, detail, prev_hash, self_hash)


# --- debug rendering ----------------------------------------------------------


def render_block(block: Block | GlobalAuditNote) -> str:
    """Human-readable key=value rendering, one field per line. Never parsed back."""
    lines = [f"kind={type(block).__name__}"]
    if isinstance(block, GlobalAuditNote):
        lines += [
            f"actor={block.actor}",
            f"timestamp={block.timestamp}",
            f"place={block.place}",
            f"detail={block.detail}",
            f"prev_hash={block.prev_hash.hex()}",
            f"self_hash={block.self_hash.hex()}",
        ]
        return "\n".join(lines)
    lines.append(f"coord={block.coord.label()}")
    if isinstance(block, IdentityBlock):
        lines.append(f"variant={block.variant.name.lower()}")
        lines.append(f"fiscal_code={block.fiscal_code}")
        for k in sorted(block.personal_info):
            lines.append(f"info.{k}={block.personal_info[k]}")
        if block.fiscal_change is not None:
            lines.append(f"fiscal_change.new_code={block.fiscal_change.new_code}")
            lines.append(f"fiscal_change.old_code={block.fiscal_change.old_code}")
            lines.append(f"fiscal_change.prev_identity={block.fiscal_change.prev_identity.hex()}")
        if block.catalog is not None:
            for code, lab in block.catalog.entries:
                lines.append(f"catalog.{code}={lab}")
            prev = block.catalog.prev_catalog
            lines.append(f"catalog.prev={'-' if prev is None else prev.hex()}")
        lines.append(f"prev_main={block.prev_main.hex()}")
    elif isinstance(block, MedicalBlock):
        lines.append(f"is_final={str(block.is_final).lower()}")
        for i, e in enumerate(block.entries):
            prev = "-" if e.prev_same_type is None else e.prev_same_type.hex()
            lines.append(f"entry.{i}={e.record_type}:{e.payload.hex()}:{prev}")
        lines.append(f"prev_yellow={block.prev_yellow.hex()}")
    else:
        lines.append(f"event={block.event.name.lower()}")
        lines.append(f"actor={block.actor}")
        lines.append(f"timestamp={block.timestamp}")
        lines.append(f"place={block.place}")
        lines.append(f"viewed={block.viewed}")
        lines.append(f"h_main={block.h_main.hex()}")
        lines.append(f"h_yellow={block.h_yellow.hex()}")
        lines.append(f"h_prev_red={block.h_prev_red.hex()}")
    lines.append(f"self_hash={block.self_hash.hex()}")
    return "\n".join(lines)


# --- targeted field edits (tamper tooling) ------------------------------------


def _parse_value(current, text: str):
    """Parse a CLI/script value string into the type of the field it replaces."""
    if isinstance(current, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(current, int) and not isinstance(current, IntEnum):
        return int(text)
    if isinstance(current, AccessEvent):
        try:
            return AccessEvent[text.upper()]
        except KeyError:
            raise ValueError(f"unknown access event {text!r}") from None
    if isinstance(current, IdentityVariant):
        try:
            return IdentityVariant[text.upper()]
        except KeyError:
            raise ValueError(f"unknown identity variant {text!r}") from None
    if isinstance(current, bytes):
        if len(current) == DIGEST_SIZE:
            raw = bytes.fromhex(text)
            if len(raw) != DIGEST_SIZE:
                raise ValueError(f"digest value must be {DIGEST_SIZE} hex bytes")
            return raw
        return text.encode("utf-8")
    if isinstance(current, str):
        return text
    raise ValueError(f"cannot parse a value for field of type {type(current).__name__}")


def mutate_block(block: Block, field_path: str, value) -> Block:
    """Return a copy of the block with one field replaced, self_hash untouched.

    This is a raw edit that bypasses sealing, the tool for tamper
    injection. Paths: a top-level field name, ``info.<key>``,
    ``entry.<i>.payload`` / ``entry.<i>.record_type`` /
    ``entry.<i>.prev_same_type``. String values are parsed to the field's
    type; already-typed values pass through.
    """
    parts = field_path.split(".")
    if parts[0] == "info" and isinstance(block, IdentityBlock) and len(parts) == 2:
        info = dict(block.personal_info)
        info[parts[1]] = value
        return replace(block, personal_info=info)
    if parts[0] == "entry" and isinstance(block, MedicalBlock) and len(parts) == 3:
        idx = int(parts[1])
        if not 0 <= idx < len(block.entries):
            raise NoSuchBlock(f"no entry {idx} in block {block.coord.label()}")
        entry = block.entries[idx]
        current = getattr(entry, parts[2])
        if isinstance(value, str) and not isinstance(current, str):
            value = _parse_value(current if current is not None else ZERO_DIGEST, value)
        entries = list(block.entries)
        entries[idx] = replace(entry, **{parts[2]: value})
        return replace(block, entries=tuple(entries))
    if len(parts) == 1 and hasattr(block, parts[0]):
        current = getattr(block, parts[0])
        if isinstance(value, str) and not isinstance(current, str):
            value = _parse_value(current, value)
        return replace(block, **{parts[0]: value})
    raise ValueError(f"unknown field path {field_path!r} for {type(block).__name__}")
