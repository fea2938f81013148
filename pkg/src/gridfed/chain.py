"""Append-only hash-chained ledger of energy transactions.

Block content is hashed with SHA-256 over a fixed big-endian layout::

    u64 index | 32B prev_hash | u64 timestamp | u32 tx_count | tx*

    tx = u64 tx_id | u8 kind | u64 actor | u64 counterparty
         | u64 amount_wh | u64 price_milli_per_kwh | u8 period

Actor/counterparty 0 is the grid.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

GRID = 0
HASH_SIZE = 32
ZERO_HASH = bytes(HASH_SIZE)

_HEADER = struct.Struct(">Q32sQI")
_TX = struct.Struct(">QBQQQQB")
_U64_MAX = 2**64 - 1


class LedgerError(Exception):
    pass


class Kind(enum.IntEnum):
    OFFER = 0
    REQUEST = 1
    SETTLEMENT = 2


class Leg(enum.IntEnum):
    """Settlement sub-type, carried in bits 32..39 of the tx_id."""

    SALE = 0  # prosumer -> grid
    DELIVERY = 1  # grid -> consumer, from surplus pool
    IMPORT = 2  # grid -> consumer, external supply


def make_tx_id(period: int, kind: Kind, house_id: int, leg: int = 0) -> int:
    if not 0 <= period < 256 or not 0 <= house_id < 2**32:
        raise LedgerError(f"cannot build tx_id from period={period}, house={house_id}")
    return (period << 48) | (int(kind) << 40) | (int(leg) << 32) | house_id


def tx_leg(tx_id: int) -> Leg:
    return Leg((tx_id >> 32) & 0xFF)


@dataclass(frozen=True)
class EnergyTransaction:
    tx_id: int
    kind: Kind
    actor: int
    counterparty: int
    amount: int  # Wh
    price_milli: int  # milli-currency per kWh
    period: int

    def __post_init__(self):
        if self.amount <= 0:
            raise LedgerError(f"tx {self.tx_id}: amount must be > 0, got {self.amount}")
        if max(self.tx_id, self.actor, self.counterparty, self.amount, self.price_milli) > _U64_MAX or min(
            self.tx_id, self.actor, self.counterparty, self.price_milli
        ) < 0:
            raise LedgerError(f"tx {self.tx_id}: field out of u64 range")
        if not 0 <= self.period < 256:
            raise LedgerError(f"tx {self.tx_id}: period out of u8 range")

    @property
    def leg(self) -> Leg | None:
        return tx_leg(self.tx_id) if self.kind is Kind.SETTLEMENT else None

    def pack(self) -> bytes:
        return _TX.pack(
            self.tx_id, int(self.kind), self.actor, self.counterparty,
            self.amount, self.price_milli, self.period,
        )

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "kind": self.kind.name.lower(),
            "actor": self.actor,
            "counterparty": self.counterparty,
            "amount_wh": self.amount,
            "price_milli": self.price_milli,
            "period": self.period,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EnergyTransaction":
        return cls(
            tx_id=int(raw["tx_id"]),
            kind=Kind[str(raw["kind"]).upper()],
            actor=int(raw["actor"]),
            counterparty=int(raw["counterparty"]),
            amount=int(raw["amount_wh"]),
            price_milli=int(raw["price_milli"]),
            period=int(raw["period"]),
        )


def serialize_content(
    index: int, prev_hash: bytes, timestamp: int, transactions: Sequence[EnergyTransaction]
) -> bytes:
    parts = [_HEADER.pack(index, prev_hash, timestamp, len(transactions))]
    parts.extend(tx.pack() for tx in transactions)
    return b"".join(parts)


def content_hash(
    index: int, prev_hash: bytes, timestamp: int, transactions: Sequence[EnergyTransaction]
) -> bytes:
    return hashlib.sha256(serialize_content(index, prev_hash, timestamp, transactions)).digest()


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    timestamp: int
    transactions: tuple[EnergyTransaction, ...]
    hash: bytes

    # blocks are immutable, so the serialized content can be computed once
    @cached_property
    def _content(self) -> bytes:
        return serialize_content(self.index, self.prev_hash, self.timestamp, self.transactions)

    def content(self) -> bytes:
        return self._content

    def recompute_hash(self) -> bytes:
        return hashlib.sha256(self.content()).digest()

    def encode(self) -> bytes:
        """Canonical content followed by the stored 32-byte hash."""
        return self.content() + self.hash

    @classmethod
    def decode(cls, data: bytes) -> "Block":
        if len(data) < _HEADER.size + HASH_SIZE:
            raise LedgerError("block too short")
        index, prev_hash, timestamp, count = _HEADER.unpack_from(data, 0)
        expected = _HEADER.size + count * _TX.size + HASH_SIZE
        if len(data) != expected:
            raise LedgerError(f"block length {len(data)} != {expected} for {count} transactions")
        offset = _HEADER.size + count * _TX.size
        kinds = {int(k): k for k in Kind}
        txs = []
        for tx_id, kind, actor, cp, amount, price, period in _TX.iter_unpack(data[_HEADER.size:offset]):
            if kind not in kinds:
                raise LedgerError(f"unknown transaction kind {kind}")
            txs.append(EnergyTransaction(tx_id, kinds[kind], actor, cp, amount, price, period))
        return cls(index, prev_hash, timestamp, tuple(txs), data[offset:])

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "prev_hash": self.prev_hash.hex(),
            "timestamp": self.timestamp,
            "transactions": [tx.to_dict() for tx in self.transactions],
            "hash": self.hash.hex(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Block":
        return cls(
            index=int(raw["index"]),
            prev_hash=bytes.fromhex(raw["prev_hash"]),
            timestamp=int(raw["timestamp"]),
            transactions=tuple(EnergyTransaction.from_dict(t) for t in raw["transactions"]),
            hash=bytes.fromhex(raw["hash"]),
        )


def make_block(
    index: int, prev_hash: bytes, timestamp: int, transactions: Iterable[EnergyTransaction]
) -> Block:
    txs = tuple(transactions)
    return Block(index, prev_hash, timestamp, txs, content_hash(index, prev_hash, timestamp, txs))


def genesis() -> Block:
    return make_block(0, ZERO_HASH, 0, ())


@dataclass(frozen=True)
class ChainReport:
    valid: bool
    block_index: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        if self.valid:
            return "chain valid"
        return f"block {self.block_index}: {self.reason}"


def validate_chain(chain: Sequence[Block]) -> ChainReport:
    """Check genesis shape, every stored hash and every back-link.

    Reports the first violation found, scanning from genesis.
    """
    if not chain:
        return ChainReport(False, None, "empty chain")
    for pos, block in enumerate(chain):
        if block.index != pos:
            return ChainReport(False, pos, f"index {block.index} at position {pos}")
        if len(block.prev_hash) != HASH_SIZE or len(block.hash) != HASH_SIZE:
            return ChainReport(False, pos, "malformed digest length")
        if pos == 0:
            if block.prev_hash != ZERO_HASH:
                return ChainReport(False, 0, "genesis prev_hash is not zero")
            if block.transactions:
                return ChainReport(False, 0, "genesis carries transactions")
        elif block.prev_hash != chain[pos - 1].hash:
            return ChainReport(False, pos, "prev_hash does not match preceding block")
        try:
            recomputed = block.recompute_hash()
        except struct.error as exc:
            return ChainReport(False, pos, f"unserializable content ({exc})")
        if recomputed != block.hash:
            return ChainReport(False, pos, "stored hash does not match content")
    return ChainReport(True)


def append_block(
    chain: Sequence[Block], transactions: Iterable[EnergyTransaction], timestamp: int
) -> list[Block]:
    """Return a new chain with one more block; ``chain`` itself is untouched."""
    report = validate_chain(chain)
    if not report:
        raise LedgerError(f"refusing to append to invalid chain: {report}")
    txs = tuple(transactions)
    ids = [tx.tx_id for tx in txs]
    if len(set(ids)) != len(ids):
        raise LedgerError("duplicate tx_id within block")
    head = chain[-1]
    if timestamp < head.timestamp:
        raise LedgerError(f"timestamp {timestamp} precedes head timestamp {head.timestamp}")
    return [*chain, make_block(head.index + 1, head.hash, timestamp, txs)]


def dump_jsonl(chain: Sequence[Block], path: str | Path) -> None:
    lines = [json.dumps(b.to_dict(), sort_keys=True, separators=(",", ":")) for b in chain]
    Path(path).write_text("\n".join(lines) + "\n")


def load_jsonl(path: str | Path) -> list[Block]:
    """Parse a ledger file. Raises ``LedgerError`` on anything unparseable."""
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise LedgerError(f"not UTF-8 text: {exc}") from None
    blocks = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            blocks.append(Block.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError, LedgerError) as exc:
            raise LedgerError(f"line {lineno}: {exc}") from None
    if not blocks:
        raise LedgerError("ledger file holds no blocks")
    return blocks
