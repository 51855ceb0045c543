"""Deterministic account-model ledger with tax-period freezing.

At every tax-auditing height (a positive multiple of the period length) the
funded addresses that are not certified are frozen. A frozen address may
only pay into a *certified address*: an address plus an authority signature
over it. Authorities rotate keys by signing the successor key, and certify
one block per audit height as a checkpoint that fork choice never reverts.

All values are immutable; ``apply_*`` functions return new states.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Sequence, Union

from .crypto import (
    ADDRESS_LEN,
    ELEMENT_LEN,
    SIGNATURE_LEN,
    Address,
    EncodingError,
    GroupElement,
    KeyPair,
    hash_to_address,
    sign,
    tagged_hash,
    verify,
)

DEFAULT_PERIOD = 52560
CERTIFIED_ADDRESS_LEN = ADDRESS_LEN + SIGNATURE_LEN + 2

TAG_BLOCK = b"TAXP/block/v1"
TAG_GENESIS = b"TAXP/genesis/v1"
TAG_TX = b"TAXP/tx/v1"
TAG_ROTATE = b"TAXP/rotate/v1"
TAG_CHECKPOINT = b"TAXP/checkpoint/v1"


# ---------------------------------------------------------------------------
# errors


class LedgerError(Exception):
    """Base class; the class name doubles as the outcome tag in reports."""

    @property
    def tag(self) -> str:
        return type(self).__name__


class InvalidTransaction(LedgerError):
    pass


class BadAuthSignature(LedgerError):
    pass


class BadNonce(LedgerError):
    pass


class BadCertification(LedgerError):
    pass


class FrozenSource(LedgerError):
    pass


class InsufficientBalance(LedgerError):
    pass


class HeightMismatch(LedgerError):
    pass


class ParentMismatch(LedgerError):
    pass


class BadHandover(LedgerError):
    pass


class NotAuditHeight(LedgerError):
    pass


class BadCheckpointSig(LedgerError):
    pass


class ConflictingCheckpoint(LedgerError):
    pass


class NoValidChain(LedgerError):
    pass


# ---------------------------------------------------------------------------
# configuration and status


@dataclass(frozen=True)
class TaxPeriodConfig:
    """``certification_lapses``: on-ledger certified status covers one period
    only and is cleared after each freeze snapshot. Off by default."""

    period_blocks: int = DEFAULT_PERIOD
    certification_lapses: bool = False

    def __post_init__(self):
        if self.period_blocks < 1:
            raise ValueError("period_blocks must be >= 1")


class FreezeStatus(enum.Enum):
    LIQUID = "Liquid"
    FROZEN = "Frozen"

    def __str__(self) -> str:
        return self.value


def is_tax_audit_height(h: int, cfg: TaxPeriodConfig | None = None) -> bool:
    if h < 0:
        raise ValueError("height must be non-negative")
    cfg = cfg or TaxPeriodConfig()
    return h > 0 and h % cfg.period_blocks == 0


# ---------------------------------------------------------------------------
# wire helpers


class _Writer:
    def __init__(self):
        self.buf = bytearray()

    def u8(self, x: int):
        self.buf += struct.pack(">B", x)
        return self

    def u16(self, x: int):
        self.buf += struct.pack(">H", x)
        return self

    def u32(self, x: int):
        self.buf += struct.pack(">I", x)
        return self

    def u64(self, x: int):
        self.buf += struct.pack(">Q", x)
        return self

    def raw(self, b: bytes):
        self.buf += b
        return self

    def var(self, b: bytes):
        return self.u32(len(b)).raw(b)


class _Reader:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.off = 0

    def raw(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise EncodingError("truncated record")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self.raw(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.raw(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.raw(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.raw(8))[0]

    def var(self) -> bytes:
        return self.raw(self.u32())

    def done(self) -> None:
        if self.off != len(self.data):
            raise EncodingError("trailing bytes after record")


# ---------------------------------------------------------------------------
# certified addresses and transactions


@dataclass(frozen=True)
class CertifiedAddress:
    alpha: Address
    sigma: bytes
    authority_id: int

    def to_bytes(self) -> bytes:
        return self.alpha.raw + self.sigma + self.authority_id.to_bytes(2, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> CertifiedAddress:
        if len(data) != CERTIFIED_ADDRESS_LEN:
            raise EncodingError(f"certified address must be {CERTIFIED_ADDRESS_LEN} bytes")
        return cls(Address(data[:25]), bytes(data[25:89]), int.from_bytes(data[89:], "big"))


def certification_message(alpha: Address) -> bytes:
    return alpha.raw


def certify(alpha: Address, authority_sk: int, authority_id: int) -> CertifiedAddress:
    return CertifiedAddress(alpha, sign(certification_message(alpha), authority_sk), authority_id)


Destination = Union[Address, CertifiedAddress]


def dest_address(dest: Destination) -> Address:
    return dest.alpha if isinstance(dest, CertifiedAddress) else dest


def _encode_dest(w: _Writer, dest: Destination) -> None:
    if isinstance(dest, CertifiedAddress):
        w.u8(1).raw(dest.to_bytes())
    else:
        w.u8(0).raw(dest.raw)


def _decode_dest(r: _Reader) -> Destination:
    kind = r.u8()
    if kind == 0:
        return Address(r.raw(ADDRESS_LEN))
    if kind == 1:
        return CertifiedAddress.from_bytes(r.raw(CERTIFIED_ADDRESS_LEN))
    raise EncodingError(f"unknown destination kind {kind}")


@dataclass(frozen=True)
class Transaction:
    """Transfer of ``amount`` from ``source`` (= H(source_vk)) to ``destination``."""

    source: Address
    source_vk: GroupElement
    destination: Destination
    amount: int
    nonce: int
    auth: bytes = b""

    def signing_bytes(self) -> bytes:
        w = _Writer().raw(TAG_TX).raw(self.source.raw).raw(self.source_vk.to_bytes())
        _encode_dest(w, self.destination)
        return bytes(w.u64(self.amount).u64(self.nonce).buf)

    def encode(self) -> bytes:
        w = _Writer().raw(self.source.raw).raw(self.source_vk.to_bytes())
        _encode_dest(w, self.destination)
        return bytes(w.u64(self.amount).u64(self.nonce).var(self.auth).buf)

    @classmethod
    def _read(cls, r: _Reader) -> Transaction:
        source = Address(r.raw(ADDRESS_LEN))
        vk = GroupElement.from_bytes(r.raw(ELEMENT_LEN))
        dest = _decode_dest(r)
        return cls(source, vk, dest, r.u64(), r.u64(), r.var())

    def to_text(self) -> dict:
        d = self.destination
        dest = (
            {"certified": d.to_bytes().hex()}
            if isinstance(d, CertifiedAddress)
            else {"address": d.hex()}
        )
        return {
            "source": self.source.hex(),
            "source_vk": self.source_vk.to_bytes().hex(),
            "destination": dest,
            "amount": self.amount,
            "nonce": self.nonce,
            "auth": self.auth.hex(),
        }

    @classmethod
    def from_text(cls, doc: dict) -> Transaction:
        dd = doc["destination"]
        if "certified" in dd:
            dest: Destination = CertifiedAddress.from_bytes(bytes.fromhex(dd["certified"]))
        else:
            dest = Address.from_hex(dd["address"])
        return cls(
            Address.from_hex(doc["source"]),
            GroupElement.from_bytes(bytes.fromhex(doc["source_vk"])),
            dest,
            int(doc["amount"]),
            int(doc["nonce"]),
            bytes.fromhex(doc["auth"]),
        )


def make_transaction(
    kp: KeyPair, destination: Destination, amount: int, nonce: int
) -> Transaction:
    tx = Transaction(hash_to_address(kp.vk), kp.vk, destination, amount, nonce)
    return replace(tx, auth=sign(tx.signing_bytes(), kp.sk))


# ---------------------------------------------------------------------------
# blocks


@dataclass(frozen=True)
class AuthorityUpdate:
    authority_id: int
    new_vk: GroupElement
    handover_sig: bytes


def handover_message(authority_id: int, new_vk: GroupElement) -> bytes:
    return TAG_ROTATE + authority_id.to_bytes(2, "big") + new_vk.to_bytes()


@dataclass(frozen=True)
class CheckpointRecord:
    authority_id: int
    height: int
    block_id: bytes
    sig: bytes


def checkpoint_message(height: int, block_id: bytes) -> bytes:
    return TAG_CHECKPOINT + height.to_bytes(8, "big") + block_id


@dataclass(frozen=True)
class Block:
    height: int
    parent: bytes
    txs: tuple[Transaction, ...] = ()
    authority_updates: tuple[AuthorityUpdate, ...] = ()
    checkpoint: CheckpointRecord | None = None

    def __post_init__(self):
        object.__setattr__(self, "txs", tuple(self.txs))
        object.__setattr__(self, "authority_updates", tuple(self.authority_updates))

    def encode(self) -> bytes:
        w = _Writer().u64(self.height).raw(self.parent)
        w.u32(len(self.txs))
        for tx in self.txs:
            w.var(tx.encode())
        w.u32(len(self.authority_updates))
        for up in self.authority_updates:
            w.u16(up.authority_id).raw(up.new_vk.to_bytes()).raw(up.handover_sig)
        if self.checkpoint is None:
            w.u8(0)
        else:
            cp = self.checkpoint
            w.u8(1).u16(cp.authority_id).u64(cp.height).raw(cp.block_id).raw(cp.sig)
        return bytes(w.buf)

    @classmethod
    def decode(cls, data: bytes) -> Block:
        r = _Reader(data)
        height, parent = r.u64(), r.raw(32)
        txs = []
        for _ in range(r.u32()):
            inner = _Reader(r.var())
            txs.append(Transaction._read(inner))
            inner.done()
        ups = []
        for _ in range(r.u32()):
            ups.append(
                AuthorityUpdate(r.u16(), GroupElement.from_bytes(r.raw(ELEMENT_LEN)), r.raw(64))
            )
        cp = None
        if r.u8():
            cp = CheckpointRecord(r.u16(), r.u64(), r.raw(32), r.raw(64))
        r.done()
        return cls(height, parent, txs, ups, cp)

    @property
    def block_id(self) -> bytes:
        return tagged_hash(TAG_BLOCK, self.encode())

    def to_text(self) -> dict:
        doc = {
            "height": self.height,
            "parent": self.parent.hex(),
            "txs": [tx.to_text() for tx in self.txs],
            "authority_updates": [
                {
                    "authority_id": u.authority_id,
                    "new_vk": u.new_vk.to_bytes().hex(),
                    "handover_sig": u.handover_sig.hex(),
                }
                for u in self.authority_updates
            ],
            "checkpoint": None,
        }
        if self.checkpoint is not None:
            cp = self.checkpoint
            doc["checkpoint"] = {
                "authority_id": cp.authority_id,
                "height": cp.height,
                "block_id": cp.block_id.hex(),
                "sig": cp.sig.hex(),
            }
        return doc

    @classmethod
    def from_text(cls, doc: dict) -> Block:
        ups = [
            AuthorityUpdate(
                int(u["authority_id"]),
                GroupElement.from_bytes(bytes.fromhex(u["new_vk"])),
                bytes.fromhex(u["handover_sig"]),
            )
            for u in doc.get("authority_updates", [])
        ]
        cp = doc.get("checkpoint")
        if cp is not None:
            cp = CheckpointRecord(
                int(cp["authority_id"]),
                int(cp["height"]),
                bytes.fromhex(cp["block_id"]),
                bytes.fromhex(cp["sig"]),
            )
        return cls(
            int(doc["height"]),
            bytes.fromhex(doc["parent"]),
            [Transaction.from_text(t) for t in doc.get("txs", [])],
            ups,
            cp,
        )


# ---------------------------------------------------------------------------
# state


def _frozen_map(d) -> Mapping:
    return MappingProxyType(dict(d))


@dataclass(frozen=True)
class LedgerState:
    height: int
    tip: bytes
    balances: Mapping[Address, int]
    certified: frozenset[Address] = frozenset()
    frozen: frozenset[Address] = frozenset()
    nonces: Mapping[Address, int] = field(default_factory=dict)
    authority_keys: Mapping[int, tuple[GroupElement, ...]] = field(default_factory=dict)
    checkpoints: Mapping[int, bytes] = field(default_factory=dict)
    last_audit: int = 0

    def __post_init__(self):
        object.__setattr__(self, "balances", _frozen_map(self.balances))
        object.__setattr__(self, "nonces", _frozen_map(self.nonces))
        object.__setattr__(
            self,
            "authority_keys",
            _frozen_map({k: tuple(v) for k, v in self.authority_keys.items()}),
        )
        object.__setattr__(self, "checkpoints", _frozen_map(self.checkpoints))
        object.__setattr__(self, "certified", frozenset(self.certified))
        object.__setattr__(self, "frozen", frozenset(self.frozen))

    def balance_of(self, addr: Address) -> int:
        return self.balances.get(addr, 0)

    def nonce_of(self, addr: Address) -> int:
        return self.nonces.get(addr, 0)

    def current_key(self, authority_id: int) -> GroupElement | None:
        chain = self.authority_keys.get(authority_id)
        return chain[-1] if chain else None

    @property
    def total_supply(self) -> int:
        return sum(self.balances.values())

    # canonical encoding: maps sorted by key, zero balances omitted

    def encode(self) -> bytes:
        w = _Writer().u64(self.height).raw(self.tip).u64(self.last_audit)
        bal = sorted((a, b) for a, b in self.balances.items() if b)
        w.u32(len(bal))
        for a, b in bal:
            w.raw(a.raw).u64(b)
        for s in (self.certified, self.frozen):
            w.u32(len(s))
            for a in sorted(s):
                w.raw(a.raw)
        non = sorted(self.nonces.items())
        w.u32(len(non))
        for a, n in non:
            w.raw(a.raw).u64(n)
        w.u32(len(self.authority_keys))
        for aid in sorted(self.authority_keys):
            chain = self.authority_keys[aid]
            w.u16(aid).u32(len(chain))
            for vk in chain:
                w.raw(vk.to_bytes())
        w.u32(len(self.checkpoints))
        for h in sorted(self.checkpoints):
            w.u64(h).raw(self.checkpoints[h])
        return bytes(w.buf)

    @classmethod
    def decode(cls, data: bytes) -> LedgerState:
        r = _Reader(data)
        height, tip, last_audit = r.u64(), r.raw(32), r.u64()
        balances = {}
        for _ in range(r.u32()):
            a = Address(r.raw(ADDRESS_LEN))
            balances[a] = r.u64()
        sets = []
        for _ in range(2):
            sets.append({Address(r.raw(ADDRESS_LEN)) for _ in range(r.u32())})
        nonces = {}
        for _ in range(r.u32()):
            a = Address(r.raw(ADDRESS_LEN))
            nonces[a] = r.u64()
        keys = {}
        for _ in range(r.u32()):
            aid = r.u16()
            keys[aid] = tuple(GroupElement.from_bytes(r.raw(ELEMENT_LEN)) for _ in range(r.u32()))
        cps = {}
        for _ in range(r.u32()):
            h = r.u64()
            cps[h] = r.raw(32)
        r.done()
        return cls(height, tip, balances, sets[0], sets[1], nonces, keys, cps, last_audit)

    def digest(self) -> str:
        return hashlib.sha256(self.encode()).hexdigest()

    def to_text(self) -> dict:
        return {
            "height": self.height,
            "tip": self.tip.hex(),
            "last_audit": self.last_audit,
            "balances": {a.hex(): b for a, b in sorted(self.balances.items()) if b},
            "certified": sorted(a.hex() for a in self.certified),
            "frozen": sorted(a.hex() for a in self.frozen),
            "nonces": {a.hex(): n for a, n in sorted(self.nonces.items())},
            "authority_keys": {
                str(aid): [vk.to_bytes().hex() for vk in self.authority_keys[aid]]
                for aid in sorted(self.authority_keys)
            },
            "checkpoints": {str(h): self.checkpoints[h].hex() for h in sorted(self.checkpoints)},
        }

    @classmethod
    def from_text(cls, doc: dict) -> LedgerState:
        return cls(
            int(doc["height"]),
            bytes.fromhex(doc["tip"]),
            {Address.from_hex(a): int(b) for a, b in doc["balances"].items()},
            {Address.from_hex(a) for a in doc["certified"]},
            {Address.from_hex(a) for a in doc["frozen"]},
            {Address.from_hex(a): int(n) for a, n in doc["nonces"].items()},
            {
                int(aid): tuple(GroupElement.from_bytes(bytes.fromhex(k)) for k in chain)
                for aid, chain in doc["authority_keys"].items()
            },
            {int(h): bytes.fromhex(b) for h, b in doc["checkpoints"].items()},
            int(doc.get("last_audit", 0)),
        )

    def dumps(self, fmt: str = "binary") -> bytes:
        if fmt == "text":
            return (json.dumps(self.to_text(), indent=2) + "\n").encode()
        return self.encode()

    @classmethod
    def loads(cls, data: bytes) -> LedgerState:
        if data[:1] == b"{":
            return cls.from_text(json.loads(data.decode()))
        return cls.decode(data)


def genesis(
    authorities: Mapping[int, GroupElement],
    balances: Mapping[Address, int],
) -> LedgerState:
    """Height-0 state: authority keys and the initial (only) allocation."""
    for b in balances.values():
        if b < 0:
            raise ValueError("genesis balances must be non-negative")
    w = _Writer()
    for aid in sorted(authorities):
        w.u16(aid).raw(authorities[aid].to_bytes())
    for a, b in sorted(balances.items()):
        w.raw(a.raw).u64(b)
    tip = tagged_hash(TAG_GENESIS, bytes(w.buf))
    return LedgerState(
        0, tip, dict(balances), authority_keys={k: (v,) for k, v in authorities.items()}
    )


# ---------------------------------------------------------------------------
# transition rules


def freeze_status(state: LedgerState, addr: Address) -> FreezeStatus:
    if addr in state.frozen and addr not in state.certified:
        return FreezeStatus.FROZEN
    return FreezeStatus.LIQUID


def certification_valid(state: LedgerState, ca: CertifiedAddress) -> bool:
    """Valid under any key in the authority's chain, current or superseded."""
    chain = state.authority_keys.get(ca.authority_id, ())
    msg = certification_message(ca.alpha)
    return any(verify(msg, ca.sigma, vk) for vk in chain)


def check_transaction(state: LedgerState, tx: Transaction) -> None:
    """Raise the first rule ``tx`` violates against ``state``.

    Checks run in a fixed order: shape, authorisation, nonce, certification,
    freezing, balance.
    """
    if tx.amount <= 0:
        raise InvalidTransaction("amount must be positive")
    if hash_to_address(tx.source_vk) != tx.source:
        raise InvalidTransaction("source address does not match source key")
    if not verify(tx.signing_bytes(), tx.auth, tx.source_vk):
        raise BadAuthSignature("transaction signature does not verify")
    if tx.nonce != state.nonce_of(tx.source):
        raise BadNonce(f"expected nonce {state.nonce_of(tx.source)}, got {tx.nonce}")
    certified_dest = isinstance(tx.destination, CertifiedAddress)
    if certified_dest and not certification_valid(state, tx.destination):
        raise BadCertification("destination certification does not verify")
    if freeze_status(state, tx.source) is FreezeStatus.FROZEN and not certified_dest:
        raise FrozenSource("frozen assets may only move to a certified address")
    if state.balance_of(tx.source) < tx.amount:
        raise InsufficientBalance(
            f"balance {state.balance_of(tx.source)} < amount {tx.amount}"
        )


def apply_transaction(state: LedgerState, tx: Transaction) -> LedgerState:
    check_transaction(state, tx)
    balances = dict(state.balances)
    dest = dest_address(tx.destination)
    balances[tx.source] -= tx.amount
    balances[dest] = balances.get(dest, 0) + tx.amount
    nonces = dict(state.nonces)
    nonces[tx.source] = tx.nonce + 1
    certified = state.certified
    if isinstance(tx.destination, CertifiedAddress):
        certified = certified | {dest}
    return replace(state, balances=balances, nonces=nonces, certified=certified)


def rotate_authority_key(
    state: LedgerState, authority_id: int, new_vk: GroupElement, handover_sig: bytes
) -> LedgerState:
    current = state.current_key(authority_id)
    if current is None:
        raise BadHandover(f"unknown authority {authority_id}")
    if new_vk.is_identity():
        raise BadHandover("identity is not a valid key")
    if not verify(handover_message(authority_id, new_vk), handover_sig, current):
        raise BadHandover("handover not signed by the current authority key")
    keys = dict(state.authority_keys)
    keys[authority_id] = keys[authority_id] + (new_vk,)
    return replace(state, authority_keys=keys)


def certify_checkpoint(
    state: LedgerState,
    height: int,
    block_id: bytes,
    sig: bytes,
    authority_id: int = 0,
    cfg: TaxPeriodConfig | None = None,
) -> LedgerState:
    if not is_tax_audit_height(height, cfg):
        raise NotAuditHeight(f"height {height} is not a tax-auditing height")
    current = state.current_key(authority_id)
    if current is None or not verify(checkpoint_message(height, block_id), sig, current):
        raise BadCheckpointSig("checkpoint not signed by the current authority key")
    existing = state.checkpoints.get(height)
    if existing is not None:
        if existing != block_id:
            raise ConflictingCheckpoint(f"height {height} already checkpointed")
        return state
    cps = dict(state.checkpoints)
    cps[height] = block_id
    return replace(state, checkpoints=cps)


def apply_block(
    state: LedgerState, block: Block, cfg: TaxPeriodConfig | None = None
) -> LedgerState:
    """Apply a whole block or nothing.

    Order: authority key updates, transactions, checkpoint, then the freeze
    snapshot if ``block.height`` is a tax-auditing height (transactions in
    the auditing block itself still see the pre-freeze state).
    """
    cfg = cfg or TaxPeriodConfig()
    if block.height != state.height + 1:
        raise HeightMismatch(f"expected height {state.height + 1}, got {block.height}")
    if block.parent != state.tip:
        raise ParentMismatch("block does not extend the current tip")
    s = state
    for up in block.authority_updates:
        s = rotate_authority_key(s, up.authority_id, up.new_vk, up.handover_sig)
    for tx in block.txs:
        s = apply_transaction(s, tx)
    if block.checkpoint is not None:
        cp = block.checkpoint
        s = certify_checkpoint(s, cp.height, cp.block_id, cp.sig, cp.authority_id, cfg)
    changes: dict = {"height": block.height, "tip": block.block_id}
    if is_tax_audit_height(block.height, cfg):
        changes["frozen"] = frozenset(
            a for a, b in s.balances.items() if b > 0 and a not in s.certified
        )
        changes["last_audit"] = block.height
        if cfg.certification_lapses:
            changes["certified"] = frozenset()
    return replace(s, **changes)


def empty_block(state: LedgerState, txs: Sequence[Transaction] = ()) -> Block:
    return Block(state.height + 1, state.tip, tuple(txs))


# ---------------------------------------------------------------------------
# fork choice


Chain = Sequence[Block]


def chain_complies(chain: Chain, checkpoints: Mapping[int, bytes]) -> bool:
    ids = {b.height: b.block_id for b in chain}
    return all(ids.get(h) == bid for h, bid in checkpoints.items())


def fork_choice(candidates: Sequence[Chain], checkpoints: Mapping[int, bytes]) -> Chain:
    """Longest chain among those containing every checkpointed block.

    Ties go to the smaller tip identifier.
    """
    ok = [c for c in candidates if c and chain_complies(c, checkpoints)]
    if not ok:
        raise NoValidChain("no candidate contains every checkpointed block")
    return min(ok, key=lambda c: (-c[-1].height, c[-1].block_id))
