"""Provisions proof-of-assets commitments over an anonymity set of keys.

For each key ``y_i`` with public balance ``bal_i`` the prover publishes

    p_i = b_i^{s_i} * h^{v_i}      with b_i = g^{bal_i}
    l_i = y_i^{s_i} * h^{t_i}

where ``s_i`` is 1 exactly when the prover holds the private key of ``y_i``.
The product of all ``p_i`` is a Pedersen commitment to the total assets.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .crypto import (
    ELEMENT_LEN,
    Q,
    EncodingError,
    GroupElement,
    GroupParams,
    ScalarSource,
    keypair_from_secret,
    product,
    setup_group,
)

MAX_BALANCE = 1 << 62


class ShapeError(ValueError):
    """Lists that must line up have different lengths."""


class WitnessIncomplete(ValueError):
    """An owned entry has no private key, or the key does not match."""


@dataclass(frozen=True)
class AnonymitySet:
    keys: tuple[GroupElement, ...]
    balances: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        object.__setattr__(self, "balances", tuple(self.balances))
        if len(self.keys) != len(self.balances):
            raise ShapeError("keys and balances differ in length")
        if not self.keys:
            raise ShapeError("anonymity set must be non-empty")
        for bal in self.balances:
            if not 0 <= bal < MAX_BALANCE:
                raise ValueError(f"balance {bal} outside [0, 2^62)")
        if sum(self.balances) >= Q // 2:
            raise ValueError("sum of balances would wrap modulo the group order")

    def __len__(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class AssetWitness:
    """Prover-side secrets. ``private_keys`` maps 0-based positions to keys."""

    ownership_bits: tuple[int, ...]
    private_keys: Mapping[int, int]
    blinders_v: tuple[int, ...]
    blinders_t: tuple[int, ...]

    def __post_init__(self):
        for name in ("ownership_bits", "blinders_v", "blinders_t"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "private_keys", dict(self.private_keys))
        if any(s not in (0, 1) for s in self.ownership_bits):
            raise ValueError("ownership bits must be 0 or 1")
        n = len(self.ownership_bits)
        if len(self.blinders_v) != n or len(self.blinders_t) != n:
            raise ShapeError("witness lists differ in length")

    def __len__(self) -> int:
        return len(self.ownership_bits)

    @property
    def v_sum(self) -> int:
        return sum(self.blinders_v) % Q

    def x_hat(self, i: int) -> int:
        """``x_i * s_i``; zero for entries the prover does not own."""
        if not self.ownership_bits[i]:
            return 0
        return self.private_keys[i]


@dataclass(frozen=True)
class AssetCommitments:
    p: tuple[GroupElement, ...]
    l: tuple[GroupElement, ...]  # noqa: E741

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(self.p))
        object.__setattr__(self, "l", tuple(self.l))
        if len(self.p) != len(self.l):
            raise ShapeError("p and l differ in length")

    def __len__(self) -> int:
        return len(self.p)


@dataclass(frozen=True)
class DeclaredTotal:
    theta: int
    v_sum: int


def balance_commitment(bal: int, params: GroupParams | None = None) -> GroupElement:
    """Binding, non-hiding commitment ``g^bal``."""
    if bal < 0:
        raise ValueError("balance must be non-negative")
    params = params or setup_group()
    return params.g ** bal


def _check_witness(aset: AnonymitySet, wit: AssetWitness, params: GroupParams) -> None:
    if len(aset) != len(wit):
        raise ShapeError(f"anonymity set has {len(aset)} keys, witness {len(wit)}")
    for i, s in enumerate(wit.ownership_bits):
        if not s:
            continue
        x = wit.private_keys.get(i)
        if x is None:
            raise WitnessIncomplete(f"entry {i} is owned but has no private key")
        if params.g ** x != aset.keys[i]:
            raise WitnessIncomplete(f"private key for entry {i} does not match y_{i}")


def build_asset_commitments(
    aset: AnonymitySet, wit: AssetWitness, params: GroupParams | None = None
) -> AssetCommitments:
    params = params or setup_group()
    _check_witness(aset, wit, params)
    p, l = [], []
    for i, s in enumerate(wit.ownership_bits):
        b = balance_commitment(aset.balances[i], params)
        hv = params.h ** wit.blinders_v[i]
        ht = params.h ** wit.blinders_t[i]
        if s:
            p.append(b * hv)
            l.append(aset.keys[i] * ht)
        else:
            p.append(hv)
            l.append(ht)
    return AssetCommitments(p, l)


def aggregate_commitment(
    comms: AssetCommitments, params: GroupParams | None = None
) -> GroupElement:
    """``Z = prod p_i = g^Theta * h^v``."""
    if len(comms) == 0:
        raise ShapeError("empty commitment set")
    return product(comms.p)


def total_assets(aset: AnonymitySet, wit: AssetWitness) -> int:
    if len(aset) != len(wit):
        raise ShapeError("anonymity set and witness differ in length")
    return sum(s * bal for s, bal in zip(wit.ownership_bits, aset.balances))


def declared_total(aset: AnonymitySet, wit: AssetWitness) -> DeclaredTotal:
    return DeclaredTotal(total_assets(aset, wit), wit.v_sum)


# ---------------------------------------------------------------------------
# instance generation


@dataclass
class ProvisionsInstance:
    """A full prover view: public set, secret witness, published commitments."""

    aset: AnonymitySet
    witness: AssetWitness
    commitments: AssetCommitments = field(init=False)
    params: GroupParams = field(default_factory=setup_group)

    def __post_init__(self):
        self.commitments = build_asset_commitments(self.aset, self.witness, self.params)

    @property
    def theta(self) -> int:
        return total_assets(self.aset, self.witness)

    def owned_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.witness.ownership_bits) if s]


def random_instance(
    n: int,
    rng: ScalarSource | bytes | str | None = None,
    *,
    max_balance: int = 10**8,
    owned: Sequence[int] | None = None,
    params: GroupParams | None = None,
) -> ProvisionsInstance:
    """Random anonymity set of ``n`` keys with a random ownership pattern.

    Keys not owned by the prover still get genuine key pairs; their secrets
    are simply dropped from the witness.
    """
    params = params or setup_group()
    rng = ScalarSource.coerce(rng)
    if n < 1:
        raise ShapeError("n must be at least 1")
    if owned is None:
        bits = [rng.below(2) for _ in range(n)]
    else:
        owned = set(owned)
        bits = [1 if i in owned else 0 for i in range(n)]
    keys, balances, privs = [], [], {}
    for i in range(n):
        kp = keypair_from_secret(rng.scalar() or 1, params)
        keys.append(kp.vk)
        balances.append(rng.below(max_balance))
        if bits[i]:
            privs[i] = kp.sk
    wit = AssetWitness(
        bits,
        privs,
        [rng.scalar() for _ in range(n)],
        [rng.scalar() for _ in range(n)],
    )
    return ProvisionsInstance(AnonymitySet(keys, balances), wit, params)


# ---------------------------------------------------------------------------
# commitment-set file: u32 n, then n x [y (33) | bal (u64) | p (33) | l (33)]

_RECORD = ELEMENT_LEN * 3 + 8


def encode_commitment_set(aset: AnonymitySet, comms: AssetCommitments) -> bytes:
    if len(aset) != len(comms):
        raise ShapeError("anonymity set and commitments differ in length")
    out = bytearray(struct.pack(">I", len(aset)))
    for y, bal, p, l in zip(aset.keys, aset.balances, comms.p, comms.l):
        out += y.to_bytes() + struct.pack(">Q", bal) + p.to_bytes() + l.to_bytes()
    return bytes(out)


def decode_commitment_set(data: bytes) -> tuple[AnonymitySet, AssetCommitments]:
    if len(data) < 4:
        raise EncodingError("truncated commitment set")
    (n,) = struct.unpack(">I", data[:4])
    if len(data) != 4 + n * _RECORD:
        raise EncodingError(f"commitment set of {n} entries has wrong length")
    keys, bals, p, l = [], [], [], []
    off = 4
    for _ in range(n):
        keys.append(GroupElement.from_bytes(data[off : off + 33]))
        bals.append(struct.unpack(">Q", data[off + 33 : off + 41])[0])
        p.append(GroupElement.from_bytes(data[off + 41 : off + 74]))
        l.append(GroupElement.from_bytes(data[off + 74 : off + 107]))
        off += _RECORD
    return AnonymitySet(keys, bals), AssetCommitments(p, l)


def commitment_set_to_text(aset: AnonymitySet, comms: AssetCommitments) -> str:
    entries = [
        {"y": y.to_bytes().hex(), "bal": bal, "p": p.to_bytes().hex(), "l": l.to_bytes().hex()}
        for y, bal, p, l in zip(aset.keys, aset.balances, comms.p, comms.l)
    ]
    return json.dumps({"n": len(entries), "entries": entries}, indent=2) + "\n"


def commitment_set_from_text(text: str) -> tuple[AnonymitySet, AssetCommitments]:
    doc = json.loads(text)
    entries = doc["entries"]
    if doc.get("n", len(entries)) != len(entries):
        raise EncodingError("entry count does not match n")

    def el(hexstr: str) -> GroupElement:
        return GroupElement.from_bytes(bytes.fromhex(hexstr))

    aset = AnonymitySet([el(e["y"]) for e in entries], [int(e["bal"]) for e in entries])
    return aset, AssetCommitments([el(e["p"]) for e in entries], [el(e["l"]) for e in entries])


def save_commitment_set(path, aset, comms, fmt: str = "binary") -> None:
    path = Path(path)
    if fmt == "text":
        path.write_text(commitment_set_to_text(aset, comms))
    else:
        path.write_bytes(encode_commitment_set(aset, comms))


def load_commitment_set(path) -> tuple[AnonymitySet, AssetCommitments]:
    data = Path(path).read_bytes()
    if data[:1] == b"{":
        return commitment_set_from_text(data.decode())
    return decode_commitment_set(data)


# ---------------------------------------------------------------------------
# witness file (prover-private, text only)


def witness_to_text(aset: AnonymitySet, wit: AssetWitness) -> str:
    doc = {
        "keys": [y.to_bytes().hex() for y in aset.keys],
        "balances": list(aset.balances),
        "ownership_bits": list(wit.ownership_bits),
        "private_keys": {str(i): f"{x:064x}" for i, x in sorted(wit.private_keys.items())},
        "blinders_v": [f"{v:064x}" for v in wit.blinders_v],
        "blinders_t": [f"{t:064x}" for t in wit.blinders_t],
    }
    return json.dumps(doc, indent=2) + "\n"


def witness_from_text(text: str) -> tuple[AnonymitySet, AssetWitness]:
    doc = json.loads(text)
    aset = AnonymitySet(
        [GroupElement.from_bytes(bytes.fromhex(k)) for k in doc["keys"]],
        [int(b) for b in doc["balances"]],
    )
    wit = AssetWitness(
        [int(s) for s in doc["ownership_bits"]],
        {int(i): int(x, 16) for i, x in doc["private_keys"].items()},
        [int(v, 16) for v in doc["blinders_v"]],
        [int(t, 16) for t in doc["blinders_t"]],
    )
    return aset, wit
