"""Group arithmetic, Pedersen commitments, Schnorr signatures and hashing.

Everything lives in the prime-order group of secp256k1, written
multiplicatively (``a * b`` is the group operation, ``a ** k`` is
exponentiation) so formulas read the same way as the protocol algebra.
Point arithmetic is delegated to libsecp256k1 through ``coincurve``; this
module adds the identity element, which libsecp256k1 cannot represent as a
public key.

Scalars are plain ``int`` values reduced modulo :data:`Q`.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

from coincurve import PublicKey

GROUP_ID = "secp256k1"

#: order of the group
Q = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
#: field prime, only needed for hash-to-group
P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F

SCALAR_LEN = 32
ELEMENT_LEN = 33
ADDRESS_LEN = 25
SIGNATURE_LEN = 64

TAG_GEN_H = b"TAXP/gen/h/v1"
TAG_SIG = b"TAXP/sig/v1"
TAG_SIG_NONCE = b"TAXP/sig/nonce/v1"
TAG_ADDR = b"TAXP/addr/v1"
TAG_KEYGEN = b"TAXP/keygen/v1"

ADDRESS_VERSION = b"\x00"

_IDENTITY_BYTES = bytes(ELEMENT_LEN)
_G_COMPRESSED = bytes.fromhex(
    "0279BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798"
)


class EncodingError(ValueError):
    """A byte string is not a canonical encoding."""


# ---------------------------------------------------------------------------
# hashing and scalars


def tagged_hash(tag: bytes, *parts: bytes) -> bytes:
    """SHA-256 over a length-prefixed domain tag followed by ``parts``."""
    h = hashlib.sha256()
    h.update(len(tag).to_bytes(2, "big"))
    h.update(tag)
    for part in parts:
        h.update(part)
    return h.digest()


def hash_to_scalar(tag: bytes, *parts: bytes) -> int:
    # 512-bit digest so the reduction bias is negligible
    h = hashlib.sha512()
    h.update(len(tag).to_bytes(2, "big"))
    h.update(tag)
    for part in parts:
        h.update(part)
    return int.from_bytes(h.digest(), "big") % Q


def scalar_to_bytes(x: int) -> bytes:
    return (x % Q).to_bytes(SCALAR_LEN, "big")


def scalar_from_bytes(data: bytes) -> int:
    """Decode a canonical 32-byte scalar; values >= Q are rejected."""
    if len(data) != SCALAR_LEN:
        raise EncodingError(f"scalar must be {SCALAR_LEN} bytes, got {len(data)}")
    x = int.from_bytes(data, "big")
    if x >= Q:
        raise EncodingError("scalar not reduced modulo the group order")
    return x


# ---------------------------------------------------------------------------
# group elements


class GroupElement:
    """An element of the secp256k1 group, possibly the identity.

    Instances are immutable. Equality and hashing go through the canonical
    33-byte compressed encoding; the identity encodes as 33 zero bytes.
    """

    __slots__ = ("_pk", "_enc")

    def __init__(self, pk: PublicKey | None, enc: bytes | None = None):
        self._pk = pk
        if enc is None:
            enc = _IDENTITY_BYTES if pk is None else pk.format(compressed=True)
        self._enc = enc

    @classmethod
    def identity(cls) -> GroupElement:
        return _IDENTITY

    @classmethod
    def from_bytes(cls, data: bytes) -> GroupElement:
        data = bytes(data)
        if len(data) != ELEMENT_LEN:
            raise EncodingError(f"group element must be {ELEMENT_LEN} bytes")
        if data == _IDENTITY_BYTES:
            return _IDENTITY
        if data[0] not in (2, 3):
            raise EncodingError("bad compressed point prefix")
        try:
            pk = PublicKey(data)
        except ValueError as exc:
            raise EncodingError("not a point on the curve") from exc
        return cls(pk, data)

    def to_bytes(self) -> bytes:
        return self._enc

    def is_identity(self) -> bool:
        return self._pk is None

    def __mul__(self, other: GroupElement) -> GroupElement:
        if not isinstance(other, GroupElement):
            return NotImplemented
        if self._pk is None:
            return other
        if other._pk is None:
            return self
        try:
            return GroupElement(PublicKey.combine_keys([self._pk, other._pk]))
        except ValueError:
            # a * a^-1 lands on the point at infinity
            return _IDENTITY

    def __pow__(self, k: int) -> GroupElement:
        k %= Q
        if k == 0 or self._pk is None:
            return _IDENTITY
        return GroupElement(self._pk.multiply(k.to_bytes(SCALAR_LEN, "big")))

    def inverse(self) -> GroupElement:
        if self._pk is None:
            return self
        # negating a point flips the parity byte
        enc = bytes([self._enc[0] ^ 1]) + self._enc[1:]
        return GroupElement(PublicKey(enc), enc)

    def __truediv__(self, other: GroupElement) -> GroupElement:
        return self * other.inverse()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GroupElement) and self._enc == other._enc

    def __hash__(self) -> int:
        return hash(self._enc)

    def __repr__(self) -> str:
        if self._pk is None:
            return "GroupElement(identity)"
        return f"GroupElement({self._enc.hex()[:16]}...)"


_IDENTITY = GroupElement(None)


def product(elements: Iterable[GroupElement]) -> GroupElement:
    pks = [e._pk for e in elements if e._pk is not None]
    if not pks:
        return _IDENTITY
    if len(pks) == 1:
        return GroupElement(pks[0])
    try:
        return GroupElement(PublicKey.combine_keys(pks))
    except ValueError:
        # combine_keys refuses an infinite sum; fall back to pairwise
        acc = _IDENTITY
        for pk in pks:
            acc = acc * GroupElement(pk)
        return acc


def hash_to_group(tag: bytes, data: bytes) -> GroupElement:
    """Try-and-increment map onto the curve, always picking the even-y root.

    Candidate ``x = SHA256(tag || data || ctr) mod P`` for ctr = 0, 1, ...
    (ctr as 4 big-endian bytes) until ``x^3 + 7`` is a square.
    """
    ctr = 0
    while True:
        x = int.from_bytes(tagged_hash(tag, data, ctr.to_bytes(4, "big")), "big") % P
        if pow(x**3 + 7, (P - 1) // 2, P) == 1:
            return GroupElement.from_bytes(b"\x02" + x.to_bytes(32, "big"))
        ctr += 1


@dataclass(frozen=True)
class GroupParams:
    group_id: str
    q: int
    g: GroupElement
    h: GroupElement


@lru_cache(maxsize=None)
def setup_group() -> GroupParams:
    """The fixed group parameters; ``h`` has no known discrete log base ``g``."""
    g = GroupElement.from_bytes(_G_COMPRESSED)
    h = hash_to_group(TAG_GEN_H, g.to_bytes())
    return GroupParams(GROUP_ID, Q, g, h)


def pedersen_commit(m: int, r: int, params: GroupParams | None = None) -> GroupElement:
    """``g^m * h^r``."""
    params = params or setup_group()
    return params.g ** m * params.h ** r


# ---------------------------------------------------------------------------
# keys, addresses, signatures


@dataclass(frozen=True)
class KeyPair:
    sk: int
    vk: GroupElement


def keypair_from_secret(sk: int, params: GroupParams | None = None) -> KeyPair:
    params = params or setup_group()
    sk %= Q
    if sk == 0:
        raise ValueError("secret key must be non-zero")
    return KeyPair(sk, params.g ** sk)


def keygen(seed: bytes, params: GroupParams | None = None) -> KeyPair:
    """Deterministic key pair from ``seed``."""
    if not seed:
        raise ValueError("keygen seed must be non-empty")
    return keypair_from_secret(hash_to_scalar(TAG_KEYGEN, seed), params)


@dataclass(frozen=True, order=True)
class Address:
    """25-byte address: version byte, 20-byte key hash, 4-byte checksum."""

    raw: bytes

    def __post_init__(self):
        if len(self.raw) != ADDRESS_LEN:
            raise EncodingError(f"address must be {ADDRESS_LEN} bytes")

    @classmethod
    def from_hex(cls, text: str) -> Address:
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.raw.hex()

    def checksum_ok(self) -> bool:
        body = self.raw[:21]
        return hashlib.sha256(hashlib.sha256(body).digest()).digest()[:4] == self.raw[21:]

    def __str__(self) -> str:
        return self.raw.hex()


def hash_to_address(vk: GroupElement) -> Address:
    body = ADDRESS_VERSION + tagged_hash(TAG_ADDR, vk.to_bytes())[:20]
    check = hashlib.sha256(hashlib.sha256(body).digest()).digest()[:4]
    return Address(body + check)


def _challenge(r: GroupElement, vk: GroupElement, msg: bytes) -> int:
    return hash_to_scalar(TAG_SIG, r.to_bytes(), vk.to_bytes(), msg)


def sign(msg: bytes, sk: int, params: GroupParams | None = None) -> bytes:
    """Schnorr signature ``c || s`` with ``c = H(g^k, vk, msg)``, ``s = k + c*sk``.

    The nonce is derived deterministically from the key and message.
    """
    params = params or setup_group()
    sk %= Q
    vk = params.g ** sk
    k = hash_to_scalar(TAG_SIG_NONCE, scalar_to_bytes(sk), msg)
    if k == 0:
        raise RuntimeError("degenerate signing nonce")
    c = _challenge(params.g ** k, vk, msg)
    s = (k + c * sk) % Q
    return scalar_to_bytes(c) + scalar_to_bytes(s)


def verify(msg: bytes, sig: bytes, vk: GroupElement) -> bool:
    return _verify_cached(bytes(msg), bytes(sig), vk.to_bytes())


@lru_cache(maxsize=1 << 14)
def _verify_cached(msg: bytes, sig: bytes, vk_bytes: bytes) -> bool:
    if len(sig) != SIGNATURE_LEN:
        return False
    try:
        c = scalar_from_bytes(sig[:32])
        s = scalar_from_bytes(sig[32:])
        vk = GroupElement.from_bytes(vk_bytes)
    except EncodingError:
        return False
    if vk.is_identity():
        return False
    params = setup_group()
    r = params.g ** s * (vk ** c).inverse()
    return hmac.compare_digest(scalar_to_bytes(_challenge(r, vk, msg)), sig[:32])


# ---------------------------------------------------------------------------
# randomness

TAG_RNG = b"TAXP/rng/v1"


class ScalarSource:
    """Source of uniform scalars.

    With a seed the stream is a deterministic hash chain (reproducible runs);
    without one it draws from the OS entropy pool.
    """

    def __init__(self, seed: bytes | None = None):
        self._seed = seed
        self._counter = 0

    @classmethod
    def coerce(cls, rng: ScalarSource | bytes | str | None) -> ScalarSource:
        if isinstance(rng, ScalarSource):
            return rng
        if isinstance(rng, str):
            rng = rng.encode()
        return cls(rng)

    @property
    def seeded(self) -> bool:
        return self._seed is not None

    def scalar(self) -> int:
        if self._seed is None:
            return secrets.randbelow(Q)
        x = hash_to_scalar(TAG_RNG, self._seed, self._counter.to_bytes(8, "big"))
        self._counter += 1
        return x

    def below(self, bound: int) -> int:
        """Integer in ``[0, bound)``; ``bound`` must be far below Q."""
        return self.scalar() % bound

    def randbytes(self, n: int) -> bytes:
        out = b""
        while len(out) < n:
            out += scalar_to_bytes(self.scalar())
        return out[:n]
