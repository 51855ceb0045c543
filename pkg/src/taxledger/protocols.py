"""Asset declaration and payer address auditing sigma protocols.

Asset declaration: the prover shows knowledge of ``v`` with
``Z * g^-Theta = h^v``. Address auditing: the prover shows knowledge of
``t_i, v_i`` with ``l_i * y_i^-1 = h^t_i`` and ``p_i * g^-bal_i = h^v_i``.
Both are Schnorr proofs of discrete logs base ``h``; the module provides
the interactive moves, a Fiat-Shamir non-interactive form, a two-transcript
witness extractor and a transcript simulator (the latter two exist as test
oracles for soundness and zero knowledge).
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Sequence, Union

from .crypto import (
    ELEMENT_LEN,
    Q,
    SCALAR_LEN,
    EncodingError,
    GroupElement,
    GroupParams,
    ScalarSource,
    hash_to_scalar,
    scalar_from_bytes,
    scalar_to_bytes,
    setup_group,
)
from .provisions import AssetCommitments, AnonymitySet, aggregate_commitment

TAG_FS_ASSET = b"TAXP/fs/asset/v1"
TAG_FS_ADDRESS = b"TAXP/fs/address/v1"
TAG_FS_CHALLENGE = b"TAXP/fs/challenge/v1"


class ProtocolId(enum.IntEnum):
    ASSET = 1
    ADDRESS = 2

    @property
    def arity(self) -> int:
        return 1 if self is ProtocolId.ASSET else 2

    @property
    def tag(self) -> bytes:
        return TAG_FS_ASSET if self is ProtocolId.ASSET else TAG_FS_ADDRESS

    @classmethod
    def parse(cls, value) -> ProtocolId:
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown protocol {value!r}") from None
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown protocol {value!r}") from None


class NonceReuseError(RuntimeError):
    """A prover state was asked to respond a second time."""


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class SigmaTranscript:
    commitment: tuple[GroupElement, ...]
    challenge: int
    response: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "commitment", tuple(self.commitment))
        object.__setattr__(self, "response", tuple(self.response))


@dataclass(frozen=True)
class AssetDeclStatement:
    Z_theta: GroupElement
    theta: int

    def encode(self, params: GroupParams) -> bytes:
        return (
            params.g.to_bytes()
            + params.h.to_bytes()
            + self.Z_theta.to_bytes()
            + _int_bytes(self.theta)
        )

    @classmethod
    def from_commitments(cls, comms: AssetCommitments, theta: int) -> AssetDeclStatement:
        return cls(aggregate_commitment(comms), theta)


@dataclass(frozen=True)
class AddressAuditStatement:
    """Statement about entry ``index`` (1-based) of a published commitment set."""

    index: int
    y: GroupElement
    l: GroupElement  # noqa: E741
    p: GroupElement
    bal: int

    def encode(self, params: GroupParams) -> bytes:
        return (
            params.g.to_bytes()
            + params.h.to_bytes()
            + self.index.to_bytes(4, "big")
            + self.y.to_bytes()
            + self.l.to_bytes()
            + self.p.to_bytes()
            + _int_bytes(self.bal)
        )

    @classmethod
    def from_commitment_set(
        cls, aset: AnonymitySet, comms: AssetCommitments, index: int
    ) -> AddressAuditStatement:
        if not 1 <= index <= len(aset):
            raise IndexError(f"index {index} outside [1, {len(aset)}]")
        i = index - 1
        return cls(index, aset.keys[i], comms.l[i], comms.p[i], aset.balances[i])


Statement = Union[AssetDeclStatement, AddressAuditStatement]


def _int_bytes(x: int) -> bytes:
    # signed values are never legitimate here; encode modulo Q so a negative
    # theta still hashes deterministically
    return scalar_to_bytes(x)


# ---------------------------------------------------------------------------
# interactive prover


class ProverState:
    """Single-use prover randomness for one protocol run.

    ``nonces`` is readable so tests can recompute the first message.
    """

    def __init__(self, nonces: Sequence[int]):
        self.nonces = tuple(r % Q for r in nonces)
        self._used = False

    def consume(self) -> tuple[int, ...]:
        if self._used:
            raise NonceReuseError("prover state already used to respond")
        self._used = True
        return self.nonces

    @property
    def used(self) -> bool:
        return self._used


def _first_move(arity: int, rng, params: GroupParams | None):
    params = params or setup_group()
    rng = ScalarSource.coerce(rng)
    state = ProverState([rng.scalar() for _ in range(arity)])
    return state, [params.h ** r for r in state.nonces]


def asset_decl_prove_step1(
    rng: ScalarSource | bytes | None = None, params: GroupParams | None = None
) -> tuple[ProverState, GroupElement]:
    """Sample ``r`` and return ``(state, h^r)``."""
    state, (lam,) = _first_move(1, rng, params)
    return state, lam


def asset_decl_respond(state: ProverState, c: int, v: int) -> int:
    (r,) = state.consume()
    return (r + c * v) % Q


def asset_decl_verify(
    stmt: AssetDeclStatement, t: SigmaTranscript, params: GroupParams | None = None
) -> bool:
    """Accept iff ``h^theta == lambda * (Z * g^-Theta)^c``."""
    params = params or setup_group()
    if len(t.commitment) != 1 or len(t.response) != 1:
        return False
    try:
        (lam,), c, (theta,) = t.commitment, t.challenge % Q, t.response
        target = stmt.Z_theta * (params.g ** stmt.theta).inverse()
        return params.h ** theta == lam * target ** c
    except (TypeError, ValueError, AttributeError):
        return False


def address_audit_prove_step1(
    rng: ScalarSource | bytes | None = None, params: GroupParams | None = None
) -> tuple[ProverState, list[GroupElement]]:
    """Sample ``r_1, r_2`` and return ``(state, [h^r_1, h^r_2])``."""
    return _first_move(2, rng, params)


def address_audit_respond(state: ProverState, c: int, t_i: int, v_i: int) -> list[int]:
    r1, r2 = state.consume()
    return [(r1 + c * t_i) % Q, (r2 + c * v_i) % Q]


def address_audit_verify(
    stmt: AddressAuditStatement, t: SigmaTranscript, params: GroupParams | None = None
) -> bool:
    """Accept iff both ``h^theta_1 == lambda_1 * (l * y^-1)^c`` and
    ``h^theta_2 == lambda_2 * (p * g^-bal)^c``."""
    params = params or setup_group()
    if len(t.commitment) != 2 or len(t.response) != 2:
        return False
    try:
        (lam1, lam2), c, (th1, th2) = t.commitment, t.challenge % Q, t.response
        ok1 = params.h ** th1 == lam1 * (stmt.l / stmt.y) ** c
        ok2 = params.h ** th2 == lam2 * (stmt.p * (params.g ** stmt.bal).inverse()) ** c
        return ok1 and ok2
    except (TypeError, ValueError, AttributeError):
        return False


def verify_transcript(protocol, stmt: Statement, t: SigmaTranscript, params=None) -> bool:
    if ProtocolId.parse(protocol) is ProtocolId.ASSET:
        return isinstance(stmt, AssetDeclStatement) and asset_decl_verify(stmt, t, params)
    return isinstance(stmt, AddressAuditStatement) and address_audit_verify(stmt, t, params)


# ---------------------------------------------------------------------------
# Fiat-Shamir


@dataclass(frozen=True)
class NizkProof:
    """Non-interactive proof.

    ``context`` is the 32-byte statement hash ``SHA256(tag || statement)``;
    the challenge is ``H(context || commitments)``.

    Wire layout: protocol id (1) | context (32) | commitments (33 each) |
    challenge (32) | responses (32 each).
    """

    protocol: ProtocolId
    transcript: SigmaTranscript
    context: bytes

    def to_bytes(self) -> bytes:
        t = self.transcript
        return (
            bytes([int(self.protocol)])
            + self.context
            + b"".join(e.to_bytes() for e in t.commitment)
            + scalar_to_bytes(t.challenge)
            + b"".join(scalar_to_bytes(s) for s in t.response)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> NizkProof:
        if not data:
            raise EncodingError("empty proof")
        try:
            protocol = ProtocolId(data[0])
        except ValueError:
            raise EncodingError(f"unknown protocol id {data[0]}") from None
        k = protocol.arity
        expected = 1 + 32 + k * ELEMENT_LEN + SCALAR_LEN + k * SCALAR_LEN
        if len(data) != expected:
            raise EncodingError(f"proof must be {expected} bytes, got {len(data)}")
        off = 33
        comm = []
        for _ in range(k):
            comm.append(GroupElement.from_bytes(data[off : off + ELEMENT_LEN]))
            off += ELEMENT_LEN
        c = scalar_from_bytes(data[off : off + SCALAR_LEN])
        off += SCALAR_LEN
        resp = [scalar_from_bytes(data[off + j * 32 : off + (j + 1) * 32]) for j in range(k)]
        return cls(protocol, SigmaTranscript(comm, c, resp), bytes(data[1:33]))

    def to_text(self) -> dict:
        t = self.transcript
        return {
            "protocol": self.protocol.name.lower(),
            "context": self.context.hex(),
            "commitment": [e.to_bytes().hex() for e in t.commitment],
            "challenge": f"{t.challenge:064x}",
            "response": [f"{s:064x}" for s in t.response],
        }

    @classmethod
    def from_text(cls, doc: dict) -> NizkProof:
        try:
            protocol = ProtocolId.parse(doc["protocol"])
            t = SigmaTranscript(
                [GroupElement.from_bytes(bytes.fromhex(e)) for e in doc["commitment"]],
                scalar_from_bytes(bytes.fromhex(doc["challenge"])),
                [scalar_from_bytes(bytes.fromhex(s)) for s in doc["response"]],
            )
            context = bytes.fromhex(doc["context"])
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed proof document: {exc}") from exc
        return cls(protocol, t, context)


def statement_context(protocol, stmt: Statement, params: GroupParams | None = None) -> bytes:
    protocol = ProtocolId.parse(protocol)
    params = params or setup_group()
    return hashlib.sha256(
        len(protocol.tag).to_bytes(2, "big") + protocol.tag + stmt.encode(params)
    ).digest()


def fs_challenge(context: bytes, commitment: Sequence[GroupElement]) -> int:
    return hash_to_scalar(TAG_FS_CHALLENGE, context, *(e.to_bytes() for e in commitment))


def fiat_shamir_prove(
    protocol,
    statement: Statement,
    witness,
    params: GroupParams | None = None,
    rng: ScalarSource | bytes | None = None,
) -> NizkProof:
    """Witness is ``v`` for the asset protocol, ``(t_i, v_i)`` for the address one."""
    protocol = ProtocolId.parse(protocol)
    params = params or setup_group()
    context = statement_context(protocol, statement, params)
    if protocol is ProtocolId.ASSET:
        if not isinstance(statement, AssetDeclStatement):
            raise TypeError("asset protocol needs an AssetDeclStatement")
        state, lam = asset_decl_prove_step1(rng, params)
        commitment = [lam]
        c = fs_challenge(context, commitment)
        response = [asset_decl_respond(state, c, witness)]
    else:
        if not isinstance(statement, AddressAuditStatement):
            raise TypeError("address protocol needs an AddressAuditStatement")
        t_i, v_i = witness
        state, commitment = address_audit_prove_step1(rng, params)
        c = fs_challenge(context, commitment)
        response = address_audit_respond(state, c, t_i, v_i)
    return NizkProof(protocol, SigmaTranscript(commitment, c, response), context)


def fiat_shamir_verify(
    protocol, statement: Statement, proof: NizkProof, params: GroupParams | None = None
) -> bool:
    protocol = ProtocolId.parse(protocol)
    params = params or setup_group()
    if proof.protocol is not protocol:
        return False
    if statement_context(protocol, statement, params) != proof.context:
        return False
    t = proof.transcript
    if len(t.commitment) != protocol.arity:
        return False
    if fs_challenge(proof.context, t.commitment) != t.challenge:
        return False
    return verify_transcript(protocol, statement, t, params)


def verify_proof_bytes(protocol, statement: Statement, data: bytes, params=None) -> bool:
    """Like :func:`fiat_shamir_verify` but from the wire format; bad bytes give False."""
    try:
        proof = NizkProof.from_bytes(data)
    except EncodingError:
        return False
    return fiat_shamir_verify(protocol, statement, proof, params)


# ---------------------------------------------------------------------------
# test oracles


def extract_witness(t1: SigmaTranscript, t2: SigmaTranscript) -> list[int]:
    """Special-soundness extractor: ``(theta - theta') / (c - c')`` per slot."""
    if t1.commitment != t2.commitment:
        raise ExtractionError("transcripts do not share a first message")
    if len(t1.response) != len(t2.response):
        raise ExtractionError("transcripts have different arity")
    dc = (t1.challenge - t2.challenge) % Q
    if dc == 0:
        raise ExtractionError("challenges are equal; extraction undefined")
    inv = pow(dc, -1, Q)
    return [((a - b) * inv) % Q for a, b in zip(t1.response, t2.response)]


def simulate_transcript(
    protocol,
    statement: Statement,
    c: int,
    params: GroupParams | None = None,
    rng: ScalarSource | bytes | None = None,
) -> SigmaTranscript:
    """Accepting transcript without a witness: pick responses, solve for lambda."""
    protocol = ProtocolId.parse(protocol)
    params = params or setup_group()
    rng = ScalarSource.coerce(rng)
    c %= Q
    if protocol is ProtocolId.ASSET:
        bases = [statement.Z_theta * (params.g ** statement.theta).inverse()]
    else:
        bases = [
            statement.l / statement.y,
            statement.p * (params.g ** statement.bal).inverse(),
        ]
    response = [rng.scalar() for _ in bases]
    commitment = [params.h ** th * (b ** c).inverse() for th, b in zip(response, bases)]
    return SigmaTranscript(commitment, c, response)
