"""The taxation authority: taxpayer registry, certification, declared assets.

The authority only ever sees what the two mechanisms hand it: certified
addresses and their ledger balances for ledger-side accounting, and a total
``theta`` with a commitment set and proof for the zero-knowledge
declaration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .crypto import Address, GroupElement, KeyPair, keypair_from_secret, sign, verify
from .ledger import (
    AuthorityUpdate,
    CertifiedAddress,
    CheckpointRecord,
    LedgerState,
    _Reader,
    _Writer,
    certification_message,
    checkpoint_message,
    handover_message,
)
from .protocols import (
    AssetDeclStatement,
    NizkProof,
    ProtocolId,
    SigmaTranscript,
    asset_decl_verify,
    fiat_shamir_verify,
)
from .provisions import AssetCommitments, aggregate_commitment


class AuthorityError(Exception):
    @property
    def tag(self) -> str:
        return type(self).__name__


class DuplicateTaxpayer(AuthorityError):
    pass


class UnknownTaxpayer(AuthorityError):
    pass


class AddressAlreadyCertified(AuthorityError):
    pass


class VerificationFailed(AuthorityError):
    pass


@dataclass
class TaxpayerRecord:
    id: str
    declared_theta: int | None = None


class AuthorityState:
    """Mutable, single-writer authority state.

    ``keypair_chain[-1]`` is the current signing key.
    """

    def __init__(self, authority_id: int, keypair: KeyPair):
        self.authority_id = authority_id
        self.keypair_chain: list[KeyPair] = [keypair]
        self.records: dict[str, TaxpayerRecord] = {}
        self.cert_map: dict[str, list[CertifiedAddress]] = {}
        self._owner: dict[Address, str] = {}

    @property
    def current(self) -> KeyPair:
        return self.keypair_chain[-1]

    @property
    def vk(self) -> GroupElement:
        return self.current.vk

    @property
    def registry(self) -> frozenset[str]:
        return frozenset(self.records)

    def owner_of(self, alpha: Address) -> str | None:
        return self._owner.get(alpha)

    def register_taxpayer(self, taxpayer_id: str) -> AuthorityState:
        if taxpayer_id in self.records:
            raise DuplicateTaxpayer(taxpayer_id)
        self.records[taxpayer_id] = TaxpayerRecord(taxpayer_id)
        self.cert_map[taxpayer_id] = []
        return self

    def _require(self, taxpayer_id: str) -> TaxpayerRecord:
        try:
            return self.records[taxpayer_id]
        except KeyError:
            raise UnknownTaxpayer(taxpayer_id) from None

    def certify_address(self, taxpayer_id: str, alpha: Address) -> CertifiedAddress:
        self._require(taxpayer_id)
        if alpha in self._owner:
            raise AddressAlreadyCertified(alpha.hex())
        ca = CertifiedAddress(
            alpha, sign(certification_message(alpha), self.current.sk), self.authority_id
        )
        self.cert_map[taxpayer_id].append(ca)
        self._owner[alpha] = taxpayer_id
        return ca

    def compute_declared_assets(self, taxpayer_id: str, ledger: LedgerState) -> int:
        """Sum of ledger balances over the taxpayer's certified addresses."""
        self._require(taxpayer_id)
        return sum(ledger.balance_of(ca.alpha) for ca in self.cert_map[taxpayer_id])

    def verify_asset_declaration(
        self,
        taxpayer_id: str,
        theta: int,
        comms: AssetCommitments,
        proof: Union[NizkProof, SigmaTranscript],
    ) -> bool:
        """Check a declared total against a published commitment set.

        Accepts either a non-interactive proof or the transcript of an
        interactive run. On success ``declared_theta`` is recorded.
        """
        record = self._require(taxpayer_id)
        if theta < 0:
            return False
        try:
            stmt = AssetDeclStatement(aggregate_commitment(comms), theta)
        except ValueError:
            return False
        if isinstance(proof, NizkProof):
            ok = fiat_shamir_verify(ProtocolId.ASSET, stmt, proof)
        else:
            ok = asset_decl_verify(stmt, proof)
        if ok:
            record.declared_theta = theta
        return ok

    def require_asset_declaration(self, taxpayer_id, theta, comms, proof) -> None:
        if not self.verify_asset_declaration(taxpayer_id, theta, comms, proof):
            raise VerificationFailed(f"declaration of {theta} by {taxpayer_id} rejected")

    # ledger-facing actions

    def rotate_key(self, new: KeyPair) -> AuthorityUpdate:
        """Sign ``new.vk`` with the current key; returns the on-ledger record."""
        sig = sign(handover_message(self.authority_id, new.vk), self.current.sk)
        self.keypair_chain.append(new)
        return AuthorityUpdate(self.authority_id, new.vk, sig)

    def sign_checkpoint(self, height: int, block_id: bytes) -> CheckpointRecord:
        sig = sign(checkpoint_message(height, block_id), self.current.sk)
        return CheckpointRecord(self.authority_id, height, block_id, sig)

    def check_cert_map(self) -> bool:
        """Every certification verifies under some key of the chain."""
        vks = [kp.vk for kp in self.keypair_chain]
        return all(
            any(verify(certification_message(ca.alpha), ca.sigma, vk) for vk in vks)
            for cas in self.cert_map.values()
            for ca in cas
        )

    # snapshots

    def encode(self) -> bytes:
        w = _Writer().u16(self.authority_id).u32(len(self.keypair_chain))
        for kp in self.keypair_chain:
            w.raw(kp.sk.to_bytes(32, "big"))
        w.u32(len(self.records))
        for tid in sorted(self.records):
            rec = self.records[tid]
            w.var(tid.encode())
            if rec.declared_theta is None:
                w.u8(0)
            else:
                w.u8(1).u64(rec.declared_theta)
            cas = self.cert_map[tid]
            w.u32(len(cas))
            for ca in cas:
                w.raw(ca.to_bytes())
        return bytes(w.buf)

    @classmethod
    def decode(cls, data: bytes) -> AuthorityState:
        r = _Reader(data)
        aid = r.u16()
        chain = [keypair_from_secret(int.from_bytes(r.raw(32), "big")) for _ in range(r.u32())]
        st = cls(aid, chain[0])
        st.keypair_chain = chain
        for _ in range(r.u32()):
            tid = r.var().decode()
            theta = r.u64() if r.u8() else None
            st.register_taxpayer(tid)
            st.records[tid].declared_theta = theta
            for _ in range(r.u32()):
                ca = CertifiedAddress.from_bytes(r.raw(91))
                st.cert_map[tid].append(ca)
                st._owner[ca.alpha] = tid
        r.done()
        return st

    def to_text(self) -> dict:
        return {
            "authority_id": self.authority_id,
            "keypair_chain": [f"{kp.sk:064x}" for kp in self.keypair_chain],
            "taxpayers": {
                tid: {
                    "declared_theta": self.records[tid].declared_theta,
                    "certified": [ca.to_bytes().hex() for ca in self.cert_map[tid]],
                }
                for tid in sorted(self.records)
            },
        }

    @classmethod
    def from_text(cls, doc: dict) -> AuthorityState:
        chain = [keypair_from_secret(int(k, 16)) for k in doc["keypair_chain"]]
        st = cls(int(doc["authority_id"]), chain[0])
        st.keypair_chain = chain
        for tid, rec in doc["taxpayers"].items():
            st.register_taxpayer(tid)
            st.records[tid].declared_theta = rec["declared_theta"]
            for hexca in rec["certified"]:
                ca = CertifiedAddress.from_bytes(bytes.fromhex(hexca))
                st.cert_map[tid].append(ca)
                st._owner[ca.alpha] = tid
        return st

    def save(self, path, fmt: str = "binary") -> None:
        path = Path(path)
        if fmt == "text":
            path.write_text(json.dumps(self.to_text(), indent=2) + "\n")
        else:
            path.write_bytes(self.encode())

    @classmethod
    def load(cls, path) -> AuthorityState:
        data = Path(path).read_bytes()
        if data[:1] == b"{":
            return cls.from_text(json.loads(data.decode()))
        return cls.decode(data)
