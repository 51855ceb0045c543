"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 format or I/O error,
3 ledger/authority rule violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .authority import AuthorityError, VerificationFailed
from .crypto import Address, EncodingError, ScalarSource, keygen
from .ledger import (
    DEFAULT_PERIOD,
    Block,
    LedgerError,
    LedgerState,
    TaxPeriodConfig,
    apply_block,
    freeze_status,
    genesis,
)
from .protocols import (
    AddressAuditStatement,
    AssetDeclStatement,
    NizkProof,
    ProtocolId,
    fiat_shamir_prove,
    fiat_shamir_verify,
)
from .provisions import (
    build_asset_commitments,
    load_commitment_set,
    random_instance,
    save_commitment_set,
    total_assets,
    witness_from_text,
    witness_to_text,
)
from .scenario import ScenarioError, run_scenario

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_FORMAT = 2
EXIT_RULE = 3


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def _seed(args) -> bytes | None:
    raw = args.seed or os.environ.get("TAXLEDGER_SEED")
    if raw is None:
        return None
    try:
        return bytes.fromhex(raw)
    except ValueError:
        raise CliError(f"--seed must be hex, got {raw!r}", EXIT_FORMAT) from None


def _write(path: str | None, data: bytes) -> None:
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        Path(path).write_bytes(data)


def _dump_proof(proof: NizkProof, fmt: str) -> bytes:
    if fmt == "text":
        return (json.dumps(proof.to_text(), indent=2) + "\n").encode()
    return proof.to_bytes()


def _load_proof(path: str) -> NizkProof:
    data = Path(path).read_bytes()
    if data[:1] == b"{":
        return NizkProof.from_text(json.loads(data.decode()))
    return NizkProof.from_bytes(data)


def _load_witness(path: str):
    return witness_from_text(Path(path).read_text())


# ---------------------------------------------------------------------------
# subcommands


def cmd_run_scenario(args) -> int:
    seed = _seed(args) or b"\x00"
    report = run_scenario(args.scenario, seed=seed, period=args.period)
    _write(args.out, report.render().encode())
    if args.state_out:
        Path(args.state_out).write_bytes(report.final_state.dumps(args.format))
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_make_witness(args) -> int:
    inst = random_instance(args.n, ScalarSource(_seed(args)), max_balance=args.max_balance)
    _write(args.out, witness_to_text(inst.aset, inst.witness).encode())
    return EXIT_OK


def cmd_prove_asset(args) -> int:
    aset, wit = _load_witness(args.witness)
    comms = build_asset_commitments(aset, wit)
    theta = total_assets(aset, wit)
    stmt = AssetDeclStatement.from_commitments(comms, theta)
    proof = fiat_shamir_prove(ProtocolId.ASSET, stmt, wit.v_sum, rng=ScalarSource(_seed(args)))
    save_commitment_set(args.commitments, aset, comms, args.format)
    _write(args.out, _dump_proof(proof, args.format))
    print(f"theta\t{theta}", file=sys.stderr)
    return EXIT_OK


def cmd_verify_asset(args) -> int:
    _, comms = load_commitment_set(args.commitments)
    proof = _load_proof(args.proof)
    stmt = AssetDeclStatement.from_commitments(comms, args.theta)
    if not fiat_shamir_verify(ProtocolId.ASSET, stmt, proof):
        raise CliError(f"asset declaration of {args.theta} rejected", EXIT_VERIFY)
    print("accepted")
    return EXIT_OK


def cmd_prove_address(args) -> int:
    aset, wit = _load_witness(args.witness)
    comms = build_asset_commitments(aset, wit)
    try:
        stmt = AddressAuditStatement.from_commitment_set(aset, comms, args.index)
    except IndexError as exc:
        raise CliError(str(exc), EXIT_FORMAT) from None
    i = args.index - 1
    proof = fiat_shamir_prove(
        ProtocolId.ADDRESS,
        stmt,
        (wit.blinders_t[i], wit.blinders_v[i]),
        rng=ScalarSource(_seed(args)),
    )
    if args.commitments:
        save_commitment_set(args.commitments, aset, comms, args.format)
    _write(args.out, _dump_proof(proof, args.format))
    return EXIT_OK


def cmd_verify_address(args) -> int:
    aset, comms = load_commitment_set(args.commitments)
    try:
        stmt = AddressAuditStatement.from_commitment_set(aset, comms, args.index)
    except IndexError as exc:
        raise CliError(str(exc), EXIT_FORMAT) from None
    if not fiat_shamir_verify(ProtocolId.ADDRESS, stmt, _load_proof(args.proof)):
        raise CliError(f"address {args.index} failed the audit", EXIT_VERIFY)
    print("accepted")
    return EXIT_OK


def _load_state(path: str) -> LedgerState:
    return LedgerState.loads(Path(path).read_bytes())


def cmd_ledger_genesis(args) -> int:
    auths = {}
    for item in args.authority:
        aid, _, seed = item.partition("=")
        auths[int(aid)] = keygen(seed.encode()).vk
    bals = {}
    for item in args.fund:
        addr, _, amount = item.partition("=")
        bals[Address.from_hex(addr)] = int(amount)
    _write(args.out, genesis(auths, bals).dumps(args.format))
    return EXIT_OK


def cmd_ledger_apply(args) -> int:
    state = _load_state(args.state)
    data = Path(args.block).read_bytes()
    if data[:1] == b"{":
        block = Block.from_text(json.loads(data.decode()))
    else:
        block = Block.decode(data)
    new = apply_block(state, block, TaxPeriodConfig(args.period))
    _write(args.out, new.dumps(args.format))
    return EXIT_OK


def cmd_ledger_status(args) -> int:
    state = _load_state(args.state)
    if args.address:
        addr = Address.from_hex(args.address)
        print(f"{addr.hex()}\t{state.balance_of(addr)}\t{freeze_status(state, addr)}")
        return EXIT_OK
    print(f"height\t{state.height}")
    print(f"tip\t{state.tip.hex()}")
    print(f"last_audit\t{state.last_audit}")
    print(f"digest\t{state.digest()}")
    for addr, bal in sorted(state.balances.items()):
        if bal:
            print(f"{addr.hex()}\t{bal}\t{freeze_status(state, addr)}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", help="hex seed for reproducible randomness")
    common.add_argument("--period", type=int, default=DEFAULT_PERIOD)
    common.add_argument("--format", choices=("binary", "text"), default="binary")

    p = argparse.ArgumentParser(prog="taxledger", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run-scenario", parents=[common], help="run a scenario script")
    s.add_argument("scenario", help="scenario file, or a bundled name (freeze_demo, declare_demo)")
    s.add_argument("--out", help="report path (default stdout)")
    s.add_argument("--state-out", help="write the final ledger state here")
    s.set_defaults(func=cmd_run_scenario)

    s = sub.add_parser("make-witness", parents=[common], help="random prover witness file")
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--max-balance", type=int, default=10**8)
    s.add_argument("--out")
    s.set_defaults(func=cmd_make_witness)

    s = sub.add_parser("prove-asset", parents=[common], help="NIZK asset declaration")
    s.add_argument("--witness", required=True)
    s.add_argument("--commitments", required=True, help="commitment-set output path")
    s.add_argument("--out", help="proof output path")
    s.set_defaults(func=cmd_prove_asset)

    s = sub.add_parser("verify-asset", parents=[common])
    s.add_argument("--commitments", required=True)
    s.add_argument("--proof", required=True)
    s.add_argument("--theta", type=int, required=True)
    s.set_defaults(func=cmd_verify_asset)

    s = sub.add_parser("prove-address", parents=[common], help="NIZK payer address audit")
    s.add_argument("--witness", required=True)
    s.add_argument("--index", type=int, required=True, help="1-based entry index")
    s.add_argument("--commitments", help="also write the commitment set here")
    s.add_argument("--out")
    s.set_defaults(func=cmd_prove_address)

    s = sub.add_parser("verify-address", parents=[common])
    s.add_argument("--commitments", required=True)
    s.add_argument("--index", type=int, required=True)
    s.add_argument("--proof", required=True)
    s.set_defaults(func=cmd_verify_address)

    led = sub.add_parser("ledger", help="ledger state files")
    lsub = led.add_subparsers(dest="ledger_command", required=True)
    s = lsub.add_parser("genesis", parents=[common])
    s.add_argument("--authority", action="append", default=[], metavar="ID=SEED")
    s.add_argument("--fund", action="append", default=[], metavar="ADDRHEX=AMOUNT")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ledger_genesis)
    s = lsub.add_parser("apply", parents=[common])
    s.add_argument("--state", required=True)
    s.add_argument("--block", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ledger_apply)
    s = lsub.add_parser("status", parents=[common])
    s.add_argument("--state", required=True)
    s.add_argument("--address")
    s.set_defaults(func=cmd_ledger_status)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except VerificationFailed as exc:
        print(f"error: VerificationFailed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (LedgerError, AuthorityError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RULE
    except (ScenarioError, EncodingError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
