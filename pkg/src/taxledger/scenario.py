"""Line-oriented scenario scripts driving the ledger, authority and proofs.

One command per line; ``#`` starts a comment; ``key=value`` tokens are
options; ``expect=TAG`` pins the outcome of that step. Commands:

    period BLOCKS
    authority NAME [id=N] [seed=S]
    account NAME [balance=N] [seed=S]          (genesis funding, before any block)
    register TAXPAYER [by=AUTHORITY]
    certify TAXPAYER ACCOUNT [by=AUTHORITY]
    tx SRC DST AMOUNT [certified] [nonce=N]    (queued into the pending block)
    block [count=N | until=HEIGHT]
    rotate-key AUTHORITY [seed=S]              (published in the next block)
    checkpoint AUTHORITY [height=H]            (published in the next block)
    declare EXCHANGE n=N [owned=i,j,..] [theta_delta=D] [by=AUTHORITY]
    audit-address EXCHANGE index=I             (1-based index into the set)

Outcome tags are ``OK`` or the name of the raised error class.
"""

from __future__ import annotations

import hashlib
import shlex
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .authority import AuthorityError, AuthorityState, VerificationFailed
from .crypto import Address, KeyPair, ScalarSource, hash_to_address, keygen
from .ledger import (
    AuthorityUpdate,
    Block,
    CertifiedAddress,
    CheckpointRecord,
    LedgerError,
    LedgerState,
    TaxPeriodConfig,
    apply_block,
    apply_transaction,
    certify_checkpoint,
    freeze_status,
    genesis,
    make_transaction,
    rotate_authority_key,
)
from .protocols import (
    AddressAuditStatement,
    AssetDeclStatement,
    ProtocolId,
    fiat_shamir_prove,
    fiat_shamir_verify,
)
from .provisions import ProvisionsInstance, random_instance

BUNDLED = ("freeze_demo", "declare_demo")


class ScenarioError(Exception):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass
class Command:
    lineno: int
    verb: str
    args: list[str]
    opts: dict[str, str]
    flags: set[str]
    expect: str | None
    text: str


@dataclass
class StepResult:
    index: int
    lineno: int
    command: str
    outcome: str
    expected: str | None
    detail: str = ""

    @property
    def matches(self) -> bool:
        return self.expected is None or self.expected == self.outcome


@dataclass
class Report:
    steps: list[StepResult] = field(default_factory=list)
    state_digest: str = ""
    authority_digest: str = ""
    final_state: LedgerState | None = None

    @property
    def ok(self) -> bool:
        return all(s.matches for s in self.steps)

    def render(self) -> str:
        lines = ["step\tline\tcommand\toutcome\texpected\tstatus\tdetail"]
        for s in self.steps:
            lines.append(
                "\t".join(
                    [
                        str(s.index),
                        str(s.lineno),
                        s.command,
                        s.outcome,
                        s.expected or "-",
                        "ok" if s.matches else "MISMATCH",
                        s.detail,
                    ]
                )
            )
        lines.append(f"state_digest\t{self.state_digest}")
        lines.append(f"authority_digest\t{self.authority_digest}")
        lines.append(f"result\t{'PASS' if self.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


def parse_scenario(text: str) -> list[Command]:
    cmds = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise ScenarioError(lineno, str(exc)) from None
        verb, rest = tokens[0], tokens[1:]
        args, opts, flags = [], {}, set()
        for tok in rest:
            if "=" in tok:
                k, v = tok.split("=", 1)
                opts[k] = v
            elif tok in ("certified",):
                flags.add(tok)
            else:
                args.append(tok)
        expect = opts.pop("expect", None)
        shown = " ".join(t for t in tokens if not t.startswith("expect="))
        cmds.append(Command(lineno, verb, args, opts, flags, expect, shown))
    return cmds


def load_scenario_text(path_or_name: str | Path) -> str:
    """Read a scenario file, or a bundled scenario by name."""
    p = Path(path_or_name)
    if p.exists():
        return p.read_text()
    name = str(path_or_name)
    if name in BUNDLED:
        return resources.files("taxledger.scenarios").joinpath(f"{name}.txt").read_text()
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name!r}")


class _Runner:
    def __init__(self, seed: bytes, period: int):
        self.rng = ScalarSource(seed)
        self.cfg = TaxPeriodConfig(period)
        self.authorities: dict[str, AuthorityState] = {}
        self.accounts: dict[str, KeyPair] = {}
        self.funding: dict[str, int] = {}
        self.certs: dict[str, CertifiedAddress] = {}
        self.exchanges: dict[str, ProvisionsInstance] = {}
        self.state: LedgerState | None = None
        self.trial: LedgerState | None = None
        self.pending_txs = []
        self.pending_updates: list[AuthorityUpdate] = []
        self.pending_checkpoint: CheckpointRecord | None = None
        self.block_ids: dict[int, bytes] = {}

    # entity lookup

    def authority(self, cmd: Command, name: str | None = None) -> AuthorityState:
        name = name or cmd.opts.get("by")
        if name is None:
            if len(self.authorities) != 1:
                raise ScenarioError(cmd.lineno, "ambiguous authority; pass by=NAME")
            return next(iter(self.authorities.values()))
        if name not in self.authorities:
            raise ScenarioError(cmd.lineno, f"unknown authority {name!r}")
        return self.authorities[name]

    def account(self, cmd: Command, name: str) -> KeyPair:
        if name not in self.accounts:
            raise ScenarioError(cmd.lineno, f"unknown account {name!r}")
        return self.accounts[name]

    def need_args(self, cmd: Command, n: int) -> None:
        if len(cmd.args) != n:
            raise ScenarioError(cmd.lineno, f"{cmd.verb} takes {n} argument(s)")

    def int_opt(self, cmd: Command, key: str, default=None) -> int | None:
        if key not in cmd.opts:
            return default
        try:
            return int(cmd.opts[key])
        except ValueError:
            raise ScenarioError(cmd.lineno, f"{key} must be an integer") from None

    def ensure_genesis(self) -> None:
        if self.state is None:
            auths = {a.authority_id: a.vk for a in self.authorities.values()}
            bals = {
                hash_to_address(self.accounts[n].vk): b for n, b in self.funding.items() if b
            }
            self.state = genesis(auths, bals)
            self.trial = self.state
            self.block_ids[0] = self.state.tip

    # commands; each returns a detail string or raises

    def do_period(self, cmd):
        if self.state is not None:
            raise ScenarioError(cmd.lineno, "period must be set before the ledger starts")
        self.need_args(cmd, 1)
        try:
            self.cfg = TaxPeriodConfig(int(cmd.args[0]))
        except ValueError as exc:
            raise ScenarioError(cmd.lineno, str(exc)) from None
        return f"period={self.cfg.period_blocks}"

    def do_authority(self, cmd):
        if self.state is not None:
            raise ScenarioError(cmd.lineno, "authorities are fixed at genesis")
        self.need_args(cmd, 1)
        name = cmd.args[0]
        aid = self.int_opt(cmd, "id", len(self.authorities))
        kp = keygen(cmd.opts.get("seed", f"authority/{name}").encode())
        self.authorities[name] = AuthorityState(aid, kp)
        return f"id={aid}"

    def do_account(self, cmd):
        self.need_args(cmd, 1)
        name = cmd.args[0]
        if name in self.accounts:
            raise ScenarioError(cmd.lineno, f"account {name!r} already defined")
        bal = self.int_opt(cmd, "balance", 0)
        if bal and self.state is not None:
            raise ScenarioError(cmd.lineno, "funding is only possible before the first block")
        self.accounts[name] = keygen(cmd.opts.get("seed", f"account/{name}").encode())
        self.funding[name] = bal
        return f"address={hash_to_address(self.accounts[name].vk).hex()}"

    def do_register(self, cmd):
        self.need_args(cmd, 1)
        self.authority(cmd).register_taxpayer(cmd.args[0])
        return ""

    def do_certify(self, cmd):
        self.need_args(cmd, 2)
        taxpayer, acct = cmd.args
        alpha = hash_to_address(self.account(cmd, acct).vk)
        self.certs[acct] = self.authority(cmd).certify_address(taxpayer, alpha)
        return ""

    def do_tx(self, cmd):
        self.need_args(cmd, 3)
        self.ensure_genesis()
        src, dst, amount = cmd.args
        kp = self.account(cmd, src)
        if "certified" in cmd.flags:
            if dst not in self.certs:
                raise ScenarioError(cmd.lineno, f"account {dst!r} has no certification")
            dest = self.certs[dst]
        else:
            dest = hash_to_address(self.account(cmd, dst).vk)
        try:
            amount = int(amount)
        except ValueError:
            raise ScenarioError(cmd.lineno, "amount must be an integer") from None
        src_addr = hash_to_address(kp.vk)
        nonce = self.int_opt(cmd, "nonce", self.trial.nonce_of(src_addr))
        tx = make_transaction(kp, dest, amount, nonce)
        self.trial = apply_transaction(self.trial, tx)
        self.pending_txs.append(tx)
        return ""

    def do_rotate_key(self, cmd):
        self.need_args(cmd, 1)
        self.ensure_genesis()
        auth = self.authority(cmd, cmd.args[0])
        seed = cmd.opts.get("seed", f"authority/{cmd.args[0]}/{len(auth.keypair_chain)}")
        new = keygen(seed.encode())
        sig_up = auth.rotate_key(new)
        self.trial = rotate_authority_key(
            self.trial, sig_up.authority_id, sig_up.new_vk, sig_up.handover_sig
        )
        self.pending_updates.append(sig_up)
        return f"key_index={len(auth.keypair_chain) - 1}"

    def do_checkpoint(self, cmd):
        self.need_args(cmd, 1)
        self.ensure_genesis()
        auth = self.authority(cmd, cmd.args[0])
        height = self.int_opt(cmd, "height", self.state.last_audit)
        if height not in self.block_ids:
            raise ScenarioError(cmd.lineno, f"no block at height {height}")
        block_id = self.block_ids[height]
        rec = auth.sign_checkpoint(height, block_id)
        self.trial = certify_checkpoint(
            self.trial, rec.height, rec.block_id, rec.sig, rec.authority_id, self.cfg
        )
        self.pending_checkpoint = rec
        return f"height={height}"

    def do_block(self, cmd):
        self.ensure_genesis()
        count = self.int_opt(cmd, "count", 1)
        until = self.int_opt(cmd, "until")
        if until is not None:
            count = until - self.state.height
        if count < 1:
            raise ScenarioError(cmd.lineno, "block would not advance the height")
        block = Block(
            self.state.height + 1,
            self.state.tip,
            self.pending_txs,
            self.pending_updates,
            self.pending_checkpoint,
        )
        self.pending_txs, self.pending_updates, self.pending_checkpoint = [], [], None
        try:
            self._append(block)
        finally:
            self.trial = self.state
        for _ in range(count - 1):
            self._append(Block(self.state.height + 1, self.state.tip))
        self.trial = self.state
        return f"height={self.state.height}"

    def _append(self, block: Block) -> None:
        self.state = apply_block(self.state, block, self.cfg)
        self.block_ids[block.height] = self.state.tip

    def do_declare(self, cmd):
        self.need_args(cmd, 1)
        name = cmd.args[0]
        auth = self.authority(cmd)
        n = self.int_opt(cmd, "n", 8)
        owned = None
        if "owned" in cmd.opts:
            owned = [int(i) - 1 for i in cmd.opts["owned"].split(",") if i]
        inst = random_instance(n, self.rng, owned=owned)
        self.exchanges[name] = inst
        theta = inst.theta
        stmt_theta = theta + self.int_opt(cmd, "theta_delta", 0)
        stmt = AssetDeclStatement.from_commitments(inst.commitments, theta)
        proof = fiat_shamir_prove(ProtocolId.ASSET, stmt, inst.witness.v_sum, rng=self.rng)
        auth.require_asset_declaration(name, stmt_theta, inst.commitments, proof)
        return f"theta={stmt_theta}"

    def do_audit_address(self, cmd):
        self.need_args(cmd, 1)
        name = cmd.args[0]
        if name not in self.exchanges:
            raise ScenarioError(cmd.lineno, f"{name!r} has not declared")
        inst = self.exchanges[name]
        index = self.int_opt(cmd, "index")
        if index is None or not 1 <= index <= len(inst.aset):
            raise ScenarioError(cmd.lineno, "index must be within the commitment set")
        stmt = AddressAuditStatement.from_commitment_set(inst.aset, inst.commitments, index)
        w = inst.witness
        proof = fiat_shamir_prove(
            ProtocolId.ADDRESS,
            stmt,
            (w.blinders_t[index - 1], w.blinders_v[index - 1]),
            rng=self.rng,
        )
        if not fiat_shamir_verify(ProtocolId.ADDRESS, stmt, proof):
            raise VerificationFailed(f"address {index} of {name} failed the audit")
        return f"index={index}"

    def run(self, cmds: list[Command]) -> Report:
        report = Report()
        for i, cmd in enumerate(cmds, 1):
            handler = getattr(self, "do_" + cmd.verb.replace("-", "_"), None)
            if handler is None:
                raise ScenarioError(cmd.lineno, f"unknown command {cmd.verb!r}")
            try:
                detail = handler(cmd)
                outcome = "OK"
            except (LedgerError, AuthorityError) as exc:
                outcome, detail = exc.tag, ""
            report.steps.append(
                StepResult(i, cmd.lineno, cmd.text, outcome, cmd.expect, detail)
            )
        self.ensure_genesis()
        report.final_state = self.state
        report.state_digest = self.state.digest()
        h = hashlib.sha256()
        for name in sorted(self.authorities):
            h.update(self.authorities[name].encode())
        report.authority_digest = h.hexdigest()
        return report

    def status_of(self, account: str):
        return freeze_status(self.state, hash_to_address(self.accounts[account].vk))


def run_scenario(
    source: str | Path,
    seed: bytes = b"\x00",
    period: int | None = None,
    *,
    text: str | None = None,
) -> Report:
    """Run a scenario file (or bundled name, or literal ``text``) on fresh state."""
    if text is None:
        text = load_scenario_text(source)
    cmds = parse_scenario(text)
    runner = _Runner(seed, period or TaxPeriodConfig().period_blocks)
    return runner.run(cmds)


def address_of(name_seed: str) -> Address:
    """Address a scenario assigns to ``account NAME`` with no explicit seed."""
    return hash_to_address(keygen(f"account/{name_seed}".encode()).vk)
