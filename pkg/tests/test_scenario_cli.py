import json
import subprocess
import sys
from pathlib import Path

import pytest

from taxledger.cli import main
from taxledger.crypto import hash_to_address, keygen
from taxledger.ledger import Block, LedgerState, make_transaction
from taxledger.scenario import ScenarioError, address_of, parse_scenario, run_scenario

GOLDEN = Path(__file__).parent / "golden"


# --- scenarios


def test_empty_scenario():
    report = run_scenario("", text="# nothing here\n")
    assert report.ok and report.steps == []
    assert report.final_state.height == 0
    assert report.render().splitlines()[-1] == "result\tPASS"


def test_freeze_demo_hits_frozen_source():
    report = run_scenario("freeze_demo")
    assert report.ok
    assert "FrozenSource" in [s.outcome for s in report.steps]


def test_declare_demo_passes():
    report = run_scenario("declare_demo")
    assert report.ok
    assert [s.outcome for s in report.steps].count("VerificationFailed") == 2


@pytest.mark.parametrize("name", ["freeze_demo", "declare_demo"])
def test_golden_reports(name):
    assert run_scenario(name).render() == (GOLDEN / f"{name}.report").read_text()


def test_seed_changes_declare_report():
    a = run_scenario("declare_demo", seed=b"\x00").render()
    b = run_scenario("declare_demo", seed=b"\x01").render()
    assert a != b


def test_mismatch_reported_as_fail():
    report = run_scenario("", text="authority T\naccount a balance=1\naccount b\ntx a b 2 expect=OK\n")
    assert not report.ok
    assert report.steps[-1].outcome == "InsufficientBalance"
    assert report.render().splitlines()[-1] == "result\tFAIL"


@pytest.mark.parametrize(
    "text,line",
    [
        ("authority T\nfrobnicate x\n", 2),
        ("authority T\n\n\nblock count=abc\n", 4),
        ('authority T\naccount "unterminated\n', 2),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ScenarioError) as exc:
        run_scenario("", text=text)
    assert exc.value.lineno == line


def test_unknown_entity_is_error():
    with pytest.raises(ScenarioError):
        run_scenario("", text="authority T\naccount a balance=5\ntx a ghost 1\n")


def test_expect_tokens_stripped_from_command_text():
    (cmd,) = parse_scenario("block count=2 expect=OK  # trailing\n")
    assert cmd.expect == "OK" and cmd.text == "block count=2"


# --- CLI


def run_cli(argv, capsys):
    rc = main([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_cli_prove_verify_asset(tmp_path, capsys):
    wit, comms, proof = tmp_path / "w.json", tmp_path / "c.bin", tmp_path / "p.bin"
    assert run_cli(["make-witness", "--n", 6, "--seed", "01", "--out", wit], capsys)[0] == 0
    rc, _, err = run_cli(
        ["prove-asset", "--witness", wit, "--commitments", comms, "--out", proof, "--seed", "02"],
        capsys,
    )
    assert rc == 0
    theta = int(err.split("\t")[1])
    rc, out, _ = run_cli(
        ["verify-asset", "--commitments", comms, "--proof", proof, "--theta", theta], capsys
    )
    assert rc == 0 and out.strip() == "accepted"
    rc, _, _ = run_cli(
        ["verify-asset", "--commitments", comms, "--proof", proof, "--theta", theta + 1], capsys
    )
    assert rc == 1


def test_cli_prove_verify_address_text_format(tmp_path, capsys):
    wit, comms, proof = tmp_path / "w.json", tmp_path / "c.json", tmp_path / "p.json"
    run_cli(["make-witness", "--n", 4, "--seed", "03", "--out", wit], capsys)
    doc = json.loads(wit.read_text())
    owned = [i + 1 for i, b in enumerate(doc["ownership_bits"]) if b]
    unowned = [i + 1 for i, b in enumerate(doc["ownership_bits"]) if not b]
    assert owned and unowned
    for index, rc_expected in [(owned[0], 0), (unowned[0], 1)]:
        args = ["--witness", wit, "--index", index, "--commitments", comms, "--out", proof]
        assert run_cli(["prove-address", *args, "--format", "text"], capsys)[0] == 0
        rc, _, _ = run_cli(
            ["verify-address", "--commitments", comms, "--index", index, "--proof", proof], capsys
        )
        assert rc == rc_expected
    assert json.loads(proof.read_text())["protocol"] == "address"


def test_cli_format_error(tmp_path, capsys):
    bad = tmp_path / "garbage.bin"
    bad.write_bytes(b"\x01\x02\x03")
    rc, _, err = run_cli(
        ["verify-asset", "--commitments", bad, "--proof", bad, "--theta", 1], capsys
    )
    assert rc == 2 and err.startswith("error:")
    assert run_cli(["verify-asset", "--commitments", tmp_path / "missing", "--proof", bad,
                    "--theta", 1], capsys)[0] == 2
    assert run_cli(["make-witness", "--seed", "zz"], capsys)[0] == 2


def test_cli_rule_violation(tmp_path, capsys):
    kp = keygen(b"cli-source")
    src = hash_to_address(kp.vk)
    dst = hash_to_address(keygen(b"cli-dest").vk)
    state_path = tmp_path / "s.bin"
    rc, _, _ = run_cli(
        ["ledger", "genesis", "--authority", "0=auth", "--fund", f"{src.hex()}=5",
         "--out", state_path],
        capsys,
    )
    assert rc == 0
    state = LedgerState.loads(state_path.read_bytes())
    block = Block(1, state.tip, (make_transaction(kp, dst, 6, 0),))
    block_path = tmp_path / "b.json"
    block_path.write_text(json.dumps(block.to_text()))
    rc, _, err = run_cli(
        ["ledger", "apply", "--state", state_path, "--block", block_path, "--out",
         tmp_path / "s2.bin"],
        capsys,
    )
    assert rc == 3 and "InsufficientBalance" in err

    ok = Block(1, state.tip, (make_transaction(kp, dst, 5, 0),))
    block_path.write_bytes(ok.encode())
    rc, _, _ = run_cli(
        ["ledger", "apply", "--state", state_path, "--block", block_path, "--out",
         tmp_path / "s2.bin"],
        capsys,
    )
    assert rc == 0
    rc, out, _ = run_cli(["ledger", "status", "--state", tmp_path / "s2.bin"], capsys)
    assert rc == 0 and "height\t1" in out and f"{dst.hex()}\t5\tLiquid" in out


def test_cli_run_scenario_then_status(tmp_path, capsys):
    state = tmp_path / "final.json"
    rc, out, _ = run_cli(
        ["run-scenario", "freeze_demo", "--state-out", state, "--format", "text"], capsys
    )
    assert rc == 0 and out == (GOLDEN / "freeze_demo.report").read_text()
    alice = address_of("alice")
    rc, out, _ = run_cli(["ledger", "status", "--state", state, "--address", alice.hex()], capsys)
    assert rc == 0 and out.strip().endswith("Frozen")


def test_cli_run_scenario_mismatch_exit_1(tmp_path, capsys):
    script = tmp_path / "s.txt"
    script.write_text("authority T\naccount a balance=1\naccount b\ntx a b 2 expect=OK\n")
    rc, out, _ = run_cli(["run-scenario", script], capsys)
    assert rc == 1 and out.endswith("result\tFAIL\n")


def test_cli_seed_env_fallback(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TAXLEDGER_SEED", "ab")
    _, env_out, _ = run_cli(["run-scenario", "declare_demo"], capsys)
    monkeypatch.delenv("TAXLEDGER_SEED")
    _, flag_out, _ = run_cli(["run-scenario", "declare_demo", "--seed", "ab"], capsys)
    _, default_out, _ = run_cli(["run-scenario", "declare_demo"], capsys)
    assert env_out == flag_out != default_out


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "taxledger.cli", "run-scenario", "declare_demo"],
        capture_output=True,
    )
    assert proc.returncode == 0
    assert proc.stdout == (GOLDEN / "declare_demo.report").read_bytes()
