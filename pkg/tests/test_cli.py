import pytest

from mkmsim.cli import main
from mkmsim.scenario import ATTACK_SCENARIOS


@pytest.fixture
def lifecycle_dump(tmp_path):
    out = tmp_path / "chain.bin"
    code = main(["run", "tls_lifecycle", "--chain-out", str(out)])
    assert code == 0
    return out


def test_run_bundled_scenario(capsys, lifecycle_dump):
    out = capsys.readouterr().out
    assert "chain: 12 blocks" in out
    assert "chain OK" in out


def test_run_writes_report(tmp_path, capsys):
    report = tmp_path / "latency.tsv"
    assert main(["run", "spoofed_requestee", "--report", str(report)]) == 0
    text = report.read_text()
    assert text.startswith("step\toperation")
    assert "total\tscenario" in text


def test_run_missing_scenario_is_an_io_error(capsys):
    assert main(["run", "no-such-scenario"]) == 3
    assert "no scenario" in capsys.readouterr().err


def test_run_scenario_file_with_failed_expectation(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("instr 8\n")  # delivery with nothing granted
    assert main(["run", str(bad)]) == 2
    assert "expectation mismatch" in capsys.readouterr().err


def test_run_with_custom_latency_model(tmp_path, capsys):
    model = tmp_path / "model.txt"
    model.write_text("rsa_op = 0 ns\nkeccak_op = 0 ns\nmkm_access = 0 ns\npath_controller = 0 ns\n")
    assert main(["run", "tls_lifecycle", "--latency-model", str(model)]) == 0
    assert "simulated time: 0.0 ns" in capsys.readouterr().out


def test_run_with_bad_latency_model(tmp_path, capsys):
    model = tmp_path / "model.txt"
    model.write_text("rsa_op = banana\n")
    assert main(["run", "tls_lifecycle", "--latency-model", str(model)]) == 3


def test_verify_chain_accepts_untampered(lifecycle_dump, capsys):
    assert main(["verify-chain", str(lifecycle_dump)]) == 0
    assert "chain OK (12 blocks)" in capsys.readouterr().out


def test_verify_chain_flags_tampered(lifecycle_dump, tmp_path, capsys):
    data = bytearray(lifecycle_dump.read_bytes())
    data[700] ^= 0x10
    bad = tmp_path / "tampered.bin"
    bad.write_bytes(bytes(data))
    assert main(["verify-chain", str(bad)]) == 1
    err_out = capsys.readouterr().out
    assert "FAILED" in err_out and "block" in err_out


def test_verify_chain_flags_truncated(lifecycle_dump, tmp_path, capsys):
    bad = tmp_path / "short.bin"
    bad.write_bytes(lifecycle_dump.read_bytes()[:-5])
    assert main(["verify-chain", str(bad)]) == 1


def test_verify_chain_wrong_seed_fails(lifecycle_dump):
    assert main(["verify-chain", str(lifecycle_dump), "--seed", "9"]) == 1


def test_verify_chain_missing_file(capsys):
    assert main(["verify-chain", "/nonexistent/chain.bin"]) == 3


def test_audit_prints_lifecycle(lifecycle_dump, capsys):
    assert main(["audit", str(lifecycle_dump), "--key-id", "1"]) == 0
    out = capsys.readouterr().out
    assert "WRITE by rng" in out
    assert "READ by hash" in out


def test_audit_unknown_key(lifecycle_dump, capsys):
    assert main(["audit", str(lifecycle_dump), "--key-id", "77"]) == 2


@pytest.mark.parametrize("name", ATTACK_SCENARIOS)
def test_attack_scenarios_contained(name, capsys):
    assert main(["attack", name]) == 0
    assert "attack contained" in capsys.readouterr().out


def test_attack_unknown_name(capsys):
    assert main(["attack", "nonexistent"]) == 3


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert "tls_lifecycle" in out and "replay_block" in out
