"""Scenario files, the scenario runner, and the attack pseudo-ops.

A scenario is a line-oriented script: ``instr <opcode> [operand]
[expect=ok|rejected|error:<Kind>]`` plus the pseudo-ops ``spoof-key``,
``dump-chain``, ``inject-tamper`` and ``replay-block``. The format is plain
text on purpose so fixtures diff cleanly in tests. Every step's outcome is
checked against its expectation; a divergence aborts the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .cores import KeyType
from .datapath import (
    CHAIN_DUMP_ADDR,
    Expect,
    Instruction,
    Outcome,
    Simulator,
    StepResult,
)
from .errors import (
    ExpectationMismatch,
    MalformedDump,
    OutOfRange,
    ScenarioError,
    SimError,
)
from .latency import LatencyModel, LatencyReport
from .ledger import ChainReport, load_chain, persist_chain, verify_and_commit, verify_chain

BUNDLED_SCENARIOS = (
    "tls_lifecycle",
    "spoofed_requestee",
    "tampered_chain",
    "wrong_key_type",
    "skipped_destruction",
    "replay_block",
)

ATTACK_SCENARIOS = BUNDLED_SCENARIOS[1:]

_PSEUDO_OPS = ("spoof-key", "dump-chain", "inject-tamper", "replay-block")

# read-request and index-style instructions take an integer operand
_INT_OPERAND_OPCODES = {7, 11, 14}
# these carry a hex byte payload from the host
_BYTES_OPERAND_OPCODES = {1, 4, 6, 13, 16}

_KEY_TYPE_BY_NAME = {t.value: t for t in KeyType}


@dataclass(frozen=True)
class Step:
    kind: str  # "instr" or a pseudo-op name
    expect: Expect
    instruction: Instruction | None = None
    arg: object = None
    line: int = 0


@dataclass
class Scenario:
    name: str
    steps: list
    seed: int = 0
    destroy_policy: dict = field(default_factory=dict)
    sig_data_only: bool = False


def _parse_expect(token: str, line: int) -> Expect:
    value = token.split("=", 1)[1]
    if value == "ok":
        return Expect(Outcome.OK)
    if value == "rejected":
        return Expect(Outcome.REJECTED)
    if value.startswith("error"):
        _, _, kind = value.partition(":")
        return Expect(Outcome.ERROR, error_kind=kind or None)
    raise ScenarioError(f"line {line}: unknown expectation {value!r}")


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    scenario = Scenario(name=name, steps=[])
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("name:"):
            scenario.name = line.split(":", 1)[1].strip()
            continue
        if line.startswith("seed:"):
            try:
                scenario.seed = int(line.split(":", 1)[1].strip(), 0)
            except ValueError as exc:
                raise ScenarioError(f"line {lineno}: bad seed") from exc
            continue
        if line.startswith("sigmode"):
            mode = line.split(None, 1)[1].strip()
            if mode not in ("full", "data-only"):
                raise ScenarioError(f"line {lineno}: sigmode must be full or data-only")
            scenario.sig_data_only = mode == "data-only"
            continue
        if line.startswith("policy"):
            spec = line.split(None, 1)[1].strip()
            key_name, _, action = spec.partition("=")
            key_type = _KEY_TYPE_BY_NAME.get(key_name.strip())
            if key_type is None or action not in ("destroy", "persist"):
                raise ScenarioError(
                    f"line {lineno}: policy must be <key-type>=destroy|persist"
                )
            scenario.destroy_policy[key_type] = action == "destroy"
            continue

        tokens = line.split()
        expect = Expect()
        if tokens[-1].startswith("expect="):
            expect = _parse_expect(tokens.pop(), lineno)

        if tokens[0] == "instr":
            if len(tokens) not in (2, 3):
                raise ScenarioError(f"line {lineno}: instr <opcode> [operand]")
            try:
                opcode = int(tokens[1], 0)
            except ValueError as exc:
                raise ScenarioError(f"line {lineno}: bad opcode {tokens[1]!r}") from exc
            operand = None
            if len(tokens) == 3:
                operand = _parse_operand(opcode, tokens[2], lineno)
            try:
                instruction = Instruction(opcode, operand)
            except ValueError as exc:
                raise ScenarioError(f"line {lineno}: {exc}") from exc
            scenario.steps.append(Step("instr", expect, instruction=instruction, line=lineno))
        elif tokens[0] in _PSEUDO_OPS:
            arg = tokens[1] if len(tokens) > 1 else None
            if tokens[0] in ("inject-tamper", "replay-block"):
                if arg is None:
                    raise ScenarioError(f"line {lineno}: {tokens[0]} needs an argument")
                try:
                    arg = int(arg, 0)
                except ValueError as exc:
                    raise ScenarioError(f"line {lineno}: bad index {arg!r}") from exc
            scenario.steps.append(Step(tokens[0], expect, arg=arg, line=lineno))
        else:
            raise ScenarioError(f"line {lineno}: unknown directive {tokens[0]!r}")
    return scenario


def _parse_operand(opcode: int, token: str, lineno: int):
    if opcode in _INT_OPERAND_OPCODES:
        try:
            return int(token, 0)
        except ValueError as exc:
            raise ScenarioError(f"line {lineno}: instr {opcode} expects a key id") from exc
    if opcode in _BYTES_OPERAND_OPCODES:
        try:
            return bytes.fromhex(token)
        except ValueError as exc:
            raise ScenarioError(f"line {lineno}: instr {opcode} expects hex bytes") from exc
    raise ScenarioError(f"line {lineno}: instr {opcode} takes no operand")


def load_bundled(name: str) -> Scenario:
    if name not in BUNDLED_SCENARIOS:
        raise ScenarioError(f"no bundled scenario named {name!r}")
    text = resources.files("mkmsim").joinpath("scenarios", f"{name}.scn").read_text()
    return parse_scenario(text, name=name)


def inject_tamper(data: bytes, bit_index: int) -> bytes:
    """Flip one bit of a chain dump; flipping it back restores the original."""
    if not 0 <= bit_index < len(data) * 8:
        raise OutOfRange(f"bit {bit_index} outside dump of {len(data)} bytes")
    mutated = bytearray(data)
    mutated[bit_index // 8] ^= 0x80 >> (bit_index % 8)
    return bytes(mutated)


@dataclass
class RunResult:
    scenario: Scenario
    sim: Simulator
    results: list
    report: LatencyReport
    dump: bytes
    verify: ChainReport
    nondestruction: tuple

    @property
    def audit_events(self):
        return self.sim.audit_events


def run_scenario(
    scenario: Scenario,
    *,
    seed: int | None = None,
    latency: LatencyModel | None = None,
) -> RunResult:
    """Execute a scenario on a fresh simulator; deterministic for a given seed."""
    sim = Simulator(
        seed=scenario.seed if seed is None else seed,
        destroy_policy=scenario.destroy_policy,
        sig_data_only=scenario.sig_data_only,
        latency=latency,
    )
    report = LatencyReport(sim.latency)
    results = []
    last_dump: bytes | None = None

    for i, step in enumerate(scenario.steps):
        if step.kind == "instr":
            result = sim.execute(step.instruction)
            report.add_instruction(i, step.instruction.opcode, result.name, result.latency_ps)
        else:
            result = _run_pseudo(sim, step, i, last_dump)
            if step.kind == "dump-chain":
                last_dump = sim.shared_memory.read(CHAIN_DUMP_ADDR)
            report.add_zero(i, step.kind)
        results.append(result)
        if not step.expect.matches(result):
            raise ExpectationMismatch(
                f"{scenario.name} step {i} (line {step.line}, {result.name}): expected "
                f"{step.expect.kind.value}, got {result.outcome.value}"
                + (f" [{result.detail}]" if result.detail else "")
            )

    return RunResult(
        scenario=scenario,
        sim=sim,
        results=results,
        report=report,
        dump=persist_chain(sim.chain),
        verify=verify_chain(sim.chain, sim.registry, data_only=sim.sig_data_only),
        nondestruction=nondestruction_flags(sim),
    )


def nondestruction_flags(sim: Simulator) -> tuple:
    """Key ids whose destroy-on-read policy was never honored by a read."""
    return tuple(
        sorted(
            key_id
            for key_id, record in sim.mkm.records.items()
            if record.destroy_on_read and not record.destroyed
        )
    )


def _pseudo_result(sim, step, index, outcome, detail=None) -> StepResult:
    return StepResult(
        step=index,
        opcode=0,
        name=step.kind,
        outcome=outcome,
        detail=detail,
        latency_ps=0,
        status_word=sim.status_word(),
        transfers=(),
        warnings=(),
    )


def _run_pseudo(sim: Simulator, step: Step, index: int, last_dump: bytes | None) -> StepResult:
    try:
        if step.kind == "spoof-key":
            target = step.arg or "rogue"
            if target == "off":
                sim.sign_override = None
            elif target == "rogue":
                sim.sign_override = sim.rogue_keypair()
            elif target in sim.keypairs:
                sim.sign_override = sim.keypairs[target]
            else:
                raise ScenarioError(f"spoof-key target {target!r} unknown")
            return _pseudo_result(sim, step, index, Outcome.OK)

        if step.kind == "dump-chain":
            dump = persist_chain(sim.chain)
            sim.shared_memory.write(CHAIN_DUMP_ADDR, dump)
            return _pseudo_result(sim, step, index, Outcome.OK, f"{len(dump)} bytes")

        if step.kind == "inject-tamper":
            if last_dump is None:
                raise ScenarioError("inject-tamper before any dump-chain")
            tampered = inject_tamper(last_dump, step.arg)
            try:
                loaded = load_chain(tampered)
            except MalformedDump as exc:
                return _pseudo_result(
                    sim, step, index, Outcome.REJECTED, f"load failed: {exc}"
                )
            verdict = verify_chain(loaded, sim.registry)
            if verdict.ok:
                return _pseudo_result(sim, step, index, Outcome.OK, "tamper not detected")
            return _pseudo_result(sim, step, index, Outcome.REJECTED, str(verdict))

        if step.kind == "replay-block":
            blocks = sim.chain.blocks
            if not 0 <= step.arg < len(blocks):
                raise OutOfRange(f"no block {step.arg} in a {len(blocks)}-block chain")
            replayed = blocks[step.arg]
            result = verify_and_commit(
                sim.chain,
                replayed,
                sim.registry,
                sim.mkm,
                data_only=sim.sig_data_only,
                now_ns=sim.timer.now_ns,
            )
            if result.granted:
                return _pseudo_result(sim, step, index, Outcome.OK, "replay accepted")
            sim.audit_events.append(result.event)
            return _pseudo_result(sim, step, index, Outcome.REJECTED, result.reason)

        raise ScenarioError(f"unknown pseudo-op {step.kind!r}")
    except SimError as exc:
        return _pseudo_result(
            sim, step, index, Outcome.ERROR, f"{type(exc).__name__}: {exc}"
        )
