"""Simulated-time accounting.

Default charges follow the measured hardware costs: key-memory access 20 ns,
path controller 10 ns, one RSA exponentiation 86 us, one Keccak pass 67.2 ns.
Everything is stored in picoseconds so the fractional Keccak charge stays
exact; reports render nanoseconds with one decimal.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .errors import ScenarioError

PS_PER_NS = 1000

_UNIT_PS = {"ps": 1, "ns": 1000, "us": 1_000_000, "ms": 1_000_000_000}


@dataclass(frozen=True)
class LatencyModel:
    mkm_access: int = 20 * PS_PER_NS
    path_controller: int = 10 * PS_PER_NS
    rsa_op: int = 86_000 * PS_PER_NS
    keccak_op: int = 67_200  # 67.2 ns

    COMPONENTS = ("mkm_access", "path_controller", "rsa_op", "keccak_op")

    def __post_init__(self):
        for name in self.COMPONENTS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def zero(cls) -> LatencyModel:
        return cls(0, 0, 0, 0)


# Cost composition per instruction. Block generation and the first signature
# step each run the hash core once; the signature exponentiations dominate
# instructions 19-21; the commit instruction is the only one touching the key
# memory. Instruction 8 includes the two derivation passes of the hash core.
INSTRUCTION_COSTS = {
    1: ("path_controller",),
    2: ("path_controller",),
    3: ("path_controller", "keccak_op"),
    4: ("path_controller",),
    5: ("rsa_op",),
    6: (),
    7: ("path_controller", "keccak_op"),
    8: ("path_controller", "keccak_op", "keccak_op"),
    9: ("path_controller",),
    10: ("path_controller", "keccak_op"),
    11: ("path_controller", "keccak_op"),
    12: ("path_controller",),
    13: (),
    14: ("path_controller", "keccak_op"),
    15: ("path_controller",),
    16: ("keccak_op",),
    17: ("keccak_op", "path_controller"),
    18: ("path_controller",),
    19: ("rsa_op", "path_controller"),
    20: ("rsa_op", "path_controller"),
    21: ("rsa_op", "keccak_op", "mkm_access"),
}


def latency_of(opcode: int, model: LatencyModel) -> int:
    """Charge in picoseconds for one instruction under the given model."""
    return sum(getattr(model, c) for c in INSTRUCTION_COSTS[opcode])


def format_ns(ps: int) -> str:
    return f"{ps // PS_PER_NS}.{ps % PS_PER_NS // 100}"


def parse_latency_model(text: str) -> LatencyModel:
    """Parse ``component=value unit`` lines (units ps/ns/us); '#' comments."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"latency model line {lineno}: expected component=value")
        name, _, rhs = line.partition("=")
        name = name.strip()
        if name not in LatencyModel.COMPONENTS:
            raise ScenarioError(f"latency model line {lineno}: unknown component {name!r}")
        rhs = rhs.strip()
        unit = next((u for u in _UNIT_PS if rhs.endswith(u)), None)
        if unit is None:
            raise ScenarioError(f"latency model line {lineno}: missing unit (ps/ns/us)")
        number = rhs[: -len(unit)].strip()
        try:
            ps = Decimal(number) * _UNIT_PS[unit]
        except InvalidOperation as exc:
            raise ScenarioError(f"latency model line {lineno}: bad value {number!r}") from exc
        if ps != int(ps):
            raise ScenarioError(f"latency model line {lineno}: finer than 1 ps")
        values[name] = int(ps)
    defaults = LatencyModel()
    return LatencyModel(**{c: values.get(c, getattr(defaults, c)) for c in LatencyModel.COMPONENTS})


@dataclass(frozen=True)
class ReportRow:
    step: int
    label: str
    charge_ps: int


class LatencyReport:
    """Per-step charges with per-component totals; totals always reconcile
    with the final simulated time."""

    def __init__(self, model: LatencyModel):
        self.model = model
        self.rows: list = []
        self.component_totals = {c: 0 for c in LatencyModel.COMPONENTS}
        self.total_ps = 0

    def add_instruction(self, step: int, opcode: int, name: str, charge_ps: int) -> None:
        """Record one executed instruction; error steps charge nothing."""
        if charge_ps:
            for component in INSTRUCTION_COSTS[opcode]:
                self.component_totals[component] += getattr(self.model, component)
        self.rows.append(ReportRow(step, f"instr {opcode} {name}", charge_ps))
        self.total_ps += charge_ps

    def add_zero(self, step: int, label: str) -> None:
        self.rows.append(ReportRow(step, label, 0))

    def render(self) -> str:
        lines = ["step\toperation\tcharge_ns\tcumulative_ns"]
        running = 0
        for row in self.rows:
            running += row.charge_ps
            lines.append(f"{row.step}\t{row.label}\t{format_ns(row.charge_ps)}\t{format_ns(running)}")
        lines.append("")
        for component in LatencyModel.COMPONENTS:
            lines.append(f"total\t{component}\t{format_ns(self.component_totals[component])}\t")
        lines.append(f"total\tscenario\t{format_ns(self.total_ps)}\t")
        return "\n".join(lines) + "\n"
