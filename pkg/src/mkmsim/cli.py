"""Command-line front end.

Exit codes: 0 success and all expectations met, 1 chain verification failure,
2 scenario or expectation error, 3 I/O or parse problems.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .datapath import genesis_keypairs
from .errors import (
    ExpectationMismatch,
    MalformedDump,
    ScenarioError,
    SimError,
    UnknownKeyId,
)
from .latency import format_ns, parse_latency_model
from .ledger import IpRegistry, audit_key, load_chain, verify_chain
from .scenario import (
    ATTACK_SCENARIOS,
    BUNDLED_SCENARIOS,
    Outcome,
    load_bundled,
    parse_scenario,
    run_scenario,
)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_SCENARIO_ERROR = 2
EXIT_IO_ERROR = 3


def _err(message: str) -> None:
    print(f"mkmsim: {message}", file=sys.stderr)


def _load_scenario(ref: str):
    path = Path(ref)
    if path.exists():
        return parse_scenario(path.read_text(), name=path.stem)
    if ref in BUNDLED_SCENARIOS:
        return load_bundled(ref)
    raise FileNotFoundError(f"no scenario file or bundled scenario named {ref!r}")


def _registry_for_seed(seed: int) -> IpRegistry:
    return IpRegistry.from_keypairs(genesis_keypairs(seed))


def _cmd_run(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
        latency = None
        if args.latency_model:
            latency = parse_latency_model(Path(args.latency_model).read_text())
    except (OSError, ScenarioError) as exc:
        _err(str(exc))
        return EXIT_IO_ERROR

    try:
        result = run_scenario(scenario, seed=args.seed, latency=latency)
    except ExpectationMismatch as exc:
        _err(f"expectation mismatch: {exc}")
        return EXIT_SCENARIO_ERROR
    except SimError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_SCENARIO_ERROR

    if args.chain_out:
        try:
            Path(args.chain_out).write_bytes(result.dump)
        except OSError as exc:
            _err(str(exc))
            return EXIT_IO_ERROR
    report_text = result.report.render()
    if args.report:
        try:
            Path(args.report).write_text(report_text)
        except OSError as exc:
            _err(str(exc))
            return EXIT_IO_ERROR

    rejected = sum(1 for r in result.results if r.outcome is Outcome.REJECTED)
    print(f"scenario: {result.scenario.name}")
    print(f"steps: {len(result.results)} (rejected as expected: {rejected})")
    print(f"chain: {len(result.sim.chain.blocks)} blocks, verification: {result.verify}")
    print(f"granted transactions: {len(result.sim.grants)}")
    if result.nondestruction:
        ids = ", ".join(str(k) for k in result.nondestruction)
        print(f"NON-DESTRUCTION: key ids {ids} still live despite destroy-on-read")
    print(f"simulated time: {format_ns(result.sim.timer.now_ps)} ns")
    if not result.verify.ok:
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def _cmd_verify_chain(args) -> int:
    try:
        data = Path(args.dump).read_bytes()
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO_ERROR
    try:
        chain = load_chain(data)
    except MalformedDump as exc:
        _err(f"dump rejected: {exc}")
        return EXIT_VERIFY_FAILED
    report = verify_chain(
        chain, _registry_for_seed(args.seed), data_only=args.sig_mode == "data-only"
    )
    if report.ok:
        print(f"chain OK ({len(chain.blocks)} blocks)")
        return EXIT_OK
    print(f"chain verification FAILED: {report}")
    return EXIT_VERIFY_FAILED


def _cmd_audit(args) -> int:
    try:
        data = Path(args.dump).read_bytes()
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO_ERROR
    try:
        chain = load_chain(data)
    except MalformedDump as exc:
        _err(f"cannot parse dump: {exc}")
        return EXIT_IO_ERROR
    try:
        trace = audit_key(chain, args.key_id)
    except UnknownKeyId as exc:
        _err(str(exc))
        return EXIT_SCENARIO_ERROR
    print(f"key {args.key_id}:")
    for event in trace.events:
        print(f"  {event}")
    if trace.unread:
        print("  note: written but never read before chain end (possible non-destruction)")
    return EXIT_OK


def _cmd_attack(args) -> int:
    if args.name not in ATTACK_SCENARIOS:
        _err(f"unknown attack {args.name!r}; choose from: {', '.join(ATTACK_SCENARIOS)}")
        return EXIT_IO_ERROR
    try:
        result = run_scenario(load_bundled(args.name), seed=args.seed)
    except ExpectationMismatch as exc:
        _err(f"attack was NOT contained: {exc}")
        return EXIT_SCENARIO_ERROR
    rejected = [r for r in result.results if r.outcome is Outcome.REJECTED]
    print(f"attack: {args.name}")
    for r in rejected:
        print(f"  step {r.step} {r.name}: rejected [{r.detail}]")
    if result.nondestruction:
        ids = ", ".join(str(k) for k in result.nondestruction)
        print(f"  audit flag: non-destruction of key ids {ids}")
    print(f"chain: {len(result.sim.chain.blocks)} blocks, verification: {result.verify}")
    print("all expectations met; attack contained")
    return EXIT_OK


def _cmd_list(_args) -> int:
    for name in BUNDLED_SCENARIOS:
        kind = "attack" if name in ATTACK_SCENARIOS else "lifecycle"
        print(f"{name}\t{kind}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mkmsim",
        description="Transaction-level simulator of a blockchain-audited master key memory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file or bundled scenario")
    p_run.add_argument("scenario", help="path to a .scn file or a bundled scenario name")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--chain-out", help="write the final chain dump here")
    p_run.add_argument("--latency-model", help="latency model file (component=value unit)")
    p_run.add_argument("--report", help="write the latency report (TSV) here")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify-chain", help="verify a persisted chain dump")
    p_verify.add_argument("dump", help="chain dump file")
    p_verify.add_argument("--seed", type=int, default=0,
                          help="genesis seed the chain was produced under")
    p_verify.add_argument("--sig-mode", choices=("full", "data-only"), default="full",
                          help="signature coverage mode the chain was produced under")
    p_verify.set_defaults(func=_cmd_verify_chain)

    p_audit = sub.add_parser("audit", help="print the lifecycle trace of one key")
    p_audit.add_argument("dump", help="chain dump file")
    p_audit.add_argument("--key-id", type=int, required=True)
    p_audit.set_defaults(func=_cmd_audit)

    p_attack = sub.add_parser("attack", help="run a bundled adversarial scenario")
    p_attack.add_argument("name", help=", ".join(ATTACK_SCENARIOS))
    p_attack.add_argument("--seed", type=int, default=None)
    p_attack.set_defaults(func=_cmd_attack)

    p_list = sub.add_parser("list-scenarios", help="list bundled scenarios")
    p_list.set_defaults(func=_cmd_list)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
