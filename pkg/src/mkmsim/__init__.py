"""Transaction-level simulator of a security processor whose isolated master
key memory is reachable only through signed, hash-chained transactions."""

from .cores import (
    DEFAULT_DESTROY_ON_READ,
    BufferState,
    DestPort,
    GrantToken,
    KeyRecord,
    KeyType,
    MemoryRegion,
    MkmState,
    SourcePort,
    SystemStatus,
    TimerState,
    TxOp,
)
from .datapath import (
    ControlWord,
    Expect,
    Instruction,
    Outcome,
    Simulator,
    decode_cwr,
    encode_cwr,
    genesis_keypairs,
)
from .errors import SimError
from .latency import LatencyModel, LatencyReport, latency_of, parse_latency_model
from .ledger import (
    AuditEvent,
    Block,
    Chain,
    ChainReport,
    IpRegistry,
    audit_key,
    compose_block,
    load_chain,
    persist_chain,
    sign_block,
    verify_and_commit,
    verify_chain,
)
from .scenario import (
    ATTACK_SCENARIOS,
    BUNDLED_SCENARIOS,
    RunResult,
    Scenario,
    inject_tamper,
    load_bundled,
    parse_scenario,
    run_scenario,
)

__version__ = "0.1.0"
