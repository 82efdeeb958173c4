"""State machines for the simulated IP cores.

Covers the bus port encodings, the enable/ready status vector, the typed key
records inside the isolated master key memory (MKM), the transaction buffer
that gates it, the monotonic timer, and the processor-visible shared memory
with its taint scan. Everything here is driven by the datapath executor; the
MKM additionally refuses any mutation that does not present a grant token.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from .crypto import DrbgState, drbg_next_384, keccak_digest
from .errors import (
    CoreNotEnabled,
    DuplicateKeyId,
    IsolationViolation,
    KeyNotFound,
    KeyTypeMismatch,
    NoGrant,
    NoInputStaged,
    PreconditionViolated,
)

ZERO_DIGEST = bytes(64)


class SourcePort(IntEnum):
    """Input addresses of the bus interconnect (CWR bits 15:12)."""

    RNG = 0b0000
    BUFF = 0b0001
    HASH = 0b0010
    PUBEN = 0b0011


class DestPort(IntEnum):
    """Output addresses of the bus interconnect (CWR bits 11:8)."""

    BUFF = 0b0000
    HASH_KEY = 0b0001
    EN_KEY = 0b0010
    HASH_IN = 0b0011
    PUBEN_IN = 0b0100


# Registered core identities. ENC never drives the bus as a source but owns
# the EN_KEY delivery port and carries a registered keypair like the others.
IDENTITIES = ("rng", "buff", "hash", "puben", "enc")

SOURCE_IDENTITY = {
    SourcePort.RNG: "rng",
    SourcePort.BUFF: "buff",
    SourcePort.HASH: "hash",
    SourcePort.PUBEN: "puben",
}

DEST_OWNER = {
    DestPort.BUFF: "buff",
    DestPort.HASH_KEY: "hash",
    DestPort.EN_KEY: "enc",
    DestPort.HASH_IN: "hash",
    DestPort.PUBEN_IN: "puben",
}


class TxOp(IntEnum):
    READ = 0x00
    WRITE = 0x01
    GENESIS = 0xFF


class MemoryRegion(Enum):
    PROCESSOR = "processor"
    CRYPTO = "crypto"
    CONFIDENTIAL = "confidential"


class KeyType(Enum):
    PRE_MASTER = "pre-master"
    MASTER = "master"
    ENCRYPTION = "encryption"
    CLIENT_MAC = "client-mac"
    SERVER_MAC = "server-mac"


KEY_SIZES = {
    KeyType.PRE_MASTER: 48,
    KeyType.MASTER: 64,
    KeyType.ENCRYPTION: 16,
    KeyType.CLIENT_MAC: 16,
    KeyType.SERVER_MAC: 16,
}

# Destruction policy: the pre-master is consumed by the single master
# derivation read, session keys are single-use, the master persists so the
# schedule can be re-derived.
DEFAULT_DESTROY_ON_READ = {
    KeyType.PRE_MASTER: True,
    KeyType.MASTER: False,
    KeyType.ENCRYPTION: True,
    KeyType.CLIENT_MAC: True,
    KeyType.SERVER_MAC: True,
}

# Which stored key types each delivery port may receive; a read request whose
# destination port disagrees with the stored type is the "incorrect use" case
# and gets rejected before any MKM access.
PORT_READABLE_TYPES = {
    DestPort.HASH_KEY: frozenset(
        {KeyType.PRE_MASTER, KeyType.MASTER, KeyType.CLIENT_MAC, KeyType.SERVER_MAC}
    ),
    DestPort.EN_KEY: frozenset({KeyType.ENCRYPTION}),
}

# Buffer payload widths: the three producer widths (RNG 384-bit, Keccak
# 512-bit, RSA 1024-bit) plus the 128-bit session-key slices the gateway
# carries during key delivery.
BUFFER_DATA_SIZES = frozenset({16, 48, 64, 128})


@dataclass
class SystemStatus:
    """Enable and ready/done snapshot serialized into every block."""

    enables: int = 0  # CWR low six bits: RSA, RNG, Hash, Enc, MKM, Buff
    rng_done: bool = False
    buff_rd: bool = False
    hash_done: bool = False
    buff_rdy: bool = False
    hash_key_rdy: bool = False
    en_key_rdy: bool = False

    _FLAG_ORDER = ("rng_done", "buff_rd", "hash_done", "buff_rdy", "hash_key_rdy", "en_key_rdy")

    def word(self) -> int:
        """Pack into the fixed 32-bit status word; upper bits stay zero."""
        w = self.enables & 0x3F
        for i, name in enumerate(self._FLAG_ORDER):
            if getattr(self, name):
                w |= 1 << (6 + i)
        return w

    @classmethod
    def from_word(cls, word: int) -> SystemStatus:
        status = cls(enables=word & 0x3F)
        for i, name in enumerate(cls._FLAG_ORDER):
            setattr(status, name, bool(word >> (6 + i) & 1))
        return status


@dataclass
class GrantToken:
    """Single-use capability issued by the signature checker for one MKM op."""

    block_index: int
    op: TxOp
    key_id: int
    dest: DestPort
    used: bool = False

    def consume(self, op: TxOp, key_id: int) -> None:
        if self.used:
            raise NoGrant("grant token already consumed")
        if self.op != op or self.key_id != key_id:
            raise NoGrant(
                f"grant covers {self.op.name} of key {self.key_id}, "
                f"not {op.name} of key {key_id}"
            )
        self.used = True


@dataclass
class KeyRecord:
    key_id: int
    key_type: KeyType
    value: bytes
    created_at: int  # simulated ns
    destroy_on_read: bool
    destroyed: bool = False

    def __post_init__(self):
        expected = KEY_SIZES[self.key_type]
        if not self.destroyed and len(self.value) != expected:
            raise ValueError(
                f"{self.key_type.value} key must be {expected} bytes, got {len(self.value)}"
            )


class MkmState:
    """The isolated key store. Every mutation requires a grant token."""

    region = MemoryRegion.CONFIDENTIAL

    def __init__(self):
        self.records: dict = {}

    def write(self, record: KeyRecord, grant: GrantToken | None) -> int:
        if grant is None:
            raise NoGrant("MKM write attempted without a granted transaction")
        grant.consume(TxOp.WRITE, record.key_id)
        if record.key_id in self.records:
            raise DuplicateKeyId(f"key id {record.key_id} already present")
        self.records[record.key_id] = record
        return record.key_id

    def read(self, key_id: int, requested_type: KeyType, grant: GrantToken | None) -> bytes:
        if grant is None:
            raise NoGrant("MKM read attempted without a granted transaction")
        record = self.records.get(key_id)
        if record is None or record.destroyed:
            raise KeyNotFound(f"key id {key_id} absent or destroyed")
        if requested_type != record.key_type:
            raise KeyTypeMismatch(
                f"key id {key_id} is {record.key_type.value}, requested {requested_type.value}"
            )
        grant.consume(TxOp.READ, key_id)
        value = record.value
        if record.destroy_on_read:
            self.destroy(key_id)
        return value

    def destroy(self, key_id: int) -> None:
        """Zeroize the value; metadata stays behind for the audit trail."""
        record = self.records.get(key_id)
        if record is None or record.destroyed:
            raise KeyNotFound(f"key id {key_id} absent or destroyed")
        record.value = bytes(len(record.value))
        record.destroyed = True

    def get(self, key_id: int) -> KeyRecord | None:
        return self.records.get(key_id)

    def oldest_live(self, types) -> KeyRecord | None:
        """Lowest key id among live records of the given types."""
        candidates = [
            r for r in self.records.values() if not r.destroyed and r.key_type in types
        ]
        return min(candidates, key=lambda r: r.key_id) if candidates else None

    def state_digest(self) -> bytes:
        """Canonical digest of all records, for rejection side-effect checks."""
        parts = []
        for key_id in sorted(self.records):
            r = self.records[key_id]
            parts.append(
                key_id.to_bytes(8, "big")
                + r.key_type.value.encode()
                + bytes([r.destroyed, r.destroy_on_read])
                + r.created_at.to_bytes(8, "big")
                + len(r.value).to_bytes(2, "big")
                + r.value
            )
        return keccak_digest(b"".join(parts))


class TaintSet:
    """Byte patterns of every key value ever produced inside the enclave.

    Patterns shorter than 16 bytes are ignored to avoid false positives; all
    real key material is at least 128 bits.
    """

    MIN_LENGTH = 16

    def __init__(self):
        self._values: set = set()

    def add(self, value: bytes) -> None:
        if len(value) >= self.MIN_LENGTH:
            self._values.add(bytes(value))

    def check(self, data: bytes, context: str) -> None:
        for value in self._values:
            if value in data:
                raise IsolationViolation(f"live key material reached {context}")

    def patterns(self) -> frozenset:
        return frozenset(self._values)

    def __len__(self) -> int:
        return len(self._values)


class SharedMemory:
    """Processor-region memory: slot-addressed, every write is taint-checked."""

    region = MemoryRegion.PROCESSOR

    def __init__(self, taint: TaintSet):
        self._slots: dict = {}
        self._taint = taint

    def write(self, addr: int, data: bytes) -> None:
        self._taint.check(data, f"processor memory at {addr:#x}")
        self._slots[addr] = bytes(data)

    def read(self, addr: int) -> bytes:
        return self._slots.get(addr, b"")

    def scan(self) -> None:
        """Re-check every resident slot against the current taint set."""
        for addr, data in self._slots.items():
            self._taint.check(data, f"processor memory at {addr:#x}")

    def slots(self) -> dict:
        return dict(self._slots)


@dataclass
class TimerState:
    """Monotonic simulated clock; picosecond resolution keeps 67.2 ns exact."""

    now_ps: int = 0

    def charge(self, ps: int) -> None:
        if ps < 0:
            raise ValueError("latency charge must be non-negative")
        self.now_ps += ps

    @property
    def now_ns(self) -> int:
        return self.now_ps // 1000


@dataclass
class ReadDelivery:
    """Key material sitting in the buffer after a granted read."""

    value: bytes
    key_type: KeyType
    dest: DestPort


@dataclass
class BufferState:
    """Gateway register file: payload plus the block fields of one pending
    transaction (timestamp, pre-hash, operation, status, IDs, signature)."""

    data: bytes = b""
    op: TxOp | None = None
    index: int = 0
    timestamp: int = 0
    pre_hash: bytes = ZERO_DIGEST
    status: int = 0
    source: int = 0
    dest: int = 0
    key_id: int = 0
    data_commitment: bytes = ZERO_DIGEST
    signature: bytes | None = None
    sig_digest: bytes | None = None
    pending_key_type: KeyType | None = None
    composed: bool = False
    read_delivery: ReadDelivery | None = None

    def load_data(self, data: bytes, key_type: KeyType | None = None) -> None:
        """Stage a payload; any previously composed transaction is dropped.
        Typed payloads are staged for writing, so the operation defaults to
        WRITE until a block generation overrides it."""
        if len(data) not in BUFFER_DATA_SIZES:
            raise ValueError(f"buffer payload of {len(data)} bytes not supported")
        self.data = bytes(data)
        self.pending_key_type = key_type
        if key_type is not None:
            self.op = TxOp.WRITE
        self.composed = False
        self.signature = None
        self.sig_digest = None
        self.read_delivery = None

    @property
    def has_data(self) -> bool:
        return bool(self.data)

    def clear(self) -> None:
        self.data = b""
        self.op = None
        self.index = 0
        self.timestamp = 0
        self.pre_hash = ZERO_DIGEST
        self.status = 0
        self.source = 0
        self.dest = 0
        self.key_id = 0
        self.data_commitment = ZERO_DIGEST
        self.signature = None
        self.sig_digest = None
        self.pending_key_type = None
        self.composed = False
        self.read_delivery = None


@dataclass
class RngCore:
    drbg: DrbgState
    enabled: bool = False
    done: bool = False
    last_output: bytes | None = None

    def reseed(self, material: bytes) -> None:
        self.drbg.reseed(material)
        self.done = False
        self.last_output = None

    def generate(self) -> bytes:
        if not self.enabled:
            raise CoreNotEnabled("RNG enable bit not set")
        self.last_output = drbg_next_384(self.drbg)
        self.done = True
        return self.last_output


# Session schedule layout: the 512-bit derivation block splits into four
# 128-bit keys, client-write and server-write for the cipher plus the two
# MAC keys for the hash side.
SESSION_KEY_TYPES = (
    KeyType.ENCRYPTION,
    KeyType.ENCRYPTION,
    KeyType.CLIENT_MAC,
    KeyType.SERVER_MAC,
)


@dataclass
class HashCore:
    enabled: bool = False
    done: bool = False
    staged_input: bytes | None = None
    output: bytes | None = None
    key_register: bytes | None = None
    randoms: bytes | None = None
    derived_queue: deque = field(default_factory=deque)

    def stage(self, data: bytes) -> None:
        self.staged_input = bytes(data)
        self.done = False

    def run(self) -> bytes:
        if not self.enabled:
            raise CoreNotEnabled("Hash enable bit not set")
        if self.staged_input is None:
            raise NoInputStaged("no input staged at the hash port")
        self.output = keccak_digest(self.staged_input)
        self.done = True
        return self.output

    def derive_schedule(self, pre_master: bytes) -> None:
        """Produce the master secret and the four session keys from the
        pre-master plus the staged handshake randoms.

        The expansion is labelled: a bare keccak(master) would equal the
        public data commitment of the master's own write transaction and
        leak every session key into the persisted chain.
        """
        if self.randoms is None:
            raise PreconditionViolated("handshake randoms not staged at hash core")
        master = keccak_digest(pre_master + self.randoms)
        session_block = keccak_digest(b"key expansion" + master)
        self.derived_queue.clear()
        self.derived_queue.append((KeyType.MASTER, master))
        for i, key_type in enumerate(SESSION_KEY_TYPES):
            self.derived_queue.append((key_type, session_block[16 * i:16 * i + 16]))
        self.done = True


@dataclass
class AesCore:
    enabled: bool = False
    key_register: bytes | None = None

    def encrypt(self, plaintext: bytes) -> bytes:
        from .crypto import aes_encrypt

        if not self.enabled:
            raise CoreNotEnabled("Enc enable bit not set")
        if self.key_register is None:
            raise PreconditionViolated("no encryption key delivered to the AES core")
        return aes_encrypt(self.key_register, plaintext)


@dataclass
class PubEnCore:
    enabled: bool = False
    external_key: tuple | None = None  # (modulus, exponent) loaded by the host
    input_digest: bytes | None = None
    output: bytes | None = None
