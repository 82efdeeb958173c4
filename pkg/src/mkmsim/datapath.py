"""Control word codec, the 21-instruction set, and the simulator that
executes them.

Control word layout (16 bits): [15:12] source address, [11:8] destination
address, [7] block-generation trigger, [6] interconnect enable, [5:0] core
enables in the order RSA, RNG, Hash, Enc, MKM, Buff. The table values are
reproduced bit-exactly; where a value omits an enable that its routed path
needs (instructions 2, 3 and 17), the executor force-enables the core and
logs a divergence warning instead of failing.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from .cores import (
    DEFAULT_DESTROY_ON_READ,
    IDENTITIES,
    SOURCE_IDENTITY,
    AesCore,
    BufferState,
    DestPort,
    HashCore,
    KeyRecord,
    KeyType,
    MkmState,
    PubEnCore,
    ReadDelivery,
    RngCore,
    SharedMemory,
    SourcePort,
    SystemStatus,
    TaintSet,
    TimerState,
    TxOp,
)
from .crypto import (
    DrbgState,
    RsaKeyPair,
    derive_seed,
    keccak_digest,
    rsa_encrypt_raw,
    rsa_keygen,
    rsa_sign,
)
from .errors import (
    CbiDisabled,
    EmptyPlaintext,
    ExpectationMismatch,
    InvalidDestination,
    InvalidSource,
    KeyNotFound,
    PreconditionViolated,
    SimError,
    SourceNotReady,
)
from .latency import LatencyModel, latency_of
from .ledger import (
    AuditEvent,
    Chain,
    CommitResult,
    IpRegistry,
    block_from_buffer,
    block_preimage,
    compose_block,
    verify_and_commit,
)

ENABLE_RSA = 1 << 5
ENABLE_RNG = 1 << 4
ENABLE_HASH = 1 << 3
ENABLE_ENC = 1 << 2
ENABLE_MKM = 1 << 1
ENABLE_BUFF = 1 << 0

_ENABLE_NAMES = {
    ENABLE_RSA: "rsa",
    ENABLE_RNG: "rng",
    ENABLE_HASH: "hash",
    ENABLE_ENC: "enc",
    ENABLE_MKM: "mkm",
    ENABLE_BUFF: "buff",
}


@dataclass(frozen=True)
class ControlWord:
    source: SourcePort
    dest: DestPort
    block_gen: bool
    cbi_enable: bool
    enables: int  # low six bits

    def enabled(self, bit: int) -> bool:
        return bool(self.enables & bit)


def decode_cwr(word: int, mask: int = 0xFFFF) -> ControlWord:
    """Extract the control word fields; ``mask`` zeroes don't-care bits."""
    if not 0 <= word <= 0xFFFF:
        raise ValueError("control word must fit in 16 bits")
    word &= mask
    source = word >> 12 & 0xF
    dest = word >> 8 & 0xF
    if source > max(SourcePort):
        raise InvalidSource(f"source address {source:#x} has no core")
    if dest > max(DestPort):
        raise InvalidDestination(f"destination address {dest:#x} has no core")
    return ControlWord(
        source=SourcePort(source),
        dest=DestPort(dest),
        block_gen=bool(word >> 7 & 1),
        cbi_enable=bool(word >> 6 & 1),
        enables=word & 0x3F,
    )


def encode_cwr(cw: ControlWord) -> int:
    """Bit-exact inverse of :func:`decode_cwr`."""
    return (
        (int(cw.source) << 12)
        | (int(cw.dest) << 8)
        | (int(cw.block_gen) << 7)
        | (int(cw.cbi_enable) << 6)
        | (cw.enables & 0x3F)
    )


@dataclass(frozen=True)
class InstructionInfo:
    opcode: int
    name: str
    flow: str
    cwr: int | None
    bus: str  # "axi", "dma" or "custom"
    cwr_mask: int = 0xFFFF
    required_enables: int = 0
    needs_cbi: bool = False


INSTRUCTIONS = {
    info.opcode: info
    for info in (
        InstructionInfo(1, "reseed-rng", "PE->RNG", 0x0010, "axi",
                        required_enables=ENABLE_RNG),
        InstructionInfo(2, "generate-random", "RNG->Buff", 0x0050, "custom",
                        required_enables=ENABLE_RNG | ENABLE_BUFF, needs_cbi=True),
        InstructionInfo(3, "write-block-rng", "->Buff", 0x0091, "custom",
                        required_enables=ENABLE_RNG | ENABLE_BUFF, needs_cbi=True),
        InstructionInfo(4, "load-peer-pubkey", "PE->RSA", 0x0020, "axi",
                        required_enables=ENABLE_RSA),
        InstructionInfo(5, "export-wrapped-random", "RSA->PE", None, "axi"),
        InstructionInfo(6, "stage-handshake-randoms", "PE->Hash", None, "axi"),
        InstructionInfo(7, "read-block-hash", "->Buff", 0x11C1, "custom",
                        required_enables=ENABLE_BUFF, needs_cbi=True),
        InstructionInfo(8, "deliver-hash-key", "Buff->Hash", 0x1149, "custom",
                        required_enables=ENABLE_BUFF | ENABLE_HASH, needs_cbi=True),
        InstructionInfo(9, "emit-derived-key", "Hash->Buff", 0x2049, "custom",
                        required_enables=ENABLE_HASH | ENABLE_BUFF, needs_cbi=True),
        InstructionInfo(10, "write-block-hash", "Hash->Buff", 0x20C9, "custom",
                        required_enables=ENABLE_HASH | ENABLE_BUFF, needs_cbi=True),
        InstructionInfo(11, "read-block-enc", "->Buff", 0x12C1, "custom",
                        required_enables=ENABLE_BUFF, needs_cbi=True),
        # The published value 0x1245 sets the interconnect enable, so the key
        # delivery stays on the custom path and never crosses the DMA.
        InstructionInfo(12, "deliver-en-key", "Buff->En", 0x1245, "custom",
                        required_enables=ENABLE_BUFF | ENABLE_ENC, needs_cbi=True),
        InstructionInfo(13, "encrypt-shared", "SM->SM", None, "dma"),
        InstructionInfo(14, "read-block-mac", "->Buff", 0x11C1, "custom",
                        required_enables=ENABLE_BUFF, needs_cbi=True),
        InstructionInfo(15, "deliver-mac-key", "Buff->Hash", 0x1149, "custom",
                        required_enables=ENABLE_BUFF | ENABLE_HASH, needs_cbi=True),
        InstructionInfo(16, "digest-shared", "SM->SM", None, "dma"),
        InstructionInfo(17, "hash-pending-block", "Buff->HashIn", 0x1341, "custom",
                        required_enables=ENABLE_BUFF | ENABLE_HASH, needs_cbi=True),
        InstructionInfo(18, "stage-signature-digest", "Hash->Buff", 0x2049, "custom",
                        required_enables=ENABLE_HASH | ENABLE_BUFF, needs_cbi=True),
        InstructionInfo(19, "load-signer-input", "Buff->PubEnIn", 0x1461, "custom",
                        required_enables=ENABLE_BUFF | ENABLE_RSA, needs_cbi=True),
        InstructionInfo(20, "sign-pending-block", "PubEn->Buff", 0x3061, "custom",
                        required_enables=ENABLE_RSA | ENABLE_BUFF, needs_cbi=True),
        InstructionInfo(21, "verify-and-commit", "Buff->MKM", 0x1003, "custom",
                        cwr_mask=0xF00F, required_enables=ENABLE_BUFF | ENABLE_MKM),
    )
}


@dataclass(frozen=True)
class Instruction:
    opcode: int
    operand: bytes | int | None = None

    def __post_init__(self):
        if self.opcode not in INSTRUCTIONS:
            raise ValueError(f"opcode {self.opcode} not defined")


@dataclass(frozen=True)
class TransferRecord:
    kind: str  # "custom" (through the interconnect) or "processor" (PE/DMA)
    source: object
    dest: object
    size: int


def cbi_route(cw: ControlWord, *, source_ready: bool = True, size: int = 0,
              dest=None) -> TransferRecord:
    """Gate one interconnect transfer and describe it for the trace.

    The crossbar moves data only when the interconnect enable (or the
    block-generation trigger) is set and the addressed source port reports
    data ready.
    """
    if not (cw.cbi_enable or cw.block_gen):
        raise CbiDisabled("interconnect transfer attempted while disabled")
    if not source_ready:
        raise SourceNotReady(f"source port {cw.source.name} has no data ready")
    return TransferRecord("custom", cw.source, dest if dest is not None else cw.dest, size)


class Outcome(Enum):
    OK = "ok"
    REJECTED = "rejected"
    ERROR = "error"


@dataclass(frozen=True)
class Expect:
    kind: Outcome = Outcome.OK
    error_kind: str | None = None

    def matches(self, result: StepResult) -> bool:
        if result.outcome != self.kind:
            return False
        if self.kind is Outcome.ERROR and self.error_kind:
            return result.detail is not None and result.detail.startswith(self.error_kind)
        return True


EXPECT_OK = Expect()
EXPECT_REJECTED = Expect(Outcome.REJECTED)


@dataclass
class StepResult:
    step: int
    opcode: int
    name: str
    outcome: Outcome
    detail: str | None
    latency_ps: int
    status_word: int
    transfers: tuple
    warnings: tuple


# Shared-memory slot addresses used by the processor-path instructions.
PLAINTEXT_ADDR = 0x1000
CIPHERTEXT_ADDR = 0x2000
DIGEST_ADDR = 0x3000
WRAPPED_RANDOM_ADDR = 0x4000
CHAIN_DUMP_ADDR = 0x5000

_DEFAULT_PLAINTEXT = b"shared-memory payload for the crypto cores under test"

# Default target types when a read-request instruction names no key id.
_READ_DEFAULTS = {
    7: ((KeyType.PRE_MASTER,),),
    11: ((KeyType.ENCRYPTION,),),
    14: ((KeyType.CLIENT_MAC,), (KeyType.SERVER_MAC,)),
}


def genesis_drbg(seed: int) -> DrbgState:
    return DrbgState(derive_seed(b"mkmsim-root:" + seed.to_bytes(8, "big")))


@lru_cache(maxsize=None)
def _genesis_keypairs(seed: int) -> tuple:
    root = genesis_drbg(seed)
    return tuple((name, rsa_keygen(root, name)) for name in IDENTITIES)


def genesis_keypairs(seed: int) -> dict:
    """Keypairs of the five registered identities, fixed order, reproducible
    from the seed alone (offline key provisioning). Cached per seed; keypairs
    are immutable."""
    return dict(_genesis_keypairs(seed))


class Simulator:
    """Whole-machine aggregate advanced one instruction at a time."""

    def __init__(
        self,
        seed: int = 0,
        *,
        destroy_policy: dict | None = None,
        sig_data_only: bool = False,
        latency: LatencyModel | None = None,
    ):
        self.seed = seed
        # the root stream is only ever forked, so its counter state is
        # irrelevant and the cached genesis keys stay reproducible
        self.root_drbg = genesis_drbg(seed)
        self.keypairs = genesis_keypairs(seed)
        self.registry = IpRegistry.from_keypairs(self.keypairs)

        self.taint = TaintSet()
        self.shared_memory = SharedMemory(self.taint)
        self.timer = TimerState()
        self.chain = Chain()
        self.mkm = MkmState()
        self.buffer = BufferState()
        self.rng = RngCore(self.root_drbg.fork(b"rng-stream"))
        self.hash_core = HashCore()
        self.aes = AesCore()
        self.puben = PubEnCore()

        self.enables = 0
        self.buff_rd = False
        self.audit_events: list = []
        self.grants: list = []
        self.trace: list = []
        self.latency = latency or LatencyModel()
        self.policy = dict(DEFAULT_DESTROY_ON_READ)
        if destroy_policy:
            self.policy.update(destroy_policy)
        self.sig_data_only = sig_data_only
        self.sign_override: RsaKeyPair | None = None
        self._next_key_id = 1
        self._peer_keypair: RsaKeyPair | None = None
        self._rogue_cache: dict = {}

    # deterministic auxiliary identities -----------------------------------

    @property
    def peer_keypair(self) -> RsaKeyPair:
        """Keypair standing in for the remote endpoint of the handshake."""
        if self._peer_keypair is None:
            self._peer_keypair = rsa_keygen(self.root_drbg.fork(b"peer"), "peer")
        return self._peer_keypair

    def rogue_keypair(self, index: int = 0) -> RsaKeyPair:
        """Unregistered keypair for spoofing experiments."""
        if index not in self._rogue_cache:
            label = b"rogue:" + index.to_bytes(4, "big")
            self._rogue_cache[index] = rsa_keygen(self.root_drbg.fork(label), "rogue")
        return self._rogue_cache[index]

    def default_randoms(self) -> bytes:
        seed8 = self.seed.to_bytes(8, "big")
        return (
            keccak_digest(b"client-random:" + seed8)[:32]
            + keccak_digest(b"server-random:" + seed8)[:32]
        )

    # status ----------------------------------------------------------------

    def status(self) -> SystemStatus:
        return SystemStatus(
            enables=self.enables,
            rng_done=self.rng.done,
            buff_rd=self.buff_rd,
            hash_done=self.hash_core.done,
            buff_rdy=self.buffer.has_data,
            hash_key_rdy=self.hash_core.key_register is not None,
            en_key_rdy=self.aes.key_register is not None,
        )

    def status_word(self) -> int:
        return self.status().word()

    def ledger_state_digest(self) -> bytes:
        """Digest of (chain, MKM) for rejection side-effect checks."""
        return keccak_digest(
            self.chain.head_hash
            + len(self.chain).to_bytes(8, "big")
            + self.mkm.state_digest()
        )

    # execution -------------------------------------------------------------

    def execute(self, instr: Instruction) -> StepResult:
        info = INSTRUCTIONS[instr.opcode]
        warnings: list = []
        transfers: list = []
        cw = None
        if info.cwr is not None:
            cw = decode_cwr(info.cwr, mask=info.cwr_mask)
            self.enables = cw.enables
            effective = cw.enables
            missing = info.required_enables & ~cw.enables
            if missing:
                names = ",".join(n for bit, n in _ENABLE_NAMES.items() if missing & bit)
                warnings.append(
                    f"CWR/route enable divergence: instr {info.opcode} "
                    f"({info.cwr:#06x}) missing {names} enable"
                )
                effective |= missing
            if info.needs_cbi and not cw.cbi_enable:
                if cw.block_gen:
                    warnings.append(
                        f"CWR/route enable divergence: instr {info.opcode} "
                        f"({info.cwr:#06x}) missing cbi enable (block-gen trigger active)"
                    )
                else:
                    raise CbiDisabled(f"instr {info.opcode} routed with interconnect disabled")
            self._apply_enables(effective)

        outcome = Outcome.OK
        detail = None
        try:
            handler = getattr(self, f"_op_{instr.opcode}")
            result = handler(instr, cw, transfers)
            if isinstance(result, CommitResult) and not result.granted:
                outcome = Outcome.REJECTED
                detail = result.reason
        except SimError as exc:
            outcome = Outcome.ERROR
            detail = f"{type(exc).__name__}: {exc}"

        charge = latency_of(instr.opcode, self.latency) if outcome is not Outcome.ERROR else 0
        self.timer.charge(charge)
        for message in warnings:
            self.audit_events.append(
                AuditEvent(self.timer.now_ns, "warning", message, int(cw.source) if cw else 0)
            )
        self.shared_memory.scan()

        step = StepResult(
            step=len(self.trace),
            opcode=instr.opcode,
            name=info.name,
            outcome=outcome,
            detail=detail,
            latency_ps=charge,
            status_word=self.status_word(),
            transfers=tuple(transfers),
            warnings=tuple(warnings),
        )
        self.trace.append(step)
        return step

    def run_program(self, instructions, expectations=None) -> list:
        """Execute in order, aborting when a step diverges from its expectation
        (plain OK unless stated otherwise)."""
        results = []
        for i, instr in enumerate(instructions):
            expected = expectations[i] if expectations else EXPECT_OK
            result = self.execute(instr)
            results.append(result)
            if not expected.matches(result):
                raise ExpectationMismatch(
                    f"step {i} (instr {instr.opcode} {result.name}): expected "
                    f"{expected.kind.value}, got {result.outcome.value}"
                    + (f" [{result.detail}]" if result.detail else "")
                )
        return results

    # helpers ----------------------------------------------------------------

    def _apply_enables(self, effective: int) -> None:
        self.rng.enabled = bool(effective & ENABLE_RNG)
        self.hash_core.enabled = bool(effective & ENABLE_HASH)
        self.aes.enabled = bool(effective & ENABLE_ENC)
        self.puben.enabled = bool(effective & ENABLE_RSA)

    def _alloc_key_id(self) -> int:
        key_id = self._next_key_id
        self._next_key_id += 1
        return key_id

    def _custom(self, transfers, cw: ControlWord, size: int, dest=None,
                source_ready: bool = True) -> None:
        transfers.append(cbi_route(cw, source_ready=source_ready, size=size, dest=dest))

    def _processor(self, transfers, source, dest, payload: bytes) -> None:
        self.taint.check(payload, f"processor-path transfer {source}->{dest}")
        transfers.append(TransferRecord("processor", source, dest, len(payload)))

    def _operand_bytes(self, instr: Instruction, default: bytes) -> bytes:
        if instr.operand is None:
            return default
        if isinstance(instr.operand, int):
            raise PreconditionViolated(f"instr {instr.opcode} expects a byte operand")
        return instr.operand

    def _resolve_key_id(self, instr: Instruction) -> int:
        if instr.operand is not None:
            if not isinstance(instr.operand, int):
                raise PreconditionViolated(f"instr {instr.opcode} expects a key-id operand")
            return instr.operand
        for types in _READ_DEFAULTS[instr.opcode]:
            record = self.mkm.oldest_live(types)
            if record is not None:
                return record.key_id
        wanted = "/".join(t.value for group in _READ_DEFAULTS[instr.opcode] for t in group)
        raise KeyNotFound(f"no live {wanted} key available to request")

    def _compose(self, cw: ControlWord, op: TxOp, key_id: int) -> None:
        compose_block(
            self.buffer,
            self.chain,
            op=op,
            source=int(cw.source),
            dest=int(cw.dest),
            key_id=key_id,
            timestamp=self.timer.now_ns,
            status=self.status_word(),
        )

    def _require_delivery(self, port: DestPort):
        delivery = self.buffer.read_delivery
        if delivery is None or delivery.dest != port:
            raise PreconditionViolated(f"no granted key delivery pending for {port.name}")
        return delivery

    # instruction handlers ----------------------------------------------------

    def _op_1(self, instr, cw, transfers):
        material = self._operand_bytes(instr, b"rng-seed:" + self.seed.to_bytes(8, "big"))
        self._processor(transfers, "pe", "rng", material)
        self.rng.reseed(material)

    def _op_2(self, instr, cw, transfers):
        value = self.rng.generate()
        self.taint.add(value)
        self.buffer.load_data(value, key_type=KeyType.PRE_MASTER)
        self.buff_rd = False
        self._custom(transfers, cw, len(value), source_ready=self.rng.done)

    def _op_3(self, instr, cw, transfers):
        self._compose(cw, TxOp.WRITE, self._alloc_key_id())
        self._custom(transfers, cw, len(self.buffer.data))

    def _op_4(self, instr, cw, transfers):
        if instr.operand is None:
            modulus, exponent = self.peer_keypair.public
        elif isinstance(instr.operand, bytes) and len(instr.operand) == 128:
            modulus, exponent = int.from_bytes(instr.operand, "big"), 65537
        else:
            raise PreconditionViolated("instr 4 operand must be a 128-byte modulus")
        self.puben.external_key = (modulus, exponent)
        self._processor(transfers, "pe", "rsa", modulus.to_bytes(128, "big"))

    def _op_5(self, instr, cw, transfers):
        if self.puben.external_key is None:
            raise PreconditionViolated("no peer public key loaded into the RSA core")
        if not self.rng.done or self.rng.last_output is None:
            raise PreconditionViolated("no random value generated to wrap")
        wrapped = rsa_encrypt_raw(self.rng.last_output, *self.puben.external_key)
        self.puben.output = wrapped
        self.shared_memory.write(WRAPPED_RANDOM_ADDR, wrapped)
        self._processor(transfers, "rsa", "pe", wrapped)

    def _op_6(self, instr, cw, transfers):
        randoms = self._operand_bytes(instr, self.default_randoms())
        if len(randoms) != 64:
            raise PreconditionViolated("handshake randoms must be 64 bytes (32 + 32)")
        self.hash_core.randoms = randoms
        self._processor(transfers, "pe", "hash", randoms)

    def _op_7(self, instr, cw, transfers):
        self._compose(cw, TxOp.READ, self._resolve_key_id(instr))
        self._custom(transfers, cw, 0)

    def _op_8(self, instr, cw, transfers):
        delivery = self._require_delivery(DestPort.HASH_KEY)
        self.hash_core.key_register = delivery.value
        value, key_type = delivery.value, delivery.key_type
        self.buffer.clear()
        self.buff_rd = True
        self._custom(transfers, cw, len(value))
        if key_type == KeyType.PRE_MASTER:
            self.hash_core.derive_schedule(value)
            for _, derived in self.hash_core.derived_queue:
                self.taint.add(derived)

    def _op_9(self, instr, cw, transfers):
        if not self.hash_core.derived_queue:
            raise PreconditionViolated("no derived keys queued in the hash core")
        key_type, value = self.hash_core.derived_queue.popleft()
        self.buffer.load_data(value, key_type=key_type)
        self.buff_rd = False
        self._custom(transfers, cw, len(value))

    def _op_10(self, instr, cw, transfers):
        if self.buffer.pending_key_type is None:
            raise PreconditionViolated("no typed key staged for writing")
        self._compose(cw, TxOp.WRITE, self._alloc_key_id())
        self._custom(transfers, cw, len(self.buffer.data))

    def _op_11(self, instr, cw, transfers):
        self._compose(cw, TxOp.READ, self._resolve_key_id(instr))
        self._custom(transfers, cw, 0)

    def _op_12(self, instr, cw, transfers):
        delivery = self._require_delivery(DestPort.EN_KEY)
        self.aes.key_register = delivery.value
        size = len(delivery.value)
        self.buffer.clear()
        self.buff_rd = True
        self._custom(transfers, cw, size)

    def _op_13(self, instr, cw, transfers):
        plaintext = self._operand_bytes(instr, _DEFAULT_PLAINTEXT)
        if not plaintext:
            raise EmptyPlaintext("instr 13 needs a non-empty plaintext")
        self.shared_memory.write(PLAINTEXT_ADDR, plaintext)
        ciphertext = self.aes.encrypt(plaintext)
        self.shared_memory.write(CIPHERTEXT_ADDR, ciphertext)
        self._processor(transfers, "sm", "sm", ciphertext)

    _op_14 = _op_7
    _op_15 = _op_8

    def _op_16(self, instr, cw, transfers):
        plaintext = self._operand_bytes(instr, _DEFAULT_PLAINTEXT)
        self.shared_memory.write(PLAINTEXT_ADDR, plaintext)
        self.hash_core.stage(plaintext)
        digest = self.hash_core.run()
        self.shared_memory.write(DIGEST_ADDR, digest)
        self._processor(transfers, "sm", "sm", digest)

    def _op_17(self, instr, cw, transfers):
        if not self.buffer.composed:
            raise PreconditionViolated("no transaction composed in the buffer")
        if self.sig_data_only:
            preimage = self.buffer.data
        else:
            preimage = block_preimage(block_from_buffer(self.buffer))
        self.hash_core.stage(preimage)
        self.hash_core.run()
        self.buff_rd = True
        self._custom(transfers, cw, len(preimage))

    def _op_18(self, instr, cw, transfers):
        if not self.buffer.composed or self.hash_core.output is None:
            raise PreconditionViolated("signature digest not computed")
        self.buffer.sig_digest = self.hash_core.output
        self._custom(transfers, cw, len(self.hash_core.output))

    def _op_19(self, instr, cw, transfers):
        if self.buffer.sig_digest is None:
            raise PreconditionViolated("no signature digest staged in the buffer")
        self.puben.input_digest = self.buffer.sig_digest
        self.buff_rd = True
        self._custom(transfers, cw, len(self.buffer.sig_digest))

    def _op_20(self, instr, cw, transfers):
        if self.puben.input_digest is None or not self.buffer.composed:
            raise PreconditionViolated("nothing loaded into the signer")
        signer = self.sign_override
        if signer is None:
            identity = SOURCE_IDENTITY[SourcePort(self.buffer.source)]
            signer = self.keypairs[identity]
        signature = rsa_sign(self.puben.input_digest, signer)
        self.puben.output = signature
        self.buffer.signature = signature
        self._custom(transfers, cw, len(signature))

    def _op_21(self, instr, cw, transfers):
        if not self.buffer.composed or self.buffer.signature is None:
            raise PreconditionViolated("no signed transaction pending")
        block = block_from_buffer(self.buffer)
        write_record = None
        if block.op == TxOp.WRITE:
            write_record = KeyRecord(
                key_id=block.key_id,
                key_type=self.buffer.pending_key_type,
                value=self.buffer.data,
                created_at=block.timestamp,
                destroy_on_read=self.policy[self.buffer.pending_key_type],
            )
        result = verify_and_commit(
            self.chain,
            block,
            self.registry,
            self.mkm,
            write_record=write_record,
            data_only=self.sig_data_only,
            data=self.buffer.data,
            now_ns=self.timer.now_ns,
        )
        # the commit path is gated by the signature checker, not the crossbar
        # enable; the word's gate bits are don't-cares under the 0xF00F mask
        transfers.append(TransferRecord("custom", cw.source, "mkm", len(self.buffer.data)))
        if result.granted:
            self.grants.append(result.grant)
            self.buffer.clear()
            if result.delivered is not None:
                value, key_type = result.delivered
                self.buffer.load_data(value, key_type=key_type)
                self.buffer.read_delivery = ReadDelivery(
                    value, key_type, DestPort(result.block.dest)
                )
                self.buff_rd = False
        else:
            self.audit_events.append(result.event)
            self.buffer.clear()
        return result
