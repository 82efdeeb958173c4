"""Hash-linked audit ledger and the signature-checker grant protocol.

Every key transaction becomes one fixed-width block: commitment to the buffer
payload, timestamp, status snapshot, source/destination IDs, the digest of the
previous block, and an RSA signature by the requesting core. Blocks are
append-only; a failed check never touches the chain or the key memory and is
recorded as an audit event instead.

Wire format (big-endian): magic ``BCKM``, version u16 = 1, block count u32,
then 288 bytes per block: index u64, timestamp u64, op u8, source u8, dest u8,
reserved u8 = 0, status u32, key_id u64, data commitment (64), previous-block
digest (64), signature (128). A block's signature preimage is its own record
with the signature field zeroed; the link digest covers the full record.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

from .cores import (
    DEST_OWNER,
    PORT_READABLE_TYPES,
    SOURCE_IDENTITY,
    ZERO_DIGEST,
    BufferState,
    DestPort,
    GrantToken,
    KeyRecord,
    MkmState,
    SourcePort,
    TxOp,
)
from .crypto import RsaKeyPair, keccak_digest, rsa_sign, rsa_verify
from .errors import (
    EmptyBuffer,
    InvalidSource,
    MalformedDump,
    MalformedSignature,
    SignerMismatch,
    UnknownKeyId,
)

MAGIC = b"BCKM"
VERSION = 1
HEADER = struct.Struct(">4sHI")
BLOCK_HEAD = struct.Struct(">QQBBBBIQ")  # index, ts, op, src, dst, rsv, status, key_id
BLOCK_RECORD_SIZE = BLOCK_HEAD.size + 64 + 64 + 128
ZERO_SIGNATURE = bytes(128)


@dataclass(frozen=True)
class Block:
    index: int
    timestamp: int
    op: TxOp
    source: int
    dest: int
    status: int
    key_id: int
    data_commitment: bytes
    pre_hash: bytes
    signature: bytes

    def __post_init__(self):
        if len(self.data_commitment) != 64 or len(self.pre_hash) != 64:
            raise ValueError("digest fields must be 64 bytes")
        if len(self.signature) != 128:
            raise ValueError("signature field must be 128 bytes")


def serialize_block(block: Block) -> bytes:
    head = BLOCK_HEAD.pack(
        block.index,
        block.timestamp,
        int(block.op),
        block.source,
        block.dest,
        0,
        block.status,
        block.key_id,
    )
    return head + block.data_commitment + block.pre_hash + block.signature


def block_preimage(block: Block) -> bytes:
    """Serialization with the signature zeroed; this is what gets signed."""
    return serialize_block(replace(block, signature=ZERO_SIGNATURE))


def parse_block(raw: bytes) -> Block:
    if len(raw) != BLOCK_RECORD_SIZE:
        raise MalformedDump(f"block record must be {BLOCK_RECORD_SIZE} bytes")
    index, ts, op, source, dest, reserved, status, key_id = BLOCK_HEAD.unpack(
        raw[: BLOCK_HEAD.size]
    )
    if reserved != 0:
        raise MalformedDump("reserved byte must be zero")
    try:
        op = TxOp(op)
    except ValueError as exc:
        raise MalformedDump(f"unknown operation byte {op:#x}") from exc
    body = raw[BLOCK_HEAD.size:]
    return Block(
        index,
        ts,
        op,
        source,
        dest,
        status,
        key_id,
        body[:64],
        body[64:128],
        body[128:],
    )


def genesis_block() -> Block:
    return Block(0, 0, TxOp.GENESIS, 0, 0, 0, 0, ZERO_DIGEST, ZERO_DIGEST, ZERO_SIGNATURE)


class Chain:
    """Append-only block sequence plus the digest of its head."""

    def __init__(self, blocks=None):
        self.blocks: list = list(blocks) if blocks else [genesis_block()]
        self.head_hash = keccak_digest(serialize_block(self.blocks[-1]))

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def append(self, block: Block) -> None:
        self.blocks.append(block)
        self.head_hash = keccak_digest(serialize_block(block))


@dataclass(frozen=True)
class IpRegistry:
    """Public keys of the registered cores, fixed at genesis and looked up by
    the control word's source nibble."""

    keys: dict  # identity name -> (modulus, public_exponent)

    @classmethod
    def from_keypairs(cls, keypairs: dict) -> IpRegistry:
        return cls({name: kp.public for name, kp in keypairs.items()})

    def for_source(self, source: int) -> tuple:
        try:
            identity = SOURCE_IDENTITY[SourcePort(source)]
        except ValueError as exc:
            raise InvalidSource(f"source id {source} not registered") from exc
        return self.keys[identity]


@dataclass(frozen=True)
class AuditEvent:
    timestamp: int
    kind: str  # "rejected" | "warning"
    reason: str
    source: int

    def __str__(self) -> str:
        return f"[{self.timestamp} ns] {self.kind}: {self.reason} (source {self.source})"


def compose_block(
    buffer: BufferState,
    chain: Chain,
    *,
    op: TxOp,
    source: int,
    dest: int,
    key_id: int,
    timestamp: int,
    status: int,
) -> Block:
    """Fill the buffer's transaction fields and return the unsigned preimage.

    Read requests carry no payload, so their commitment is the digest of the
    empty string; write requests commit to the staged payload.
    """
    if op == TxOp.WRITE and not buffer.has_data:
        raise EmptyBuffer("write transaction composed with no payload staged")
    if op == TxOp.READ:
        buffer.data = b""
        buffer.pending_key_type = None
    buffer.index = len(chain.blocks)
    buffer.op = op
    buffer.source = source
    buffer.dest = dest
    buffer.key_id = key_id
    buffer.timestamp = timestamp
    buffer.status = status
    buffer.pre_hash = chain.head_hash
    buffer.data_commitment = keccak_digest(buffer.data)
    buffer.signature = None
    buffer.sig_digest = None
    buffer.composed = True
    return block_from_buffer(buffer)


def block_from_buffer(buffer: BufferState) -> Block:
    if not buffer.composed or buffer.op is None:
        raise EmptyBuffer("no transaction composed in the buffer")
    return Block(
        index=buffer.index,
        timestamp=buffer.timestamp,
        op=buffer.op,
        source=buffer.source,
        dest=buffer.dest,
        status=buffer.status,
        key_id=buffer.key_id,
        data_commitment=buffer.data_commitment,
        pre_hash=buffer.pre_hash,
        signature=buffer.signature or ZERO_SIGNATURE,
    )


def signing_digest(block: Block, *, data_only: bool = False, data: bytes = b"") -> bytes:
    """Digest the signature covers.

    The default covers the whole preimage record so replays and field tampering
    are detectable. ``data_only`` reproduces the narrower legacy behaviour of
    signing just the payload hash.
    """
    if data_only:
        return keccak_digest(data)
    return keccak_digest(block_preimage(block))


def sign_block(
    preimage: Block,
    signer: RsaKeyPair,
    *,
    data_only: bool = False,
    data: bytes = b"",
) -> Block:
    """One-shot equivalent of the four-step hash/exponentiate pipeline."""
    expected = SOURCE_IDENTITY.get(SourcePort(preimage.source))
    if signer.owner != expected:
        raise SignerMismatch(
            f"block sourced by {expected!r} cannot be signed by {signer.owner!r}"
        )
    digest = signing_digest(preimage, data_only=data_only, data=data)
    return replace(preimage, signature=rsa_sign(digest, signer))


@dataclass
class CommitResult:
    granted: bool
    block: Block | None = None
    grant: GrantToken | None = None
    delivered: tuple | None = None  # (value, KeyType) for granted reads
    reason: str | None = None
    event: AuditEvent | None = None


def verify_and_commit(
    chain: Chain,
    block: Block,
    registry: IpRegistry,
    mkm: MkmState,
    *,
    write_record: KeyRecord | None = None,
    data_only: bool = False,
    data: bytes = b"",
    now_ns: int = 0,
) -> CommitResult:
    """Run the signature-checker protocol for one pending transaction.

    On success the block is appended, a single-use grant is issued and the
    MKM operation is performed under it. On any failure the transaction is
    discarded: the chain and the MKM are left untouched and an audit event
    describes the rejection.
    """

    def reject(reason: str) -> CommitResult:
        event = AuditEvent(now_ns, "rejected", reason, block.source)
        return CommitResult(granted=False, reason=reason, event=event)

    # signature first: decrypt with the public key of the requesting core and
    # compare with the freshly computed digest
    try:
        public = registry.for_source(block.source)
    except InvalidSource:
        return reject("UnknownSigner")
    expected_digest = signing_digest(block, data_only=data_only, data=data)
    try:
        recovered = rsa_verify(block.signature, *public)
    except MalformedSignature:
        return reject("SignatureMismatch")
    if recovered != expected_digest:
        return reject("SignatureMismatch")

    if block.pre_hash != chain.head_hash or block.index != len(chain.blocks):
        return reject("ChainMismatch")
    if block.timestamp < chain.head.timestamp:
        return reject("TimestampRegression")
    if not 0 <= block.dest <= max(DestPort):
        return reject("InvalidPort")

    if block.op == TxOp.WRITE:
        if write_record is None:
            return reject("MissingRecord")
        if block.key_id in mkm.records:
            return reject("DuplicateKeyId")
        if keccak_digest(write_record.value) != block.data_commitment:
            return reject("CommitmentMismatch")
    elif block.op == TxOp.READ:
        record = mkm.get(block.key_id)
        if record is None or record.destroyed:
            return reject("KeyNotFound")
        allowed = PORT_READABLE_TYPES.get(DestPort(block.dest), frozenset())
        if record.key_type not in allowed:
            return reject("KeyTypeMismatch")
    else:
        return reject("InvalidOperation")

    committed = block
    chain.append(committed)
    grant = GrantToken(committed.index, committed.op, committed.key_id, DestPort(committed.dest))

    delivered = None
    if committed.op == TxOp.WRITE:
        mkm.write(write_record, grant)
    else:
        record = mkm.get(committed.key_id)
        value = mkm.read(committed.key_id, record.key_type, grant)
        delivered = (value, record.key_type)
    return CommitResult(granted=True, block=committed, grant=grant, delivered=delivered)


@dataclass(frozen=True)
class ChainReport:
    ok: bool
    failed_index: int | None = None
    check: str | None = None
    detail: str | None = None

    def __str__(self) -> str:
        if self.ok:
            return "chain OK"
        return f"block {self.failed_index}: {self.check} failed ({self.detail})"


def verify_chain(chain: Chain, registry: IpRegistry, *, data_only: bool = False) -> ChainReport:
    """Walk the chain checking genesis shape, links, signatures and time order.

    Under the legacy ``data_only`` signing mode the signature covers just the
    payload digest, which equals the stored data commitment, so that is what
    the recovered value is compared against.
    """
    blocks = chain.blocks
    if not blocks:
        return ChainReport(False, 0, "structure", "empty chain")
    g = blocks[0]
    if (
        g.index != 0
        or g.op != TxOp.GENESIS
        or g.timestamp != 0
        or g.source != 0
        or g.dest != 0
        or g.status != 0
        or g.key_id != 0
        or g.pre_hash != ZERO_DIGEST
        or g.data_commitment != ZERO_DIGEST
        or g.signature != ZERO_SIGNATURE
    ):
        return ChainReport(False, 0, "genesis", "genesis block malformed")
    for i in range(1, len(blocks)):
        b = blocks[i]
        if b.index != i:
            return ChainReport(False, i, "index", f"expected {i}, found {b.index}")
        if b.op not in (TxOp.READ, TxOp.WRITE):
            return ChainReport(False, i, "operation", f"op {b.op:#x} not allowed")
        if b.pre_hash != keccak_digest(serialize_block(blocks[i - 1])):
            return ChainReport(False, i, "linkage", "previous-block digest mismatch")
        if b.timestamp < blocks[i - 1].timestamp:
            return ChainReport(False, i, "timestamp", "timestamps must not decrease")
        try:
            public = registry.for_source(b.source)
            recovered = rsa_verify(b.signature, *public)
        except (InvalidSource, MalformedSignature) as exc:
            return ChainReport(False, i, "signature", str(exc))
        expected = b.data_commitment if data_only else keccak_digest(block_preimage(b))
        if recovered != expected:
            return ChainReport(False, i, "signature", "signature does not verify")
    return ChainReport(True)


@dataclass(frozen=True)
class KeyEvent:
    block_index: int
    timestamp: int
    op: TxOp
    source: int
    dest: int

    @property
    def actor(self) -> str:
        """Write events act on behalf of the source core, reads on behalf of
        the core owning the delivery port."""
        try:
            if self.op == TxOp.WRITE:
                return SOURCE_IDENTITY[SourcePort(self.source)]
            return DEST_OWNER[DestPort(self.dest)]
        except ValueError:
            return "unknown"

    def __str__(self) -> str:
        return (
            f"block {self.block_index} @ {self.timestamp} ns: "
            f"{self.op.name} by {self.actor}"
        )


@dataclass(frozen=True)
class KeyTrace:
    key_id: int
    events: tuple

    @property
    def has_write(self) -> bool:
        return any(e.op == TxOp.WRITE for e in self.events)

    @property
    def has_read(self) -> bool:
        return any(e.op == TxOp.READ for e in self.events)

    @property
    def unread(self) -> bool:
        """Written but never read before chain end; candidate non-destruction."""
        return self.has_write and not self.has_read


def audit_key(chain: Chain, key_id: int) -> KeyTrace:
    """Ordered lifecycle trace of one key id across the whole chain."""
    events = tuple(
        KeyEvent(b.index, b.timestamp, b.op, b.source, b.dest)
        for b in chain.blocks
        if b.op != TxOp.GENESIS and b.key_id == key_id
    )
    if not events:
        raise UnknownKeyId(f"key id {key_id} never appears in the chain")
    return KeyTrace(key_id, events)


def persist_chain(chain: Chain) -> bytes:
    """Serialize for processor-visible memory; blocks carry only commitments,
    never raw key bytes, so the dump is safe to expose."""
    out = [HEADER.pack(MAGIC, VERSION, len(chain.blocks))]
    out.extend(serialize_block(b) for b in chain.blocks)
    return b"".join(out)


def load_chain(data: bytes) -> Chain:
    if len(data) < HEADER.size:
        raise MalformedDump("dump shorter than header")
    magic, version, count = HEADER.unpack(data[: HEADER.size])
    if magic != MAGIC:
        raise MalformedDump("bad magic")
    if version != VERSION:
        raise MalformedDump(f"unsupported version {version}")
    expected = HEADER.size + count * BLOCK_RECORD_SIZE
    if len(data) != expected:
        raise MalformedDump(f"dump length {len(data)} does not match {count} blocks")
    if count == 0:
        raise MalformedDump("dump contains no blocks")
    blocks = [
        parse_block(data[HEADER.size + i * BLOCK_RECORD_SIZE:
                         HEADER.size + (i + 1) * BLOCK_RECORD_SIZE])
        for i in range(count)
    ]
    return Chain(blocks)
