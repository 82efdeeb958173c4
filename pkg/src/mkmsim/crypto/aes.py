"""AES-128 block cipher with a counter-mode wrapper for shared-memory payloads.

Counter mode with a zero initial counter keeps ciphertext length equal to
plaintext length and makes encryption its own inverse, so the DMA model can
move arbitrary-length payloads. This is a functional model of the hardware
core, not a hardened implementation.
"""

from __future__ import annotations

from ..errors import EmptyPlaintext

KEY_SIZE = 16
BLOCK_SIZE = 16


def _build_sbox() -> bytes:
    # multiplicative inverse in GF(2^8) followed by the affine transform
    inv = [0] * 256
    p, q = 1, 1
    while True:
        # p runs over generator 3 powers, q over its inverses
        p = p ^ ((p << 1) & 0xFF) ^ (0x1B if p & 0x80 else 0)
        q ^= q << 1
        q ^= q << 2
        q ^= q << 4
        q &= 0xFF
        if q & 0x80:
            q ^= 0x09
        inv[p] = q
        if p == 1:
            break
    inv[0] = 0
    sbox = bytearray(256)
    for i in range(256):
        x = inv[i] if i else 0
        sbox[i] = (x ^ _rotl8(x, 1) ^ _rotl8(x, 2) ^ _rotl8(x, 3) ^ _rotl8(x, 4) ^ 0x63) & 0xFF
    return bytes(sbox)


def _rotl8(x: int, n: int) -> int:
    return ((x << n) | (x >> (8 - n))) & 0xFF


_SBOX = _build_sbox()
_RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


def _xtime(x: int) -> int:
    x <<= 1
    return (x ^ 0x1B) & 0xFF if x & 0x100 else x


def _expand_key(key: bytes) -> list:
    """AES-128 key schedule: 11 round keys of 16 bytes each."""
    words = [key[4 * i:4 * i + 4] for i in range(4)]
    for i in range(4, 44):
        tmp = words[i - 1]
        if i % 4 == 0:
            rotated = tmp[1:] + tmp[:1]
            tmp = bytes(_SBOX[b] for b in rotated)
            tmp = bytes((tmp[0] ^ _RCON[i // 4 - 1],)) + tmp[1:]
        words.append(bytes(a ^ b for a, b in zip(words[i - 4], tmp)))
    return [b"".join(words[4 * r:4 * r + 4]) for r in range(11)]


def encrypt_block(key: bytes, block: bytes) -> bytes:
    """Encrypt one 16-byte block (the raw ECB core)."""
    if len(key) != KEY_SIZE:
        raise ValueError(f"key must be {KEY_SIZE} bytes")
    if len(block) != BLOCK_SIZE:
        raise ValueError(f"block must be {BLOCK_SIZE} bytes")
    round_keys = _expand_key(key)
    state = [b ^ k for b, k in zip(block, round_keys[0])]
    for rnd in range(1, 10):
        state = _round(state, round_keys[rnd], mix=True)
    state = _round(state, round_keys[10], mix=False)
    return bytes(state)


def _round(state: list, round_key: bytes, mix: bool) -> list:
    state = [_SBOX[b] for b in state]
    # shift rows: row r (bytes r, r+4, r+8, r+12 column-major) rotates left by r
    shifted = [0] * 16
    for c in range(4):
        for r in range(4):
            shifted[4 * c + r] = state[4 * ((c + r) % 4) + r]
    if mix:
        mixed = [0] * 16
        for c in range(4):
            col = shifted[4 * c:4 * c + 4]
            mixed[4 * c + 0] = _xtime(col[0]) ^ _xtime(col[1]) ^ col[1] ^ col[2] ^ col[3]
            mixed[4 * c + 1] = col[0] ^ _xtime(col[1]) ^ _xtime(col[2]) ^ col[2] ^ col[3]
            mixed[4 * c + 2] = col[0] ^ col[1] ^ _xtime(col[2]) ^ _xtime(col[3]) ^ col[3]
            mixed[4 * c + 3] = _xtime(col[0]) ^ col[0] ^ col[1] ^ col[2] ^ _xtime(col[3])
        shifted = mixed
    return [b ^ k for b, k in zip(shifted, round_key)]


def aes_encrypt(key: bytes, plaintext: bytes) -> bytes:
    """Counter-mode encryption with a zero initial counter block."""
    if not plaintext:
        raise EmptyPlaintext("plaintext must be non-empty")
    out = bytearray()
    for i in range(0, len(plaintext), BLOCK_SIZE):
        counter = (i // BLOCK_SIZE).to_bytes(BLOCK_SIZE, "big")
        keystream = encrypt_block(key, counter)
        chunk = plaintext[i:i + BLOCK_SIZE]
        out.extend(a ^ b for a, b in zip(chunk, keystream))
    return bytes(out)


def aes_decrypt(key: bytes, ciphertext: bytes) -> bytes:
    """Counter mode is an involution."""
    return aes_encrypt(key, ciphertext)
