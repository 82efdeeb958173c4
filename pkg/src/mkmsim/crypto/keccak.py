"""SHA3-512: 24-round Keccak-f[1600] sponge with FIPS-202 (0x06) padding.

The permutation is fully unrolled over the 25 lanes; the signature checker
hashes every pending transaction twice, so this path dominates simulation
throughput.
"""

DIGEST_SIZE = 64
_RATE = 72  # 576-bit rate for the 512-bit digest
_M = (1 << 64) - 1

_ROUND_CONSTANTS = (
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
)


def _permute(a: list) -> None:
    """Apply Keccak-f[1600] in place; lanes indexed x + 5*y, little-endian."""
    (a0, a1, a2, a3, a4, a5, a6, a7, a8, a9, a10, a11, a12,
     a13, a14, a15, a16, a17, a18, a19, a20, a21, a22, a23, a24) = a
    M = _M
    for rc in _ROUND_CONSTANTS:
        # theta
        c0 = a0 ^ a5 ^ a10 ^ a15 ^ a20
        c1 = a1 ^ a6 ^ a11 ^ a16 ^ a21
        c2 = a2 ^ a7 ^ a12 ^ a17 ^ a22
        c3 = a3 ^ a8 ^ a13 ^ a18 ^ a23
        c4 = a4 ^ a9 ^ a14 ^ a19 ^ a24
        d0 = c4 ^ (((c1 << 1) | (c1 >> 63)) & M)
        d1 = c0 ^ (((c2 << 1) | (c2 >> 63)) & M)
        d2 = c1 ^ (((c3 << 1) | (c3 >> 63)) & M)
        d3 = c2 ^ (((c4 << 1) | (c4 >> 63)) & M)
        d4 = c3 ^ (((c0 << 1) | (c0 >> 63)) & M)
        a0 ^= d0; a1 ^= d1; a2 ^= d2; a3 ^= d3; a4 ^= d4
        a5 ^= d0; a6 ^= d1; a7 ^= d2; a8 ^= d3; a9 ^= d4
        a10 ^= d0; a11 ^= d1; a12 ^= d2; a13 ^= d3; a14 ^= d4
        a15 ^= d0; a16 ^= d1; a17 ^= d2; a18 ^= d3; a19 ^= d4
        a20 ^= d0; a21 ^= d1; a22 ^= d2; a23 ^= d3; a24 ^= d4
        # rho + pi: b[y + 5*((2x+3y) mod 5)] = rotl(a[x + 5y], r[x,y])
        b0 = a0
        b10 = ((a1 << 1) | (a1 >> 63)) & M
        b20 = ((a2 << 62) | (a2 >> 2)) & M
        b5 = ((a3 << 28) | (a3 >> 36)) & M
        b15 = ((a4 << 27) | (a4 >> 37)) & M
        b16 = ((a5 << 36) | (a5 >> 28)) & M
        b1 = ((a6 << 44) | (a6 >> 20)) & M
        b11 = ((a7 << 6) | (a7 >> 58)) & M
        b21 = ((a8 << 55) | (a8 >> 9)) & M
        b6 = ((a9 << 20) | (a9 >> 44)) & M
        b7 = ((a10 << 3) | (a10 >> 61)) & M
        b17 = ((a11 << 10) | (a11 >> 54)) & M
        b2 = ((a12 << 43) | (a12 >> 21)) & M
        b12 = ((a13 << 25) | (a13 >> 39)) & M
        b22 = ((a14 << 39) | (a14 >> 25)) & M
        b23 = ((a15 << 41) | (a15 >> 23)) & M
        b8 = ((a16 << 45) | (a16 >> 19)) & M
        b18 = ((a17 << 15) | (a17 >> 49)) & M
        b3 = ((a18 << 21) | (a18 >> 43)) & M
        b13 = ((a19 << 8) | (a19 >> 56)) & M
        b14 = ((a20 << 18) | (a20 >> 46)) & M
        b24 = ((a21 << 2) | (a21 >> 62)) & M
        b9 = ((a22 << 61) | (a22 >> 3)) & M
        b19 = ((a23 << 56) | (a23 >> 8)) & M
        b4 = ((a24 << 14) | (a24 >> 50)) & M
        # chi + iota
        a0 = (b0 ^ (~b1 & b2) & M) ^ rc
        a1 = b1 ^ (~b2 & b3) & M
        a2 = b2 ^ (~b3 & b4) & M
        a3 = b3 ^ (~b4 & b0) & M
        a4 = b4 ^ (~b0 & b1) & M
        a5 = b5 ^ (~b6 & b7) & M
        a6 = b6 ^ (~b7 & b8) & M
        a7 = b7 ^ (~b8 & b9) & M
        a8 = b8 ^ (~b9 & b5) & M
        a9 = b9 ^ (~b5 & b6) & M
        a10 = b10 ^ (~b11 & b12) & M
        a11 = b11 ^ (~b12 & b13) & M
        a12 = b12 ^ (~b13 & b14) & M
        a13 = b13 ^ (~b14 & b10) & M
        a14 = b14 ^ (~b10 & b11) & M
        a15 = b15 ^ (~b16 & b17) & M
        a16 = b16 ^ (~b17 & b18) & M
        a17 = b17 ^ (~b18 & b19) & M
        a18 = b18 ^ (~b19 & b15) & M
        a19 = b19 ^ (~b15 & b16) & M
        a20 = b20 ^ (~b21 & b22) & M
        a21 = b21 ^ (~b22 & b23) & M
        a22 = b22 ^ (~b23 & b24) & M
        a23 = b23 ^ (~b24 & b20) & M
        a24 = b24 ^ (~b20 & b21) & M
    a[:] = (a0, a1, a2, a3, a4, a5, a6, a7, a8, a9, a10, a11, a12,
            a13, a14, a15, a16, a17, a18, a19, a20, a21, a22, a23, a24)


def keccak_digest(message: bytes) -> bytes:
    """Return the 512-bit SHA3-512 digest of ``message``."""
    state = [0] * 25
    padded = bytearray(message)
    padded.append(0x06)
    padded.extend(b"\x00" * (-len(padded) % _RATE))
    padded[-1] ^= 0x80
    for off in range(0, len(padded), _RATE):
        for i in range(9):
            state[i] ^= int.from_bytes(padded[off + 8 * i:off + 8 * i + 8], "little")
        _permute(state)
    squeezed = b"".join(lane.to_bytes(8, "little") for lane in state[:9])
    return squeezed[:DIGEST_SIZE]
