"""Textbook RSA-1024 over 512-bit digests.

Sign and verify are bare modular exponentiations with the digest zero-padded
to the modulus width, mirroring a raw hardware exponentiation block. There is
deliberately no OAEP/PSS padding; do not reuse this outside the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import DigestTooLarge, MalformedSignature
from .drbg import DrbgState, drbg_bytes

MODULUS_BITS = 1024
MODULUS_SIZE = 128
DIGEST_SIZE = 64
PUBLIC_EXPONENT = 65537

_PRIME_BITS = MODULUS_BITS // 2


def _small_primes(limit: int = 4000) -> list:
    flags = bytearray([1]) * limit
    flags[0] = flags[1] = 0
    for i in range(2, int(limit ** 0.5) + 1):
        if flags[i]:
            flags[i * i::i] = bytes(len(flags[i * i::i]))
    return [i for i in range(limit) if flags[i]]


_SMALL_PRIMES = _small_primes()
_MR_BASES = _SMALL_PRIMES[:25]


def is_probable_prime(n: int) -> bool:
    """Miller-Rabin over 25 fixed prime bases, after small-prime trial division."""
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class RsaKeyPair:
    modulus: int
    public_exponent: int
    private_exponent: int
    owner: str

    @property
    def public(self) -> tuple:
        return self.modulus, self.public_exponent


def _next_prime(drbg: DrbgState) -> int:
    while True:
        cand = int.from_bytes(drbg_bytes(drbg, _PRIME_BITS // 8), "big")
        # force exact width (top two bits) and oddness
        cand |= (1 << (_PRIME_BITS - 1)) | (1 << (_PRIME_BITS - 2)) | 1
        cand &= (1 << _PRIME_BITS) - 1
        if is_probable_prime(cand):
            return cand


def rsa_keygen(drbg: DrbgState, owner: str) -> RsaKeyPair:
    """Deterministically derive a 1024-bit keypair from the DRBG stream."""
    e = PUBLIC_EXPONENT
    while True:
        p = _next_prime(drbg)
        q = _next_prime(drbg)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != MODULUS_BITS:
            continue
        lam = (p - 1) * (q - 1) // math.gcd(p - 1, q - 1)
        if lam % e == 0:
            continue
        return RsaKeyPair(n, e, pow(e, -1, lam), owner)


def rsa_sign(digest: bytes, key: RsaKeyPair) -> bytes:
    """Raise the zero-padded digest to the private exponent."""
    if len(digest) != DIGEST_SIZE:
        raise ValueError(f"digest must be {DIGEST_SIZE} bytes")
    m = int.from_bytes(digest, "big")
    if m >= key.modulus:
        # unreachable with a 512-bit digest under a 1024-bit modulus
        raise DigestTooLarge("padded digest not below modulus")
    sig = pow(m, key.private_exponent, key.modulus)
    return sig.to_bytes(MODULUS_SIZE, "big")


def rsa_verify(signature: bytes, modulus: int, public_exponent: int) -> bytes:
    """Recover the low 512 bits of signature**e mod n for the caller to compare."""
    if len(signature) != MODULUS_SIZE:
        raise MalformedSignature(f"signature must be {MODULUS_SIZE} bytes")
    s = int.from_bytes(signature, "big")
    if s >= modulus:
        raise MalformedSignature("signature value not below modulus")
    recovered = pow(s, public_exponent, modulus)
    return recovered.to_bytes(MODULUS_SIZE, "big")[-DIGEST_SIZE:]


def rsa_encrypt_raw(value: bytes, modulus: int, public_exponent: int) -> bytes:
    """Public-key exponentiation of an arbitrary value below the modulus."""
    m = int.from_bytes(value, "big")
    if m >= modulus:
        raise DigestTooLarge("value not below modulus")
    return pow(m, public_exponent, modulus).to_bytes(MODULUS_SIZE, "big")
