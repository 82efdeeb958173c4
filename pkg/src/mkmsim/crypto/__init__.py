"""Deterministic crypto building blocks for the simulated IP cores."""

from .aes import aes_decrypt, aes_encrypt, encrypt_block
from .drbg import DrbgState, derive_seed, drbg_bytes, drbg_next_384
from .keccak import DIGEST_SIZE, keccak_digest
from .rsa import (
    MODULUS_BITS,
    MODULUS_SIZE,
    RsaKeyPair,
    rsa_encrypt_raw,
    rsa_keygen,
    rsa_sign,
    rsa_verify,
)

__all__ = [
    "DIGEST_SIZE",
    "MODULUS_BITS",
    "MODULUS_SIZE",
    "DrbgState",
    "RsaKeyPair",
    "aes_decrypt",
    "aes_encrypt",
    "derive_seed",
    "drbg_bytes",
    "drbg_next_384",
    "encrypt_block",
    "keccak_digest",
    "rsa_encrypt_raw",
    "rsa_keygen",
    "rsa_sign",
    "rsa_verify",
]
