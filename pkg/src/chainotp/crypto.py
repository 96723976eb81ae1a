"""Deterministic cryptographic primitives.

A single 256-bit hash (SHA-256) backs every derivation in the scheme: the
pseudo-random function, OTP images, Merkle nodes, and chain hashing.
Signatures are Ed25519 behind a bytes-in/bytes-out interface; nothing
outside this module depends on signature byte layout, only on verify
outcomes.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .wire import be64

DIGEST_LEN = 32
OTP_LEN = 16
SEED_LEN = 32

# 32-byte hash output.
Digest = bytes
# 16-byte truncated digest used as a one-time password or its precursor.
OtpValue = bytes
# 32-byte secret seed.
Seed = bytes


def digest(data: bytes) -> Digest:
    """Hash arbitrary bytes to a 32-byte digest."""
    return hashlib.sha256(data).digest()


def prf(seed: Seed, index: int) -> Digest:
    """Keyed derivation: digest(seed || index), index fixed-width 8-byte big-endian.

    Indexes start at 1; 0 is rejected.
    """
    if len(seed) != SEED_LEN:
        raise ValueError(f"seed must be {SEED_LEN} bytes, got {len(seed)}")
    if index < 1:
        raise ValueError(f"prf index must be >= 1, got {index}")
    return digest(seed + be64(index))


def truncate_to_otp(d: Digest) -> OtpValue:
    """First 16 bytes of a 32-byte digest."""
    if len(d) != DIGEST_LEN:
        raise ValueError(f"expected {DIGEST_LEN}-byte digest, got {len(d)}")
    return d[:OTP_LEN]


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret_key: bytes


def generate_keypair(rng: random.Random) -> KeyPair:
    """Derive an Ed25519 keypair from the harness RNG (deterministic per seed)."""
    secret = rng.randbytes(32)
    private = Ed25519PrivateKey.from_private_bytes(secret)
    public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return KeyPair(public_key=public, secret_key=secret)


def generate_seed(rng: random.Random) -> Seed:
    """Draw a fresh 32-byte OTP seed from the harness RNG."""
    return rng.randbytes(SEED_LEN)


def sign(secret_key: bytes, message: bytes) -> bytes:
    private = Ed25519PrivateKey.from_private_bytes(secret_key)
    return private.sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff signature is valid for message under public_key.

    Malformed keys or signatures verify as False rather than raising.
    """
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False
