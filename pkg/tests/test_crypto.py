import random

import pytest

from chainotp.crypto import (
    digest,
    generate_keypair,
    prf,
    sign,
    truncate_to_otp,
    verify,
)
from chainotp.wire import be64

from reference_sha256 import sha256 as oracle_sha256

# NIST-published SHA-256 vector for empty input.
EMPTY_DIGEST = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
# digest(32 zero bytes || 8-byte big-endian 1), computed with the
# independent pure-Python oracle and frozen here.
PRF_ZERO_1 = "08e00266fff0aacc64974f22a53622a7dc458ac1b5fd446ae7c99a4a99a564e6"


def test_empty_input_matches_published_vector():
    assert digest(b"").hex() == EMPTY_DIGEST
    assert oracle_sha256(b"").hex() == EMPTY_DIGEST


def test_digest_deterministic():
    payload = b"two and a half factors"
    assert digest(payload) == digest(payload)
    assert len(digest(payload)) == 32


def test_digest_distinguishes_appended_byte():
    rng = random.Random(1234)
    for _ in range(1000):
        x = rng.randbytes(32)
        assert digest(x) != digest(x + b"\x00")


def test_digest_agrees_with_independent_oracle():
    rng = random.Random(99)
    for _ in range(50):
        x = rng.randbytes(rng.randrange(0, 200))
        assert digest(x) == oracle_sha256(x)


def test_prf_is_hash_of_seed_and_fixed_width_index():
    k = bytes(range(32))
    assert prf(k, 1) == digest(k + b"\x00\x00\x00\x00\x00\x00\x00\x01")
    assert prf(k, 300) == digest(k + be64(300))


def test_prf_zero_seed_golden_vector():
    assert prf(bytes(32), 1).hex() == PRF_ZERO_1
    assert oracle_sha256(bytes(32) + be64(1)).hex() == PRF_ZERO_1


def test_prf_rejects_index_zero():
    with pytest.raises(ValueError):
        prf(bytes(32), 0)
    with pytest.raises(ValueError):
        prf(bytes(32), -3)


def test_prf_rejects_bad_seed_length():
    with pytest.raises(ValueError):
        prf(b"short", 1)


def test_prf_no_collisions_over_sampled_pairs():
    rng = random.Random(7)
    seen = set()
    count = 0
    for _ in range(10):
        seed = rng.randbytes(32)
        for index in range(1, 10_001):
            seen.add(prf(seed, index))
            count += 1
    assert len(seen) == count  # 10^5 (seed, index) pairs, zero collisions


def test_truncate_prefix():
    assert truncate_to_otp(bytes(32)) == bytes(16)
    assert truncate_to_otp(bytes(range(1, 33))) == bytes(range(1, 17))
    d = digest(b"x")
    assert truncate_to_otp(d) == truncate_to_otp(d) == d[:16]


def test_truncate_rejects_wrong_length():
    with pytest.raises(ValueError):
        truncate_to_otp(b"too short")


def test_sign_verify_roundtrip():
    kp = generate_keypair(random.Random(42))
    sig = sign(kp.secret_key, b"auth")
    assert verify(kp.public_key, b"auth", sig)


def test_verify_wrong_key_false():
    rng = random.Random(43)
    kp_a, kp_b = generate_keypair(rng), generate_keypair(rng)
    sig = sign(kp_a.secret_key, b"auth")
    assert not verify(kp_b.public_key, b"auth", sig)


def test_verify_rejects_every_single_byte_flip():
    kp = generate_keypair(random.Random(44))
    msg = b"one-time password session 3"
    sig = sign(kp.secret_key, msg)
    for pos in range(len(sig)):
        bad = sig[:pos] + bytes([sig[pos] ^ 0x01]) + sig[pos + 1:]
        assert not verify(kp.public_key, msg, bad)
    for pos in range(len(msg)):
        bad_msg = msg[:pos] + bytes([msg[pos] ^ 0x01]) + msg[pos + 1:]
        assert not verify(kp.public_key, bad_msg, sig)


def test_verify_malformed_inputs_return_false():
    kp = generate_keypair(random.Random(45))
    sig = sign(kp.secret_key, b"m")
    assert not verify(b"not a key", b"m", sig)
    assert not verify(kp.public_key, b"m", b"not a signature")
    assert not verify(b"", b"m", b"")


def test_keypair_deterministic_per_rng_seed():
    assert generate_keypair(random.Random(5)) == generate_keypair(random.Random(5))
    assert generate_keypair(random.Random(5)) != generate_keypair(random.Random(6))


def test_no_cross_keypair_forgeries_sampled():
    rng = random.Random(46)
    pairs = [generate_keypair(rng) for _ in range(12)]
    msg = b"registry write"
    for signer in pairs:
        sig = sign(signer.secret_key, msg)
        for other in pairs:
            assert verify(other.public_key, msg, sig) == (other is signer)
