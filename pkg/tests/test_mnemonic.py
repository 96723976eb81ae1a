import random
from importlib import resources

import pytest

from chainotp.mnemonic import (
    ChecksumError,
    Mnemonic,
    MnemonicError,
    UnknownWordError,
    WordCountError,
    WORDLIST,
    decode,
    encode,
)

from reference_sha256 import sha256 as oracle_sha256


def test_wordlist_file_contract():
    # one word per line, exactly 2048 lines, sorted, ASCII
    text = resources.files("chainotp").joinpath("data/wordlist.txt").read_text("ascii")
    lines = text.splitlines()
    assert len(lines) == 2048
    assert lines == sorted(lines)
    assert len(set(lines)) == 2048
    assert all(line.isascii() and line == line.strip() and line for line in lines)
    assert tuple(lines) == WORDLIST


def test_zero_payload_encodes_to_index_zero_words_plus_checksum_word():
    # 16 zero bytes: 128 zero payload bits + 4 checksum bits. The checksum
    # is the top nibble of the payload digest; the oracle pins the final
    # word index to (0 << 4) | checksum.
    checksum = oracle_sha256(bytes(16))[0] >> 4
    assert checksum == 3
    words = encode(bytes(16)).words
    assert len(words) == 12
    assert words[:11] == (WORDLIST[0],) * 11
    assert words[11] == WORDLIST[3]


def test_word_counts_by_payload_length():
    assert len(encode(bytes(16)).words) == 12
    assert len(encode(bytes(32)).words) == 24


def test_roundtrip_random_payloads():
    rng = random.Random(2024)
    for i in range(100):
        payload = rng.randbytes(16 if i % 2 else 32)
        assert decode(encode(payload)) == payload


def test_encode_is_injective_on_samples():
    rng = random.Random(77)
    sentences = {encode(rng.randbytes(16)).sentence() for _ in range(500)}
    assert len(sentences) == 500


def test_encode_rejects_bad_lengths():
    for n in (0, 1, 15, 17, 31, 33, 64):
        with pytest.raises(MnemonicError):
            encode(bytes(n))


def test_unknown_word_is_distinct_error():
    words = list(encode(bytes(16)).words)
    words[0] = "notaword"
    with pytest.raises(UnknownWordError):
        decode(Mnemonic(words=tuple(words)))


def test_wrong_word_count_is_distinct_error():
    words = encode(bytes(16)).words
    with pytest.raises(WordCountError):
        decode(Mnemonic(words=words[:11]))
    with pytest.raises(WordCountError):
        decode(Mnemonic(words=words + (WORDLIST[0],)))


def test_checksum_mismatch_is_distinct_error():
    words = list(encode(bytes(16)).words)
    # all-zero payload: swapping a leading word to index 1 flips payload
    # bits while keeping the stored checksum, which then cannot match
    words[0] = WORDLIST[1]
    with pytest.raises(ChecksumError):
        decode(Mnemonic(words=tuple(words)))


def test_single_word_substitution_detected_exhaustively():
    # 32-byte payload -> 24 words with 8 checksum bits. Try every word at
    # every position; a random wrong word slips through with chance 2^-8,
    # so at least 99% of substitutions must raise, and any survivor must
    # decode to a different payload (never a silent match).
    payload = bytes(range(32))
    words = encode(payload).words
    total = 0
    detected = 0
    for pos in range(len(words)):
        for replacement in WORDLIST:
            if replacement == words[pos]:
                continue
            total += 1
            mutated = words[:pos] + (replacement,) + words[pos + 1:]
            try:
                decoded = decode(Mnemonic(words=mutated))
            except ChecksumError:
                detected += 1
            else:
                assert decoded != payload
    assert total == 24 * 2047
    assert detected / total >= 0.99
