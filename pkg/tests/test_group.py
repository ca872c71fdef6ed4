import random

import pytest
from hypothesis import given, settings, strategies as st

from dcsicta.group import (
    Collision,
    GroupParams,
    Idle,
    Message,
    ParameterError,
    PayloadError,
    checksum,
    classify,
    code_word,
    decode_code_word,
    encode_message,
    make_params,
)


def test_toy_subgroup_by_enumeration(toy):
    squares = sorted({x * x % 23 for x in range(1, 23)})
    assert squares == [1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18]
    assert sorted({pow(4, e, 23) for e in range(11)}) == squares
    assert all(toy.is_element(s) for s in squares)
    assert not any(toy.is_element(a) for a in range(1, 23) if a not in squares)


def test_toy_encoding_table(toy):
    # L=2, c=0: payloads 2 and 3 are the only encodable values (u >= 2)
    assert encode_message(toy, 3) == 9
    assert encode_message(toy, 2) == 4
    assert classify(toy, 9) == Message(3, b"\x03")
    assert classify(toy, 4) == Message(2, b"\x02")
    assert isinstance(classify(toy, 1), Idle)
    # sqrt(13) = +-6, 6 has three bits
    assert isinstance(classify(toy, 13), Collision)
    assert isinstance(classify(toy, 9 * 4 % 23), Collision)


def test_toy_reserved_payloads(toy):
    for m in (0, 1):
        with pytest.raises(PayloadError):
            encode_message(toy, m)
    with pytest.raises(PayloadError):
        encode_message(toy, 4)


@pytest.mark.parametrize("kw", [
    dict(p=23, q=11, g=4, payload_bits=3, checksum_bits=0),   # code too wide
    dict(p=23, q=11, g=5, payload_bits=2, checksum_bits=0),   # 5 is a non-residue
    dict(p=21, q=10, g=4, payload_bits=2, checksum_bits=0),   # not prime
    dict(p=23, q=11, g=1, payload_bits=2, checksum_bits=0),
    dict(p=23, q=11, g=4, payload_bits=0, checksum_bits=0),
])
def test_bad_params_rejected(kw):
    with pytest.raises(ParameterError):
        GroupParams(**kw)


def test_make_params_deterministic_and_safe():
    a = make_params(64, 32, 8, seed=b"x")
    b = make_params(64, 32, 8, seed=b"x")
    assert a == b
    assert a.p.bit_length() == 64 and a.p == 2 * a.q + 1
    assert make_params(64, 32, 8, seed=b"y") != a
    with pytest.raises(ParameterError):
        make_params(12, 2, 0, seed=b"x")
    with pytest.raises(ParameterError):
        make_params(64, 56, 8, seed=b"x")


def test_header_round_trip(params):
    assert GroupParams.from_header(params.header()) == params


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=1, max_value=2**64 - 1))
def test_round_trip(params, m):
    E = encode_message(params, m)
    assert params.is_element(E)
    out = classify(params, E)
    assert isinstance(out, Message) and out.value == m
    assert decode_code_word(params, E) == code_word(params, m)


def test_bytes_payload(params):
    E = encode_message(params, b"\x01\x02")
    assert classify(params, E).value == 0x0102


def test_payload_too_long(params):
    with pytest.raises(PayloadError):
        encode_message(params, 1 << 64)
    with pytest.raises(PayloadError):
        encode_message(params, -1)


def test_checksum_width(params):
    for m in range(50):
        assert 0 <= checksum(params, m) < 1 << params.checksum_bits


def test_code_word_order_follows_payload(params):
    ms = random.Random(3).sample(range(1, 1 << 40), 200)
    assert sorted(ms, key=lambda m: code_word(params, m)) == sorted(ms)


def test_product_of_two_messages_is_a_collision(params):
    rng = random.Random(7)
    wrong = 0
    for _ in range(2000):
        a, b = rng.randrange(1, 1 << 64), rng.randrange(1, 1 << 64)
        if not isinstance(classify(params, encode_message(params, a) * encode_message(params, b) % params.p), Collision):
            wrong += 1
    # a random element passes the range check with chance about 2^-46, then the checksum 2^-16
    assert wrong == 0
