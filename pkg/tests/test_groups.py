import itertools
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starcast.errors import MalformedInput, MalformedLabel, UnsupportedSecurityLevel
from starcast.groups import (
    HashLabel,
    attribute_label,
    context_for_param_id,
    count_pairings,
    encode_label,
    generate_context,
    index_label,
    pair,
)

# BLS12-381 subgroup order, written out independently of the backend.
BLS_ORDER = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001


def test_context_parameters(ctx):
    assert ctx.p == BLS_ORDER
    assert ctx.p.bit_length() > 250
    assert pow(2, ctx.p - 1, ctx.p) == 1  # Fermat witness
    assert not ctx.g.is_neutral_element()
    assert not ctx.h.is_neutral_element()
    assert ctx.gt_generator() != ctx.identity_gt()


def test_context_is_standardized(ctx):
    other = generate_context("128-bit")
    assert other.p == ctx.p and other.g == ctx.g and other.h == ctx.h
    assert generate_context("BLS12-381") is ctx
    assert context_for_param_id(1) is ctx


@pytest.mark.parametrize("level", ["unknown", "80-bit", "", None])
def test_unknown_level(level):
    with pytest.raises(UnsupportedSecurityLevel):
        generate_context(level)


def test_unknown_param_id():
    with pytest.raises(UnsupportedSecurityLevel):
        context_for_param_id(7)


def test_pair_small_exponents(ctx):
    assert pair(ctx.g**3, ctx.h**5) == ctx.gt_generator() ** 15


def test_pair_identity(ctx):
    assert pair(ctx.identity_g1(), ctx.h) == ctx.identity_gt()
    assert pair(ctx.g, ctx.identity_g2()) == ctx.identity_gt()


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=BLS_ORDER - 1), st.integers(min_value=0, max_value=BLS_ORDER - 1))
def test_bilinearity(u, v):
    ctx = generate_context()
    lhs = pair(ctx.g**u, ctx.h**v)
    assert lhs == pair(ctx.g ** (u * v % ctx.p), ctx.h)
    assert lhs == ctx.gt_generator() ** (u * v % ctx.p)


def test_pairing_counter_nests(ctx):
    with count_pairings() as outer:
        pair(ctx.g, ctx.h)
        with count_pairings() as inner:
            pair(ctx.g, ctx.h)
            pair(ctx.g, ctx.h)
    assert (outer.count, inner.count) == (3, 2)


def test_encode_label_examples():
    assert encode_label(attribute_label("Blue", 2, 1)) == b"\x01\x04Blue\x02\x01"
    assert encode_label(index_label(3, 1, 2)) == b"\x00" + struct.pack(">I", 3) + b"\x01\x02"
    assert encode_label(index_label(3, 1, 2)) == bytes([0, 0, 0, 0, 3, 1, 2])


def test_encode_label_exhaustive_small_domain():
    seen = {}
    payloads = [bytes([a]) for a in range(256)] + [bytes([a, b]) for a in range(256) for b in range(256)]
    for slot, side in itertools.product((1, 2, 3), (1, 2)):
        for payload in payloads:
            enc = encode_label(HashLabel("attribute", payload, slot, side))
            assert enc not in seen
            seen[enc] = (payload, slot, side)
        for j in range(1, 5):
            enc = encode_label(index_label(j, slot, side))
            assert enc not in seen
            seen[enc] = (j, slot, side)
    assert len(seen) == 6 * (len(payloads) + 4)


label_strategy = st.one_of(
    st.builds(lambda p, s, t: HashLabel("attribute", p, s, t),
              st.binary(min_size=1, max_size=40), st.sampled_from([1, 2, 3]), st.sampled_from([1, 2])),
    st.builds(index_label, st.integers(min_value=1, max_value=2**32 - 1),
              st.sampled_from([1, 2, 3]), st.sampled_from([1, 2])),
)


@settings(max_examples=300)
@given(label_strategy, label_strategy)
def test_encode_label_injective(a, b):
    if a != b:
        assert encode_label(a) != encode_label(b)


@pytest.mark.parametrize(
    "args",
    [("attribute", b"", 1, 1), ("attribute", b"x" * 256, 1, 1), ("attribute", b"x", 0, 1), ("attribute", b"x", 1, 3),
     ("numeric", 0, 1, 1), ("numeric", 2**32, 1, 1), ("numeric", True, 1, 1), ("other", b"x", 1, 1),
     ("attribute", "text", 1, 1)],
)
def test_malformed_labels(args):
    with pytest.raises(MalformedLabel):
        HashLabel(*args)


def test_hash_to_g1(ctx):
    a = ctx.hash_to_g1(attribute_label("Alpha", 1, 1))
    assert a == ctx.hash_to_g1(attribute_label("Alpha", 1, 1))
    assert a != ctx.hash_to_g1(attribute_label("Alpha", 1, 2))
    assert ctx.hash_to_g1(index_label(1, 1, 1)) != ctx.hash_to_g1(attribute_label("1", 1, 1))
    assert not a.is_neutral_element()
    assert (a ** ctx.p).is_neutral_element()


def test_random_scalar_range(ctx):
    rng = random.Random(5)
    xs = [ctx.random_scalar(rng, nonzero=True) for _ in range(50)]
    assert all(0 < x < ctx.p for x in xs)
    assert len(set(xs)) == 50


class _ZeroThenOne:
    def __init__(self):
        self.calls = 0

    def getrandbits(self, k):
        self.calls += 1
        return 0 if self.calls == 1 else 1


def test_random_scalar_resamples_zero(ctx):
    assert ctx.random_scalar(_ZeroThenOne(), nonzero=True) == 1
    assert ctx.random_scalar(_ZeroThenOne()) == 0


def test_element_codecs_roundtrip(ctx):
    rng = random.Random(9)
    for _ in range(5):
        x = ctx.random_scalar(rng)
        a, b, c = ctx.g**x, ctx.h**x, ctx.gt_generator() ** x
        assert ctx.decode_g1(ctx.encode_g1(a)) == a
        assert ctx.decode_g2(ctx.encode_g2(b)) == b
        assert ctx.decode_gt(ctx.encode_gt(c)) == c
        assert ctx.decode_scalar(ctx.encode_scalar(x)) == x
        assert len(ctx.encode_g1(a)) == ctx.g1_size
        assert len(ctx.encode_g2(b)) == ctx.g2_size
        assert len(ctx.encode_gt(c)) == ctx.gt_size
    assert ctx.decode_g1(ctx.encode_g1(ctx.identity_g1())).is_neutral_element()
    assert ctx.decode_g2(ctx.encode_g2(ctx.identity_g2())).is_neutral_element()
    assert ctx.decode_gt(ctx.encode_gt(ctx.identity_gt())) == ctx.identity_gt()


def test_element_codecs_reject_garbage(ctx):
    good1 = ctx.encode_g1(ctx.g)
    with pytest.raises(MalformedInput):
        ctx.decode_g1(good1[:-1])
    with pytest.raises(MalformedInput):
        ctx.decode_g1(b"\x05" + good1[1:])
    with pytest.raises(MalformedInput):
        ctx.decode_g1(b"\x02" + b"\xff" * 48)
    with pytest.raises(MalformedInput):
        ctx.decode_g2(b"\x02" + b"\xff" * 96)
    with pytest.raises(MalformedInput):
        ctx.decode_gt(b"\x01" * ctx.gt_size)
    with pytest.raises(MalformedInput):
        ctx.decode_scalar(ctx.p.to_bytes(32, "big"))
