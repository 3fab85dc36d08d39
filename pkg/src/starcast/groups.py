"""Asymmetric pairing group context.

One named parameter set is supported: ``"128-bit"`` (alias ``"BLS12-381"``),
backed by the RELIC library through petrelic.  Elements are the petrelic
multiplicative-notation objects; scalars are plain Python ints reduced mod p.
"""

from __future__ import annotations

import contextlib
import contextvars
import functools
import secrets
import struct
from dataclasses import dataclass, field
from typing import Iterator

from petrelic.multiplicative.pairing import G1, G2, GT, G1Element, G2Element, GTElement

from .errors import MalformedInput, MalformedLabel, UnsupportedSecurityLevel

__all__ = [
    "GroupContext",
    "HashLabel",
    "PairingCounter",
    "attribute_label",
    "count_pairings",
    "encode_label",
    "generate_context",
    "index_label",
    "pair",
]

H2G1_DST = b"STARCAST-H2G1-v1"

KIND_NUMERIC = 0x00
KIND_ATTRIBUTE = 0x01

# BLS12-381 base field modulus and G1 curve constant (y^2 = x^3 + 4).
_FIELD_Q = int(
    "1a0111ea397fe69a4b1ba7b6434bacd764774b84f38512bf6730d2a0f6b0f624"
    "1eabfffeb153ffffb9feffffffffaaab",
    16,
)
_FP_BYTES = 48


# ---------------------------------------------------------------------------
# Hash labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HashLabel:
    """Input to the hash-into-G1 map.

    ``kind`` is ``"attribute"`` (payload: non-empty bytes) or ``"numeric"``
    (payload: positive int ``j``).  ``slot`` is in {1, 2, 3}, ``side`` in {1, 2}.
    """

    kind: str
    payload: bytes | int
    slot: int
    side: int

    def __post_init__(self):
        if self.slot not in (1, 2, 3):
            raise MalformedLabel(f"slot must be 1, 2 or 3, got {self.slot!r}")
        if self.side not in (1, 2):
            raise MalformedLabel(f"side must be 1 or 2, got {self.side!r}")
        if self.kind == "attribute":
            if not isinstance(self.payload, (bytes, bytearray)):
                raise MalformedLabel("attribute payload must be bytes")
            if not 1 <= len(self.payload) <= 255:
                raise MalformedLabel("attribute payload must be 1..255 bytes")
        elif self.kind == "numeric":
            if isinstance(self.payload, bool) or not isinstance(self.payload, int):
                raise MalformedLabel("numeric payload must be an int")
            if not 1 <= self.payload < 2**32:
                raise MalformedLabel("numeric payload must be in [1, 2**32)")
        else:
            raise MalformedLabel(f"unknown label kind {self.kind!r}")


def attribute_label(name: str | bytes, slot: int, side: int) -> HashLabel:
    payload = name.encode("utf-8") if isinstance(name, str) else bytes(name)
    return HashLabel("attribute", payload, slot, side)


def index_label(j: int, slot: int, side: int) -> HashLabel:
    return HashLabel("numeric", j, slot, side)


def encode_label(label: HashLabel) -> bytes:
    """Injective byte framing of a label.

    attribute: ``0x01 | len (1 byte) | bytes | slot | side``
    numeric:   ``0x00 | uint32 j (big-endian) | slot | side``
    """
    if label.kind == "attribute":
        payload = bytes(label.payload)
        return bytes([KIND_ATTRIBUTE, len(payload)]) + payload + bytes([label.slot, label.side])
    return bytes([KIND_NUMERIC]) + struct.pack(">I", label.payload) + bytes([label.slot, label.side])


@functools.lru_cache(maxsize=8192)
def _hash_encoded_to_g1(encoded: bytes) -> G1Element:
    # RELIC's map is a hash-to-curve (SSWU) over its own internal tag; the
    # starcast tag is bound into the message with a length prefix.
    return G1.hash_to_point(bytes([len(H2G1_DST)]) + H2G1_DST + encoded)


# ---------------------------------------------------------------------------
# Pairing instrumentation
# ---------------------------------------------------------------------------


class PairingCounter:
    def __init__(self):
        self.count = 0


_active_counters: contextvars.ContextVar[tuple[PairingCounter, ...]] = contextvars.ContextVar(
    "starcast_pairing_counters", default=()
)


@contextlib.contextmanager
def count_pairings() -> Iterator[PairingCounter]:
    """Count calls to :func:`pair` made inside the ``with`` block."""
    counter = PairingCounter()
    token = _active_counters.set(_active_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _active_counters.reset(token)


def pair(a: G1Element, b: G2Element) -> GTElement:
    for counter in _active_counters.get():
        counter.count += 1
    return a.pair(b)


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupContext:
    """Immutable description of one Type-III pairing parameter set."""

    name: str
    security_level: str
    param_id: int
    p: int
    g: G1Element = field(repr=False)
    h: G2Element = field(repr=False)

    g1_size: int = 49
    g2_size: int = 97
    gt_size: int = 384
    scalar_size: int = 32

    # -- scalars ----------------------------------------------------------

    def random_scalar(self, rng=None, nonzero: bool = False) -> int:
        """Uniform scalar by rejection sampling; ``rng`` needs ``getrandbits``."""
        source = rng if rng is not None else secrets.SystemRandom()
        bits = self.p.bit_length()
        while True:
            x = source.getrandbits(bits)
            if x >= self.p:
                continue
            if nonzero and x == 0:
                continue
            return x

    def inverse(self, x: int) -> int:
        return pow(x, -1, self.p)

    # -- group operations --------------------------------------------------

    def identity_g1(self) -> G1Element:
        return G1.neutral_element()

    def identity_g2(self) -> G2Element:
        return G2.neutral_element()

    def identity_gt(self) -> GTElement:
        return GT.neutral_element()

    def gt_generator(self) -> GTElement:
        return pair(self.g, self.h)

    def hash_to_g1(self, label: HashLabel) -> G1Element:
        return _hash_encoded_to_g1(encode_label(label))

    # -- serialization -----------------------------------------------------

    def encode_scalar(self, x: int) -> bytes:
        return (x % self.p).to_bytes(self.scalar_size, "big")

    def decode_scalar(self, data: bytes, offset: int = 0) -> int:
        if len(data) != self.scalar_size:
            raise MalformedInput("bad scalar width", offset)
        x = int.from_bytes(data, "big")
        if x >= self.p:
            raise MalformedInput("scalar not reduced mod p", offset)
        return x

    def encode_g1(self, a: G1Element) -> bytes:
        if a.is_neutral_element():
            return bytes(self.g1_size)
        return a.to_binary()

    def encode_g2(self, b: G2Element) -> bytes:
        if b.is_neutral_element():
            return bytes(self.g2_size)
        return b.to_binary()

    def encode_gt(self, c: GTElement) -> bytes:
        return c.to_binary()

    def decode_g1(self, data: bytes, offset: int = 0) -> G1Element:
        data = bytes(data)
        if len(data) != self.g1_size:
            raise MalformedInput("bad G1 element width", offset)
        if data == bytes(self.g1_size):
            return G1.neutral_element()
        if data[0] not in (2, 3):
            raise MalformedInput("bad G1 compression flag", offset)
        x = int.from_bytes(data[1:], "big")
        rhs = (pow(x, 3, _FIELD_Q) + 4) % _FIELD_Q
        if x >= _FIELD_Q or (rhs and pow(rhs, (_FIELD_Q - 1) // 2, _FIELD_Q) != 1):
            raise MalformedInput("G1 x-coordinate not on curve", offset)
        elem = G1Element.from_binary(data)
        if not elem.is_valid() or elem.to_binary() != data:
            raise MalformedInput("invalid G1 element", offset)
        return elem

    def decode_g2(self, data: bytes, offset: int = 0) -> G2Element:
        data = bytes(data)
        if len(data) != self.g2_size:
            raise MalformedInput("bad G2 element width", offset)
        if data == bytes(self.g2_size):
            return G2.neutral_element()
        if data[0] not in (2, 3):
            raise MalformedInput("bad G2 compression flag", offset)
        for k in range(2):
            chunk = data[1 + k * _FP_BYTES : 1 + (k + 1) * _FP_BYTES]
            if int.from_bytes(chunk, "big") >= _FIELD_Q:
                raise MalformedInput("G2 coordinate out of range", offset)
        elem = G2Element.from_binary(data)
        if not elem.is_valid() or elem.to_binary() != data:
            raise MalformedInput("invalid G2 element", offset)
        return elem

    def decode_gt(self, data: bytes, offset: int = 0) -> GTElement:
        data = bytes(data)
        if len(data) != self.gt_size:
            raise MalformedInput("bad GT element width", offset)
        for k in range(self.gt_size // _FP_BYTES):
            chunk = data[k * _FP_BYTES : (k + 1) * _FP_BYTES]
            if int.from_bytes(chunk, "big") >= _FIELD_Q:
                raise MalformedInput("GT coordinate out of range", offset)
        elem = GTElement.from_binary(data)
        if not elem.is_valid() or elem.to_binary() != data:
            raise MalformedInput("invalid GT element", offset)
        return elem


_LEVELS = {
    "128-bit": "BLS12-381",
    "BLS12-381": "BLS12-381",
}
_PARAM_IDS = {"BLS12-381": 1}


@functools.lru_cache(maxsize=None)
def _build(curve: str) -> GroupContext:
    return GroupContext(
        name=curve,
        security_level="128-bit",
        param_id=_PARAM_IDS[curve],
        p=int(G1.order()),
        g=G1.generator(),
        h=G2.generator(),
    )


def generate_context(security_level: str = "128-bit") -> GroupContext:
    """Return the standardized context for a named security level."""
    try:
        curve = _LEVELS[security_level]
    except (KeyError, TypeError):
        raise UnsupportedSecurityLevel(f"unsupported security level {security_level!r}") from None
    return _build(curve)


def context_for_param_id(param_id: int) -> GroupContext:
    for curve, pid in _PARAM_IDS.items():
        if pid == param_id:
            return _build(curve)
    raise UnsupportedSecurityLevel(f"unknown parameter set id {param_id}")
