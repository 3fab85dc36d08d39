"""Hybrid envelopes and the binary file formats.

Every file starts with ``b"SCST" | version (1) | type (1)``.  Integers are
big-endian; variable-length fields carry a length prefix.  Layouts::

    header  := param u8 | epoch u32 | mode u8 | policy_len u16 | policy
               | msp_digest[32] | n_rows u32 | c0: 3 x G2 | rows: 3*n_rows x G1
               | c_prime: GT (element mode only)
    .scpk   := prefix | param | epoch | h G2 | T1 GT | H1 G2 | T2 GT | H2 G2
    .scmk   := prefix | param | epoch | 7 scalars | g G1 | h G2 | 3 x G1
    .scsk   := prefix | param | epoch | sk0: 3 x G2 | sk': 3 x G1 | count u32
               | count x (len u8 | name | 3 x G1)     (names sorted)
    .scenv  := prefix | header | nonce[12] | AES-256-GCM ciphertext | tag[16]

The envelope's associated data is everything before the nonce.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import abe
from .abe import MODE_ELEMENT, MODE_KEM, AbeHeader, MasterKey, PublicKey, UserSecretKey
from .errors import (
    AuthenticationFailure,
    InvalidAttribute,
    MalformedInput,
    PolicySyntaxError,
    UnsupportedSecurityLevel,
    UnsupportedVersion,
)
from .groups import GroupContext, context_for_param_id
from .policy import compile_policy, validate_attribute

MAGIC = b"SCST"
FORMAT_VERSION = 1

TYPE_PUBLIC_KEY = 1
TYPE_MASTER_KEY = 2
TYPE_SECRET_KEY = 3
TYPE_ENVELOPE = 4

TYPE_NAMES = {
    TYPE_PUBLIC_KEY: "public-key",
    TYPE_MASTER_KEY: "master-key",
    TYPE_SECRET_KEY: "user-secret-key",
    TYPE_ENVELOPE: "envelope",
}
FILE_SUFFIXES = {
    TYPE_PUBLIC_KEY: ".scpk",
    TYPE_MASTER_KEY: ".scmk",
    TYPE_SECRET_KEY: ".scsk",
    TYPE_ENVELOPE: ".scenv",
}

PREFIX_BYTES = len(MAGIC) + 2
NONCE_BYTES = 12
TAG_BYTES = 16
# param + epoch + mode + policy length + digest + row count
HEADER_FIXED_BYTES = 1 + 4 + 1 + 2 + 32 + 4
ENVELOPE_OVERHEAD = PREFIX_BYTES + NONCE_BYTES + TAG_BYTES

_MODE_CODES = {MODE_KEM: 0, MODE_ELEMENT: 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


@dataclass(frozen=True)
class Envelope:
    header: AbeHeader
    nonce: bytes
    sealed: bytes
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.header.mode != MODE_KEM:
            raise ValueError("envelope headers must be in KEM mode")
        if len(self.nonce) != NONCE_BYTES:
            raise ValueError("nonce must be 12 bytes")
        if len(self.sealed) < TAG_BYTES:
            raise ValueError("sealed body shorter than the authentication tag")


# ---------------------------------------------------------------------------
# Low-level reader
# ---------------------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.off = 0

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise MalformedInput(f"truncated input while reading {what}", self.off)
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def u8(self, what):
        return self.take(1, what)[0]

    def u16(self, what):
        return struct.unpack(">H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack(">I", self.take(4, what))[0]

    def g1(self, ctx: GroupContext):
        at = self.off
        return ctx.decode_g1(self.take(ctx.g1_size, "G1 element"), at)

    def g2(self, ctx: GroupContext):
        at = self.off
        return ctx.decode_g2(self.take(ctx.g2_size, "G2 element"), at)

    def gt(self, ctx: GroupContext):
        at = self.off
        return ctx.decode_gt(self.take(ctx.gt_size, "GT element"), at)

    def scalar(self, ctx: GroupContext):
        at = self.off
        return ctx.decode_scalar(self.take(ctx.scalar_size, "scalar"), at)

    def context(self) -> GroupContext:
        at = self.off
        try:
            return context_for_param_id(self.u8("parameter set id"))
        except UnsupportedSecurityLevel as exc:
            raise MalformedInput(str(exc), at) from None

    def finish(self):
        if self.off != len(self.data):
            raise MalformedInput("trailing bytes", self.off)


def _prefix(kind: int) -> bytes:
    return MAGIC + bytes([FORMAT_VERSION, kind])


def _read_prefix(reader: _Reader, expected: int | None = None) -> int:
    magic = reader.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise MalformedInput("bad magic", 0)
    version = reader.u8("version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported format version {version}", 4)
    kind = reader.u8("type")
    if kind not in TYPE_NAMES:
        raise MalformedInput(f"unknown file type {kind}", 5)
    if expected is not None and kind != expected:
        raise MalformedInput(f"expected {TYPE_NAMES[expected]}, found {TYPE_NAMES[kind]}", 5)
    return kind


# ---------------------------------------------------------------------------
# Headers
# ---------------------------------------------------------------------------


def serialize_header(hdr: AbeHeader) -> bytes:
    ctx = _header_context(hdr)
    policy = hdr.msp.policy.encode("utf-8")
    if len(policy) > 0xFFFF:
        raise ValueError("policy text longer than 65535 bytes")
    out = [
        struct.pack(">BIBH", ctx.param_id, hdr.epoch, _MODE_CODES[hdr.mode], len(policy)),
        policy,
        hdr.msp.digest(),
        struct.pack(">I", hdr.msp.n_rows),
    ]
    out.extend(ctx.encode_g2(e) for e in hdr.c0)
    for row in hdr.rows:
        out.extend(ctx.encode_g1(e) for e in row)
    if hdr.mode == MODE_ELEMENT:
        out.append(ctx.encode_gt(hdr.c_prime))
    return b"".join(out)


def _header_context(hdr: AbeHeader) -> GroupContext:
    # Headers do not carry a context object; the default parameter set is the
    # only one with a registered id.
    return context_for_param_id(1)


def _read_header(reader: _Reader) -> AbeHeader:
    ctx = reader.context()
    epoch = reader.u32("epoch")
    at = reader.off
    mode_code = reader.u8("mode")
    if mode_code not in _MODE_NAMES:
        raise MalformedInput(f"unknown header mode {mode_code}", at)
    plen = reader.u16("policy length")
    at = reader.off
    try:
        text = reader.take(plen, "policy text").decode("utf-8")
        msp = compile_policy(text)
    except (UnicodeDecodeError, PolicySyntaxError) as exc:
        raise MalformedInput(f"invalid embedded policy: {exc}", at) from None
    msp = type(msp)(msp.rows, msp.labels, text)
    at = reader.off
    digest = reader.take(32, "span program digest")
    if digest != msp.digest():
        raise MalformedInput("span program digest does not match the embedded policy", at)
    at = reader.off
    n_rows = reader.u32("row count")
    if n_rows != msp.n_rows:
        raise MalformedInput("row count does not match the embedded policy", at)
    c0 = tuple(reader.g2(ctx) for _ in range(3))
    rows = tuple(tuple(reader.g1(ctx) for _ in range(3)) for _ in range(n_rows))
    mode = _MODE_NAMES[mode_code]
    c_prime = reader.gt(ctx) if mode == MODE_ELEMENT else None
    return AbeHeader(msp=msp, c0=c0, rows=rows, mode=mode, c_prime=c_prime, epoch=epoch)


def deserialize_header(data: bytes) -> AbeHeader:
    reader = _Reader(data)
    hdr = _read_header(reader)
    reader.finish()
    return hdr


def header_size(n_rows: int, policy_bytes: int, mode: str = MODE_KEM, ctx: GroupContext | None = None) -> int:
    """Exact serialized header length for the given shape."""
    ctx = ctx or context_for_param_id(1)
    size = HEADER_FIXED_BYTES + policy_bytes + 3 * ctx.g2_size + 3 * n_rows * ctx.g1_size
    if mode == MODE_ELEMENT:
        size += ctx.gt_size
    return size


# ---------------------------------------------------------------------------
# Keys
# ---------------------------------------------------------------------------


def serialize_public_key(pk: PublicKey) -> bytes:
    ctx = pk.ctx
    return b"".join(
        [
            _prefix(TYPE_PUBLIC_KEY),
            struct.pack(">BI", ctx.param_id, pk.epoch),
            ctx.encode_g2(pk.h),
            ctx.encode_gt(pk.t1),
            ctx.encode_g2(pk.h1),
            ctx.encode_gt(pk.t2),
            ctx.encode_g2(pk.h2),
        ]
    )


def _read_public_key(reader: _Reader) -> PublicKey:
    ctx = reader.context()
    epoch = reader.u32("epoch")
    at = reader.off
    h = reader.g2(ctx)
    if h != ctx.h:
        raise MalformedInput("public key generator does not match the parameter set", at)
    t1 = reader.gt(ctx)
    h1 = reader.g2(ctx)
    t2 = reader.gt(ctx)
    h2 = reader.g2(ctx)
    return PublicKey(ctx=ctx, h=h, t1=t1, h1=h1, t2=t2, h2=h2, epoch=epoch)


def deserialize_public_key(data: bytes) -> PublicKey:
    reader = _Reader(data)
    _read_prefix(reader, TYPE_PUBLIC_KEY)
    pk = _read_public_key(reader)
    reader.finish()
    return pk


def serialize_master_key(mk: MasterKey) -> bytes:
    ctx = mk.ctx
    scalars = (mk.alpha1, mk.beta1, mk.alpha2, mk.beta2, mk.delta1, mk.delta2, mk.delta3)
    return b"".join(
        [
            _prefix(TYPE_MASTER_KEY),
            struct.pack(">BI", ctx.param_id, mk.epoch),
            *(ctx.encode_scalar(x) for x in scalars),
            ctx.encode_g1(mk.g),
            ctx.encode_g2(mk.h),
            ctx.encode_g1(mk.g_delta1),
            ctx.encode_g1(mk.g_delta2),
            ctx.encode_g1(mk.g_delta3),
        ]
    )


def deserialize_master_key(data: bytes) -> MasterKey:
    reader = _Reader(data)
    _read_prefix(reader, TYPE_MASTER_KEY)
    ctx = reader.context()
    epoch = reader.u32("epoch")
    at = reader.off
    a1, b1, a2, b2, d1, d2, d3 = (reader.scalar(ctx) for _ in range(7))
    if 0 in (a1, b1, a2, b2):
        raise MalformedInput("alpha/beta scalars must be nonzero", at)
    at = reader.off
    g = reader.g1(ctx)
    h = reader.g2(ctx)
    gd = [reader.g1(ctx) for _ in range(3)]
    reader.finish()
    if g != ctx.g or h != ctx.h:
        raise MalformedInput("master key generators do not match the parameter set", at)
    if any(gd[k] != g ** d for k, d in enumerate((d1, d2, d3))):
        raise MalformedInput("master key delta elements are inconsistent", at)
    return MasterKey(
        ctx=ctx,
        alpha1=a1,
        beta1=b1,
        alpha2=a2,
        beta2=b2,
        delta1=d1,
        delta2=d2,
        delta3=d3,
        g=g,
        h=h,
        g_delta1=gd[0],
        g_delta2=gd[1],
        g_delta3=gd[2],
        epoch=epoch,
    )


def serialize_secret_key(sk: UserSecretKey) -> bytes:
    ctx = sk.ctx
    out = [
        _prefix(TYPE_SECRET_KEY),
        struct.pack(">BI", ctx.param_id, sk.epoch),
        *(ctx.encode_g2(e) for e in sk.sk0),
        *(ctx.encode_g1(e) for e in sk.sk_prime),
        struct.pack(">I", len(sk.components)),
    ]
    for name in sorted(sk.components):
        raw = name.encode("utf-8")
        out.append(bytes([len(raw)]) + raw)
        out.extend(ctx.encode_g1(e) for e in sk.components[name])
    return b"".join(out)


def deserialize_secret_key(data: bytes) -> UserSecretKey:
    reader = _Reader(data)
    _read_prefix(reader, TYPE_SECRET_KEY)
    ctx = reader.context()
    epoch = reader.u32("epoch")
    sk0 = tuple(reader.g2(ctx) for _ in range(3))
    sk_prime = tuple(reader.g1(ctx) for _ in range(3))
    at = reader.off
    count = reader.u32("attribute count")
    if count * (1 + 3 * ctx.g1_size) > len(reader.data) - reader.off + 1:
        raise MalformedInput("attribute count exceeds input", at)
    components = {}
    previous = None
    for _ in range(count):
        at = reader.off
        ln = reader.u8("attribute length")
        raw = reader.take(ln, "attribute name")
        try:
            name = validate_attribute(raw.decode("utf-8"))
        except (UnicodeDecodeError, InvalidAttribute):
            raise MalformedInput("invalid attribute name", at) from None
        if previous is not None and name <= previous:
            raise MalformedInput("attribute names not in canonical order", at)
        previous = name
        components[name] = tuple(reader.g1(ctx) for _ in range(3))
    reader.finish()
    return UserSecretKey(ctx=ctx, sk0=sk0, components=components, sk_prime=sk_prime, epoch=epoch)


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------


def _associated_data(env: Envelope) -> bytes:
    return MAGIC + bytes([env.version, TYPE_ENVELOPE]) + serialize_header(env.header)


def serialize_envelope(env: Envelope) -> bytes:
    return _associated_data(env) + env.nonce + env.sealed


def deserialize_envelope(data: bytes) -> Envelope:
    reader = _Reader(data)
    _read_prefix(reader, TYPE_ENVELOPE)
    at = reader.off
    hdr = _read_header(reader)
    if hdr.mode != MODE_KEM:
        raise MalformedInput("envelope header is not in KEM mode", at)
    nonce = reader.take(NONCE_BYTES, "nonce")
    sealed = reader.data[reader.off :]
    if len(sealed) < TAG_BYTES:
        raise MalformedInput("sealed body shorter than the authentication tag", reader.off)
    return Envelope(header=hdr, nonce=nonce, sealed=sealed)


def _random_bytes(rng, n: int) -> bytes:
    if rng is None:
        return os.urandom(n)
    return rng.getrandbits(8 * n).to_bytes(n, "big")


def seal(pk: PublicKey, policy_text: str, plaintext: bytes, rng=None) -> Envelope:
    """Encapsulate a fresh session key under ``policy_text`` and AEAD-seal the payload."""
    msp = compile_policy(policy_text)
    hdr, key = abe.encap(pk, msp, rng)
    nonce = _random_bytes(rng, NONCE_BYTES)
    env = Envelope(header=hdr, nonce=nonce, sealed=b"\x00" * TAG_BYTES)
    sealed = AESGCM(key).encrypt(nonce, bytes(plaintext), _associated_data(env))
    return Envelope(header=hdr, nonce=nonce, sealed=sealed)


def open_envelope(env: Envelope, sk: UserSecretKey) -> bytes:
    if env.version != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported envelope version {env.version}")
    key = abe.decap(env.header, sk)
    try:
        return AESGCM(key).decrypt(env.nonce, env.sealed, _associated_data(env))
    except InvalidTag:
        raise AuthenticationFailure() from None


open = open_envelope  # noqa: A001


# ---------------------------------------------------------------------------
# Generic loading and inspection
# ---------------------------------------------------------------------------

_LOADERS = {
    TYPE_PUBLIC_KEY: deserialize_public_key,
    TYPE_MASTER_KEY: deserialize_master_key,
    TYPE_SECRET_KEY: deserialize_secret_key,
    TYPE_ENVELOPE: deserialize_envelope,
}


def file_type(data: bytes) -> int:
    return _read_prefix(_Reader(data[:PREFIX_BYTES]))


def load(data: bytes):
    """Deserialize any ``.sc*`` file, dispatching on its type byte."""
    return _LOADERS[file_type(data)](data)


def dump(value) -> bytes:
    if isinstance(value, PublicKey):
        return serialize_public_key(value)
    if isinstance(value, MasterKey):
        return serialize_master_key(value)
    if isinstance(value, UserSecretKey):
        return serialize_secret_key(value)
    if isinstance(value, Envelope):
        return serialize_envelope(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def describe(data: bytes) -> dict:
    """Non-secret summary of a serialized file, for ``inspect``."""
    kind = file_type(data)
    value = _LOADERS[kind](data)
    epoch = value.header.epoch if kind == TYPE_ENVELOPE else value.epoch
    info = {"type": TYPE_NAMES[kind], "version": FORMAT_VERSION, "size": len(data), "epoch": epoch}
    if kind in (TYPE_PUBLIC_KEY, TYPE_MASTER_KEY, TYPE_SECRET_KEY):
        info["parameter_set"] = value.ctx.name
    if kind == TYPE_SECRET_KEY:
        info["attributes"] = sorted(value.components)
    if kind == TYPE_ENVELOPE:
        hdr = value.header
        info.update(
            parameter_set=_header_context(hdr).name,
            policy=hdr.msp.policy,
            rows=hdr.msp.n_rows,
            columns=hdr.msp.n_cols,
            header_bytes=len(serialize_header(hdr)),
            payload_bytes=len(value.sealed) - TAG_BYTES,
        )
    return info
