"""Ciphertext-policy ABE over a Type-III pairing.

Two-slot construction with keys in G1 for attributes and G2 for the
randomizers.  ``encrypt_element``/``decrypt_element`` blind a GT element;
``encap``/``decap`` derive a 32-byte session key from the same blinding
factor instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import EpochMismatch, ModeMismatch, PolicyNotSatisfied
from .groups import GroupContext, attribute_label, index_label, pair
from .policy import Msp, reconstruct, validate_attributes

__all__ = [
    "AbeHeader",
    "MasterKey",
    "PublicKey",
    "UserSecretKey",
    "build_header",
    "decap",
    "decrypt_element",
    "derive_session_key",
    "encap",
    "encrypt_element",
    "keygen",
    "setup",
]

KEM_TAG = b"STARCAST-KEM-v1"
MODE_ELEMENT = "element"
MODE_KEM = "kem"
SESSION_KEY_BYTES = 32


@dataclass(frozen=True)
class PublicKey:
    ctx: GroupContext = field(repr=False)
    h: object = field(repr=False)
    t1: object = field(repr=False)
    h1: object = field(repr=False)
    t2: object = field(repr=False)
    h2: object = field(repr=False)
    epoch: int = 0


@dataclass(frozen=True)
class MasterKey:
    ctx: GroupContext = field(repr=False)
    alpha1: int = field(repr=False)
    beta1: int = field(repr=False)
    alpha2: int = field(repr=False)
    beta2: int = field(repr=False)
    delta1: int = field(repr=False)
    delta2: int = field(repr=False)
    delta3: int = field(repr=False)
    g: object = field(repr=False)
    h: object = field(repr=False)
    g_delta1: object = field(repr=False)
    g_delta2: object = field(repr=False)
    g_delta3: object = field(repr=False)
    epoch: int = 0

    @property
    def alphas(self) -> tuple[int, int]:
        return (self.alpha1, self.alpha2)

    @property
    def g_deltas(self):
        return (self.g_delta1, self.g_delta2)


@dataclass(frozen=True)
class UserSecretKey:
    """``sk0`` lives in G2; ``components[x]`` and ``sk_prime`` are G1 triples."""

    ctx: GroupContext = field(repr=False)
    sk0: tuple = field(repr=False)
    components: Mapping[str, tuple] = field(repr=False)
    sk_prime: tuple = field(repr=False)
    epoch: int = 0

    @property
    def attributes(self) -> frozenset[str]:
        return frozenset(self.components)


@dataclass(frozen=True)
class AbeHeader:
    msp: Msp
    c0: tuple = field(repr=False)
    rows: tuple = field(repr=False)
    mode: str = MODE_KEM
    c_prime: object = field(default=None, repr=False)
    epoch: int = 0

    def __post_init__(self):
        if len(self.rows) != self.msp.n_rows:
            raise ValueError("header row count does not match the span program")
        if self.mode not in (MODE_ELEMENT, MODE_KEM):
            raise ValueError(f"unknown header mode {self.mode!r}")
        if (self.mode == MODE_ELEMENT) != (self.c_prime is not None):
            raise ValueError("c_prime must be present exactly in element mode")


def setup(ctx: GroupContext, rng=None, epoch: int = 0) -> tuple[PublicKey, MasterKey]:
    a1, b1, a2, b2 = (ctx.random_scalar(rng, nonzero=True) for _ in range(4))
    d1, d2, d3 = (ctx.random_scalar(rng) for _ in range(3))
    g, h = ctx.g, ctx.h
    e_gh = pair(g, h)
    p = ctx.p
    pk = PublicKey(
        ctx=ctx,
        h=h,
        t1=e_gh ** ((d1 * a1 + d3) % p),
        h1=h**a1,
        t2=e_gh ** ((d2 * a2 + d3) % p),
        h2=h**a2,
        epoch=epoch,
    )
    mk = MasterKey(
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
        g_delta1=g**d1,
        g_delta2=g**d2,
        g_delta3=g**d3,
        epoch=epoch,
    )
    return pk, mk


def _hashed_triple_power(ctx, labels, e1, e2, e3):
    """H(l1)^e1 * H(l2)^e2 * H(l3)^e3 for the three per-slot labels."""
    return (ctx.hash_to_g1(labels[0]) ** e1) * (ctx.hash_to_g1(labels[1]) ** e2) * (ctx.hash_to_g1(labels[2]) ** e3)


def keygen(mk: MasterKey, attrs: Iterable[str], rng=None) -> UserSecretKey:
    ctx = mk.ctx
    p = ctx.p
    names = sorted(validate_attributes(attrs))
    rho1 = ctx.random_scalar(rng)
    rho2 = ctx.random_scalar(rng)
    h = mk.h
    sk0 = (h ** ((mk.beta1 * rho1) % p), h ** ((mk.beta2 * rho2) % p), h ** ((rho1 + rho2) % p))

    inv_alpha = [ctx.inverse(a) for a in mk.alphas]
    # Exponents of the three hash factors, already divided by alpha_t.
    exps = [
        (
            mk.beta1 * rho1 * inv_alpha[t] % p,
            mk.beta2 * rho2 * inv_alpha[t] % p,
            (rho1 + rho2) * inv_alpha[t] % p,
        )
        for t in range(2)
    ]

    components = {}
    for x in names:
        sigma = ctx.random_scalar(rng)
        pair_t = []
        for t in range(2):
            labels = [attribute_label(x, slot, t + 1) for slot in (1, 2, 3)]
            pair_t.append(_hashed_triple_power(ctx, labels, *exps[t]) * (mk.g ** (sigma * inv_alpha[t] % p)))
        components[x] = (pair_t[0], pair_t[1], mk.g ** (-sigma % p))

    sigma_p = ctx.random_scalar(rng)
    prime_t = []
    for t in range(2):
        labels = [index_label(1, slot, t + 1) for slot in (1, 2, 3)]
        prime_t.append(
            mk.g_deltas[t] * _hashed_triple_power(ctx, labels, *exps[t]) * (mk.g ** (sigma_p * inv_alpha[t] % p))
        )
    sk_prime = (prime_t[0], prime_t[1], mk.g_delta3 * (mk.g ** (-sigma_p % p)))
    return UserSecretKey(ctx=ctx, sk0=sk0, components=components, sk_prime=sk_prime, epoch=mk.epoch)


def build_header(pk: PublicKey, msp: Msp, s1: int, s2: int):
    """Deterministic part of encryption for fixed randomness ``s1, s2``.

    Returns ``(c0, rows, blind)`` where ``blind = T1^s1 * T2^s2``.
    """
    if msp.n_rows == 0:
        raise ValueError("span program has no rows")
    ctx = pk.ctx
    p = ctx.p
    c0 = (pk.h1**s1, pk.h2**s2, pk.h ** ((s1 + s2) % p))

    # Column factors H(0 j l 1)^s1 * H(0 j l 2)^s2, computed once per (j, l).
    column = {}
    used = {j for row in msp.rows for j, v in enumerate(row) if v}
    for j in used:
        for slot in (1, 2, 3):
            column[j, slot] = (ctx.hash_to_g1(index_label(j + 1, slot, 1)) ** s1) * (
                ctx.hash_to_g1(index_label(j + 1, slot, 2)) ** s2
            )

    rows = []
    for row, name in zip(msp.rows, msp.labels):
        triple = []
        for slot in (1, 2, 3):
            c = (ctx.hash_to_g1(attribute_label(name, slot, 1)) ** s1) * (
                ctx.hash_to_g1(attribute_label(name, slot, 2)) ** s2
            )
            for j, v in enumerate(row):
                if v == 1:
                    c = c * column[j, slot]
                elif v == -1:
                    c = c * column[j, slot].inverse()
            triple.append(c)
        rows.append(tuple(triple))
    blind = (pk.t1**s1) * (pk.t2**s2)
    return c0, tuple(rows), blind


def encrypt_element(pk: PublicKey, msp: Msp, m, rng=None) -> AbeHeader:
    s1 = pk.ctx.random_scalar(rng)
    s2 = pk.ctx.random_scalar(rng)
    c0, rows, blind = build_header(pk, msp, s1, s2)
    return AbeHeader(msp=msp, c0=c0, rows=rows, mode=MODE_ELEMENT, c_prime=blind * m, epoch=pk.epoch)


def derive_session_key(ctx: GroupContext, blind) -> bytes:
    """HKDF-SHA256 over the canonical GT encoding of the blinding factor."""
    hkdf = HKDF(algorithm=hashes.SHA256(), length=SESSION_KEY_BYTES, salt=None, info=KEM_TAG)
    return hkdf.derive(ctx.encode_gt(blind))


def encap(pk: PublicKey, msp: Msp, rng=None) -> tuple[AbeHeader, bytes]:
    s1 = pk.ctx.random_scalar(rng)
    s2 = pk.ctx.random_scalar(rng)
    c0, rows, blind = build_header(pk, msp, s1, s2)
    header = AbeHeader(msp=msp, c0=c0, rows=rows, mode=MODE_KEM, epoch=pk.epoch)
    return header, derive_session_key(pk.ctx, blind)


def _unblind(hdr: AbeHeader, sk: UserSecretKey):
    """Recover T1^s1 * T2^s2 from the header with exactly six pairings."""
    if hdr.epoch != sk.epoch:
        raise EpochMismatch(sk.epoch, hdr.epoch)
    ctx = sk.ctx
    rec = reconstruct(hdr.msp, sk.attributes, ctx.p)
    if rec is None:
        raise PolicyNotSatisfied()

    c_acc = [ctx.identity_g1() for _ in range(3)]
    k_acc = list(sk.sk_prime)
    for i, gamma in rec.items():
        comp = sk.components[hdr.msp.labels[i]]
        for slot in range(3):
            c_acc[slot] = c_acc[slot] * (hdr.rows[i][slot] ** gamma)
            k_acc[slot] = k_acc[slot] * (comp[slot] ** gamma)

    num = pair(c_acc[0], sk.sk0[0]) * pair(c_acc[1], sk.sk0[1]) * pair(c_acc[2], sk.sk0[2])
    den = pair(k_acc[0], hdr.c0[0]) * pair(k_acc[1], hdr.c0[1]) * pair(k_acc[2], hdr.c0[2])
    # num / den = (T1^s1 T2^s2)^-1, so the blind is den / num.
    return den * num.inverse()


def decrypt_element(hdr: AbeHeader, sk: UserSecretKey):
    if hdr.mode != MODE_ELEMENT:
        raise ModeMismatch("header was produced in KEM mode")
    return hdr.c_prime * _unblind(hdr, sk).inverse()


def decap(hdr: AbeHeader, sk: UserSecretKey) -> bytes:
    if hdr.mode != MODE_KEM:
        raise ModeMismatch("header was produced in element mode")
    return derive_session_key(sk.ctx, _unblind(hdr, sk))

