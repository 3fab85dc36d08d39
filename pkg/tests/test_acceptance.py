"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
repeated in the terminal summary of any run that includes this module.
"""

import gc
import itertools
import random
import threading
import time

import numpy as np
import pytest

import golden
from conftest import ACCEPTANCE_LINES, TEAM_POLICY, S1, S4
from helpers import bool_eval, combine_rows, is_target, leaf_names, random_formula, subsets
from starcast import abe
from starcast.authority import Registry
from starcast.envelope import (
    HEADER_FIXED_BYTES,
    Envelope,
    dump,
    load,
    open_envelope,
    seal,
    serialize_header,
)
from starcast.errors import (
    AuthenticationFailure,
    EpochMismatch,
    MalformedInput,
    PolicyNotSatisfied,
)
from starcast.groups import count_pairings, generate_context
from starcast.lathare import Receiver, run_sender
from starcast.linksim import (
    SatelliteParams,
    place_users,
    received_power,
    simulate,
    tx_gain,
    user_rate,
    beam_radius,
)
from starcast.policy import compile_policy, reconstruct, render, to_msp

C = 299_792_458.0


def report(n, title, ok, detail=""):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def system():
    ctx = generate_context("128-bit")
    pk, mk = abe.setup(ctx, random.Random(1000))
    return ctx, pk, mk


# 1 -------------------------------------------------------------------------


def test_01_scheme_correctness(system):
    ctx, pk, mk = system
    rng = random.Random(1)
    start = time.perf_counter()
    good = bad = failures = 0
    while good < 200 or bad < 200:
        node = random_formula(rng, rng.randint(1, 8))
        names = sorted(set(leaf_names(node)))
        attrs = set(rng.sample(names, rng.randint(0, len(names))))
        if rng.random() < 0.3:
            attrs.add("Outsider")
        want = bool_eval(node, attrs)
        if (want and good >= 200) or (not want and bad >= 200):
            continue
        msp = to_msp(node)
        m = ctx.gt_generator() ** ctx.random_scalar(rng)
        hdr = abe.encrypt_element(pk, msp, m, rng)
        sk = abe.keygen(mk, attrs, rng)
        if want:
            good += 1
            failures += abe.decrypt_element(hdr, sk) != m
        else:
            bad += 1
            try:
                abe.decrypt_element(hdr, sk)
                failures += 1
            except PolicyNotSatisfied:
                pass
    elapsed = time.perf_counter() - start
    report(1, "scheme correctness on 200 accepting + 200 rejecting random cases",
           failures == 0 and elapsed < 60, f"{failures} failures, {elapsed:.1f} s")


# 2 -------------------------------------------------------------------------


def test_02_worked_example(system):
    ctx, pk, mk = system
    msp = compile_policy(TEAM_POLICY)
    env = seal(pk, TEAM_POLICY, b"team briefing")
    opened = open_envelope(env, abe.keygen(mk, S1)) == b"team briefing"
    try:
        open_envelope(env, abe.keygen(mk, S4))
        rejected = False
    except PolicyNotSatisfied:
        rejected = True
    report(2, "team policy: S1 opens, S4 is refused", opened and rejected and msp.n_rows == 4,
           f"S1 opened={opened}, S4 refused={rejected}")


# 3 -------------------------------------------------------------------------


def test_03_msp_oracle_equivalence():
    rng = random.Random(3)
    mismatches = bad_recon = checked = 0
    for _ in range(100):
        node = random_formula(rng, rng.randint(1, 10))
        msp = to_msp(node)
        for s in subsets(leaf_names(node)):
            checked += 1
            rec = reconstruct(msp, s)
            mismatches += (rec is not None) != bool_eval(node, s)
            if rec is not None and not is_target(combine_rows(msp, rec)):
                bad_recon += 1
    report(3, "MSP acceptance equals brute-force evaluation on 100 formulas",
           mismatches == 0 and bad_recon == 0, f"{checked} subsets, {mismatches} mismatches, {bad_recon} bad γ")


# 4 -------------------------------------------------------------------------


def _policy_with(n_leaves, key_size):
    """Policy with ``n_leaves`` leaves satisfied by {k0 .. k(key_size-1)}."""
    if n_leaves <= key_size:
        return " AND ".join(f"k{i}" for i in range(n_leaves))
    extra = " OR ".join(f"x{i}" for i in range(n_leaves - 1))
    return f"k0 OR {extra}" if n_leaves > 1 else "k0"


def test_04_constant_pairings(system):
    ctx, pk, mk = system
    counts = set()
    for key_size in (1, 10, 100):
        sk = abe.keygen(mk, [f"k{i}" for i in range(key_size)])
        for n1 in (1, 10, 100):
            msp = compile_policy(_policy_with(n1, key_size))
            assert msp.n_rows == n1
            hdr, _ = abe.encap(pk, msp)
            with count_pairings() as c:
                abe.decap(hdr, sk)
            counts.add(c.count)
            ehdr = abe.encrypt_element(pk, msp, ctx.gt_generator())
            with count_pairings() as c:
                abe.decrypt_element(ehdr, sk)
            counts.add(c.count)
    report(4, "decrypt/decap use exactly 6 pairings for |S|, n1 in {1,10,100}", counts == {6},
           f"observed counts {sorted(counts)}")


# 5 -------------------------------------------------------------------------


def _r_squared(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    fit = np.polyval(np.polyfit(x, y, 1), x)
    return 1.0 - ((y - fit) ** 2).sum() / ((y - y.mean()) ** 2).sum()


@pytest.mark.slow
def test_05_linear_scaling(system):
    ctx, pk, mk = system
    sizes = list(range(10, 101, 10))
    attrs = {n: [f"attr{i}" for i in range(n)] for n in sizes}
    msps = {n: compile_policy(" AND ".join(attrs[n])) for n in sizes}
    times = {k: {n: [] for n in sizes} for k in ("keygen", "encrypt", "setup")}
    rng = random.Random(5)
    gc.disable()
    try:
        # Interleave sizes inside each repetition so slow drift in machine load
        # spreads evenly instead of biasing the largest sizes.
        for _ in range(20):
            order = sizes[:]
            rng.shuffle(order)
            for n in order:
                t = time.perf_counter()
                abe.keygen(mk, attrs[n])
                times["keygen"][n].append(time.perf_counter() - t)
                t = time.perf_counter()
                abe.encap(pk, msps[n])
                times["encrypt"][n].append(time.perf_counter() - t)
                t = time.perf_counter()
                abe.setup(ctx)
                times["setup"][n].append(time.perf_counter() - t)
    finally:
        gc.enable()
    # Best-of-reps estimates the intrinsic cost; scheduler noise only adds time.
    best = {k: [min(v[n]) for n in sizes] for k, v in times.items()}
    r2_kg = _r_squared(sizes, best["keygen"])
    r2_enc = _r_squared(sizes, best["encrypt"])
    spread = max(best["setup"]) / min(best["setup"])
    report(5, "keygen/encrypt linear in attributes, setup attribute-independent",
           r2_kg >= 0.98 and r2_enc >= 0.98 and spread < 2.0,
           f"R² keygen {r2_kg:.4f}, encrypt {r2_enc:.4f}; setup max/min {spread:.2f}")


# 6 -------------------------------------------------------------------------


def test_06_size_law(system):
    ctx, pk, mk = system
    errors = []
    for n1 in (1, 4, 16, 64):
        msp = compile_policy(" AND ".join(f'"a{i}"' for i in range(n1)))
        framing = HEADER_FIXED_BYTES + len(msp.policy.encode())
        hdr, _ = abe.encap(pk, msp)
        if len(serialize_header(hdr)) != 3 * n1 * 49 + 3 * 97 + framing:
            errors.append(("kem", n1))
        ehdr = abe.encrypt_element(pk, msp, ctx.gt_generator())
        if len(serialize_header(ehdr)) != 3 * n1 * 49 + 3 * 97 + 384 + framing:
            errors.append(("element", n1))
    report(6, "header size = 3·n1·|G1| + 3·|G2| (+|GT|) + framing", not errors, f"mismatches {errors}")


# 7 -------------------------------------------------------------------------


def test_07_collusion(system):
    ctx, pk, mk = system
    rng = random.Random(7)
    splits = hybrids = leaks = 0
    while splits < 50:
        node = random_formula(rng, rng.randint(2, 6), alphabet=list("ABCDEF"))
        names = sorted(set(leaf_names(node)))
        satisfying = [s for s in subsets(names) if bool_eval(node, s)]
        if not satisfying:
            continue
        s = sorted(rng.choice(satisfying))
        owner = {x: rng.choice(("A", "B", "AB")) for x in s}
        a = {x for x in s if "A" in owner[x]}
        b = {x for x in s if "B" in owner[x]}
        if bool_eval(node, a) or bool_eval(node, b):
            continue
        splits += 1
        ka, kb = abe.keygen(mk, a, rng), abe.keygen(mk, b, rng)
        env = seal(pk, render(node), b"collusion probe", rng)
        shared = sorted(a & b)
        for sk0_src, skp_src in itertools.product((ka, kb), repeat=2):
            for picks in itertools.product((ka, kb), repeat=len(shared)):
                comps = {**ka.components, **kb.components}
                comps.update({x: src.components[x] for x, src in zip(shared, picks)})
                hybrid = abe.UserSecretKey(ctx=ctx, sk0=sk0_src.sk0, components=comps,
                                           sk_prime=skp_src.sk_prime, epoch=ka.epoch)
                hybrids += 1
                try:
                    open_envelope(env, hybrid)
                    leaks += 1
                except (AuthenticationFailure, PolicyNotSatisfied):
                    pass
    report(7, "mix-and-match keys from 50 colluding splits never open", leaks == 0,
           f"{hybrids} hybrid keys, {leaks} opened")


# 8 -------------------------------------------------------------------------


def _opens(env, sk):
    try:
        return open_envelope(env, sk) is not None
    except (EpochMismatch, PolicyNotSatisfied, AuthenticationFailure):
        return False


def test_08_backward_secrecy_and_revocation(tmp_path):
    reg = Registry.create(tmp_path / "ks")
    reg.register_user("vera", ["Alpha", "Leader"])
    reg.register_user("mallory", ["Alpha", "Leader"])
    pre_join = seal(reg.public_key, TEAM_POLICY, b"before uma")
    _, uma = reg.register_user("uma", ["Alpha", "Leader"])
    mallory_old = reg.load_user_key("mallory")
    reg.revoke_user("mallory")
    post_revoke = seal(reg.public_key, TEAM_POLICY, b"after mallory")
    vera = reg.load_user_key("vera")
    uma_now = reg.load_user_key("uma")
    checks = {
        "new user cannot open pre-join": not _opens(pre_join, uma),
        "new user (current key) cannot open pre-join": not _opens(pre_join, uma_now),
        "revoked user cannot open post-revocation": not _opens(post_revoke, mallory_old),
        "remaining user opens post-revocation": _opens(post_revoke, vera),
        "new user opens post-revocation": _opens(post_revoke, uma_now),
    }
    report(8, "backward secrecy and revocation epochs", all(checks.values()),
           ", ".join(k for k, v in checks.items() if not v) or f"epoch {reg.epoch}")


# 9 -------------------------------------------------------------------------


def test_09_link_math():
    p = SatelliteParams()
    lam = C / 12e9
    n0 = 10 ** (-174 / 10) * 1e-3
    worst = 0.0
    rng = random.Random(9)
    for _ in range(200):
        theta = rng.uniform(p.min_beamwidth_deg, 60.0)
        h = rng.uniform(300e3, 1200e3)
        pt = rng.uniform(1.0, 100.0)
        pairs = [
            (beam_radius(h, theta), h * np.tan(np.deg2rad(theta) / 2)),
            (tx_gain(theta, 0.7), 0.7 * (70 * np.pi / theta) ** 2),
            (received_power(p, theta, pt), 0.5 * 0.7 * (70 * np.pi / theta) ** 2 * 1000 * pt
             * (lam / (4 * np.pi * 550e3)) ** 2),
        ]
        pr = received_power(p, theta)
        pairs.append((user_rate(pr, 1e9, n0), 1e9 * np.log2(1 + pr / (n0 * 1e9))))
        worst = max(worst, max(abs(a - b) / abs(b) for a, b in pairs))
    g = tx_gain(1.0, 0.7)
    pr = received_power(p, 1.0)
    spread_db = 20 * np.log10(lam / (4 * np.pi * 550e3))
    pr_dbw = 10 * np.log10(g) + 30 + 13 - 10 * np.log10(2) + spread_db
    snr_db = pr_dbw + 30 - (-174 + 90)
    chain = {
        "G≈3.385e4": abs(g - 3.385e4) / 3.385e4 < 5e-4,
        "P_r≈4.42e-9 W": abs(pr - 4.42e-9) / 4.42e-9 < 5e-3,
        "dB cross-check": abs(10 * np.log10(pr) - pr_dbw) < 0.1,
        "SNR≈30.5 dB": abs(10 * np.log10(pr / (n0 * 1e9)) - 30.5) < 0.1 and abs(snr_db - 30.5) < 0.1,
    }
    report(9, "link formulas match independent evaluation; default-parameter chain holds",
           worst < 1e-9 and all(chain.values()),
           f"max rel err {worst:.1e}; G={g:.4g}, P_r={pr:.4g} W, SNR={10 * np.log10(pr / (n0 * 1e9)):.2f} dB")


# 10 ------------------------------------------------------------------------


def test_10_framework_ordering():
    params = SatelliteParams()
    failures = []
    for n, m in itertools.product((40, 80, 160), (4, 8, 16)):
        scen = place_users(42, n, m, 8e3, params.max_beam_radius_m)
        for g in range(1, m + 1):
            rep = simulate(scen, params, g)
            gc_rate = rep["groupcast"].sum_rate_bps
            if not (gc_rate > rep["broadcast"].sum_rate_bps and gc_rate > rep["unicast"].sum_rate_bps):
                failures.append((n, m, g))
    gains = []
    for n in (40, 80, 160):
        scen = place_users(42, n, 2, 30e3, params.max_beam_radius_m)
        for g in (1, 2):
            rep = simulate(scen, params, g)
            gains.append(rep["groupcast"].sum_rate_bps / rep["broadcast"].sum_rate_bps)
            if rep["groupcast"].sum_rate_bps < rep["broadcast"].sum_rate_bps:
                failures.append((n, 2, g))
    report(10, "groupcast beats broadcast and unicast; M=2 wide clusters groupcast >= broadcast",
           not failures, f"failures {failures}; M=2 gain range {min(gains):.2f}-{max(gains):.2f}x")


# 11 ------------------------------------------------------------------------


def test_11_latency_harness(system):
    ctx, pk, mk = system
    payload = dump(seal(pk, TEAM_POLICY, b"probe body " * 20))
    outcome = {}
    for label, attrs in (("satisfying", S1), ("non-satisfying", S4)):
        key = abe.keygen(mk, attrs)
        with Receiver(host="127.0.0.1", key=key) as rx:
            box = {}
            t = threading.Thread(target=lambda: box.setdefault("r", rx.serve(max_probes=100, idle_timeout=15)))
            t.start()
            res = run_sender(("127.0.0.1", rx.port), count=100, rate=500, payload=payload, timeout=2.0)
            t.join(30)
        records = box.get("r", [])
        ok_share = sum(r.open_result == "ok" for r in records) / 100
        outcome[label] = (res.stats, ok_share, len(records))
    sat, non = outcome["satisfying"], outcome["non-satisfying"]
    ok = (sat[0].loss == 0 and non[0].loss == 0 and sat[0].ordered() and non[0].ordered()
          and sat[2] == non[2] == 100 and sat[1] == 1.0 and non[1] == 0.0)
    report(11, "loopback echo of 100 envelope probes: no loss, ordered stats, 100%/0% opens", ok,
           f"loss {sat[0].loss}/{non[0].loss}, p99 {sat[0].p99_ms:.2f} ms, opens {sat[1]:.0%}/{non[1]:.0%}")


# 12 ------------------------------------------------------------------------


def test_12_serialization(system):
    ctx, pk, mk = system
    frozen = {p.name: p.read_bytes() for p in golden.GOLDEN_DIR.iterdir()}
    golden_ok = golden.golden_values() == frozen

    rng = random.Random(12)
    names = ["Alpha", "Beta", "Blue", "Leader", "Member", "Red", "Green"]
    roundtrip_fail = 0
    for i in range(500):
        kind = i % 4
        if kind == 0:
            value = abe.setup(ctx, rng, epoch=rng.randint(0, 2**32 - 1))[rng.randint(0, 1)]
        elif kind == 1:
            value = abe.keygen(mk, rng.sample(names, rng.randint(0, len(names))), rng)
        else:
            node = random_formula(rng, rng.randint(1, 6), alphabet=names)
            value = seal(pk, render(node), rng.randbytes(rng.randint(0, 200)), rng)
        data = dump(value)
        back = load(data)
        same = dump(back) == data
        if isinstance(value, Envelope):
            same = same and back.header == value.header and back.sealed == value.sealed
        elif isinstance(value, abe.UserSecretKey):
            same = same and dict(back.components) == dict(value.components) and back.sk_prime == value.sk_prime
        else:
            same = same and back == value
        roundtrip_fail += not same

    fixtures = golden.malformed_fixtures()
    accepted = []
    for name, data in fixtures.items():
        try:
            load(data)
            accepted.append(name)
        except MalformedInput:
            pass
    report(12, "golden vectors, 500 roundtrips, malformed fixtures rejected",
           golden_ok and roundtrip_fail == 0 and not accepted,
           f"golden={'equal' if golden_ok else 'DIFFERENT'}, {roundtrip_fail} roundtrip failures, "
           f"{len(fixtures) - len(accepted)}/{len(fixtures)} malformed rejected")
