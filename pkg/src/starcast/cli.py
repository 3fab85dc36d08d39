"""``starcast`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 crypto/policy failure, 3 I/O or
malformed file.  Diagnostics go to stderr; stdout carries only the command's
machine-readable output (or plaintext for ``open``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from .errors import (
    AuthenticationFailure,
    EpochMismatch,
    InvalidAttribute,
    KeystoreUnavailable,
    MalformedInput,
    ModeMismatch,
    PolicyNotSatisfied,
    PolicySyntaxError,
    StarcastError,
    UnsupportedSecurityLevel,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CRYPTO = 2
EXIT_IO = 3

KEYSTORE_ENV = "STARCAST_KEYSTORE"

log = logging.getLogger("starcast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _keystore(args) -> Path:
    path = args.keystore or os.environ.get(KEYSTORE_ENV)
    if not path:
        raise UsageError(f"--keystore is required (or set {KEYSTORE_ENV})")
    return Path(path)


def _attrs(text: str) -> list[str]:
    items = [a.strip() for a in text.split(",")]
    if any(not a for a in items):
        raise UsageError("--attrs must be a comma-separated list of non-empty names")
    return items


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _write_out(path, data: bytes | str) -> None:
    if isinstance(data, str):
        data = data.encode()
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        Path(path).write_bytes(data)


def _sibling(out, suffix: str) -> Path:
    if out in (None, "-"):
        return Path("rates" + suffix)
    out = Path(out)
    return out.with_name(out.stem + suffix)


def _read_in(path) -> bytes:
    if path in (None, "-"):
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


# ---------------------------------------------------------------------------
# Key management
# ---------------------------------------------------------------------------


def cmd_setup(args):
    from .authority import Registry

    reg = Registry.create(_keystore(args), security_level=args.security_level, force=args.force)
    print(json.dumps({"keystore": str(reg.root), "epoch": reg.epoch, "public_key": str(reg.public_key_path())}))


def cmd_user_add(args):
    from .authority import Registry

    reg = Registry.load(_keystore(args))
    user_id, _ = reg.register_user(args.name, _attrs(args.attrs))
    print(json.dumps({"id": user_id, "name": args.name, "epoch": reg.epoch, "key": str(reg.key_path(args.name))}))


def cmd_user_revoke(args):
    from .authority import Registry

    reg = Registry.load(_keystore(args))
    ident = int(args.user) if args.user.isdigit() else args.user
    reg.revoke_user(ident)
    print(json.dumps({"revoked": args.user, "epoch": reg.epoch}))


def cmd_user_list(args):
    from .authority import Registry

    reg = Registry.load(_keystore(args))
    if args.json:
        print(json.dumps({"epoch": reg.epoch, "users": [u.to_json() for u in reg.users]}, indent=2))
        return
    print("id\tname\tstatus\tkey_epoch\tattributes")
    for u in reg.users:
        key_epoch = "" if u.key_epoch is None else u.key_epoch
        print(f"{u.user_id}\t{u.name}\t{u.status}\t{key_epoch}\t{','.join(u.attributes)}")


# ---------------------------------------------------------------------------
# Sealing
# ---------------------------------------------------------------------------


def cmd_seal(args):
    from .authority import Registry
    from .envelope import deserialize_public_key, dump, seal

    if args.pk:
        pk = deserialize_public_key(Path(args.pk).read_bytes())
    else:
        pk = Registry.load(_keystore(args)).public_key
    env = seal(pk, args.policy, _read_in(args.input))
    _write_out(args.out, dump(env))


def cmd_open(args):
    from .envelope import deserialize_envelope, deserialize_secret_key, open_envelope

    sk = deserialize_secret_key(Path(args.key).read_bytes())
    env = deserialize_envelope(_read_in(args.input))
    _write_out(args.out, open_envelope(env, sk))


def cmd_inspect(args):
    from .envelope import describe

    print(json.dumps(describe(_read_in(args.file)), indent=2))


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _scenario_config(args):
    from .linksim import ScenarioConfig

    config = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    return config.with_overrides(
        seed=args.seed,
        users=getattr(args, "users", None),
        groups=getattr(args, "groups", None),
        cluster_spread_m=getattr(args, "spread", None),
    )


def cmd_simulate(args):
    from . import linksim

    config = _scenario_config(args)
    scenario = config.scenario()
    groups = range(1, scenario.n_groups + 1) if args.group == "all" else [int(args.group)]
    reports = [linksim.simulate(scenario, config.params, g, config.channel) for g in groups]
    _write_out(args.out, linksim.rates_csv(reports))
    if args.users_csv:
        Path(args.users_csv).write_text(linksim.per_user_csv(scenario, reports))
    if args.figure:
        from .plotting import plot_coverage

        plot_coverage(scenario, args.figure, reports)
    if args.sweep:
        sweep = linksim.sweep_users(config, _int_list(args.sweep), group=reports[0].group)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["total_users", *linksim.RATE_COLUMNS])
        for n, rep in sweep:
            writer.writerows([n, *row] for row in rep.rows())
        sweep_path = args.sweep_out or _sibling(args.out, "-sweep.csv")
        Path(sweep_path).write_text(buf.getvalue())
        if args.sweep_figure:
            from .plotting import plot_rate_sweep

            plot_rate_sweep(sweep, args.sweep_figure, title=f"{config.groups} groups")


def cmd_place_users(args):
    from .linksim import place_users

    config = _scenario_config(args)
    scenario = place_users(config.seed, config.users, config.groups, config.cluster_spread_m,
                           args.radius if args.radius is not None else config.params.max_beam_radius_m)
    _write_out(args.out, scenario.users_csv())
    if args.figure:
        from .plotting import plot_coverage

        plot_coverage(scenario, args.figure)


# ---------------------------------------------------------------------------
# Latency
# ---------------------------------------------------------------------------


def _target(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"target must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def cmd_latency_send(args):
    from .lathare import records_csv, run_sender

    if args.envelope:
        payload = Path(args.envelope).read_bytes()
    else:
        payload = bytes(args.filler)
    result = run_sender(_target(args.target), mode=args.mode, rate=args.rate, count=args.count,
                        payload=payload, broadcast=args.broadcast, budget=args.budget, timeout=args.timeout)
    if args.csv:
        Path(args.csv).write_text(records_csv(result.records))
    summary = result.stats.to_json()
    if args.summary:
        Path(args.summary).write_text(summary + "\n")
    if args.figure:
        from .plotting import plot_latency

        plot_latency(result.records, args.figure)
    print(summary)


def cmd_latency_recv(args):
    from collections import Counter

    from .envelope import deserialize_secret_key
    from .lathare import records_csv, run_receiver

    key = deserialize_secret_key(Path(args.key).read_bytes()) if args.key else None
    records = run_receiver(args.port, key=key, mode=args.mode, host=args.bind,
                           max_probes=args.count, idle_timeout=args.idle_timeout)
    if args.csv:
        Path(args.csv).write_text(records_csv(records))
    outcomes = Counter(r.open_result for r in records)
    print(json.dumps({"received": len(records), "open_results": dict(outcomes)}))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="starcast", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def keystore_arg(p):
        p.add_argument("--keystore", help=f"keystore directory (default ${KEYSTORE_ENV})")

    p = sub.add_parser("setup", help="create a keystore with a fresh master key")
    keystore_arg(p)
    p.add_argument("--security-level", default="128-bit")
    p.add_argument("--force", action="store_true", help="overwrite an existing keystore")
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("user-add", help="register a user (rotates the master key)")
    keystore_arg(p)
    p.add_argument("--name", required=True)
    p.add_argument("--attrs", required=True, help="comma-separated attributes")
    p.set_defaults(func=cmd_user_add)

    p = sub.add_parser("user-revoke", help="revoke a user (rotates the master key)")
    keystore_arg(p)
    p.add_argument("--user", required=True, help="user name or numeric id")
    p.set_defaults(func=cmd_user_revoke)

    p = sub.add_parser("user-list", help="list registered users")
    keystore_arg(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_user_list)

    p = sub.add_parser("seal", help="encrypt a file under an access policy")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--keystore")
    src.add_argument("--pk", help="public key file (.scpk)")
    p.add_argument("--policy", required=True)
    p.add_argument("--in", dest="input", default="-")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_seal)

    p = sub.add_parser("open", help="decrypt an envelope with a user key")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="input", default="-")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_open)

    p = sub.add_parser("inspect", help="print the non-secret header of a .sc* file")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("simulate", help="sum rates for unicast, broadcast and groupcast")
    p.add_argument("--config", help="scenario JSON")
    p.add_argument("--group", default="1", help="legitimate group index, or 'all'")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed (default 42)")
    p.add_argument("--out", default="-")
    p.add_argument("--users-csv", help="per-user SNR/rate CSV")
    p.add_argument("--figure", help="beam coverage figure (png/pdf/svg)")
    p.add_argument("--sweep", help="comma-separated user counts for a rate sweep")
    p.add_argument("--sweep-out", help="sweep CSV path")
    p.add_argument("--sweep-figure", help="sweep figure path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("place-users", help="generate a clustered user layout")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--users", type=int)
    p.add_argument("--groups", type=int)
    p.add_argument("--spread", type=float, help="cluster spread (m)")
    p.add_argument("--radius", type=float, help="service area radius (m)")
    p.add_argument("--out", default="-")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_place_users)

    p = sub.add_parser("latency-send", help="send UDP probes and report latency")
    p.add_argument("--target", required=True, help="host:port")
    p.add_argument("--mode", choices=["echo-rtt", "one-way"], default="echo-rtt")
    p.add_argument("--rate", type=float, default=50.0, help="probes per second")
    p.add_argument("--count", type=int, default=100)
    body = p.add_mutually_exclusive_group()
    body.add_argument("--envelope", help="sealed envelope sent as every probe payload")
    body.add_argument("--filler", type=int, default=64, help="filler payload size in bytes")
    p.add_argument("--broadcast", action="store_true")
    p.add_argument("--budget", type=int, default=1200, help="datagram size budget")
    p.add_argument("--timeout", type=float, default=1.0)
    p.add_argument("--csv")
    p.add_argument("--summary")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_latency_send)

    p = sub.add_parser("latency-recv", help="receive probes, echo and open envelopes")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--bind", default="0.0.0.0")
    p.add_argument("--key", help="user secret key for opening envelopes")
    p.add_argument("--mode", choices=["echo-rtt", "one-way"], default="echo-rtt")
    p.add_argument("--count", type=int, help="stop after this many probes")
    p.add_argument("--idle-timeout", type=float, default=10.0)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_latency_recv)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, PolicySyntaxError, InvalidAttribute, UnsupportedSecurityLevel)):
        return EXIT_USAGE
    if isinstance(exc, (PolicyNotSatisfied, AuthenticationFailure, EpochMismatch, ModeMismatch)):
        return EXIT_CRYPTO
    if isinstance(exc, (MalformedInput, KeystoreUnavailable, OSError)):
        return EXIT_IO
    # Registry misuse, bad config values and other library errors.
    return EXIT_USAGE


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, StarcastError, OSError, ValueError) as exc:
        print(f"starcast {args.command}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
