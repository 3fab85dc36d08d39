"""Link-budget and sum-rate model for unicast, broadcast and groupcast beams.

All angles are beamwidths in degrees; distances in meters; powers in watts.
The default channel is deterministic line of sight.  ``Channel("rician", k)``
averages the Shannon rate over seeded Rician power draws instead.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

FRAMEWORKS = ("unicast", "broadcast", "groupcast")


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class SatelliteParams:
    height_m: float = 550e3
    frequency_hz: float = 12e9
    bandwidth_hz: float = 1e9
    tx_power_w: float = db_to_linear(13.0)
    rx_gain: float = db_to_linear(30.0)
    efficiency: float = 0.7
    attenuation: float = 1.0
    noise_density_w_per_hz: float = db_to_linear(-174.0) * 1e-3
    antenna_diameter_m: float = 0.5
    max_beam_radius_m: float = 100e3

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{f.name} must be a positive finite number, got {value!r}")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def min_beamwidth_deg(self) -> float:
        """Aperture-limited beamwidth floor, 70 * lambda / D degrees."""
        return 70.0 * self.wavelength_m / self.antenna_diameter_m

    @property
    def noise_power_w(self) -> float:
        return self.noise_density_w_per_hz * self.bandwidth_hz


# ---------------------------------------------------------------------------
# Link formulas
# ---------------------------------------------------------------------------


def beam_radius(height_m: float, beamwidth_deg: float) -> float:
    if not 0 < beamwidth_deg < 180:
        raise ValueError("beamwidth must be in (0, 180) degrees")
    return height_m * math.tan(math.radians(beamwidth_deg) / 2.0)


def beamwidth_for_radius(height_m: float, radius_m: float) -> float:
    return math.degrees(2.0 * math.atan(radius_m / height_m))


def tx_gain(beamwidth_deg: float, efficiency: float) -> float:
    if beamwidth_deg <= 0:
        raise ValueError("beamwidth must be positive")
    return efficiency * (70.0 * math.pi / beamwidth_deg) ** 2


def received_power(params: SatelliteParams, beamwidth_deg: float, tx_power_w: float | None = None) -> float:
    """Friis received power with the half-power factor and beamwidth gain model."""
    pt = params.tx_power_w if tx_power_w is None else tx_power_w
    spread = (params.wavelength_m / (4.0 * math.pi * params.height_m)) ** 2
    return 0.5 * params.attenuation * tx_gain(beamwidth_deg, params.efficiency) * params.rx_gain * pt * spread


def user_rate(rx_power_w: float, bandwidth_hz: float, noise_density: float) -> float:
    return bandwidth_hz * math.log2(1.0 + rx_power_w / (noise_density * bandwidth_hz))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

_EPS = 1e-12


def _circle_two(a, b):
    cx, cy = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
    return (cx, cy, math.hypot(a[0] - cx, a[1] - cy))


def _circle_three(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < _EPS:
        return None
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    return (ux, uy, math.hypot(ax - ux, ay - uy))


def _inside(circle, p):
    return math.hypot(p[0] - circle[0], p[1] - circle[1]) <= circle[2] * (1 + 1e-12) + 1e-9


def _circle_from_boundary(boundary):
    if not boundary:
        return (0.0, 0.0, 0.0)
    if len(boundary) == 1:
        return (boundary[0][0], boundary[0][1], 0.0)
    if len(boundary) == 2:
        return _circle_two(*boundary)
    circle = _circle_three(*boundary)
    if circle is None:
        # Collinear support points: the widest pair spans the circle.
        pairs = [(boundary[i], boundary[j]) for i in range(3) for j in range(i + 1, 3)]
        return max((_circle_two(a, b) for a, b in pairs), key=lambda c: c[2])
    return circle


def min_enclosing_circle(points: Sequence[Sequence[float]], seed: int = 0) -> tuple[tuple[float, float], float]:
    """Smallest circle containing ``points``; randomized incremental (Welzl) method.

    Returns ``((cx, cy), radius)``.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if not pts:
        raise ValueError("need at least one point")
    random.Random(seed).shuffle(pts)
    c = (pts[0][0], pts[0][1], 0.0)
    for i, p in enumerate(pts):
        if _inside(c, p):
            continue
        c = (p[0], p[1], 0.0)
        for j in range(i):
            q = pts[j]
            if _inside(c, q):
                continue
            c = _circle_two(p, q)
            for k in range(j):
                r = pts[k]
                if not _inside(c, r):
                    c = _circle_from_boundary([p, q, r])
    return (c[0], c[1]), c[2]


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Channel:
    model: str = "los"
    k_factor: float = 10.0
    realizations: int = 200

    def __post_init__(self):
        if self.model not in ("los", "rician"):
            raise ValueError(f"unknown channel model {self.model!r}")
        if self.k_factor < 0 or self.realizations < 1:
            raise ValueError("k_factor must be >= 0 and realizations >= 1")


@dataclass(frozen=True)
class Scenario:
    seed: int
    positions: tuple[tuple[float, float], ...]
    groups: tuple[int, ...]
    n_groups: int
    area_radius_m: float
    cluster_spread_m: float = 0.0
    centers: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if len(self.positions) != len(self.groups):
            raise ValueError("positions and group assignments differ in length")
        if any(not 1 <= g <= self.n_groups for g in self.groups):
            raise ValueError("group ids must lie in 1..n_groups")
        for x, y in self.positions:
            if math.hypot(x, y) > self.area_radius_m * (1 + 1e-12):
                raise ValueError("user outside the service area")

    @property
    def n_users(self) -> int:
        return len(self.positions)

    def members(self, group: int) -> list[int]:
        return [i for i, g in enumerate(self.groups) if g == group]

    def group_sizes(self) -> dict[int, int]:
        return {m: len(self.members(m)) for m in range(1, self.n_groups + 1)}

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def users_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["user", "x_m", "y_m", "group"])
        for i, ((x, y), g) in enumerate(zip(self.positions, self.groups)):
            w.writerow([i, repr(x), repr(y), g])
        return buf.getvalue()


def place_users(seed: int, n_users: int, n_groups: int, cluster_spread: float, area_radius: float) -> Scenario:
    """Gaussian clusters around uniform-in-disc centers, deterministic per seed."""
    if n_users < 1 or n_groups < 1:
        raise ValueError("need at least one user and one group")
    if n_groups > n_users:
        raise ValueError("more groups than users")
    if area_radius <= 0 or cluster_spread < 0:
        raise ValueError("area_radius must be positive and cluster_spread non-negative")
    rng = np.random.default_rng(seed)
    centers = []
    for _ in range(n_groups):
        r = area_radius * math.sqrt(rng.random())
        phi = 2.0 * math.pi * rng.random()
        centers.append((r * math.cos(phi), r * math.sin(phi)))
    base, extra = divmod(n_users, n_groups)
    positions, groups = [], []
    for m, (cx, cy) in enumerate(centers, start=1):
        for _ in range(base + (1 if m <= extra else 0)):
            while True:
                dx, dy = rng.normal(0.0, 1.0, size=2) * cluster_spread
                x, y = cx + dx, cy + dy
                if math.hypot(x, y) <= area_radius:
                    break
            positions.append((float(x), float(y)))
            groups.append(m)
    return Scenario(
        seed=seed,
        positions=tuple(positions),
        groups=tuple(groups),
        n_groups=n_groups,
        area_radius_m=area_radius,
        cluster_spread_m=cluster_spread,
        centers=tuple(centers),
    )


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameworkResult:
    framework: str
    group: int
    users: int
    beamwidth_deg: float
    beam_center: tuple[float, float]
    beam_radius_m: float
    sum_rate_bps: float
    ciphertexts: int
    keys: int
    snr_db: tuple[float, ...] = field(default=(), repr=False)
    rates_bps: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class RateReport:
    group: int
    members: tuple[int, ...]
    results: dict[str, FrameworkResult]

    def __getitem__(self, framework: str) -> FrameworkResult:
        return self.results[framework]

    def rows(self):
        for name in FRAMEWORKS:
            r = self.results[name]
            yield [r.framework, r.group, r.users, r.beamwidth_deg, r.sum_rate_bps, r.ciphertexts, r.keys]


RATE_COLUMNS = ["framework", "group", "users", "beamwidth_deg", "sum_rate_bps", "ciphertexts", "keys"]


def _rician_power(channel: Channel, rng: np.random.Generator, size: int) -> np.ndarray:
    k = channel.k_factor
    los = math.sqrt(k / (k + 1.0))
    scatter = math.sqrt(1.0 / (2.0 * (k + 1.0)))
    h = los + scatter * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
    return np.abs(h) ** 2


def _rates(params, beamwidth, n_members, channel, rng):
    """Per-user SNR (linear) and rate for ``n_members`` users in one beam."""
    pr = received_power(params, beamwidth)
    snr = pr / params.noise_power_w
    if channel.model == "los":
        rate = user_rate(pr, params.bandwidth_hz, params.noise_density_w_per_hz)
        return [snr] * n_members, [rate] * n_members
    snrs, rates = [], []
    for _ in range(n_members):
        fading = _rician_power(channel, rng, channel.realizations)
        snrs.append(float(np.mean(snr * fading)))
        rates.append(float(np.mean(params.bandwidth_hz * np.log2(1.0 + snr * fading))))
    return snrs, rates


def simulate(
    scenario: Scenario,
    params: SatelliteParams,
    group: int,
    channel: Channel | None = None,
    fading_seed: int | None = None,
) -> RateReport:
    """Legitimate-group sum rate under unicast, broadcast and groupcast delivery."""
    if not 1 <= group <= scenario.n_groups:
        raise ValueError(f"group {group} out of range 1..{scenario.n_groups}")
    members = scenario.members(group)
    if not members:
        raise ValueError(f"group {group} has no users")
    channel = channel or Channel()
    rng = np.random.default_rng(scenario.seed if fading_seed is None else fading_seed)
    theta_min = params.min_beamwidth_deg
    size = len(members)
    n_all = scenario.n_users

    center, radius = min_enclosing_circle([scenario.positions[i] for i in members])
    theta_group = max(beamwidth_for_radius(params.height_m, radius), theta_min)
    all_center, all_radius = min_enclosing_circle(scenario.positions)
    theta_all = max(beamwidth_for_radius(params.height_m, all_radius), theta_min)

    results = {}

    snr, rates = _rates(params, theta_min, size, channel, rng)
    # Time sharing: each member is served 1/|G_m| of the time.
    uni_rates = [r / size for r in rates]
    results["unicast"] = FrameworkResult(
        "unicast", group, size, theta_min, scenario.positions[members[0]],
        beam_radius(params.height_m, theta_min), sum(uni_rates), size, size,
        tuple(linear_to_db(s) for s in snr), tuple(uni_rates),
    )

    snr, rates = _rates(params, theta_all, size, channel, rng)
    results["broadcast"] = FrameworkResult(
        "broadcast", group, size, theta_all, all_center,
        beam_radius(params.height_m, theta_all), sum(rates), 1, n_all,
        tuple(linear_to_db(s) for s in snr), tuple(rates),
    )

    snr, rates = _rates(params, theta_group, size, channel, rng)
    results["groupcast"] = FrameworkResult(
        "groupcast", group, size, theta_group, center,
        beam_radius(params.height_m, theta_group), sum(rates), 1, 1,
        tuple(linear_to_db(s) for s in snr), tuple(rates),
    )
    return RateReport(group=group, members=tuple(members), results=results)


def rates_csv(reports: Sequence[RateReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATE_COLUMNS)
    for rep in reports:
        for row in rep.rows():
            w.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4]), row[5], row[6]])
    return buf.getvalue()


def per_user_csv(scenario: Scenario, reports: Sequence[RateReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user", "x_m", "y_m", "group", "legitimate_group", "framework", "snr_db", "rate_bps"])
    for rep in reports:
        for name in FRAMEWORKS:
            r = rep[name]
            for idx, snr, rate in zip(rep.members, r.snr_db, r.rates_bps):
                x, y = scenario.positions[idx]
                w.writerow([idx, repr(x), repr(y), scenario.groups[idx], rep.group, name, repr(snr), repr(rate)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

_PARAM_FIELDS = {f.name for f in fields(SatelliteParams)}


@dataclass(frozen=True)
class ScenarioConfig:
    params: SatelliteParams = SatelliteParams()
    seed: int = 42
    users: int = 100
    groups: int = 4
    cluster_spread_m: float = 8e3
    channel: Channel = Channel()

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioConfig":
        unknown = set(obj) - _PARAM_FIELDS - {"seed", "users", "groups", "cluster_spread_m", "channel"}
        if unknown:
            raise ValueError(f"unknown scenario config fields: {sorted(unknown)}")
        params = SatelliteParams(**{k: float(v) for k, v in obj.items() if k in _PARAM_FIELDS})
        chan = obj.get("channel") or {}
        return cls(
            params=params,
            seed=int(obj.get("seed", 42)),
            users=int(obj.get("users", 100)),
            groups=int(obj.get("groups", 4)),
            cluster_spread_m=float(obj.get("cluster_spread_m", 8e3)),
            channel=Channel(**chan),
        )

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = asdict(self.params)
        out.update(
            seed=self.seed,
            users=self.users,
            groups=self.groups,
            cluster_spread_m=self.cluster_spread_m,
            channel=asdict(self.channel),
        )
        return out

    def scenario(self, seed: int | None = None, users: int | None = None) -> Scenario:
        return place_users(
            self.seed if seed is None else seed,
            self.users if users is None else users,
            self.groups,
            self.cluster_spread_m,
            self.params.max_beam_radius_m,
        )

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def sweep_users(config: ScenarioConfig, user_counts: Sequence[int], group: int = 1) -> list[tuple[int, RateReport]]:
    """Sum rates for growing user counts at fixed seed and group count."""
    out = []
    for n in user_counts:
        scen = config.scenario(users=n)
        out.append((n, simulate(scen, config.params, group, config.channel)))
    return out
