"""Secret key rate over lossy fiber, with per-distance intensity optimization.

The asymptotic lower bound evaluated here is

    R = Q11_rect * (1 - H(e11_diag)) - Q_rect * f * H(E_rect)

with H the binary Shannon entropy and f >= 1 the error-correction
inefficiency.  The single-photon quantities come from the exact
photon-number oracle with channel loss folded in as a binomial channel per
arm ("infinite-decoy" evaluation); the aggregate gain and error rate come
from the analytic coherent-pulse model with the per-arm transmittance
folded into the intensities arriving at the relay.  Detector efficiency
stays inside the detector model throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .decoy import q11
from .optics import DetectorModel, NetworkConfig, build_network
from .protocol import (
    Basis,
    YieldErrorTable,
    build_yield_error_table,
    loss_adjusted_table,
    wcp_observed_stats,
)

SCAN_CSV_HEADER = "distance_km,mu_a,mu_b,q11_rect,e11_diag,q_rect,e_rect,key_rate_raw,key_rate"

DEFAULT_OPT_GRID = (0.005, 1.0, 40)


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits, with H(0) = H(1) = 0 by continuity."""
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"binary_entropy domain is [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True)
class KeyRateParams:
    error_correction_inefficiency: float = 1.16
    entropy_fn: Callable[[float], float] = binary_entropy

    def __post_init__(self):
        if self.error_correction_inefficiency < 1.0:
            raise ValueError("error-correction inefficiency must be >= 1")


@dataclass(frozen=True)
class KeyRateValue:
    raw: float
    clamped: float


def key_rate(q11_rect: float, e11_diag: float, q_rect: float,
             e_rect: float | None, params: KeyRateParams = KeyRateParams()) -> KeyRateValue:
    """Evaluate the key-rate bound; returns the raw value and max(raw, 0).

    e_rect may be None only when q_rect = 0 (no successes, so the
    error-correction term vanishes).
    """
    for name, value in (("q11_rect", q11_rect), ("e11_diag", e11_diag), ("q_rect", q_rect)):
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"{name} must be in [0, 1], got {value}")
    if q11_rect > q_rect and not math.isclose(q11_rect, q_rect, rel_tol=1e-9, abs_tol=1e-15):
        raise ValueError(f"q11_rect ({q11_rect}) must not exceed q_rect ({q_rect})")
    if e_rect is None:
        if q_rect > 0.0:
            raise ValueError("e_rect may be None only when q_rect is zero")
        ec_term = 0.0
    else:
        if not (0.0 <= e_rect <= 1.0):
            raise ValueError(f"e_rect must be in [0, 1], got {e_rect}")
        ec_term = q_rect * params.error_correction_inefficiency * params.entropy_fn(e_rect)
    raw = q11_rect * (1.0 - params.entropy_fn(e11_diag)) - ec_term
    return KeyRateValue(raw=raw, clamped=max(raw, 0.0))


@dataclass(frozen=True)
class ChannelModel:
    """Fiber arms from Alice and Bob to the relay."""

    length_a_km: float
    length_b_km: float
    attenuation_db_per_km: float = 0.2

    def __post_init__(self):
        if self.length_a_km < 0 or self.length_b_km < 0:
            raise ValueError("arm lengths must be >= 0")
        if self.attenuation_db_per_km < 0:
            raise ValueError("attenuation must be >= 0")

    @property
    def transmittance_a(self) -> float:
        return 10.0 ** (-self.attenuation_db_per_km * self.length_a_km / 10.0)

    @property
    def transmittance_b(self) -> float:
        return 10.0 ** (-self.attenuation_db_per_km * self.length_b_km / 10.0)


def arm_lengths(total_km: float, placement) -> tuple[float, float]:
    """Split a total Alice-to-Bob distance according to the relay placement.

    placement is "midpoint", "at-alice", or a float fraction f in [0, 1]
    giving Alice's share of the distance (L_A = f * L).
    """
    if total_km < 0:
        raise ValueError("distance must be >= 0")
    if placement == "midpoint":
        fraction = 0.5
    elif placement == "at-alice":
        fraction = 0.0
    else:
        fraction = float(placement)
        if not (0.0 <= fraction <= 1.0):
            raise ValueError(f"arm fraction must be in [0, 1], got {fraction}")
    return fraction * total_km, (1.0 - fraction) * total_km


@dataclass(frozen=True)
class ScanPoint:
    distance_km: float
    mu_a: float
    mu_b: float
    q11_rect: float
    e11_diag: float
    q_rect: float
    e_rect: float
    key_rate_raw: float
    key_rate: float


@dataclass(frozen=True)
class SystemModel:
    """Everything fixed across a scan: relay network, detectors, fiber, rate params."""

    network: NetworkConfig = NetworkConfig()
    detector: DetectorModel = DetectorModel()
    attenuation_db_per_km: float = 0.2
    params: KeyRateParams = field(default_factory=KeyRateParams)
    phase_nodes: int = 64

    @cached_property
    def transfer_matrix(self) -> np.ndarray:
        return build_network(self.network)

    @cached_property
    def single_photon_relay_tables(self) -> dict[Basis, YieldErrorTable]:
        # Yields/errors at the relay for <=1 photon per side; loss independent,
        # so these are computed once and reused across distances and intensities.
        return {
            basis: build_yield_error_table(basis, self.transfer_matrix, self.detector, n_max=1)
            for basis in (Basis.RECT, Basis.DIAG)
        }


def evaluate_point(system: SystemModel, distance_km: float, mu_a: float, mu_b: float,
                   placement="midpoint") -> ScanPoint:
    """Evaluate every term of the rate bound at one distance and intensity pair."""
    la, lb = arm_lengths(distance_km, placement)
    channel = ChannelModel(length_a_km=la, length_b_km=lb,
                           attenuation_db_per_km=system.attenuation_db_per_km)
    ta, tb = channel.transmittance_a, channel.transmittance_b

    rect_sent = loss_adjusted_table(system.single_photon_relay_tables[Basis.RECT], ta, tb)
    diag_sent = loss_adjusted_table(system.single_photon_relay_tables[Basis.DIAG], ta, tb)
    y11 = float(rect_sent.yields[1, 1])
    e11 = float(diag_sent.errors[1, 1])
    if math.isnan(e11):
        # No diagonal-basis successes at all; the rate is zero regardless.
        e11_for_rate = 0.0
    else:
        e11_for_rate = e11

    stats = wcp_observed_stats(ta * mu_a, tb * mu_b, Basis.RECT,
                               system.transfer_matrix, system.detector,
                               phase_nodes=system.phase_nodes)
    q11_rect = q11(mu_a, mu_b, y11)
    rate = key_rate(q11_rect, e11_for_rate, stats.gain, stats.qber, system.params)
    return ScanPoint(
        distance_km=distance_km, mu_a=mu_a, mu_b=mu_b,
        q11_rect=q11_rect, e11_diag=e11,
        q_rect=stats.gain, e_rect=math.nan if stats.qber is None else stats.qber,
        key_rate_raw=rate.raw, key_rate=rate.clamped,
    )


def default_intensity_grid() -> np.ndarray:
    lo, hi, n = DEFAULT_OPT_GRID
    return np.geomspace(lo, hi, n)


def optimize_intensity(system: SystemModel, distance_km: float, placement="midpoint",
                       *, grid=None, golden_iters: int = 40) -> ScanPoint:
    """Maximize the clamped rate over mu_a = mu_b.

    Grid search over a log-spaced grid followed by one golden-section
    refinement around the best grid point.  Ties break toward smaller mu,
    so a distance beyond cutoff deterministically returns the smallest grid
    intensity with rate zero.
    """
    mus = default_intensity_grid() if grid is None else np.asarray(grid, dtype=float)
    if mus.size == 0:
        raise ValueError("intensity grid is empty")

    evaluated: list[tuple[float, float]] = []

    def rate_at(mu: float) -> float:
        r = evaluate_point(system, distance_km, mu, mu, placement).key_rate
        evaluated.append((mu, r))
        return r

    best_idx = 0
    best_rate = -math.inf
    for idx, mu in enumerate(mus):
        r = rate_at(float(mu))
        if r > best_rate:
            best_rate, best_idx = r, idx

    lo = float(mus[max(best_idx - 1, 0)])
    hi = float(mus[min(best_idx + 1, len(mus) - 1)])
    if hi > lo:
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = rate_at(c), rate_at(d)
        for _ in range(golden_iters):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = rate_at(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = rate_at(d)

    best_mu = min(mu for mu, r in evaluated if r == max(r for _, r in evaluated))
    return evaluate_point(system, distance_km, best_mu, best_mu, placement)


def distance_scan(system: SystemModel, distances, placement="midpoint", *,
                  fixed_intensities: tuple[float, float] | None = None,
                  grid=None) -> list[ScanPoint]:
    """Evaluate the rate at each distance, optimizing mu unless fixed."""
    ds = [float(d) for d in distances]
    if not ds:
        raise ValueError("distance list is empty")
    if any(d < 0 for d in ds):
        raise ValueError("distances must be >= 0")
    if any(b < a for a, b in zip(ds, ds[1:])):
        raise ValueError("distances must be ascending")
    points = []
    for d in ds:
        if fixed_intensities is None:
            points.append(optimize_intensity(system, d, placement, grid=grid))
        else:
            mu_a, mu_b = fixed_intensities
            points.append(evaluate_point(system, d, mu_a, mu_b, placement))
    return points


def find_cutoff(system: SystemModel, placement="midpoint", *, lo_km: float = 0.0,
                hi_km: float = 500.0, tol_km: float = 0.25, grid=None,
                fixed_intensities: tuple[float, float] | None = None) -> float:
    """Distance at which the rate reaches zero, by bisection.

    Uses per-distance optimized intensities unless a fixed pair is given.
    The achievable rate is non-increasing in distance, so the boundary of
    the positive-rate region is well defined.
    """
    def positive(d: float) -> bool:
        if fixed_intensities is not None:
            mu_a, mu_b = fixed_intensities
            return evaluate_point(system, d, mu_a, mu_b, placement).key_rate > 0.0
        return optimize_intensity(system, d, placement, grid=grid).key_rate > 0.0

    if not positive(lo_km):
        return lo_km
    hi = hi_km
    while positive(hi):
        hi *= 2.0
        if hi > 20000.0:
            raise RuntimeError("no cutoff found below 20000 km")
    lo = lo_km
    while hi - lo > tol_km:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def format_float(x: float) -> str:
    return f"{x:.17g}"


def scan_csv_lines(points: list[ScanPoint], comments=()) -> list[str]:
    lines = [f"# {c}" for c in comments]
    lines.append(SCAN_CSV_HEADER)
    for p in points:
        lines.append(",".join(format_float(v) for v in (
            p.distance_km, p.mu_a, p.mu_b, p.q11_rect, p.e11_diag,
            p.q_rect, p.e_rect, p.key_rate_raw, p.key_rate)))
    return lines


def scan_json_obj(points: list[ScanPoint], config: dict | None = None) -> dict:
    def clean(x: float):
        return None if math.isnan(x) else x

    obj: dict = {}
    if config is not None:
        obj["config"] = config
    obj["points"] = [
        {
            "distance_km": p.distance_km, "mu_a": p.mu_a, "mu_b": p.mu_b,
            "q11_rect": p.q11_rect, "e11_diag": clean(p.e11_diag),
            "q_rect": p.q_rect, "e_rect": clean(p.e_rect),
            "key_rate_raw": p.key_rate_raw, "key_rate": p.key_rate,
        }
        for p in points
    ]
    return obj
