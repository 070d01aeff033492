"""Two-stage decoy-state estimation of photon-number yields and error rates.

The observables are gains Q[i][j] and error rates E[i][j] over a grid of
source intensities.  Since phase-randomized coherent pulses are Poisson
mixtures of photon-number states, the observables are Poisson-weighted
linear combinations of the per-photon-number yields, and a truncated linear
inversion recovers them: first invert over Alice's intensity index for each
of Bob's settings (giving marginal yields), then invert the marginals over
Bob's index.  Error rates follow the same route applied to the products
Q*E, divided by the recovered yields at the end.

One least-squares kernel serves every stage.  Nonnegativity is enforced by
post-hoc clamping with a logged event list rather than constrained solving;
on data consistent with a valid table the clamp log stays empty.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InversionError
from .protocol import Basis, YieldErrorTable
from .optics import DetectorModel
from . import protocol

logger = logging.getLogger(__name__)

DEFAULT_INTENSITIES = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_MAX_CONDITION = 1e10

# Estimated entries below this yield are reported as undefined rather than
# divided through (guards e = W/Y).
YIELD_EPS = 1e-12

# Violations beyond this slack are logged as clamp events; smaller ones are
# floating-point noise from the solver and are snapped silently, so that
# re-estimating from consistent data logs nothing.
CLAMP_TOL = 1e-9


def poisson_pmf(mu: float, n: int) -> float:
    if mu < 0:
        raise ValueError("mean photon number must be >= 0")
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


def poisson_weights(mu: float, n_max: int) -> np.ndarray:
    """pmf values for n = 0..n_max."""
    return np.array([poisson_pmf(mu, n) for n in range(n_max + 1)])


def poisson_tail_mass(mu: float, n_max: int) -> float:
    """P(N > n_max) computed by direct summation (stable for tiny tails)."""
    term = poisson_pmf(mu, n_max + 1)
    total = 0.0
    n = n_max + 1
    while term > 0.0 and (total == 0.0 or term > total * 1e-18):
        total += term
        n += 1
        term *= mu / n
    return total


@dataclass(frozen=True)
class IntensityGrid:
    """Decoy intensity settings for Alice and Bob (mean photon numbers)."""

    alice: tuple[float, ...] = DEFAULT_INTENSITIES
    bob: tuple[float, ...] = DEFAULT_INTENSITIES

    def __post_init__(self):
        for name in ("alice", "bob"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) == 0:
                raise ValueError(f"{name} intensity list is empty")
            if any(v < 0 or not math.isfinite(v) for v in values):
                raise ValueError(f"{name} intensities must be finite and >= 0")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} intensities must be strictly increasing")
            object.__setattr__(self, name, values)


@dataclass(frozen=True)
class ObservedStats:
    """Gains and error rates over the intensity grid for one basis.

    qbers entries are NaN where the corresponding gain is zero.
    """

    basis: Basis
    grid: IntensityGrid
    gains: np.ndarray
    qbers: np.ndarray

    def __post_init__(self):
        shape = (len(self.grid.alice), len(self.grid.bob))
        q = np.array(self.gains, dtype=float)
        e = np.array(self.qbers, dtype=float)
        if q.shape != shape or e.shape != shape:
            raise ValueError(f"observed matrices must have shape {shape}")
        if np.any((q < 0) | (q > 1)):
            raise ValueError("gains must lie in [0, 1]")
        defined = ~np.isnan(e)
        if np.any((e[defined] < 0) | (e[defined] > 1)):
            raise ValueError("defined error rates must lie in [0, 1]")
        q.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "gains", q)
        object.__setattr__(self, "qbers", e)

    def error_weighted_gains(self) -> np.ndarray:
        """Q*E with undefined E (zero gain) contributing zero."""
        return np.where(np.isnan(self.qbers), 0.0, self.gains * np.nan_to_num(self.qbers))

    def to_json_dict(self) -> dict:
        qbers = [[None if math.isnan(v) else v for v in row] for row in self.qbers.tolist()]
        return {
            "basis": self.basis.value,
            "alice_intensities": list(self.grid.alice),
            "bob_intensities": list(self.grid.bob),
            "gains": self.gains.tolist(),
            "qbers": qbers,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ObservedStats":
        grid = IntensityGrid(alice=tuple(data["alice_intensities"]),
                             bob=tuple(data["bob_intensities"]))
        qbers = np.array(
            [[math.nan if v is None else float(v) for v in row] for row in data["qbers"]])
        return cls(basis=Basis(data["basis"]), grid=grid,
                   gains=np.array(data["gains"], dtype=float), qbers=qbers)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ObservedStats":
        return cls.from_json_dict(json.loads(text))


def observed_from_table(table: YieldErrorTable, grid: IntensityGrid) -> ObservedStats:
    """Synthesize observables from a truncated yield/error table.

    The resulting linear system is exactly the one the estimator inverts, so
    estimation at the same truncation recovers the table up to conditioning.
    """
    wa = np.stack([poisson_weights(mu, table.n_max) for mu in grid.alice])
    wb = np.stack([poisson_weights(mu, table.n_max) for mu in grid.bob])
    gains = wa @ table.yields @ wb.T
    weighted = wa @ table.error_weighted() @ wb.T
    qbers = np.where(gains > 0.0, weighted / np.where(gains > 0.0, gains, 1.0), np.nan)
    return ObservedStats(basis=table.basis, grid=grid, gains=gains, qbers=qbers)


def observed_from_model(grid: IntensityGrid, basis: Basis, u: np.ndarray,
                        det: DetectorModel, *, transmittances: tuple[float, float] = (1.0, 1.0),
                        phase_nodes: int = 64) -> ObservedStats:
    """Synthesize observables from the full coherent-pulse model.

    The grid holds intensities as sent; per-arm channel transmittances fold
    into the intensities arriving at the relay.  Unlike observed_from_table
    this includes every photon-number component, so a truncated inversion of
    these observables carries a truncation bias.
    """
    t_a, t_b = transmittances
    shape = (len(grid.alice), len(grid.bob))
    gains = np.zeros(shape)
    qbers = np.full(shape, np.nan)
    for i, mu_a in enumerate(grid.alice):
        for j, mu_b in enumerate(grid.bob):
            stats = protocol.wcp_observed_stats(t_a * mu_a, t_b * mu_b, basis, u, det,
                                                phase_nodes=phase_nodes)
            gains[i, j] = stats.gain
            if stats.qber is not None:
                qbers[i, j] = stats.qber
    return ObservedStats(basis=basis, grid=grid, gains=gains, qbers=qbers)


@dataclass(frozen=True)
class InversionResult:
    coefficients: np.ndarray
    residual: float
    condition: float


def invert_poisson(values, intensities, n_max: int, *,
                   max_condition: float = DEFAULT_MAX_CONDITION) -> InversionResult:
    """Solve values_i = sum_n exp(-mu_i) mu_i^n / n! * c_n for n <= n_max.

    Least squares over the (possibly overdetermined) system; this single
    kernel serves both stages of the yield and error estimation.  Raises
    ValueError when fewer than n_max + 1 intensities are supplied and
    InversionError when the design matrix condition number exceeds
    max_condition.
    """
    mus = np.asarray(intensities, dtype=float)
    vals = np.asarray(values, dtype=float)
    if mus.ndim != 1 or vals.shape != mus.shape:
        raise ValueError("values and intensities must be 1-d and the same length")
    if len(mus) < n_max + 1:
        raise ValueError(
            f"need at least {n_max + 1} intensities to resolve photon numbers 0..{n_max}, "
            f"got {len(mus)}")
    design = np.stack([poisson_weights(mu, n_max) for mu in mus])
    condition = float(np.linalg.cond(design))
    if not math.isfinite(condition) or condition > max_condition:
        raise InversionError(
            f"decoy design matrix is ill-conditioned (condition {condition:.3e} "
            f"> {max_condition:.1e})", condition=condition)
    coeffs, *_ = np.linalg.lstsq(design, vals, rcond=None)
    residual = float(np.linalg.norm(design @ coeffs - vals))
    return InversionResult(coefficients=coeffs, residual=residual, condition=condition)


@dataclass(frozen=True)
class ClampEvent:
    quantity: str
    stage: str
    index: tuple[int, ...]
    raw: float


@dataclass(frozen=True)
class DecoyIntermediates:
    """Stage-1 coefficients: one column of marginals per Bob setting.

    For the yield path row n holds the marginal yields Y_n^j; for the error
    path it holds the error-weighted marginals W_n^j.  Nonnegative after the
    clamping stage.
    """

    quantity: str
    marginals: np.ndarray


@dataclass
class EstimationResult:
    """Estimated table plus solver diagnostics.

    clamp_events records every out-of-range value beyond numerical slack;
    max_residual is the largest least-squares misfit across all solves.
    """

    table: YieldErrorTable
    clamp_events: list[ClampEvent] = field(default_factory=list)
    max_residual: float = 0.0
    max_condition: float = 0.0
    intermediates: list[DecoyIntermediates] = field(default_factory=list)


def _clamp(values: np.ndarray, lo, hi, quantity: str, stage: str,
           events: list[ClampEvent]) -> np.ndarray:
    lo_arr = np.broadcast_to(np.asarray(lo, dtype=float), values.shape)
    hi_arr = np.broadcast_to(np.asarray(hi, dtype=float), values.shape)
    for idx in zip(*np.nonzero((values < lo_arr - CLAMP_TOL) | (values > hi_arr + CLAMP_TOL))):
        event = ClampEvent(quantity=quantity, stage=stage, index=tuple(int(i) for i in idx),
                           raw=float(values[idx]))
        events.append(event)
        logger.info("clamped %s at %s stage %s: raw=%g", quantity, event.index, stage, event.raw)
    return np.clip(values, lo_arr, hi_arr)


def _two_stage_inversion(
        matrix: np.ndarray, grid: IntensityGrid, n_max: int, quantity: str,
        events: list[ClampEvent], max_condition: float,
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Invert over Alice's index per Bob setting, then over Bob's index per n."""
    n_bob = len(grid.bob)
    marginals = np.empty((n_max + 1, n_bob))
    worst_residual = 0.0
    worst_condition = 0.0
    for j in range(n_bob):
        try:
            res = invert_poisson(matrix[:, j], grid.alice, n_max,
                                 max_condition=max_condition)
        except InversionError as exc:
            raise InversionError(f"{exc} (stage alice-inversion, bob index {j})",
                                 condition=exc.condition, stage="alice-inversion",
                                 index=j) from exc
        marginals[:, j] = res.coefficients
        worst_residual = max(worst_residual, res.residual)
        worst_condition = max(worst_condition, res.condition)
    marginals = _clamp(marginals, 0.0, 1.0, f"marginal_{quantity}", "alice-inversion", events)

    table = np.empty((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        try:
            res = invert_poisson(marginals[n, :], grid.bob, n_max,
                                 max_condition=max_condition)
        except InversionError as exc:
            raise InversionError(f"{exc} (stage bob-inversion, photon number {n})",
                                 condition=exc.condition, stage="bob-inversion",
                                 index=n) from exc
        table[n, :] = res.coefficients
        worst_residual = max(worst_residual, res.residual)
        worst_condition = max(worst_condition, res.condition)
    return table, marginals, worst_residual, worst_condition


def estimate_yields(obs: ObservedStats, n_max: int = 4, *,
                    max_condition: float = DEFAULT_MAX_CONDITION) -> EstimationResult:
    """Recover Y[n][m] for n, m <= n_max from observed gains."""
    events: list[ClampEvent] = []
    yields, marginals, residual, condition = _two_stage_inversion(
        obs.gains, obs.grid, n_max, "yield", events, max_condition)
    yields = _clamp(yields, 0.0, 1.0, "yield", "bob-inversion", events)
    table = YieldErrorTable(basis=obs.basis, n_max=n_max, yields=yields,
                            errors=np.full((n_max + 1, n_max + 1), np.nan))
    return EstimationResult(table=table, clamp_events=events,
                            max_residual=residual, max_condition=condition,
                            intermediates=[DecoyIntermediates("yield", marginals)])


def estimate_errors(obs: ObservedStats, yields: YieldErrorTable, *,
                    max_condition: float = DEFAULT_MAX_CONDITION) -> EstimationResult:
    """Fill in e[n][m] given already-estimated yields.

    Inverts the products Q*E to the error-weighted yields Y*e, then divides
    by Y where Y > YIELD_EPS; smaller yields give undefined (NaN) entries,
    never a 0/0.
    """
    n_max = yields.n_max
    events: list[ClampEvent] = []
    weighted, marginals, residual, condition = _two_stage_inversion(
        obs.error_weighted_gains(), obs.grid, n_max, "error_weight", events, max_condition)
    weighted = _clamp(weighted, 0.0, yields.yields, "error_weight", "bob-inversion", events)
    defined = yields.yields > YIELD_EPS
    errors = np.where(defined, weighted / np.where(defined, yields.yields, 1.0), np.nan)
    table = YieldErrorTable(basis=obs.basis, n_max=n_max, yields=yields.yields, errors=errors)
    return EstimationResult(table=table, clamp_events=events,
                            max_residual=residual, max_condition=condition,
                            intermediates=[DecoyIntermediates("error_weight", marginals)])


def estimate_table(obs: ObservedStats, n_max: int = 4, *,
                   max_condition: float = DEFAULT_MAX_CONDITION) -> EstimationResult:
    """Run both estimation stages and merge diagnostics."""
    y_res = estimate_yields(obs, n_max, max_condition=max_condition)
    e_res = estimate_errors(obs, y_res.table, max_condition=max_condition)
    return EstimationResult(
        table=e_res.table,
        clamp_events=y_res.clamp_events + e_res.clamp_events,
        max_residual=max(y_res.max_residual, e_res.max_residual),
        max_condition=max(y_res.max_condition, e_res.max_condition),
        intermediates=y_res.intermediates + e_res.intermediates,
    )


def q11(mu_a: float, mu_b: float, y11: float) -> float:
    """Single-photon-pair gain mu_a * mu_b * exp(-(mu_a + mu_b)) * Y11."""
    if mu_a < 0 or mu_b < 0:
        raise ValueError("mean photon numbers must be >= 0")
    if not (0.0 <= y11 <= 1.0):
        raise ValueError(f"y11 must be in [0, 1], got {y11}")
    return mu_a * mu_b * math.exp(-(mu_a + mu_b)) * y11
