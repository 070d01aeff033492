"""Linear-optics model of the untrusted measurement relay.

Alice's and Bob's pulses meet on a beam splitter whose output ports are each
split by a polarizing beam splitter onto four threshold detectors.  This
module builds the 4x4 complex mode map of that network and computes
Bell-state-measurement outcome probabilities for two kinds of inputs:

* phase-randomized coherent pulses (the operational source model), averaged
  over the relative phase with Gauss-Legendre quadrature, and
* definite photon-number inputs expanded exactly through the network, which
  act as an independent multiphoton oracle for the coherent model.

Detectors are threshold detectors: each mode clicks independently with
probability 1 - (1-d) * P(no surviving photon), where d is the dark-click
probability per gate and the survival probability folds in the efficiency.

Mode ordering is fixed: inputs (AliceH, AliceV, BobH, BobV), outputs
(D1H, D1V, D2H, D2V).  All functions are pure; values are immutable once
constructed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

N_MODES = 4

_SQRT_HALF = 1.0 / math.sqrt(2.0)


class InputMode(enum.IntEnum):
    ALICE_H = 0
    ALICE_V = 1
    BOB_H = 2
    BOB_V = 3


class DetectorMode(enum.IntEnum):
    D1H = 0
    D1V = 1
    D2H = 2
    D2V = 3


class Polarization(enum.Enum):
    H = "H"
    V = "V"
    D = "D"  # +45 degrees
    A = "A"  # -45 degrees

    @property
    def jones(self) -> np.ndarray:
        """Two-component (H, V) amplitude vector, unit norm, read-only."""
        return _JONES[self]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


_JONES = {
    Polarization.H: _readonly(np.array([1.0, 0.0], dtype=complex)),
    Polarization.V: _readonly(np.array([0.0, 1.0], dtype=complex)),
    Polarization.D: _readonly(np.array([_SQRT_HALF, _SQRT_HALF], dtype=complex)),
    Polarization.A: _readonly(np.array([_SQRT_HALF, -_SQRT_HALF], dtype=complex)),
}


class BsmOutcome(enum.Enum):
    PSI_MINUS = "psi_minus"
    PSI_PLUS = "psi_plus"
    FAIL = "fail"


# A successful outcome requires precisely the designated detector pair to
# click and the other two to stay silent; any other pattern (including
# triple/quadruple clicks from dark counts) is a failure.
_PSI_MINUS_PATTERNS = frozenset({
    (True, False, False, True),   # D1H & D2V
    (False, True, True, False),   # D1V & D2H
})
_PSI_PLUS_PATTERNS = frozenset({
    (True, True, False, False),   # D1H & D1V
    (False, False, True, True),   # D2H & D2V
})


def classify_pattern(clicks) -> BsmOutcome:
    """Map a 4-tuple of detector clicks (D1H, D1V, D2H, D2V) to an outcome."""
    pattern = tuple(bool(c) for c in clicks)
    if len(pattern) != N_MODES:
        raise ValueError(f"expected {N_MODES} click flags, got {len(pattern)}")
    if pattern in _PSI_MINUS_PATTERNS:
        return BsmOutcome.PSI_MINUS
    if pattern in _PSI_PLUS_PATTERNS:
        return BsmOutcome.PSI_PLUS
    return BsmOutcome.FAIL


# Pattern index i encodes clicks as bits: detector k clicked iff (i >> k) & 1.
_PATTERN_BITS = _readonly(np.array(
    [[(i >> k) & 1 for k in range(N_MODES)] for i in range(2 ** N_MODES)],
    dtype=bool))

_OUTCOME_ORDER = (BsmOutcome.PSI_MINUS, BsmOutcome.PSI_PLUS, BsmOutcome.FAIL)

_CLASS_MATRIX = np.zeros((2 ** N_MODES, len(_OUTCOME_ORDER)))
for _i in range(2 ** N_MODES):
    _outcome = classify_pattern(tuple(_PATTERN_BITS[_i]))
    _CLASS_MATRIX[_i, _OUTCOME_ORDER.index(_outcome)] = 1.0
_CLASS_MATRIX = _readonly(_CLASS_MATRIX)


@dataclass(frozen=True)
class NetworkConfig:
    """Geometry of the relay network.

    The input rotation models misalignment on Bob's arm before the beam
    splitter; the output rotation acts on output port 1 before its
    polarizing beam splitter.  A misalignment fraction e per rotation maps
    to an angle with sin^2(angle) = e, so that a single photon picks up the
    orthogonal polarization with probability e.  from_misalignment gives
    the two rotations opposite senses: with equal senses the leakage
    amplitudes of the two rotations add coherently along the path through
    both, which triples the single-photon-pair error instead of summing
    the per-rotation fractions.

    Two beam-splitter sign conventions are supported ("real": transmit
    +sqrt(1-r), one reflection -sqrt(r); "symmetric": i*sqrt(r) on both
    reflections).  Physical probabilities do not depend on the choice.
    """

    input_rotation_rad: float = 0.0
    output_rotation_rad: float = 0.0
    bs_reflectivity: float = 0.5
    bs_convention: str = "real"

    def __post_init__(self):
        if not (0.0 <= self.bs_reflectivity <= 1.0):
            raise ValueError(f"bs_reflectivity must be in [0, 1], got {self.bs_reflectivity}")
        for name in ("input_rotation_rad", "output_rotation_rad"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.bs_convention not in ("real", "symmetric"):
            raise ValueError(f"unknown bs_convention {self.bs_convention!r}")

    @classmethod
    def from_misalignment(cls, total_fraction: float, **kwargs) -> "NetworkConfig":
        """Split a total misalignment fraction evenly over the two rotations."""
        if not (0.0 <= total_fraction <= 1.0):
            raise ValueError(f"misalignment fraction must be in [0, 1], got {total_fraction}")
        angle = math.asin(math.sqrt(total_fraction / 2.0))
        return cls(input_rotation_rad=angle, output_rotation_rad=-angle, **kwargs)


def _as_four(value, name: str) -> tuple[float, float, float, float]:
    if np.isscalar(value):
        out = (float(value),) * N_MODES
    else:
        out = tuple(float(v) for v in value)
        if len(out) != N_MODES:
            raise ValueError(f"{name} must be a scalar or length-{N_MODES} sequence")
    return out


@dataclass(frozen=True)
class DetectorModel:
    """Efficiency and dark-click probability of the four threshold detectors.

    Scalars apply to all detectors (the homogeneous case used throughout);
    length-4 sequences allow asymmetry studies.  Efficiency includes the
    transmittance of the relay optics.
    """

    efficiency: float | tuple = 1.0
    dark_prob: float | tuple = 0.0

    def __post_init__(self):
        eff = _as_four(self.efficiency, "efficiency")
        dark = _as_four(self.dark_prob, "dark_prob")
        for e in eff:
            if not (0.0 <= e <= 1.0):
                raise ValueError(f"efficiency must be in [0, 1], got {e}")
        for d in dark:
            if not (0.0 <= d < 1.0):
                raise ValueError(f"dark_prob must be in [0, 1), got {d}")
        object.__setattr__(self, "efficiency", eff)
        object.__setattr__(self, "dark_prob", dark)

    @property
    def etas(self) -> np.ndarray:
        return np.array(self.efficiency)

    @property
    def darks(self) -> np.ndarray:
        return np.array(self.dark_prob)


IDEAL_DETECTORS = DetectorModel()


@dataclass(frozen=True)
class SourcePulse:
    """A phase-randomized weak coherent pulse in one of the four BB84 states."""

    polarization: Polarization
    mean_photon_number: float
    phase_randomized: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.mean_photon_number) and self.mean_photon_number >= 0.0):
            raise ValueError(f"mean photon number must be finite and >= 0, got {self.mean_photon_number}")
        if not self.phase_randomized:
            raise ValueError("only phase-randomized pulses are modeled")


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]], dtype=complex)


def build_network(cfg: NetworkConfig) -> np.ndarray:
    """Build the 4x4 transfer matrix of the relay.

    Composition: input rotation on Bob's polarization pair, beam splitter on
    the spatial modes (identical for H and V), output rotation on port 1,
    then the polarizing beam splitters route (port, polarization) to the
    detector modes, which is the identity in the chosen ordering.
    """
    r = cfg.bs_reflectivity
    t_amp = math.sqrt(1.0 - r)
    r_amp = math.sqrt(r)
    if cfg.bs_convention == "real":
        bs = np.array([[t_amp, r_amp], [-r_amp, t_amp]], dtype=complex)
    else:
        bs = np.array([[t_amp, 1j * r_amp], [1j * r_amp, t_amp]], dtype=complex)
    eye2 = np.eye(2, dtype=complex)

    rot_in = np.zeros((N_MODES, N_MODES), dtype=complex)
    rot_in[0:2, 0:2] = eye2
    rot_in[2:4, 2:4] = _rotation(cfg.input_rotation_rad)

    rot_out = np.zeros((N_MODES, N_MODES), dtype=complex)
    rot_out[0:2, 0:2] = _rotation(cfg.output_rotation_rad)
    rot_out[2:4, 2:4] = eye2

    u = rot_out @ np.kron(bs, eye2) @ rot_in
    return _readonly(u)


IDEAL_NETWORK = build_network(NetworkConfig())


def unitarity_defect(u: np.ndarray) -> float:
    """Largest entrywise deviation of u @ u^dagger from the identity."""
    return float(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))))


def assert_unitary(u: np.ndarray, tol: float = 1e-10) -> None:
    if u.shape != (N_MODES, N_MODES):
        raise ValueError(f"transfer matrix must be {N_MODES}x{N_MODES}, got {u.shape}")
    defect = unitarity_defect(u)
    if defect > tol:
        raise ValueError(f"transfer matrix is not unitary (defect {defect:.3e} > {tol:.0e})")


@lru_cache(maxsize=None)
def phase_quadrature(n_nodes: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on [0, 2pi) and weights normalized to average.

    The integrands are entire in exp(i*phi), so 64 nodes already reach
    machine precision; doubling the node count is a cheap convergence check.
    """
    if n_nodes < 2:
        raise ValueError("need at least 2 quadrature nodes")
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    phases = math.pi * (x + 1.0)
    weights = w / 2.0
    return _readonly(phases), _readonly(weights)


def _pattern_probabilities(p_click: np.ndarray) -> np.ndarray:
    """Probabilities of all 16 click patterns given per-detector click probs.

    p_click has shape (..., 4); the result has shape (..., 16) and sums to 1
    along the last axis by construction.
    """
    p = p_click[..., None, :]
    factors = np.where(_PATTERN_BITS, p, 1.0 - p)
    return factors.prod(axis=-1)


def _class_probs(p_click: np.ndarray) -> np.ndarray:
    return _pattern_probabilities(p_click) @ _CLASS_MATRIX


def _outcome_dict(values: np.ndarray) -> dict[BsmOutcome, float]:
    return {outcome: float(values[k]) for k, outcome in enumerate(_OUTCOME_ORDER)}


def coherent_outcome_probs(
    alice: SourcePulse,
    bob: SourcePulse,
    u: np.ndarray,
    det: DetectorModel,
    *,
    phase_nodes: int = 64,
    phase_offset: float = 0.0,
) -> dict[BsmOutcome, float]:
    """Outcome probabilities for two phase-randomized coherent pulses.

    For a fixed relative phase phi the input amplitudes are
    (sqrt(mu_A)*pol_A, e^{i phi} sqrt(mu_B)*pol_B); each detector mode with
    output amplitude alpha clicks independently with probability
    1 - (1-d) exp(-eta |alpha|^2).  The result is averaged over phi uniform
    on [0, 2pi).  Only the relative phase matters, so averaging over one
    phase is equivalent to independent randomization of both.
    """
    assert_unitary(u)
    a_in = np.zeros(N_MODES, dtype=complex)
    a_in[0:2] = math.sqrt(alice.mean_photon_number) * alice.polarization.jones
    b_in = np.zeros(N_MODES, dtype=complex)
    b_in[2:4] = math.sqrt(bob.mean_photon_number) * bob.polarization.jones

    a_out = u @ a_in
    b_out = u @ b_in
    phases, weights = phase_quadrature(phase_nodes)
    beta = a_out[None, :] + np.exp(1j * (phases + phase_offset))[:, None] * b_out[None, :]
    intensities = np.abs(beta) ** 2

    p_click = 1.0 - (1.0 - det.darks) * np.exp(-det.etas * intensities)
    averaged = weights @ _class_probs(p_click)
    return _outcome_dict(averaged)


@lru_cache(maxsize=None)
def _compositions(total: int) -> np.ndarray:
    """All ways to place `total` photons into the four modes, as an array."""
    rows = [
        (i, j, k, total - i - j - k)
        for i in range(total + 1)
        for j in range(total - i + 1)
        for k in range(total - i - j + 1)
    ]
    return _readonly(np.array(rows, dtype=np.int64))


_MAX_FACT = 40
_FACT = _readonly(np.array([math.factorial(k) for k in range(_MAX_FACT)], dtype=float))
_SQRT_FACT = _readonly(np.sqrt(_FACT))


def _input_amplitudes(count: int, column: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-composition amplitude factors for `count` photons in mode map `column`."""
    comps = _compositions(count)
    powers = np.prod(column[None, :] ** comps, axis=1)
    coeffs = _SQRT_FACT[count] * powers / np.prod(_FACT[comps], axis=1)
    return comps, coeffs


def fock_outcome_probs(
    n: int,
    pol_a: Polarization,
    m: int,
    pol_b: Polarization,
    u: np.ndarray,
    det: DetectorModel,
    *,
    n_max: int = 3,
) -> dict[BsmOutcome, float]:
    """Exact outcome probabilities for photon-number inputs (n from Alice, m from Bob).

    The creation-operator monomial of the input state is expanded through
    the network, giving exact amplitudes over output occupation patterns;
    each occupation then suffers per-mode binomial loss with survival
    probability eta and threshold detection OR-ed with dark clicks.

    The n_max guard rejects photon numbers whose expansion would be large;
    raise it explicitly for bigger inputs (cost grows ~ (n+3 choose 3)^2).
    """
    if not (isinstance(n, (int, np.integer)) and isinstance(m, (int, np.integer))):
        raise ValueError("photon counts must be integers")
    if n < 0 or m < 0:
        raise ValueError("photon counts must be non-negative")
    if n > n_max or m > n_max:
        raise ValueError(
            f"photon count ({n}, {m}) exceeds n_max={n_max}; pass a larger n_max to allow it")
    assert_unitary(u)

    a_in = np.zeros(N_MODES, dtype=complex)
    a_in[0:2] = pol_a.jones
    b_in = np.zeros(N_MODES, dtype=complex)
    b_in[2:4] = pol_b.jones
    u_col = u @ a_in
    v_col = u @ b_in

    comps_a, amp_a = _input_amplitudes(n, u_col)
    comps_b, amp_b = _input_amplitudes(m, v_col)

    total = n + m
    base = total + 1
    occ = comps_a[:, None, :] + comps_b[None, :, :]
    lin = np.ravel_multi_index(
        (occ[..., 0], occ[..., 1], occ[..., 2], occ[..., 3]), dims=(base,) * N_MODES)
    acc = np.zeros(base ** N_MODES, dtype=complex)
    np.add.at(acc, lin.ravel(), (amp_a[:, None] * amp_b[None, :]).ravel())

    support = np.flatnonzero(acc)
    occupations = np.stack(np.unravel_index(support, (base,) * N_MODES), axis=1)
    probs = np.abs(acc[support]) ** 2 * np.prod(_FACT[occupations], axis=1)

    survival = (1.0 - det.etas)[None, :] ** occupations
    p_click = 1.0 - (1.0 - det.darks)[None, :] * survival
    outcome = probs @ _class_probs(p_click)
    return _outcome_dict(outcome)
