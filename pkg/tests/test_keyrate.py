import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdiqkd.decoy import q11
from mdiqkd.keyrate import (
    SCAN_CSV_HEADER,
    ChannelModel,
    KeyRateParams,
    SystemModel,
    arm_lengths,
    binary_entropy,
    distance_scan,
    evaluate_point,
    find_cutoff,
    key_rate,
    optimize_intensity,
    scan_csv_lines,
    scan_json_obj,
)
from mdiqkd.optics import DetectorModel, NetworkConfig

REF_SYSTEM = SystemModel(
    network=NetworkConfig.from_misalignment(0.015),
    detector=DetectorModel(efficiency=0.145, dark_prob=6.02e-6),
)
IDEAL_SYSTEM = SystemModel(network=NetworkConfig(), detector=DetectorModel())


def entropy_reference(x):
    # independent formulation via natural logs
    if x in (0.0, 1.0):
        return 0.0
    ln2 = math.log(2.0)
    return (-x * math.log(x) - (1.0 - x) * math.log(1.0 - x)) / ln2


class TestBinaryEntropy:
    def test_endpoints(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_maximum(self):
        assert binary_entropy(0.5) == 1.0

    def test_known_value(self):
        assert binary_entropy(0.11) == pytest.approx(0.49992, abs=5e-6)

    @settings(max_examples=80, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_symmetry_and_reference(self, x):
        assert binary_entropy(x) == pytest.approx(binary_entropy(1.0 - x), abs=1e-12)
        assert binary_entropy(x) == pytest.approx(entropy_reference(x), abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            binary_entropy(-0.01)
        with pytest.raises(ValueError):
            binary_entropy(1.01)


class TestKeyRateFormula:
    def test_reduces_to_q11_when_error_free(self):
        r = key_rate(0.0123, 0.0, 0.02, 0.0)
        assert r.raw == 0.0123
        assert r.clamped == 0.0123

    def test_zero_q11_clamps(self):
        r = key_rate(0.0, 0.1, 0.01, 0.05)
        assert r.raw < 0.0
        assert r.clamped == 0.0

    def test_dual_path_agreement(self):
        params = KeyRateParams()
        q11_v, e11, q, e = 0.01, 0.02, 0.012, 0.015
        got = key_rate(q11_v, e11, q, e, params).raw
        independent = (q11_v * (1.0 - entropy_reference(e11))
                       - q * 1.16 * entropy_reference(e))
        assert got == pytest.approx(independent, abs=1e-12)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            key_rate(0.02, 0.0, 0.01, 0.0)  # q11 > q_rect
        with pytest.raises(ValueError):
            key_rate(0.01, 1.2, 0.02, 0.0)
        with pytest.raises(ValueError):
            key_rate(0.01, 0.0, 0.02, None)  # undefined E with nonzero gain
        assert key_rate(0.0, 0.0, 0.0, None).raw == 0.0

    def test_inefficiency_validation(self):
        with pytest.raises(ValueError):
            KeyRateParams(error_correction_inefficiency=0.9)


class TestChannel:
    def test_transmittance(self):
        ch = ChannelModel(length_a_km=50.0, length_b_km=100.0)
        assert ch.transmittance_a == pytest.approx(10 ** -1.0)
        assert ch.transmittance_b == pytest.approx(10 ** -2.0)

    def test_arm_lengths(self):
        assert arm_lengths(100.0, "midpoint") == (50.0, 50.0)
        assert arm_lengths(100.0, "at-alice") == (0.0, 100.0)
        assert arm_lengths(100.0, 0.25) == (25.0, 75.0)
        with pytest.raises(ValueError):
            arm_lengths(-1.0, "midpoint")
        with pytest.raises(ValueError):
            arm_lengths(10.0, 1.5)


class TestEvaluatePoint:
    def test_ideal_rate_equals_q11(self):
        # Perfect devices at zero distance: no errors in either basis, so the
        # bound collapses to the single-photon-pair gain exactly.
        pt = evaluate_point(IDEAL_SYSTEM, 0.0, 0.1, 0.1)
        assert pt.e11_diag == pytest.approx(0.0, abs=1e-12)
        assert pt.e_rect == pytest.approx(0.0, abs=1e-12)
        assert pt.key_rate_raw == pytest.approx(q11(0.1, 0.1, 0.5), abs=1e-15)

    def test_reference_point_regression(self):
        # Frozen from the first full-model evaluation (reference parameters,
        # zero distance, mu = 0.1).
        pt = evaluate_point(REF_SYSTEM, 0.0, 0.1, 0.1)
        assert pt.q11_rect == pytest.approx(8.577075756977628e-05, rel=1e-9)
        assert pt.e11_diag == pytest.approx(0.007646299108672358, rel=1e-9)
        assert pt.q_rect == pytest.approx(1.043640350323243e-04, rel=1e-9)
        assert pt.e_rect == pytest.approx(0.016425697341769054, rel=1e-9)
        assert pt.key_rate == pytest.approx(6.558409690975923e-05, rel=1e-9)

    def test_q11_consistent_with_formula(self):
        from mdiqkd.protocol import Basis, loss_adjusted_table

        pt = evaluate_point(REF_SYSTEM, 80.0, 0.2, 0.3)
        t = 10 ** (-0.2 * 40.0 / 10.0)
        sent = loss_adjusted_table(
            REF_SYSTEM.single_photon_relay_tables[Basis.RECT], t, t)
        assert pt.q11_rect == pytest.approx(
            q11(0.2, 0.3, float(sent.yields[1, 1])), rel=1e-12)
        assert pt.q_rect >= pt.q11_rect

    def test_rate_positive_at_reference_40db(self):
        pt = optimize_intensity(REF_SYSTEM, 200.0)
        assert pt.key_rate > 0.0
        assert pt.key_rate == pytest.approx(3.2671540278323395e-09, rel=1e-6)


class TestOptimization:
    def test_optimum_regressions(self):
        p0 = optimize_intensity(REF_SYSTEM, 0.0)
        assert p0.mu_a == p0.mu_b
        assert p0.mu_a == pytest.approx(0.6033361418677428, abs=1e-4)
        assert p0.key_rate == pytest.approx(6.152191331345823e-04, rel=1e-6)
        p100 = optimize_intensity(REF_SYSTEM, 100.0)
        assert p100.mu_a == pytest.approx(0.5497117002962282, abs=1e-4)
        assert p100.key_rate == pytest.approx(5.0307626628608324e-06, rel=1e-6)

    def test_beyond_cutoff_returns_smallest_grid_mu(self):
        grid = np.geomspace(0.005, 1.0, 40)
        pt = optimize_intensity(REF_SYSTEM, 320.0, grid=grid)
        assert pt.key_rate == 0.0
        assert pt.mu_a == pytest.approx(grid[0])

    def test_rate_grows_with_efficiency(self):
        low = SystemModel(network=NetworkConfig(), detector=DetectorModel(0.3))
        high = SystemModel(network=NetworkConfig(), detector=DetectorModel(0.6))
        assert (optimize_intensity(high, 0.0).key_rate
                > optimize_intensity(low, 0.0).key_rate)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            optimize_intensity(REF_SYSTEM, 0.0, grid=np.array([]))

    def test_refinement_beats_dense_grid(self):
        # the golden refinement must find at least as much rate as a dense
        # brute-force grid around the optimum
        found = optimize_intensity(REF_SYSTEM, 100.0).key_rate
        dense = max(
            evaluate_point(REF_SYSTEM, 100.0, mu, mu).key_rate
            for mu in np.linspace(0.3, 0.9, 400))
        assert found >= dense - 1e-12


class TestScan:
    def test_validation(self):
        with pytest.raises(ValueError):
            distance_scan(REF_SYSTEM, [])
        with pytest.raises(ValueError):
            distance_scan(REF_SYSTEM, [10.0, 5.0])
        with pytest.raises(ValueError):
            distance_scan(REF_SYSTEM, [-1.0])

    def test_fixed_intensity_scan(self):
        pts = distance_scan(REF_SYSTEM, [0.0, 50.0], fixed_intensities=(0.1, 0.1))
        assert [p.mu_a for p in pts] == [0.1, 0.1]
        assert pts[0].key_rate > pts[1].key_rate

    def test_degenerate_lossless_scan(self):
        pts = distance_scan(IDEAL_SYSTEM, [0.0])
        assert len(pts) == 1
        assert pts[0].key_rate > 0.0

    def test_rates_non_increasing_while_positive(self):
        # Raw rates decrease monotonically through the positive region; the
        # clamped rate is non-increasing along the whole scan.  (Beyond the
        # cutoff the raw value creeps back up toward its dark-count floor, so
        # the blanket raw-value claim holds only up to the first zero.)
        distances = [25.0 * i for i in range(11)]
        pts = distance_scan(REF_SYSTEM, distances)
        clamped = [p.key_rate for p in pts]
        assert all(b <= a + 1e-15 for a, b in zip(clamped, clamped[1:]))
        raw = [p.key_rate_raw for p in pts]
        first_zero = next(i for i, r in enumerate(raw) if r <= 0.0)
        positive_part = raw[: first_zero + 1]
        assert all(b < a for a, b in zip(positive_part, positive_part[1:]))

    def test_clamp_bookkeeping(self):
        pts = distance_scan(REF_SYSTEM, [0.0, 250.0])
        for p in pts:
            assert p.key_rate >= 0.0
            if p.key_rate_raw >= 0.0:
                assert p.key_rate == p.key_rate_raw
            else:
                assert p.key_rate == 0.0


class TestCutoff:
    def test_reference_cutoffs(self):
        cut_mid = find_cutoff(REF_SYSTEM, "midpoint")
        assert 200.0 < cut_mid < 300.0
        assert cut_mid == pytest.approx(204.2, abs=1.0)
        cut_alice = find_cutoff(REF_SYSTEM, "at-alice")
        # Shorter than half the midpoint reach: the unattenuated pulse meets
        # the relay misalignment leakage head on (see the doubling analysis
        # in the acceptance suite).
        assert cut_alice == pytest.approx(74.3, abs=1.0)


class TestSerialization:
    def test_csv_shape(self):
        pts = distance_scan(REF_SYSTEM, [0.0, 12.5], fixed_intensities=(0.1, 0.1))
        lines = scan_csv_lines(pts, comments=["a = 1"])
        assert lines[0] == "# a = 1"
        assert lines[1] == SCAN_CSV_HEADER
        assert len(lines) == 4
        row = lines[2].split(",")
        assert len(row) == 9
        assert row[0] == "0"
        # full-precision floats round-trip exactly
        assert float(row[3]) == pts[0].q11_rect

    def test_json_obj(self):
        pts = distance_scan(REF_SYSTEM, [0.0], fixed_intensities=(0.1, 0.1))
        obj = scan_json_obj(pts, config={"k": "v"})
        text = json.dumps(obj)
        back = json.loads(text)
        assert back["config"] == {"k": "v"}
        assert back["points"][0]["distance_km"] == 0.0
        assert back["points"][0]["key_rate"] == pts[0].key_rate
