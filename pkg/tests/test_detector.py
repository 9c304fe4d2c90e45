import math

import numpy as np
import pytest

from photoncorr import (
    DetectorParams,
    apply_two_mode,
    compose_channel,
    crosstalk_matrix,
    dark_matrix,
    loss_matrix,
    mixture_joint,
    pdc_joint,
    product_joint,
    thermal_pmf,
    SourceParams,
)
from photoncorr.detector import apply_two_mode_built
from photoncorr.montecarlo import detect_count, total_variation

from conftest import PAPER_DET_H, PAPER_DET_V


class TestLossMatrix:
    def test_lossless_is_identity(self):
        chan = loss_matrix(1.0, 6)
        assert np.array_equal(chan.entries, np.eye(7))

    def test_binomial_column(self):
        chan = loss_matrix(0.5, 2)
        np.testing.assert_allclose(chan.entries[:, 2], [0.25, 0.5, 0.25], atol=1e-15)

    def test_thermal_closure(self):
        # Binomial thinning of a thermal state is thermal with the mean
        # scaled by the efficiency; the input tail must be negligible.
        eta, mean, n_max = 0.37, 1.0, 60
        thermal_in = thermal_pmf(mean, n_max)
        out = loss_matrix(eta, n_max).entries @ thermal_in.probs
        expected = thermal_pmf(eta * mean, n_max)
        np.testing.assert_allclose(out, expected.probs, atol=1e-10)

    @pytest.mark.parametrize("eta", [0.0, -0.2, 1.3])
    def test_domain_errors(self, eta):
        with pytest.raises(ValueError):
            loss_matrix(eta, 4)

    def test_short_output_records_truncation(self):
        chan = loss_matrix(0.5, 4, 2)
        total = chan.entries.sum(axis=0) + chan.column_truncation
        np.testing.assert_allclose(total, np.ones(5), atol=1e-12)
        assert chan.column_truncation[4] > 0.0


class TestDarkMatrix:
    def test_zero_darks_identity(self):
        chan = dark_matrix(0.0, 5)
        assert np.array_equal(chan.entries, np.eye(6))

    def test_vacuum_column_is_poisson(self):
        chan = dark_matrix(0.11, 6, 12)
        expected = [math.exp(-0.11) * 0.11 ** k / math.factorial(k) for k in range(13)]
        np.testing.assert_allclose(chan.entries[:, 0], expected, rtol=1e-12)
        assert chan.entries[0, 0] == pytest.approx(0.895834135, abs=1e-8)
        assert chan.entries[1, 0] == pytest.approx(0.098541754, abs=1e-8)
        assert chan.entries[2, 0] == pytest.approx(0.005419796, abs=1e-8)

    def test_columns_normalize_with_headroom(self):
        chan = dark_matrix(0.3, 4, 40)
        np.testing.assert_allclose(chan.entries.sum(axis=0), np.ones(5), atol=1e-12)

    def test_truncation_recorded(self):
        chan = dark_matrix(0.5, 4, 4)
        total = chan.entries.sum(axis=0) + chan.column_truncation
        np.testing.assert_allclose(total, np.ones(5), atol=1e-12)

    def test_negative_mean_rejected(self):
        with pytest.raises(ValueError):
            dark_matrix(-0.1, 4)


class TestCrosstalkMatrix:
    def test_zero_crosstalk_identity(self):
        chan = crosstalk_matrix(0.0, 5)
        assert np.array_equal(chan.entries, np.eye(6))

    def test_single_fired_cell(self):
        chan = crosstalk_matrix(0.12, 4, 8)
        np.testing.assert_allclose(
            chan.entries[:4, 1], [0.0, 0.88, 0.12, 0.0], atol=1e-15
        )

    def test_two_fired_cells(self):
        chan = crosstalk_matrix(0.12, 4, 8)
        assert chan.entries[2, 2] == pytest.approx(0.7744, abs=1e-12)
        assert chan.entries[3, 2] == pytest.approx(0.2112, abs=1e-12)
        assert chan.entries[4, 2] == pytest.approx(0.0144, abs=1e-12)

    @pytest.mark.parametrize("eps", [-0.1, 1.0])
    def test_domain_errors(self, eps):
        with pytest.raises(ValueError):
            crosstalk_matrix(eps, 4)

    def test_truncation_recorded(self):
        chan = crosstalk_matrix(0.3, 6, 6)
        total = chan.entries.sum(axis=0) + chan.column_truncation
        np.testing.assert_allclose(total, np.ones(7), atol=1e-12)
        assert chan.column_truncation[6] > 0.0


class TestComposeChannel:
    def test_ideal_is_identity_bitwise(self):
        chan = compose_channel(DetectorParams.ideal(), 8)
        assert np.array_equal(chan.entries, np.eye(9))

    def test_column_stochastic_within_truncation(self):
        chan = compose_channel(PAPER_DET_H, 12, 12)
        sums = chan.entries.sum(axis=0)
        assert np.all(sums <= 1.0 + 1e-12)
        np.testing.assert_allclose(sums + chan.column_truncation, np.ones(13), atol=1e-10)

    def test_vacuum_column_against_event_oracle(self):
        # Vacuum through the channel is dark counts broadened by
        # crosstalk; compare with an event-level histogram.
        trials = 10 ** 6
        chan = compose_channel(PAPER_DET_H, 6, 12)
        rng = np.random.default_rng(99)
        draws = detect_count(np.zeros(trials, dtype=np.int64), PAPER_DET_H, rng)
        hist = np.bincount(draws, minlength=13)[:13] / trials
        occupied = int((chan.entries[:, 0] > 1e-12).sum())
        bound = 5.0 * math.sqrt(occupied / trials)
        assert total_variation(hist, chan.entries[:, 0]) < bound

    def test_dark_loss_order_matters(self):
        # Applying darks before loss would thin the dark counts too; the
        # two orders must differ on a thermal input.
        n = 20
        loss = loss_matrix(0.25, n).entries
        dark = dark_matrix(0.11, n).entries
        thermal_in = thermal_pmf(1.0, n).probs
        dark_after = dark @ loss @ thermal_in
        dark_before = loss @ dark @ thermal_in
        assert np.abs(dark_after - dark_before).max() > 1e-4


class TestApplyTwoMode:
    def test_ideal_detectors_preserve_input(self):
        joint = mixture_joint(SourceParams(1.3, 0.6), 10)
        out = apply_two_mode(joint, DetectorParams.ideal(), DetectorParams.ideal())
        np.testing.assert_array_equal(out.probs, joint.probs)

    def test_product_structure_preserved(self):
        out = apply_two_mode(product_joint(4.1, 40), PAPER_DET_H, PAPER_DET_V, n_out=12)
        s = np.linalg.svd(out.probs, compute_uv=False)
        assert s[1] / s[0] < 1e-10

    def test_correlated_input_gains_off_diagonal_mass(self):
        out = apply_two_mode(pdc_joint(4.1, 40), PAPER_DET_H, PAPER_DET_V, n_out=12)
        off_diag = out.probs[~np.eye(13, dtype=bool)]
        assert off_diag.sum() > 0.01
        # Zero-photon events dominate every other cell.
        assert out.probs[0, 0] == out.probs.max()
        assert np.all(out.probs[0, 0] > np.delete(out.probs.ravel(), 0))

    def test_dimension_mismatch_rejected(self):
        joint = pdc_joint(1.0, 8)
        chan = compose_channel(PAPER_DET_H, 5, 5)
        with pytest.raises(ValueError):
            apply_two_mode_built(joint, chan, chan)

    def test_output_normalization(self):
        joint = mixture_joint(SourceParams(4.1, 0.5), 40)
        out = apply_two_mode(joint, PAPER_DET_H, PAPER_DET_V, n_out=12)
        assert out.probs.sum() + out.tail_mass == pytest.approx(1.0, abs=1e-12)


class TestDetectorParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"efficiency": 0.0, "dark_mean": 0.1, "crosstalk": 0.1},
            {"efficiency": 1.1, "dark_mean": 0.1, "crosstalk": 0.1},
            {"efficiency": 0.5, "dark_mean": -0.1, "crosstalk": 0.1},
            {"efficiency": 0.5, "dark_mean": 0.1, "crosstalk": 1.0},
        ],
    )
    def test_invalid_params(self, kwargs):
        with pytest.raises(ValueError):
            DetectorParams(**kwargs)
