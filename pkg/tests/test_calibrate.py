"""Loss-calibration chain: ratio statistic -> tl -> t0, with uncertainties."""

import numpy as np
import pytest

from loopdet import (
    CouplerSetting,
    DeviceParams,
    calibrate_from_channels,
    channel_transmissions,
    infer_t0,
    infer_tl,
    normalized_channels,
)
from loopdet.calibrate import read_channel_csv
from loopdet.errors import (
    DataError,
    DomainError,
    InconsistentMeasurementError,
    InsufficientDataError,
    ParameterError,
)


def device(t0, tl, r=0.45, theta=0.955, eta=0.6):
    return DeviceParams(t0=t0, theta=theta, tl=tl, eta=eta,
                        coupler=CouplerSetting.ideal(r))


class TestInferTl:
    def test_reference_point(self):
        assert infer_tl(0.80, 0.955) == pytest.approx(0.9424, abs=5e-4)

    def test_lossless_limit(self):
        assert infer_tl(1.0, 1.0) == pytest.approx(1.0)

    def test_out_of_range_measurement(self):
        with pytest.raises(InconsistentMeasurementError):
            infer_tl(1.2, 1.0)

    def test_bad_inputs(self):
        with pytest.raises(ParameterError):
            infer_tl(0.8, 0.0)
        with pytest.raises(ParameterError):
            infer_tl(-1.5, 0.955)


class TestInferT0:
    def test_reference_point(self):
        tl = infer_tl(0.80, 0.955)
        assert infer_t0(0.78, tl, 0.955) == pytest.approx(0.9188, abs=5e-4)

    def test_lossless_limit(self):
        assert infer_t0(1.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_singular_model(self):
        with pytest.raises(DomainError):
            infer_t0(0.78, 0.5, 0.955)

    def test_out_of_range_measurement(self):
        with pytest.raises(InconsistentMeasurementError):
            infer_t0(1.5, 0.98, 1.0)


class TestCalibrateFromChannels:
    def test_reference_measurement(self):
        # Measured ratio statistic 0.80 and T/eta = 0.78 give the published
        # pair (tl, t0) = (0.942, 0.919).
        H = np.array([0.39, 0.42, 0.13, 0.04, 0.012, 0.004, 0.0013])
        result = calibrate_from_channels(H, T_over_eta=0.78, theta=0.955)
        assert 0.75 < result.ratio_stat < 0.86
        assert result.tl_hat == pytest.approx(result.ratio_stat / (2 * 0.955)
                                              + 1 / (2 * 0.955), rel=1e-12)

    @pytest.mark.parametrize("t0", [0.85, 0.92, 0.97])
    @pytest.mark.parametrize("tl", [0.90, 0.94, 0.97])
    def test_round_trip_on_synthetic_device(self, t0, tl):
        # Channels generated by the forward model must calibrate back to the
        # generating losses within the (small, positive) approximation bias
        # of the ratio statistic.
        params = device(t0, tl)
        profile = channel_transmissions(params, 30)
        H = normalized_channels(profile)
        T_over_eta = profile.total / params.eta
        result = calibrate_from_channels(H, T_over_eta=T_over_eta, theta=0.955)
        assert result.tl_hat == pytest.approx(tl, rel=0.02)
        assert result.t0_hat == pytest.approx(t0, rel=0.02)
        assert result.tl_hat >= tl  # bias is systematically upward

    def test_lossless_loop_trips_consistency_check(self):
        # At tl = 1 the upward bias pushes the inferred tl just past 1, which
        # the consistency check flags rather than silently clipping.
        params = device(0.92, 1.0)
        profile = channel_transmissions(params, 30)
        with pytest.raises(InconsistentMeasurementError):
            calibrate_from_channels(normalized_channels(profile),
                                    T_over_eta=profile.total / params.eta,
                                    theta=0.955)

    def test_round_trip_across_ratios(self):
        for r in (0.35, 0.45, 0.55):
            params = device(0.92, 0.94, r=r)
            profile = channel_transmissions(params, 30)
            result = calibrate_from_channels(
                normalized_channels(profile),
                T_over_eta=profile.total / params.eta, theta=0.955)
            assert result.tl_hat == pytest.approx(0.94, rel=0.015)
            assert result.t0_hat == pytest.approx(0.92, rel=0.025)

    def test_sigma_propagation_scales_linearly(self):
        H = np.array([0.39, 0.42, 0.13, 0.04, 0.012, 0.004, 0.0013])
        sigma = 0.01 * H
        r1 = calibrate_from_channels(H, T_over_eta=0.78, theta=0.955,
                                     sigma=sigma)
        r2 = calibrate_from_channels(H, T_over_eta=0.78, theta=0.955,
                                     sigma=2 * sigma)
        assert r1.ratio_sigma > 0
        assert r2.ratio_sigma == pytest.approx(2 * r1.ratio_sigma, rel=1e-9)
        assert r2.tl_sigma == pytest.approx(2 * r1.tl_sigma, rel=1e-9)
        assert r2.t0_sigma == pytest.approx(2 * r1.t0_sigma, rel=1e-9)

    def test_zero_channels_skipped_with_warning(self):
        H = np.array([0.39, 0.42, 0.13, 0.0, 0.012, 0.004, 0.0013])
        result = calibrate_from_channels(H, T_over_eta=0.78, theta=0.955)
        assert len(result.warnings) == 2  # pairs (3,4) and (4,5)
        assert 3 not in result.used_k and 4 not in result.used_k

    def test_too_few_channels(self):
        with pytest.raises(InsufficientDataError):
            calibrate_from_channels([0.5, 0.3], T_over_eta=0.78, theta=0.955)

    def test_all_pairs_unusable(self):
        with pytest.raises(InsufficientDataError):
            calibrate_from_channels([0.5, 0.0, 0.0, 0.0],
                                    T_over_eta=0.78, theta=0.955)

    def test_residuals_center_on_zero(self):
        profile = channel_transmissions(device(0.92, 0.94), 30)
        result = calibrate_from_channels(
            normalized_channels(profile), T_over_eta=0.78, theta=0.955)
        assert result.residuals.sum() == pytest.approx(0.0, abs=1e-12)
        assert np.array_equal(result.used_k, np.arange(2, 7))


class TestReadChannelCsv:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "channels.csv"
        p.write_text("k,H_k,sigma_k\n1,0.39,0.004\n2,0.42,0.004\n3,0.13,0.002\n")
        H, sigma = read_channel_csv(p)
        assert H == pytest.approx([0.39, 0.42, 0.13])
        assert sigma == pytest.approx([0.004, 0.004, 0.002])

    def test_sigma_optional_and_order_insensitive(self, tmp_path):
        p = tmp_path / "channels.csv"
        p.write_text("k,H_k\n2,0.42\n1,0.39\n3,0.13\n")
        H, sigma = read_channel_csv(p)
        assert H == pytest.approx([0.39, 0.42, 0.13])
        assert np.all(sigma == 0)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("channel,prob\n1,0.5\n")
        with pytest.raises(DataError):
            read_channel_csv(p)

    def test_gapped_indices(self, tmp_path):
        p = tmp_path / "gap.csv"
        p.write_text("k,H_k\n1,0.39\n3,0.13\n")
        with pytest.raises(DataError):
            read_channel_csv(p)

    def test_non_numeric_row(self, tmp_path):
        p = tmp_path / "nan.csv"
        p.write_text("k,H_k\n1,oops\n")
        with pytest.raises(DataError):
            read_channel_csv(p)
