import math

import numpy as np
import pytest

from ompsd import (
    DeviceParams,
    DriveParams,
    amplitude_for_gamma_ba,
    calibrate_drive,
    cavity_photon_number,
    effective_params,
    gamma0_curve,
    hopf_thresholds,
    seo_amplitude,
    xi_l,
)
from ompsd.errors import CalibrationError


def xi1_real_direct(d, g):
    # independent complex-arithmetic evaluation of Re xi_1
    return g / (g * g + (d + 1) ** 2) - g / (g * g + (d - 1) ** 2)


class TestXiL:
    def test_zero_detuning_cancels_exactly(self):
        assert xi_l(0.0, 6.338, 1) == 0j

    def test_real_part_against_direct_evaluation(self):
        val = xi_l(0.7, 6.338, 1)
        assert val.real == pytest.approx(xi1_real_direct(0.7, 6.338), rel=1e-13)
        assert val.real == pytest.approx(-0.0102, abs=2e-4)

    def test_odd_parity_on_random_grid(self, rng):
        d = rng.uniform(-8, 8, 200)
        g = rng.uniform(0.05, 12, 200)
        total = xi_l(d, g[0], 1) + xi_l(-d, g[0], 1)
        assert np.max(np.abs(total)) == 0.0
        for gi in g[:20]:
            assert abs(xi_l(1.37, gi, 1) + xi_l(-1.37, gi, 1)) < 1e-18

    def test_real_part_negative_for_positive_detuning(self, rng):
        d = rng.uniform(1e-6, 20, 500)
        g = rng.uniform(1e-3, 20, 500)
        vals = np.array([xi_l(di, gi, 1).real for di, gi in zip(d, g)])
        assert np.all(vals < 0)
        assert xi_l(0.0, 3.3, 1).real == 0.0

    def test_rejects_nonpositive_g(self):
        with pytest.raises(ValueError):
            xi_l(0.5, 0.0, 1)


class TestCavityPhotonNumber:
    def test_zero_drive(self):
        assert cavity_photon_number(0.0, 0.7, 6.338) == 0.0

    def test_monotone_in_detuning(self):
        assert cavity_photon_number(3.0, 0.7, 6.338) > cavity_photon_number(3.0, 1.06, 6.338)

    def test_direct_value(self):
        assert cavity_photon_number(1.0, 0.0, 2.0) == pytest.approx(0.25, rel=1e-15)


class TestEffectiveParams:
    def test_uncoupled_limit(self, device):
        eff = effective_params(device, DriveParams(d=0.7, photon_number=0.0))
        assert eff.gamma0 == device.gamma_m
        assert eff.omega0 == 0.0
        assert eff.gamma_ba == 0.0

    def test_blue_heats_red_cools(self, device):
        blue = effective_params(device, DriveParams(d=0.7, photon_number=1e4))
        red = effective_params(device, DriveParams(d=-0.7, photon_number=1e4))
        zero = effective_params(device, DriveParams(d=0.0, photon_number=1e4))
        assert blue.gamma0 < device.gamma_m < red.gamma0
        assert zero.gamma0 == device.gamma_m

    def test_detuning_sign_flip_maps_gamma_ba_and_omega0(self, device):
        a = effective_params(device, DriveParams(d=0.51, photon_number=2e4))
        b = effective_params(device, DriveParams(d=-0.51, photon_number=2e4))
        assert a.gamma_ba == pytest.approx(-b.gamma_ba, rel=1e-14)
        assert a.omega0 == pytest.approx(-b.omega0, rel=1e-14)

    def test_gamma_ba_matches_response_formula(self, device):
        e_c = 3.7e3
        drive = DriveParams(d=0.83, photon_number=e_c)
        eff = effective_params(device, drive)
        expected = 2.0 * device.coupling**2 * e_c / device.omega_m \
            * xi_l(0.83, device.g, 1).real
        assert eff.gamma_ba == pytest.approx(expected, rel=1e-15)
        assert eff.gamma0 == pytest.approx(device.gamma_m + expected, rel=1e-15)

    def test_theta_is_half_gamma_m(self, device):
        eff = effective_params(device, DriveParams(d=0.7, photon_number=10.0))
        assert eff.theta == 0.5 * device.gamma_m
        assert eff.omega2 == 0.0

    def test_drive_params_exactly_one_mode(self):
        with pytest.raises(ValueError):
            DriveParams(d=0.7)
        with pytest.raises(ValueError):
            DriveParams(d=0.7, photon_number=1.0, amplitude=1.0)


class TestSeoAmplitude:
    def _eff(self, gamma0, gamma2, theta=0.5):
        from ompsd import EffectiveParams
        return EffectiveParams(0.0, gamma0, 0.0, gamma2, gamma0 - 2 * theta, theta)

    def test_unit_radius(self):
        assert seo_amplitude(self._eff(-0.3, 0.3)) == pytest.approx(1.0, rel=1e-15)

    def test_below_threshold_is_zero(self):
        assert seo_amplitude(self._eff(0.5, 0.3)) == 0.0

    def test_paper_scale_radius(self, device):
        # gamma0 = -gamma_m/2 with gamma2*delta_m^2/gamma_m = 2e-4 gives 50 delta_m
        gm = device.gamma_m
        eff = self._eff(-0.5 * gm, 2.0e-4 * gm, theta=0.5 * gm)
        assert seo_amplitude(eff) == pytest.approx(math.sqrt(0.5 / 2.0e-4), rel=1e-12)
        assert seo_amplitude(eff) == pytest.approx(50.0, rel=1e-12)

    def test_radius_squared_balances_damping(self, rng):
        for _ in range(25):
            g0 = -rng.uniform(0.01, 5.0)
            g2 = rng.uniform(1e-4, 2.0)
            r = seo_amplitude(self._eff(g0, g2))
            assert r * r * g2 == pytest.approx(-g0, rel=1e-12)

    def test_rejects_nonpositive_gamma2(self):
        with pytest.raises(ValueError):
            seo_amplitude(self._eff(-1.0, 0.0))


class TestHopfThresholds:
    def test_zero_drive_empty(self, device):
        assert hopf_thresholds(device, 0.0) == []

    def test_roots_against_dense_scan(self, device):
        a_p = 3.0e6
        roots = hopf_thresholds(device, a_p)
        assert len(roots) == 2
        # brute-force oracle: dense scan sign changes bracket each root
        d = np.linspace(1e-3, 12.0, 480001)
        vals = gamma0_curve(device, a_p, d)
        idx = np.nonzero(np.diff(np.signbit(vals)))[0]
        assert len(idx) == 2
        for r, i in zip(roots, idx):
            assert d[i] <= r <= d[i + 1]

    def test_roots_satisfy_tolerance(self, device):
        a_p = 2.9e6
        for r in hopf_thresholds(device, a_p):
            assert abs(gamma0_curve(device, a_p, r)) < 1e-9 * device.gamma_m

    def test_just_above_threshold_roots_collapse(self, device):
        d = np.linspace(1e-3, 12.0, 120001)
        from ompsd.model import back_action_unit
        unit = back_action_unit(device, d)
        a_min = math.sqrt(-device.gamma_m / unit.min())
        d_star = d[np.argmin(unit)]
        roots = hopf_thresholds(device, a_min * 1.0005)
        assert len(roots) == 2
        assert abs(roots[0] - d_star) < 0.25
        assert abs(roots[1] - d_star) < 0.25
        assert hopf_thresholds(device, a_min * 0.999) == []


class TestCalibrateDrive:
    def test_round_trip_recovers_amplitude(self, device):
        a_star = 3.1e6
        targets = hopf_thresholds(device, a_star)
        cal = calibrate_drive(device, tuple(targets))
        assert cal.amplitude == pytest.approx(a_star, rel=1e-6)
        assert cal.residual < 1e-6

    def test_paper_targets_report_residual(self, device):
        cal = calibrate_drive(device, (0.474, 1.06))
        # one scalar cannot place both roots; the residual is reported, not asserted
        assert cal.roots[0] < cal.roots[1]
        assert cal.residual >= 0.0
        print(f"calibration to (0.474, 1.06): a_p = {cal.amplitude:.6g}, "
              f"roots = {cal.roots}, rms residual = {cal.residual:.4f}")

    def test_rejects_bad_targets(self, device):
        with pytest.raises(ValueError):
            calibrate_drive(device, (1.06, 0.474))
        with pytest.raises(ValueError):
            calibrate_drive(device, (-0.3, 0.5))

    def test_signals_unreachable_window(self, device):
        # red-detuned scan range: gamma0 never drops below gamma_m
        with pytest.raises(CalibrationError):
            calibrate_drive(device, (0.4, 1.0), d_range=(-5.0, -0.5))


class TestAmplitudeForGammaBa:
    def test_inversion(self, device):
        a = amplitude_for_gamma_ba(device, 0.7, 2.0 * device.gamma_m)
        eff = effective_params(device, DriveParams(d=0.7, amplitude=a))
        assert abs(eff.gamma_ba) == pytest.approx(2.0 * device.gamma_m, rel=1e-12)

    def test_rejects_zero_detuning(self, device):
        with pytest.raises(ValueError):
            amplitude_for_gamma_ba(device, 0.0, device.gamma_m)


class TestDeviceParams:
    def test_hz_conversion_preserves_ratios(self):
        dev = DeviceParams.from_hz(f_m=662.7e3, gamma_m=2.5, gamma_c=4.2e6,
                                   coupling=0.013)
        assert dev.g == pytest.approx(4.2e6 / 662.7e3, rel=1e-15)
        assert dev.theta_norm == 0.5 * dev.gamma_m

    def test_invariants(self):
        with pytest.raises(ValueError):
            DeviceParams(omega_m=-1.0, gamma_m=1.0, gamma_c=1.0, coupling=0.1)
        with pytest.raises(ValueError):
            DeviceParams(omega_m=1.0, gamma_m=1.0, gamma_c=1.0, coupling=0.1,
                         gamma2_norm=-1e-5)
