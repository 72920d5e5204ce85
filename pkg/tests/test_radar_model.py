import math
import pytest
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from scipy import optimize, stats

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from config import SPEED_OF_LIGHT
from errors import InvalidInputError
from radar_model import (
    ComplexImage, MagnitudeImage, amplitude_field, clutter_field, default_aperture,
    expand_ship, focus_position, ideal_chirp_replica, magnitude, simulate_echo,
    squint_offset, target_at,
)
from schemas import ClutterSpec, Family, RadarParams, SceneTarget, ShipSpec


RADARSAT1 = dict(f_c=5.3e9, fr=32.317e6, prf=1256.98, r0=988650.0, chirp_rate=0.72135e12,
               t_chirp=41.75e-6, v=7062.0, b=30.116e6)
# Same bandwidth, chirp ten times shorter
DESK = dict(RADARSAT1, chirp_rate=7.213413e12, t_chirp=4.175e-6)


@pytest.fixture
def params():
    return RadarParams(**DESK)


class TestRadarParams:
    """Acquisition constants"""

    def test_table_values_accepted(self):
        """Published constants pass the chirp consistency check"""
        p = RadarParams(**RADARSAT1)
        assert p.t0 == pytest.approx(2 * 988650.0 / SPEED_OF_LIGHT)
        assert p.wavelength == pytest.approx(0.056565, rel=1e-4)
        assert p.chirp_samples == 1349

    def test_chirp_mismatch_rejected(self):
        """Chirp rate times duration must equal the bandwidth"""
        with pytest.raises(ValidationError):
            RadarParams(**dict(RADARSAT1, b=33e6))

    def test_non_positive_rejected(self):
        with pytest.raises(ValidationError):
            RadarParams(**dict(RADARSAT1, prf=0.0))

    def test_frozen(self, params):
        with pytest.raises(ValidationError):
            params.prf = 1000.0

    def test_azimuth_fm_rate(self, params):
        expected = 2 * 7062.0 ** 2 / (params.wavelength * 988650.0)
        assert params.azimuth_fm_rate(988650.0) == pytest.approx(expected)


class TestImages:
    """Array carriers"""

    def test_magnitude_rejects_negative(self):
        with pytest.raises(InvalidInputError):
            MagnitudeImage(data=np.array([[1.0, -0.1]]))

    def test_magnitude_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            MagnitudeImage(data=np.array([[1.0, np.nan]]))

    def test_complex_requires_2d(self):
        with pytest.raises(InvalidInputError):
            ComplexImage(data=np.zeros(4), t0=0.0, dt=1.0, eta0=0.0, deta=1.0)

    def test_data_is_read_only(self):
        img = ComplexImage(data=np.zeros((2, 2)), t0=0.0, dt=1.0, eta0=0.0, deta=1.0)
        with pytest.raises(ValueError):
            img.data[0, 0] = 1.0

    def test_magnitude_of_complex(self):
        img = ComplexImage(data=np.array([[3 + 4j, -2j]]), t0=1.0, dt=2.0, eta0=3.0, deta=4.0)
        mag = magnitude(img)
        np.testing.assert_allclose(mag.data, [[5.0, 2.0]])
        assert (mag.t0, mag.dt, mag.eta0, mag.deta) == (1.0, 2.0, 3.0, 4.0)


class TestChirpReplica:
    """Transmitted pulse"""

    def test_length_and_padding(self, params):
        replica = ideal_chirp_replica(params, 512)
        length = params.chirp_samples
        assert len(replica) == 512
        np.testing.assert_allclose(np.abs(replica[:length]), 1.0)
        assert np.all(replica[length:] == 0)

    def test_even_about_centre(self, params):
        """Sample L//2 is t = 0 and the phase is even in t"""
        replica = ideal_chirp_replica(params, 256)
        centre = params.chirp_samples // 2
        assert replica[centre] == 1.0
        for k in range(1, centre):
            assert replica[centre + k] == pytest.approx(replica[centre - k], abs=1e-12)

    def test_too_short_rejected(self, params):
        with pytest.raises(InvalidInputError):
            ideal_chirp_replica(params, params.chirp_samples - 1)


class TestGeometry:
    """Squint and placement"""

    def test_zero_centroid_has_no_squint(self, params):
        assert squint_offset(params, params.r0, 0.0) == 0.0

    def test_squint_sign(self, params):
        """Negative centroid: beam centre after closest approach"""
        assert squint_offset(params, params.r0, -7010.0) > 0

    def test_impossible_centroid_rejected(self, params):
        with pytest.raises(InvalidInputError):
            squint_offset(params, params.r0, 2.0 * params.v / params.wavelength)

    @pytest.mark.parametrize("f_dc", [0.0, -7010.0, 3000.0])
    def test_target_at_focus_position_agree(self, params, f_dc):
        target = target_at(params, 700, 200, 1024, amplitude=1.0, f_dc=f_dc)
        assert focus_position(params, target, 1024) == (700, 200)

    def test_target_at_centres_beam(self, params):
        """Beam-centre crossing lands within half the window of its middle"""
        target = target_at(params, 620, 200, 1024, amplitude=1.0, f_dc=-7010.0)
        centre_row = target.eta_c * params.prf
        assert abs(centre_row - 512) <= 512

    def test_expand_ship(self, params):
        ship = ShipSpec(row=700, col=480, az_extent=12, rg_extent=8, amplitude=0.002)
        targets = expand_ship(params, ship, 1024, 1024, f_dc=-7010.0)
        assert len(targets) == 96
        positions = {focus_position(params, t, 1024) for t in targets}
        assert positions == {(r, c) for r in range(694, 706) for c in range(476, 484)}

    def test_expand_ship_clipped_at_border(self, params):
        ship = ShipSpec(row=0, col=300, az_extent=4, rg_extent=2, amplitude=1.0)
        assert len(expand_ship(params, ship, 512, 512)) == 4


class TestSimulator:
    """Raw echo synthesis"""

    @pytest.fixture
    def target(self, params):
        return target_at(params, 128, 200, 256, amplitude=1.0, aperture=0.05)

    def test_support(self, params, target):
        """Energy stays inside the aperture rows and chirp columns"""
        raw = simulate_echo(params, [target], None, 256, 512, seed=0)
        rows = np.nonzero(np.any(raw.data != 0, axis=1))[0]
        half = 0.05 * params.prf / 2
        assert rows.min() >= math.floor(128 - half)
        assert rows.max() <= math.ceil(128 + half)
        nonzero = np.count_nonzero(raw.data[128])
        assert nonzero in (params.chirp_samples, params.chirp_samples + 1)
        np.testing.assert_allclose(np.abs(raw.data[raw.data != 0]), 1.0)

    def test_axis_metadata(self, params, target):
        raw = simulate_echo(params, [target], None, 256, 512, seed=0, eta0=0.5)
        assert raw.domain == "time"
        assert raw.dt == pytest.approx(1 / params.fr)
        assert raw.deta == pytest.approx(1 / params.prf)
        assert raw.t0 == params.t0
        assert raw.eta0 == 0.5

    def test_linearity(self, params):
        """Echo of a target set equals the sum of single-target echoes"""
        a = target_at(params, 100, 150, 256, amplitude=0.7, phase=0.3, aperture=0.05)
        b = target_at(params, 140, 260, 256, amplitude=1.9, phase=-1.1, aperture=0.05)
        both = simulate_echo(params, [a, b], None, 256, 512, seed=0).data
        separate = (simulate_echo(params, [a], None, 256, 512, seed=0).data
                    + simulate_echo(params, [b], None, 256, 512, seed=0).data)
        np.testing.assert_allclose(both, separate, atol=1e-12)

    def test_amplitude_scaling(self, params, target):
        base = simulate_echo(params, [target], None, 256, 512, seed=0).data
        scaled = target.model_copy(update={"amplitude": 3.0})
        np.testing.assert_allclose(simulate_echo(params, [scaled], None, 256, 512, seed=0).data, 3.0 * base)

    def test_outside_fast_time_window_rejected(self, params):
        target = target_at(params, 128, 10, 256, amplitude=1.0, aperture=0.05)
        with pytest.raises(InvalidInputError):
            simulate_echo(params, [target], None, 256, 512, seed=0)

    def test_empty_size_rejected(self, params):
        with pytest.raises(InvalidInputError):
            simulate_echo(params, [], None, 0, 16, seed=0)

    def test_clutter_deterministic(self, params):
        clutter = ClutterSpec(family=Family.WEIBULL, p1=1.9521, p2=0.4835)
        first = simulate_echo(params, [], clutter, 64, 64, seed=5).data
        second = simulate_echo(params, [], clutter, 64, 64, seed=5).data
        other = simulate_echo(params, [], clutter, 64, 64, seed=6).data
        assert np.array_equal(first, second)
        assert not np.array_equal(first, other)

    def test_clutter_independent_of_workers(self, mocker):
        clutter = ClutterSpec(family=Family.GAMMA, p1=3.0486, p2=0.1406)
        mocker.patch("workers.MAX_WORKERS", 1)
        serial = clutter_field(clutter, 200, 32, seed=9)
        mocker.patch("workers.MAX_WORKERS", 4)
        parallel = clutter_field(clutter, 200, 32, seed=9)
        assert np.array_equal(serial, parallel)

    def test_pointwise_signal_model(self, params):
        """Sampled echo matches sigma exp(-j4piR/lambda) exp(j pi K (t - 2R/c)^2) in modulus and phase"""
        f_dc = -7010.0
        target = target_at(params, 700, 200, 1024, amplitude=0.8, f_dc=f_dc, phase=0.6)
        raw = simulate_echo(params, [target], None, 1024, 512, seed=0).data

        lam = params.wavelength

        def centroid(eta_zero):
            return -2.0 * params.v ** 2 * (target.eta_c - eta_zero) / (
                lam * math.sqrt(target.r0 ** 2 + params.v ** 2 * (target.eta_c - eta_zero) ** 2))

        eta_zero = optimize.brentq(lambda e: centroid(e) - f_dc, target.eta_c - 10.0, target.eta_c,
                                   xtol=1e-15, rtol=4 * np.finfo(float).eps)

        rng = np.random.default_rng(11)
        half_rows = default_aperture(params, target.r0) * params.prf / 2.0 - 2.0
        half_chirp = params.t_chirp / 2.0 - 2.0 / params.fr
        centre_row = target.eta_c * params.prf
        for _ in range(25):
            i = int(round(centre_row + rng.uniform(-half_rows, half_rows)))
            eta = i / params.prf
            r = math.sqrt(target.r0 ** 2 + params.v ** 2 * (eta - eta_zero) ** 2)
            delay = 2.0 * r / SPEED_OF_LIGHT
            k = int(round((delay - params.t0 + rng.uniform(-half_chirp, half_chirp)) * params.fr))
            u = params.t0 + k / params.fr - delay
            expected = (0.8 * np.exp(1j * 0.6) * np.exp(-4j * np.pi * r / lam)
                        * np.exp(1j * np.pi * params.chirp_rate * u ** 2))
            assert abs(raw[i, k]) == pytest.approx(0.8, abs=1e-9)
            assert abs(raw[i, k] - expected) < 1e-6

    def test_clipped_aperture_warned(self, params, mocker):
        """A beam crossing near the window edge truncates the aperture and says so"""
        warning = mocker.patch("radar_model.logger.warning")
        target = target_at(params, 500, 200, 1024, amplitude=1.0, f_dc=-717.0)
        simulate_echo(params, [target], None, 1024, 512, seed=0)
        messages = [call.args[0] for call in warning.call_args_list]
        assert any("clipped" in m for m in messages)

    def test_centred_aperture_not_warned(self, params, mocker):
        warning = mocker.patch("radar_model.logger.warning")
        target = target_at(params, 512, 200, 1024, amplitude=1.0)
        simulate_echo(params, [target], None, 1024, 512, seed=0)
        warning.assert_not_called()


FAMILIES = [
    (ClutterSpec(family=Family.WEIBULL, p1=1.9521, p2=0.4835), stats.weibull_min(1.9521, scale=0.4835)),
    (ClutterSpec(family=Family.LOGNORMAL, p1=-1.0201, p2=0.6484), stats.lognorm(0.6484, scale=math.exp(-1.0201))),
    (ClutterSpec(family=Family.INVERSE_GAUSSIAN, p1=0.4286, p2=0.7422),
     stats.invgauss(0.4286 / 0.7422, scale=0.7422)),
    (ClutterSpec(family=Family.GAMMA, p1=3.0486, p2=0.1406), stats.gamma(3.0486, scale=0.1406)),
    (ClutterSpec(family=Family.RAYLEIGH, p1=0.3337), stats.rayleigh(scale=0.3337)),
]


class TestClutterFields:
    """Amplitude statistics of synthetic clutter"""

    @pytest.mark.parametrize("spec, frozen", FAMILIES)
    def test_amplitude_distribution(self, spec, frozen):
        """Kolmogorov-Smirnov against the family's CDF"""
        field_ = amplitude_field(spec, 100, 100, seed=2)
        result = stats.kstest(field_.data.ravel(), frozen.cdf)
        assert result.pvalue > 1e-3

    @pytest.mark.slow
    @pytest.mark.parametrize("spec, frozen", FAMILIES)
    def test_amplitude_distribution_million_samples(self, spec, frozen):
        """KS distance below 0.01 on a 1000x1000 field"""
        field_ = amplitude_field(spec, 1000, 1000, seed=3)
        assert stats.kstest(field_.data.ravel(), frozen.cdf).statistic < 0.01

    def test_clutter_phase_uniform(self):
        spec = ClutterSpec(family=Family.RAYLEIGH, p1=1.0)
        phase = np.angle(clutter_field(spec, 100, 100, seed=4)).ravel()
        result = stats.kstest(phase, stats.uniform(-np.pi, 2 * np.pi).cdf)
        assert result.pvalue > 1e-3

    def test_default_aperture(self, params):
        """Aperture bandwidth is 0.8 PRF"""
        aperture = default_aperture(params, params.r0)
        assert aperture * params.azimuth_fm_rate(params.r0) == pytest.approx(0.8 * params.prf)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
