import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from hybridbf.array_model import AngularGrid, ArrayGeometry, array_manifold, steering_vector
from hybridbf.evaluation import (BeamFormationError, BeamPattern, ChainImperfection, beampattern, pattern_metrics,
                                 simulate_calibration)


def _uniform_width_deg(n, spacing):
    # isotropic uniform array: |sin(n psi/2) / (n sin(psi/2))|^2 = 10^-0.3, psi = 2 pi d cos(theta)
    af = lambda psi: (np.sin(n * psi / 2) / (n * np.sin(psi / 2))) ** 2 - 10 ** -0.3
    psi = brentq(af, 1e-9, 2 * np.pi / n)
    return 2 * np.degrees(np.arcsin(psi / (2 * np.pi * spacing)))


@pytest.mark.parametrize("n, d", [(11, 0.8), (8, 0.5), (16, 0.5)])
def test_uniform_beamwidth_oracle(n, d):
    man = array_manifold(ArrayGeometry(n, d), AngularGrid.uniform(0, 180, 0.01))
    m = pattern_metrics(beampattern(man, np.ones(n)), 90.0)
    assert m.mainlobe_deg == pytest.approx(90.0)
    assert m.beamwidth_3db_deg == pytest.approx(_uniform_width_deg(n, d), abs=2e-3)
    # first sidelobe of a long uniform array sits near 13.26 dB
    if n == 16:
        assert m.sll_db == pytest.approx(13.15, abs=0.2)


def test_steered_peak_and_grating_lobe():
    geo = ArrayGeometry(8, 1.0)
    man = array_manifold(geo, AngularGrid.uniform(0, 180, 0.1))
    x = np.conj(steering_vector(geo, 90.0)) / 8
    m = pattern_metrics(beampattern(man, x), 90.0)
    assert m.mainlobe_gain_db == pytest.approx(0.0, abs=1e-9)
    # full-wavelength spacing puts grating lobes at end-fire
    assert m.grating_lobe_db == pytest.approx(0.0, abs=1e-6)


def test_pattern_errors():
    man = array_manifold(ArrayGeometry(4, 0.5), AngularGrid.uniform(0, 180, 0.5))
    with pytest.raises(BeamFormationError):
        pattern_metrics(beampattern(man, np.ones(4)), 60.0)  # a null
    flat = BeamPattern(man.grid, -np.abs(man.grid.angles_deg - 90.0))
    with pytest.raises(BeamFormationError):
        pattern_metrics(flat, 90.0)
    with pytest.raises(ValueError):
        beampattern(man, np.ones(3))
    with pytest.raises(ValueError):
        BeamPattern(man.grid, np.zeros(3))


def test_pattern_floor():
    man = array_manifold(ArrayGeometry(4, 0.5), AngularGrid.uniform(0, 180, 0.5))
    assert np.all(beampattern(man, np.zeros(4)).gain_db == -120.0)


class TestCalibration:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000), st.integers(1, 8))
    def test_noiseless_is_exact(self, seed, n):
        imp = ChainImperfection.random(n, seed=seed)
        rep = simulate_calibration(imp, n_sweep=19, noise_floor_db=-np.inf)
        assert rep.avg_phase_error_deg < 1e-9 and rep.avg_amplitude_error_db < 1e-9
        np.testing.assert_allclose(rep.estimated_phase_deg, imp.phase_offset_deg, atol=1e-9)
        np.testing.assert_allclose(rep.estimated_amplitude_db, imp.amplitude_error_db, atol=1e-9)

    def test_drift_accumulates(self):
        imp = ChainImperfection([0.0], [10.0], drift_deg_per_step=0.1)
        rep = simulate_calibration(imp, n_sweep=11, noise_floor_db=-np.inf)
        np.testing.assert_allclose(rep.residual_phase_deg, 0.1 * np.arange(11), atol=1e-9)

    def test_noise_scales_error(self):
        imp = ChainImperfection.random(4, seed=1)
        e = [simulate_calibration(imp, 181, nf, seed=3).avg_phase_error_deg for nf in (-70.0, -50.0)]
        # 20 dB more noise: ten times the rms phase error
        assert e[1] / e[0] == pytest.approx(10.0, rel=0.2)

    def test_random_respects_limits(self):
        imp = ChainImperfection.random(200, 40.0, 1.0, seed=0)
        assert np.all(np.abs(imp.phase_offset_deg) <= 40) and np.all(np.abs(imp.amplitude_error_db) <= 1)

    def test_rejects(self):
        with pytest.raises(ValueError):
            ChainImperfection([0.0, 1.0], [0.0])
        with pytest.raises(ValueError):
            ChainImperfection([np.nan], [0.0])
        with pytest.raises(ValueError):
            simulate_calibration(ChainImperfection([0.0], [0.0]), n_sweep=1)
