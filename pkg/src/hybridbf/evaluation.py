"""Beampatterns, pattern figures of merit and transceiver calibration simulation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .array_model import AngularGrid, ArrayManifold
from .microwave import as_complex

GAIN_FLOOR_DB = -120.0
GRATING_WINDOW_DEG = 60.0


class BeamFormationError(ValueError):
    """No usable mainlobe or sidelobe in a pattern."""


@dataclass(frozen=True)
class BeamPattern:
    grid: AngularGrid
    gain_db: np.ndarray

    def __post_init__(self):
        g = np.array(self.gain_db, dtype=float)
        if g.shape != (len(self.grid),):
            raise ValueError("pattern length must match the grid")
        g.setflags(write=False)
        object.__setattr__(self, "gain_db", g)


def beampattern(manifold: ArrayManifold, antenna_signals) -> BeamPattern:
    """``20 log10 |A x|`` on the manifold grid, floored at -120 dB."""
    x = as_complex(antenna_signals)
    if x.size != manifold.n_elements:
        raise ValueError(f"{x.size} antenna signals for {manifold.n_elements} elements")
    mag = np.abs(manifold.matrix @ x)
    with np.errstate(divide="ignore"):
        g = 20.0 * np.log10(mag)
    return BeamPattern(manifold.grid, np.maximum(g, GAIN_FLOOR_DB))


@dataclass(frozen=True)
class PatternMetrics:
    mainlobe_deg: float
    mainlobe_gain_db: float
    sll_db: float
    beamwidth_3db_deg: float
    grating_lobe_db: Optional[float]
    first_nulls_deg: tuple = ()


def _local_maxima(g: np.ndarray) -> np.ndarray:
    """Indices of local maxima, grid edges included when they exceed their neighbour."""
    n = g.size
    left = np.r_[-np.inf, g[:-1]]
    right = np.r_[g[1:], -np.inf]
    is_max = (g >= left) & (g >= right) & ((g > left) | (g > right))
    return np.flatnonzero(is_max)


def _crossing(a: np.ndarray, g: np.ndarray, i_in: int, i_out: int, level: float) -> float:
    g0, g1 = g[i_in], g[i_out]
    if g0 == g1:
        return float(a[i_out])
    f = (g0 - level) / (g0 - g1)
    return float(a[i_in] + f * (a[i_out] - a[i_in]))


def pattern_metrics(pattern: BeamPattern, expected_tilt_deg: float, search_halfwidth_deg: float = 3.5) -> PatternMetrics:
    """
    Mainlobe position and gain, sidelobe level, 3-dB width and grating lobe.

    The mainlobe is the highest local maximum within
    ``search_halfwidth_deg`` of the expected tilt. Sidelobes are local
    maxima outside the first nulls (first local minima on either side of
    the peak). The grating-lobe figure is the highest level more than 60
    degrees from the mainlobe, relative to the mainlobe (dB, negative).

    Raises
    ------
    BeamFormationError
        If no peak lies near the expected tilt or no sidelobe exists.
    """
    a = pattern.grid.angles_deg
    g = pattern.gain_db
    peaks = _local_maxima(g)
    near = peaks[np.abs(a[peaks] - expected_tilt_deg) <= search_halfwidth_deg]
    if near.size == 0:
        raise BeamFormationError(f"no pattern peak within {search_halfwidth_deg} deg of {expected_tilt_deg}")
    ip = int(near[np.argmax(g[near])])
    peak = g[ip]
    # first nulls
    lo = ip
    while lo > 0 and g[lo - 1] <= g[lo]:
        lo -= 1
    hi = ip
    while hi < g.size - 1 and g[hi + 1] <= g[hi]:
        hi += 1
    side = peaks[(peaks < lo) | (peaks > hi)]
    if side.size == 0:
        raise BeamFormationError("pattern has no sidelobe; SLL undefined")
    sll = float(peak - g[side].max())
    # 3-dB width
    level = peak - 3.0
    l = ip
    while l > 0 and g[l - 1] > level:
        l -= 1
    r = ip
    while r < g.size - 1 and g[r + 1] > level:
        r += 1
    left = _crossing(a, g, l, l - 1, level) if l > 0 else float(a[0])
    right = _crossing(a, g, r, r + 1, level) if r < g.size - 1 else float(a[-1])
    far = np.abs(a - a[ip]) > GRATING_WINDOW_DEG
    globe = float(g[far].max() - peak) if far.any() else None
    return PatternMetrics(float(a[ip]), float(peak), sll, right - left, globe, (float(a[lo]), float(a[hi])))


# --------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class ChainImperfection:
    """Errors of the chains under test relative to the reference chain."""

    amplitude_error_db: np.ndarray
    phase_offset_deg: np.ndarray
    drift_deg_per_step: np.ndarray = None

    def __post_init__(self):
        amp = np.atleast_1d(np.asarray(self.amplitude_error_db, dtype=float))
        ph = np.atleast_1d(np.asarray(self.phase_offset_deg, dtype=float))
        drift = np.zeros_like(ph) if self.drift_deg_per_step is None else \
            np.broadcast_to(np.asarray(self.drift_deg_per_step, dtype=float), ph.shape).copy()
        if amp.shape != ph.shape:
            raise ValueError("amplitude and phase errors need one entry per chain")
        if not (np.all(np.isfinite(amp)) and np.all(np.isfinite(ph)) and np.all(np.isfinite(drift))):
            raise ValueError("chain imperfections must be finite")
        object.__setattr__(self, "amplitude_error_db", amp)
        object.__setattr__(self, "phase_offset_deg", ph)
        object.__setattr__(self, "drift_deg_per_step", drift)

    @property
    def n_chains(self) -> int:
        return self.amplitude_error_db.size

    def response(self, step: int = 0) -> np.ndarray:
        ph = self.phase_offset_deg + self.drift_deg_per_step * step
        return 10.0 ** (self.amplitude_error_db / 20.0) * np.exp(1j * np.radians(ph))

    @classmethod
    def random(cls, n_chains: int, max_phase_deg: float = 40.0, max_amp_db: float = 1.0,
               seed: int = 0) -> "ChainImperfection":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-max_amp_db, max_amp_db, n_chains),
                   rng.uniform(-max_phase_deg, max_phase_deg, n_chains))


@dataclass
class CalibrationReport:
    estimated_amplitude_db: np.ndarray
    estimated_phase_deg: np.ndarray
    sweep_phase_deg: np.ndarray
    residual_phase_deg: np.ndarray      # per sweep step, averaged over chains
    residual_amplitude_db: np.ndarray   # per sweep step, averaged over chains
    avg_phase_error_deg: float
    avg_amplitude_error_db: float


def simulate_calibration(imperfection: ChainImperfection, n_sweep: int = 361, noise_floor_db: float = -60.0,
                         seed: int = 42) -> CalibrationReport:
    """
    Calibrate each chain against the reference chain with a CW tone, apply
    the digital correction, then sweep the commanded phase over
    -180..180 degrees and record input-vs-output errors.

    Measurements carry additive circular complex Gaussian noise of power
    ``10**(noise_floor_db/10)`` relative to the unit reference tone.
    Chain drift accumulates per sweep step and is not re-calibrated.
    ``noise_floor_db=-inf`` gives noiseless measurements.
    """
    if n_sweep < 2:
        raise ValueError("n_sweep must be at least 2")
    rng = np.random.default_rng(seed)
    n = imperfection.n_chains
    sigma = 0.0 if np.isneginf(noise_floor_db) else np.sqrt(10.0 ** (noise_floor_db / 10.0) / 2.0)

    def noise(shape):
        if sigma == 0.0:
            return np.zeros(shape, dtype=complex)
        return sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    reference = 1.0 + 0j
    measured = (imperfection.response(0) + noise(n)) / (reference + noise(1))
    correction = 1.0 / measured
    commands = np.linspace(-180.0, 180.0, n_sweep)
    res_ph = np.empty((n_sweep, n))
    res_amp = np.empty((n_sweep, n))
    for s, cmd in enumerate(commands):
        tone = np.exp(1j * np.radians(cmd))
        out = correction * imperfection.response(s) * tone + noise(n)
        ref = reference * tone + noise(1)
        rel = out / ref
        res_ph[s] = np.degrees(np.angle(rel))
        res_amp[s] = 20.0 * np.log10(np.abs(rel))
    return CalibrationReport(
        estimated_amplitude_db=20.0 * np.log10(np.abs(measured)),
        estimated_phase_deg=np.degrees(np.angle(measured)),
        sweep_phase_deg=commands,
        residual_phase_deg=np.mean(np.abs(res_ph), axis=1),
        residual_amplitude_db=np.mean(np.abs(res_amp), axis=1),
        avg_phase_error_deg=float(np.mean(np.abs(res_ph))),
        avg_amplitude_error_db=float(np.mean(np.abs(res_amp))),
    )
