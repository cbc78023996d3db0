"""
Uniform linear array model: geometry, element patterns, steering vectors,
angular grids and spectral masks.

Angles are handled in the manifold convention, where the inter-element
phase is ``2*pi*(d/lambda)*cos(theta)`` and boresight sits at
``theta = 90``.  User-facing tilts are measured from boresight; convert
with :func:`tilt_to_theta` / :func:`theta_to_tilt`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

BORESIGHT_DEG = 90.0
FRONT_TO_BACK_DB = 30.0
DEFAULT_TRANSITION_EXTRA_DEG = 4.5


class DomainError(ValueError):
    """Raised when an angle or window falls outside its admissible range."""


class ElementPattern(str, enum.Enum):
    MACRO65 = "Macro65"
    SMALL110 = "Small110"
    ISOTROPIC = "Isotropic"

    @property
    def beamwidth_deg(self) -> Optional[float]:
        return {"Macro65": 65.0, "Small110": 110.0}.get(self.value)


def tilt_to_theta(tilt_deg):
    """Map a boresight-relative tilt to the manifold angle."""
    out = BORESIGHT_DEG - np.asarray(tilt_deg, dtype=float)
    return float(out) if out.ndim == 0 else out


def theta_to_tilt(theta_deg):
    """Inverse of :func:`tilt_to_theta`."""
    return tilt_to_theta(theta_deg)


def _wrap_deg(a):
    return (np.asarray(a, dtype=float) + 180.0) % 360.0 - 180.0


def element_gain(pattern, theta_deg):
    """
    Linear field gain of one element.

    Macro65 and Small110 follow the 3GPP parabolic-in-dB shape
    ``-min(12 (theta'/theta_3dB)^2, A_m)`` with ``theta'`` measured from
    boresight and ``A_m = 30`` dB. Isotropic elements return 1.

    Parameters
    ----------
    pattern : ElementPattern or str
    theta_deg : float or ndarray
        Manifold angle(s) in degrees.

    Returns
    -------
    float or ndarray
    """
    pattern = ElementPattern(pattern)
    theta = np.asarray(theta_deg, dtype=float)
    if pattern is ElementPattern.ISOTROPIC:
        g = np.ones_like(theta)
    else:
        off = _wrap_deg(theta - BORESIGHT_DEG)
        att_db = np.minimum(12.0 * (off / pattern.beamwidth_deg) ** 2, FRONT_TO_BACK_DB)
        g = 10.0 ** (-att_db / 20.0)
    return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class ArrayGeometry:
    n_elements: int
    spacing_wavelengths: float
    element_pattern: ElementPattern = ElementPattern.ISOTROPIC

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 2:
            raise ValueError(f"n_elements must be an integer >= 2, got {self.n_elements}")
        if not self.spacing_wavelengths > 0:
            raise ValueError(f"spacing_wavelengths must be positive, got {self.spacing_wavelengths}")
        object.__setattr__(self, "n_elements", int(self.n_elements))
        object.__setattr__(self, "element_pattern", ElementPattern(self.element_pattern))

    def phase_step(self, theta_deg: float) -> float:
        """Inter-element phase increment in radians at ``theta_deg``."""
        return 2.0 * np.pi * self.spacing_wavelengths * np.cos(np.radians(theta_deg))


def _check_angles(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(theta < -180.0) or np.any(theta > 180.0):
        raise DomainError("angles must lie in [-180, 180] degrees")
    return theta


def steering_vector(geometry: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """
    Array response ``g(theta) * exp(j 2 pi (d/lambda) k cos(theta))``, k = 0..N-1.
    """
    theta = float(_check_angles(theta_deg))
    k = np.arange(geometry.n_elements)
    g = element_gain(geometry.element_pattern, theta)
    return g * np.exp(1j * geometry.phase_step(theta) * k)


def steering_rows(geometry: ArrayGeometry, theta_deg) -> np.ndarray:
    """Vectorised steering vectors, one row per angle."""
    theta = np.atleast_1d(_check_angles(theta_deg))
    k = np.arange(geometry.n_elements)
    g = np.atleast_1d(element_gain(geometry.element_pattern, theta))
    phase = 2.0 * np.pi * geometry.spacing_wavelengths * np.cos(np.radians(theta))
    return g[:, None] * np.exp(1j * np.outer(phase, k))


@dataclass(frozen=True)
class AngularGrid:
    angles_deg: np.ndarray

    def __post_init__(self):
        a = np.array(self.angles_deg, dtype=float).ravel()
        if a.size < 2:
            raise ValueError("an angular grid needs at least 2 points")
        if np.any(np.diff(a) <= 0):
            raise ValueError("grid angles must be strictly increasing")
        _check_angles(a)
        a.setflags(write=False)
        object.__setattr__(self, "angles_deg", a)

    def __len__(self):
        return self.angles_deg.size

    def __getitem__(self, i):
        return self.angles_deg[i]

    @property
    def bounds(self) -> Tuple[float, float]:
        return float(self.angles_deg[0]), float(self.angles_deg[-1])

    def nearest(self, theta_deg: float) -> int:
        return int(np.argmin(np.abs(self.angles_deg - theta_deg)))

    @classmethod
    def uniform(cls, start_deg: float, stop_deg: float, step_deg: float) -> "AngularGrid":
        n = int(round((stop_deg - start_deg) / step_deg)) + 1
        return cls(np.round(np.linspace(start_deg, stop_deg, n), 10))

    @classmethod
    def sine_space(cls, n_points: int) -> "AngularGrid":
        """Grid uniform in ``cos(theta)`` over the visible region (endpoint excluded)."""
        u = -1.0 + 2.0 * np.arange(n_points) / n_points
        return cls(np.sort(np.degrees(np.arccos(u))))


def default_grid(step_deg: float = 0.1) -> AngularGrid:
    """Boresight +/- 90 degrees at ``step_deg`` resolution."""
    return AngularGrid.uniform(BORESIGHT_DEG - 90.0, BORESIGHT_DEG + 90.0, step_deg)


@dataclass(frozen=True)
class ArrayManifold:
    """Stacked steering vectors, shape ``(len(grid), n_elements)``."""

    matrix: np.ndarray
    grid: AngularGrid
    geometry: Optional[ArrayGeometry] = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != len(self.grid):
            raise ValueError("manifold rows must match the grid length")
        if self.geometry is not None and m.shape[1] != self.geometry.n_elements:
            raise ValueError("manifold columns must match n_elements")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_elements(self) -> int:
        return self.matrix.shape[1]

    @property
    def gram(self) -> np.ndarray:
        """``A^H A``."""
        return self.matrix.conj().T @ self.matrix

    def rows_at(self, theta_deg) -> np.ndarray:
        """Manifold rows at arbitrary angles (exact if the geometry is known)."""
        theta = np.atleast_1d(np.asarray(theta_deg, dtype=float))
        if self.geometry is not None:
            return steering_rows(self.geometry, theta)
        return self.matrix[[self.grid.nearest(t) for t in theta]]


def array_manifold(geometry: ArrayGeometry, grid: AngularGrid) -> ArrayManifold:
    return ArrayManifold(steering_rows(geometry, grid.angles_deg), grid, geometry)


@dataclass(frozen=True)
class SpectralMask:
    """
    Per-tilt design target.

    ``target`` holds the desired complex response on mainlobe indices and 0
    on sidelobe indices; don't-care indices carry NaN. ``halfpower_bounds``
    is the admissible window for ``|response|^2`` at the two half-power
    angles, or None to drop that constraint.
    """

    tilt_deg: float
    grid: AngularGrid
    target: np.ndarray
    halfpower_angles_deg: Tuple[float, float]
    sll_db: float
    mainlobe_idx: np.ndarray
    sll_idx: np.ndarray
    dontcare_idx: np.ndarray
    halfpower_bounds: Optional[Tuple[float, float]] = (0.45, 0.55)
    transition_deg: float = field(default=float("nan"))

    @property
    def sll_ceiling(self) -> float:
        return 10.0 ** (-self.sll_db / 10.0)

    @property
    def halfwidth_deg(self) -> float:
        lo, hi = self.halfpower_angles_deg
        return 0.5 * (hi - lo)

    def retilt(self, tilt_deg: float) -> "SpectralMask":
        """Same mask shape centred on another tilt."""
        return build_mask(tilt_deg, self.halfwidth_deg, self.sll_db, self.transition_deg,
                          self.grid, halfpower_bounds=self.halfpower_bounds)


def build_mask(tilt_deg: float, halfpower_halfwidth_deg: float, sll_db: float,
               transition_deg: Optional[float], grid: AngularGrid,
               halfpower_bounds: Optional[Tuple[float, float]] = (0.45, 0.55)) -> SpectralMask:
    """
    Partition ``grid`` into mainlobe, don't-care band and sidelobe region.

    Parameters
    ----------
    tilt_deg : float
        Beam direction (manifold angle).
    halfpower_halfwidth_deg : float
        Mainlobe window is ``tilt +/- halfwidth``; its edges are the
        half-power angles.
    sll_db : float
        Required suppression; the ceiling is ``10**(-sll_db/10)``.
    transition_deg : float or None
        Angles within ``tilt +/- transition`` outside the mainlobe are
        don't-care. Defaults to ``halfwidth + 4.5``.
    grid : AngularGrid
    """
    if not sll_db > 0:
        raise ValueError("sll_db must be positive")
    if not halfpower_halfwidth_deg > 0:
        raise ValueError("halfpower halfwidth must be positive")
    if transition_deg is None:
        transition_deg = halfpower_halfwidth_deg + DEFAULT_TRANSITION_EXTRA_DEG
    if transition_deg < halfpower_halfwidth_deg:
        raise ValueError("transition band must be at least the mainlobe halfwidth")
    if halfpower_bounds is not None:
        lo, hi = halfpower_bounds
        if not 0 < lo <= hi:
            raise ValueError("halfpower bounds must satisfy 0 < lo <= hi")
    lo_edge, hi_edge = tilt_deg - halfpower_halfwidth_deg, tilt_deg + halfpower_halfwidth_deg
    g0, g1 = grid.bounds
    if lo_edge < g0 - 1e-9 or hi_edge > g1 + 1e-9:
        raise DomainError(f"mainlobe window [{lo_edge}, {hi_edge}] exceeds grid [{g0}, {g1}]")

    off = np.abs(grid.angles_deg - tilt_deg)
    eps = 1e-9
    main = off <= halfpower_halfwidth_deg + eps
    dont = (~main) & (off <= transition_deg + eps)
    sll = ~(main | dont)
    target = np.full(len(grid), np.nan, dtype=complex)
    target[main] = 1.0
    target[sll] = 0.0
    target.setflags(write=False)
    return SpectralMask(
        tilt_deg=float(tilt_deg),
        grid=grid,
        target=target,
        halfpower_angles_deg=(float(lo_edge), float(hi_edge)),
        sll_db=float(sll_db),
        mainlobe_idx=np.flatnonzero(main),
        sll_idx=np.flatnonzero(sll),
        dontcare_idx=np.flatnonzero(dont),
        halfpower_bounds=None if halfpower_bounds is None else (float(halfpower_bounds[0]), float(halfpower_bounds[1])),
        transition_deg=float(transition_deg),
    )


@dataclass(frozen=True)
class TiltSet:
    tilts_deg: Tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(v) for v in self.tilts_deg)
        if not t:
            raise ValueError("tilt set must be non-empty")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("tilts must be sorted and distinct")
        _check_angles(t)
        object.__setattr__(self, "tilts_deg", t)

    def __len__(self):
        return len(self.tilts_deg)

    def __iter__(self):
        return iter(self.tilts_deg)

    def check_within(self, grid: AngularGrid) -> None:
        g0, g1 = grid.bounds
        if any(t < g0 or t > g1 for t in self.tilts_deg):
            raise DomainError("tilt outside the grid bounds")

    @classmethod
    def from_range(cls, start: float, stop: float, step: float) -> "TiltSet":
        n = int(round((stop - start) / step)) + 1
        return cls(tuple(np.round(np.linspace(start, stop, n), 10)))


def masks_for_tilts(tilts: Sequence[float], halfwidth_deg: float, sll_db: float,
                    transition_deg: Optional[float], grid: AngularGrid,
                    halfpower_bounds=(0.45, 0.55)):
    return [build_mask(t, halfwidth_deg, sll_db, transition_deg, grid, halfpower_bounds=halfpower_bounds)
            for t in tilts]
