"""Minimum transceiver count from the singular spectrum of stacked tilt weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .reference import FullAaaWeights
from .rfbn import RfbnMatrix

ORTHONORMAL_TOL = 1e-10


@dataclass(frozen=True)
class TiltMatrix:
    """Column j holds the full-array weights for ``tilts_deg[j]``."""

    columns: np.ndarray
    tilts_deg: tuple

    def __post_init__(self):
        c = np.array(self.columns, dtype=complex)
        if c.ndim != 2 or c.shape[1] != len(self.tilts_deg):
            raise ValueError("tilt matrix needs one column per tilt")
        c.setflags(write=False)
        object.__setattr__(self, "columns", c)
        object.__setattr__(self, "tilts_deg", tuple(float(t) for t in self.tilts_deg))

    @property
    def shape(self):
        return self.columns.shape


def stack_tilts(references: Sequence[FullAaaWeights]) -> TiltMatrix:
    """Stack reference weight vectors as columns, ordered by ascending tilt."""
    if not references:
        raise ValueError("no reference beamformers to stack")
    n = {r.weights.size for r in references}
    if len(n) != 1:
        raise ValueError(f"references disagree on array size: {sorted(n)}")
    tilts = [r.tilt_deg for r in references]
    if len(set(tilts)) != len(tilts):
        raise ValueError("duplicate tilt in reference set")
    order = np.argsort(tilts, kind="stable")
    cols = np.stack([references[i].weights for i in order], axis=1)
    return TiltMatrix(cols, tuple(tilts[i] for i in order))


@dataclass(frozen=True)
class SvdBound:
    singular_values: np.ndarray
    left_vectors: np.ndarray
    energy_threshold: float
    n_trx_min: int
    used_tilt_indices: tuple = ()

    def energy_fraction(self, r: int) -> float:
        s2 = self.singular_values ** 2
        return float(s2[:r].sum() / s2.sum())


def extreme_tilt_indices(n_tilts: int, n_keep: int) -> np.ndarray:
    """First and last tilt plus evenly spaced interior ones."""
    if n_tilts <= n_keep:
        return np.arange(n_tilts)
    return np.unique(np.round(np.linspace(0, n_tilts - 1, n_keep)).astype(int))


def min_transceivers(theta_matrix: TiltMatrix, energy_threshold: float = 0.995) -> SvdBound:
    """
    Smallest rank r whose leading singular values retain ``energy_threshold``
    of the Frobenius energy of the tilt matrix.

    When there are more tilts than antennas only the extreme and evenly
    spaced interior tilts (``N_t`` of them) are kept.
    """
    if not 0.0 < energy_threshold < 1.0:
        raise ValueError("energy_threshold must lie in (0, 1)")
    cols = theta_matrix.columns
    n_t, n_theta = cols.shape
    keep = extreme_tilt_indices(n_theta, n_t)
    cols = cols[:, keep]
    if not np.any(cols):
        raise ValueError("tilt matrix is identically zero")
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    energy = np.cumsum(s ** 2)
    # tiny relative slack so exact-threshold cases are not lost to rounding
    r = int(np.searchsorted(energy, energy_threshold * energy[-1] * (1 - 1e-13)) + 1)
    return SvdBound(s, u, float(energy_threshold), min(r, s.size), tuple(int(i) for i in keep))


def dominant_basis(bound: SvdBound, n_trx: int) -> RfbnMatrix:
    """Leading ``n_trx`` left singular vectors as an (unmasked) RFBN matrix."""
    avail = bound.left_vectors.shape[1]
    if n_trx < 1 or n_trx > avail:
        raise ValueError(f"n_trx={n_trx} outside 1..{avail} available singular vectors")
    return RfbnMatrix.normalized(bound.left_vectors[:, :n_trx])


def truncation_residual(theta: np.ndarray, basis: np.ndarray) -> float:
    """Frobenius norm of the part of ``theta`` outside ``span(basis)``."""
    q, _ = np.linalg.qr(basis)
    return float(np.linalg.norm(theta - q @ (q.conj().T @ theta)))
