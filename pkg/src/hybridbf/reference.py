"""Full-dimension (one transceiver per antenna) reference beamformers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .array_model import ArrayManifold, SpectralMask


@dataclass(frozen=True)
class FullAaaWeights:
    tilt_deg: float
    weights: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        u = np.array(self.weights, dtype=complex).ravel()
        if not np.all(np.isfinite(u)) or not np.linalg.norm(u) > 0:
            raise ValueError("reference weights must be finite and non-zero")
        u.setflags(write=False)
        object.__setattr__(self, "weights", u)


def _check_shared_grid(manifold: ArrayManifold, mask: SpectralMask) -> None:
    if len(manifold.grid) != len(mask.grid) or not np.allclose(manifold.grid.angles_deg, mask.grid.angles_deg):
        raise ValueError("manifold and mask must share the same angular grid")


def desired_response(manifold: ArrayManifold, mask: SpectralMask) -> np.ndarray:
    """
    Mask target with the mainlobe given the linear phase of a steered uniform
    array centred on the middle element, so the LS fit does not fight the
    manifold's phase progression. Without a known geometry the target is
    used as is.
    """
    target = np.array(mask.target, dtype=complex)
    geo = manifold.geometry
    if geo is not None:
        idx = mask.mainlobe_idx
        cos_delta = np.cos(np.radians(mask.grid.angles_deg[idx])) - np.cos(np.radians(mask.tilt_deg))
        target[idx] = target[idx] * np.exp(1j * np.pi * geo.spacing_wavelengths * (geo.n_elements - 1) * cos_delta)
    return target


def ls_reference(manifold: ArrayManifold, mask: SpectralMask) -> FullAaaWeights:
    """
    Minimum-norm least-squares fit ``A u ~ target`` over mainlobe and
    sidelobe rows (don't-care rows omitted).
    """
    _check_shared_grid(manifold, mask)
    rows = np.sort(np.concatenate([mask.mainlobe_idx, mask.sll_idx]))
    a = manifold.matrix[rows]
    d = desired_response(manifold, mask)[rows]
    u, _, rank, sv = np.linalg.lstsq(a, d, rcond=None)
    cond = float(sv[0] / sv[rank - 1]) if rank > 0 else float("inf")
    meta = {"rank": int(rank), "condition_number": cond,
            "rank_deficient": bool(rank < a.shape[1])}
    return FullAaaWeights(mask.tilt_deg, u, meta)


def constrained_reference(manifold: ArrayManifold, mask: SpectralMask, settings=None) -> FullAaaWeights:
    """
    Constrained full-array design: minimum sidelobe power with unit real
    mainlobe response, half-power window and per-angle sidelobe ceilings.

    Raises
    ------
    InfeasibleDesignError
        When the constraint set cannot be met; carries the most violated
        constraint.
    """
    from .optimizer import InfeasibleDesignError, SolverSettings, optimize_dbf
    from .rfbn import RfbnMatrix

    _check_shared_grid(manifold, mask)
    if settings is None:
        settings = SolverSettings()
    settings = settings.without_pa_box()
    dbf, report = optimize_dbf(RfbnMatrix.identity(manifold.n_elements), manifold, mask, settings)
    if not report.feasible:
        raise InfeasibleDesignError(report.infeasible_constraint, report)
    meta = {"final_cost": report.final_cost, "iterations": report.iterations,
            "halfpower_dropped": report.condition_metadata.get("halfpower_dropped", False)}
    return FullAaaWeights(mask.tilt_deg, dbf.weights, meta)
