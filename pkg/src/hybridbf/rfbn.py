"""RF beamforming network matrix and its interconnect mask."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

COLUMN_NORM_TOL = 1e-10


@dataclass(frozen=True)
class InterconnectMask:
    """Boolean support of W: ``support[i, p]`` is True if transceiver p feeds antenna i."""

    support: np.ndarray

    def __post_init__(self):
        s = np.array(self.support, dtype=bool)
        if s.ndim != 2:
            raise ValueError("mask support must be 2-D")
        if not s.any(axis=0).all():
            raise ValueError(f"mask columns {np.flatnonzero(~s.any(axis=0)).tolist()} are empty")
        if not s.any(axis=1).all():
            raise ValueError(f"mask rows {np.flatnonzero(~s.any(axis=1)).tolist()} are empty")
        s.setflags(write=False)
        object.__setattr__(self, "support", s)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.support.shape

    @property
    def row_weights(self) -> np.ndarray:
        return self.support.sum(axis=1)

    @property
    def n_lines(self) -> int:
        """Number of phase-shifter lines (non-zeros)."""
        return int(self.support.sum())

    @classmethod
    def full(cls, n_rows: int, n_cols: int) -> "InterconnectMask":
        return cls(np.ones((n_rows, n_cols), dtype=bool))

    @classmethod
    def from_runs(cls, n_rows: int, runs: Sequence[Tuple[int, int]]) -> "InterconnectMask":
        """One ``(start_row, length)`` run of ones per column."""
        s = np.zeros((n_rows, len(runs)), dtype=bool)
        for p, (start, length) in enumerate(runs):
            if start < 0 or length < 1 or start + length > n_rows:
                raise ValueError(f"run {p} = ({start}, {length}) does not fit {n_rows} rows")
            s[start:start + length, p] = True
        return cls(s)

    @classmethod
    def overlapping_blocks(cls, n_rows: int, n_cols: int, block: int) -> "InterconnectMask":
        """Evenly spaced runs of ``block`` ones that overlap neighbours by one row when possible."""
        if block > n_rows:
            raise ValueError("block longer than the array")
        step = (n_rows - block) / max(n_cols - 1, 1)
        starts = [int(round(p * step)) for p in range(n_cols)]
        return cls.from_runs(n_rows, [(s, block) for s in starts])


@dataclass(frozen=True)
class RfbnMatrix:
    """
    RFBN matrix W with unit-norm columns, zero outside the mask support.
    """

    entries: np.ndarray
    mask: Optional[InterconnectMask] = None

    def __post_init__(self):
        w = np.array(self.entries, dtype=complex)
        if w.ndim != 2 or w.shape[1] < 1:
            raise ValueError("W must be a 2-D matrix with at least one column")
        if not np.all(np.isfinite(w)):
            raise ValueError("W has non-finite entries")
        if self.mask is not None:
            if self.mask.shape != w.shape:
                raise ValueError(f"mask shape {self.mask.shape} != W shape {w.shape}")
            if np.any(w[~self.mask.support] != 0):
                raise ValueError("W has entries outside the mask support")
        norms = np.linalg.norm(w, axis=0)
        if np.any(np.abs(norms - 1.0) > COLUMN_NORM_TOL):
            raise ValueError(f"W columns must have unit norm, got {norms}")
        w.setflags(write=False)
        object.__setattr__(self, "entries", w)

    @property
    def n_elements(self) -> int:
        return self.entries.shape[0]

    @property
    def n_trx(self) -> int:
        return self.entries.shape[1]

    @property
    def support(self) -> np.ndarray:
        if self.mask is not None:
            return self.mask.support
        return self.entries != 0

    @classmethod
    def normalized(cls, entries, mask: Optional[InterconnectMask] = None) -> "RfbnMatrix":
        """Apply the mask, then scale every column to unit norm."""
        w = np.array(entries, dtype=complex)
        if mask is not None:
            w = np.where(mask.support, w, 0)
        norms = np.linalg.norm(w, axis=0)
        if np.any(norms == 0):
            raise ValueError(f"columns {np.flatnonzero(norms == 0).tolist()} vanish under the mask")
        return cls(w / norms, mask)

    @classmethod
    def identity(cls, n: int) -> "RfbnMatrix":
        return cls(np.eye(n, dtype=complex))
