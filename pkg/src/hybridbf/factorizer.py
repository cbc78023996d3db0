"""
Implementable RFBN matrices: masked multistage Wiener factorisation,
Givens-rotation sparsification with DBF re-optimisation, and the claim
checks run on a realised network.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .bound import TiltMatrix
from .optimizer import DbfBank, DbfWeights, SolveReport
from .rfbn import InterconnectMask, RfbnMatrix


def _projector_residual(theta: np.ndarray, w: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(w)
    return theta - q @ (q.conj().T @ theta)


def multistage_wiener_factorize(theta_matrix, mask: InterconnectMask,
                                return_residuals: bool = False):
    """
    Greedy masked factorisation of the tilt matrix.

    For each transceiver k: take the dominant left singular vector of the
    current residual, keep only the entries allowed by column k of the
    mask, normalise, then deflate the residual by the orthogonal
    projection onto the span of all columns chosen so far.

    Raises
    ------
    ValueError
        If the mask annihilates the dominant direction for some column.
    """
    theta = theta_matrix.columns if isinstance(theta_matrix, TiltMatrix) else np.asarray(theta_matrix, dtype=complex)
    n_t, n_trx = mask.shape
    if theta.shape[0] != n_t:
        raise ValueError(f"mask has {n_t} rows but the tilt matrix has {theta.shape[0]}")
    residual = theta.copy()
    cols = []
    history = [float(np.linalg.norm(theta))]
    for k in range(n_trx):
        u, s, _ = np.linalg.svd(residual, full_matrices=False)
        lead = u[:, 0] if s.size and s[0] > 0 else np.zeros(n_t, dtype=complex)
        wk = np.where(mask.support[:, k], lead, 0)
        nrm = np.linalg.norm(wk)
        if nrm <= 1e-14 * max(1.0, np.linalg.norm(theta)):
            raise ValueError(f"mask column {k} annihilates the dominant direction")
        # fix the arbitrary SVD phase so the largest entry is real positive
        j = int(np.argmax(np.abs(wk)))
        wk = wk / nrm * np.exp(-1j * np.angle(wk[j]))
        cols.append(wk)
        residual = _projector_residual(theta, np.stack(cols, axis=1))
        history.append(float(np.linalg.norm(residual)))
    out = RfbnMatrix.normalized(np.stack(cols, axis=1), mask)
    return (out, history) if return_residuals else out


# --------------------------------------------------------------------------
# Givens sparsification


@dataclass(frozen=True)
class GivensRotation:
    """
    Unitary acting on antenna rows ``(pivot, target)``:
    ``row_pivot <- c*row_pivot + s*row_target``,
    ``row_target <- -conj(s)*row_pivot + c*row_target``.
    """

    pivot: int
    target: int
    c: float
    s: complex

    @property
    def angle_rad(self) -> float:
        return float(np.arctan2(abs(self.s), self.c))

    def matrix(self, n: int) -> np.ndarray:
        g = np.eye(n, dtype=complex)
        p, t = self.pivot, self.target
        g[p, p] = self.c
        g[p, t] = self.s
        g[t, p] = -np.conj(self.s)
        g[t, t] = self.c
        return g

    def apply(self, w: np.ndarray) -> np.ndarray:
        out = np.array(w, dtype=complex)
        rp, rt = out[self.pivot].copy(), out[self.target].copy()
        out[self.pivot] = self.c * rp + self.s * rt
        out[self.target] = -np.conj(self.s) * rp + self.c * rt
        return out

    @classmethod
    def zeroing(cls, w: np.ndarray, pivot: int, target: int, column: int) -> "GivensRotation":
        """Rotation that zeroes ``w[target, column]`` against ``w[pivot, column]``."""
        a, b = complex(w[pivot, column]), complex(w[target, column])
        r = np.hypot(abs(a), abs(b))
        if r == 0:
            return cls(pivot, target, 1.0, 0j)
        if abs(a) == 0:
            return cls(pivot, target, 0.0, np.conj(b) / abs(b))
        return cls(pivot, target, abs(a) / r, (a / abs(a)) * np.conj(b) / r)


def apply_rotations(w: np.ndarray, rotations: Sequence[GivensRotation]) -> np.ndarray:
    out = np.array(w, dtype=complex)
    for rot in rotations:
        out = rot.apply(out)
    return out


@dataclass(frozen=True)
class Mismatch:
    row: int
    inputs: Tuple[int, int]
    phase_deg: float
    amplitude_db: float
    severity: float


def combiner_mismatches(w: np.ndarray, upsilon: np.ndarray, phase_threshold_deg: float,
                        amplitude_threshold_db: float = 3.0, rel_floor: float = 1e-6) -> List[Mismatch]:
    """
    Pairs of combiner inputs ``w[i, j] * upsilon[j, t]`` at one antenna
    whose phase difference or amplitude ratio exceeds its threshold on
    some tilt. Inputs below ``rel_floor`` of the row peak are inactive.
    """
    found = []
    n_t, n_trx = w.shape
    for i in range(n_t):
        terms = w[i][:, None] * upsilon  # n_trx x n_tilts
        mag = np.abs(terms)
        for j in range(n_trx):
            for l in range(j + 1, n_trx):
                worst_p = worst_a = 0.0
                for t in range(upsilon.shape[1]):
                    peak = mag[:, t].max()
                    if peak == 0 or mag[j, t] <= rel_floor * peak or mag[l, t] <= rel_floor * peak:
                        continue
                    dp = abs(np.degrees(np.angle(terms[j, t] * np.conj(terms[l, t]))))
                    da = abs(20 * np.log10(mag[j, t] / mag[l, t]))
                    worst_p, worst_a = max(worst_p, dp), max(worst_a, da)
                sev = max(worst_p / phase_threshold_deg, worst_a / amplitude_threshold_db)
                if sev > 1.0:
                    found.append(Mismatch(i, (j, l), worst_p, worst_a, sev))
    found.sort(key=lambda m: (-m.severity, m.row, m.inputs))
    return found


def _rotation_for(w: np.ndarray, upsilon: np.ndarray, mm: Mismatch) -> Optional[GivensRotation]:
    """Zero the weaker of the two mismatched inputs using an adjacent antenna row."""
    i = mm.row
    j, l = mm.inputs
    energy = [np.sum(np.abs(w[i, k] * upsilon[k])) for k in (j, l)]
    col = l if energy[1] < energy[0] or (energy[1] == energy[0]) else j
    cands = [p for p in (i - 1, i + 1) if 0 <= p < w.shape[0]]
    if not cands:
        return None
    mags = [abs(w[p, col]) for p in cands]
    pivot = cands[int(np.argmax(mags))] if mags[0] != mags[-1] else min(cands)
    return GivensRotation.zeroing(w, pivot, i, col)


def givens_sparsify(rfbn: RfbnMatrix, dbf_bank: DbfBank, mismatch_threshold_deg: float = 30.0,
                    max_rotations: int = 20,
                    reopt: Optional[Callable[[RfbnMatrix, int, DbfWeights], Tuple[DbfWeights, SolveReport]]] = None,
                    amplitude_threshold_db: float = 3.0, reports: Optional[Sequence[SolveReport]] = None):
    """
    Sparsify W with Givens rotations until combiner inputs are matched.

    Each step picks the most severe combiner-input mismatch of ``W Υ``,
    zeroes the weaker entry with a rotation against an adjacent antenna
    row and re-optimises every tilt's DBF through ``reopt(W, k, dbf_k)``.
    A rotation that makes a previously feasible tilt infeasible, or raises
    the sidelobe peak of a tilt that already misses its mask, is rolled
    back and the next candidate is tried. A rotation must also lower the
    summed mismatch severity, so a mismatch cannot just hop to the pivot
    row and back. The loop ends when no
    candidate survives, no mismatch is left, or ``max_rotations`` is hit.

    Returns
    -------
    (RfbnMatrix, DbfBank, list of GivensRotation)
    """
    if not mismatch_threshold_deg > 0:
        raise ValueError("mismatch threshold must be positive")
    if dbf_bank.n_trx != rfbn.n_trx:
        raise ValueError("DBF bank and RFBN disagree on N_trx")
    w = rfbn.entries.copy()
    bank = dbf_bank
    feasible = [True] * len(bank)
    peaks = [np.inf] * len(bank)
    if reports is not None:
        feasible = [r.feasible for r in reports]
        peaks = [r.condition_metadata.get("sidelobe_peak", np.inf) for r in reports]
    rotations: List[GivensRotation] = []
    tried = set()

    def _severity(w_, ups):
        return sum(m.severity for m in combiner_mismatches(w_, ups, mismatch_threshold_deg, amplitude_threshold_db))

    while len(rotations) < max_rotations:
        mism = combiner_mismatches(w, bank.matrix, mismatch_threshold_deg, amplitude_threshold_db)
        total = sum(m.severity for m in mism)
        accepted = False
        for mm in mism:
            rot = _rotation_for(w, bank.matrix, mm)
            if rot is None:
                continue
            key = (len(rotations), rot.pivot, rot.target, mm.inputs)
            if key in tried:
                continue
            tried.add(key)
            w_new = rot.apply(w)
            w_new[np.abs(w_new) < 1e-13] = 0
            cand = RfbnMatrix.normalized(w_new)
            if _severity(cand.entries, bank.matrix) >= total * (1 - 1e-9):
                continue
            if reopt is None:
                new_bank, new_feas, new_peaks = bank, feasible, peaks
            else:
                results = [reopt(cand, k, bank[k]) for k in range(len(bank))]
                new_bank = DbfBank(tuple(r[0] for r in results))
                new_feas = [r[1].feasible for r in results]
                new_peaks = [r[1].condition_metadata.get("sidelobe_peak", 0.0) for r in results]
            if any(f and not nf for f, nf in zip(feasible, new_feas)):
                continue  # roll back
            # a tilt already short of its mask may not get worse
            if any(not nf and np_ > p * (1 + 1e-9) for nf, np_, p in zip(new_feas, new_peaks, peaks)):
                continue
            w, bank, feasible, peaks = cand.entries.copy(), new_bank, new_feas, new_peaks
            rotations.append(rot)
            accepted = True
            break
        if not accepted:
            break
    return RfbnMatrix(w), bank, rotations


# --------------------------------------------------------------------------
# claim checks


def linear_phase_deviation_deg(x: np.ndarray, rel_floor: float = 1e-3) -> float:
    """
    Largest deviation of the port phases of ``x`` from their best-fit
    straight line (degrees). Ports below ``rel_floor`` of the peak
    amplitude are ignored.
    """
    x = np.asarray(x, dtype=complex)
    idx = np.flatnonzero(np.abs(x) > rel_floor * np.abs(x).max())
    if idx.size < 3:
        return 0.0
    # slope from the amplitude-weighted mean phase step of adjacent ports
    adj = idx[:-1][np.diff(idx) == 1]
    slope = float(np.angle(np.sum(x[adj + 1] * np.conj(x[adj])))) if adj.size else 0.0
    detrended = x[idx] * np.exp(-1j * slope * idx)
    offset = np.angle(np.sum(detrended))
    dev = np.angle(detrended * np.exp(-1j * offset))
    # refine by least squares on the now-unwrapped residual
    a = np.stack([np.ones(idx.size), idx], axis=1)
    coef, *_ = np.linalg.lstsq(a, dev, rcond=None)
    resid = dev - a @ coef
    return float(np.degrees(np.max(np.abs(resid))))


@dataclass
class ClaimReport:
    combiner_counts: List[int]
    lossy_combiner_counts: List[int]
    hybrid_count: int
    combiner_bound: int
    claim1_ok: bool
    claim2_ok: bool
    n_phase_lines: int
    linear_phase_dev_deg: List[float]
    magnitude_asymmetry: List[float]
    unpaired_couplers: List[int] = field(default_factory=list)

    @property
    def max_linear_phase_dev_deg(self) -> float:
        return max(self.linear_phase_dev_deg) if self.linear_phase_dev_deg else 0.0


def verify_claims(network, dbf_bank: DbfBank, ideal_w: Optional[np.ndarray] = None) -> ClaimReport:
    """
    Diagnostics for a realised network: combiner counts against the
    ``N_trx - 1`` bound, the linear-phase check of ``W ϑ`` at the antenna
    ports and magnitude symmetry about the array centre.
    """
    from .microwave import network_matrix

    n_trx = network.n_transceivers
    w = network_matrix(network) if ideal_w is None else np.asarray(ideal_w)
    counts, lossy = [], []
    hybrids = 0
    for stage in network.stages:
        if stage.stage_kind != "combiner":
            continue
        counts.append(len(stage.elements))
        lossy.append(sum(1 for e in stage.elements if e.kind == "Wilkinson3Port"))
        hybrids += sum(1 for e in stage.elements if e.kind == "RatRace4Port")
    bound = n_trx - 1
    lin, sym = [], []
    for d in dbf_bank:
        x = w @ d.weights
        lin.append(linear_phase_deviation_deg(x))
        m = np.abs(x)
        sym.append(float(np.max(np.abs(m - m[::-1])) / max(m.max(), 1e-300)))
    return ClaimReport(
        combiner_counts=counts,
        lossy_combiner_counts=lossy,
        hybrid_count=hybrids,
        combiner_bound=bound,
        claim1_ok=all(c <= bound for c in lossy),
        claim2_ok=hybrids <= bound,
        n_phase_lines=network.n_phase_lines,
        linear_phase_dev_deg=lin,
        magnitude_asymmetry=sym,
        unpaired_couplers=list(network.metadata.get("unpaired_couplers", [])),
    )
