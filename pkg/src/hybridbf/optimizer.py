"""
Digital beamformer design for a fixed RFBN, joint RFBN/DBF design over a
tilt range, and DBF re-optimisation after transceiver failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import barrier as bar
from .array_model import ArrayManifold, SpectralMask, TiltSet
from .reference import FullAaaWeights, _check_shared_grid, desired_response
from .rfbn import InterconnectMask, RfbnMatrix

FEASIBILITY_TOL = 1e-6


class InfeasibleDesignError(RuntimeError):
    """A design problem has no point satisfying all of its constraints."""

    def __init__(self, constraint: Optional[str], report=None):
        super().__init__(f"infeasible design; most violated constraint: {constraint}")
        self.constraint = constraint
        self.report = report


def pa_bounds_for(n_trx: int, range_db: float = 1.0, anchor: Optional[float] = None) -> Tuple[float, float]:
    """Per-PA power window ``[anchor, anchor * 10**(range_db/10)]``, anchored at ``1/n_trx`` by default."""
    lo = 1.0 / n_trx if anchor is None else anchor
    return lo, lo * 10.0 ** (range_db / 10.0)


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 500
    tolerance: float = 1e-6
    barrier_mu0: float = 1.0
    barrier_shrink: float = 0.2
    pa_power_bounds: Optional[Tuple[float, float]] = None
    random_seed: int = 42
    ccp_iterations: int = 5
    barrier_tolerance: float = 1e-7
    diagonal_loading: float = 1e-8

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.barrier_mu0 > 0 and 0 < self.barrier_shrink < 1):
            raise ValueError("barrier schedule needs mu0 > 0 and shrink in (0, 1)")
        if self.pa_power_bounds is not None:
            lo, hi = self.pa_power_bounds
            if not 0 < lo <= hi:
                raise ValueError("pa_power_bounds must satisfy 0 < lo <= hi")
            object.__setattr__(self, "pa_power_bounds", (float(lo), float(hi)))

    def without_pa_box(self) -> "SolverSettings":
        return replace(self, pa_power_bounds=None)


@dataclass(frozen=True)
class DbfWeights:
    """
    Per-tilt DBF vector. ``mainlobe_response`` is the (real positive)
    array response at the tilt; :attr:`normalized` rescales to unit
    mainlobe gain.
    """

    tilt_deg: float
    weights: np.ndarray
    mainlobe_response: float = 1.0
    failed_tx: Tuple[int, ...] = ()

    def __post_init__(self):
        v = np.array(self.weights, dtype=complex).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("DBF weights must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "weights", v)

    @property
    def normalized(self) -> np.ndarray:
        return self.weights / self.mainlobe_response


@dataclass(frozen=True)
class DbfBank:
    entries: Tuple[DbfWeights, ...]

    def __post_init__(self):
        e = tuple(self.entries)
        if not e:
            raise ValueError("DBF bank is empty")
        if len({d.weights.size for d in e}) != 1:
            raise ValueError("DBF bank entries disagree on N_trx")
        object.__setattr__(self, "entries", e)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def tilts_deg(self) -> Tuple[float, ...]:
        return tuple(d.tilt_deg for d in self.entries)

    @property
    def matrix(self) -> np.ndarray:
        """Upsilon, one column per tilt."""
        return np.stack([d.weights for d in self.entries], axis=1)

    @property
    def normalized_matrix(self) -> np.ndarray:
        return np.stack([d.normalized for d in self.entries], axis=1)

    @property
    def n_trx(self) -> int:
        return self.entries[0].weights.size

    @classmethod
    def identity(cls, n: int, tilts: Sequence[float]) -> "DbfBank":
        return cls(tuple(DbfWeights(t, np.eye(n)[:, k]) for k, t in enumerate(tilts)))


@dataclass
class SolveReport:
    converged: bool
    feasible: bool
    iterations: int
    final_cost: float
    constraint_violations: Dict[str, float]
    condition_metadata: Dict[str, object] = field(default_factory=dict)
    infeasible_constraint: Optional[str] = None
    cost_history: List[float] = field(default_factory=list)
    tilt_reports: List["SolveReport"] = field(default_factory=list)

    @property
    def infeasible_tilts(self) -> List[float]:
        return [r.condition_metadata.get("tilt_deg") for r in self.tilt_reports if not r.feasible]


# --------------------------------------------------------------------------
# single-tilt DBF


class _DbfProblem:
    """Real parametrisation of a DBF design with the mainlobe equality eliminated."""

    def __init__(self, w: np.ndarray, manifold: ArrayManifold, mask: SpectralMask, settings: SolverSettings):
        self.w = w
        self.mask = mask
        self.settings = settings
        n_trx = w.shape[1]
        self.h_main = (manifold.rows_at(mask.tilt_deg) @ w)[0]
        self.h_side = manifold.matrix[mask.sll_idx] @ w
        self.h_half = manifold.rows_at(mask.halfpower_angles_deg) @ w if mask.halfpower_bounds else np.zeros((0, n_trx))
        nrm2 = float(np.vdot(self.h_main, self.h_main).real)
        self.degenerate = nrm2 <= 1e-24 * max(1.0, float(np.abs(w).max()) ** 2)
        if self.degenerate:
            return
        # h_main @ v = 1 for v = v0 + null @ z
        self.v0 = self.h_main.conj() / nrm2
        _, _, vh = np.linalg.svd(self.h_main[None, :])
        null = vh[1:].conj().T
        k = null.shape[1]
        self.n_free = 2 * k
        self.pa = settings.pa_power_bounds
        self.n_var = self.n_free + (1 if self.pa else 0)
        self.tau = self.n_free if self.pa else None
        self.basis = np.zeros((n_trx, self.n_var), dtype=complex)
        self.basis[:, :k] = null
        self.basis[:, k:2 * k] = 1j * null
        gram = self.h_side.conj().T @ self.h_side
        load = settings.diagonal_loading * max(np.trace(gram).real / n_trx, 1e-300)
        q = gram + load * (w.conj().T @ w)
        self.gram = gram
        b = self.basis
        self.objective = bar.Objective((b.conj().T @ q @ b).real, (b.conj().T @ q @ self.v0).real,
                                       float(np.vdot(self.v0, q @ self.v0).real))

    def vector(self, x) -> np.ndarray:
        return self.v0 + self.basis @ x

    def x_from_vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        resp = self.h_main @ v
        if abs(resp) < 1e-300:
            v, resp = self.v0, 1.0
        v = v / resp
        k = self.n_free // 2
        z = self.basis[:, :k].conj().T @ v
        x = np.concatenate([z.real, z.imag])
        if self.pa:
            lo, hi = self.pa
            x = np.append(x, np.sqrt(np.mean(np.abs(v) ** 2) / (0.5 * (lo + hi))))
        return x

    def cost(self, v) -> float:
        return float(np.vdot(v, self.gram @ v).real)

    def sidelobe_block(self, bound=None):
        bound = self.mask.sll_ceiling if bound is None else bound
        return bar.ModulusBlock(self.h_side @ self.basis, self.h_side @ self.v0, bound, label="sidelobe")

    def hard_blocks(self, pa_phase, half_phase, use_half):
        blocks = []
        if use_half and self.h_half.shape[0]:
            lo, hi = self.mask.halfpower_bounds
            a = self.h_half @ self.basis
            b = self.h_half @ self.v0
            blocks.append(bar.ModulusBlock(a, b, hi, label="halfpower-upper"))
            rot = np.exp(-1j * half_phase)
            blocks.append(bar.LinearBlock(-(rot[:, None] * a).real, np.sqrt(lo) - (rot * b).real,
                                          label="halfpower-lower"))
        if self.pa:
            lo, hi = self.pa
            blocks.append(bar.QuadOverLinearBlock(self.basis, self.v0, hi, self.tau, label="pa-upper"))
            rot = np.exp(-1j * pa_phase)
            lin = -(rot[:, None] * self.basis).real / np.sqrt(lo)
            lin[:, self.tau] += 1.0
            blocks.append(bar.LinearBlock(lin, -(rot * self.v0).real / np.sqrt(lo), label="pa-lower"))
        return blocks

    def half_reference_phase(self, geometry) -> np.ndarray:
        if self.h_half.shape[0] == 0 or geometry is None:
            return np.zeros(self.h_half.shape[0])
        cos_delta = np.cos(np.radians(self.mask.halfpower_angles_deg)) - np.cos(np.radians(self.mask.tilt_deg))
        return np.pi * geometry.spacing_wavelengths * (geometry.n_elements - 1) * cos_delta

    def violations(self, v, scale, use_half=True) -> Dict[str, float]:
        """Constraint slacks on the returned vector ``v`` (mainlobe response 1/scale)."""
        vn = v * scale
        out = {"mainlobe": float(abs(self.h_main @ vn - 1.0))}
        if self.h_side.shape[0]:
            out["sidelobe"] = float(np.max(np.abs(self.h_side @ vn) ** 2) - self.mask.sll_ceiling)
        if self.h_half.shape[0] and self.mask.halfpower_bounds:
            lo, hi = self.mask.halfpower_bounds
            p = np.abs(self.h_half @ vn) ** 2
            out["halfpower-upper"] = float(np.max(p - hi))
            out["halfpower-lower"] = float(np.max(lo - p))
        if self.pa:
            lo, hi = self.pa
            p = np.abs(v) ** 2
            out["pa-upper"] = float(np.max(p - hi))
            out["pa-lower"] = float(np.max(lo - p))
        return out


def _ls_warm_start(w, manifold, mask):
    rows = np.sort(np.concatenate([mask.mainlobe_idx, mask.sll_idx]))
    d = desired_response(manifold, mask)[rows]
    return np.linalg.lstsq(manifold.matrix[rows] @ w, d, rcond=None)[0]


def optimize_dbf(rfbn: RfbnMatrix, manifold: ArrayManifold, mask: SpectralMask,
                 settings: Optional[SolverSettings] = None, warm_start=None) -> Tuple[DbfWeights, SolveReport]:
    """
    Minimum sidelobe-power DBF for a fixed RFBN.

    Constraints: unit real mainlobe response, half-power window at the
    mask's half-power angles, per-angle sidelobe ceilings and, when
    ``settings.pa_power_bounds`` is set, a per-PA power window. The PA
    window fixes power ratios between PAs; the common scale is free
    because the mainlobe equality already fixes it, and the returned
    vector is scaled into the window. Lower bounds (half-power and PA)
    are convexified by fixing the phase of their arguments and
    re-linearising a few times.

    Returns
    -------
    (DbfWeights, SolveReport)
        On infeasibility the best-effort minimax solution is returned
        with ``report.feasible = False`` and the most violated constraint
        named in ``report.infeasible_constraint``.
    """
    settings = settings or SolverSettings()
    _check_shared_grid(manifold, mask)
    w = rfbn.entries
    if w.shape[0] != manifold.n_elements:
        raise ValueError("RFBN rows must match the number of antennas")
    prob = _DbfProblem(w, manifold, mask, settings)
    n_trx = w.shape[1]
    if prob.degenerate:
        rep = SolveReport(False, False, 0, float("inf"), {"mainlobe": 1.0},
                          {"tilt_deg": mask.tilt_deg}, infeasible_constraint="mainlobe")
        return DbfWeights(mask.tilt_deg, np.zeros(n_trx)), rep

    start = warm_start if warm_start is not None else _ls_warm_start(w, manifold, mask)
    x = prob.x_from_vector(start)
    v = prob.vector(x)
    pa_phase = np.angle(v)
    half_phase = prob.half_reference_phase(manifold.geometry)
    use_half = prob.h_half.shape[0] > 0
    half_dropped = False
    eps = mask.sll_ceiling
    side_n = prob.h_side.shape[0]
    newton = 0
    history: List[float] = []
    certificate = None
    best = None
    kw = dict(mu0=settings.barrier_mu0, shrink=settings.barrier_shrink)

    for ccp in range(max(1, settings.ccp_iterations)):
        hard = prob.hard_blocks(pa_phase, half_phase, use_half)
        if hard and not (bar.strictly_feasible(hard, x) and bar.max_violation(hard, x) < -1e-9):
            x1, slack = bar.phase_one(hard, x)
            if slack >= 0 and use_half:
                use_half, half_dropped = False, True
                hard = prob.hard_blocks(pa_phase, half_phase, use_half)
                x1, slack = bar.phase_one(hard, x) if hard else (x, -1.0)
            if slack >= 0:
                vals = {blk.label: float(blk.values(x1).max()) for blk in hard}
                certificate = max(vals, key=vals.get)
                best = (x1, False)
                break
            x = x1

        side_ok = True
        if side_n:
            peak = float(np.max(np.abs(prob.h_side @ prob.vector(x)) ** 2))
            if peak >= eps:
                n = x.size
                ext = [bar._Padded(b, n) for b in hard]
                side = bar._Padded(prob.sidelobe_block(bound=0.0), n).shifted(n)
                obj = bar.Objective.linear(np.concatenate([np.zeros(n), [1.0]]))
                xs = np.append(x, peak * 1.05 + 1e-12)
                target = 0.98 * eps

                def reached(z, _n=n):
                    return float(np.max(np.abs(prob.h_side @ prob.vector(z[:_n])) ** 2)) < target

                res = bar.barrier_minimize(obj, ext + [side], xs, tol=settings.barrier_tolerance, **kw,
                                           stop=reached)
                newton += res.newton_steps
                x = res.x[:n]
                side_ok = res.stopped_early
                if not side_ok:
                    certificate = "sidelobe"

        if side_ok:
            blocks = hard + ([prob.sidelobe_block()] if side_n else [])
            res = bar.barrier_minimize(prob.objective, blocks, x, tol=settings.barrier_tolerance, **kw)
            newton += res.newton_steps
            x = res.x
            certificate = None
        v = prob.vector(x)
        history.append(prob.cost(v))
        best = (x, side_ok)
        if prob.pa is None and not use_half:
            break
        pa_phase = np.angle(v)
        if use_half:
            half_phase = np.angle(prob.h_half @ v)
        if len(history) > 1 and abs(history[-2] - history[-1]) <= 1e-6 * max(abs(history[-1]), 1e-12):
            break

    x, _ = best
    v = prob.vector(x)
    if prob.pa:
        scale = x[prob.tau]
        # the pattern fixes v only up to scale; run the strongest PA at the
        # top of its window whenever the weakest stays inside
        lo, hi = prob.pa
        top = float(np.abs(v).max()) / np.sqrt(hi)
        if top > 0 and float(np.abs(v).min()) ** 2 >= lo * top ** 2 * (1 - 1e-12):
            scale = top
        out = v / scale
    else:
        scale = 1.0
        out = v
    viol = prob.violations(out, scale)
    bad = {k: s for k, s in viol.items() if s > FEASIBILITY_TOL}
    feasible = not bad
    if not feasible and certificate is None:
        certificate = max(bad, key=bad.get)
    meta = {
        "tilt_deg": mask.tilt_deg,
        "halfpower_dropped": half_dropped,
        "newton_steps": newton,
        "ccp_iterations": len(history),
        "sidelobe_peak": float(np.max(np.abs(prob.h_side @ v) ** 2)) if side_n else 0.0,
        "gram_condition": float(np.linalg.cond(prob.gram)) if side_n else float("inf"),
    }
    rep = SolveReport(converged=feasible, feasible=feasible, iterations=len(history),
                      final_cost=prob.cost(v), constraint_violations=viol, condition_metadata=meta,
                      infeasible_constraint=None if feasible else certificate, cost_history=history)
    return DbfWeights(mask.tilt_deg, out, mainlobe_response=1.0 / scale), rep


def dbf_cost(rfbn: RfbnMatrix, manifold: ArrayManifold, mask: SpectralMask, weights) -> float:
    """Sidelobe power of ``W weights`` with the mainlobe response normalised to one."""
    w = rfbn.entries if isinstance(rfbn, RfbnMatrix) else np.asarray(rfbn)
    x = w @ np.asarray(weights, dtype=complex)
    main = manifold.rows_at(mask.tilt_deg)[0] @ x
    side = manifold.matrix[mask.sll_idx] @ x
    return float(np.sum(np.abs(side) ** 2) / abs(main) ** 2)


def dbf_sweep(rfbn: RfbnMatrix, manifold: ArrayManifold, masks: Sequence[SpectralMask],
              settings: Optional[SolverSettings] = None, warm_starts=None) -> Tuple[DbfBank, List[SolveReport]]:
    """
    DBFs for a fixed ``W`` over consecutive tilts, each solve warm-started
    from its neighbour so the weights follow one continuous branch.
    ``warm_starts[k]``, when not None, overrides the neighbour for tilt k.
    """
    if not masks:
        raise ValueError("no tilts to sweep")
    if warm_starts is not None and len(warm_starts) != len(masks):
        raise ValueError("one warm start (or None) per mask")
    out, reps = [], []
    prev = None
    for k, m in enumerate(masks):
        ws = prev if warm_starts is None or warm_starts[k] is None else warm_starts[k]
        d, r = optimize_dbf(rfbn, manifold, m, settings, warm_start=ws)
        out.append(d)
        reps.append(r)
        prev = d.normalized
    return DbfBank(tuple(out)), reps


def reoptimize_on_failure(rfbn: RfbnMatrix, failed_tx, manifold: ArrayManifold, mask: SpectralMask,
                          settings: Optional[SolverSettings] = None, warm_start=None) -> Tuple[DbfWeights, SolveReport]:
    """
    Re-design the DBF with the failed transceivers (0-based) removed.
    Their entries are zero in the returned full-length vector.
    """
    failed = sorted({int(k) for k in failed_tx})
    n = rfbn.n_trx
    if any(k < 0 or k >= n for k in failed):
        raise ValueError(f"failed transceiver index out of range 0..{n - 1}")
    if len(failed) >= n:
        raise ValueError("all transceivers failed")
    if not failed:
        return optimize_dbf(rfbn, manifold, mask, settings, warm_start)
    keep = [k for k in range(n) if k not in failed]
    sub_mask = None if rfbn.mask is None else InterconnectMask(rfbn.mask.support[:, keep]) \
        if rfbn.mask.support[:, keep].any(axis=1).all() else None
    sub = RfbnMatrix(rfbn.entries[:, keep], sub_mask)
    ws = None if warm_start is None else np.asarray(warm_start)[keep]
    dbf, rep = optimize_dbf(sub, manifold, mask, settings, ws)
    full = np.zeros(n, dtype=complex)
    full[keep] = dbf.weights
    rep.condition_metadata["degraded_mode"] = True
    rep.condition_metadata["failed_tx"] = failed
    return DbfWeights(mask.tilt_deg, full, dbf.mainlobe_response, tuple(failed)), rep


# --------------------------------------------------------------------------
# joint RFBN / DBF design


def _lexi(n_bad: int, cost: float) -> Tuple[int, float]:
    return (n_bad, cost)


def _initial_rfbn(theta: np.ndarray, n_trx: int, mask_s: Optional[InterconnectMask], energy_threshold: float):
    from .bound import TiltMatrix, dominant_basis, min_transceivers
    from .factorizer import multistage_wiener_factorize

    n_t = theta.shape[0]
    if n_trx > n_t:
        raise ValueError(f"n_trx={n_trx} exceeds the number of antennas {n_t}")
    if mask_s is not None:
        return multistage_wiener_factorize(theta, mask_s)
    bound = min_transceivers(TiltMatrix(theta, tuple(range(theta.shape[1]))), energy_threshold)
    if n_trx <= bound.left_vectors.shape[1]:
        return dominant_basis(bound, n_trx)
    # more transceivers than independent tilts: complete the basis
    u = np.linalg.svd(theta, full_matrices=True)[0]
    return RfbnMatrix.normalized(u[:, :n_trx])


def fit_rfbn(theta: np.ndarray, upsilon: np.ndarray, support: Optional[np.ndarray]) -> np.ndarray:
    """
    Row-wise minimum-norm least squares for ``theta ~ W upsilon`` with
    ``W`` restricted to ``support``.
    """
    n_t = theta.shape[0]
    n_trx = upsilon.shape[0]
    w = np.zeros((n_t, n_trx), dtype=complex)
    for i in range(n_t):
        cols = np.arange(n_trx) if support is None else np.flatnonzero(support[i])
        if cols.size == 0:
            continue
        sol = np.linalg.lstsq(upsilon[cols].T, theta[i], rcond=None)[0]
        w[i, cols] = sol
    return w


def optimize_joint(manifold: ArrayManifold, tilts: TiltSet, masks: Sequence[SpectralMask], n_trx: int,
                   mask_S: Optional[InterconnectMask] = None, settings: Optional[SolverSettings] = None,
                   references: Optional[Sequence[FullAaaWeights]] = None,
                   energy_threshold: float = 0.995):
    """
    Alternating design of one RFBN ``W`` and per-tilt DBFs.

    ``W`` starts from the dominant singular basis of the stacked full-array
    references (or their masked multistage Wiener factorisation when
    ``mask_S`` is given). Each round solves every tilt's DBF for the current
    ``W`` and then refits ``W`` to the references by masked least squares.
    A refit is kept only if it does not increase (number of infeasible
    tilts, total sidelobe cost), so the recorded cost never increases.

    Returns
    -------
    (RfbnMatrix, DbfBank, SolveReport)
    """
    settings = settings or SolverSettings()
    if n_trx < 1:
        raise ValueError("n_trx must be at least 1")
    if tilts is None or len(tilts) == 0:
        raise ValueError("tilt set is empty")
    if len(masks) != len(tilts):
        raise ValueError(f"{len(masks)} masks for {len(tilts)} tilts")
    for t, m in zip(tilts, masks):
        _check_shared_grid(manifold, m)
        if abs(m.tilt_deg - t) > 1e-9:
            raise ValueError(f"mask tilt {m.tilt_deg} does not match tilt {t}")
    if mask_S is not None and mask_S.shape != (manifold.n_elements, n_trx):
        raise ValueError(f"interconnect mask shape {mask_S.shape} != ({manifold.n_elements}, {n_trx})")

    if references is None:
        eye = RfbnMatrix.identity(manifold.n_elements)
        references = [FullAaaWeights(m.tilt_deg, optimize_dbf(eye, manifold, m, settings.without_pa_box())[0].weights)
                      for m in masks]
    theta = np.stack([r.weights for r in references], axis=1)
    support = None if mask_S is None else mask_S.support

    def solve_all(w: RfbnMatrix, warm=None):
        out = [optimize_dbf(w, manifold, m, settings, None if warm is None else warm[k])
               for k, m in enumerate(masks)]
        bank = DbfBank(tuple(d for d, _ in out))
        reps = [r for _, r in out]
        return bank, reps, sum(not r.feasible for r in reps), float(sum(r.final_cost for r in reps))

    w = _initial_rfbn(theta, n_trx, mask_S, energy_threshold)
    if mask_S is not None:
        w = RfbnMatrix.normalized(w.entries, mask_S)
    bank, reps, n_bad, cost = solve_all(w)
    history = [cost]
    converged = False
    it = 0
    for it in range(1, settings.max_iterations + 1):
        try:
            cand = RfbnMatrix.normalized(fit_rfbn(theta, bank.normalized_matrix, support), mask_S)
        except ValueError:
            converged = True
            break
        warm = [d.normalized for d in bank]
        c_bank, c_reps, c_bad, c_cost = solve_all(cand, warm)
        if _lexi(c_bad, c_cost) >= _lexi(n_bad, cost):
            converged = True
            break
        rel = abs(cost - c_cost) / max(abs(cost), 1e-300)
        w, bank, reps, n_bad, cost = cand, c_bank, c_reps, c_bad, c_cost
        history.append(cost)
        if rel < settings.tolerance:
            converged = True
            break

    viol: Dict[str, float] = {}
    for r in reps:
        for k, v in r.constraint_violations.items():
            viol[k] = max(viol.get(k, -np.inf), v)
    feasible = n_bad == 0
    bad_tilts = [r.condition_metadata["tilt_deg"] for r in reps if not r.feasible]
    report = SolveReport(
        converged=converged and feasible, feasible=feasible, iterations=it, final_cost=cost,
        constraint_violations=viol,
        condition_metadata={"infeasible_tilts": bad_tilts, "n_trx": n_trx,
                            "masked": mask_S is not None},
        infeasible_constraint=None if feasible else next(r.infeasible_constraint for r in reps if not r.feasible),
        cost_history=history, tilt_reports=reps)
    return w, bank, report
