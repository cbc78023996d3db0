"""
Batch pipeline behind the CLI: design, factorisation, evaluation and
calibration simulation, with JSON/CSV artifact IO.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .array_model import (AngularGrid, ArrayGeometry, ArrayManifold, TiltSet, array_manifold, build_mask,
                          theta_to_tilt, tilt_to_theta)
from .config import ScenarioConfig
from .evaluation import BeamFormationError, ChainImperfection, beampattern, pattern_metrics, simulate_calibration
from .factorizer import givens_sparsify, verify_claims
from .microwave import mismatch_profile, propagate
from .network import MicrowaveNetwork, factorize_network
from .optimizer import (DbfBank, DbfWeights, SolveReport, SolverSettings, dbf_sweep, optimize_dbf,
                        optimize_joint, pa_bounds_for, reoptimize_on_failure)
from .rfbn import InterconnectMask, RfbnMatrix

DESIGN_FILE = "design.json"
NETWORK_FILE = "network.json"
BASELINE_FILE = "baseline_network.json"


class ArtifactError(ValueError):
    """Required artifacts are missing or inconsistent."""


def fmt(x) -> str:
    """Six significant digits; non-finite values as ``nan``/``inf``/``-inf``."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.6g}"
    return "0" if s == "-0" else s


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# scene


@dataclass
class Scene:
    config: ScenarioConfig
    geometry: ArrayGeometry
    manifold: ArrayManifold
    settings: SolverSettings

    def mask(self, tilt_deg: float):
        t = self.config.tilts
        return build_mask(tilt_to_theta(tilt_deg), t.halfpower_halfwidth_deg, t.sll_db, t.transition_deg,
                          self.manifold.grid, halfpower_bounds=t.halfpower_bounds)

    @property
    def interconnect(self) -> Optional[InterconnectMask]:
        f = self.config.factorizer
        if f.mask_runs is None:
            return None
        return InterconnectMask.from_runs(self.geometry.n_elements, [tuple(r) for r in f.mask_runs])


def build_scene(cfg: ScenarioConfig) -> Scene:
    g = cfg.geometry
    geo = ArrayGeometry(g.n_elements, g.spacing_wavelengths, g.element_pattern)
    grid = AngularGrid.uniform(0.0, 180.0, g.grid_step_deg)
    s = cfg.solver
    pa = pa_bounds_for(cfg.factorizer.n_trx, s.pa_range_db, s.pa_anchor) if s.pa_box else None
    settings = SolverSettings(max_iterations=s.max_iterations, tolerance=s.tolerance, barrier_mu0=s.barrier_mu0,
                              barrier_shrink=s.barrier_shrink, pa_power_bounds=pa, random_seed=cfg.seed,
                              ccp_iterations=s.ccp_iterations)
    return Scene(cfg, geo, array_manifold(geo, grid), settings)


# --------------------------------------------------------------------------
# design


@dataclass
class Design:
    rfbn: RfbnMatrix
    bank: DbfBank                     # manifold-angle tilts
    reports: List[SolveReport]
    n_rotations: int = 0
    converged: bool = True

    @property
    def feasible(self) -> bool:
        return all(r.feasible for r in self.reports)

    def to_dict(self) -> dict:
        w = self.rfbn.entries
        return {
            "schema_version": 1,
            "rfbn": {"re": w.real.tolist(), "im": w.imag.tolist(),
                     "support": None if self.rfbn.mask is None else self.rfbn.mask.support.astype(int).tolist()},
            "dbf": [{"tilt_deg": float(theta_to_tilt(d.tilt_deg)), "re": d.weights.real.tolist(),
                     "im": d.weights.imag.tolist(), "mainlobe_response": d.mainlobe_response}
                    for d in self.bank],
            "reports": [report_dict(r) for r in self.reports],
            "n_rotations": self.n_rotations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Design":
        try:
            r = data["rfbn"]
            w = np.array(r["re"], dtype=float) + 1j * np.array(r["im"], dtype=float)
            mask = None if r.get("support") is None else InterconnectMask(np.array(r["support"], dtype=bool))
            bank = DbfBank(tuple(DbfWeights(tilt_to_theta(d["tilt_deg"]),
                                            np.array(d["re"]) + 1j * np.array(d["im"]),
                                            d.get("mainlobe_response", 1.0)) for d in data["dbf"]))
            reports = [SolveReport(converged=x["converged"], feasible=x["feasible"], iterations=x["iterations"],
                                   final_cost=x["final_cost"], constraint_violations=x["constraint_violations"],
                                   condition_metadata={"tilt_deg": tilt_to_theta(x["tilt_deg"])},
                                   infeasible_constraint=x["infeasible_constraint"])
                       for x in data.get("reports", [])]
            return cls(RfbnMatrix(w, mask), bank, reports, data.get("n_rotations", 0), data.get("converged", True))
        except (KeyError, TypeError, ValueError) as err:
            raise ArtifactError(f"malformed design artifact: {err}") from None


def report_dict(r: SolveReport) -> dict:
    return {
        "tilt_deg": float(theta_to_tilt(r.condition_metadata.get("tilt_deg", 90.0))),
        "converged": bool(r.converged),
        "feasible": bool(r.feasible),
        "iterations": int(r.iterations),
        "final_cost": float(r.final_cost),
        "constraint_violations": {k: float(v) for k, v in sorted(r.constraint_violations.items())},
        "infeasible_constraint": r.infeasible_constraint,
    }


def run_design(scene: Scene) -> Design:
    cfg = scene.config
    tilts = cfg.tilts.tilts()
    thetas = sorted(tilt_to_theta(t) for t in tilts)
    masks = [scene.mask(theta_to_tilt(th)) for th in thetas]
    w, bank, rep = optimize_joint(scene.manifold, TiltSet(tuple(thetas)), masks, cfg.factorizer.n_trx,
                                  mask_S=scene.interconnect, settings=scene.settings,
                                  energy_threshold=cfg.solver.energy_threshold)
    reports = list(rep.tilt_reports)
    n_rot = 0
    gv = cfg.factorizer.givens
    if gv.enabled and gv.max_rotations > 0:
        def reopt(cand, k, prev):
            return optimize_dbf(cand, scene.manifold, masks[k], scene.settings, warm_start=prev.normalized)

        w, bank, rots = givens_sparsify(w, bank, gv.phase_threshold_deg, gv.max_rotations, reopt,
                                        gv.amplitude_threshold_db, reports=reports)
        n_rot = len(rots)
        if n_rot:
            redo = [optimize_dbf(w, scene.manifold, m, scene.settings, warm_start=d.normalized)
                    for m, d in zip(masks, bank)]
            bank = DbfBank(tuple(d for d, _ in redo))
            reports = [r for _, r in redo]
    # present tilts in ascending boresight-relative order
    order = np.argsort([theta_to_tilt(d.tilt_deg) for d in bank])
    bank = DbfBank(tuple(bank[int(i)] for i in order))
    reports = [reports[int(i)] for i in order]
    return Design(w, bank, reports, n_rot, rep.converged)


def design_csvs(design: Design) -> Dict[str, str]:
    w = design.rfbn.entries
    rfbn_rows = [(i, p, w[i, p].real, w[i, p].imag) for i in range(w.shape[0]) for p in range(w.shape[1])]
    dbf_rows = [(theta_to_tilt(d.tilt_deg), p, d.weights[p].real, d.weights[p].imag)
                for d in design.bank for p in range(d.weights.size)]
    rep_rows = [(theta_to_tilt(r.condition_metadata["tilt_deg"]), "yes" if r.feasible else "no",
                 r.infeasible_constraint or "", r.final_cost) for r in design.reports]
    return {
        "rfbn.csv": csv_text(["antenna", "trx", "re", "im"], rfbn_rows),
        "dbf.csv": csv_text(["tilt_deg", "trx", "re", "im"], dbf_rows),
        "design_report.csv": csv_text(["tilt_deg", "feasible", "infeasible_constraint", "sidelobe_cost"], rep_rows),
    }


# --------------------------------------------------------------------------
# factorisation


@dataclass
class Factorization:
    network: MicrowaveNetwork
    baseline: Optional[MicrowaveNetwork]
    claims: dict


def run_factorize(scene: Scene, design: Design) -> Factorization:
    f = scene.config.factorizer
    kind = "ratrace" if f.recirculate else f.combiner_kind
    net = factorize_network(design.rfbn, kind, recirculate=f.recirculate, design_bank=design.bank)
    baseline = factorize_network(design.rfbn, "wilkinson", design_bank=design.bank) if f.recirculate else None
    rep = verify_claims(net, design.bank, ideal_w=design.rfbn.entries)
    claims = {
        "n_phase_lines": rep.n_phase_lines,
        "combiner_counts": rep.combiner_counts,
        "lossy_combiner_counts": rep.lossy_combiner_counts,
        "hybrid_count": rep.hybrid_count,
        "combiner_bound": rep.combiner_bound,
        "claim1_ok": rep.claim1_ok,
        "claim2_ok": rep.claim2_ok,
        "max_linear_phase_dev_deg": float(rep.max_linear_phase_dev_deg),
        "unpaired_couplers": rep.unpaired_couplers,
        "stage_kinds": [st.stage_kind for st in net.stages],
    }
    return Factorization(net, baseline, claims)


# --------------------------------------------------------------------------
# evaluation


SUMMARY_HEADER = ["tilt_deg", "mainlobe_deg", "gain_db", "sll_db", "bw3db_deg", "insertion_loss_db",
                  "avg_mismatch_deg"]


def parse_sweep(spec: str) -> List[float]:
    """``START:STOP:STEP`` in degrees (inclusive stop)."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"sweep {spec!r} must look like START:STOP:STEP")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"sweep {spec!r} has non-numeric fields") from None
    if not step > 0 or stop < start:
        raise ValueError(f"sweep {spec!r} needs STEP > 0 and STOP >= START")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(n)]


def default_sweep(cfg: ScenarioConfig) -> List[float]:
    s = cfg.simulation
    if s.sweep_start_deg is None or s.sweep_stop_deg is None:
        return cfg.tilts.tilts()
    return parse_sweep(f"{s.sweep_start_deg}:{s.sweep_stop_deg}:{s.sweep_step_deg}")


@dataclass
class Evaluation:
    summary: List[tuple]
    patterns: Dict[float, List[tuple]]
    comparison: List[tuple] = field(default_factory=list)
    failures: List[float] = field(default_factory=list)


def sweep_bank(scene: Scene, design: Design, tilts: Sequence[float], fail_tx: Sequence[int] = ()):
    """DBFs at the sweep tilts; design DBFs seed matching tilts, neighbours seed the rest."""
    by_tilt = {round(theta_to_tilt(d.tilt_deg), 9): d for d in design.bank}
    masks = [scene.mask(t) for t in tilts]
    if fail_tx:
        out, reps = [], []
        for t, m in zip(tilts, masks):
            seed = by_tilt.get(round(t, 9))
            d, r = reoptimize_on_failure(design.rfbn, fail_tx, scene.manifold, m, scene.settings,
                                         None if seed is None else seed.normalized)
            out.append(d)
            reps.append(r)
        return DbfBank(tuple(out)), reps
    warm = [None if by_tilt.get(round(t, 9)) is None else by_tilt[round(t, 9)].normalized for t in tilts]
    return dbf_sweep(design.rfbn, scene.manifold, masks, scene.settings, warm_starts=warm)


def _metrics_row(scene: Scene, tilt: float, signals) -> Tuple[tuple, list]:
    pat = beampattern(scene.manifold, signals)
    tr = scene.config.tilts.transition_deg
    window = 3.5 if tr is None else 0.5 * tr
    try:
        pm = pattern_metrics(pat, tilt_to_theta(tilt), search_halfwidth_deg=window)
        core = (theta_to_tilt(pm.mainlobe_deg), pm.mainlobe_gain_db, pm.sll_db, pm.beamwidth_3db_deg)
    except BeamFormationError:
        core = (float("nan"),) * 4
    rows = [(theta_to_tilt(a), g) for a, g in zip(pat.grid.angles_deg, pat.gain_db)]
    rows.sort(key=lambda r: r[0])
    return core, rows


def run_evaluate(scene: Scene, design: Design, fact: Factorization, tilts: Sequence[float],
                 fail_tx: Sequence[int] = ()) -> Evaluation:
    bank, _ = sweep_bank(scene, design, tilts, fail_tx)
    loss_db = scene.config.simulation.component_loss_db
    prof = mismatch_profile(fact.network, bank, component_loss_db=loss_db)
    base = mismatch_profile(fact.baseline, bank, component_loss_db=loss_db) if fact.baseline is not None else None
    summary, patterns, comparison, failures = [], {}, [], []
    for k, (t, d) in enumerate(zip(tilts, bank)):
        # beampattern of the realised network with ideal combining (= W theta);
        # the dissipation is reported separately
        res = propagate(fact.network, d.weights, ideal=True)
        core, rows = _metrics_row(scene, t, res.antenna_complex)
        if np.isnan(core[0]):
            failures.append(t)
        summary.append((t,) + core + (prof.insertion_loss_db[k], prof.avg_mismatch_deg[k]))
        patterns[t] = rows
        if base is not None:
            comparison.append((t, prof.insertion_loss_db[k], base.insertion_loss_db[k], prof.avg_mismatch_deg[k]))
    return Evaluation(summary, patterns, comparison, failures)


def evaluation_csvs(ev: Evaluation) -> Dict[str, str]:
    out = {"summary.csv": csv_text(SUMMARY_HEADER, ev.summary)}
    for t, rows in ev.patterns.items():
        out[f"pattern_{fmt(t)}.csv"] = csv_text(["theta_deg", "gain_db"], rows)
    if ev.comparison:
        out["loss_comparison.csv"] = csv_text(
            ["tilt_deg", "network_loss_db", "baseline_loss_db", "avg_mismatch_deg"], ev.comparison)
    return out


# --------------------------------------------------------------------------
# calibration


def run_calibration(cfg: ScenarioConfig, seed: int):
    c = cfg.simulation.calibration
    imp = ChainImperfection.random(cfg.factorizer.n_trx, c.max_phase_deg, c.max_amplitude_db, seed=seed)
    if c.drift_deg_per_step:
        imp = ChainImperfection(imp.amplitude_error_db, imp.phase_offset_deg, c.drift_deg_per_step)
    return simulate_calibration(imp, c.n_sweep, c.noise_floor_db, seed=seed)


def calibration_csvs(rep) -> Dict[str, str]:
    sweep = [(a, p, m) for a, p, m in zip(rep.sweep_phase_deg, rep.residual_phase_deg, rep.residual_amplitude_db)]
    chains = [(k + 1, a, p) for k, (a, p) in enumerate(zip(rep.estimated_amplitude_db, rep.estimated_phase_deg))]
    summ = [("avg_phase_error_deg", rep.avg_phase_error_deg), ("avg_amplitude_error_db", rep.avg_amplitude_error_db)]
    return {
        "calibration_sweep.csv": csv_text(["commanded_phase_deg", "residual_phase_deg", "residual_amplitude_db"], sweep),
        "calibration_offsets.csv": csv_text(["chain", "estimated_amplitude_db", "estimated_phase_deg"], chains),
        "calibration_summary.csv": csv_text(["metric", "value"], summ),
    }


# --------------------------------------------------------------------------
# IO helpers


def write_text(directory: Path, name: str, text: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    p = directory / name
    p.write_text(text)
    return p


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_design(directory: Path) -> Design:
    p = directory / DESIGN_FILE
    if not p.is_file():
        raise ArtifactError(f"missing design artifact {p}; run 'design' first")
    try:
        return Design.from_dict(json.loads(p.read_text()))
    except json.JSONDecodeError as err:
        raise ArtifactError(f"{p}: {err}") from None


def read_network(directory: Path, name: str = NETWORK_FILE, required: bool = True) -> Optional[MicrowaveNetwork]:
    p = directory / name
    if not p.is_file():
        if required:
            raise ArtifactError(f"missing network artifact {p}; run 'factorize' first")
        return None
    try:
        return MicrowaveNetwork.from_json(p.read_text())
    except (ValueError, KeyError) as err:
        raise ArtifactError(f"{p}: {err}") from None
