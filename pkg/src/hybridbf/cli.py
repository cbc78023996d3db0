"""
Command line front-end.

    hybridbf design        --config CFG --out DIR
    hybridbf factorize     --config CFG --out DIR
    hybridbf evaluate      --config CFG --out DIR [--sweep A:B:S] [--fail-tx 5]
    hybridbf calibrate-sim --config CFG --out DIR [--seed N]

Exit codes: 0 success, 2 invalid input or missing artifacts,
3 computational failure (artifacts are still written, with flags).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from . import pipeline as pl
from .config import ConfigError, ScenarioConfig, load_config
from .network import StageLimitError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3

log = logging.getLogger("hybridbf")


class InvalidInput(ValueError):
    """Bad command-line input detected before any computation."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _parse_fail_tx(text: Optional[str]) -> List[int]:
    if not text:
        return []
    try:
        vals = sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise InvalidInput(f"--fail-tx expects comma-separated transceiver numbers, got {text!r}") from None
    return vals


class _Run:
    """Bookkeeping for one command: output directory, timings, manifest."""

    def __init__(self, command: str, cfg: ScenarioConfig, out: Path, seed: int):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.timings = {}
        self.files: List[str] = []

    def stage(self, name: str):
        run = self

        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = round(time.perf_counter() - self.t0, 6)
                return False

        return _T()

    def write(self, files: dict):
        for name in sorted(files):
            pl.write_text(self.out, name, files[name])
            self.files.append(name)

    def manifest(self, status: str, extra: Optional[dict] = None):
        data = {"command": self.command, "config_hash": self.cfg.digest(), "config_name": self.cfg.name,
                "seed": self.seed, "status": status, "timings_s": self.timings, "files": sorted(self.files),
                "version": __version__}
        if extra:
            data.update(extra)
        pl.write_text(self.out, f"manifest_{self.command}.json", pl.dump_json(data))


def _fail(code: int, message: str) -> int:
    print(f"hybridbf: {message}", file=sys.stderr)
    return code


def cmd_design(run: _Run) -> int:
    scene = pl.build_scene(run.cfg)
    with run.stage("design"):
        design = pl.run_design(scene)
    files = {pl.DESIGN_FILE: pl.dump_json(design.to_dict())}
    if "csv" in run.cfg.output.formats:
        files.update(pl.design_csvs(design))
    run.write(files)
    bad = [r.condition_metadata["tilt_deg"] for r in design.reports if not r.feasible]
    status = "ok" if not bad else "infeasible"
    run.manifest(status, {"n_rotations": design.n_rotations})
    if bad:
        tilts = ", ".join(pl.fmt(90.0 - t) for t in bad)
        return _fail(EXIT_FAILED, f"design misses its mask at tilts {tilts} deg (artifacts written, flagged)")
    print(f"design: W {design.rfbn.entries.shape[0]}x{design.rfbn.n_trx}, {len(design.bank)} DBFs -> {run.out}")
    return EXIT_OK


def cmd_factorize(run: _Run) -> int:
    scene = pl.build_scene(run.cfg)
    design = pl.read_design(run.out)
    with run.stage("factorize"):
        try:
            fact = pl.run_factorize(scene, design)
        except StageLimitError as err:
            run.write({"claims.json": pl.dump_json({"error": str(err), "stage_limit_exceeded": True})})
            run.manifest("stage_limit")
            return _fail(EXIT_FAILED, f"stage limit: {err}")
    files = {pl.NETWORK_FILE: fact.network.to_json() + "\n", "claims.json": pl.dump_json(fact.claims)}
    if fact.baseline is not None:
        files[pl.BASELINE_FILE] = fact.baseline.to_json() + "\n"
    run.write(files)
    run.manifest("ok")
    print(f"factorize: {fact.claims['n_phase_lines']} phase lines, stages {fact.claims['stage_kinds']} -> {run.out}")
    return EXIT_OK


def cmd_evaluate(run: _Run, sweep: Optional[str], fail_tx: List[int]) -> int:
    scene = pl.build_scene(run.cfg)
    try:
        tilts = pl.parse_sweep(sweep) if sweep else pl.default_sweep(run.cfg)
        for t in tilts:
            scene.mask(t)  # domain check before any solve
    except ValueError as err:
        raise InvalidInput(str(err)) from None
    n_trx = run.cfg.factorizer.n_trx
    if any(k < 1 or k > n_trx for k in fail_tx):
        raise InvalidInput(f"--fail-tx numbers must lie in 1..{n_trx}")
    if len(fail_tx) >= n_trx:
        raise InvalidInput("--fail-tx would disable every transceiver")
    design = pl.read_design(run.out)
    network = pl.read_network(run.out)
    baseline = pl.read_network(run.out, pl.BASELINE_FILE, required=False)
    if network.n_transceivers != design.rfbn.n_trx or network.n_antennas != design.rfbn.n_elements:
        raise pl.ArtifactError("network and design artifacts disagree on their dimensions")
    with run.stage("evaluate"):
        ev = pl.run_evaluate(scene, design, pl.Factorization(network, baseline, {}), tilts,
                             [k - 1 for k in fail_tx])
    files = pl.evaluation_csvs(ev)
    if fail_tx:
        files = {f"degraded_{k}": v for k, v in files.items()}
    run.write(files)
    run.manifest("ok" if not ev.failures else "beam_failed", {"fail_tx": fail_tx})
    if ev.failures:
        return _fail(EXIT_FAILED, f"no mainlobe near tilts {', '.join(pl.fmt(t) for t in ev.failures)} deg")
    print(f"evaluate: {len(tilts)} tilts -> {run.out}")
    return EXIT_OK


def cmd_calibrate(run: _Run) -> int:
    with run.stage("calibrate"):
        rep = pl.run_calibration(run.cfg, run.seed)
    run.write(pl.calibration_csvs(rep))
    run.manifest("ok")
    print(f"calibrate-sim: phase {rep.avg_phase_error_deg:.4g} deg, amplitude {rep.avg_amplitude_error_db:.4g} dB")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybridbf", description="Hybrid RF/digital beamformer design pipeline")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML file or bundled name (macro_11x5, small_6x3)")
        sp.add_argument("--out", default=None, help="artifact directory (default: config output.directory)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("design", help="joint RFBN/DBF design"))
    common(sub.add_parser("factorize", help="realise W as a microwave network"))
    ev = sub.add_parser("evaluate", help="beampattern, loss and mismatch sweep")
    common(ev)
    ev.add_argument("--sweep", default=None, metavar="START:STOP:STEP", help="tilt sweep in degrees")
    ev.add_argument("--fail-tx", default=None, metavar="LIST", help="1-based transceivers to disable, e.g. 5 or 2,5")
    common(sub.add_parser("calibrate-sim", help="simulated chain calibration"))
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": seed})
        out = Path(args.out if args.out else cfg.output.directory)
        run = _Run(args.command, cfg, out, seed)
        if args.command == "design":
            return cmd_design(run)
        if args.command == "factorize":
            return cmd_factorize(run)
        if args.command == "evaluate":
            return cmd_evaluate(run, args.sweep, _parse_fail_tx(args.fail_tx))
        return cmd_calibrate(run)
    except (ConfigError, pl.ArtifactError, InvalidInput) as err:
        return _fail(EXIT_INVALID, str(err))
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as err:
        return _fail(EXIT_FAILED, f"computation failed: {err}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
