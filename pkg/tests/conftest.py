import json
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

GOLDEN = ("macro_11x5", "small_6x3")

# criterion number -> (passed, detail)
ACCEPTANCE = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d} {title}: {detail}")


_SCRIPT = """
import json, sys
from hybridbf.cli import main
cfg, out = sys.argv[1], sys.argv[2]
steps = [["design"], ["factorize"], ["evaluate"], ["calibrate-sim"]]
if cfg == "macro_11x5":
    steps.append(["evaluate", "--fail-tx", "5", "--sweep", "0:15:1"])
codes = [main(s + ["--config", cfg, "--out", out]) for s in steps]
print(json.dumps(codes))
"""


def _pipeline(cfg: str, out: Path):
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-c", _SCRIPT, cfg, str(out)], capture_output=True, text=True, env=env,
                          timeout=1800)
    if proc.returncode != 0:
        raise RuntimeError(f"pipeline {cfg} crashed:\n{proc.stderr}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


@pytest.fixture(scope="session")
def golden_runs(tmp_path_factory):
    """Every golden config run end to end twice, each replica in its own process."""
    root = tmp_path_factory.mktemp("golden")
    jobs = [(cfg, rep, root / f"{cfg}_{rep}") for cfg in GOLDEN for rep in ("a", "b")]
    with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
        codes = list(pool.map(lambda j: _pipeline(j[0], j[2]), jobs))
    return {(cfg, rep): (out, c) for (cfg, rep, out), c in zip(jobs, codes)}
