"""
Staged microwave realisation of an RFBN matrix: divider trees, phase
lines and combiner trees, plus a versioned JSON serialisation.

Signals travel on named lines. Transceiver ``p`` drives line ``tx{p}``
and antenna ``i`` radiates line ``ant{i}``; every element consumes its
``ports_in`` lines and produces its ``ports_out`` lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .rfbn import RfbnMatrix

SCHEMA_VERSION = 1
MAX_STAGES_PER_KIND = 3

SPLITTER = "Splitter"
PHASE_LINE = "PhaseLine"
WILKINSON = "Wilkinson3Port"
RAT_RACE = "RatRace4Port"
STAGE_KINDS = ("divider", "phase", "combiner")
ELEMENT_KINDS = {"divider": (SPLITTER,), "phase": (PHASE_LINE,), "combiner": (WILKINSON, RAT_RACE)}


class StageLimitError(ValueError):
    """The network would need more than three stages of one kind."""


@dataclass(frozen=True)
class Element:
    kind: str
    ports_in: Tuple[str, ...]
    ports_out: Tuple[str, ...]
    ratio: Optional[float] = None
    phase_rad: Optional[float] = None
    iso_route: Optional[int] = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ports_in", tuple(self.ports_in))
        object.__setattr__(self, "ports_out", tuple(self.ports_out))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "label": self.label, "ports_in": list(self.ports_in),
                "ports_out": list(self.ports_out), "ratio": self.ratio, "phase_rad": self.phase_rad,
                "iso_route": self.iso_route}


@dataclass(frozen=True)
class Stage:
    stage_kind: str
    elements: Tuple[Element, ...]

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))


@dataclass(frozen=True)
class MicrowaveNetwork:
    transceiver_ports: Tuple[str, ...]
    antenna_ports: Tuple[str, ...]
    stages: Tuple[Stage, ...]
    metadata: Dict[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "transceiver_ports", tuple(self.transceiver_ports))
        object.__setattr__(self, "antenna_ports", tuple(self.antenna_ports))
        object.__setattr__(self, "stages", tuple(self.stages))
        validate_network(self)

    @property
    def n_transceivers(self) -> int:
        return len(self.transceiver_ports)

    @property
    def n_antennas(self) -> int:
        return len(self.antenna_ports)

    @property
    def n_phase_lines(self) -> int:
        """Phase shifters in the first phase bank."""
        for st in self.stages:
            if st.stage_kind == "phase":
                return len(st.elements)
        return 0

    def stage_count(self, kind: str) -> int:
        return sum(1 for st in self.stages if st.stage_kind == kind)

    def combiners(self):
        for si, st in enumerate(self.stages):
            if st.stage_kind == "combiner":
                for el in st.elements:
                    yield si, el

    # serialisation --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "transceiver_ports": list(self.transceiver_ports),
            "antenna_ports": list(self.antenna_ports),
            "stages": [{"stage_kind": st.stage_kind, "elements": [e.to_dict() for e in st.elements]}
                       for st in self.stages],
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "MicrowaveNetwork":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported network schema version {data.get('schema_version')!r}")
        stages = []
        for st in data["stages"]:
            els = [Element(kind=e["kind"], ports_in=e["ports_in"], ports_out=e["ports_out"],
                           ratio=e.get("ratio"), phase_rad=e.get("phase_rad"),
                           iso_route=e.get("iso_route"), label=e.get("label", ""))
                   for e in st["elements"]]
            stages.append(Stage(st["stage_kind"], els))
        return cls(data["transceiver_ports"], data["antenna_ports"], stages, dict(data.get("metadata", {})))

    @classmethod
    def from_json(cls, text: str) -> "MicrowaveNetwork":
        return cls.from_dict(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def validate_network(net: MicrowaveNetwork) -> None:
    """
    Structural checks: known kinds, at most three stages per kind, ratios
    in (0, 1), each line produced once and consumed once after it is
    produced, isolation routing only from rat-race couplers to a later
    stage, and every antenna port driven.
    """
    for kind in STAGE_KINDS:
        if net.stage_count(kind) > MAX_STAGES_PER_KIND:
            raise StageLimitError(f"{net.stage_count(kind)} {kind} stages exceed the limit of {MAX_STAGES_PER_KIND}")
    live = {p: -1 for p in net.transceiver_ports}
    if len(live) != len(net.transceiver_ports):
        raise ValueError("duplicate transceiver port")
    routed: Dict[str, int] = {}
    for si, st in enumerate(net.stages):
        if st.stage_kind not in STAGE_KINDS:
            raise ValueError(f"unknown stage kind {st.stage_kind!r}")
        for el in st.elements:
            if el.kind not in ELEMENT_KINDS[st.stage_kind]:
                raise ValueError(f"element kind {el.kind!r} not allowed in a {st.stage_kind} stage")
            for p in el.ports_in:
                if p not in live:
                    raise ValueError(f"line {p!r} consumed at stage {si} before it is produced (cyclic or dangling)")
                if p in routed and routed.pop(p) != si:
                    raise ValueError(f"isolation line {p!r} consumed outside its routed stage")
                del live[p]
            if el.kind == SPLITTER:
                if not (el.ratio is not None and 0.0 < el.ratio < 1.0) or len(el.ports_in) != 1 or len(el.ports_out) != 2:
                    raise ValueError(f"splitter {el.label!r} needs one input, two outputs and ratio in (0, 1)")
            elif el.kind == PHASE_LINE:
                if len(el.ports_in) != 1 or len(el.ports_out) != 1 or el.phase_rad is None:
                    raise ValueError(f"phase line {el.label!r} is malformed")
            else:
                if len(el.ports_in) != 2:
                    raise ValueError(f"combiner {el.label!r} needs two inputs")
                kappa = 0.5 if el.ratio is None else el.ratio
                if not 0.0 < kappa <= 1.0:
                    raise ValueError(f"combiner {el.label!r} ratio must lie in (0, 1]")
                if el.iso_route is not None:
                    if el.kind != RAT_RACE:
                        raise ValueError("isolation routing requires a rat-race coupler")
                    if el.iso_route <= si:
                        raise ValueError(f"combiner {el.label!r} routes its isolation port backwards (cyclic)")
                    if len(el.ports_out) != 2:
                        raise ValueError("routed rat-race needs sum and isolation outputs")
                    routed[el.ports_out[1]] = el.iso_route
                elif len(el.ports_out) != 1:
                    raise ValueError(f"combiner {el.label!r} without routing must have one output")
            for p in el.ports_out:
                if p in live:
                    raise ValueError(f"line {p!r} produced twice")
                live[p] = si
    if routed:
        raise ValueError(f"isolation lines {sorted(routed)} never reach their routed stage")
    missing = [a for a in net.antenna_ports if a not in live]
    if missing:
        raise ValueError(f"antenna ports {missing} are not reachable")
    extra = [p for p in live if p not in net.antenna_ports]
    if extra:
        raise ValueError(f"lines {extra} are left unterminated")


# --------------------------------------------------------------------------
# synthesis


def _tree_depth(n: int) -> int:
    return int(np.ceil(np.log2(n))) if n > 1 else 0


def _split_nodes(rows: List[int], powers: Dict[int, float], path: str, depth: int, out: list):
    """Left-balanced binary splitter tree; appends (depth, path, left_rows, right_rows, ratio)."""
    if len(rows) == 1:
        return
    half = (len(rows) + 1) // 2
    left, right = rows[:half], rows[half:]
    pl = sum(powers[r] for r in left)
    pr = sum(powers[r] for r in right)
    out.append((depth, path, left, right, pl / (pl + pr)))
    _split_nodes(left, powers, path + "L", depth + 1, out)
    _split_nodes(right, powers, path + "R", depth + 1, out)


def _leaf_paths(rows: List[int], path: str = "") -> Dict[int, str]:
    if len(rows) == 1:
        return {rows[0]: path}
    half = (len(rows) + 1) // 2
    d = _leaf_paths(rows[:half], path + "L")
    d.update(_leaf_paths(rows[half:], path + "R"))
    return d


def factorize_network(rfbn: RfbnMatrix, combiner_kind: str = "auto", recirculate: bool = False,
                      design_bank=None, support_tol: float = 1e-12) -> MicrowaveNetwork:
    """
    Realise ``W`` as divider trees, one phase line per non-zero entry and
    per-antenna combiner trees.

    Parameters
    ----------
    rfbn : RfbnMatrix
    combiner_kind : {"auto", "wilkinson", "ratrace"}
        ``auto`` uses Wilkinson combiners unless a stage holds more than
        ``N_trx - 1`` of them, in which case that stage uses rat-race
        couplers.
    recirculate : bool
        Route the isolation port of first-stage coupler ``k`` (1-based,
        in antenna order) to a second combining stage at the antenna of
        coupler ``N_trx - k``. Requires rat-race couplers. Couplers whose
        mate is missing, shares their antenna or feeds an antenna that
        already receives a recycled line stay terminated and are listed
        in ``metadata["unpaired_couplers"]``.
    design_bank : DbfBank, optional
        Design-range DBFs. When given, combiner ratios are matched to the
        average input powers and each recirculated isolation line gets a
        phase trim and coupling ratio that minimise dissipation over the
        bank.

    Raises
    ------
    StageLimitError
        If a column or row needs more than three divider or combiner stages.
    """
    w = rfbn.entries
    n_t, n_trx = w.shape
    nz = np.abs(w) > support_tol * np.abs(w).max()
    if combiner_kind not in ("auto", "wilkinson", "ratrace"):
        raise ValueError(f"unknown combiner kind {combiner_kind!r}")
    col_w = nz.sum(axis=0)
    row_w = nz.sum(axis=1)
    if np.any(col_w == 0) or np.any(row_w == 0):
        raise ValueError("every transceiver and antenna needs at least one connection")
    n_div = _tree_depth(int(col_w.max()))
    n_comb = _tree_depth(int(row_w.max()))
    if n_div > MAX_STAGES_PER_KIND:
        raise StageLimitError(f"column weight {col_w.max()} needs {n_div} divider stages (limit {MAX_STAGES_PER_KIND})")
    if n_comb + (1 if recirculate else 0) > MAX_STAGES_PER_KIND:
        raise StageLimitError(f"row weight {row_w.max()} needs {n_comb} combiner stages (limit {MAX_STAGES_PER_KIND})")
    if recirculate and combiner_kind == "wilkinson":
        raise ValueError("isolation recirculation needs rat-race couplers")

    tx = [f"tx{p}" for p in range(n_trx)]
    ant = [f"ant{i}" for i in range(n_t)]
    stages: List[Stage] = []

    # divider trees; shallow leaves pass straight through later stages
    div_stages = [[] for _ in range(n_div)]
    leaf_line: Dict[Tuple[int, int], str] = {}
    for p in range(n_trx):
        rows = [int(i) for i in np.flatnonzero(nz[:, p])]
        powers = {i: float(abs(w[i, p]) ** 2) for i in rows}
        nodes: list = []
        _split_nodes(rows, powers, "", 0, nodes)

        def line(path, _p=p):
            return f"tx{_p}" if path == "" else f"d{_p}.{path}"

        for depth, path, left, right, ratio in nodes:
            div_stages[depth].append(Element(SPLITTER, (line(path),), (line(path + "L"), line(path + "R")),
                                             ratio=float(ratio), label=f"D{p}.{path or 'root'}"))
        for i, path in _leaf_paths(rows).items():
            leaf_line[(i, p)] = line(path)
    stages += [Stage("divider", els) for els in div_stages]

    # phase bank and combiner trees
    phase_els = []
    row_inputs: Dict[int, List[str]] = {}
    for i in range(n_t):
        cols = [int(p) for p in np.flatnonzero(nz[i])]
        outs = []
        for p in cols:
            out = ant[i] if len(cols) == 1 else f"ph{i}.{p}"
            phase_els.append(Element(PHASE_LINE, (leaf_line[(i, p)],), (out,),
                                     phase_rad=float(np.angle(w[i, p])), label=f"P{i}.{p}"))
            outs.append(out)
        row_inputs[i] = outs
    stages.append(Stage("phase", phase_els))

    comb_stages: List[List[Element]] = [[] for _ in range(n_comb)]
    current = {i: list(v) for i, v in row_inputs.items()}
    for s in range(n_comb):
        for i in range(n_t):
            items = current[i]
            if len(items) == 1:
                continue
            nxt = []
            last_stage = _tree_depth(len(row_inputs[i])) == s + 1
            for a in range(0, len(items) - 1, 2):
                out = ant[i] if (last_stage and len(items) == 2) else f"c{i}.{s}.{a // 2}"
                comb_stages[s].append(Element(WILKINSON, (items[a], items[a + 1]), (out,), ratio=0.5,
                                              label=f"C{i}.{s}.{a // 2}"))
                nxt.append(out)
            if len(items) % 2:
                nxt.append(items[-1])
            current[i] = nxt
    for s, els in enumerate(comb_stages):
        use_rr = combiner_kind == "ratrace" or (combiner_kind == "auto" and len(els) > n_trx - 1)
        if recirculate and s == 0:
            use_rr = True
        if use_rr:
            comb_stages[s] = [Element(RAT_RACE, e.ports_in, e.ports_out, ratio=e.ratio, label=e.label) for e in els]
    meta: Dict[str, object] = {"n_phase_lines": len(phase_els), "recirculated": bool(recirculate),
                               "unpaired_couplers": []}

    net = MicrowaveNetwork(tx, ant, stages + [Stage("combiner", els) for els in comb_stages], meta)
    if design_bank is not None and n_comb:
        net = _match_combiner_ratios(net, design_bank)
    if recirculate and n_comb:
        net = _add_recirculation(net, n_trx, design_bank)
    return net


def _design_excitations(bank) -> List[np.ndarray]:
    out = []
    for d in bank:
        v = np.asarray(d.weights, dtype=complex)
        nrm = np.linalg.norm(v)
        out.append(v / nrm if nrm > 0 else v)
    return out


def _match_combiner_ratios(net: MicrowaveNetwork, bank) -> MicrowaveNetwork:
    """Set each combiner's ratio to its average share of input power over the bank."""
    from .microwave import propagate

    stages = list(net.stages)
    for si, st in enumerate(stages):
        if st.stage_kind != "combiner":
            continue
        probe = MicrowaveNetwork(net.transceiver_ports, net.antenna_ports, stages, net.metadata)
        acc = {}
        for x in _design_excitations(bank):
            lines = propagate(probe, x, keep_lines=True).line_signals
            for el in st.elements:
                a, b = (abs(lines[p]) ** 2 for p in el.ports_in)
                pa, pb = acc.get(el.label, (0.0, 0.0))
                acc[el.label] = (pa + a, pb + b)
        els = []
        for el in st.elements:
            pa, pb = acc[el.label]
            kappa = 0.5 if pa + pb == 0 else float(np.clip(pa / (pa + pb), 1e-6, 1 - 1e-6))
            els.append(Element(el.kind, el.ports_in, el.ports_out, ratio=kappa, iso_route=el.iso_route, label=el.label))
        stages[si] = Stage("combiner", els)
    return MicrowaveNetwork(net.transceiver_ports, net.antenna_ports, stages, net.metadata)


def _add_recirculation(net: MicrowaveNetwork, n_trx: int, bank) -> MicrowaveNetwork:
    """
    Route first-stage coupler isolation ports to a new final combining
    stage: coupler k feeds the antenna of coupler ``n_trx - k``.
    """
    from .microwave import propagate

    stages = list(net.stages)
    first = next(si for si, st in enumerate(stages) if st.stage_kind == "combiner")
    couplers = list(stages[first].elements)
    n_c = len(couplers)
    # antenna line driven (eventually) by each coupler's sum port
    ant_of = {}
    for k, el in enumerate(couplers, start=1):
        line = el.ports_out[0]
        for st in stages[first + 1:]:
            for e in st.elements:
                if line in e.ports_in:
                    line = e.ports_out[0]
        ant_of[k] = line
    # one recycled input per antenna, never the coupler's own antenna
    pairs = {}
    unpaired = []
    targets = set()
    for k in range(1, n_c + 1):
        mate = n_trx - k
        if 1 <= mate <= n_c and mate != k and ant_of[mate] != ant_of[k] and ant_of[mate] not in targets:
            pairs[k] = mate
            targets.add(ant_of[mate])
        else:
            unpaired.append(k)

    # rename the antenna lines that receive recycled power
    renamed = {ant_of[m]: f"pre.{ant_of[m]}" for m in pairs.values()}

    def ren(ports):
        return tuple(renamed.get(p, p) for p in ports)

    new_stages = []
    for si, st in enumerate(stages):
        els = [Element(e.kind, e.ports_in, ren(e.ports_out), e.ratio, e.phase_rad, e.iso_route, e.label)
               for e in st.elements]
        new_stages.append(Stage(st.stage_kind, els))
    phase_idx = len(new_stages)
    els = []
    for k, el in enumerate(new_stages[first].elements, start=1):
        if k in pairs:
            els.append(Element(RAT_RACE, el.ports_in, (el.ports_out[0], f"iso{k}"), ratio=el.ratio,
                               iso_route=phase_idx, label=el.label))
        else:
            els.append(el)
    new_stages[first] = Stage("combiner", els)

    trims = {k: 0.0 for k in pairs}
    kappas = {k: 0.5 for k in pairs}
    if bank is not None:
        # measure isolation and main signals at the design tilts with a unity placeholder stage
        probe_stages = new_stages + [
            Stage("phase", [Element(PHASE_LINE, (f"iso{k}",), (f"isoph{k}",), phase_rad=0.0, label=f"T{k}") for k in pairs]),
            Stage("combiner", [Element(WILKINSON, (renamed[ant_of[m]], f"isoph{k}"), (ant_of[m],), ratio=0.5,
                                       label=f"R{k}") for k, m in pairs.items()]),
        ]
        probe = MicrowaveNetwork(net.transceiver_ports, net.antenna_ports, probe_stages, net.metadata)
        sig = {k: ([], []) for k in pairs}
        for x in _design_excitations(bank):
            lines = propagate(probe, x, keep_lines=True).line_signals
            for k, m in pairs.items():
                sig[k][0].append(lines[renamed[ant_of[m]]])
                sig[k][1].append(lines[f"iso{k}"])
        for k in pairs:
            main, iso = (np.array(v) for v in sig[k])
            trims[k] = float(np.angle(np.sum(main * np.conj(iso))))
            kappas[k] = _best_recirculation_ratio(main, iso * np.exp(1j * trims[k]))

    new_stages.append(Stage("phase", [Element(PHASE_LINE, (f"iso{k}",), (f"isoph{k}",), phase_rad=trims[k],
                                              label=f"T{k}") for k in sorted(pairs)]))
    new_stages.append(Stage("combiner", [Element(WILKINSON, (renamed[ant_of[pairs[k]]], f"isoph{k}"),
                                                 (ant_of[pairs[k]],), ratio=kappas[k], label=f"R{k}")
                                         for k in sorted(pairs)]))
    meta = dict(net.metadata)
    meta["unpaired_couplers"] = unpaired
    meta["recirculation_pairs"] = {str(k): m for k, m in sorted(pairs.items())}
    return MicrowaveNetwork(net.transceiver_ports, net.antenna_ports, new_stages, meta)


def _best_recirculation_ratio(main: np.ndarray, iso: np.ndarray) -> float:
    """Coupling ratio in (0, 1] minimising mean dissipation of ``sqrt(1-k) main - sqrt(k) iso``."""
    from scipy.optimize import minimize_scalar

    def loss(kappa):
        return float(np.mean(np.abs(np.sqrt(1 - kappa) * main - np.sqrt(kappa) * iso) ** 2))

    res = minimize_scalar(loss, bounds=(1e-6, 1.0), method="bounded", options={"xatol": 1e-10})
    return float(res.x) if loss(res.x) < loss(1.0) else 1.0
