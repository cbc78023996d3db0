"""Single-frequency propagation through a staged microwave network."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .network import PHASE_LINE, RAT_RACE, SPLITTER, MicrowaveNetwork


@dataclass(frozen=True)
class PortSignal:
    amplitude: float
    phase: float

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValueError("port amplitude must be finite and non-negative")
        # wrap to (-pi, pi]
        ph = float(-((-self.phase + np.pi) % (2 * np.pi) - np.pi))
        object.__setattr__(self, "phase", ph)

    @property
    def complex(self) -> complex:
        return self.amplitude * np.exp(1j * self.phase)

    @classmethod
    def from_complex(cls, z: complex) -> "PortSignal":
        return cls(float(abs(z)), float(np.angle(z)))


def as_complex(signals) -> np.ndarray:
    if len(signals) and isinstance(signals[0], PortSignal):
        return np.array([s.complex for s in signals], dtype=complex)
    return np.asarray(signals, dtype=complex).ravel()


@dataclass
class PropagationResult:
    antenna_signals: List[PortSignal]
    antenna_complex: np.ndarray
    per_combiner_dissipation: List[Tuple[str, float]]
    total_input_power: float
    total_radiated_power: float
    total_dissipated_power: float
    line_signals: Dict[str, complex] = field(default_factory=dict)


def propagate(network: MicrowaveNetwork, excitation, ideal: bool = False,
              component_loss_db: float = 0.0, keep_lines: bool = False) -> PropagationResult:
    """
    Push transceiver excitations through the network stage by stage.

    Splitter: ``(sqrt(r) s, sqrt(1-r) s)``. Phase line: ``s e^{j phi}``.
    Combiner with ratio ``k`` maps ``(s1, s2)`` unitarily to the sum port
    ``sqrt(k) s1 + sqrt(1-k) s2`` and the difference port
    ``sqrt(1-k) s1 - sqrt(k) s2`` (``k = 1/2`` gives the usual
    ``(s1 +/- s2)/sqrt(2)``). The difference power is dissipated in a
    Wilkinson resistor or a terminated rat-race isolation port, or sent
    on when the rat-race routes it.

    With ``ideal=True`` combiners are plain summing junctions with no
    difference port, so unit excitations reproduce the columns of W.
    ``component_loss_db`` applies a uniform attenuation to every element
    output, booked as dissipation.
    """
    x = as_complex(excitation)
    if x.size != network.n_transceivers:
        raise ValueError(f"excitation has {x.size} entries for {network.n_transceivers} transceivers")
    att = 10.0 ** (-component_loss_db / 20.0)
    lines: Dict[str, complex] = dict(zip(network.transceiver_ports, x.astype(complex)))
    seen: Dict[str, complex] = dict(lines) if keep_lines else {}
    diss: Dict[str, float] = {}
    element_loss = 0.0
    for st in network.stages:
        for el in st.elements:
            ins = [lines.pop(p) for p in el.ports_in]
            if el.kind == SPLITTER:
                r = el.ratio
                outs = [np.sqrt(r) * ins[0], np.sqrt(1 - r) * ins[0]]
            elif el.kind == PHASE_LINE:
                outs = [ins[0] * np.exp(1j * el.phase_rad)]
            else:
                s1, s2 = ins
                if ideal:
                    total = s1 + s2
                    outs = [total] if len(el.ports_out) == 1 else [total, 0j]
                else:
                    k = 0.5 if el.ratio is None else el.ratio
                    total = np.sqrt(k) * s1 + np.sqrt(1 - k) * s2
                    diff = np.sqrt(1 - k) * s1 - np.sqrt(k) * s2
                    if el.kind == RAT_RACE and el.iso_route is not None:
                        outs = [total, diff]
                        diss[el.label] = 0.0
                    else:
                        outs = [total]
                        diss[el.label] = float(abs(diff) ** 2)
            if att != 1.0:
                before = sum(abs(o) ** 2 for o in outs)
                outs = [o * att for o in outs]
                element_loss += before * (1 - att ** 2)
            for p, v in zip(el.ports_out, outs):
                lines[p] = v
                if keep_lines:
                    seen[p] = v
    ant = np.array([lines[a] for a in network.antenna_ports], dtype=complex)
    p_in = float(np.sum(np.abs(x) ** 2))
    p_rad = float(np.sum(np.abs(ant) ** 2))
    per = sorted(diss.items())
    p_diss = float(sum(v for _, v in per)) + element_loss
    return PropagationResult([PortSignal.from_complex(z) for z in ant], ant, per, p_in, p_rad, p_diss,
                             seen if keep_lines else {})


def network_matrix(network: MicrowaveNetwork) -> np.ndarray:
    """Transfer matrix of the ideal (summing-junction) network; column p is the response to ``tx{p}``."""
    n = network.n_transceivers
    cols = [propagate(network, np.eye(n)[p], ideal=True).antenna_complex for p in range(n)]
    return np.stack(cols, axis=1)


def insertion_loss_db(result: PropagationResult) -> Tuple[float, bool]:
    """
    ``10 log10(P_in / P_rad)``. Returns ``(loss_db, flagged)``; total
    cancellation gives ``(inf, True)``.
    """
    if result.total_radiated_power <= 1e-300 * max(result.total_input_power, 1e-300):
        return float("inf"), True
    loss = 10.0 * np.log10(result.total_input_power / result.total_radiated_power)
    return float(max(loss, 0.0)), False


@dataclass
class MismatchProfile:
    tilts_deg: List[float]
    avg_mismatch_deg: List[float]
    insertion_loss_db: List[float]
    flagged: List[bool]


def final_stage_pairs(network: MicrowaveNetwork):
    """Combiners of the last combining stage not fed by a recirculated isolation line."""
    tainted = set()
    recirc = set()
    for si, st in enumerate(network.stages):
        for el in st.elements:
            if any(p in tainted for p in el.ports_in):
                tainted.update(el.ports_out)
                if st.stage_kind == "combiner":
                    recirc.add(si)
            if el.kind == RAT_RACE and el.iso_route is not None:
                tainted.add(el.ports_out[1])
    stage_ids = [si for si, st in enumerate(network.stages) if st.stage_kind == "combiner" and si not in recirc]
    if not stage_ids:
        return []
    return list(network.stages[stage_ids[-1]].elements)


def mismatch_profile(network: MicrowaveNetwork, dbf_bank, component_loss_db: float = 0.0) -> MismatchProfile:
    """
    Per tilt: mean absolute phase difference between the two inputs of
    every final-stage combiner, and the insertion loss with the DBF
    excitation normalised to unit power.

    The phase difference of each combiner is followed continuously along
    the bank order (unwrapped), so a sweep reports the accumulated
    mismatch rather than its value folded into [0, 180].
    """
    pairs = final_stage_pairs(network)
    tilts, loss, flags = [], [], []
    diffs, live = [], []
    for d in dbf_bank:
        x = np.asarray(d.weights, dtype=complex)
        nrm = np.linalg.norm(x)
        x = x / nrm if nrm > 0 else x
        res = propagate(network, x, keep_lines=True, component_loss_db=component_loss_db)
        row, ok = [], []
        for el in pairs:
            a, b = (res.line_signals[p] for p in el.ports_in)
            row.append(np.angle(a * np.conj(b)))
            ok.append(abs(a) > 0 and abs(b) > 0)
        il, fl = insertion_loss_db(res)
        tilts.append(d.tilt_deg)
        diffs.append(row)
        live.append(ok)
        loss.append(il)
        flags.append(fl)
    mism = [0.0] * len(tilts)
    if pairs:
        ph = np.degrees(np.abs(np.unwrap(np.array(diffs), axis=0)))
        ok = np.array(live)
        for k in range(len(tilts)):
            mism[k] = float(ph[k][ok[k]].mean()) if ok[k].any() else 0.0
    return MismatchProfile(tilts, mism, loss, flags)
