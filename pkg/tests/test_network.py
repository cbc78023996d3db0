import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridbf.microwave import (PortSignal, final_stage_pairs, insertion_loss_db, mismatch_profile, network_matrix,
                                propagate)
from hybridbf.network import (Element, MicrowaveNetwork, Stage, StageLimitError, factorize_network,
                              validate_network)
from hybridbf.optimizer import DbfBank, DbfWeights
from hybridbf.rfbn import InterconnectMask, RfbnMatrix


def _rfbn(seed, n_t, n_trx, mask=None):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n_t, n_trx)) + 1j * rng.standard_normal((n_t, n_trx))
    if mask is not None:
        w = w * mask.support
    return RfbnMatrix.normalized(w, mask)


class TestSynthesis:
    def test_stage_counts(self):
        net = factorize_network(_rfbn(0, 6, 3))
        # column weight 6 -> 3 divider levels, row weight 3 -> 2 combiner levels
        assert [net.stage_count(k) for k in ("divider", "phase", "combiner")] == [3, 1, 2]
        assert net.n_phase_lines == 18
        assert net.n_transceivers == 3 and net.n_antennas == 6

    def test_single_connection_rows_skip_combiners(self):
        net = factorize_network(RfbnMatrix.identity(4))
        assert net.stage_count("combiner") == 0 and net.stage_count("divider") == 0
        np.testing.assert_allclose(network_matrix(net), np.eye(4))

    @pytest.mark.parametrize("kind, expect", [("wilkinson", "Wilkinson3Port"), ("ratrace", "RatRace4Port")])
    def test_combiner_kind(self, kind, expect):
        net = factorize_network(_rfbn(1, 4, 2), kind)
        assert {e.kind for _, e in net.combiners()} == {expect}

    def test_auto_kind_switches_crowded_stages(self):
        # 4 combiners in one stage exceed N_trx - 1 = 1
        net = factorize_network(_rfbn(1, 4, 2))
        assert {e.kind for _, e in net.combiners()} == {"RatRace4Port"}

    def test_stage_limit(self):
        with pytest.raises(StageLimitError):
            factorize_network(_rfbn(2, 9, 9))  # row weight 9 needs 4 combiner levels
        with pytest.raises(StageLimitError):
            factorize_network(_rfbn(2, 6, 5), recirculate=True)  # 3 levels plus the recycling stage

    def test_rejects(self):
        with pytest.raises(ValueError):
            factorize_network(_rfbn(0, 4, 2), "butler")
        with pytest.raises(ValueError):
            factorize_network(_rfbn(0, 4, 2), "wilkinson", recirculate=True)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 8), st.integers(1, 4))
    def test_ideal_transfer_matrix_is_w(self, seed, n_t, n_trx):
        n_trx = min(n_trx, n_t)
        mask = InterconnectMask.overlapping_blocks(n_t, n_trx, min(n_t, -(-n_t // n_trx) + 1))
        w = _rfbn(seed, n_t, n_trx, mask)
        np.testing.assert_allclose(network_matrix(factorize_network(w)), w.entries, atol=1e-12)


class TestRecirculation:
    def test_structure_and_unpaired(self):
        net = factorize_network(_rfbn(3, 6, 3), recirculate=True)
        assert net.metadata["recirculation_pairs"] == {"1": 2, "2": 1}
        assert net.metadata["unpaired_couplers"] == [3, 4, 5, 6]
        first = next(st for st in net.stages if st.stage_kind == "combiner")
        routed = [e for e in first.elements if e.iso_route is not None]
        assert len(routed) == 2 and all(e.kind == "RatRace4Port" for e in routed)
        assert net.stages[-1].stage_kind == "combiner" and len(net.stages[-1].elements) == 2
        assert net.stages[-2].stage_kind == "phase"

    def test_ideal_matrix_unchanged(self):
        w = _rfbn(3, 6, 3)
        np.testing.assert_allclose(network_matrix(factorize_network(w, recirculate=True)), w.entries, atol=1e-12)

    def test_recycled_stage_excluded_from_final_pairs(self):
        net = factorize_network(_rfbn(3, 6, 3), recirculate=True)
        labels = {e.label for e in final_stage_pairs(net)}
        assert labels and not any(l.startswith("R") for l in labels)


class TestSerialisation:
    def test_round_trip(self):
        net = factorize_network(_rfbn(4, 6, 3), recirculate=True)
        back = MicrowaveNetwork.from_json(net.to_json())
        assert back == net
        assert back.metadata["unpaired_couplers"] == [3, 4, 5, 6]
        x = np.array([1, 0.5j, -0.3])
        np.testing.assert_allclose(propagate(back, x).antenna_complex, propagate(net, x).antenna_complex)

    def test_schema_version(self):
        data = json.loads(factorize_network(RfbnMatrix.identity(2)).to_json())
        data["schema_version"] = 99
        with pytest.raises(ValueError):
            MicrowaveNetwork.from_dict(data)


def _line_net(stages, tx=("tx0", "tx1"), ant=("ant0",)):
    return MicrowaveNetwork(tx, ant, stages)


class TestValidation:
    def test_dangling_line(self):
        with pytest.raises(ValueError, match="before it is produced"):
            _line_net([Stage("combiner", [Element("Wilkinson3Port", ("tx0", "tx9"), ("ant0",))])])

    def test_unterminated_line(self):
        with pytest.raises(ValueError, match="unterminated"):
            _line_net([Stage("phase", [Element("PhaseLine", ("tx0",), ("ant0",), phase_rad=0.0),
                                       Element("PhaseLine", ("tx1",), ("x",), phase_rad=0.0)])])

    def test_wrong_element_for_stage(self):
        with pytest.raises(ValueError, match="not allowed"):
            _line_net([Stage("divider", [Element("Wilkinson3Port", ("tx0", "tx1"), ("ant0",))])])

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            MicrowaveNetwork(("tx0",), ("a", "b"), [Stage("divider", [Element("Splitter", ("tx0",), ("a", "b"),
                                                                              ratio=1.0)])])

    def test_backward_isolation_route(self):
        with pytest.raises(ValueError, match="backwards"):
            MicrowaveNetwork(("tx0", "tx1"), ("ant0", "iso"), [
                Stage("combiner", [Element("RatRace4Port", ("tx0", "tx1"), ("ant0", "iso"), iso_route=0)])])

    def test_stage_limit(self):
        stages = [Stage("phase", [Element("PhaseLine", (f"l{k}",), (f"l{k + 1}",), phase_rad=0.0)]) for k in range(4)]
        with pytest.raises(StageLimitError):
            MicrowaveNetwork(("l0",), ("l4",), stages)

    def test_valid_network_passes(self):
        validate_network(factorize_network(_rfbn(5, 5, 2)))


class TestPropagation:
    @given(st.floats(0, 10), st.floats(-20, 20))
    def test_port_signal_wraps(self, amp, phase):
        s = PortSignal(amp, phase)
        assert -np.pi < s.phase <= np.pi
        assert s.complex == pytest.approx(amp * np.exp(1j * phase), abs=1e-9)

    def test_port_signal_rejects(self):
        with pytest.raises(ValueError):
            PortSignal(-1.0, 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from(["wilkinson", "ratrace"]), st.booleans())
    def test_energy_is_conserved(self, seed, kind, recirc):
        if recirc:
            kind = "ratrace"
        net = factorize_network(_rfbn(seed, 6, 3), kind, recirculate=recirc)
        rng = np.random.default_rng(seed + 1)
        x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        res = propagate(net, x)
        assert res.total_radiated_power + res.total_dissipated_power == pytest.approx(res.total_input_power, rel=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-np.pi, np.pi))
    def test_wilkinson_dissipation_oracle(self, phi):
        # equal inputs with phase offset phi lose sin^2(phi/2) of their power
        net = _line_net([Stage("combiner", [Element("Wilkinson3Port", ("tx0", "tx1"), ("ant0",), ratio=0.5,
                                                    label="C")])])
        res = propagate(net, [1.0, np.exp(1j * phi)])
        assert res.total_dissipated_power / res.total_input_power == pytest.approx(np.sin(phi / 2) ** 2, abs=1e-12)

    def test_component_loss_is_booked(self):
        net = factorize_network(_rfbn(6, 4, 2))
        res = propagate(net, [1.0, 1j], component_loss_db=0.5)
        assert res.total_radiated_power + res.total_dissipated_power == pytest.approx(res.total_input_power)
        assert insertion_loss_db(res)[0] > 0

    def test_cancellation_is_flagged(self):
        net = _line_net([Stage("combiner", [Element("Wilkinson3Port", ("tx0", "tx1"), ("ant0",), label="C")])])
        loss, flagged = insertion_loss_db(propagate(net, [1.0, -1.0]))
        assert flagged and loss == float("inf")

    def test_excitation_length(self):
        with pytest.raises(ValueError):
            propagate(factorize_network(RfbnMatrix.identity(2)), [1.0])


def test_mismatch_profile_is_unwrapped():
    # a single combiner whose input phase offset grows past 180 degrees
    net = _line_net([Stage("combiner", [Element("Wilkinson3Port", ("tx0", "tx1"), ("ant0",), label="C")])])
    steps = np.radians(np.arange(0, 300, 30))
    bank = DbfBank(tuple(DbfWeights(float(k), [1.0, np.exp(-1j * p)]) for k, p in enumerate(steps)))
    prof = mismatch_profile(net, bank)
    np.testing.assert_allclose(prof.avg_mismatch_deg, np.degrees(steps), atol=1e-9)
    assert prof.flagged == [False] * len(steps)
