import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridbf.factorizer import (GivensRotation, apply_rotations, combiner_mismatches, givens_sparsify,
                                 linear_phase_deviation_deg, multistage_wiener_factorize, verify_claims)
from hybridbf.network import factorize_network
from hybridbf.optimizer import DbfBank, DbfWeights, SolveReport
from hybridbf.rfbn import InterconnectMask, RfbnMatrix


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestWiener:
    def test_full_mask_spans_dominant_subspace(self):
        rng = np.random.default_rng(0)
        theta = _cplx(rng, 8, 3) @ _cplx(rng, 3, 6)
        w, hist = multistage_wiener_factorize(theta, InterconnectMask.full(8, 3), return_residuals=True)
        q, _ = np.linalg.qr(w.entries)
        np.testing.assert_allclose(theta - q @ (q.conj().T @ theta), 0, atol=1e-10)
        assert hist[-1] < 1e-10 * hist[0]
        assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))

    def test_support_and_normalisation(self):
        rng = np.random.default_rng(1)
        mask = InterconnectMask.overlapping_blocks(9, 3, 5)
        w = multistage_wiener_factorize(_cplx(rng, 9, 5), mask)
        assert np.all(w.entries[~mask.support] == 0)
        np.testing.assert_allclose(np.linalg.norm(w.entries, axis=0), 1.0)
        # largest entry of each column is real positive
        for col in w.entries.T:
            z = col[np.argmax(np.abs(col))]
            assert z.imag == pytest.approx(0, abs=1e-12) and z.real > 0

    def test_annihilated_column(self):
        theta = np.zeros((4, 2), dtype=complex)
        theta[0, 0] = theta[1, 1] = 1.0
        mask = InterconnectMask(np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=bool))
        with pytest.raises(ValueError):
            multistage_wiener_factorize(theta, mask)
        with pytest.raises(ValueError):
            multistage_wiener_factorize(np.ones((5, 2)), mask)


class TestGivens:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_rotation_is_unitary_and_zeroes(self, seed):
        rng = np.random.default_rng(seed)
        w = _cplx(rng, 5, 3)
        p, t = rng.choice(5, 2, replace=False)
        col = int(rng.integers(3))
        g = GivensRotation.zeroing(w, int(p), int(t), col)
        m = g.matrix(5)
        np.testing.assert_allclose(m.conj().T @ m, np.eye(5), atol=1e-12)
        out = g.apply(w)
        np.testing.assert_allclose(out, m @ w, atol=1e-12)
        assert abs(out[t, col]) < 1e-12
        assert abs(out[p, col]) == pytest.approx(np.hypot(abs(w[p, col]), abs(w[t, col])))
        np.testing.assert_allclose(np.linalg.norm(out, axis=0), np.linalg.norm(w, axis=0))

    def test_degenerate_cases(self):
        w = np.array([[0.0], [2.0j]])
        out = GivensRotation.zeroing(w, 0, 1, 0).apply(w)
        assert abs(out[1, 0]) < 1e-15 and abs(out[0, 0]) == pytest.approx(2.0)
        ident = GivensRotation.zeroing(np.zeros((2, 1)), 0, 1, 0)
        assert ident.c == 1.0 and ident.angle_rad == 0.0

    def test_apply_rotations_composes(self):
        rng = np.random.default_rng(2)
        w = _cplx(rng, 4, 2)
        rots = [GivensRotation(0, 1, 0.6, 0.8j), GivensRotation(2, 3, 0.8, -0.6)]
        np.testing.assert_allclose(apply_rotations(w, rots), rots[1].matrix(4) @ rots[0].matrix(4) @ w)


class TestMismatch:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(-179, 179), st.floats(-10, 10))
    def test_detects_phase_or_amplitude(self, dphi, damp):
        w = np.array([[1.0, 10 ** (damp / 20) * np.exp(1j * np.radians(dphi))]])
        found = combiner_mismatches(w, np.ones((2, 1)), 30.0, 3.0)
        expect = abs(dphi) > 30.0 or abs(damp) > 3.0
        assert bool(found) == expect
        if found:
            assert found[0].phase_deg == pytest.approx(abs(dphi), abs=1e-9)
            assert found[0].amplitude_db == pytest.approx(abs(damp), abs=1e-9)

    def test_inactive_inputs_ignored(self):
        w = np.array([[1.0, 1e-9j]])
        assert combiner_mismatches(w, np.ones((2, 1)), 30.0) == []


def _mismatched_design():
    # rotating row 1 against row 0 leaves row 1 single-input and row 0 phase matched
    w = np.array([[-1 + 1j, 1j], [1, 1j]], dtype=complex)
    return RfbnMatrix.normalized(w), DbfBank((DbfWeights(80.0, [1.0, 1.0]),))


def _report(feasible, peak):
    return SolveReport(True, feasible, 1, 0.0, {}, {"sidelobe_peak": peak})


class TestSparsify:
    def test_removes_mismatch(self):
        w, bank = _mismatched_design()
        out, _, rots = givens_sparsify(w, bank, 30.0, amplitude_threshold_db=10.0)
        assert len(rots) == 1
        assert combiner_mismatches(out.entries, bank.matrix, 30.0, 10.0) == []
        np.testing.assert_allclose(np.linalg.norm(out.entries, axis=0), 1.0)

    def test_rolls_back_when_feasibility_is_lost(self):
        w, bank = _mismatched_design()
        out, _, rots = givens_sparsify(w, bank, 30.0, amplitude_threshold_db=10.0, reopt=lambda c, k, d: (d, _report(False, 1.0)),
                                       reports=[_report(True, 0.01)])
        assert rots == []
        np.testing.assert_array_equal(out.entries, w.entries)

    def test_infeasible_peak_may_not_rise(self):
        w, bank = _mismatched_design()
        worse = dict(reopt=lambda c, k, d: (d, _report(False, 0.5)), reports=[_report(False, 0.2)])
        assert givens_sparsify(w, bank, 30.0, amplitude_threshold_db=10.0, **worse)[2] == []
        better = dict(reopt=lambda c, k, d: (d, _report(False, 0.1)), reports=[_report(False, 0.2)])
        assert len(givens_sparsify(w, bank, 30.0, amplitude_threshold_db=10.0, **better)[2]) == 1

    def test_no_ping_pong(self):
        # each rotation here just moves the mismatch to the pivot row
        w = RfbnMatrix.normalized(np.array([[1, 0], [1, 1j], [0, 1]], dtype=complex))
        bank = DbfBank((DbfWeights(80.0, [1.0, 1.0]),))
        assert givens_sparsify(w, bank, 30.0)[2] == []

    def test_rejects(self):
        w, bank = _mismatched_design()
        with pytest.raises(ValueError):
            givens_sparsify(w, bank, 0.0)
        with pytest.raises(ValueError):
            givens_sparsify(w, DbfBank((DbfWeights(80.0, [1.0, 1.0, 1.0]),)))


class TestLinearPhase:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(-3, 3), st.floats(-np.pi, np.pi), st.integers(3, 16))
    def test_linear_progression_is_zero(self, slope, offset, n):
        x = np.exp(1j * (offset + slope * np.arange(n)))
        assert linear_phase_deviation_deg(x) < 1e-7

    def test_bump_oracle(self):
        # a single port displaced by d: the least-squares residual of the
        # displaced port is d * (1 - 1/n - (k - mean)^2 / sum (i - mean)^2)
        n, k, d = 9, 4, np.radians(6.0)
        ph = 0.3 * np.arange(n)
        ph[k] += d
        i = np.arange(n)
        lever = 1 - 1 / n - (k - i.mean()) ** 2 / np.sum((i - i.mean()) ** 2)
        assert linear_phase_deviation_deg(np.exp(1j * ph)) == pytest.approx(np.degrees(d * lever), rel=1e-6)

    def test_weak_ports_and_short_vectors(self):
        x = np.exp(1j * 0.4 * np.arange(6))
        x[2] = 1e-6 * np.exp(2j)
        assert linear_phase_deviation_deg(x) < 1e-7
        assert linear_phase_deviation_deg(np.array([1, 1j])) == 0.0


def test_verify_claims_counts():
    rng = np.random.default_rng(5)
    w = RfbnMatrix.normalized(_cplx(rng, 6, 3))
    net = factorize_network(w, "wilkinson")
    bank = DbfBank((DbfWeights(80.0, [1, 0, 0]),))
    rep = verify_claims(net, bank)
    assert rep.combiner_counts == [6, 6] and rep.lossy_combiner_counts == [6, 6]
    assert rep.combiner_bound == 2 and not rep.claim1_ok and rep.claim2_ok
    assert rep.n_phase_lines == 18
    assert rep.max_linear_phase_dev_deg >= 0
