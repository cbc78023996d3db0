import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridbf.array_model import AngularGrid, ArrayGeometry, array_manifold, build_mask
from hybridbf.bound import (TiltMatrix, dominant_basis, extreme_tilt_indices, min_transceivers, stack_tilts,
                            truncation_residual)
from hybridbf.optimizer import InfeasibleDesignError
from hybridbf.reference import FullAaaWeights, constrained_reference, desired_response, ls_reference


def _low_rank(rng, n_t, n_tilts, r):
    a = rng.standard_normal((n_t, r)) + 1j * rng.standard_normal((n_t, r))
    b = rng.standard_normal((r, n_tilts)) + 1j * rng.standard_normal((r, n_tilts))
    return a @ b


def test_exact_rank_is_found():
    rng = np.random.default_rng(0)
    theta = _low_rank(rng, 10, 8, 3)
    bound = min_transceivers(TiltMatrix(theta, tuple(range(8))), 0.999999)
    assert bound.n_trx_min == 3
    assert bound.energy_fraction(3) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(1, 12))
def test_residual_is_singular_value_tail(seed, n_t, n_tilts):
    rng = np.random.default_rng(seed)
    n_tilts = min(n_tilts, n_t)
    theta = rng.standard_normal((n_t, n_tilts)) + 1j * rng.standard_normal((n_t, n_tilts))
    bound = min_transceivers(TiltMatrix(theta, tuple(range(n_tilts))))
    s = np.linalg.svd(theta, compute_uv=False)
    for r in range(1, n_tilts + 1):
        res = truncation_residual(theta, dominant_basis(bound, r).entries)
        assert res == pytest.approx(np.sqrt(np.sum(s[r:] ** 2)), abs=1e-9)


def test_threshold_monotone_and_range():
    rng = np.random.default_rng(1)
    tm = TiltMatrix(rng.standard_normal((6, 6)), tuple(range(6)))
    counts = [min_transceivers(tm, e).n_trx_min for e in (0.1, 0.5, 0.9, 0.99)]
    assert counts == sorted(counts)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            min_transceivers(tm, bad)


def test_many_tilts_keep_extremes():
    assert extreme_tilt_indices(16, 4).tolist() == [0, 5, 10, 15]
    assert extreme_tilt_indices(3, 5).tolist() == [0, 1, 2]
    rng = np.random.default_rng(2)
    bound = min_transceivers(TiltMatrix(rng.standard_normal((4, 16)), tuple(range(16))))
    assert bound.used_tilt_indices == (0, 5, 10, 15)


def test_stack_orders_by_tilt():
    refs = [FullAaaWeights(80.0, [1, 0]), FullAaaWeights(70.0, [0, 1])]
    tm = stack_tilts(refs)
    assert tm.tilts_deg == (70.0, 80.0)
    np.testing.assert_array_equal(tm.columns, [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        stack_tilts([])
    with pytest.raises(ValueError):
        stack_tilts([FullAaaWeights(80.0, [1, 0]), FullAaaWeights(80.0, [0, 1])])
    with pytest.raises(ValueError):
        stack_tilts([FullAaaWeights(80.0, [1, 0]), FullAaaWeights(70.0, [0, 1, 1])])


def test_dominant_basis_bounds():
    bound = min_transceivers(TiltMatrix(np.eye(3), (0.0, 1.0, 2.0)))
    assert dominant_basis(bound, 2).n_trx == 2
    with pytest.raises(ValueError):
        dominant_basis(bound, 4)
    with pytest.raises(ValueError):
        min_transceivers(TiltMatrix(np.zeros((3, 2)), (0.0, 1.0)))


class TestReference:
    geo = ArrayGeometry(8, 0.5, "Macro65")
    man = array_manifold(geo, AngularGrid.uniform(0, 180, 0.5))

    def test_ls_reference_points_the_beam(self):
        m = build_mask(80.0, 6.0, 20.0, 14.0, self.man.grid)
        ref = ls_reference(self.man, m)
        resp = np.abs(self.man.matrix @ ref.weights)
        assert abs(self.man.grid.angles_deg[np.argmax(resp)] - 80.0) <= 1.0
        assert ref.metadata["rank"] == 8 and not ref.metadata["rank_deficient"]

    def test_desired_response_phase(self):
        m = build_mask(90.0, 6.0, 20.0, 14.0, self.man.grid)
        d = desired_response(self.man, m)
        assert abs(d[self.man.grid.nearest(90.0)]) == pytest.approx(1.0)
        np.testing.assert_allclose(np.abs(d[m.mainlobe_idx]), 1.0)
        assert np.all(d[m.sll_idx] == 0)

    def test_constrained_reference_meets_mask(self):
        m = build_mask(80.0, 6.0, 15.0, 14.0, self.man.grid)
        ref = constrained_reference(self.man, m)
        x = self.man.matrix @ ref.weights
        main = self.man.rows_at(80.0)[0] @ ref.weights
        assert main == pytest.approx(1.0, abs=1e-6)
        assert np.max(np.abs(x[m.sll_idx]) ** 2) <= m.sll_ceiling * (1 + 1e-6)

    def test_constrained_reference_infeasible(self):
        m = build_mask(80.0, 1.0, 60.0, 2.0, self.man.grid)
        with pytest.raises(InfeasibleDesignError) as err:
            constrained_reference(self.man, m)
        assert err.value.constraint is not None

    def test_rejects_foreign_grid(self):
        m = build_mask(80.0, 6.0, 20.0, 14.0, AngularGrid.uniform(0, 180, 1.0))
        with pytest.raises(ValueError):
            ls_reference(self.man, m)

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            FullAaaWeights(0.0, [0, 0])
        with pytest.raises(ValueError):
            FullAaaWeights(0.0, [np.nan, 1])
