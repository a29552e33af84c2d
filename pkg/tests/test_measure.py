import math

import numpy as np
import pytest

from bmv.branches import SpectralContour, contour_table
from bmv.errors import DegenerateB, NotCommuting
from bmv.instances import random_instance
from bmv.linalg import validate_pair
from bmv.measure import (
    BmvMeasure,
    Construction,
    build_commuting,
    build_measure,
    omega_at,
    perturb_B,
)
from conftest import worked_density_series


class TestCommuting:
    def test_diagonal_atoms(self):
        m = build_commuting(validate_pair(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])))
        assert m.atoms == [(3.0, pytest.approx(math.e)), (4.0, pytest.approx(math.e**2))]
        assert m.is_atomic

    def test_zero_A(self):
        m = build_commuting(validate_pair(np.zeros((2, 2)), np.diag([1.0, 2.0])))
        assert np.allclose(m.atom_weights, [1, 1])

    def test_shared_eigenbasis_with_tie(self):
        m = build_commuting(validate_pair([[0, 1], [1, 0]], np.eye(2)))
        assert np.allclose(m.atom_locations, [1, 1])
        assert np.allclose(sorted(m.atom_weights), [math.exp(-1), math.e])

    def test_rejects_non_commuting(self, worked_pair):
        with pytest.raises(NotCommuting):
            build_commuting(worked_pair)

    def test_build_measure_delegates(self):
        m = build_measure(validate_pair(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])))
        assert m.meta["commuting"] and m.is_atomic


class TestPerturb:
    def test_tie_broken(self):
        p = perturb_B(validate_pair(np.eye(3), np.diag([1.0, 1.0, 2.0])), 0.01)
        assert np.allclose(p.B_eigs, [1.01, 1.02, 2.03])
        assert p.distinct_b

    def test_zero_B(self):
        p = perturb_B(validate_pair(np.eye(2), np.zeros((2, 2))), 0.5)
        assert np.allclose(p.B_eigs, [0.5, 1.0])
        assert p.positive_b

    def test_zero_epsilon_is_identity(self, worked_pair):
        assert perturb_B(worked_pair, 0.0) is worked_pair


class TestOmega:
    def test_below_support_is_zero(self, worked_pair):
        assert omega_at(worked_pair, 0.5) == (0.0, 0.0)

    def test_above_support_direct_form(self, worked_construction):
        value, _ = worked_construction.omega(2.5, form="direct")
        assert abs(value) < 1e-10

    @pytest.mark.parametrize("s", [1.05, 1.5, 1.83])
    def test_worked_pencil_against_series(self, worked_construction, s):
        value, err = worked_construction.omega(s)
        assert value == pytest.approx(worked_density_series(s), abs=1e-11)
        assert err < 1e-9

    def test_frozen_value(self, worked_construction):
        assert worked_construction.omega(1.5)[0] == pytest.approx(1.1303182079849695, abs=1e-10)

    def test_explicit_contour_and_table(self, worked_pair, worked_construction):
        contour = SpectralContour(4.0, 512)
        table = contour_table(worked_pair, contour, worked_construction.branch_points)
        value, _ = omega_at(worked_pair, 1.5, contour, table)
        assert value == pytest.approx(worked_density_series(1.5), abs=1e-11)

    def test_both_forms_agree(self, random_pair3):
        cons = Construction(random_pair3)
        b = random_pair3.B_eigs
        s = 0.5 * (b[0] + b[1])
        assert cons.omega(s, form="direct")[0] == pytest.approx(cons.omega(s, form="complement")[0], abs=1e-10)

    def test_degenerate_b(self):
        with pytest.raises(DegenerateB):
            build_measure(validate_pair([[0, 1, 0], [1, 0, 1], [0, 1, 0]], np.diag([1.0, 1.0, 2.0])))


class TestMeasure:
    def test_worked_measure_grid(self, worked_measure):
        m = worked_measure
        assert m.density_s.size == 32
        assert np.all((m.density_s > 1) & (m.density_s < 2))
        assert m.density_w.min() >= -1e-8
        assert m.quad_weights.sum() == pytest.approx(1.0)

    def test_json_round_trip(self, worked_measure):
        again = BmvMeasure.from_json(worked_measure.to_json())
        assert np.array_equal(again.density_w, worked_measure.density_w)
        assert np.array_equal(again.quad_weights, worked_measure.quad_weights)
        assert again.meta == worked_measure.meta

    def test_csv_header(self, worked_measure):
        lines = worked_measure.density_csv().splitlines()
        assert lines[0] == "s,omega" and len(lines) == 33

    def test_scaling_covariance(self, random_pair3):
        c = 0.37
        m0 = build_measure(random_pair3, nodes_per_interval=8)
        m1 = build_measure(random_pair3.shifted(c), nodes_per_interval=8)
        assert np.allclose(m1.atom_weights, math.exp(c) * m0.atom_weights, rtol=1e-13)
        assert np.allclose(m1.density_w, math.exp(c) * m0.density_w, rtol=1e-9, atol=1e-12)

    def test_contour_independence(self):
        p = validate_pair(*random_instance(4, 3))
        m0 = build_measure(p, nodes_per_interval=8)
        m1 = build_measure(p, nodes_per_interval=8, radius_factor=3.0)
        assert np.max(np.abs(m0.density_w - m1.density_w)) <= 1e-7

    def test_piecewise_smooth_under_refinement(self, random_pair3):
        # divided differences stay bounded when the grid is refined
        def max_slope(m):
            s, w = m.density_s, m.density_w
            inside = np.diff(np.searchsorted(random_pair3.B_eigs, s)) == 0
            return np.max(np.abs(np.diff(w) / np.diff(s))[inside])

        coarse = max_slope(build_measure(random_pair3, nodes_per_interval=8))
        fine = max_slope(build_measure(random_pair3, nodes_per_interval=32))
        assert fine <= 2 * coarse + 1.0

    def test_fault_injection_copy(self, worked_measure):
        bad = worked_measure.with_density_value(3, -1.0)
        assert bad.density_w[3] == -1.0
        assert worked_measure.density_w[3] > 0
