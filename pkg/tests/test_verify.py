import math

import numpy as np
import pytest

from bmv.branches import SpectralContour
from bmv.errors import OracleUnstable, PoleTooCloseToContour
from bmv.linalg import trace_exp, validate_pair
from bmv.measure import build_commuting, build_measure
from bmv.verify import (
    LineOracle,
    VerifyTolerances,
    bromwich_oracle,
    default_probes,
    laplace_of_measure,
    proof_identity_check,
    verify,
)
from conftest import worked_density_series


class TestLaplace:
    def test_atomic(self):
        m = build_commuting(validate_pair(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])))
        assert laplace_of_measure(m, 1.0) == pytest.approx(2 * math.exp(-2), rel=1e-15)

    def test_total_mass(self, worked_measure):
        mass = worked_measure.atom_weights.sum() + np.dot(worked_measure.quad_weights, worked_measure.density_w)
        assert laplace_of_measure(worked_measure, 0.0) == pytest.approx(mass, rel=1e-14)

    def test_worked_pencil(self, worked_pair, worked_measure):
        assert laplace_of_measure(worked_measure, 2.0) == pytest.approx(trace_exp(worked_pair, 2.0).real, rel=1e-6)


class TestOracle:
    def test_commuting_is_zero(self):
        assert bromwich_oracle(validate_pair(np.diag([0.5, -0.2]), np.diag([1.0, 2.0])), 1.5) == 0.0

    @pytest.mark.parametrize("s", [1.01, 1.5, 1.9])
    def test_worked_pencil_against_series(self, worked_pair, s):
        value, delta = LineOracle(worked_pair)(s)
        assert value == pytest.approx(worked_density_series(s), abs=1e-7)
        assert delta < 1e-6

    def test_near_left_atom_is_refinement_stable(self, random_pair3):
        s = random_pair3.B_eigs[0] + 0.01
        _, delta = LineOracle(random_pair3)(s)
        assert delta < 1e-6

    def test_too_coarse_raises(self, worked_pair):
        with pytest.raises(OracleUnstable):
            LineOracle(worked_pair, step=0.2, cutoff=5.0)(1.5)

    def test_probes_avoid_atoms(self, random_pair3):
        b = random_pair3.B_eigs
        probes = default_probes(random_pair3)
        assert len(probes) == 5
        assert all(np.min(np.abs(b - s)) > 1e-3 for s in probes)


class TestProofIdentities:
    def test_commuting(self):
        r = proof_identity_check(validate_pair(np.diag([0.3, -0.4, 1.0]), np.diag([0.5, 1.0, 1.5])), 1.0)
        assert r.diamond <= 1e-10 and max(r.residues) <= 1e-10

    def test_worked_pencil_R5(self, worked_pair):
        r = proof_identity_check(worked_pair, 1.0, contour=SpectralContour(5.0, 512))
        assert r.diamond <= 1e-8
        assert max(r.residues) <= 1e-10

    def test_last_summand_matches(self, random_pair3):
        r = proof_identity_check(random_pair3, 0.7)
        assert abs(r.diamond_terms[-1] - r.residue_values[-1]) < 1e-12

    def test_pole_too_close(self, worked_pair):
        with pytest.raises(PoleTooCloseToContour):
            proof_identity_check(worked_pair, 2.9, contour=SpectralContour(3.0))


class TestVerify:
    def test_commuting_passes(self):
        p = validate_pair(np.diag([0.1, 0.7]), np.diag([1.0, 3.0]))
        rep = verify(p, build_measure(p))
        assert rep.passed
        assert rep.oracle_gaps and all(g == 0 for _, g in rep.oracle_gaps)

    def test_worked_pencil_passes(self, worked_pair, worked_measure, worked_construction):
        rep = verify(worked_pair, worked_measure, t_grid=(0, 0.5, 1, 2, 5, 10), construction=worked_construction)
        assert rep.passed, rep.flags
        assert "exp(a_jj)" in rep.meta["atom_weight"]

    def test_negated_sample_fails(self, worked_pair, worked_measure, worked_construction):
        bad = worked_measure.with_density_value(5, -worked_measure.density_w[5])
        rep = verify(worked_pair, bad, construction=worked_construction)
        assert not rep.passed
        assert not rep.flags["nonnegative"]

    def test_json_has_pass(self, worked_pair, worked_measure, worked_construction):
        data = verify(worked_pair, worked_measure, construction=worked_construction).to_json()
        assert data["pass"] is True
        assert set(data["flags"]) == {"laplace", "mass", "monotone", "nonnegative", "support", "oracle", "proof_identities"}

    def test_tolerances_positive(self):
        with pytest.raises(ValueError):
            VerifyTolerances(diamond=0.0)
