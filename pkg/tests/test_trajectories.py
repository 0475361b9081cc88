import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from demon_sim.errors import BudgetExceeded
from demon_sim.fluctuation import efficacy_numeric
from demon_sim.linops import devectorize, vectorize
from demon_sim.qutrit import eigensystem, ket, projector, thermal_state
from demon_sim.statistics import conditional_probabilities
from demon_sim.trajectories import (
    TrajectoryRecord,
    backward_efficacy,
    bounds_report,
    decode_outcomes,
    enumerate_trajectories,
    extraction_phase_diagram,
    phase_point,
    shannon_entropy,
)

from conftest import make_config, make_demon


def setup(kind="NV", p_a=0.3, gt=0.5, scaled_beta=0.297):
    demon = make_demon(kind, p_a, gt)
    th = thermal_state(demon.eigen, scaled_beta / demon.eigen.energies[-1])
    return demon, th


class TestEnumeration:
    def test_no_absorption(self):
        demon, th = setup(p_a=0.0)
        recs = list(enumerate_trajectories(demon, th, 1))
        assert [r.outcomes for r in recs] == [(1,), (2,), (3,), (4,)]
        np.testing.assert_allclose([r.probability for r in recs], [0, 0, 0, 1], atol=1e-15)

    def test_projective_measurement_gives_populations(self):
        demon, th = setup("NV", p_a=1.0, scaled_beta=2.0)
        recs = enumerate_trajectories(demon, th, 1)
        sz_pops = np.real(np.diag(th.rho))  # (+1, 0, -1)
        # outcomes 1..3 are the |-1>, |0>, |+1> projectors
        np.testing.assert_allclose(recs.probabilities, [sz_pops[2], sz_pops[1], sz_pops[0], 0.0], atol=1e-14)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_matches_recursive_oracle(self, kind, n):
        demon, th = setup(kind, 0.6, 1.1)
        spec = demon.config.hamiltonian
        channel = oracle.Channel(oracle.hamiltonian(kind, spec.delta, spec.zeeman, spec.rabi), 0.6, 424e-9, 1.1)
        ref = oracle.trajectory_probabilities(channel, th.rho, n)
        got = {r.outcomes: r.probability for r in enumerate_trajectories(demon, th, n)}
        assert set(got) == set(ref)
        for key in ref:
            assert got[key] == pytest.approx(ref[key], abs=1e-13)

    def test_count_and_order(self):
        demon, th = setup()
        recs = enumerate_trajectories(demon, th, 3)
        assert len(recs) == 64
        assert recs[0].outcomes == (1, 1, 1)
        assert recs[63].outcomes == (4, 4, 4)
        assert recs[6].outcomes == decode_outcomes(6, 3) == (1, 2, 3)

    def test_sum_and_marginal(self, kind):
        demon, th = setup(kind, 0.45, 0.8)
        recs = enumerate_trajectories(demon, th, 3, return_states=True)
        assert recs.total_probability == pytest.approx(1.0, abs=1e-12)
        final = recs.final_states.sum(axis=0)
        np.testing.assert_allclose(final, devectorize(demon.power(3) @ vectorize(th.rho)), atol=1e-12)
        # summing over the last outcome recovers the two-pulse records
        shorter = enumerate_trajectories(demon, th, 2, return_states=True)
        np.testing.assert_allclose(recs.probabilities.reshape(16, 4).sum(axis=1), shorter.probabilities, atol=1e-14)
        by_prefix = recs.final_states.reshape(16, 4, 3, 3).sum(axis=1)
        for prefix in range(16):
            step = devectorize(demon.b_super @ vectorize(shorter.final_states[prefix]))
            np.testing.assert_allclose(by_prefix[prefix], step, atol=1e-14)

    def test_conditional_from_trajectories(self, kind):
        demon, _ = setup(kind, 0.5, 0.5)
        es = demon.eigen
        cond = np.zeros((3, 3))
        for i in range(3):
            recs = enumerate_trajectories(demon, es.projectors[i], 3, return_states=True)
            final = recs.final_states.sum(axis=0)
            cond[i] = es.populations(final)
        np.testing.assert_allclose(cond, conditional_probabilities(demon, es, 3), atol=1e-10)

    def test_budget(self):
        demon, th = setup()
        with pytest.raises(BudgetExceeded):
            enumerate_trajectories(demon, th, 13)
        with pytest.raises(ValueError):
            enumerate_trajectories(demon, th, 0)

    def test_pruning(self):
        demon, th = setup("NV", 1.0, 5.0, 3.0)
        full = enumerate_trajectories(demon, th, 6)
        pruned = enumerate_trajectories(demon, th, 6, prune=True)
        assert len(pruned) < len(full)
        assert pruned.pruned
        assert pruned.total_probability + pruned.pruned_mass == pytest.approx(1.0, abs=1e-12)
        kept = dict(zip(full.codes.tolist(), full.probabilities.tolist()))
        for code, p in zip(pruned.codes.tolist(), pruned.probabilities.tolist()):
            assert p == pytest.approx(kept[code], abs=1e-15)

    def test_workers_deterministic(self):
        demon, th = setup("MW", 0.3)
        a = enumerate_trajectories(demon, th, 6)
        b = enumerate_trajectories(demon, th, 6, workers=4)
        np.testing.assert_array_equal(a.codes, b.codes)
        np.testing.assert_array_equal(a.probabilities, b.probabilities)

    def test_runtime_n9(self):
        demon, th = setup("MW", 0.3)
        start = time.perf_counter()
        recs = enumerate_trajectories(demon, th, 9)
        elapsed = time.perf_counter() - start
        assert len(recs) == 4**9
        assert elapsed < 1.0


class TestBackwardEfficacy:
    @pytest.mark.parametrize("n", [0, 1, 3, 6])
    @pytest.mark.parametrize("p_a,gt", [(0.1, 0.5), (1.0, 5.0), (0.7, 0.0)])
    def test_matches_superoperator(self, kind, n, p_a, gt):
        demon, th = setup(kind, p_a, gt, 3.0)
        assert backward_efficacy(demon, th, n) == pytest.approx(efficacy_numeric(demon, th, n), abs=1e-10)


class TestEntropy:
    def test_deterministic(self):
        assert shannon_entropy([TrajectoryRecord((4,), 1.0)]) == 0.0

    def test_uniform(self):
        recs = [TrajectoryRecord((k,), 0.25) for k in range(1, 5)]
        assert shannon_entropy(recs) == pytest.approx(math.log(4))

    def test_kahan_oracle(self):
        demon, th = setup("MW", 0.7, 0.5, 3.0)
        recs = enumerate_trajectories(demon, th, 2)
        assert shannon_entropy(recs) == pytest.approx(oracle.kahan_entropy(recs.probabilities), abs=1e-15)

    def test_bounds(self, kind):
        demon, th = setup(kind, 0.4)
        for n in (1, 4):
            s = shannon_entropy(enumerate_trajectories(demon, th, n))
            assert 0 <= s <= n * math.log(4) + 1e-12

    @settings(max_examples=10, deadline=None)
    @given(st.sampled_from(["NV", "MW"]), st.floats(0.05, 0.95), st.floats(0.1, 5))
    def test_monotone(self, kind, p_a, gt):
        demon, th = setup(kind, p_a, gt, 1.0)
        values = [shannon_entropy(enumerate_trajectories(demon, th, n)) for n in range(1, 7)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_unnormalized(self):
        with pytest.raises(ValueError):
            shannon_entropy([TrajectoryRecord((1,), 0.5)])


class TestBounds:
    def test_mw_injects(self):
        cfg = make_config("MW", 0.3)
        beta = 3 / (2 * math.pi * 10.3e6)
        for n in range(1, 10):
            rep = bounds_report(cfg, beta, n)
            assert rep.beta_delta_e > 0 and rep.satisfied

    def test_nv_extracts(self):
        cfg = make_config("NV", 0.3)
        beta = 0.297 / (2 * math.pi * 2.97e9)
        for n in range(1, 10):
            rep = bounds_report(cfg, beta, n)
            assert rep.beta_delta_e < 0 and rep.satisfied
            assert rep.tighter == "ln_gamma"

    def test_unital(self):
        rep = bounds_report(make_config("NV", 0.5, gamma_t=0.0), 1e-9, 4)
        assert rep.beta_delta_e == pytest.approx(0.0, abs=1e-12)
        assert rep.neg_ln_gamma == pytest.approx(0.0, abs=1e-12)
        assert rep.neg_entropy <= 0
        assert rep.satisfied

    def test_entropy_budget(self):
        rep = bounds_report(make_config("MW", 0.3), 1e-8, 5, entropy_budget=4)
        assert rep.neg_entropy is None and rep.tighter == "unknown"


class TestPhaseDiagram:
    def nv_eigen(self):
        return make_demon("NV").eigen

    def test_thermal_point_is_zero(self):
        es = self.nv_eigen()
        beta = 0.891 / es.energies[-1]
        th = thermal_state(es, beta)
        point = phase_point(es, beta, th.probs[0], th.probs[2])
        assert point.beta_delta_e == pytest.approx(0.0, abs=1e-12)
        assert point.classification == "zero-line"

    def test_ground_corner_extracts(self):
        es = self.nv_eigen()
        beta = 0.891 / es.energies[-1]
        point = phase_point(es, beta, 1.0, 0.0)
        th = thermal_state(es, beta)
        assert point.beta_delta_e == pytest.approx(-beta * th.mean_energy)
        assert point.classification == "extraction"

    def test_zero_temperature_limit(self):
        es = self.nv_eigen()
        diagram = extraction_phase_diagram(es, 1e4 / es.energies[-1], grid=20)
        classes = {p.classification for p in diagram.points}
        assert "extraction" not in classes
        assert diagram.zero_line == ((1.0, 0.0),)

    def test_zero_line_hyperplane(self):
        es = make_demon("MW").eigen
        beta = 0.8 / es.energies[-1]
        diagram = extraction_phase_diagram(es, beta, grid=10)
        assert len(diagram.zero_line) == 2
        for pa, pb in diagram.zero_line:
            assert phase_point(es, beta, pa, pb).beta_delta_e == pytest.approx(0.0, abs=1e-12)
        assert diagram.unital_point == (1 / 3, 1 / 3)
        assert len(diagram.points) == 66
        assert {r[3] for r in diagram.rows} <= {"extraction", "zero-line", "injection"}

    def test_thermal_line_through_unital(self):
        es = make_demon("MW").eigen
        diagram = extraction_phase_diagram(es, 1e-8, grid=4)
        mid = diagram.thermal_line[len(diagram.thermal_line) // 2]
        assert mid[0] == 0.0
        assert mid[1:] == pytest.approx((1 / 3, 1 / 3))

    def test_off_simplex(self):
        es = self.nv_eigen()
        with pytest.raises(ValueError):
            phase_point(es, 1e-9, 0.8, 0.5)
