import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdrcurve.distributions import DomainError, LocationFamily
from fdrcurve.fdr_curve import (
    TOUCH_TOL,
    Constraint,
    CurveSamples,
    DegenerateCurveError,
    Dominance,
    QStarCurve,
    TargetCurve,
    UnsupportedFamilyError,
    constraint_values,
    curve_from_constraints,
    dominates,
    q_star,
    q_star_single,
    sample_curve,
    select_constraints_greedy,
    select_constraints_minimal,
    touching_point,
)

from oracles import brute_q_star

G = LocationFamily.gaussian()
SNR = [(-0.27, 0.2), (0.0, 0.1), (0.26, 0.05)]
EFFECT = [(-0.07, 0.2), (0.0, 0.1), (0.07, 0.05)]


class TestCurveFromConstraints:
    def test_bh_step(self):
        c = curve_from_constraints([(0, 0.1)])
        assert c.evaluate(-1e-12) == 1.0
        assert c.evaluate(0.0) == 0.1
        assert c.evaluate(5.0) == 0.1
        assert c == TargetCurve.bh(0.1)

    def test_three_steps(self):
        c = curve_from_constraints(SNR)
        assert len(c) == 3
        assert list(c.evaluate([-1, -0.27, -0.1, 0, 0.2, 0.26, 9])) == [1, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05]

    def test_redundant_constraint_dropped(self):
        c = curve_from_constraints([(0, 0.1), (1, 0.1)])
        assert c.constraints == (Constraint(0, 0.1),)

    def test_normalization(self):
        c = curve_from_constraints([(1, 0.3), (0, 0.1), (0, 0.05), (-1, 1.0), (2, 0.2), (3, 0.01)])
        assert c.constraints == (Constraint(0, 0.05), Constraint(3, 0.01))

    def test_all_level_one_is_degenerate(self):
        c = curve_from_constraints([(0, 1.0)])
        assert c.is_degenerate
        assert c.evaluate(10.0) == 1.0

    @pytest.mark.parametrize("bad", [[], [(0, 0.0)], [(0, -0.1)], [(0, 1.5)], [(math.inf, 0.1)]])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            curve_from_constraints(bad)

    def test_json_round_trip(self):
        c = curve_from_constraints(SNR)
        again = TargetCurve.from_json(c.to_json())
        assert again == c
        assert json.loads(c.to_json()) == {"constraints": [{"theta": t, "q": q} for t, q in SNR]}

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(0.001, 1.0)), min_size=1, max_size=8))
    def test_matches_definition(self, pairs):
        c = curve_from_constraints(pairs)
        assert np.all(np.diff(c.thetas) > 0)
        assert np.all(np.diff(c.levels) < 0)
        for th in np.linspace(-4, 4, 33).tolist() + [t for t, _ in pairs]:
            want = min([q for t, q in pairs if t <= th], default=1.0)
            assert c.evaluate(th) == want


class TestQStarSingle:
    def test_touches_at_constraint(self):
        for fam in (G, LocationFamily.logistic(), LocationFamily.scaled_gaussian(0.3)):
            assert q_star_single(0, 0.1, fam, 100, 0.0) == pytest.approx(0.1, abs=1e-12)

    def test_level_one_is_constant(self):
        assert q_star_single(0, 1.0, G, 100, -5.0) == 1.0
        assert np.all(q_star_single(0, 1.0, G, 10, np.linspace(-5, 5, 11)) == 1.0)

    def test_regression_value(self):
        # 0.1 * sup over [Phi^-1(0.001), Phi^-1(0.1)] of Phi(y + 0.3)/Phi(y), by a
        # 4001-point 30-digit mpmath scan; attained at the left endpoint
        assert q_star_single(0, 0.1, G, 100, -0.3) == pytest.approx(0.263351176268408, rel=1e-12)

    def test_nonmonotone_family_uses_scan(self):
        fam = LocationFamily.tabulated([-3, -1, 0, 0.2, 1, 3], [0.01, 0.1, 0.11, 0.5, 0.6, 0.99])
        for th in (-0.5, 0.3):
            got = q_star_single(0.0, 0.2, fam, 5, th)
            want = min(1.0, brute_q_star([(0.0, 0.2)], [fam], 5, th, n_outer=200, n_inner=400_001))
            # the scan refines onto kinks between grid points, so it may only sit above the oracle
            assert want * (1 - 1e-12) <= got <= want * (1 + 1e-6)

    def test_domain(self):
        with pytest.raises(DomainError):
            q_star_single(0, 0.0, G, 10, 0.0)
        with pytest.raises(DomainError):
            q_star_single(0, 0.1, G, 0, 0.0)


class TestQStar:
    def test_single_constraint_touch(self):
        assert q_star([(0, 0.1)], G, 100, 0.0) == pytest.approx(0.1, abs=1e-12)

    def test_snr_curve_touches_all_three(self):
        for t, q in SNR:
            assert abs(q_star(SNR, G, 3170, t) - q) <= 1e-9

    def test_cap_and_monotone(self):
        grid = np.linspace(-3, 3, 401)
        for pairs, fams, m in [(SNR, G, 3170), (EFFECT, _hetero(50, 3), 50), ([(0, 0.2), (1, 0.02)], LocationFamily.logistic(), 5)]:
            c = curve_from_constraints(pairs)
            qs = q_star(c, fams, m, grid)
            assert np.all(qs <= c.evaluate(grid) + 1e-15)
            assert np.all(np.diff(qs) <= 1e-15)
            assert np.all((qs > 0) & (qs <= 1))

    def test_subset(self):
        c = curve_from_constraints(SNR)
        full = q_star(c, G, 100, 0.1)
        only = q_star(c, G, 100, 0.1, subset=[0.0])
        assert only == pytest.approx(q_star([(0, 0.1)], G, 100, 0.1))
        assert full <= only
        with pytest.raises(DomainError):
            q_star(c, G, 100, 0.1, subset=[0.5])

    def test_qstar_curve_object(self):
        qc = QStarCurve(curve_from_constraints(SNR), G, 3170)
        step = qc.as_step_curve()
        assert np.allclose(step.levels, [0.2, 0.1, 0.05], atol=1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_dense_oracle_full_resolution(self, seed):
        # the full 10^4 x 10^4 scan on a few random two-constraint curves
        rng = np.random.default_rng(seed)
        t = np.sort(rng.uniform(-1, 1, 2))
        q = np.sort(rng.uniform(0.02, 0.4, 2))[::-1]
        pairs = list(zip(t.tolist(), q.tolist()))
        theta = float(rng.uniform(-2, 2))
        assert q_star(pairs, G, 25, theta) == pytest.approx(brute_q_star(pairs, [G], 25, theta), rel=1e-6)

    def test_two_constraint_curve_on_11_points(self):
        pairs = [(-0.4, 0.25), (0.5, 0.05)]
        for theta in np.linspace(-2, 2, 11):
            want = brute_q_star(pairs, [G], 25, theta, n_outer=2000, n_inner=2000)
            assert q_star(pairs, G, 25, theta) == pytest.approx(want, rel=1e-6)

    def test_heterogeneous_is_max_over_families(self):
        fams = _hetero(20, 0)
        grid = np.linspace(-2, 2, 21)
        per = np.max([q_star(SNR, f, 20, grid) for f in set(fams)], axis=0)
        # min over constraints of max over families >= max over families of min over constraints
        assert np.all(q_star(SNR, fams, 20, grid) >= per - 1e-15)
        vals = constraint_values(curve_from_constraints(SNR), fams, 20, grid)
        single = np.max([constraint_values(curve_from_constraints(SNR), f, 20, grid) for f in set(fams)], axis=0)
        assert np.allclose(vals, single, rtol=1e-14)

    def test_samples_csv(self, tmp_path):
        s = sample_curve(curve_from_constraints([(0, 0.1)]), G, 100, np.linspace(-1, 1, 41))
        assert isinstance(s, CurveSamples)
        path = tmp_path / "grid.csv"
        s.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "theta,q,q_star"
        assert "0,0.1,0.1" in lines


def _hetero(m, seed):
    scales = np.random.default_rng(seed).choice([0.15, 0.27, 0.5, 1.0], m)
    return [LocationFamily.scaled_gaussian(s) for s in scales]


class TestDominance:
    def test_same_level_larger_location_is_implied(self):
        d = dominates((0.5, 0.1), (0, 0.1), G, 100)
        assert d.weak
        assert d is Dominance.STRICT

    def test_reverse_not_dominated(self):
        assert dominates((0, 0.1), (0.5, 0.1), G, 100) is Dominance.NONE

    def test_equal_constraints_weak_not_strict(self):
        assert dominates((0.2, 0.05), (0.2, 0.05), G, 100) is Dominance.WEAK

    def test_snr_constraints_mutually_undominated(self):
        for i, c1 in enumerate(SNR):
            for j, c2 in enumerate(SNR):
                if i != j:
                    assert dominates(c1, c2, G, 3170) is Dominance.NONE

    def test_unsupported_family(self):
        fam = LocationFamily.tabulated([0, 1], [0.1, 0.9])
        with pytest.raises(UnsupportedFamilyError):
            dominates((0, 0.1), (1, 0.1), fam, 10)

    def test_level_one_rejected(self):
        with pytest.raises(DomainError):
            dominates((0, 1.0), (1, 0.1), G, 10)

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(-2, 2), st.floats(0.005, 0.95), st.floats(-2, 2), st.floats(0.005, 0.95),
        st.sampled_from([2, 10, 100, 3170]), st.sampled_from(["g", "l"]),
    )
    def test_matches_transform_definition(self, t1, q1, t2, q2, m, kind):
        fam = G if kind == "g" else LocationFamily.logistic()
        d = dominates((t1, q1), (t2, q2), fam, m)
        v = q_star_single(t2, q2, fam, m, t1)
        if abs(v - q1) > 1e-12:
            assert d.weak == (v <= q1)


class TestTouchingPoint:
    def test_single(self):
        assert touching_point([(0, 0.1)], G, 100) == 0.0

    def test_snr(self):
        t = touching_point(SNR, G, 3170)
        assert t in (-0.27, 0.0, 0.26)
        assert abs(q_star(SNR, G, 3170, t) - curve_from_constraints(SNR).evaluate(t)) <= 1e-9

    def test_dominating_location_wins(self):
        # (1, 0.1) is strictly dominated by (0, 0.1); S is smaller at 0
        pairs = [(0, 0.1), (1, 0.09)]
        assert dominates((1, 0.09), (0, 0.1), G, 50) is Dominance.STRICT
        s = [2 * t + float(G.quantile(q / 50)) + float(G.quantile(q)) for t, q in pairs]
        assert s[0] < s[1]
        assert touching_point(pairs, G, 50) == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateCurveError):
            touching_point([(0, 1.0)], G, 10)

    def test_random_curves_touch(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            k = rng.integers(1, 5)
            pairs = list(zip(np.sort(rng.uniform(-2, 2, k)), np.sort(rng.uniform(0.01, 0.6, k))[::-1]))
            m = int(rng.choice([5, 50, 3170]))
            t = touching_point(pairs, G, m)
            c = curve_from_constraints(pairs)
            assert abs(q_star(c, G, m, t) - c.evaluate(t)) <= 1e-9


class TestSelection:
    def test_snr_greedy_keeps_all(self):
        assert [c.theta for c in select_constraints_greedy(SNR, G, 3170)] == [-0.27, 0.0, 0.26]

    def test_snr_minimal_keeps_all(self):
        assert len(select_constraints_minimal(SNR, G, 3170)) == 3

    def test_single(self):
        assert select_constraints_greedy([(0, 0.1)], G, 10) == [Constraint(0, 0.1)]
        assert select_constraints_minimal([(0, 0.1)], G, 10) == [Constraint(0, 0.1)]

    def test_dominated_second_constraint_skipped(self):
        c1, c2 = (0.0, 0.1), (1.0, 0.09)
        assert dominates(c2, c1, G, 50).weak
        assert q_star_single(*c1, G, 50, c2[0]) <= c2[1]
        assert select_constraints_greedy([c1, c2], G, 50) == [Constraint(*c1)]
        assert select_constraints_minimal([c1, c2], G, 50) == [Constraint(*c1)]

    def test_minimal_can_skip_the_first_constraint(self):
        # the tight constraint at 0.1 implies the loose one at 0; greedy must keep both
        pairs = [(0.0, 0.3), (0.1, 0.02)]
        assert dominates(pairs[0], pairs[1], G, 10).weak
        assert len(select_constraints_greedy(pairs, G, 10)) == 2
        assert select_constraints_minimal(pairs, G, 10) == [Constraint(*pairs[1])]

    def test_too_many_for_exhaustive(self):
        pairs = [(i * 0.1, 0.5 - i * 0.02) for i in range(21)]
        with pytest.raises(DomainError, match="greedy"):
            select_constraints_minimal(pairs, G, 10)

    def test_random_greedy_certificate(self):
        rng = np.random.default_rng(8)
        for _ in range(150):
            k = int(rng.integers(1, 6))
            pairs = list(zip(np.sort(rng.uniform(-1, 1, k)), np.sort(rng.uniform(0.01, 0.5, k))[::-1]))
            m = int(rng.choice([5, 50, 3170]))
            fams = G if rng.random() < 0.5 else _hetero(m, int(rng.integers(1000)))
            c = curve_from_constraints(pairs)
            sub = select_constraints_greedy(c, fams, m)
            vals = q_star(c, fams, m, c.thetas, subset=sub)
            assert np.all(vals <= c.levels + TOUCH_TOL)
            assert np.any(np.abs(vals - c.levels) <= TOUCH_TOL)
            if len(sub) > 1:
                prev = q_star(c, fams, m, c.thetas, subset=sub[:-1])
                assert np.any(prev > c.levels + TOUCH_TOL)
            best = select_constraints_minimal(c, fams, m)
            assert len(best) <= len(sub)
            assert np.all(q_star(c, fams, m, c.thetas, subset=best) <= c.levels + TOUCH_TOL)
