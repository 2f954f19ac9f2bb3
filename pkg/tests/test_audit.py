import numpy as np
import pytest

from fairbary.audit import (BAYES_SUBSET_FAIR, FAIR_SUBSET_BAYES, NOT_ENVY_FREE, OUTSIDE_TRICHOTOMY,
                            audit_envy, audit_order, group_rates)
from fairbary.classifier import bayes_classifier, optimal_fair_classifier
from fairbary.instance import RawInstance, derive, random_awareness, random_overlap
from fairbary.regression import awareness_reference, solve_fair_regression


def test_identity_preserves_order(rng):
    inst = random_overlap(rng, 30)
    rep = audit_order(inst, inst.eta)
    assert rep.preserves_order and rep.n_violations == 0 and rep.overlap


def test_constant_rule_violates(rng):
    inst = random_overlap(rng, 10)
    rep = audit_order(inst, np.zeros(inst.n))
    # every strictly ordered pair in each group ties under a constant rule
    expect = sum(np.sum(inst.eta[m > 0][:, None] < inst.eta[m > 0][None, :]) for m in (inst.mu1, inst.mu2))
    assert rep.n_violations == expect and not rep.preserves_order
    assert len(rep.violating_pairs) == min(50, expect)


def test_violating_mass():
    recs = (("a", 1, 0.0, 0.2), ("b", 1, 1.0, 0.3), ("a", 2, 0.0, 0.25), ("b", 2, 1.0, 0.25))
    inst = derive(RawInstance(recs))
    rep = audit_order(inst, {"a": 1.0, "b": 0.0})
    assert rep.n_violations == 2
    assert rep.violating_pair_mass == pytest.approx(0.2 * 0.3 + 0.25 * 0.25)


def test_awareness_reference_preserves_order(rng):
    for _ in range(5):
        inst = random_awareness(rng, 60)
        assert audit_order(inst, awareness_reference(inst)).preserves_order
        assert not audit_order(inst, awareness_reference(inst)).overlap


def test_overlap_solution_audit_runs(rng):
    inst = random_overlap(rng, 20)
    sol = solve_fair_regression(inst)
    rep = audit_order(inst, sol.f_det)
    assert rep.n_violations >= 0 and rep.violating_pair_mass >= 0


def test_envy_identical(rng):
    inst = random_overlap(rng, 10)
    rep = audit_envy(inst, bayes_classifier(inst, 0.5), 0.5)
    assert rep.identical and rep.case == BAYES_SUBSET_FAIR


def test_envy_cases_are_exhaustive_under_overlap(rng):
    seen = set()
    for _ in range(40):
        inst = random_overlap(rng, 15)
        for y in np.quantile(inst.eta, [0.25, 0.5, 0.75]):
            c = optimal_fair_classifier(inst, y)
            rep = audit_envy(inst, c, y)
            assert rep.case != OUTSIDE_TRICHOTOMY
            seen.add(rep.case)
            if rep.case == NOT_ENVY_FREE:
                assert rep.witnesses
                x, xp, s = rep.witnesses[0]
                i, j = inst.x_support.index(x), inst.x_support.index(xp)
                assert inst.eta[i] >= y > inst.eta[j]
    assert NOT_ENVY_FREE in seen


def test_envy_subset_cases():
    recs = (("a", 1, 0.9, 0.3), ("b", 1, 0.1, 0.2), ("a", 2, 0.9, 0.2), ("b", 2, 0.1, 0.3))
    inst = derive(RawInstance(recs))
    assert audit_envy(inst, np.array([1.0, 1.0]), 0.5).case == BAYES_SUBSET_FAIR
    assert audit_envy(inst, np.array([0.0, 0.0]), 0.5).case == FAIR_SUBSET_BAYES
    assert audit_envy(inst, np.array([0.0, 1.0]), 0.5).case == NOT_ENVY_FREE


def test_group_rates():
    recs = (("a", 1, 0.9, 0.25), ("b", 1, 0.1, 0.25), ("a", 2, 0.9, 0.4), ("b", 2, 0.1, 0.1))
    inst = derive(RawInstance(recs))
    r = group_rates(inst, [1, 0])
    assert r["rate_1"] == pytest.approx(0.5) and r["rate_2"] == pytest.approx(0.8)
    assert r["difference"] == pytest.approx(0.3) and r["ratio"] == pytest.approx(0.625)
