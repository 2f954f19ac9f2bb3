"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

from fairbary.audit import NOT_ENVY_FREE, OUTSIDE_TRICHOTOMY, audit_envy, audit_order
from fairbary.classifier import lp_oracle, optimal_fair_classifier
from fairbary.instance import gen_example, random_awareness, random_overlap
from fairbary.measure import RealMeasure1D, kolmogorov, wasserstein1
from fairbary.nestedness import NESTED, NOT_NESTED, check_nested, equivalence_check, potential_diagnostic
from fairbary.regression import awareness_reference, barycenter_objective, risk_report, solve_fair_regression
from fairbary.transport import brute_force_ot, cost_matrix_C, solve_ot

RESULTS = {}


def record(k: int, ok: bool, detail: str):
    RESULTS[k] = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(RESULTS[k])
    assert ok, RESULTS[k]


def awareness_grid(inst):
    return float(inst.eta.min()) - 1.0, float(inst.eta.max()) + 1.0, 0.01


@pytest.fixture(scope="module")
def awareness_runs():
    """The 20 awareness instances shared by criteria 6 and 7."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    runs = []
    for _ in range(20):
        inst = random_awareness(rng, 200)
        sol = solve_fair_regression(inst)
        rep = check_nested(inst, *awareness_grid(inst))
        runs.append((inst, sol, rep))
    return runs, time.perf_counter() - t0


def test_criterion_1_example1():
    t0 = time.perf_counter()
    inst = gen_example(1, 200)
    rep = check_nested(inst, -2, 3, 0.01)
    elapsed = time.perf_counter() - t0
    lo = np.array([k.kappa_minus_orig for k in rep.kappa_table])
    hi = np.array([k.kappa_plus_orig for k in rep.kappa_table])
    member = np.all((lo - 0.02 <= 0.5) & (0.5 <= hi + 0.02))
    # where the interval is narrow in the continuum (|y| < 1/2) both ends sit at 1/2
    narrow = np.abs(rep.grid) <= 0.45
    ends = max(np.abs(lo[narrow] - 0.5).max(), np.abs(hi[narrow] - 0.5).max())
    ok = (member and ends <= 0.02 and rep.verdict == NESTED and rep.violating_mass == 0
          and elapsed < 10)
    record(1, ok, f"0.5 in I(y)+-0.02 on all {rep.grid.size} levels: {member}; narrow-region "
                  f"deviation {ends:.4f}; verdict {rep.verdict}; violating mass {rep.violating_mass}; "
                  f"{elapsed:.2f}s")


def test_criterion_2_example2():
    t0 = time.perf_counter()
    inst = gen_example(2, 200)
    rep = check_nested(inst, -8, 3, 0.01)
    elapsed = time.perf_counter() - t0
    k0, k3 = rep.kappa_table[rep.index(0.0)], rep.kappa_table[rep.index(-3.0)]
    dev0 = max(abs(k0.kappa_minus_orig), abs(k0.kappa_plus_orig))
    dev3 = max(abs(k3.kappa_minus_orig - 4), abs(k3.kappa_plus_orig - 4))
    fl = rep.flipped(-3.0, 0.0)
    seg = fl & inst.plus & np.isclose(inst.delta / inst.scale, 1.0) & (inst.eta >= 0) & (inst.eta <= 1)
    mass = float(inst.mu_plus[seg].sum())
    outside = float(inst.mu_plus[fl & ~seg].sum() + inst.mu_minus[fl].sum())
    ok = (dev0 <= 0.02 and dev3 <= 0.05 and rep.verdict == NOT_NESTED
          and abs(mass - 0.5) <= 0.05 and outside == 0 and elapsed < 10)
    record(2, ok, f"|kappa(0)| <= {dev0:.4f}; |kappa(-3) - 4| <= {dev3:.4f}; verdict {rep.verdict}; "
                  f"flipped mu_plus mass on the [0,1] x {{d=1}} segment {mass:.4f} (elsewhere {outside}); "
                  f"{elapsed:.2f}s")


def test_criterion_3_barycenter_identity():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_id, worst_cand, n_cand = 0.0, np.inf, 0
    for _ in range(100):
        inst = random_overlap(rng, int(rng.integers(2, 61)), n_eq=int(rng.integers(0, 2)))
        sol = solve_fair_regression(inst)
        nu, ref = sol.barycenter, sol.ot_value
        obj = barycenter_objective(inst, nu)
        worst_id = max(worst_id, abs(obj - ref) / max(ref, 1e-300) if ref > 0 else abs(obj))
        w = nu.weights / nu.weights.sum()
        cands = [
            RealMeasure1D(nu.values + rng.normal(0, 0.01, len(nu)), w),
            RealMeasure1D(nu.values + rng.normal(0, 0.3, len(nu)), w),
            RealMeasure1D(nu.values + 0.05, w),
            RealMeasure1D(nu.values, rng.dirichlet(np.ones(len(nu)))),
            RealMeasure1D(inst.omega_plus.h, inst.omega_plus.w),
            RealMeasure1D(inst.omega_minus.h, inst.omega_minus.w),
            RealMeasure1D(inst.eta, inst.mu),
        ]
        for c in cands:
            worst_cand = min(worst_cand, barycenter_objective(inst, c) - (ref - 1e-8))
            n_cand += 1
    elapsed = time.perf_counter() - t0
    ok = worst_id <= 1e-8 and worst_cand >= 0 and elapsed < 60
    record(3, ok, f"max relative identity error {worst_id:.2e}; min candidate excess over bound "
                  f"{worst_cand:.3e} ({n_cand} candidates); {elapsed:.2f}s")


def test_criterion_4_ot_vs_brute_force():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = 0.0
    for t in range(200):
        n = int(rng.integers(1, 7))
        a = np.full(n, 1.0 / n)
        if t % 2:
            C = rng.uniform(0, 1, (n, n)) * rng.choice([1, 10])
        else:
            h1, h2 = rng.normal(size=n), rng.normal(size=n)
            d1, d2 = rng.uniform(0.2, 3, n), -rng.uniform(0.2, 3, n)
            C = cost_matrix_C(h1, d1, h2, d2)
        ref = brute_force_ot(a, a, C).cost
        for method in ("auto", "simplex"):
            worst = max(worst, abs(solve_ot(a, a, C, method=method).cost - ref))
    elapsed = time.perf_counter() - t0
    record(4, worst <= 1e-9 and elapsed < 30,
           f"max |cost - brute force| {worst:.2e} over 200 instances, both solver paths; {elapsed:.2f}s")


def test_criterion_5_classifier_vs_lp():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst_risk, worst_gap = 0.0, 0.0
    for t in range(100):
        inst = random_overlap(rng, int(rng.integers(2, 51)), binary=bool(t % 2))
        ys = np.r_[np.quantile(inst.eta, [0.2, 0.5, 0.8]), rng.uniform(inst.eta.min(), inst.eta.max(), 2)]
        for y in ys:
            c = optimal_fair_classifier(inst, float(y))
            v, _ = lp_oracle(inst, float(y))
            worst_risk = max(worst_risk, abs(c.surrogate_risk - v))
            worst_gap = max(worst_gap, c.parity_gap)
    elapsed = time.perf_counter() - t0
    ok = worst_risk <= 1e-9 and worst_gap <= 1e-12 and elapsed < 30
    record(5, ok, f"max |surrogate - LP| {worst_risk:.2e}; max parity gap {worst_gap:.2e} "
                  f"over 500 cases; {elapsed:.2f}s")


def test_criterion_6_awareness(awareness_runs):
    runs, elapsed = awareness_runs
    t0 = time.perf_counter()
    worst_risk, worst_w1, verdicts = 0.0, 0.0, []
    for inst, sol, rep in runs:
        ref = awareness_reference(inst)
        risk, _ = risk_report(inst, ref)
        worst_risk = max(worst_risk, abs(risk - sol.excess_risk_randomized))
        worst_w1 = max(worst_w1, wasserstein1(RealMeasure1D(ref, inst.mu), sol.barycenter))
        verdicts.append(rep.verdict)
    elapsed += time.perf_counter() - t0
    n_nested = sum(v == NESTED for v in verdicts)
    ok = worst_risk <= 0.02 and worst_w1 <= 0.02 and n_nested == 20 and elapsed < 60
    record(6, ok, f"max risk difference {worst_risk:.2e}; max W1 {worst_w1:.2e}; "
                  f"NESTED {n_nested}/20; {elapsed:.2f}s")


def test_criterion_7_equivalence(awareness_runs, ex1, ex2):
    gaps = []
    e1 = equivalence_check(ex1, -2, 3, 0.01)
    gaps.append((e1.nested, e1.risk_gap, e1.pushforward_gap))
    for inst, sol, rep in awareness_runs[0]:
        e = equivalence_check(inst, *awareness_grid(inst), report=rep, solution=sol)
        gaps.append((e.nested, e.risk_gap, e.pushforward_gap))
    nested_ok = all(g[0] for g in gaps)
    risk_gap = max(g[1] for g in gaps) if nested_ok else np.inf
    push_gap = max(g[2] for g in gaps) if nested_ok else np.inf
    e2 = equivalence_check(ex2, -8, 3, 0.01)
    margin = e2.suboptimality_margin if e2.suboptimality_margin is not None else -np.inf
    ok = nested_ok and risk_gap <= 0.01 and push_gap <= 0.01 and not e2.nested and margin > 0.01
    record(7, ok, f"nested cases: max risk gap {risk_gap:.2e}, max pushforward gap {push_gap:.2e} "
                  f"({len(gaps)} instances); Example 2 thresholded transport rule suboptimal by "
                  f"{margin:.4f} at y={e2.witness_y}")


def test_criterion_8_order_preservation():
    rng = np.random.default_rng(8)
    broken, checked = 0, 0
    while checked < 20:
        inst = random_overlap(rng, int(rng.integers(10, 40)))
        law1, law2 = RealMeasure1D(inst.eta, inst.mu1), RealMeasure1D(inst.eta, inst.mu2)
        if kolmogorov(law1, law2) == 0:
            continue  # eta already satisfies parity
        checked += 1
        broken += not audit_order(inst, solve_fair_regression(inst).f_det).preserves_order
    kept = sum(audit_order(inst, awareness_reference(inst)).preserves_order
               for inst in (random_awareness(rng, 200) for _ in range(20)))
    record(8, broken == 20 and kept == 20,
           f"overlap instances with order broken {broken}/20; awareness rule preserving order {kept}/20")


def test_criterion_9_potential(ex1):
    a = potential_diagnostic(ex1, check_nested(ex1, -2, 3, 0.005))
    b = potential_diagnostic(ex1, check_nested(ex1, -2, 3, 0.0025))
    ga = max(a.duality_gap_plus, a.duality_gap_minus)
    gb = max(b.duality_gap_plus, b.duality_gap_minus)
    # the gaps sit at rounding level, so refinement is compared with 1e-12 slack
    ok = ga <= 0.02 and gb <= 0.02 and gb <= ga + 1e-12
    record(9, ok, f"duality gaps step 0.005: ({a.duality_gap_plus:.2e}, {a.duality_gap_minus:.2e}); "
                  f"step 0.0025: ({b.duality_gap_plus:.2e}, {b.duality_gap_minus:.2e})")


def test_criterion_10_envy():
    rng = np.random.default_rng(10)
    cases, outside = {}, 0
    witnesses = 0
    for _ in range(50):
        inst = random_overlap(rng, int(rng.integers(5, 40)))
        for y in np.quantile(inst.eta, [0.25, 0.5, 0.75]):
            rep = audit_envy(inst, optimal_fair_classifier(inst, float(y)), float(y))
            cases[rep.case] = cases.get(rep.case, 0) + 1
            outside += rep.case == OUTSIDE_TRICHOTOMY
            if rep.case == NOT_ENVY_FREE:
                witnesses += bool(rep.witnesses)
    ok = outside == 0 and sum(cases.values()) == 150 and witnesses >= 1
    record(10, ok, f"case counts {dict(sorted(cases.items()))}; NOT_ENVY_FREE with witnesses {witnesses}")


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    for k in sorted(RESULTS):
        print(RESULTS[k])
    sys.exit(code)
