"""Nestedness of the optimal threshold classifiers along a grid of levels.

With ``kappa(y)`` fixed to the upper end of the parity interval, the problem
is nested when every atom's decision ``y -> g_y(x)`` is nonincreasing. In that
case ``f(x) = sup{y : g_y(x) = 1}`` is an optimal fair regression rule, which
is checked against the transport solution, and ``v(y) = -2 int_0^y kappa``
is a dual potential for the transport from each Jordan part to the
barycenter.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifier import KappaInterval, breakpoints, kappa_interval, optimal_fair_classifier
from .instance import FairInstance
from .measure import RealMeasure1D, wasserstein1
from .regression import risk_report, solve_fair_regression
from .transport import cost_matrix_c, solve_ot

BOUNDARY_TOL = 1e-9
NESTED, NOT_NESTED = "NESTED", "NOT_NESTED"


class NestednessError(ValueError):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FAIRBARY_THREADS", "1")))
    except ValueError:
        return 1


def make_grid(y_min: float, y_max: float, step: float) -> np.ndarray:
    if not (step > 0) or not (y_max >= y_min) or not np.isfinite([y_min, y_max, step]).all():
        raise NestednessError(f"empty grid: [{y_min}, {y_max}] with step {step}")
    k = int(np.floor((y_max - y_min) / step + 1e-9))
    return np.round(y_min + step * np.arange(k + 1), 12)


@dataclass(frozen=True)
class Violation:
    x: object
    y: float
    y_prime: float
    mu_mass: float
    mu_plus_mass: float


@dataclass(frozen=True)
class NestednessReport:
    """Grid scan of the decisions ``g_y(x)`` with ``kappa = kappa_plus(y)``.

    ``decisions[j, k]`` is 1 / 0 for accept / reject of atom ``k`` at
    ``grid[j]`` and -1 where the atom lies within ``1e-9`` of the decision
    boundary (excluded from the monotonicity check).
    """

    grid: np.ndarray
    step: float
    kappa_table: list
    decisions: np.ndarray
    verdict: str
    violations: list
    violating_mass: float
    violating_plus_mass: float
    excluded_cells: int
    metadata: dict = field(default_factory=dict)

    @property
    def kappa_plus(self) -> np.ndarray:
        return np.array([k.kappa_plus for k in self.kappa_table])

    @property
    def kappa_minus(self) -> np.ndarray:
        return np.array([k.kappa_minus for k in self.kappa_table])

    def index(self, y: float) -> int:
        j = int(np.argmin(np.abs(self.grid - y)))
        if abs(self.grid[j] - y) > 1e-9:
            raise NestednessError(f"level {y} is not on the grid")
        return j

    def flipped(self, y: float, y_prime: float) -> np.ndarray:
        """Atoms rejected at ``y`` and accepted at ``y_prime``."""
        a, b = self.decisions[self.index(y)], self.decisions[self.index(y_prime)]
        return (a == 0) & (b == 1)


def _decisions(inst: FairInstance, y: float, ki: KappaInterval):
    """Decisions of the classifiers inside the parity interval.

    A nondegenerate interval holds no breakpoint in its interior, so every
    interior slope (the upper end approached from inside) gives the same
    decisions; the midpoint is used. A singleton interval leaves the atoms on
    its breakpoint undecided and they are marked -1.
    """
    r = breakpoints(inst, y)
    acc = np.zeros(inst.n, int)
    bd = np.zeros(inst.n, bool)
    p, mn, eq = inst.plus, inst.minus, inst.eq
    if ki.kappa_plus - ki.kappa_minus > 2 * BOUNDARY_TOL:
        k = 0.5 * (ki.kappa_minus + ki.kappa_plus)
    else:
        k = ki.kappa_plus
        bd[p | mn] = np.abs(r[p | mn] - k) <= BOUNDARY_TOL
    acc[p] = r[p] >= k
    acc[mn] = r[mn] <= k
    acc[eq] = inst.eta[eq] >= y
    bd[eq] = np.abs(inst.eta[eq] - y) <= BOUNDARY_TOL
    acc[bd] = -1
    return acc


def check_nested(inst: FairInstance, y_min: float, y_max: float, step: float) -> NestednessReport:
    """Scan ``y`` over a grid and test that each atom's decision never
    switches from reject to accept as ``y`` increases."""
    grid = make_grid(y_min, y_max, step)

    def one(y):
        ki = kappa_interval(inst, y)
        return ki, _decisions(inst, y, ki)

    if _threads() > 1:
        with ThreadPoolExecutor(_threads()) as ex:
            rows = list(ex.map(one, grid))
    else:
        rows = [one(y) for y in grid]
    table = [r[0] for r in rows]
    D = np.array([r[1] for r in rows])

    violations = []
    bad = np.zeros(inst.n, bool)
    for k in range(inst.n):
        col = D[:, k]
        rej = np.flatnonzero(col == 0)
        if rej.size == 0:
            continue
        later = np.flatnonzero(col[rej[0]:] == 1)
        if later.size:
            j1 = rej[0] + later[-1]
            bad[k] = True
            violations.append(Violation(inst.x_support[k], float(grid[rej[0]]), float(grid[j1]),
                                        float(inst.mu[k]), float(inst.mu_plus[k])))
    verdict = NOT_NESTED if violations else NESTED
    meta = {"kappa_rule": "upper end of the parity interval",
            "note": "verdict holds on the stated grid only; off-grid levels are not certified",
            "boundary_tol": BOUNDARY_TOL}
    return NestednessReport(grid, float(step), table, D, verdict, violations,
                            float(inst.mu @ bad), float(inst.mu_plus @ bad),
                            int(np.count_nonzero(D == -1)), meta)


@dataclass(frozen=True)
class ClassifierRegression:
    """Regression rule assembled from the nested classifiers.

    ``F[j] = mu_plus(eta <= grid[j] + kappa(grid[j]) delta)`` and ``law`` is
    the pushforward of ``mu_plus`` by ``f_star``.
    """

    f_star: np.ndarray
    F: np.ndarray
    law: RealMeasure1D
    parity_gap: float
    excess_risk: float


def regression_from_classifiers(inst: FairInstance, report: NestednessReport) -> ClassifierRegression:
    """``f(x) = sup{y : g_y(x) = 1}`` read off the grid.

    The supremum lies between the last accepted and the next rejected grid
    level; the midpoint of that bracket is returned. Atoms never accepted get
    the grid start and atoms accepted up to the end get the grid end.
    """
    if report.verdict != NESTED:
        raise NestednessError("construction invalid for a non-nested problem; "
                              f"witness {report.violations[0]}")
    grid, D = report.grid, report.decisions
    f = np.empty(inst.n)
    for k in range(inst.n):
        if inst.eq[k]:
            f[k] = inst.eta[k]
            continue
        col = D[:, k]
        acc = np.flatnonzero(col == 1)
        if acc.size == 0:
            f[k] = grid[0]
            continue
        j = acc[-1]
        rej = np.flatnonzero(col[j:] == 0)
        f[k] = 0.5 * (grid[j] + grid[j + rej[0]]) if rej.size else grid[-1]
    kp = report.kappa_plus
    p = inst.plus
    F = np.array([inst.mu_plus[p] @ (inst.eta[p] <= y + kk * inst.delta[p]) for y, kk in zip(grid, kp)])
    risk, gap = risk_report(inst, f)
    return ClassifierRegression(f, F, RealMeasure1D(f, inst.mu_plus.copy()), gap, risk)


@dataclass(frozen=True)
class EquivalenceResult:
    nested: bool
    risk_gap: float | None
    pushforward_gap: float | None
    witness_y: float | None
    suboptimality_margin: float | None
    report: NestednessReport
    ot_value: float


def equivalence_check(inst: FairInstance, y_min: float, y_max: float, step: float,
                      report: NestednessReport | None = None, solution=None) -> EquivalenceResult:
    """Compare the classifier-built rule with the transport solution.

    On nested problems the two risks and the two prediction laws are
    compared. Otherwise the deterministic transport rule is thresholded at
    every grid level and the level where it is most suboptimal among fair
    classifiers is reported.
    """
    rep = report or check_nested(inst, y_min, y_max, step)
    sol = solution or solve_fair_regression(inst)
    if rep.verdict == NESTED:
        cr = regression_from_classifiers(inst, rep)
        nu = sol.barycenter
        gap = max(wasserstein1(RealMeasure1D(cr.f_star, inst.mu_plus.copy()), nu),
                  wasserstein1(RealMeasure1D(cr.f_star, inst.mu_minus.copy()), nu))
        return EquivalenceResult(True, abs(cr.excess_risk - sol.ot_value), gap, None, None,
                                 rep, sol.ot_value)
    best_y, best = None, -np.inf
    for y in rep.grid:
        g = (sol.f_det >= y).astype(float)
        s = float(inst.mu @ (g * (y - inst.eta)))
        margin = s - optimal_fair_classifier(inst, y).surrogate_risk
        if margin > best:
            best_y, best = float(y), margin
    return EquivalenceResult(False, None, None, best_y, best, rep, sol.ot_value)


@dataclass(frozen=True)
class PotentialDiagnostic:
    duality_gap_plus: float
    duality_gap_minus: float
    ot_plus: float
    ot_minus: float
    dual_plus: float
    dual_minus: float


def potential_diagnostic(inst: FairInstance, report: NestednessReport) -> PotentialDiagnostic:
    """Duality gaps of ``v(y) = -2 int kappa_plus`` (trapezoid on the grid)
    for the transports from each Jordan part to ``f_star`` pushed by ``mu_plus``.

    The plus side uses ``v`` and the minus side ``-v``; each c-transform
    ``w(x) = max_z (+-v(z) - c(x, z))`` runs over the atoms of the target law.
    """
    cr = regression_from_classifiers(inst, report)
    grid, kp = report.grid, report.kappa_plus
    vgrid = -2.0 * np.concatenate([[0.0], np.cumsum(0.5 * (kp[1:] + kp[:-1]) * np.diff(grid))])
    # anchor at zero when the grid covers it; a constant shift cancels anyway
    if grid[0] <= 0.0 <= grid[-1]:
        vgrid = vgrid - np.interp(0.0, grid, vgrid)
    nu = cr.law
    z, wz = nu.values, nu.weights / nu.weights.sum()
    vz = np.interp(z, grid, vgrid)
    out = []
    for om, sign in ((inst.omega_plus, 1.0), (inst.omega_minus, -1.0)):
        C = cost_matrix_c(om.h, om.d, z)
        plan = solve_ot(om.w, wz, C, row_order=np.lexsort((om.d, om.h)), col_order=np.arange(z.size))
        wc = np.max(sign * vz[None, :] - C, axis=1)
        dual = float(wz @ (sign * vz) - om.w @ wc)
        out.append((plan.cost, dual))
    (op, dp), (om_, dm) = out
    return PotentialDiagnostic(abs(op - dp), abs(om_ - dm), op, om_, dp, dm)
