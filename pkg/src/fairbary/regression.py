"""Fair regression through the two-sided barycenter problem.

The optimal plan between ``omega_plus`` and ``omega_minus`` under the pairwise
cost ``C`` yields the barycenter (pushforward of the plan by the weighted
midpoint) and a randomized regression rule: each Omega atom is sent to the
midpoints of the cells in its row or column. The conditional mean of that
kernel gives a deterministic rule, reported with its own risk and parity gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .instance import FairInstance, OmegaMeasure
from .measure import RealMeasure1D, cdf, kolmogorov, quantile
from .transport import TransportPlan, cost_matrix_C, cost_matrix_c, solve_ot


class RegressionError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionSolution:
    """Outputs of :func:`solve_fair_regression`.

    ``kernel_plus[i]`` is the law of the prediction at Omega atom ``i`` of
    ``omega_plus`` (likewise for the minus side). ``f_det`` and ``f_rand``
    are aligned with ``inst.x_support``.
    """

    plan: TransportPlan
    barycenter: RealMeasure1D
    cell_values: np.ndarray
    kernel_plus: list
    kernel_minus: list
    f_det: np.ndarray
    f_rand: list
    ot_value: float
    excess_risk_randomized: float
    excess_risk_deterministic: float
    parity_gap_randomized: float
    parity_gap_deterministic: float
    metadata: dict = field(default_factory=dict)


def _orders(om: OmegaMeasure):
    return np.lexsort((om.d, om.h))


def solve_omega_ot(inst: FairInstance) -> tuple[TransportPlan, np.ndarray]:
    """Exact ``OT_C(omega_plus, omega_minus)`` and the midpoint of every plan cell."""
    op, om = inst.omega_plus, inst.omega_minus
    C = cost_matrix_C(op.h, op.d, om.h, om.d)
    plan = solve_ot(op.w, om.w, C, row_order=_orders(op), col_order=_orders(om))
    wp = 1.0 / np.abs(op.d[plan.rows])
    wm = 1.0 / np.abs(om.d[plan.cols])
    z = (op.h[plan.rows] * wp + om.h[plan.cols] * wm) / (wp + wm)
    return plan, z


def _kernels(keys, z, flows, size):
    out = []
    for i in range(size):
        sel = keys == i
        f = flows[sel]
        out.append(RealMeasure1D(z[sel], f / f.sum()))
    return out


def solve_fair_regression(inst: FairInstance) -> RegressionSolution:
    """Optimal fair regression rule of a finite instance.

    Returns both the randomized rule induced by the optimal plan (exact
    parity, risk equal to the transport value) and its barycentric
    projection. Equal-density atoms always predict ``eta``.
    """
    plan, z = solve_omega_ot(inst)
    bary = RealMeasure1D(z, plan.flows)
    kp = _kernels(plan.rows, z, plan.flows, len(inst.omega_plus))
    km = _kernels(plan.cols, z, plan.flows, len(inst.omega_minus))
    f_rand = []
    for k in range(inst.n):
        if inst.plus[k]:
            f_rand.append(kp[inst.omega_plus.index[k]])
        elif inst.minus[k]:
            f_rand.append(km[inst.omega_minus.index[k]])
        else:
            f_rand.append(RealMeasure1D(np.array([inst.eta[k]]), np.array([1.0])))
    f_det = np.array([k.mean() for k in f_rand])
    risk_r, gap_r = risk_report(inst, f_rand)
    risk_d, gap_d = risk_report(inst, f_det)
    meta = {
        "deterministic_rule": "barycentric projection (conditional mean of the plan kernel)",
        "plan_is_map": plan.is_map(),
        "pivots": plan.pivots,
    }
    return RegressionSolution(plan, bary, z, kp, km, f_det, f_rand, plan.cost,
                              risk_r, risk_d, gap_r, gap_d, meta)


def _as_array(inst: FairInstance, f) -> list | np.ndarray:
    if isinstance(f, Mapping):
        try:
            f = [f[x] for x in inst.x_support]
        except KeyError as exc:
            raise RegressionError(f"undefined rule at atom {exc.args[0]!r}") from None
    if len(f) != inst.n:
        raise RegressionError("rule must cover every support atom")
    if all(isinstance(v, RealMeasure1D) for v in f):
        return list(f)
    return np.asarray(f, dtype=float)


def pushforward_rule(inst: FairInstance, f, weights) -> RealMeasure1D:
    """Law of ``f(X)`` for ``X`` distributed as ``weights``; kernels are mixed."""
    f = _as_array(inst, f)
    if isinstance(f, np.ndarray):
        return RealMeasure1D(f, np.asarray(weights, float).copy())
    vals = np.concatenate([k.values for k in f])
    w = np.concatenate([k.weights * wk for k, wk in zip(f, weights)])
    return RealMeasure1D(vals, w)


def risk_report(inst: FairInstance, f) -> tuple[float, float]:
    """Excess squared risk ``E[(eta - f)^2]`` and Kolmogorov parity gap.

    ``f`` is an array aligned with the support, a mapping from point ids, or a
    sequence of per-atom prediction laws (:class:`RealMeasure1D`).
    """
    f = _as_array(inst, f)
    if isinstance(f, np.ndarray):
        risk = float(inst.mu @ (inst.eta - f) ** 2)
    else:
        risk = float(sum(mu * (k.weights @ (e - k.values) ** 2)
                         for mu, e, k in zip(inst.mu, inst.eta, f)))
    gap = kolmogorov(pushforward_rule(inst, f, inst.mu_plus),
                     pushforward_rule(inst, f, inst.mu_minus))
    return risk, gap


def awareness_reference(inst: FairInstance) -> np.ndarray:
    """Quantile-averaging rule for instances where each atom has one group.

    ``f(x) = p1 Q1(F_s(eta(x))) + p2 Q2(F_s(eta(x)))`` with ``F_s`` and ``Q_s``
    the c.d.f. and quantile function of ``eta`` under group ``s``.
    """
    if not inst.is_awareness():
        raise RegressionError("awareness structure required")
    laws = [RealMeasure1D(inst.eta, inst.mu1), RealMeasure1D(inst.eta, inst.mu2)]
    group = np.where(inst.mu1 > 0, 0, 1)
    out = np.empty(inst.n)
    for s in (0, 1):
        sel = group == s
        lev = np.clip(cdf(laws[s], inst.eta[sel]), 0.0, 1.0)
        out[sel] = inst.p1 * quantile(laws[0], lev) + inst.p2 * quantile(laws[1], lev)
    return out


def barycenter_objective(inst: FairInstance, nu: RealMeasure1D) -> float:
    """``OT_c(omega_plus, nu) + OT_c(omega_minus, nu)`` with the two-to-one cost."""
    total = 0.0
    nu_w = nu.weights / nu.weights.sum()
    for om in (inst.omega_plus, inst.omega_minus):
        C = cost_matrix_c(om.h, om.d, nu.values)
        plan = solve_ot(om.w, nu_w, C, row_order=_orders(om), col_order=np.arange(len(nu)))
        total += plan.cost
    return total
