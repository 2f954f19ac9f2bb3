"""Fair cost-sensitive classification with the threshold family
``g(x) = 1{eta(x) >= y + kappa * delta(x)}``.

Every atom with ``delta != 0`` has a breakpoint ``r = (eta - y) / delta``: a
plus atom is accepted iff ``r >= kappa`` and a minus atom iff ``r <= kappa``.
The parity function ``G(kappa) = mu_plus(accepted) - mu_minus(accepted)`` is a
nonincreasing step function of ``kappa``, so its zero set is found by one
sorted scan of the breakpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .instance import FairInstance

ZERO_TOL = 1e-12
LP_MAX_ATOMS = 200


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class KappaInterval:
    """Closed zero set ``[kappa_minus, kappa_plus]`` of the parity function.

    When no exact zero exists both ends sit on the sign-change breakpoint and
    ``crossing_gap`` is the smallest attainable ``|G|``. ``regime`` is
    ``"all_accept"`` or ``"all_reject"`` when the classifiers inside the
    interval accept (reject) every atom with ``delta != 0``; the interval is
    then the finite window between extreme breakpoints.
    """

    y: float
    kappa_minus: float
    kappa_plus: float
    crossing_gap: float
    regime: str = "interior"
    scale: float = 1.0

    @property
    def kappa_minus_orig(self) -> float:
        return self.scale * self.kappa_minus

    @property
    def kappa_plus_orig(self) -> float:
        return self.scale * self.kappa_plus

    @property
    def exact(self) -> bool:
        return self.crossing_gap == 0.0


@dataclass(frozen=True)
class ThresholdClassifier:
    """Optimal fair classifier at level ``y``.

    ``probs`` are acceptance probabilities including the boundary
    randomization that restores exact parity; ``accept`` is the plain
    threshold rule with the ``>=`` convention. ``det_accept`` is the
    deterministic rounding of the boundary with the smallest parity gap.
    """

    y: float
    kappa: float
    interval: KappaInterval
    accept: np.ndarray
    boundary: np.ndarray
    probs: np.ndarray
    parity_gap: float
    surrogate_risk: float
    risk: float | None
    det_accept: np.ndarray
    det_parity_gap: float
    det_surrogate_risk: float
    metadata: dict = field(default_factory=dict)

    @property
    def kappa_orig(self) -> float:
        return self.interval.scale * self.kappa

    @property
    def boundary_randomization(self) -> dict:
        return {int(k): float(self.probs[k]) for k in np.flatnonzero(self.boundary)}


def breakpoints(inst: FairInstance, y: float) -> np.ndarray:
    """``(eta - y) / delta`` on atoms with ``delta != 0``, ``nan`` elsewhere."""
    r = np.full(inst.n, np.nan)
    nz = inst.delta != 0
    r[nz] = (inst.eta[nz] - y) / inst.delta[nz]
    return r


def parity_function_G(inst: FairInstance, kappa: float, y: float) -> float:
    """``mu_plus(g = 1) - mu_minus(g = 1)`` for ``g = 1{eta >= y + kappa delta}``."""
    acc = inst.eta >= y + kappa * inst.delta
    return float(inst.mu_plus @ acc - inst.mu_minus @ acc)


def parity_profile(inst: FairInstance, y: float):
    """Sorted unique breakpoints ``b``, ``G`` at each of them and ``G`` on the
    open gaps (``gaps[k]`` is the value just left of ``b[k]``; one extra
    entry for the right tail)."""
    r = breakpoints(inst, y)
    rp, wp = r[inst.plus], inst.mu_plus[inst.plus]
    rm, wm = r[inst.minus], inst.mu_minus[inst.minus]
    b = np.unique(np.concatenate([rp, rm]))
    cp = np.cumsum(np.bincount(np.searchsorted(b, rp), wp, b.size))
    cm = np.cumsum(np.bincount(np.searchsorted(b, rm), wm, b.size))
    tp, tm = cp[-1], cm[-1]
    plus_ge = tp - np.concatenate([[0.0], cp[:-1]])  # mu_plus(r >= b_k)
    plus_gt = tp - cp  # mu_plus(r > b_k)
    minus_le = cm  # mu_minus(r <= b_k)
    minus_lt = np.concatenate([[0.0], cm[:-1]])  # mu_minus(r < b_k)
    at = plus_ge - minus_le
    gaps = np.concatenate([plus_ge - minus_lt, [plus_gt[-1] - minus_le[-1]]])
    return b, at, gaps


def kappa_interval(inst: FairInstance, y: float, tol: float = ZERO_TOL) -> KappaInterval:
    """Zero set of the parity function at level ``y``.

    The scan covers the value at each breakpoint and on each open gap
    between consecutive breakpoints. Its closure is an interval
    ``[kappa_minus, kappa_plus]`` whose ends are breakpoints.
    """
    b, at, gaps = parity_profile(inst, y)
    zero_at = np.abs(at) <= tol
    zero_gap = np.abs(gaps) <= tol
    # gap k lies between b[k-1] and b[k]; the two tails never vanish
    if zero_at.any() or zero_gap[1:-1].any():
        lo_c = np.concatenate([b[zero_at], b[:-1][zero_gap[1:-1]]])
        hi_c = np.concatenate([b[zero_at], b[1:][zero_gap[1:-1]]])
        lo, hi, gap = float(lo_c.min()), float(hi_c.max()), 0.0
    else:
        # first breakpoint whose right side is negative
        k = int(np.argmax(gaps[1:] < 0))
        lo = hi = float(b[k])
        gap = float(min(abs(at[k]), abs(gaps[k]), abs(gaps[k + 1])))
    regime = "interior"
    r = breakpoints(inst, y)
    mid = 0.5 * (lo + hi)
    if lo < hi:
        acc_p = r[inst.plus] >= mid
        acc_m = r[inst.minus] <= mid
        if acc_p.all() and acc_m.all():
            regime = "all_accept"
        elif not acc_p.any() and not acc_m.any():
            regime = "all_reject"
    return KappaInterval(float(y), lo, hi, gap, regime, inst.scale)


def _surrogate(inst: FairInstance, g, y: float) -> float:
    return float(inst.mu @ (np.asarray(g, float) * (y - inst.eta)))


def _risk(inst: FairInstance, g, y: float) -> float | None:
    if not inst.y_binary:
        return None
    return float((1.0 - y) * (inst.mu @ inst.eta) + _surrogate(inst, g, y))


def _gap(inst: FairInstance, g) -> float:
    g = np.asarray(g, float)
    return abs(float(inst.mu_plus @ g - inst.mu_minus @ g))


def optimal_fair_classifier(inst: FairInstance, y: float) -> ThresholdClassifier:
    """Parity-constrained minimizer of ``E[g(X) (y - eta(X))]`` at level ``y``.

    Uses ``kappa = kappa_plus``. Boundary atoms (``r == kappa``) on one side
    are accepted with a common probability chosen so that both Jordan parts
    have equal accepted mass; inside a nondegenerate interval this gives the
    same decisions as any interior slope. Equal-density atoms accept iff
    ``eta >= y``.
    """
    ki = kappa_interval(inst, y)
    k = ki.kappa_plus
    r = breakpoints(inst, y)
    plus, minus, eq = inst.plus, inst.minus, inst.eq
    bd = np.zeros(inst.n, bool)
    bd[plus | minus] = r[plus | minus] == k
    strict = np.zeros(inst.n, bool)
    strict[plus] = r[plus] > k
    strict[minus] = r[minus] < k
    strict[eq] = inst.eta[eq] >= y
    accept = (strict | bd).astype(int)

    p_s = float(inst.mu_plus @ (strict & plus))
    p_b = float(inst.mu_plus @ (bd & plus))
    m_s = float(inst.mu_minus @ (strict & minus))
    m_b = float(inst.mu_minus @ (bd & minus))
    d = m_s - p_s
    probs = strict.astype(float)
    if d > 0 and p_b > 0:
        probs[bd & plus] = min(d / p_b, 1.0)
    elif d < 0 and m_b > 0:
        probs[bd & minus] = min(-d / m_b, 1.0)

    # deterministic rounding of the two boundary groups
    best = None
    for take_p in (True, False):
        for take_m in (True, False):
            g = strict | (bd & plus & take_p) | (bd & minus & take_m)
            key = (round(_gap(inst, g), 15), _surrogate(inst, g, y))
            if best is None or key < best[0]:
                best = (key, g.astype(int))
    det = best[1]
    return ThresholdClassifier(
        y=float(y), kappa=k, interval=ki, accept=accept, boundary=bd, probs=probs,
        parity_gap=_gap(inst, probs), surrogate_risk=_surrogate(inst, probs, y),
        risk=_risk(inst, probs, y), det_accept=det, det_parity_gap=_gap(inst, det),
        det_surrogate_risk=_surrogate(inst, det, y),
        metadata={"kappa_rule": "upper end of the parity interval",
                  "randomized_boundary_atoms": int(np.count_nonzero((probs > 0) & (probs < 1)))},
    )


def lp_oracle(inst: FairInstance, y: float, max_atoms: int = LP_MAX_ATOMS):
    """Exact optimum of the relaxed fair classification linear program.

    ``min sum_x c_x g_x`` over ``g in [0, 1]`` with ``sum_x a_x g_x = 0``,
    where ``c = mu (y - eta)`` and ``a = mu_plus - mu_minus``. The concave
    dual ``lambda -> sum_x min(0, c_x + lambda a_x)`` is maximized by
    evaluating it at every breakpoint; a primal optimum is read off the
    signs of the reduced costs.

    Returns
    -------
    value : float
    probs : ndarray
        Optimal acceptance probabilities aligned with the support.
    """
    if inst.n > max_atoms:
        raise ClassifierError(f"support too large for the LP oracle ({inst.n} > {max_atoms})")
    c = inst.mu * (y - inst.eta)
    a = inst.mu_plus - inst.mu_minus
    nz = a != 0
    lams = np.unique(np.concatenate([[0.0], -c[nz] / a[nz]]))
    dual = np.minimum(0.0, c[None, :] + lams[:, None] * a[None, :]).sum(axis=1)
    lam = float(lams[int(np.argmax(dual))])
    e = c + lam * a
    tol = 1e-12 * max(1.0, float(np.abs(c).max()), float(np.abs(lam * a).max()))
    g = (e < -tol).astype(float)
    zero = np.abs(e) <= tol
    g[zero & ~nz] = 1.0
    need = -float(a @ g)
    for sign in (1.0, -1.0):
        pool = zero & (sign * a > 0)
        cap = float(np.abs(a[pool]).sum())
        if sign * need > 0 and cap > 0:
            g[pool] = min(sign * need / cap, 1.0)
    value = float(c @ g)
    if abs(value - float(dual.max())) > 1e-9 * max(1.0, abs(value)) or abs(a @ g) > 1e-9:
        raise ClassifierError("LP oracle failed to recover a primal optimum")
    return value, g


def bayes_classifier(inst: FairInstance, y: float) -> np.ndarray:
    """Unconstrained rule ``1{eta >= y}``."""
    return (inst.eta >= y).astype(int)
