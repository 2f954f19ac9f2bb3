"""Within-group fairness audits: order preservation of regression rules,
envy between Bayes and fair classifiers, and group acceptance metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import ThresholdClassifier, bayes_classifier
from .instance import FairInstance
from .regression import _as_array

PAIR_CAP = 10_000
WITNESS_CAP = 50
MASS_TOL = 1e-12
BAYES_SUBSET_FAIR = "BAYES_SUBSET_FAIR"
FAIR_SUBSET_BAYES = "FAIR_SUBSET_BAYES"
NOT_ENVY_FREE = "NOT_ENVY_FREE"
OUTSIDE_TRICHOTOMY = "OUTSIDE_TRICHOTOMY"


@dataclass(frozen=True)
class OrderAuditReport:
    """Pairs in one group with ``eta(x) < eta(x')`` but ``f(x) >= f(x')``.

    ``violating_pair_mass`` sums ``P(x, s) P(x', s)`` over violating pairs;
    ``violating_pairs`` keeps at most 50 witnesses out of ``n_violations``.
    """

    violating_pairs: list
    n_violations: int
    violating_pair_mass: float
    preserves_order: bool
    overlap: bool
    sampled: bool = False
    metadata: dict = field(default_factory=dict)


def audit_order(inst: FairInstance, f, rng: np.random.Generator | None = None) -> OrderAuditReport:
    """Check strict order preservation of ``f`` within each group.

    Supports larger than 10^4 atoms per group are subsampled (flagged).
    """
    f = _as_array(inst, f)
    if not isinstance(f, np.ndarray):
        raise TypeError("order audit needs a deterministic rule")
    witnesses, count, mass, sampled = [], 0, 0.0, False
    for s, (p, mus) in enumerate(((inst.p1, inst.mu1), (inst.p2, inst.mu2)), start=1):
        idx = np.flatnonzero(mus > 0)
        if idx.size > PAIR_CAP:
            rng = rng or np.random.default_rng(0)
            idx = np.sort(rng.choice(idx, PAIR_CAP, replace=False))
            sampled = True
        e, fv, w = inst.eta[idx], f[idx], p * mus[idx]
        # process in row blocks to bound memory
        for lo in range(0, idx.size, 1024):
            sl = slice(lo, lo + 1024)
            bad = (e[sl, None] < e[None, :]) & (fv[sl, None] >= fv[None, :])
            if not bad.any():
                continue
            i, j = np.nonzero(bad)
            count += i.size
            mass += float(np.sum(w[sl][i] * w[j]))
            for a, b in zip(i[: WITNESS_CAP - len(witnesses)], j):
                ka, kb = idx[lo + a], idx[b]
                witnesses.append((inst.x_support[ka], inst.x_support[kb], s,
                                  float(inst.eta[ka]), float(inst.eta[kb]),
                                  float(f[ka]), float(f[kb])))
    meta = {"definition": "strict: eta(x) < eta(x') must give f(x) < f(x')"}
    if not inst.has_overlap():
        meta["warning"] = "some atom belongs to a single group; order results are not forced"
    return OrderAuditReport(witnesses, count, mass, count == 0, inst.has_overlap(), sampled, meta)


@dataclass(frozen=True)
class EnvyAuditReport:
    """Trichotomy between the Bayes and fair acceptance sets.

    ``masses[s]`` holds ``(P(bayes=1, fair=0 | S=s), P(bayes=0, fair=1 | S=s))``
    with the fair classifier's acceptance probabilities as fractional mass.
    """

    case: str
    witnesses: list
    masses: dict
    identical: bool
    overlap: bool


def audit_envy(inst: FairInstance, g: ThresholdClassifier | np.ndarray, y: float) -> EnvyAuditReport:
    """Compare the fair classifier with ``1{eta >= y}`` group by group.

    ``NOT_ENVY_FREE`` needs, inside one group, positive mass of atoms the
    Bayes rule accepts and the fair rule rejects and of atoms with the
    reverse outcome. Witness pairs ``(x, x', s)`` have ``x`` Bayes-accepted
    but fairly rejected and ``x'`` the opposite.
    """
    probs = g.probs if isinstance(g, ThresholdClassifier) else np.asarray(g, float)
    bayes = bayes_classifier(inst, y).astype(float)
    lost = bayes * (1.0 - probs)
    gained = (1.0 - bayes) * probs
    masses, witnesses, envious = {}, [], False
    for s, mus in ((1, inst.mu1), (2, inst.mu2)):
        a, b = float(mus @ lost), float(mus @ gained)
        masses[s] = (a, b)
        if a > MASS_TOL and b > MASS_TOL:
            envious = True
            xs = np.flatnonzero((mus > 0) & (lost * mus > MASS_TOL))
            xp = np.flatnonzero((mus > 0) & (gained * mus > MASS_TOL))
            for i in xs[:WITNESS_CAP]:
                for j in xp[: max(1, WITNESS_CAP // max(1, xs.size))]:
                    witnesses.append((inst.x_support[i], inst.x_support[j], s))
    lost_any = any(v[0] > MASS_TOL for v in masses.values())
    gained_any = any(v[1] > MASS_TOL for v in masses.values())
    if envious:
        case = NOT_ENVY_FREE
    elif not lost_any:
        case = BAYES_SUBSET_FAIR
    elif not gained_any:
        case = FAIR_SUBSET_BAYES
    else:
        # losses and gains sit in different groups; impossible under overlap
        case = OUTSIDE_TRICHOTOMY
    return EnvyAuditReport(case, witnesses[:WITNESS_CAP], masses,
                           not lost_any and not gained_any, inst.has_overlap())


def group_rates(inst: FairInstance, g) -> dict:
    """Acceptance rates per group with their difference and ratio."""
    g = np.asarray(g, float)
    r1, r2 = float(inst.mu1 @ g), float(inst.mu2 @ g)
    hi = max(r1, r2)
    return {"rate_1": r1, "rate_2": r2, "difference": abs(r1 - r2),
            "ratio": min(r1, r2) / hi if hi > 0 else 1.0}
