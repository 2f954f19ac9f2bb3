"""Fair-learning instances on a finite feature space.

A raw instance is a finite joint law of ``(x, s, y)``. Deriving it yields the
group priors, the Bayes function ``eta``, the signed density ``delta`` of the
scaled Jordan parts, the partition into plus / minus / equal atoms, and the
laws ``omega_plus`` and ``omega_minus`` of ``(eta, delta)`` under the two
Jordan parts. ``instantiate`` goes the other way, from a pair of such laws to
an instance that realizes them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .measure import DiscreteMeasure, MeasureError, jordan_decompose

RAW_TOL = 1e-9
PLUS, MINUS, EQ = "PLUS", "MINUS", "EQ"
AUTO = "AUTO"


class InstanceError(ValueError):
    pass


class MassBoundError(InstanceError):
    """The pair of Omega-measures cannot be realized by any instance."""


@dataclass(frozen=True)
class RawInstance:
    """Records ``(x, s, y, p)`` with ``s`` in {1, 2} and ``sum(p) == 1``."""

    records: tuple

    def __post_init__(self):
        recs = []
        for r in self.records:
            if len(r) != 4:
                raise InstanceError(f"record must be (x, s, y, p): {r!r}")
            x, s, y, p = r
            if s not in (1, 2):
                raise InstanceError(f"group must be 1 or 2, got {s!r}")
            y, p = float(y), float(p)
            if not (np.isfinite(y) and np.isfinite(p)) or p < 0:
                raise InstanceError(f"invalid record {r!r}")
            recs.append((x, int(s), y, p))
        total = sum(r[3] for r in recs)
        if abs(total - 1.0) > RAW_TOL:
            raise InstanceError(f"record weights sum to {total!r}, expected 1")
        object.__setattr__(self, "records", tuple(recs))

    def digest(self) -> str:
        payload = json.dumps([[str(x), s, y, p] for x, s, y, p in self.records])
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class OmegaMeasure:
    """Weighted atoms ``(h, d)``; ``index[k]`` maps support atom ``k`` of the
    owning instance to its row here (``-1`` when the atom has no mass)."""

    h: np.ndarray
    d: np.ndarray
    w: np.ndarray
    index: np.ndarray

    def __len__(self):
        return self.h.size

    def atoms(self) -> list[tuple[float, float, float]]:
        return list(zip(self.h.tolist(), self.d.tolist(), self.w.tolist()))


@dataclass(frozen=True)
class FairInstance:
    """Derived fields of a finite instance; arrays are aligned with ``x_support``.

    Attributes
    ----------
    eta, delta : ndarray
        Bayes function and signed density; ``delta > 0`` exactly on plus
        atoms, ``< 0`` on minus atoms and ``0`` elsewhere.
    mu, mu1, mu2, mu_plus, mu_minus : ndarray
        Weights of the marginal, group conditionals and scaled Jordan parts.
    omega_plus, omega_minus : OmegaMeasure
        Laws of ``(eta, delta)`` under ``mu_plus`` and ``mu_minus``.
    scale : float
        Multiplier applied to the d-coordinate at construction (1 for raw
        instances); slopes convert back by ``kappa_orig = scale * kappa``.
    """

    x_support: tuple
    p1: float
    p2: float
    mu: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    eta: np.ndarray
    delta: np.ndarray
    partition: np.ndarray
    m: float
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    omega_plus: OmegaMeasure
    omega_minus: OmegaMeasure
    y_binary: bool
    raw: RawInstance
    scale: float = 1.0
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.x_support)

    @property
    def plus(self) -> np.ndarray:
        return self.partition == PLUS

    @property
    def minus(self) -> np.ndarray:
        return self.partition == MINUS

    @property
    def eq(self) -> np.ndarray:
        return self.partition == EQ

    def measure(self, name: str) -> DiscreteMeasure:
        return DiscreteMeasure(self.x_support, getattr(self, name))

    def group_posterior(self) -> np.ndarray:
        """``P(S = 1 | X = x)`` on every support atom."""
        return self.p1 * self.mu1 / self.mu

    def has_overlap(self) -> bool:
        return bool(np.all((self.mu1 > 0) & (self.mu2 > 0)))

    def is_awareness(self) -> bool:
        """True when every atom belongs to one group only."""
        return bool(np.all((self.mu1 == 0) | (self.mu2 == 0)))

    def digest(self) -> str:
        return self.raw.digest()

    def to_kappa_orig(self, kappa):
        return self.scale * np.asarray(kappa)

    def balance(self) -> float:
        """``sum mu * delta``; zero up to rounding on every valid instance."""
        return float(self.mu @ self.delta)


def _omega(h, d, w, mask) -> OmegaMeasure:
    idx = np.flatnonzero(mask)
    keys = {}
    index = np.full(mask.size, -1, dtype=int)
    hs, ds, ws = [], [], []
    for k in idx:
        key = (float(h[k]), float(d[k]))
        if key not in keys:
            keys[key] = len(hs)
            hs.append(key[0])
            ds.append(key[1])
            ws.append(0.0)
        j = keys[key]
        ws[j] += float(w[k])
        index[k] = j
    return OmegaMeasure(np.array(hs), np.array(ds), np.array(ws), index)


def derive(raw: RawInstance, scale: float = 1.0, metadata: dict | None = None) -> FairInstance:
    """Compute every derived field of a raw instance exactly.

    Raises
    ------
    InstanceError
        If a group has zero mass or the two group conditionals coincide.
    """
    xs = tuple(dict.fromkeys(r[0] for r in raw.records))
    pos = {x: k for k, x in enumerate(xs)}
    n = len(xs)
    joint = np.zeros((2, n))
    ysum = np.zeros(n)
    for x, s, y, p in raw.records:
        joint[s - 1, pos[x]] += p
        ysum[pos[x]] += p * y
    p1, p2 = float(joint[0].sum()), float(joint[1].sum())
    if p1 <= 0 or p2 <= 0:
        raise InstanceError("both groups need positive mass")
    mu = joint.sum(axis=0)
    keep = mu > 0
    if not keep.all():
        xs = tuple(x for x, k in zip(xs, keep) if k)
        joint, ysum, mu = joint[:, keep], ysum[keep], mu[keep]
    eta = ysum / mu
    mu1, mu2 = joint[0] / p1, joint[1] / p2
    try:
        mp, mm, m = jordan_decompose(DiscreteMeasure(xs, mu1), DiscreteMeasure(xs, mu2))
    except MeasureError as exc:
        raise InstanceError(str(exc)) from None
    mu_plus, mu_minus = np.asarray(mp.weights), np.asarray(mm.weights)
    delta = np.where(mu_plus > 0, mu_plus / mu, np.where(mu_minus > 0, -mu_minus / mu, 0.0))
    partition = np.where(delta > 0, PLUS, np.where(delta < 0, MINUS, EQ))
    y_binary = all(r[2] in (0.0, 1.0) for r in raw.records)
    return FairInstance(
        x_support=xs, p1=p1, p2=p2, mu=mu, mu1=mu1, mu2=mu2, eta=eta, delta=delta,
        partition=partition, m=m, mu_plus=mu_plus, mu_minus=mu_minus,
        omega_plus=_omega(eta, delta, mu_plus, delta > 0),
        omega_minus=_omega(eta, delta, mu_minus, delta < 0),
        y_binary=y_binary, raw=raw, scale=float(scale), metadata=dict(metadata or {}),
    )


@dataclass(frozen=True)
class OmegaSpec:
    """A pair of laws on ``{(h, d) : d != 0}`` to be realized by an instance.

    ``d_scale`` multiplies every ``d``; ``AUTO`` picks the smallest multiplier
    for which the realized instance has no equal-density atoms.
    """

    mu_plus_atoms: tuple
    mu_minus_atoms: tuple
    d_scale: float | str = AUTO
    eq_eta: float = 0.0

    def arrays(self, side: str):
        atoms = self.mu_plus_atoms if side == "plus" else self.mu_minus_atoms
        a = np.asarray(atoms, dtype=float).reshape(-1, 3)
        return a[:, 0], a[:, 1], a[:, 2]

    def validate(self):
        for side, sign in (("plus", 1), ("minus", -1)):
            h, d, w = self.arrays(side)
            if h.size == 0:
                raise InstanceError(f"{side} side has no atoms")
            if np.any(np.sign(d) != sign):
                raise InstanceError(f"{side} atoms need d {'>' if sign > 0 else '<'} 0")
            if np.any(w < 0) or abs(w.sum() - 1.0) > RAW_TOL:
                raise InstanceError(f"{side} weights must be nonnegative and sum to 1")
            if not (np.all(np.isfinite(h)) and np.all(np.isfinite(d))):
                raise InstanceError(f"{side} atoms must be finite")
        if self.d_scale != AUTO and not (float(self.d_scale) > 0):
            raise InstanceError("d_scale must be positive or AUTO")


def mass_bound(spec: OmegaSpec, rho: float = 1.0) -> float:
    """``a_plus + a_minus = sum w / |rho d|`` over both sides."""
    total = 0.0
    for side in ("plus", "minus"):
        _, d, w = spec.arrays(side)
        total += float(np.sum(w / np.abs(rho * d)))
    return total


def instantiate(spec: OmegaSpec) -> FairInstance:
    """Realize a pair of Omega-measures as a finite instance.

    Each Omega atom becomes a support point with ``mu = w / |d|``; leftover
    mass goes to one equal-density atom ``"eq"``. Groups are equiprobable,
    ``mu1, mu2 = (1 +- m d / 2) mu`` with ``m = 1 / max |d|``, and ``Y = h``
    deterministically.

    Raises
    ------
    MassBoundError
        If ``sum w / |d|`` exceeds one after scaling.
    """
    spec.validate()
    rho = mass_bound(spec, 1.0) if spec.d_scale == AUTO else float(spec.d_scale)
    total = mass_bound(spec, rho)
    if total > 1.0 + RAW_TOL:
        raise MassBoundError(
            f"violates mass bound: sum of w/|d| over both sides is {total:.6g} > 1"
        )
    hp, dp, wp = spec.arrays("plus")
    hm, dm, wm = spec.arrays("minus")
    ids = [f"p{i}" for i in range(hp.size)] + [f"n{i}" for i in range(hm.size)]
    h = np.concatenate([hp, hm])
    d = rho * np.concatenate([dp, dm])
    mu = np.concatenate([wp, wm]) / np.abs(d)
    m_c = 1.0 / np.abs(d).max()
    recs = []
    for x, hx, dx, mx in zip(ids, h, d, mu):
        if mx <= 0:
            continue
        for s, sign in ((1, 1.0), (2, -1.0)):
            p = 0.5 * (1.0 + sign * m_c * dx / 2.0) * mx
            if p > 0:
                recs.append((x, s, float(hx), float(p)))
    rest = 1.0 - float(mu.sum())
    if rest > 1e-12:
        recs += [("eq", 1, spec.eq_eta, rest / 2), ("eq", 2, spec.eq_eta, rest / 2)]
    # absorb rounding so the records pass the unit-mass check exactly
    tot = sum(r[3] for r in recs)
    recs = [(x, s, y, p / tot) for x, s, y, p in recs]
    meta = {"d_scale": rho, "a_total": total, "m_constructor": float(m_c)}
    return derive(RawInstance(tuple(recs)), scale=rho, metadata=meta)


def segment_atoms(segments, n: int):
    """Discretize equal-weight segments ``[a, a + 1] x {d}`` into ``n``
    midpoint atoms each."""
    k = len(segments)
    out = []
    for a, d in segments:
        for i in range(n):
            out.append((a + (i + 0.5) / n, d, 1.0 / (k * n)))
    return tuple(out)


EXAMPLES = {
    1: {"plus": [(0.0, 1.0)], "minus": [(-1.0, -1.0)]},
    2: {"plus": [(0.0, 1.0), (-1.0, 0.5)], "minus": [(0.0, -1.0), (-6.0, -0.5)]},
}


def example_spec(which: int, n: int) -> OmegaSpec:
    if which not in EXAMPLES:
        raise InstanceError(f"unknown example {which!r}")
    if n < 2:
        raise InstanceError("need at least 2 atoms per segment")
    ex = EXAMPLES[which]
    return OmegaSpec(segment_atoms(ex["plus"], n), segment_atoms(ex["minus"], n), AUTO)


def gen_example(which: int, n_atoms_per_segment: int) -> FairInstance:
    """Built-in segment examples: 1 is nested, 2 is not."""
    inst = instantiate(example_spec(which, n_atoms_per_segment))
    inst.metadata.update({"example": which, "n_atoms_per_segment": n_atoms_per_segment})
    return inst


# random generators used by tests and the CLI

def random_awareness(rng: np.random.Generator, n: int = 200, p1: float | None = None,
                     binary: bool = False, kind: str = "quantile") -> FairInstance:
    """Disjoint group supports with ``n`` atoms each.

    ``kind="quantile"`` places equal-weight atoms at the quantile midpoints
    ``(i + 0.5) / n`` of a random two-component normal mixture, a fine
    discretization of a continuous law. ``kind="iid"`` draws the atoms
    independently with Dirichlet weights.
    """
    from scipy import stats

    p1 = float(rng.uniform(0.3, 0.7)) if p1 is None else p1
    recs = []
    for s, p in ((1, p1), (2, 1.0 - p1)):
        loc, sc = rng.normal(0, 1), rng.uniform(0.5, 2.0)
        if kind == "quantile":
            w = np.full(n, p / n)
            shift, frac = rng.normal(0, 1.5), rng.uniform(0.2, 0.8)
            grid = np.linspace(loc - 8 * sc - abs(shift), loc + 8 * sc + abs(shift), 4001)
            cdf_ = frac * stats.norm.cdf(grid, loc, sc) + (1 - frac) * stats.norm.cdf(grid, loc + shift, sc)
            e = np.interp((np.arange(n) + 0.5) / n, cdf_, grid)
        elif kind == "iid":
            w = rng.dirichlet(np.full(n, 5.0)) * p
            e = rng.normal(loc, sc, size=n)
        else:
            raise InstanceError(f"unknown awareness generator {kind!r}")
        if binary:
            e = 1.0 / (1.0 + np.exp(-e))
        for i in range(n):
            x = f"g{s}_{i}"
            if binary:
                recs += [(x, s, 1.0, w[i] * e[i]), (x, s, 0.0, w[i] * (1 - e[i]))]
            else:
                recs.append((x, s, float(e[i]), w[i]))
    return derive(RawInstance(tuple(recs)))


def random_overlap(rng: np.random.Generator, n: int = 20, binary: bool = False,
                   n_eq: int = 0) -> FairInstance:
    """Every atom carries both groups with posterior in (0.05, 0.95);
    ``n_eq`` extra atoms get identical group densities."""
    mu = rng.dirichlet(np.full(n + n_eq, 2.0))
    post = rng.uniform(0.05, 0.95, size=n + n_eq)
    # equal-density atoms need posterior equal to the realized prior
    post[n:] = mu[:n] @ post[:n] / (1.0 - mu[n:].sum())
    eta = rng.uniform(0, 1, size=n + n_eq) if binary else rng.normal(0, 1, size=n + n_eq)
    recs = []
    for i in range(n + n_eq):
        x = f"x{i}"
        for s, q in ((1, post[i]), (2, 1 - post[i])):
            p = mu[i] * q
            if binary:
                recs += [(x, s, 1.0, p * eta[i]), (x, s, 0.0, p * (1 - eta[i]))]
            else:
                recs.append((x, s, float(eta[i]), p))
    return derive(RawInstance(tuple(recs)))
