"""Discrete measures: weighted atoms on opaque point sets and on the real line."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping

import numpy as np

PROB_TOL = 1e-9
# atoms whose signed difference is below this are treated as balanced
JORDAN_ATOL = 1e-14


class MeasureError(ValueError):
    pass


def _merge(pairs: Iterable[tuple[Hashable, float]]) -> tuple[tuple, np.ndarray]:
    acc: dict = {}
    for key, w in pairs:
        w = float(w)
        if not np.isfinite(w) or w < 0:
            raise MeasureError(f"invalid weight {w!r} for atom {key!r}")
        acc[key] = acc.get(key, 0.0) + w
    return tuple(acc), np.fromiter(acc.values(), dtype=float, count=len(acc))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative weights on a finite set of opaque point ids.

    Duplicate ids are merged by summing their weights. Build with
    :meth:`from_pairs` or :meth:`probability`.
    """

    ids: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if len(self.ids) != len(w):
            raise MeasureError("ids and weights differ in length")

    @classmethod
    def from_pairs(cls, pairs) -> "DiscreteMeasure":
        if isinstance(pairs, Mapping):
            pairs = pairs.items()
        ids, w = _merge(pairs)
        return cls(ids, w)

    @classmethod
    def probability(cls, pairs) -> "DiscreteMeasure":
        """Like :meth:`from_pairs`, but renormalizes a total within 1e-9 of one
        and rejects anything further off."""
        m = cls.from_pairs(pairs)
        total = m.total_mass
        if abs(total - 1.0) > PROB_TOL:
            raise MeasureError(f"probability measure has total mass {total!r}")
        return cls(m.ids, m.weights / total)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, key) -> float:
        return self.as_dict().get(key, 0.0)

    def as_dict(self) -> dict:
        return dict(zip(self.ids, self.weights.tolist()))

    def support(self) -> tuple:
        return tuple(k for k, w in zip(self.ids, self.weights) if w > 0)


@dataclass(frozen=True)
class RealMeasure1D:
    """Atoms on the real line, strictly ascending after merging equal values."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.shape != w.shape or v.ndim != 1:
            raise MeasureError("values and weights must be 1-d arrays of equal length")
        if np.any(w < 0) or not np.all(np.isfinite(v)):
            raise MeasureError("weights must be nonnegative and values finite")
        if v.size and np.any(np.diff(v) <= 0):
            v, w = _merge_sorted(v, w)
        v.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, values, weights) -> "RealMeasure1D":
        return cls(np.asarray(values, float), np.asarray(weights, float))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return self.values.size

    def as_pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.weights.tolist()))

    def mean(self) -> float:
        return float(self.values @ self.weights / self.weights.sum())

    def scaled(self, lam: float) -> "RealMeasure1D":
        return RealMeasure1D(self.values * lam, self.weights)


def _merge_sorted(v: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    uniq, start = np.unique(v, return_index=True)
    return uniq.copy(), np.add.reduceat(w, start) if v.size else w.copy()


def pushforward(m: DiscreteMeasure, f: Mapping) -> RealMeasure1D:
    """Law of ``f(X)`` for ``X ~ m``."""
    try:
        vals = np.array([float(f[k]) for k in m.ids])
    except KeyError as exc:
        raise MeasureError(f"undefined map at atom {exc.args[0]!r}") from None
    return RealMeasure1D(vals, m.weights.copy())


def jordan_decompose(mu1: DiscreteMeasure, mu2: DiscreteMeasure, atol: float = JORDAN_ATOL):
    """Scaled Jordan decomposition of ``mu1 - mu2``.

    Returns ``(mu_plus, mu_minus, m)`` where ``m`` is the common mass of the
    positive and negative parts and ``mu_plus``, ``mu_minus`` are those parts
    rescaled to probability measures. Both outputs live on the union of the
    input ids; their supports are disjoint.
    """
    ids = list(dict.fromkeys(mu1.ids + mu2.ids))
    d1, d2 = mu1.as_dict(), mu2.as_dict()
    diff = np.array([d1.get(k, 0.0) - d2.get(k, 0.0) for k in ids])
    diff[np.abs(diff) <= atol] = 0.0
    pos = np.maximum(diff, 0.0)
    neg = np.maximum(-diff, 0.0)
    m = float(pos.sum())
    if m <= 0.0:
        raise MeasureError("measures coincide; Bayes function is already fair")
    ids = tuple(ids)
    return DiscreteMeasure(ids, pos / m), DiscreteMeasure(ids, neg / m), m


def cdf(nu: RealMeasure1D, t) -> float | np.ndarray:
    """Right-continuous c.d.f. ``nu((-inf, t])``; vectorized over ``t``."""
    c = np.cumsum(nu.weights)
    idx = np.searchsorted(nu.values, t, side="right")
    out = np.where(idx > 0, c[np.maximum(idx - 1, 0)], 0.0)
    return float(out) if np.ndim(out) == 0 else out


def quantile(nu: RealMeasure1D, q) -> float | np.ndarray:
    """Generalized inverse ``inf{t : cdf(t) >= q}``.

    ``q = 0`` maps to the smallest atom.
    """
    qa = np.asarray(q, dtype=float)
    if np.any((qa < 0) | (qa > 1)) or np.any(np.isnan(qa)):
        raise MeasureError("quantile level outside [0, 1]")
    c = np.cumsum(nu.weights) / nu.weights.sum()
    # guard the top level against cumulative rounding
    c[-1] = 1.0
    idx = np.searchsorted(c, qa - 1e-15, side="left")
    idx = np.minimum(idx, len(c) - 1)
    out = nu.values[idx]
    return float(out) if np.ndim(out) == 0 else out


def wasserstein1(a: RealMeasure1D, b: RealMeasure1D) -> float:
    """W1 distance between two 1-d measures of equal mass, via c.d.f. areas."""
    pts = np.union1d(a.values, b.values)
    if pts.size < 2:
        return 0.0
    fa = cdf(a, pts[:-1]) / a.total_mass
    fb = cdf(b, pts[:-1]) / b.total_mass
    return float(np.sum(np.abs(fa - fb) * np.diff(pts)))


def kolmogorov(a: RealMeasure1D, b: RealMeasure1D) -> float:
    """Sup-distance between the c.d.f.s of ``a`` and ``b``."""
    pts = np.union1d(a.values, b.values)
    if pts.size == 0:
        return 0.0
    return float(np.max(np.abs(cdf(a, pts) / a.total_mass - cdf(b, pts) / b.total_mass)))
