"""Box domains and uniform tensor-product collocation grids."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["Domain", "CollocationSet", "uniform_grid", "append_points", "write_points_csv"]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Domain:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper bounds must have the same non-zero length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("lower < upper must hold on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, lo: float, hi: float, n: int) -> "Domain":
        return cls((lo,) * n, (hi,) * n)

    @property
    def n(self) -> int:
        return len(self.lower)

    def clip(self, X):
        return np.clip(X, self.lower, self.upper)


@dataclass(frozen=True)
class CollocationSet:
    domain: Domain
    interior: np.ndarray
    boundary: np.ndarray
    spacing: tuple

    def __post_init__(self):
        n = self.domain.n
        object.__setattr__(self, "interior", _frozen(np.reshape(self.interior, (-1, n))))
        object.__setattr__(self, "boundary", _frozen(np.reshape(self.boundary, (-1, n))))

    @property
    def n(self) -> int:
        return self.domain.n

    def __len__(self):
        return len(self.interior)


def axis_nodes(lo: float, hi: float, dx: float) -> np.ndarray:
    ratio = (hi - lo) / dx
    k = int(round(ratio))
    if abs(ratio - k) > 1e-9:
        raise ValueError(f"spacing {dx} does not divide [{lo}, {hi}]")
    if k + 1 < 3:
        raise ValueError(f"spacing {dx} gives fewer than 3 nodes on [{lo}, {hi}]")
    return np.linspace(lo, hi, k + 1)


def uniform_grid(domain: Domain, dx) -> CollocationSet:
    """Inclusive-endpoint grid; nodes on the box faces form the boundary set."""
    dx = tuple(float(v) for v in np.broadcast_to(np.asarray(dx, dtype=float), (domain.n,)))
    axes = [axis_nodes(lo, hi, h) for lo, hi, h in zip(domain.lower, domain.upper, dx)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    idx = np.meshgrid(*[np.arange(len(a)) for a in axes], indexing="ij")
    on_face = np.zeros(pts.shape[0], dtype=bool)
    for k, a in enumerate(axes):
        i = idx[k].ravel()
        on_face |= (i == 0) | (i == len(a) - 1)
    return CollocationSet(domain, pts[~on_face], pts[on_face], dx)


def append_points(cs: CollocationSet, new_points) -> CollocationSet:
    """Add ``new_points`` to the interior, clipped to the box, dropping exact duplicates.

    Points that land on a box face after clipping are not added to the interior.
    """
    new = np.asarray(new_points, dtype=float)
    if new.size == 0:
        return cs
    if new.ndim != 2 or new.shape[1] != cs.n:
        raise ValueError(f"new points must have shape (m, {cs.n})")
    new = cs.domain.clip(new)
    seen = {tuple(p) for p in cs.interior.tolist()}
    keep = []
    lo, hi = np.array(cs.domain.lower), np.array(cs.domain.upper)
    for p in new:
        if np.any(p == lo) or np.any(p == hi):
            continue
        key = tuple(p.tolist())
        if key in seen:
            continue
        seen.add(key)
        keep.append(p)
    if not keep:
        return cs
    interior = np.vstack([cs.interior, np.array(keep)])
    return CollocationSet(cs.domain, interior, cs.boundary, cs.spacing)


def write_points_csv(path, cs: CollocationSet):
    """One row per point: x_1..x_n and a tag in {interior, boundary}."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{k + 1}" for k in range(cs.n)] + ["tag"])
        for tag, pts in (("interior", cs.interior), ("boundary", cs.boundary)):
            for p in pts:
                w.writerow([format(v, ".17g") for v in p] + [tag])
