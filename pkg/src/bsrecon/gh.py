"""Gromov-Hausdorff and sup-norm Hausdorff distances for finite data.

``d_GH(X, Y) = 1/2 min_R dis(R)`` over correspondences ``R``.  Every
correspondence contains the union of the graphs of some ``f: X -> Y`` and
``g: Y -> X``, and that union is itself a correspondence, so searching over
map pairs loses nothing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

EXACT_MAX_POINTS = 6
TRIANGLE_TOL = 1e-9


class SizeLimit(ValueError):
    """Input too large for exhaustive correspondence search."""


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    dist: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        d = np.array(self.dist, dtype=float, copy=True)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.all(np.isfinite(d)):
            raise ValueError("distances must be finite")
        if np.any(np.diag(d) != 0):
            raise ValueError("diagonal must be zero")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix must be exactly symmetric")
        if np.any(d < 0):
            raise ValueError("distances must be nonnegative")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        labels = tuple(self.labels) if len(self.labels) else tuple(range(len(d)))
        if len(labels) != len(d):
            raise ValueError("one label per point required")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.dist)

    @property
    def diameter(self) -> float:
        return float(self.dist.max(initial=0.0))

    def triangle_violation(self) -> float:
        """Largest ``d(i, k) - d(i, j) - d(j, k)``; ``<= 0`` for a metric."""
        d = self.dist
        worst = 0.0 if self.n else 0.0
        for j in range(self.n):
            worst = max(worst, float(np.max(d - d[:, j : j + 1] - d[j : j + 1, :])))
        return worst

    def check_metric(self, tol: float = TRIANGLE_TOL) -> None:
        v = self.triangle_violation()
        if v > tol:
            raise ValueError(f"triangle inequality violated by {v:.3g}")

    @classmethod
    def from_points(cls, points, metric=None, labels=()) -> "FiniteMetricSpace":
        pts = np.asarray(points, dtype=float)
        pts = pts.reshape(len(pts), -1)
        d = cdist(pts, pts) if metric is None else np.asarray(metric(pts), dtype=float)
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        return cls(d, labels)


def save_csv(space: FiniteMetricSpace, path, labels_path=None) -> None:
    np.savetxt(path, space.dist, delimiter=",", fmt="%.17g")
    if labels_path is not None:
        Path(labels_path).write_text(json.dumps({str(i): lab for i, lab in enumerate(space.labels)}, default=str))


def load_csv(path) -> FiniteMetricSpace:
    d = np.loadtxt(path, delimiter=",", ndmin=2)
    if d.size == 1:
        d = d.reshape(1, 1)
    return FiniteMetricSpace(d)


def _as_matrix(X) -> np.ndarray:
    return X.dist if isinstance(X, FiniteMetricSpace) else np.asarray(X, dtype=float)


# --------------------------------------------------------------------------
# exact


def _feasible(DX, DY, c) -> bool:
    """Is there a pair of maps whose joint graph has distortion ``<= c``?"""
    nx, ny = len(DX), len(DY)
    slots = [(0, i) for i in range(nx)] + [(1, j) for j in range(ny)]
    pairs: list[tuple[int, int]] = []

    def ok(a, b):
        for a2, b2 in pairs:
            if abs(DX[a, a2] - DY[b, b2]) > c:
                return False
        return True

    def rec(k):
        if k == len(slots):
            return True
        side, i = slots[k]
        cands = [(i, j) for j in range(ny)] if side == 0 else [(a, i) for a in range(nx)]
        for a, b in cands:
            if (a, b) in pairs:
                if rec(k + 1):
                    return True
                continue
            if ok(a, b):
                pairs.append((a, b))
                if rec(k + 1):
                    return True
                pairs.pop()
        return False

    return rec(0)


def gh_distance_exact(X, Y, max_points: int = EXACT_MAX_POINTS) -> float:
    """Exact ``d_GH`` by bisection over candidate distortions with a
    backtracking search for a compatible pair of maps."""
    DX, DY = _as_matrix(X), _as_matrix(Y)
    if max(len(DX), len(DY)) > max_points:
        raise SizeLimit(f"exact search limited to {max_points} points per space (got {len(DX)}, {len(DY)})")
    if len(DX) == 0 or len(DY) == 0:
        raise ValueError("spaces must be nonempty")
    cand = np.unique(np.abs(DX.reshape(-1, 1) - DY.reshape(1, -1)))
    lo, hi = 0, len(cand) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible(DX, DY, cand[mid] + 1e-12):
            hi = mid
        else:
            lo = mid + 1
    return 0.5 * float(cand[lo])


# --------------------------------------------------------------------------
# bounds


def distortion(DX, DY, pairs) -> float:
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    return float(np.max(np.abs(DX[np.ix_(a, a)] - DY[np.ix_(b, b)]), initial=0.0))


def lower_bound(X, Y) -> float:
    """``max`` of the diameter bound and the row distance-set bound.

    If ``(x, y)`` is in a correspondence of distortion ``2r``, every distance
    from ``x`` is within ``2r`` of some distance from ``y`` and vice versa, so
    the Hausdorff distance between the two value sets is at most ``2r``.
    """
    DX, DY = _as_matrix(X), _as_matrix(Y)
    diam = 0.5 * abs(DX.max(initial=0) - DY.max(initial=0))
    rx = [np.unique(r) for r in DX]
    ry = [np.unique(r) for r in DY]
    H = np.empty((len(rx), len(ry)))
    for i, a in enumerate(rx):
        for j, b in enumerate(ry):
            H[i, j] = max(np.abs(a[:, None] - b[None, :]).min(1).max(), np.abs(a[:, None] - b[None, :]).min(0).max())
    rows = max(H.min(1).max(), H.min(0).max())
    return float(max(diam, 0.5 * rows))


def _greedy(DX, DY, rng):
    nx, ny = len(DX), len(DY)
    pa: list[int] = []
    pb: list[int] = []
    order = [(0, i) for i in rng.permutation(nx)] + [(1, j) for j in rng.permutation(ny)]
    rng.shuffle(order)
    for side, i in order:
        if side == 0:
            if pa:
                cost = np.abs(DX[i, pa][None, :] - DY[:, pb]).max(1)
                best = np.flatnonzero(cost <= cost.min() + 1e-15)
                j = int(rng.choice(best))
            else:
                j = int(rng.integers(ny))
            pa.append(i)
            pb.append(j)
        else:
            if pa:
                cost = np.abs(DX[:, pa] - DY[i, pb][None, :]).max(1)
                best = np.flatnonzero(cost <= cost.min() + 1e-15)
                a = int(rng.choice(best))
            else:
                a = int(rng.integers(nx))
            pa.append(a)
            pb.append(i)
    return np.array(pa), np.array(pb), np.array([s for s, _ in order])


def _local_search(DX, DY, pa, pb, side, max_moves=2000):
    """Move endpoints of worst pairs while ``(max distortion, #pairs at max)``
    decreases lexicographically."""
    E = np.abs(DX[np.ix_(pa, pa)] - DY[np.ix_(pb, pb)])
    for _ in range(max_moves):
        cur = E.max(initial=0.0)
        if cur == 0:
            break
        worst = np.unique(np.nonzero(E >= cur - 1e-12)[0])
        moved = False
        for p in worst[:16]:
            mask = np.ones(len(pa), bool)
            mask[p] = False
            if side[p] == 0:
                rows = np.abs(DX[pa[p], pa[mask]][None, :] - DY[:, pb[mask]]).max(1, initial=0.0)
            else:
                rows = np.abs(DX[:, pa[mask]] - DY[pb[p], pb[mask]][None, :]).max(1, initial=0.0)
            k = int(np.argmin(rows))
            if rows[k] < cur - 1e-12:
                if side[p] == 0:
                    pb[p] = k
                else:
                    pa[p] = k
                E[p, :] = E[:, p] = np.abs(DX[pa[p], pa] - DY[pb[p], pb])
                moved = True
                break
        if not moved:
            break
    return E.max(initial=0.0)


def gh_distance_bounds(X, Y, starts: int = 64, seed: int = 0) -> tuple[float, float]:
    """``(lower, upper)`` with ``lower <= d_GH <= upper``.

    The upper bound is the best of ``starts`` seeded greedy correspondences,
    each refined by moving the endpoint of a worst pair.
    """
    DX, DY = _as_matrix(X), _as_matrix(Y)
    if len(DX) == 0 or len(DY) == 0:
        raise ValueError("spaces must be nonempty")
    lo = lower_bound(DX, DY)
    best = np.inf
    for s in range(starts):
        rng = np.random.default_rng([seed, s])
        pa, pb, side = _greedy(DX, DY, rng)
        best = min(best, _local_search(DX, DY, pa, pb, side))
        if best <= 2 * lo:
            break
    return lo, max(lo, 0.5 * float(best))


# --------------------------------------------------------------------------
# sup-norm Hausdorff


def hausdorff_sup_norm(A, B) -> float:
    """Two-sided Hausdorff distance between two sets of sampled functions."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError("function sets sampled on different nodes")
    if len(A) == 0 or len(B) == 0:
        return np.inf
    C = cdist(A, B, "chebyshev")
    return float(max(C.min(1).max(), C.min(0).max()))
