"""delta-closeness of boundary spectral data: eigenvalue clustering plus
per-cluster unitary alignment of boundary traces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralDataset

GAP_SLACK = 1e-6


class Infeasible(Exception):
    """The datasets are not delta-close; ``condition`` is ``"i"`` to ``"iv"``."""

    def __init__(self, condition: str, detail: str = ""):
        super().__init__(f"condition {condition} violated: {detail}")
        self.condition = condition
        self.detail = detail


@dataclass(frozen=True)
class ClusterPartition:
    delta: float
    intervals: list[tuple[float, float]]
    members1: list[list[int]]
    members2: list[list[int]]

    @property
    def sizes(self) -> list[int]:
        return [len(m) for m in self.members1]


@dataclass(frozen=True)
class AlignmentEntry:
    U: np.ndarray
    residual: float
    unique: bool


@dataclass(frozen=True)
class AlignmentResult:
    entries: list[AlignmentEntry] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max((e.residual for e in self.entries), default=0.0)


def _check_meshes(d1: SpectralDataset, d2: SpectralDataset):
    if not d1.mesh.same_nodes(d2.mesh):
        raise ValueError("datasets must share boundary mesh nodes and weights")


def cluster_eigenvalues(d1, d2, delta: float) -> ClusterPartition:
    """Finest balanced interval system for eigenvalue lists (or datasets).

    The union of both lists is scanned in increasing order; a cluster is
    closed as soon as it holds equally many values from each list and the
    next value is strictly larger.  Values below ``1/delta`` must be covered;
    the last cluster may run past ``1/delta`` (up to ``1/delta + delta``) to
    balance.  Every admissible interval system is a coarsening of this one,
    so it violates the width or matching conditions only when all systems do.

    Raises :class:`Infeasible` naming the violated condition.
    """
    if not (delta > 0):
        raise ValueError("delta must be positive")
    raw1 = np.asarray(getattr(d1, "eigenvalues", d1), dtype=float)
    raw2 = np.asarray(getattr(d2, "eigenvalues", d2), dtype=float)
    top = 1.0 / delta
    bound = top + delta
    if min(raw1.min(initial=np.inf), raw2.min(initial=np.inf)) <= -bound:
        raise Infeasible("ii", "eigenvalue at or below -1/delta - delta")
    tagged = sorted([(v, 0, j) for j, v in enumerate(raw1) if v < bound] + [(v, 1, j) for j, v in enumerate(raw2) if v < bound])
    cut = delta * (1 - GAP_SLACK)
    groups: list[list[tuple]] = []
    cur: list[tuple] = []
    balance = 0
    for i, item in enumerate(tagged):
        if not cur and item[0] >= top:
            break
        if cur and item[0] - cur[0][0] >= cut:
            cond = "i" if item[0] < top else "iii"
            n1 = sum(1 for t in cur if t[1] == 0)
            raise Infeasible(cond, f"values from {cur[0][0]:.6g} do not balance ({n1} vs {len(cur) - n1}) within width {delta:.6g}")
        cur.append(item)
        balance += 1 if item[1] == 0 else -1
        nxt = tagged[i + 1][0] if i + 1 < len(tagged) else np.inf
        if balance == 0 and nxt > item[0]:
            groups.append(cur)
            cur = []
    if cur:
        n1 = sum(1 for t in cur if t[1] == 0)
        raise Infeasible("iii", f"cluster from {cur[0][0]:.6g} holds {n1} vs {len(cur) - n1} eigenvalues")
    return _partition_from_groups(groups, tagged, delta, bound)


def _partition_from_groups(groups, tagged, delta, bound) -> ClusterPartition:
    vals = np.array([t[0] for t in tagged])
    intervals, m1, m2 = [], [], []
    for g in groups:
        lo, hi = g[0][0], g[-1][0]
        below = vals[vals < lo]
        above = vals[vals > hi]
        gap_l = lo - below[-1] if len(below) else np.inf
        gap_r = above[0] - hi if len(above) else np.inf
        t = 0.25 * min(gap_l, gap_r, delta - (hi - lo))
        intervals.append((max(lo - t, -bound), min(hi + t, bound)))
        m1.append(sorted(j for _, s, j in g if s == 0))
        m2.append(sorted(j for _, s, j in g if s == 1))
    return ClusterPartition(delta, intervals, m1, m2)


def merge_clusters(part: ClusterPartition, p: int, d1, d2) -> ClusterPartition | None:
    """Merge clusters ``p`` and ``p + 1`` if the union still fits in width ``delta``."""
    if p + 1 >= len(part.intervals):
        return None
    lam1 = np.asarray(getattr(d1, "eigenvalues", d1), dtype=float)
    lam2 = np.asarray(getattr(d2, "eigenvalues", d2), dtype=float)
    idx1 = part.members1[p] + part.members1[p + 1]
    idx2 = part.members2[p] + part.members2[p + 1]
    vals = np.r_[lam1[idx1], lam2[idx2]]
    if vals.max() - vals.min() >= part.delta * (1 - GAP_SLACK):
        return None
    a = part.intervals[p][0]
    b = part.intervals[p + 1][1]
    return ClusterPartition(
        part.delta,
        part.intervals[:p] + [(a, b)] + part.intervals[p + 2 :],
        part.members1[:p] + [sorted(idx1)] + part.members1[p + 2 :],
        part.members2[:p] + [sorted(idx2)] + part.members2[p + 2 :],
    )


def optimal_unitary_alignment(block1, block2, weights, complex_unitary: bool = False) -> AlignmentEntry:
    """Unitary ``U`` minimizing ``||U Psi1 - Psi2||`` in ``L^2(boundary)^n``.

    Rows of the blocks are traces; the weighted cross-Gram ``Psi2 W Psi1^*``
    is polar-decomposed through its SVD.
    """
    A = np.atleast_2d(np.asarray(block1))
    B = np.atleast_2d(np.asarray(block2))
    if A.shape != B.shape:
        raise ValueError("blocks must have equal shape")
    w = np.asarray(weights, dtype=float)
    if not complex_unitary:
        A, B = A.real, B.real
    cross = (B * w) @ A.conj().T
    P, s, Qh = np.linalg.svd(cross)
    U = P @ Qh
    resid = U @ A - B
    res = float(np.sqrt(np.sum(np.abs(resid) ** 2 * w)))
    tol = 1e-10 * max(s[0], 1e-300) if len(s) else 0.0
    unique = bool(len(s) == 0 or s[-1] > tol)
    return AlignmentEntry(U, res, unique)


def align_clusters(d1: SpectralDataset, d2: SpectralDataset, part: ClusterPartition, complex_unitary=False) -> AlignmentResult:
    w = d1.mesh.weights
    return AlignmentResult(
        [optimal_unitary_alignment(d1.traces[i1], d2.traces[i2], w, complex_unitary) for i1, i2 in zip(part.members1, part.members2)]
    )


def feasible_partition(d1, d2, delta: float, complex_unitary=False) -> tuple[ClusterPartition, AlignmentResult]:
    """Interval system passing all four closeness conditions, or :class:`Infeasible`.

    Starts from the finest balanced system; while some block's aligned
    residual exceeds ``delta`` it is merged with a neighbour (when the union
    still fits), keeping the merge with the smaller worst residual.
    """
    part = cluster_eigenvalues(d1, d2, delta)
    al = align_clusters(d1, d2, part, complex_unitary)
    while al.max_residual > delta:
        bad = next(p for p, e in enumerate(al.entries) if e.residual > delta)
        options = []
        for q in (bad - 1, bad):
            merged = merge_clusters(part, q, d1, d2) if q >= 0 else None
            if merged is not None:
                options.append((align_clusters(d1, d2, merged, complex_unitary), merged))
        if not options:
            raise Infeasible("iv", f"cluster {bad} aligned residual {al.entries[bad].residual:.6g} > delta={delta:.6g}")
        al, part = min(options, key=lambda o: o[0].max_residual)
    return part, al


def is_delta_close(d1: SpectralDataset, d2: SpectralDataset, delta: float, complex_unitary=False) -> bool:
    try:
        feasible_partition(d1, d2, delta, complex_unitary)
    except Infeasible:
        return False
    return True


def default_delta_hi(d1: SpectralDataset, d2: SpectralDataset) -> float:
    gaps = [float(np.max(np.diff(d.eigenvalues), initial=0.0)) for d in (d1, d2)]
    return 1.0 + max(gaps)


def spectral_distance(
    d1: SpectralDataset,
    d2: SpectralDataset,
    tol: float = 1e-4,
    delta_hi: float | None = None,
    complex_unitary: bool = False,
) -> float:
    """Smallest delta (to ``tol``) at which the datasets are delta-close.

    Bisection on the :func:`feasible_partition` predicate, so the value is an
    upper bound on the infimum over all interval systems.  Returns ``inf`` when
    the predicate already fails at ``delta_hi``.
    """
    _check_meshes(d1, d2)
    hi = default_delta_hi(d1, d2) if delta_hi is None else float(delta_hi)
    if not is_delta_close(d1, d2, hi, complex_unitary):
        return math.inf
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_delta_close(d1, d2, mid, complex_unitary):
            hi = mid
        else:
            lo = mid
    return hi


def residual_table(d1: SpectralDataset, d2: SpectralDataset, delta: float) -> list[dict]:
    part, al = feasible_partition(d1, d2, delta)
    return [
        {"cluster": p, "a": a, "b": b, "n": len(i1), "residual": e.residual, "unique": e.unique}
        for p, ((a, b), i1, e) in enumerate(zip(part.intervals, part.members1, al.entries))
    ]
