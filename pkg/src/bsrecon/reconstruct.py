"""Finite metric space from a distance net.

Edge estimates come from three sources:

* aligned pairs, where the sup-norm difference of the two distance functions
  is itself the distance;
* Euclidean comparison triangles built from aligned edges;
* a Pythagorean formula for pairs close to the boundary.

Shortest paths over the edge graph complete the metric.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components, csgraph_from_dense, shortest_path

from .distnet import DistanceFunction, DistanceNet
from .gh import FiniteMetricSpace

METHOD_PRIORITY = {"aligned": 0, "near_boundary": 1, "triangle": 2}


class DegenerateTriangle(ValueError):
    """Side lengths violate the triangle inequality."""


class DisconnectedNet(ValueError):
    def __init__(self, components: int):
        super().__init__(f"edge graph has {components} components; sigma or eta too aggressive")
        self.components = components


class TooDeep(ValueError):
    """Point is farther than ``eta_near`` from the boundary."""


@dataclass(frozen=True)
class NetPoint:
    r: DistanceFunction
    id: int

    @property
    def values(self) -> np.ndarray:
        return self.r.values


@dataclass(frozen=True)
class EdgeEstimate:
    i: int
    j: int
    value: float
    method: str
    quality: float

    def __post_init__(self):
        if not (self.value >= 0):
            raise ValueError("edge length must be nonnegative")
        if self.method not in METHOD_PRIORITY:
            raise ValueError(f"unknown method {self.method!r}")
        if self.i > self.j:
            i, j = self.j, self.i
            object.__setattr__(self, "i", i)
            object.__setattr__(self, "j", j)


@dataclass(frozen=True)
class ReconstructConfig:
    rho_factor: float = 3.0  # triangle search radius in units of eta
    near_factor: float = 3.0  # near-boundary depth in units of eta
    sign_tol_factor: float = 1.0  # tolerance of the alignment sign/slope tests
    collinear_tol_factor: float = 1.0
    thin_factor: float = 2.0  # keep a 2 eta-separated subset of the net (0 keeps all)
    max_triangle_pairs: int = 20000


@dataclass
class Reconstruction:
    space: FiniteMetricSpace
    points: list[NetPoint]
    audit: list[EdgeEstimate] = field(default_factory=list)

    def method_counts(self) -> dict[str, int]:
        out = {m: 0 for m in METHOD_PRIORITY}
        for e in self.audit:
            out[e.method] += 1
        return out


def _vals(a) -> np.ndarray:
    return np.asarray(getattr(a, "values", a), dtype=float)


def sup_norm_distance(a, b) -> float:
    va, vb = _vals(a), _vals(b)
    if va.shape != vb.shape:
        raise ValueError("points sampled on different partitions")
    return float(np.max(np.abs(va - vb), initial=0.0))


def part_adjacency(partition: dict | None, L: int, mesh_labels=None, closed_components=None) -> list[list[int]]:
    """Neighbouring parts along the boundary, from per-node labels in arc order."""
    nbrs: list[set] = [set() for _ in range(L)]
    if mesh_labels is None:
        return [[] for _ in range(L)]
    for labels, closed in zip(mesh_labels, closed_components):
        seq = [l for l in labels if l >= 0]
        pairs = list(zip(seq[:-1], seq[1:]))
        if closed and len(seq) > 1:
            pairs.append((seq[-1], seq[0]))
        for a, b in pairs:
            if a != b:
                nbrs[a].add(b)
                nbrs[b].add(a)
    return [sorted(s) for s in nbrs]


def adjacency_from_partition(p) -> list[list[int]]:
    mesh = p.mesh
    lab = p.labels
    seqs, closed = [], []
    for c in np.unique(mesh.component_id):
        idx = np.flatnonzero(mesh.component_id == c)
        idx = idx[np.argsort(mesh.arc[idx], kind="stable")]
        seqs.append(lab[idx].tolist())
        closed.append(bool(mesh.closed))
    return part_adjacency(None, p.L, seqs, closed)


def _aligned_mask(V: np.ndarray, nbrs: list[list[int]], tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized alignment test for all pairs; returns ``(mask, sup)``."""
    S = V[:, None, :] - V[None, :, :]
    A = np.abs(S)
    sup = A.max(-1)
    n, L = V.shape
    ok = np.zeros((n, n), dtype=bool)
    for l in range(L):
        attains = A[:, :, l] >= sup - 1e-9
        cond = attains.copy()
        sgn = np.sign(S[:, :, l])
        for m in nbrs[l]:
            cond &= S[:, :, m] * sgn >= -tol
            # both distance functions sit near their minimum around part l
            near_min = V[:, l] <= V[:, m] + tol
            cond &= near_min[:, None] & near_min[None, :]
        ok |= cond
    return ok, sup


def aligned_pair_distance(a, b, nbrs: list[list[int]], tol: float) -> float | None:
    """``||r_a - r_b||_inf`` when the sup is attained where both functions
    vary consistently (no sign change of the difference on neighbouring parts
    and both near their minimum); ``None`` otherwise."""
    V = np.vstack([_vals(a), _vals(b)])
    if V.shape[1] != len(nbrs):
        raise ValueError("adjacency does not match the number of parts")
    ok, sup = _aligned_mask(V, nbrs, tol)
    return float(sup[0, 1]) if ok[0, 1] else None


def triangle_distance(d_x1y1: float, d_x2y2: float, d_y1y2: float, d_y1y3: float, d_y2y3: float) -> float:
    """Distance of ``x1`` on side ``[y3, y1]`` and ``x2`` on side ``[y3, y2]``
    in the Euclidean comparison triangle.

    ``d_xiyi`` is the offset of ``x_i`` from ``y_i`` along its side.
    """
    a, b, c = float(d_y1y3), float(d_y2y3), float(d_y1y2)
    if min(a, b, c) < 0 or a > b + c + 1e-9 or b > a + c + 1e-9 or c > a + b + 1e-9:
        raise DegenerateTriangle(f"sides {a:.6g}, {b:.6g}, {c:.6g}")
    if not (-1e-9 <= d_x1y1 <= a + 1e-9 and -1e-9 <= d_x2y2 <= b + 1e-9):
        raise ValueError("offsets must lie within their sides")
    # y3 at origin, y1 on the x axis, y2 by the law of cosines
    cos = 1.0 if a == 0 or b == 0 else float(np.clip((a * a + b * b - c * c) / (2 * a * b), -1.0, 1.0))
    y1 = np.array([a, 0.0])
    y2 = b * np.array([cos, math.sqrt(max(1 - cos * cos, 0.0))])
    t1 = np.clip(a - d_x1y1, 0.0, a)
    t2 = np.clip(b - d_x2y2, 0.0, b)
    x1 = y1 * (t1 / a) if a > 0 else y1
    x2 = y2 * (t2 / b) if b > 0 else y2
    return float(np.linalg.norm(x1 - x2))


def near_boundary_distance(a, b, part_dist: np.ndarray, eta_near: float) -> float | None:
    """``sqrt(d_bdry(z1, z2)^2 + (r1(z1) - r2(z2))^2)`` with ``z_i`` the nearest part.

    Returns ``None`` when the two footpoints lie on different boundary
    components (no finite boundary distance).
    """
    va, vb = _vals(a), _vals(b)
    za, zb = int(np.argmin(va)), int(np.argmin(vb))
    if va[za] > eta_near or vb[zb] > eta_near:
        raise TooDeep(f"depths {va[za]:.4g}, {vb[zb]:.4g} exceed eta_near={eta_near:.4g}")
    db = float(part_dist[za, zb])
    if not math.isfinite(db):
        return None
    return float(math.hypot(db, va[za] - vb[zb]))


def complete_metric(n: int, edges: list[EdgeEstimate], labels=()) -> FiniteMetricSpace:
    """All-pairs shortest paths over the symmetrized edge graph."""
    if n == 1:
        return FiniteMetricSpace(np.zeros((1, 1)), labels)
    W = np.full((n, n), np.inf)
    best: dict[tuple[int, int], EdgeEstimate] = {}
    for e in edges:
        if e.i == e.j:
            continue
        key = (e.i, e.j)
        cur = best.get(key)
        if cur is None or (e.value, METHOD_PRIORITY[e.method]) < (cur.value, METHOD_PRIORITY[cur.method]):
            best[key] = e
    for (i, j), e in best.items():
        W[i, j] = W[j, i] = e.value
    graph = csgraph_from_dense(W, null_value=np.inf)
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp > 1:
        raise DisconnectedNet(ncomp)
    D = shortest_path(graph, method="D", directed=False)
    D = np.minimum(D, D.T)
    np.fill_diagonal(D, 0.0)
    return FiniteMetricSpace(D, labels)


def thin_net(values: np.ndarray, radius: float, priority=None) -> np.ndarray:
    """Indices of a greedy ``radius``-separated subset (sup norm).

    Candidates are visited by decreasing ``priority`` (input order on ties);
    the result is sorted.
    """
    order = np.arange(len(values)) if priority is None else np.argsort(-np.asarray(priority, dtype=float), kind="stable")
    keep: list[int] = []
    tol = 1e-9 * max(radius, 1.0)
    for i in order:
        if not keep or np.max(np.abs(values[keep] - values[i]), axis=1).min() >= radius - tol:
            keep.append(int(i))
    return np.array(sorted(keep), dtype=int)


def _triangle_edges(V, known, sup, cand_pairs, rho, col_tol, eta):
    n = len(V)
    out = []
    finite = np.isfinite(known)
    near = sup <= rho
    for i, j in cand_pairs:
        ks = np.flatnonzero(finite[i] & finite[j] & near[i] & near[j])
        best = None
        for k in ks:
            if k in (i, j):
                continue
            # y1 beyond x1 on a geodesic from y3 = k (y1 = x1 allowed)
            A = np.flatnonzero(finite[i] & finite[k] & near[i])
            A = A[np.abs(known[k, i] + known[i, A] - known[k, A]) <= col_tol]
            A = np.r_[i, A[A != i]]
            B = np.flatnonzero(finite[j] & finite[k] & near[j])
            B = B[np.abs(known[k, j] + known[j, B] - known[k, B]) <= col_tol]
            B = np.r_[j, B[B != j]]
            sub = finite[np.ix_(A, B)]
            sub[0, 0] = False
            if not sub.any():
                continue
            ia, ib = np.nonzero(sub)
            side = np.maximum(np.maximum(known[k, A[ia]], known[k, B[ib]]), known[A[ia], B[ib]])
            t = int(np.argmin(side))
            a, b = A[ia[t]], B[ib[t]]
            if best is None or side[t] < best[0]:
                best = (side[t], k, a, b)
        if best is None:
            continue
        s, k, a, b = best
        dia = 0.0 if a == i else known[i, a]
        djb = 0.0 if b == j else known[j, b]
        try:
            val = triangle_distance(dia, djb, known[a, b], known[a, k], known[b, k])
        except (DegenerateTriangle, ValueError):
            continue
        out.append(EdgeEstimate(int(i), int(j), val, "triangle", float(s * s)))
    return out


def reconstruct(net: DistanceNet, p, config: ReconstructConfig | None = None) -> Reconstruction:
    """``(Y, d)`` from a distance net on partition ``p``, with a per-edge audit."""
    cfg = config or ReconstructConfig()
    if len(net) == 0:
        raise ValueError("net is empty")
    eta = net.eta
    V_all = net.values()
    keep = thin_net(V_all, cfg.thin_factor * eta, net.volumes or None) if cfg.thin_factor > 0 else np.arange(len(net))
    V = V_all[keep]
    points = [NetPoint(net.members[k], int(i)) for i, k in enumerate(keep)]
    labels = tuple(m.r.beta.beta for m in points)
    n = len(points)
    if n == 1:
        return Reconstruction(FiniteMetricSpace(np.zeros((1, 1)), labels), points, [])
    nbrs = adjacency_from_partition(p)
    tol = cfg.sign_tol_factor * eta
    ok, sup = _aligned_mask(V, nbrs, tol)
    edges: list[EdgeEstimate] = []
    iu, ju = np.nonzero(np.triu(ok, 1))
    known = np.full((n, n), np.inf)
    np.fill_diagonal(known, 0.0)
    for i, j in zip(iu, ju):
        edges.append(EdgeEstimate(int(i), int(j), float(sup[i, j]), "aligned", 2 * eta))
        known[i, j] = known[j, i] = sup[i, j]
    # near-boundary pairs; the formula needs parts finer than eta
    fine = max(p.widths, default=0.0) < eta
    if fine:
        eta_near = cfg.near_factor * eta
        part_dist = p.part_distances()
        depth = V.min(1)
        shallow = np.flatnonzero(depth <= eta_near)
        for x, i in enumerate(shallow):
            for j in shallow[x + 1 :]:
                if ok[i, j]:
                    continue
                val = near_boundary_distance(V[i], V[j], part_dist, eta_near)
                if val is not None:
                    edges.append(EdgeEstimate(int(i), int(j), val, "near_boundary", eta * val + val * val))
    # comparison triangles for the remaining close pairs
    rho = cfg.rho_factor * eta
    have = ok.copy()
    for e in edges:
        have[e.i, e.j] = have[e.j, e.i] = True
    ci, cj = np.nonzero(np.triu(~have & (sup <= rho), 1))
    pairs = list(zip(ci, cj))[: cfg.max_triangle_pairs]
    edges += _triangle_edges(V, known, sup, pairs, rho, cfg.collinear_tol_factor * eta, eta)
    space = complete_metric(n, edges, labels)
    return Reconstruction(space, points, edges)


def export_reconstruction(rec: Reconstruction, prefix) -> dict[str, str]:
    """Write ``<prefix>_dist.csv``, ``<prefix>_labels.json`` and ``<prefix>_audit.csv``."""
    prefix = str(prefix)
    paths = {"dist": prefix + "_dist.csv", "labels": prefix + "_labels.json", "audit": prefix + "_audit.csv"}
    np.savetxt(paths["dist"], rec.space.dist, delimiter=",", fmt="%.17g")
    Path(paths["labels"]).write_text(json.dumps({str(i): list(lab) for i, lab in enumerate(rec.space.labels)}))
    with open(paths["audit"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "method", "value", "quality"])
        for e in rec.audit:
            w.writerow([e.i, e.j, e.method, repr(e.value), repr(e.quality)])
    return paths
