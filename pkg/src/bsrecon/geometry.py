"""Model manifolds with boundary and their exact geometric oracles.

Three families are supported, each with points given in intrinsic
coordinates:

* ``Interval(L)``: points are ``x`` in ``[0, L]``.
* ``Rectangle(Lx, Ly)``: points are ``(x, y)``; flat metric.
* ``WarpedAnnulus(eps)``: points are ``(r, theta)`` with ``1 <= r <= 4`` and
  length element ``dr^2 + w(r)^2 dtheta^2`` where
  ``w(r)^2 = r^2 / (1 + chi(r) / eps)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

R_IN = 1.0
R_OUT = 4.0


@dataclass(frozen=True)
class BumpSpec:
    """Smooth bump ``exp(-1 / (1 - s^2))`` supported on ``(lo, hi)``."""

    lo: float = 2.0
    hi: float = 3.0

    def __post_init__(self):
        if not (R_IN <= self.lo < self.hi <= R_OUT):
            raise ValueError(f"bump support ({self.lo}, {self.hi}) must lie in [1, 4]")

    def _s(self, r):
        return 2.0 * (np.asarray(r, dtype=float) - 0.5 * (self.lo + self.hi)) / (self.hi - self.lo)

    def __call__(self, r):
        s = self._s(r)
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    def derivative(self, r):
        s = self._s(r)
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        si = s[inside]
        q = 1.0 - si**2
        out[inside] = np.exp(-1.0 / q) * (-2.0 * si / q**2) * 2.0 / (self.hi - self.lo)
        return out


@dataclass(frozen=True)
class Interval:
    length: float

    dim = 1
    variant = "interval"

    def __post_init__(self):
        _check_length("length", self.length)

    def params(self) -> dict[str, Any]:
        return {"length": self.length}


@dataclass(frozen=True)
class Rectangle:
    lx: float
    ly: float

    dim = 2
    variant = "rectangle"

    def __post_init__(self):
        _check_length("lx", self.lx)
        _check_length("ly", self.ly)

    def params(self) -> dict[str, Any]:
        return {"lx": self.lx, "ly": self.ly}


@dataclass(frozen=True)
class WarpedAnnulus:
    eps: float
    bump: BumpSpec = field(default_factory=BumpSpec)

    dim = 2
    variant = "warped_annulus"
    r_in = R_IN
    r_out = R_OUT

    def __post_init__(self):
        _check_length("eps", self.eps)

    def params(self) -> dict[str, Any]:
        return {"eps": self.eps, "bump": [self.bump.lo, self.bump.hi]}

    def warp(self, r):
        """Circumferential scale ``w(r)``; the metric is ``dr^2 + w^2 dtheta^2``."""
        r = np.asarray(r, dtype=float)
        return r / np.sqrt(1.0 + self.bump(r) / self.eps)

    def warp_derivative(self, r):
        r = np.asarray(r, dtype=float)
        q = 1.0 + self.bump(r) / self.eps
        return 1.0 / np.sqrt(q) - 0.5 * r * q**-1.5 * self.bump.derivative(r) / self.eps


ModelManifold = Interval | Rectangle | WarpedAnnulus


def _check_length(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and positive, got {value!r}")


def manifold_from_dict(desc: dict) -> ModelManifold:
    variant = desc["variant"]
    p = dict(desc.get("params", {}))
    if variant == "interval":
        return Interval(float(p["length"]))
    if variant == "rectangle":
        return Rectangle(float(p["lx"]), float(p["ly"]))
    if variant == "warped_annulus":
        bump = BumpSpec(*map(float, p["bump"])) if "bump" in p else BumpSpec()
        return WarpedAnnulus(float(p["eps"]), bump)
    raise ValueError(f"unknown manifold variant {variant!r}")


def manifold_to_dict(m: ModelManifold) -> dict:
    return {"variant": m.variant, "params": m.params()}


def volume(m: ModelManifold) -> float:
    """Exact (interval, rectangle) or quadrature (annulus) Riemannian volume."""
    if isinstance(m, Interval):
        return m.length
    if isinstance(m, Rectangle):
        return m.lx * m.ly
    from scipy.integrate import quad

    pts = [m.bump.lo, m.bump.hi]
    val, _ = quad(lambda r: float(m.warp(r)), R_IN, R_OUT, points=pts, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2.0 * math.pi * val


def diameter(m: ModelManifold) -> float:
    if isinstance(m, Interval):
        return m.length
    if isinstance(m, Rectangle):
        return math.hypot(m.lx, m.ly)
    # antipodal pairs over a radial sweep, graph distances (slight overestimate)
    g = annulus_geodesics(m)
    rs = np.linspace(R_IN, R_OUT, 13)
    far = np.column_stack([rs, np.full_like(rs, math.pi)])
    return float(max(g.graph_distances((r, 0.0), far).max() for r in rs))


def contains(m: ModelManifold, x, tol: float = 1e-12) -> bool:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(m, Interval):
        return x.shape == (1,) and -tol <= x[0] <= m.length + tol
    if isinstance(m, Rectangle):
        return x.shape == (2,) and -tol <= x[0] <= m.lx + tol and -tol <= x[1] <= m.ly + tol
    return x.shape == (2,) and R_IN - tol <= x[0] <= R_OUT + tol and np.isfinite(x[1])


def _as_point(m: ModelManifold, x) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if not contains(m, p, tol=1e-9):
        raise ValueError(f"point {x!r} is outside {m.variant}")
    return p


@dataclass(frozen=True)
class ClassBounds:
    """Declared bounded-geometry constants (curvature bound, diameter, injectivity radius).

    Only ``D`` and ``i0`` are checked, and only against what the oracles know.
    """

    Lambda: float
    D: float
    i0: float

    def check(self, m: ModelManifold) -> None:
        for name in ("Lambda", "D", "i0"):
            _check_length(name, getattr(self, name))
        if self.D < diameter(m) - 1e-12:
            raise ValueError(f"D={self.D} is below the diameter {diameter(m):.6g}")
        inj = injectivity_radius(m)
        if inj is not None and self.i0 > inj:
            raise ValueError(f"i0={self.i0} exceeds the injectivity radius {inj:.6g}")


def injectivity_radius(m: ModelManifold) -> float | None:
    # flat convex models: boundary normal coordinates degenerate at half the width
    if isinstance(m, Interval):
        return m.length / 2
    if isinstance(m, Rectangle):
        return min(m.lx, m.ly) / 2
    return None


# --------------------------------------------------------------------------
# boundary mesh


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Quadrature nodes on the boundary.

    ``arc`` holds the arc-length coordinate of each node along its boundary
    component and ``component_lengths`` the length of each component (zero
    for point components of an interval).
    """

    nodes: np.ndarray
    weights: np.ndarray
    component_id: np.ndarray
    arc: np.ndarray
    component_lengths: tuple[float, ...]
    closed: bool

    @property
    def size(self) -> int:
        return len(self.weights)

    def boundary_distance(self, i, j) -> np.ndarray:
        """Arc distance along the boundary between node index arrays ``i`` and ``j``.

        Nodes on different components are at infinite distance.
        """
        i = np.asarray(i)
        j = np.asarray(j)
        ci, cj = self.component_id[i], self.component_id[j]
        d = np.abs(self.arc[i] - self.arc[j])
        if self.closed:
            per = np.asarray(self.component_lengths)[ci]
            d = np.minimum(d, per - d)
        return np.where(ci == cj, d, np.inf)

    @cached_property
    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for a in (self.nodes, self.weights, self.component_id):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def same_nodes(self, other: "BoundaryMesh", rtol: float = 1e-9) -> bool:
        return (
            self.size == other.size
            and np.array_equal(self.component_id, other.component_id)
            and np.allclose(self.weights, other.weights, rtol=rtol, atol=0)
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            dim = self.nodes.shape[1]
            w.writerow(["node_id", *[f"x{k}" for k in range(dim)], "weight", "component_id"])
            for k in range(self.size):
                w.writerow([k, *map(repr, self.nodes[k].tolist()), repr(float(self.weights[k])), int(self.component_id[k])])


def build_boundary_mesh(m: ModelManifold, h: float) -> BoundaryMesh:
    """Midpoint-rule boundary mesh with node spacing at most ``h``."""
    if not (h > 0 and math.isfinite(h)):
        raise ValueError(f"mesh spacing must be positive, got {h!r}")
    if isinstance(m, Interval):
        return BoundaryMesh(
            nodes=np.array([[0.0], [m.length]]),
            weights=np.ones(2),
            component_id=np.array([0, 1]),
            arc=np.zeros(2),
            component_lengths=(0.0, 0.0),
            closed=False,
        )
    if isinstance(m, Rectangle):
        if h >= min(m.lx, m.ly):
            raise ValueError("mesh spacing must be smaller than every side")
        corners = [(0.0, 0.0), (m.lx, 0.0), (m.lx, m.ly), (0.0, m.ly), (0.0, 0.0)]
        nodes, weights, arc = [], [], []
        s0 = 0.0
        for (ax, ay), (bx, by) in zip(corners[:-1], corners[1:]):
            side = math.hypot(bx - ax, by - ay)
            n = math.ceil(side / h)
            t = (np.arange(n) + 0.5) / n
            nodes.append(np.column_stack([ax + t * (bx - ax), ay + t * (by - ay)]))
            weights.append(np.full(n, side / n))
            arc.append(s0 + t * side)
            s0 += side
        per = 2 * (m.lx + m.ly)
        return BoundaryMesh(
            nodes=np.vstack(nodes),
            weights=np.concatenate(weights),
            component_id=np.zeros(sum(len(w) for w in weights), dtype=int),
            arc=np.concatenate(arc),
            component_lengths=(per,),
            closed=True,
        )
    nodes, weights, comp, arc, lengths = [], [], [], [], []
    for c, r in enumerate((R_IN, R_OUT)):
        circ = 2 * math.pi * float(m.warp(r))
        if h >= circ:
            raise ValueError("mesh spacing must be smaller than every boundary circle")
        n = math.ceil(circ / h)
        theta = 2 * math.pi * np.arange(n) / n
        nodes.append(np.column_stack([np.full(n, r), theta]))
        weights.append(np.full(n, circ / n))
        comp.append(np.full(n, c))
        arc.append(theta * float(m.warp(r)))
        lengths.append(circ)
    return BoundaryMesh(
        nodes=np.vstack(nodes),
        weights=np.concatenate(weights),
        component_id=np.concatenate(comp),
        arc=np.concatenate(arc),
        component_lengths=tuple(lengths),
        closed=True,
    )


def boundary_measure(m: ModelManifold) -> float:
    if isinstance(m, Interval):
        return 2.0
    if isinstance(m, Rectangle):
        return 2 * (m.lx + m.ly)
    return 2 * math.pi * float(m.warp(R_IN) + m.warp(R_OUT))


# --------------------------------------------------------------------------
# distances


def true_distance(m: ModelManifold, x, y) -> float:
    """Geodesic distance between two points of the model."""
    p, q = _as_point(m, x), _as_point(m, y)
    if isinstance(m, Interval):
        return float(abs(p[0] - q[0]))
    if isinstance(m, Rectangle):
        return float(math.hypot(*(p - q)))
    return annulus_geodesics(m).distance(p, q)


def distances_from(m: ModelManifold, x, targets) -> np.ndarray:
    """Distances from ``x`` to every row of ``targets``."""
    p = _as_point(m, x)
    t = np.asarray(targets, dtype=float).reshape(len(targets), -1)
    for row in t:
        _as_point(m, row)
    if isinstance(m, Interval):
        return np.abs(t[:, 0] - p[0])
    if isinstance(m, Rectangle):
        return np.hypot(t[:, 0] - p[0], t[:, 1] - p[1])
    return annulus_geodesics(m).distances_from(p, t)


def pairwise_distances(m: ModelManifold, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    if isinstance(m, Interval):
        return np.abs(pts[:, :1] - pts[:, :1].T)
    if isinstance(m, Rectangle):
        diff = pts[:, None, :] - pts[None, :, :]
        return np.sqrt((diff**2).sum(-1))
    n = len(pts)
    d = np.zeros((n, n))
    for i in range(n - 1):
        d[i, i + 1 :] = distances_from(m, pts[i], pts[i + 1 :])
    return np.maximum(d, d.T)


def boundary_distance_function(m: ModelManifold, x, mesh: BoundaryMesh) -> np.ndarray:
    """``r_x`` sampled on the mesh nodes."""
    return distances_from(m, x, mesh.nodes)


def annulus_geodesics(m: WarpedAnnulus):
    from .annulus_geodesics import get_geodesics

    return get_geodesics(m)


# --------------------------------------------------------------------------
# interior nets


@dataclass(frozen=True, eq=False)
class InteriorNet:
    points: np.ndarray
    eps: float
    fill_radius: float

    @property
    def size(self) -> int:
        return len(self.points)


def _grid(lo, hi, spacing):
    n = max(1, math.ceil((hi - lo) / spacing))
    return np.linspace(lo, hi, n + 1)


def sample_interior_net(m: ModelManifold, eps: float, probe_factor: int = 4) -> InteriorNet:
    """Grid ``eps``-net, validated against a finer probe grid with the distance oracle."""
    if not (eps > 0):
        raise ValueError("eps must be positive")
    if isinstance(m, Interval):
        pts = _grid(0.0, m.length, eps)[:, None]
        probe = _grid(0.0, m.length, eps / probe_factor)[:, None]
        fill = float(np.min(np.abs(probe - pts.T), axis=1).max())
    elif isinstance(m, Rectangle):
        s = eps * math.sqrt(2)
        gx, gy = np.meshgrid(_grid(0, m.lx, s), _grid(0, m.ly, s), indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        px, py = np.meshgrid(_grid(0, m.lx, s / probe_factor), _grid(0, m.ly, s / probe_factor), indexing="ij")
        probe = np.column_stack([px.ravel(), py.ravel()])
        fill = float(np.sqrt(((probe[:, None, :] - pts[None, :, :]) ** 2).sum(-1)).min(axis=1).max())
    else:
        pts = _annulus_grid(m, eps)
        probe = _annulus_grid(m, eps / probe_factor)
        fill = annulus_geodesics(m).fill_radius(pts, probe)
    if fill > eps * (1 + 1e-9):
        raise RuntimeError(f"net fill radius {fill:.4g} exceeds eps={eps}")
    return InteriorNet(points=pts, eps=eps, fill_radius=fill)


def _annulus_grid(m: WarpedAnnulus, spacing: float) -> np.ndarray:
    rows = []
    for r in _grid(R_IN, R_OUT, spacing):
        n = max(3, math.ceil(2 * math.pi * float(m.warp(r)) / spacing))
        th = 2 * math.pi * np.arange(n) / n
        rows.append(np.column_stack([np.full(n, r), th]))
    return np.vstack(rows)


def save_manifold(m: ModelManifold, path) -> None:
    Path(path).write_text(json.dumps(manifold_to_dict(m), indent=2))


def load_manifold(path) -> ModelManifold:
    return manifold_from_dict(json.loads(Path(path).read_text()))
