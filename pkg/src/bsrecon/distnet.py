"""Approximate boundary distance functions from shell volumes.

A slice index ``beta`` names the shell of points whose distance to every part
``Gamma_l`` lies in ``((beta_l - 2) eta, (beta_l + 2) eta)``.  Its volume is
assembled from volumes of domains of influence ``M_alpha`` by set algebra;
shells of volume at least ``sigma`` contribute the piecewise constant
function ``r_beta = beta_l eta`` on ``Gamma_l``.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Interval, ModelManifold, Rectangle, WarpedAnnulus, annulus_geodesics
from .spectral import SpectralDataset
from .wave import BoundaryPartition, ControlParams, MultiIndex, SingularGram, WaveOperator, alpha_max, approx_volume

L_MAX = 8


class ComplexityError(ValueError):
    """Inclusion-exclusion or lattice enumeration would be too large."""


@dataclass(frozen=True)
class SliceIndex:
    beta: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(int(b) for b in self.beta))
        if any(b < 0 for b in self.beta):
            raise ValueError("slice index entries must be nonnegative")

    def check(self, eta: float, D: float) -> None:
        top = alpha_max(eta, D)
        if any(b > top + 2 for b in self.beta):
            raise ValueError(f"beta {self.beta} exceeds ceil(D/eta) + 2 = {top + 2}")


@dataclass(frozen=True)
class DistanceFunction:
    values: np.ndarray  # one value per part
    beta: SliceIndex

    @classmethod
    def from_beta(cls, beta: SliceIndex, eta: float) -> "DistanceFunction":
        v = np.array(beta.beta, dtype=float) * eta
        v.setflags(write=False)
        return cls(v, beta)


@dataclass(frozen=True)
class DistanceNet:
    members: list[DistanceFunction]
    sigma: float
    eta: float
    partition: dict = field(default_factory=dict)
    volumes: tuple[float, ...] = ()

    def __len__(self) -> int:
        return len(self.members)

    def values(self) -> np.ndarray:
        L = len(self.members[0].values) if self.members else 0
        return np.array([m.values for m in self.members]).reshape(len(self.members), L)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "sigma": self.sigma,
            "partition": self.partition,
            "members": [
                {"beta": list(m.beta.beta), "values": m.values.tolist(), "volume": v}
                for m, v in zip(self.members, self.volumes or [None] * len(self.members))
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DistanceNet":
        eta = float(obj["eta"])
        members, vols = [], []
        for rec in obj["members"]:
            f = DistanceFunction.from_beta(SliceIndex(tuple(rec["beta"])), eta)
            if not np.allclose(f.values, rec["values"], rtol=0, atol=1e-12):
                raise ValueError("member values disagree with beta * eta")
            members.append(f)
            vols.append(rec.get("volume"))
        return cls(members, float(obj["sigma"]), eta, obj.get("partition", {}), tuple(vols) if all(v is not None for v in vols) else ())


def save_net(net: DistanceNet, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=1, sort_keys=True))


def load_net(path) -> DistanceNet:
    return DistanceNet.from_dict(json.loads(Path(path).read_text()))


class VolumeTable:
    """Memoized ``vol^a(M_alpha)`` keyed by multi-index (insert-once)."""

    def __init__(self, d: SpectralDataset, p: BoundaryPartition, params: ControlParams, D: float, strict: bool = True):
        self.d, self.p, self.params, self.D, self.strict = d, p, params, float(D), strict
        self.op = WaveOperator(d, p, params.K, D)
        self.top = alpha_max(p.eta, D)
        self.cache: dict[tuple[int, ...], float] = {}
        self.singular = 0  # evaluations that truncated a rank-deficient Gram matrix

    def __call__(self, alpha: tuple[int, ...]) -> float:
        if alpha not in self.cache:
            if not any(alpha):
                self.cache[alpha] = 0.0
            else:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", SingularGram)
                    self.cache[alpha] = approx_volume(self.d, self.p, MultiIndex(alpha), self.params, self.D, self.op, self.strict)
                self.singular += any(issubclass(w.category, SingularGram) for w in caught)
        return self.cache[alpha]


def _shell_volume(table: VolumeTable, lo: tuple[int, ...], hi: tuple[int, ...], active: list[int]) -> float:
    """Volume of ``∩_{l in active} [M(Gamma_l, hi_l eta) \\ M(Gamma_l, lo_l eta)]``.

    ``∩_l (A_l \\ B_l) = (∩ A_l ∪ U) \\ U`` with ``U = ∪ B_l = M_lo``, and
    ``vol(∩_l (A_l ∪ U))`` expands by inclusion-exclusion into unions, each
    of which is a single ``M_gamma`` with ``gamma = max(hi on T, lo)``.
    """
    L = len(lo)
    base = tuple(lo[l] if l in active else 0 for l in range(L))
    total = 0.0
    for size in range(1, len(active) + 1):
        sign = 1.0 if size % 2 else -1.0
        for T in itertools.combinations(active, size):
            gamma = list(base)
            for l in T:
                gamma[l] = hi[l]
            total += sign * table(tuple(gamma))
    return total - table(base)


def _bounds(beta, top):
    hi = tuple(min(b + 2, top) for b in beta)
    lo = tuple(max(b - 2, 0) for b in beta)
    return lo, hi


def slice_volume(d, beta: SliceIndex, p: BoundaryPartition, params: ControlParams, D: float, table: VolumeTable | None = None) -> float:
    """``vol^a`` of the shell ``M_beta*`` from ``2^L`` memoized volumes."""
    if p.L > L_MAX:
        raise ComplexityError(f"L={p.L} exceeds L_max={L_MAX} (2^L volume evaluations)")
    if len(beta.beta) != p.L:
        raise ValueError("beta length must equal the number of parts")
    table = table or VolumeTable(d, p, params, D)
    if any(b - 2 > table.top for b in beta.beta):
        return 0.0
    lo, hi = _bounds(beta.beta, table.top)
    return _shell_volume(table, lo, hi, list(range(p.L)))


def build_distance_net(
    d: SpectralDataset,
    p: BoundaryPartition,
    params: ControlParams,
    D: float,
    sigma: float | None = None,
    table: VolumeTable | None = None,
    max_lattice: int = 10**6,
    pair_checks: bool = True,
) -> DistanceNet:
    """All ``r_beta`` whose shell volume is at least ``sigma``.

    Depth-first over ``beta_l in 0..D/eta + 2`` in lexicographic order; a
    prefix is abandoned when the shell constrained by its parts alone is
    already below ``sigma``.  With ``pair_checks`` the single- and two-part
    shells containing it must pass too.  Default ``sigma = 0.1 eta^dim``.
    """
    if p.L > L_MAX:
        raise ComplexityError(f"L={p.L} exceeds L_max={L_MAX}")
    dim = 1 if d.mesh.nodes.shape[1] == 1 else 2
    sigma = 0.1 * p.eta**dim if sigma is None else float(sigma)
    if not (sigma > 0):
        raise ValueError("sigma must be positive")
    table = table or VolumeTable(d, p, params, D)
    top = table.top
    if (top + 3) ** p.L > max_lattice:
        raise ComplexityError(f"lattice of {(top + 3) ** p.L} indices exceeds cap {max_lattice}")
    members, vols = [], []

    def visit(prefix: list[int]):
        k = len(prefix)
        if k:
            beta = prefix + [0] * (p.L - k)
            lo, hi = _bounds(beta, top)
            # every shell over a subset of parts contains the full shell; the
            # few-term subsets are far less exposed to cancellation error
            for j in range(min(k - 1, pair_checks and k - 1)):
                if _shell_volume(table, lo, hi, [j, k - 1]) < sigma:
                    return
            if k > 1 and _shell_volume(table, lo, hi, [k - 1]) < sigma:
                return
            vol = _shell_volume(table, lo, hi, list(range(k)))
            if vol < sigma:
                return
            if k == p.L:
                members.append(DistanceFunction.from_beta(SliceIndex(tuple(prefix)), p.eta))
                vols.append(vol)
                return
        for b in range(0, top + 3):
            visit(prefix + [b])

    visit([])
    return DistanceNet(members, sigma, p.eta, p.to_dict(), tuple(vols))


# --------------------------------------------------------------------------
# ground truth at part resolution


def part_distances(m: ModelManifold, p: BoundaryPartition, points) -> np.ndarray:
    """``d(x, Gamma_l)`` for every point and part, shape ``(n_points, L)``.

    Each boundary node stands for the boundary piece it integrates (half a
    weight on either side along its side or circle), so for the interval and
    rectangle the distance is exact to the covered pieces.
    """
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    mesh = p.mesh
    out = np.full((len(pts), p.L), np.inf)
    if isinstance(m, Interval):
        for l, idx in enumerate(p.parts):
            out[:, l] = np.min(np.abs(pts[:, :1] - mesh.nodes[idx, 0][None, :]), axis=1)
        return out
    if isinstance(m, Rectangle):
        for l, idx in enumerate(p.parts):
            best = np.full(len(pts), np.inf)
            for k in idx:
                a, b = _node_segment(m, mesh.nodes[k], mesh.weights[k])
                best = np.minimum(best, _point_segment(pts, a, b))
            out[:, l] = best
        return out
    if isinstance(m, WarpedAnnulus):
        geo = annulus_geodesics(m)
        for i, x in enumerate(pts):
            dist = geo.distances_from(x, mesh.nodes)
            for l, idx in enumerate(p.parts):
                out[i, l] = dist[idx].min()
        return out
    raise TypeError(f"unsupported manifold {m!r}")


def _node_segment(m: Rectangle, node, weight):
    x, y = node
    h = 0.5 * weight
    if np.isclose(y, 0.0) or np.isclose(y, m.ly):
        return np.array([max(x - h, 0.0), y]), np.array([min(x + h, m.lx), y])
    return np.array([x, max(y - h, 0.0)]), np.array([x, min(y + h, m.ly)])


def _point_segment(pts, a, b):
    ab = b - a
    t = np.clip(((pts - a) @ ab) / max(ab @ ab, 1e-300), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def hausdorff_to_truth(net: DistanceNet, m: ModelManifold, probe, p: BoundaryPartition) -> float:
    """Two-sided sup-norm Hausdorff distance between the net and ``{r_x : x in probe}``."""
    from .gh import hausdorff_sup_norm

    truth = part_distances(m, p, probe)
    if len(net) == 0:
        return math.inf
    return hausdorff_sup_norm(net.values(), truth)
