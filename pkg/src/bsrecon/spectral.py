"""Boundary spectral data: Neumann eigenvalues and boundary traces of
orthonormal eigenfunctions, plus noisy/truncated variants and file I/O."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import (
    R_IN,
    R_OUT,
    BoundaryMesh,
    Interval,
    ModelManifold,
    Rectangle,
    WarpedAnnulus,
    manifold_from_dict,
    manifold_to_dict,
)
from .sturm import DiscretizationError, radial_modes

__all__ = [
    "SpectralDataset",
    "DiscretizationError",
    "compute_spectrum",
    "compute_split_limit",
    "vol_from_phi1",
    "perturb_dataset",
    "multiplicity_clusters",
    "eigenfunction_values",
    "save_dataset",
    "load_dataset",
]

BOUNDARY_METRIC_NOTE = "boundary quadrature weights (induced boundary metric) assumed known"
CLUSTER_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class SpectralDataset:
    eigenvalues: np.ndarray
    traces: np.ndarray  # (J, n_nodes)
    mesh: BoundaryMesh
    cutoff: float
    manifold: dict | None = None
    labels: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        tr = np.asarray(self.traces, dtype=float).reshape(len(ev), self.mesh.size)
        ev.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "traces", tr)

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def truncate(self, k: int) -> "SpectralDataset":
        return replace(self, eigenvalues=self.eigenvalues[:k], traces=self.traces[:k], labels=self.labels[:k])

    def below(self, lam: float) -> "SpectralDataset":
        return self.truncate(int(np.searchsorted(self.eigenvalues, lam, side="left")))

    def l2_inner(self, i: int, j: int) -> float:
        return float(np.sum(self.traces[i] * self.traces[j] * self.mesh.weights))


# --------------------------------------------------------------------------
# analytic eigenfunctions


def _interval_modes(L, lam_max):
    jmax = int(math.floor(math.sqrt(lam_max) * L / math.pi + 1e-12))
    return [(j,) for j in range(jmax + 1)]


def _cos_norm(m, L):
    return 1.0 / math.sqrt(L) if m == 0 else math.sqrt(2.0 / L)


def _rectangle_modes(lx, ly, lam_max):
    out = []
    mmax = int(math.floor(math.sqrt(lam_max) * lx / math.pi + 1e-12))
    for m in range(mmax + 1):
        rest = lam_max - (m * math.pi / lx) ** 2
        nmax = int(math.floor(math.sqrt(max(rest, 0.0)) * ly / math.pi + 1e-12))
        out.extend((m, n) for n in range(nmax + 1))
    return out


def _analytic_eigenvalue(m: ModelManifold, label) -> float:
    if isinstance(m, Interval):
        return (label[0] * math.pi / m.length) ** 2
    return (label[0] * math.pi / m.lx) ** 2 + (label[1] * math.pi / m.ly) ** 2


def eigenfunction_values(m: ModelManifold, labels, points) -> np.ndarray:
    """Evaluate analytic eigenfunctions ``labels`` at ``points`` (interval/rectangle)."""
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    if isinstance(m, Interval):
        return np.array([_cos_norm(j, m.length) * np.cos(j * math.pi * pts[:, 0] / m.length) for (j,) in labels])
    if isinstance(m, Rectangle):
        return np.array(
            [
                _cos_norm(a, m.lx) * _cos_norm(b, m.ly)
                * np.cos(a * math.pi * pts[:, 0] / m.lx) * np.cos(b * math.pi * pts[:, 1] / m.ly)
                for a, b in labels
            ]
        )
    raise TypeError("analytic eigenfunctions exist only for interval and rectangle models")


# --------------------------------------------------------------------------
# forward solver


def compute_spectrum(m: ModelManifold, lambda_max: float, mesh: BoundaryMesh, rtol: float = 1e-4) -> SpectralDataset:
    """Every Neumann eigenvalue ``<= lambda_max`` (with multiplicity) and its boundary trace.

    Interval and rectangle use closed forms; the annulus separates variables
    and solves each Fourier mode with :func:`bsrecon.sturm.radial_modes`.
    Sign convention: each 1D factor is positive at the first boundary node.
    """
    if not (lambda_max > 0):
        raise ValueError("lambda_max must be positive")
    meta = {"boundary_metric": BOUNDARY_METRIC_NOTE}
    if isinstance(m, (Interval, Rectangle)):
        labels = _interval_modes(m.length, lambda_max) if isinstance(m, Interval) else _rectangle_modes(m.lx, m.ly, lambda_max)
        lam = np.array([_analytic_eigenvalue(m, lb) for lb in labels])
        order = sorted(range(len(labels)), key=lambda i: (lam[i], labels[i]))
        labels = [labels[i] for i in order]
        lam = lam[order]
        traces = eigenfunction_values(m, labels, mesh.nodes)
        meta["gram_error"] = 0.0
    elif isinstance(m, WarpedAnnulus):
        lam, traces, labels, info = _annulus_spectrum(m.warp, R_IN, R_OUT, lambda_max, mesh, rtol)
        meta.update(info)
    else:
        raise TypeError(f"unsupported manifold {m!r}")
    return SpectralDataset(lam, traces, mesh, float(lambda_max), manifold_to_dict(m), tuple(map(tuple, labels)), meta)


def _annulus_spectrum(warp, a, b, lambda_max, mesh, rtol, node_mask=None, capped=(False, False)):
    """Separated spectrum on ``[a, b] x S^1``; traces only on nodes in ``node_mask``.

    A ``capped`` end is closed off by a massless cap: Fourier mode ``k`` picks
    up the Robin energy ``k R(end)^2`` of its harmonic extension.
    """
    r_nodes = mesh.nodes[:, 0]
    theta = mesh.nodes[:, 1]
    on_left = np.isclose(r_nodes, a)
    on_right = np.isclose(r_nodes, b)
    if node_mask is not None:
        on_left &= node_mask
        on_right &= node_mask
    entries = []  # (lam, k, parity, radial, trace)
    worst = 0.0
    grid = 0
    k = 0
    wmax = float(np.max(warp(np.linspace(a, b, 2001))))
    while (k / wmax) ** 2 <= lambda_max:
        robin = (k * capped[0], k * capped[1])
        modes = radial_modes(warp, a, b, k, lambda_max, rtol=rtol, robin=robin)
        worst = max(worst, modes.rel_change)
        grid = max(grid, modes.n_grid)
        for q, (lam, left, right) in enumerate(zip(modes.eigenvalues, modes.left, modes.right)):
            radial = np.where(on_left, left, 0.0) + np.where(on_right, right, 0.0)
            if k == 0:
                if q == 0:
                    # constant mode inserted exactly
                    lam = 0.0
                    vol = 2 * math.pi * _warp_integral(warp, a, b)
                    radial = np.where(on_left | on_right, 1.0 / math.sqrt(vol), 0.0)
                    entries.append((lam, k, 0, q, radial))
                else:
                    entries.append((lam, k, 0, q, radial / math.sqrt(2 * math.pi)))
            else:
                entries.append((lam, k, 0, q, radial * np.cos(k * theta) / math.sqrt(math.pi)))
                entries.append((lam, k, 1, q, radial * np.sin(k * theta) / math.sqrt(math.pi)))
        k += 1
    entries.sort(key=lambda e: (e[0], e[1], e[3], e[2]))
    lam = np.array([e[0] for e in entries])
    traces = np.array([e[4] for e in entries]) if entries else np.zeros((0, mesh.size))
    labels = [(e[1], e[2], e[3]) for e in entries]
    return lam, traces, labels, {"radial_rel_change": worst, "radial_grid": grid, "gram_error": 0.0}


def _warp_integral(warp, a, b):
    from scipy.integrate import quad

    val, _ = quad(lambda r: float(warp(r)), a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def compute_split_limit(m: WarpedAnnulus, lambda_max: float, mesh: BoundaryMesh, rtol: float = 1e-4) -> SpectralDataset:
    """Boundary spectral data of the disconnected limit of the pinched annulus.

    As ``eps -> 0`` the circles over the bump shrink to points and the annulus
    separates into the flat pieces ``[1, lo]`` and ``[hi, 4]``.  In the
    conformal coordinate ``tau = int dr / w`` the neck becomes a half-infinite
    cylinder on which Fourier mode ``k`` decays like ``exp(-k tau)``, so each
    piece ends in a massless cap contributing the Robin energy ``k R(cut)^2``
    (Neumann for ``k = 0``).
    """
    inner_mask = np.isclose(mesh.nodes[:, 0], R_IN)
    flat = lambda r: np.asarray(r, dtype=float)  # noqa: E731
    parts = [
        _annulus_spectrum(flat, R_IN, m.bump.lo, lambda_max, mesh, rtol, inner_mask, capped=(False, True)),
        _annulus_spectrum(flat, m.bump.hi, R_OUT, lambda_max, mesh, rtol, ~inner_mask, capped=(True, False)),
    ]
    rows = []
    for side, (lam, tr, labels, _) in enumerate(parts):
        rows.extend((lam[i], side, labels[i], tr[i]) for i in range(len(lam)))
    rows.sort(key=lambda e: (e[0], e[1], e[2]))
    lam = np.array([e[0] for e in rows])
    traces = np.array([e[3] for e in rows])
    labels = tuple((e[1], *e[2]) for e in rows)
    meta = {"boundary_metric": BOUNDARY_METRIC_NOTE, "split_limit": True}
    return SpectralDataset(lam, traces, mesh, float(lambda_max), manifold_to_dict(m), labels, meta)


def vol_from_phi1(d: SpectralDataset, rtol: float | None = 1e-4) -> float:
    """Volume from the constant first eigenfunction, ``vol = phi_1(z)^-2``.

    ``phi_1(z)`` is the boundary-weighted mean of the first trace.  With
    ``rtol`` set the trace must be constant to that relative spread; ``None``
    accepts noisy data.
    """
    t = d.traces[0]
    w = d.mesh.weights
    mean = float(np.sum(t * w) / np.sum(w))
    spread = float(np.max(np.abs(t - mean)))
    if mean == 0 or (rtol is not None and spread > rtol * abs(mean)):
        raise ValueError(f"first trace is not constant over nodes (spread {spread:.3g}, mean {mean:.3g})")
    return mean**-2


def multiplicity_clusters(eigenvalues, rtol: float = CLUSTER_RTOL) -> list[list[int]]:
    """Index groups of numerically equal eigenvalues."""
    out: list[list[int]] = []
    for j, lam in enumerate(eigenvalues):
        if out and abs(lam - eigenvalues[out[-1][-1]]) <= rtol * (1 + abs(lam)):
            out[-1].append(j)
        else:
            out.append([j])
    return out


def perturb_dataset(
    d: SpectralDataset,
    noise: dict | None,
    delta_inv: float,
    seed: int = 0,
    mix_clusters: list[list[int]] | None = None,
    mix_matrices: list[np.ndarray] | None = None,
) -> SpectralDataset:
    """Truncate to eigenvalues ``< delta_inv`` and add bounded seeded noise.

    ``noise = {"eig_abs": a, "trace_l2": b}``: every eigenvalue moves by at most
    ``a``; each trace moves by exactly ``b`` in the boundary ``L^2`` norm along a
    seeded random direction (so the perturbation scales linearly with ``b``).
    ``mix_clusters`` applies a random orthogonal matrix (or the given
    ``mix_matrices``) to the traces of each listed index group.
    """
    if not (delta_inv > 0):
        raise ValueError("delta_inv must be positive")
    noise = dict(noise or {})
    eig_abs = float(noise.get("eig_abs", 0.0))
    trace_l2 = float(noise.get("trace_l2", 0.0))
    if eig_abs < 0 or trace_l2 < 0:
        raise ValueError("noise magnitudes must be nonnegative")
    keep = int(np.sum(d.eigenvalues < delta_inv))
    lam = d.eigenvalues[:keep].copy()
    tr = d.traces[:keep].copy()
    rng = np.random.default_rng(seed)
    lam_shift = rng.uniform(-1.0, 1.0, size=keep)
    direction = rng.standard_normal(tr.shape)
    norms = np.sqrt((direction**2 * d.mesh.weights).sum(axis=1))
    direction /= np.where(norms > 0, norms, 1.0)[:, None]
    lam = lam + eig_abs * lam_shift
    tr = tr + trace_l2 * direction
    if mix_clusters:
        from scipy.stats import ortho_group

        for c, idx in enumerate(mix_clusters):
            idx = [i for i in idx if i < keep]
            if len(idx) < 2:
                continue
            if mix_matrices is not None:
                U = np.asarray(mix_matrices[c], dtype=float)
            else:
                U = ortho_group.rvs(len(idx), random_state=rng)
            tr[idx] = U @ tr[idx]
    meta = dict(d.meta, noise={"eig_abs": eig_abs, "trace_l2": trace_l2}, seed=seed, delta_inv=delta_inv)
    order = np.argsort(lam, kind="stable")
    labels = tuple(d.labels[i] for i in order) if d.labels else ()
    return SpectralDataset(lam[order], tr[order], d.mesh, float(delta_inv), d.manifold, labels, meta)


# --------------------------------------------------------------------------
# file format: one JSON header line prefixed by '#', then CSV rows (j, lam, traces...)


def _mesh_to_json(mesh: BoundaryMesh) -> dict:
    return {
        "nodes": mesh.nodes.tolist(),
        "weights": mesh.weights.tolist(),
        "component_id": mesh.component_id.tolist(),
        "arc": mesh.arc.tolist(),
        "component_lengths": list(mesh.component_lengths),
        "closed": mesh.closed,
    }


def _mesh_from_json(obj: dict) -> BoundaryMesh:
    return BoundaryMesh(
        nodes=np.array(obj["nodes"], dtype=float),
        weights=np.array(obj["weights"], dtype=float),
        component_id=np.array(obj["component_id"], dtype=int),
        arc=np.array(obj["arc"], dtype=float),
        component_lengths=tuple(obj["component_lengths"]),
        closed=bool(obj["closed"]),
    )


def dumps_dataset(d: SpectralDataset) -> str:
    header = {
        "format": "bsrecon.dataset/1",
        "manifold": d.manifold,
        "cutoff": d.cutoff,
        "mesh_hash": d.mesh.digest,
        "mesh": _mesh_to_json(d.mesh),
        "labels": [list(lb) for lb in d.labels],
        "meta": d.meta,
    }
    buf = io.StringIO()
    buf.write("#" + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for j, (lam, row) in enumerate(zip(d.eigenvalues, d.traces), start=1):
        w.writerow([j, repr(float(lam)), *map(repr, row.tolist())])
    return buf.getvalue()


def loads_dataset(text: str) -> SpectralDataset:
    first, _, body = text.partition("\n")
    if not first.startswith("#"):
        raise ValueError("dataset file must start with a '#' JSON header line")
    header = json.loads(first[1:])
    mesh = _mesh_from_json(header["mesh"])
    if mesh.digest != header["mesh_hash"]:
        raise ValueError("mesh hash mismatch")
    rows = [r for r in csv.reader(io.StringIO(body)) if r]
    lam = np.array([float(r[1]) for r in rows])
    traces = np.array([[float(v) for v in r[2:]] for r in rows]) if rows else np.zeros((0, mesh.size))
    return SpectralDataset(
        lam, traces, mesh, float(header["cutoff"]), header["manifold"], tuple(tuple(lb) for lb in header["labels"]), header["meta"]
    )


def save_dataset(d: SpectralDataset, path) -> None:
    Path(path).write_text(dumps_dataset(d))


def load_dataset(path) -> SpectralDataset:
    return loads_dataset(Path(path).read_text())


def dataset_manifold(d: SpectralDataset) -> ModelManifold:
    return manifold_from_dict(d.manifold)
