"""Time-domain finite-difference wave solver with Neumann boundary sources.

Independent of the spectral machinery: it integrates ``u_tt = Delta u`` with
``du/dnu = f`` (outward normal) by leapfrog on a uniform grid, using ghost
nodes for the boundary condition.  Used to cross-check the spectral wave
matrix and to measure finite propagation speed.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial import cKDTree

from .geometry import Interval, ModelManifold, Rectangle
from .spectral import SpectralDataset, eigenfunction_values
from .wave import BoundaryPartition, WaveSource

_GX, _GW = leggauss(4)


def _kernel_time(lam, s):
    """``sin(sqrt(lam) s) / sqrt(lam)`` (``s`` at ``lam = 0``), broadcast over ``lam``."""
    a = np.sqrt(np.maximum(lam, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(a > 0, np.sin(a * s) / np.where(a > 0, a, 1.0), s)


def windowed_time_average(lam, D, tau, t0, t1):
    """Mean over ``[t0, t1]`` of ``S(D - t) * 1[D - tau <= t <= D]`` per eigenvalue.

    Averaging over the step (4-point Gauss on the clipped window) keeps the
    sharp window from costing an order of accuracy.
    """
    lo, hi = max(t0, D - tau), min(t1, D)
    if hi <= lo or tau <= 0:
        return np.zeros_like(np.asarray(lam, dtype=float))
    t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _GX
    vals = _kernel_time(np.asarray(lam, dtype=float)[:, None], D - t[None, :])
    return (vals * _GW).sum(1) * 0.5 * (hi - lo) / (t1 - t0)


def simulate_interval(length: float, n: int, T: float, source: Callable, cfl: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Leapfrog on ``[0, length]`` with ``n`` cells up to time ``T``.

    ``source(t0, t1)`` returns an array ``(2, m)`` of step-averaged boundary
    fluxes at ``x = 0`` and ``x = length`` for ``m`` simultaneous runs.
    Returns the grid and the solution ``(n + 1, m)`` at ``T``.  At ``cfl = 1``
    the interior update is exact for the 1D wave equation.
    """
    h = length / n
    steps = max(1, math.ceil(T / (cfl * h) - 1e-9))
    dt = T / steps
    r2 = (dt / h) ** 2
    x = np.linspace(0.0, length, n + 1)
    f0 = np.atleast_2d(source(0.0, 0.5 * dt))
    m = f0.shape[1]
    prev = np.zeros((n + 1, m))

    def lap(u, f):
        out = np.empty_like(u)
        out[1:-1] = u[2:] - 2 * u[1:-1] + u[:-2]
        # ghost nodes: -u_x(0) = f0 and u_x(L) = f1
        out[0] = 2 * (u[1] - u[0]) + 2 * h * f[0]
        out[-1] = 2 * (u[-2] - u[-1]) + 2 * h * f[1]
        return out

    cur = prev + 0.5 * r2 * lap(prev, f0)
    for k in range(1, steps):
        t = k * dt
        f = np.atleast_2d(source(t - 0.5 * dt, t + 0.5 * dt))
        prev, cur = cur, 2 * cur - prev + r2 * lap(cur, f)
    return x, cur


def simulate_rectangle(lx: float, ly: float, n: int, T: float, source: Callable, cfl: float = 0.5):
    """Leapfrog on ``[0, lx] x [0, ly]`` with spacing ``h = lx / n``.

    ``source(points, t0, t1)`` returns step-averaged outward fluxes at the
    boundary grid points ``points`` (array ``(P, 2)``).  Returns ``(X, Y, u)``.
    """
    h = lx / n
    ny = max(1, round(ly / h))
    x = np.linspace(0.0, lx, n + 1)
    y = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    steps = max(1, math.ceil(T / (cfl * h) - 1e-9))
    dt = T / steps
    r2 = (dt / h) ** 2
    edge = np.zeros_like(X, dtype=bool)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    bpts = np.column_stack([X[edge], Y[edge]])
    # ghost contributions per side; a corner node receives two
    left, right = np.isclose(bpts[:, 0], 0.0), np.isclose(bpts[:, 0], lx)
    bottom, top = np.isclose(bpts[:, 1], 0.0), np.isclose(bpts[:, 1], y[-1])
    n_sides = left.astype(int) + right + bottom + top

    def lap(u, fb):
        p = np.pad(u, 1, mode="reflect")  # ghost = mirror value (homogeneous Neumann)
        out = p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4 * u
        g = np.zeros_like(u)
        g[edge] = 2 * h * fb * n_sides
        return out + g

    prev = np.zeros_like(X)
    cur = prev + 0.5 * r2 * lap(prev, source(bpts, 0.0, 0.5 * dt))
    for k in range(1, steps):
        t = k * dt
        prev, cur = cur, 2 * cur - prev + r2 * lap(cur, source(bpts, t - 0.5 * dt, t + 0.5 * dt))
    return X, Y, cur


def _trapezoid_weights(x):
    w = np.full(len(x), x[1] - x[0])
    w[0] = w[-1] = 0.5 * (x[1] - x[0])
    return w


def fd_wave_matrix_interval(d: SpectralDataset, p: BoundaryPartition, alpha, N: int, K: int, D: float, n: int = 4000) -> np.ndarray:
    """Finite-difference counterpart of the spectral wave matrix on an interval.

    Runs the ``N`` kernel sources simultaneously, then projects the final
    state onto the analytic eigenfunctions with trapezoid weights.
    """
    from .geometry import manifold_from_dict

    m = manifold_from_dict(d.manifold)
    if not isinstance(m, Interval):
        raise TypeError("interval dataset required")
    lam = d.eigenvalues[:N]
    phi_b = d.traces[:N]  # values at the two endpoints
    taus = np.asarray(alpha.windows(p.eta, D))
    part_of = p.labels

    def source(t0, t1):
        out = np.zeros((2, N))
        for node in range(2):
            tau = taus[part_of[node]]
            out[node] = phi_b[:, node] * windowed_time_average(lam, D, tau, t0, t1)
        return out

    x, u = simulate_interval(m.length, n, D, source)
    phi = eigenfunction_values(m, d.labels[:K], x[:, None])
    return (phi * _trapezoid_weights(x)) @ u


def _boundary_part_lookup(m: ModelManifold, p: BoundaryPartition, pts: np.ndarray) -> np.ndarray:
    tree = cKDTree(p.mesh.nodes)
    _, idx = tree.query(pts)
    return p.labels[idx]


def source_on_points(m: ModelManifold, d: SpectralDataset, p: BoundaryPartition, f: WaveSource):
    """Callable ``(points, t0, t1) -> step-averaged flux`` for a kernel source."""
    a = np.asarray(f.coefficients, dtype=float)
    lam = d.eigenvalues[: len(a)]
    taus = np.asarray(f.alpha.windows(p.eta, f.D))
    cache: dict = {}

    def source(pts, t0, t1):
        key = pts.shape
        if key not in cache:
            phi = eigenfunction_values(m, d.labels[: len(a)], pts)
            cache[key] = (phi * a[:, None], _boundary_part_lookup(m, p, pts))
        phia, part = cache[key]
        out = np.zeros(len(pts))
        for l, tau in enumerate(taus):
            if tau <= 0:
                continue
            sel = part == l
            if sel.any():
                out[sel] = windowed_time_average(lam, f.D, tau, t0, t1) @ phia[:, sel]
        return out

    return source


def finite_speed_check(m: ModelManifold, f: WaveSource, tau: float, d: SpectralDataset, p: BoundaryPartition, n: int = 400) -> float:
    """Fraction of the ``L^2`` mass of ``u^f(D)`` lying outside ``M(Gamma, tau + 2h)``.

    ``Gamma`` is the union of parts with a nonempty window; distances to it
    are Euclidean (both FD models are convex and flat).  Returns 0 when the
    outside region is empty or the wave vanishes.
    """
    src = source_on_points(m, d, p, f)
    active = np.flatnonzero(np.asarray(f.alpha.alpha) > 0)
    gamma_nodes = p.mesh.nodes[np.isin(p.labels, active)]
    if isinstance(m, Interval):
        h = m.length / n

        def source1(t0, t1):
            return src(np.array([[0.0], [m.length]]), t0, t1)[:, None]

        x, u = simulate_interval(m.length, n, f.D, source1)
        u = u[:, 0]
        dist = np.min(np.abs(x[:, None] - gamma_nodes[None, :, 0]), axis=1)
        w = _trapezoid_weights(x)
    elif isinstance(m, Rectangle):
        h = m.lx / n
        X, Y, u = simulate_rectangle(m.lx, m.ly, n, f.D, src)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        # boundary points of Gamma: the FD boundary nodes owned by active parts
        edge = (np.isclose(pts[:, 0], 0) | np.isclose(pts[:, 0], X.max()) | np.isclose(pts[:, 1], 0) | np.isclose(pts[:, 1], Y.max()))
        bp = pts[edge]
        bp = bp[np.isin(_boundary_part_lookup(m, p, bp), active)]
        dist, _ = cKDTree(bp).query(pts)
        u = u.ravel()
        w = np.outer(_trapezoid_weights(X[:, 0]), _trapezoid_weights(Y[0])).ravel()
    else:
        raise TypeError("finite-difference check supports interval and rectangle only")
    total = float(np.sum(w * u**2))
    outside = dist > tau + 2 * h
    if total == 0 or not outside.any():
        return 0.0
    return float(np.sum(w[outside] * u[outside] ** 2)) / total
