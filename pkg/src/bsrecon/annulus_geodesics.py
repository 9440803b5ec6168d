"""Shortest paths on the warped annulus.

In the coordinate ``rho(r) = int_1^r ds / w(s)`` the metric becomes conformally
flat, ``w^2 (drho^2 + dtheta^2)``, so a uniform ``(rho, theta)`` grid with a
wide stencil gives a nearly isotropic Dijkstra graph.  The graph path selects
the homotopy class and rough route; the path is then relaxed as a polyline
(discrete geodesic energy, ``rho`` box-constrained to the annulus) and refined
by segment doubling with a Richardson step.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.sparse.linalg import spsolve

from .geometry import R_IN, R_OUT, WarpedAnnulus

STENCIL = 3
POLISH_TOL = 1e-6


def _stencil(k):
    out = []
    for di in range(0, k + 1):
        for dj in range(-k, k + 1):
            if (di == 0 and dj <= 0) or math.gcd(di, abs(dj)) != 1:
                continue
            out.append((di, dj))
    return out


class AnnulusGeodesics:
    def __init__(self, m: WarpedAnnulus, n_theta: int = 256):
        self.m = m
        r = np.linspace(R_IN, R_OUT, 60001)
        drho = 1.0 / m.warp(r)
        rho = cumulative_trapezoid(drho, r, initial=0.0)
        self.rho_max = float(rho[-1])
        self._r_of_rho = CubicSpline(rho, r)
        self._rho_of_r = CubicSpline(r, rho)
        # conformal factor as a function of rho, with dw/drho = w'(r) * w
        w = m.warp(r)
        self._w = CubicSpline(rho, w)
        self._dw = CubicSpline(rho, m.warp_derivative(r) * w)

        self.n_theta = n_theta
        self.h = 2 * math.pi / n_theta
        self.n_rho = max(2, math.ceil(self.rho_max / self.h))
        self.rho_grid = np.linspace(0.0, self.rho_max, self.n_rho + 1)
        self._graph = self._build_graph()
        self._sp_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    # -- coordinates -------------------------------------------------------
    def rho(self, r):
        return self._rho_of_r(np.clip(r, R_IN, R_OUT))

    def r(self, rho):
        return self._r_of_rho(np.clip(rho, 0.0, self.rho_max))

    def conformal(self, rho):
        return self._w(np.clip(rho, 0.0, self.rho_max))

    # -- graph ---------------------------------------------------------------
    def _node(self, i, j):
        return i * self.n_theta + (j % self.n_theta)

    def _build_graph(self):
        nr, nt = self.n_rho + 1, self.n_theta
        I, J = np.meshgrid(np.arange(nr), np.arange(nt), indexing="ij")
        rows, cols, vals = [], [], []
        for di, dj in _stencil(STENCIL):
            i2 = I + di
            ok = i2 < nr
            a_rho = self.rho_grid[I[ok]]
            b_rho = self.rho_grid[i2[ok]]
            seg = math.hypot(di * (self.rho_grid[1] - self.rho_grid[0]), dj * self.h)
            wsum = self.conformal(a_rho) + 4 * self.conformal(0.5 * (a_rho + b_rho)) + self.conformal(b_rho)
            rows.append(I[ok] * nt + J[ok])
            cols.append(i2[ok] * nt + (J[ok] + dj) % nt)
            vals.append(wsum / 6 * seg)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        n = nr * nt
        g = coo_matrix((np.r_[vals, vals], (np.r_[rows, cols], np.r_[cols, rows])), shape=(n, n))
        return g.tocsr()

    def _snap(self, rho, theta):
        i = int(np.clip(round(rho / (self.rho_grid[1] - self.rho_grid[0])), 0, self.n_rho))
        j = int(round((theta % (2 * math.pi)) / self.h)) % self.n_theta
        return i, j

    def _shortest(self, src):
        if src not in self._sp_cache:
            if len(self._sp_cache) > 256:
                self._sp_cache.clear()
            self._sp_cache[src] = dijkstra(self._graph, indices=src, return_predecessors=True)
        return self._sp_cache[src]

    def _node_coords(self, k):
        i, j = divmod(k, self.n_theta)
        return self.rho_grid[i], j * self.h

    def _graph_path(self, p, q):
        a = self._node(*self._snap(*p))
        b = self._node(*self._snap(*q))
        _, pred = self._shortest(a)
        path = [b]
        while path[-1] != a:
            path.append(pred[path[-1]])
        path.reverse()
        coords = np.array([self._node_coords(k) for k in path])
        coords[:, 1] = np.unwrap(coords[:, 1])
        return coords

    # -- path relaxation --------------------------------------------------------
    def _length(self, z):
        s = np.diff(z, axis=0)
        ell = np.sqrt((s**2).sum(1))
        return float((self.conformal(0.5 * (z[:-1, 0] + z[1:, 0])) * ell).sum())

    def _relax(self, z0, max_iter=60):
        """Minimize the discrete energy ``sum |w(mid) dz|^2`` with fixed ends.

        Energy minimizers are constant-speed geodesic polylines, which removes
        the tangential zero mode that makes direct length minimization stall.
        Projected Gauss-Newton; ``rho`` coordinates pinned at the boundary are
        held fixed while the step pushes them outward.
        """
        z = z0.copy()
        z[:, 0] = np.clip(z[:, 0], 0.0, self.rho_max)
        n = len(z)
        m = n - 1
        seg = np.arange(m)

        def energy(z):
            s = np.diff(z, axis=0)
            c = self.conformal(0.5 * (z[:-1, 0] + z[1:, 0]))
            return float(((c[:, None] * s) ** 2).sum())

        e = energy(z)
        for _ in range(max_iter):
            s = np.diff(z, axis=0)
            mid = 0.5 * (z[:-1, 0] + z[1:, 0])
            c = self.conformal(mid)
            dc = self._dw(np.clip(mid, 0.0, self.rho_max))
            res = (c[:, None] * s).ravel()
            # d res_i / d z_{i+1} = c I + 0.5 c' s e_rho^T, d res_i / d z_i = -c I + 0.5 c' s e_rho^T
            rows, cols, vals = [], [], []
            for off, sign in ((0, -1.0), (1, 1.0)):
                for p in range(2):
                    for q in range(2):
                        v = (sign * c if p == q else np.zeros(m)) + (0.5 * dc * s[:, p] if q == 0 else 0.0)
                        rows.append(2 * seg + p)
                        cols.append(2 * (seg + off) + q)
                        vals.append(np.broadcast_to(v, (m,)))
            rows = np.concatenate(rows)
            cols = np.concatenate(cols) - 2
            vals = np.concatenate(vals)
            keep = (cols >= 0) & (cols < 2 * (n - 2))
            J = csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(2 * m, 2 * (n - 2)))
            g = J.T @ res
            A = (J.T @ J).tolil()
            rho_in = z[1:-1, 0]
            pinned = ((rho_in <= 0.0) & (g[0::2] > 0)) | ((rho_in >= self.rho_max) & (g[0::2] < 0))
            for k in np.flatnonzero(pinned):
                A[2 * k, :] = 0
                A[:, 2 * k] = 0
                A[2 * k, 2 * k] = 1.0
                g[2 * k] = 0.0
            step = -spsolve(A.tocsc(), g).reshape(n - 2, 2)
            t = 1.0
            while True:
                trial = z.copy()
                trial[1:-1] += t * step
                trial[:, 0] = np.clip(trial[:, 0], 0.0, self.rho_max)
                e_new = energy(trial)
                if e_new <= e or t < 1e-6:
                    break
                t *= 0.5
            moved = np.abs(trial - z).max()
            z, e_old, e = trial, e, e_new
            if moved < 1e-13 or abs(e_old - e) <= 1e-15 * e:
                break
        return z, self._length(z)

    @staticmethod
    def _resample(z, n):
        s = np.r_[0.0, np.cumsum(np.sqrt((np.diff(z, axis=0) ** 2).sum(1)))]
        if s[-1] == 0:
            return np.repeat(z[:1], n + 1, axis=0)
        t = np.linspace(0, s[-1], n + 1)
        return np.column_stack([np.interp(t, s, z[:, 0]), np.interp(t, s, z[:, 1])])

    def path(self, p, q, n_segments=32):
        """Relaxed polyline (in ``(rho, theta)``) and its length."""
        pr = (float(self.rho(p[0])), float(p[1]))
        qr = (float(self.rho(q[0])), float(q[1]))
        coarse = self._graph_path(pr, qr)
        theta0 = pr[1] + ((coarse[0, 1] - pr[1] + math.pi) % (2 * math.pi) - math.pi)
        coarse[:, 1] += pr[1] - theta0
        end = qr[1] + 2 * math.pi * round((coarse[-1, 1] - qr[1]) / (2 * math.pi))
        coarse = np.vstack([pr, coarse[1:-1], (qr[0], end)]) if len(coarse) > 2 else np.array([pr, (qr[0], end)])
        z = self._resample(coarse, n_segments)
        return self._relax(z)

    def distance(self, p, q, tol=POLISH_TOL) -> float:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if np.allclose(p, q, atol=0) or (p[0] == q[0] and (p[1] - q[1]) % (2 * math.pi) == 0):
            return 0.0
        n = 16
        z, prev = self.path(p, q, n)
        while True:
            n *= 2
            z, cur = self._relax(self._resample(z, n))
            rich = cur + (cur - prev) / 3
            if abs(cur - prev) < tol or n >= 512:
                return float(rich)
            prev = cur

    def point_along(self, p, q, frac: float, n_segments: int = 256):
        """Point at arclength fraction ``frac`` of the geodesic from ``p`` to ``q``, as ``(r, theta)``."""
        z, _ = self.path(p, q, 16)
        z, _ = self._relax(self._resample(z, n_segments))
        ell = np.sqrt((np.diff(z, axis=0) ** 2).sum(1)) * self.conformal(0.5 * (z[:-1, 0] + z[1:, 0]))
        s = np.r_[0.0, np.cumsum(ell)]
        t = float(frac) * s[-1]
        rho = float(np.interp(t, s, z[:, 0]))
        theta = float(np.interp(t, s, z[:, 1]))
        return float(self.r(rho)), theta

    def distances_from(self, p, targets) -> np.ndarray:
        return np.array([self.distance(p, t) for t in targets])

    def graph_distances(self, p, targets) -> np.ndarray:
        """Graph-only distances (an upper-bound proxy, no relaxation)."""
        a = self._node(*self._snap(float(self.rho(p[0])), float(p[1])))
        d, _ = self._shortest(a)
        idx = [self._node(*self._snap(float(self.rho(t[0])), float(t[1]))) for t in targets]
        return d[idx]

    def fill_radius(self, samples, probe) -> float:
        """Max over probe points of the graph distance to the nearest sample."""
        src = sorted({self._node(*self._snap(float(self.rho(s[0])), float(s[1]))) for s in samples})
        d = dijkstra(self._graph, indices=src, min_only=True)
        idx = [self._node(*self._snap(float(self.rho(t[0])), float(t[1]))) for t in probe]
        return float(d[idx].max())


@lru_cache(maxsize=16)
def get_geodesics(m: WarpedAnnulus, n_theta: int = 256) -> AnnulusGeodesics:
    return AnnulusGeodesics(m, n_theta)
