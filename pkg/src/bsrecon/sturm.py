"""Radial Neumann eigenproblems for warped products ``dr^2 + w(r)^2 dtheta^2``.

For Fourier mode ``k`` the radial factor solves

    -(w R')' / w + k^2 / w^2 R = lam R,   R'(a) = R'(b) = 0,

with weight ``w dr``.  The discretization is vertex-centred finite volumes
(flux ``w`` at cell faces, half cells at the ends), which keeps the Neumann
condition natural and the discrete problem symmetric.  Eigenvalues are
second-order accurate; grids are doubled until three successive levels agree
and the last pair is Richardson-extrapolated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal


class DiscretizationError(RuntimeError):
    """The radial solver failed its self-convergence test."""


@dataclass(frozen=True)
class RadialModes:
    eigenvalues: np.ndarray  # extrapolated
    left: np.ndarray  # R(a), weight-normalized, sign fixed R(a) >= 0
    right: np.ndarray  # R(b)
    n_grid: int
    rel_change: float


def _solve(w: Callable, a: float, b: float, k: int, n: int, lam_hi: float, robin=(0.0, 0.0)):
    r = np.linspace(a, b, n + 1)
    h = (b - a) / n
    wn = w(r)
    wf = w(0.5 * (r[:-1] + r[1:]))
    vol = wn * h
    vol[0] *= 0.5
    vol[-1] *= 0.5
    stiff_d = np.zeros(n + 1)
    stiff_d[:-1] += wf / h
    stiff_d[1:] += wf / h
    stiff_d += vol * k * k / wn**2
    stiff_d[0] += robin[0]
    stiff_d[-1] += robin[1]
    off = -wf / h
    s = 1.0 / np.sqrt(vol)
    d = stiff_d * s * s
    e = off * s[:-1] * s[1:]
    lam, vec = eigh_tridiagonal(d, e, select="v", select_range=(-1.0, lam_hi))
    u = vec * s[:, None]  # sum(vol * u^2) = 1
    return lam, u[0], u[-1]


def radial_modes(
    w: Callable,
    a: float,
    b: float,
    k: int,
    lam_max: float,
    n0: int = 400,
    rtol: float = 1e-4,
    max_n: int = 51200,
    robin: tuple[float, float] = (0.0, 0.0),
) -> RadialModes:
    """All radial eigenvalues ``<= lam_max`` of Fourier mode ``k``.

    ``robin`` adds ``c R(end)^2`` to the energy at the left/right end (Robin
    condition ``w R' = c R`` pointing outward); zero is Neumann.
    """
    lam_hi = 1.1 * lam_max + 1.0
    levels = []
    n = n0
    while n <= max_n:
        levels.append((n, *_solve(w, a, b, k, n, lam_hi, robin)))
        if len(levels) >= 3:
            (_, l0, *_), (_, l1, *_), (nf, l2, left, right) = levels[-3:]
            m = min(len(l0), len(l1), len(l2))
            keep = l2[:m] <= lam_max * 1.05 + 0.5
            m = int(keep.sum())
            scale = np.maximum(np.abs(l2[:m]), 1e-3)
            c1 = np.max(np.abs(l1[:m] - l0[:m]) / scale, initial=0.0)
            c2 = np.max(np.abs(l2[:m] - l1[:m]) / scale, initial=0.0)
            if c1 < rtol and c2 < rtol:
                lam = l2[:m] + (l2[:m] - l1[:m]) / 3.0
                sel = lam <= lam_max
                left, right = left[:m][sel], right[:m][sel]
                sign = np.where(np.abs(left) > 1e-12, np.sign(left), np.sign(right))
                sign[sign == 0] = 1.0
                return RadialModes(lam[sel], left * sign, right * sign, nf, c2)
        n *= 2
    raise DiscretizationError(f"radial mode k={k} did not converge to rtol={rtol} by n={max_n}")
