"""Fourier coefficients of boundary-driven waves, the control functional and
approximate volumes of domains of influence, all from boundary spectral data.

For a source supported on ``Gamma_l x [D - tau_l, D]`` and built from the
kernels ``s_n(y, t) = phi_n(y) sin(sqrt(lam_n) (D - t)) / sqrt(lam_n)`` the
``k``-th Fourier coefficient of the wave at time ``D`` is

    G[k, n] = sum_l T(tau_l)[k, n] * B_l[k, n],
    T(tau)[k, n] = int_0^tau S_k(s) S_n(s) ds,   S_k(s) = sin(sqrt(lam_k) s) / sqrt(lam_k),
    B_l[k, n] = sum_{z in Gamma_l} phi_k(z) phi_n(z) w_z.

The leading ``N x N`` block of ``G`` is also the Gram matrix of the sources
in ``L^2(dM x [0, D])``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import eigh

from .geometry import BoundaryMesh
from .spectral import SpectralDataset, vol_from_phi1


class NotConverged(RuntimeError):
    """The constrained minimization could not push the residual below sigma."""

    def __init__(self, residual: float, sigma: float):
        super().__init__(f"control residual {residual:.4g} exceeds sigma={sigma:.4g}")
        self.residual = residual
        self.sigma = sigma


class SingularGram(UserWarning):
    """The Gram matrix of test waves is numerically rank deficient; a truncated
    pseudo-inverse was used."""


# --------------------------------------------------------------------------
# boundary partition and multi-indices


@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    """Disjoint node sets ``Gamma_l`` covering the boundary mesh.

    With ``partial`` the parts may cover only a patch of the boundary; nodes
    outside every part never carry sources.
    """

    parts: tuple[np.ndarray, ...]
    eta: float
    widths: tuple[float, ...]
    mesh: BoundaryMesh
    allow_coarse: bool = False
    partial: bool = False

    def __post_init__(self):
        if not (self.eta > 0):
            raise ValueError("eta must be positive")
        allnodes = np.concatenate(self.parts) if self.parts else np.zeros(0, int)
        if len(np.unique(allnodes)) != len(allnodes):
            raise ValueError("parts must be disjoint")
        if not self.partial and len(allnodes) != self.mesh.size:
            raise ValueError("parts must cover every mesh node (pass partial=True for a patch)")
        if not self.allow_coarse and any(w >= self.eta for w in self.widths):
            raise ValueError(f"part diameters {max(self.widths):.4g} must be < eta={self.eta:.4g} (pass allow_coarse)")

    @property
    def L(self) -> int:
        return len(self.parts)

    @property
    def labels(self) -> np.ndarray:
        lab = np.full(self.mesh.size, -1, dtype=int)
        for l, idx in enumerate(self.parts):
            lab[idx] = l
        return lab

    def centres(self) -> np.ndarray:
        """Node of each part minimizing the largest arc distance within the part."""
        out = []
        for idx in self.parts:
            d = self.mesh.boundary_distance(idx[:, None], idx[None, :])
            out.append(int(idx[np.argmin(d.max(axis=1))]))
        return np.array(out)

    def part_distances(self) -> np.ndarray:
        """Boundary arc distance between part centres (``inf`` across components)."""
        c = self.centres()
        return self.mesh.boundary_distance(c[:, None], c[None, :])

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "labels": self.labels.tolist(),
            "allow_coarse": self.allow_coarse,
            "partial": self.partial,
            "mesh_hash": self.mesh.digest,
        }

    @classmethod
    def from_labels(cls, mesh: BoundaryMesh, labels, eta: float, allow_coarse: bool = False) -> "BoundaryPartition":
        """Parts from per-node labels ``0..L-1``; label ``-1`` leaves a node uncovered."""
        labels = np.asarray(labels, dtype=int)
        parts = tuple(np.flatnonzero(labels == l) for l in range(labels.max() + 1))
        widths = tuple(_diam(mesh, idx) for idx in parts)
        return cls(parts, float(eta), widths, mesh, allow_coarse, partial=bool((labels < 0).any()))

    @classmethod
    def from_dict(cls, obj: dict, mesh: BoundaryMesh) -> "BoundaryPartition":
        if obj.get("mesh_hash") not in (None, mesh.digest):
            raise ValueError("partition was built on a different mesh")
        return cls.from_labels(mesh, obj["labels"], obj["eta"], obj.get("allow_coarse", False))


def _diam(mesh: BoundaryMesh, idx: np.ndarray) -> float:
    if len(idx) <= 1:
        return 0.0
    return float(mesh.boundary_distance(idx[:, None], idx[None, :]).max())


def partition_boundary(mesh: BoundaryMesh, eta: float) -> BoundaryPartition:
    """Cut every boundary component into arcs of node-set diameter ``< eta``."""
    labels = np.empty(mesh.size, dtype=int)
    nxt = 0
    for c in np.unique(mesh.component_id):
        idx = np.flatnonzero(mesh.component_id == c)
        idx = idx[np.argsort(mesh.arc[idx], kind="stable")]
        length = mesh.component_lengths[c]
        if length == 0 or len(idx) == 1:
            labels[idx] = nxt
            nxt += 1
            continue
        spacing = length / len(idx)
        per = max(1, int(math.floor((eta - 1e-12 * eta) / spacing)) + 1)
        while per > 1 and (per - 1) * spacing >= eta:
            per -= 1
        n_parts = math.ceil(len(idx) / per)
        bounds = np.linspace(0, len(idx), n_parts + 1).round().astype(int)
        for a, b in zip(bounds[:-1], bounds[1:]):
            labels[idx[a:b]] = nxt
            nxt += 1
    return BoundaryPartition.from_labels(mesh, labels, eta)


def side_partition(mesh: BoundaryMesh, eta: float) -> BoundaryPartition:
    """One part per rectangle side (coarse: part diameters may exceed ``eta``)."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    side = np.select([np.isclose(y, 0.0), np.isclose(x, x.max()), np.isclose(y, y.max())], [0, 1, 2], 3)
    return BoundaryPartition.from_labels(mesh, side, eta, allow_coarse=True)


@dataclass(frozen=True)
class MultiIndex:
    alpha: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(int(a) for a in self.alpha))
        if any(a < 0 for a in self.alpha):
            raise ValueError("multi-index entries must be nonnegative")

    def __len__(self) -> int:
        return len(self.alpha)

    def check(self, eta: float, D: float) -> None:
        top = alpha_max(eta, D)
        if any(a > top for a in self.alpha):
            raise ValueError(f"alpha {self.alpha} exceeds ceil(D/eta) = {top}")

    def windows(self, eta: float, D: float) -> np.ndarray:
        """Source window lengths ``tau_l = min(alpha_l eta, D)``."""
        return np.minimum(np.array(self.alpha, dtype=float) * eta, D)

    @classmethod
    def zeros(cls, L: int) -> "MultiIndex":
        return cls((0,) * L)


def alpha_max(eta: float, D: float) -> int:
    """Smallest ``a`` with ``a eta >= D``; windows are clipped at ``D`` so larger indices add nothing."""
    return int(math.ceil(D / eta - 1e-9))


# --------------------------------------------------------------------------
# closed-form time integrals

_GL_X, _GL_W = leggauss(10)


def _sinc_sq(x):
    """``F(x) = sin(sqrt x) / sqrt x`` for ``x >= 0`` (entire in ``x``)."""
    t = np.sqrt(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(t > 1e-4, np.sin(t) / np.where(t > 0, t, 1.0), 1.0 - x / 6.0 + x * x / 120.0)


def _sinc_sq_prime(x):
    """``F'(x)``, via its Taylor series on ``x < 1`` to avoid cancellation."""
    x = np.asarray(x, dtype=float)
    small = x < 1.0
    xs = np.where(small, x, 0.0)
    ser = np.zeros_like(x)
    term_c = -1.0 / 6.0  # c_1
    power = np.ones_like(x)
    for m in range(1, 14):
        ser += m * term_c * power
        power = power * xs
        term_c = -term_c / ((2 * m + 2) * (2 * m + 3))
    t = np.sqrt(np.where(small, 1.0, x))
    big = (t * np.cos(t) - np.sin(t)) / (2 * t**3)
    return np.where(small, ser, big)


def kernel_integral(lam_a, lam_b, tau):
    """``int_0^tau S_a(s) S_b(s) ds`` with ``S(s) = sin(sqrt(lam) s) / sqrt(lam)``.

    Product-to-sum gives ``2 tau^3 (F(u^2) - F(v^2)) / (v^2 - u^2)`` with
    ``u = (a - b) tau``, ``v = (a + b) tau`` and ``F(x) = sin(sqrt x)/sqrt x``;
    the divided difference is evaluated by Gauss-Legendre quadrature of
    ``F'`` when ``v^2 - u^2`` is small, which covers ``lam -> 0`` and
    ``lam_a -> lam_b`` without branches.  Negative eigenvalues (noise) are
    clipped to zero.  Broadcasts over its arguments.
    """
    a = np.sqrt(np.maximum(np.asarray(lam_a, dtype=float), 0.0))
    b = np.sqrt(np.maximum(np.asarray(lam_b, dtype=float), 0.0))
    tau = np.asarray(tau, dtype=float)
    x = ((a - b) * tau) ** 2
    y = ((a + b) * tau) ** 2
    h = y - x
    near = h < 0.5
    with np.errstate(invalid="ignore", divide="ignore"):
        far = (_sinc_sq(x) - _sinc_sq(y)) / np.where(near, 1.0, h)
    nodes = 0.5 * (1 + _GL_X)
    xs = x[..., None] + np.where(near, h, 0.0)[..., None] * nodes
    dd = -(_sinc_sq_prime(xs) * (0.5 * _GL_W)).sum(-1)  # -F[x, y]
    return 2 * tau**3 * np.where(near, dd, far)


# --------------------------------------------------------------------------
# wave matrix


class WaveOperator:
    """Precomputed blocks for ``wave_fourier_matrix`` on one dataset/partition.

    Time integrals are cached per window length, so sweeping many
    multi-indices costs one ``K x K`` Hadamard product per part.
    """

    def __init__(self, d: SpectralDataset, p: BoundaryPartition, K: int, D: float):
        if not d.mesh.same_nodes(p.mesh):
            raise ValueError("partition and dataset meshes differ")
        if K > len(d):
            raise ValueError(f"K={K} exceeds dataset size {len(d)}")
        if not (D > 0):
            raise ValueError("D must be positive")
        self.d, self.p, self.K, self.D = d, p, int(K), float(D)
        lam = d.eigenvalues[:K]
        self._lam = lam
        phi = d.traces[:K]
        w = d.mesh.weights
        self.blocks = [(phi[:, idx] * w[idx]) @ phi[:, idx].T for idx in p.parts]
        self._T: dict[float, np.ndarray] = {}

    def time_block(self, tau: float) -> np.ndarray:
        key = round(float(tau), 12)
        if key not in self._T:
            self._T[key] = kernel_integral(self._lam[:, None], self._lam[None, :], key)
        return self._T[key]

    def matrix(self, alpha: MultiIndex, N: int | None = None) -> np.ndarray:
        """``K x N`` matrix of coefficients ``u_k^{f_n}(D)``."""
        if len(alpha) != self.p.L:
            raise ValueError(f"alpha has {len(alpha)} entries for {self.p.L} parts")
        alpha.check(self.p.eta, self.D)
        N = self.K if N is None else int(N)
        if N > self.K:
            raise ValueError("N must not exceed K")
        G = np.zeros((self.K, self.K))
        for tau, B in zip(alpha.windows(self.p.eta, self.D), self.blocks):
            if tau > 0:
                G += self.time_block(tau) * B
        return G[:, :N]


def wave_fourier_matrix(d: SpectralDataset, p: BoundaryPartition, alpha: MultiIndex, N: int, K: int, D: float) -> np.ndarray:
    """Entry ``(k, n)`` is the ``k``-th Fourier coefficient at ``t = D`` of the
    wave driven by ``s_n`` windowed to ``Sigma_alpha``."""
    if N > len(d):
        raise ValueError(f"N={N} exceeds dataset size {len(d)}")
    return WaveOperator(d, p, max(K, N), D).matrix(alpha, N)[:K]


# --------------------------------------------------------------------------
# control


@dataclass(frozen=True)
class ControlParams:
    N: int
    I: int
    K: int
    C: float
    sigma: float
    gram_rtol: float = 1e-10

    def __post_init__(self):
        if not (1 <= self.N <= self.I <= self.K):
            raise ValueError(f"need 1 <= N <= I <= K, got N={self.N}, I={self.I}, K={self.K}")
        if not (self.C > 0 and self.sigma > 0):
            raise ValueError("C and sigma must be positive")

    @classmethod
    def for_size(cls, n: int, C: float = 10.0, sigma: float = 0.5, **kw) -> "ControlParams":
        """``K = n``, ``I = 3n/4``, ``N = n/2``: the defaults used across the pipeline."""
        K = int(n)
        return cls(max(1, round(K / 2)), max(1, round(0.75 * K)), K, C, sigma, **kw)


@dataclass(frozen=True)
class WaveSource:
    """``f = sum_j a_j s_j`` windowed to ``Sigma_alpha``."""

    coefficients: np.ndarray
    alpha: MultiIndex
    D: float
    eta: float
    residual: float = 0.0
    norm: float = 0.0
    singular_gram: bool = False
    extras: dict = field(default_factory=dict)

    def report(self, volume: float | None = None) -> dict:
        return {
            "alpha": list(self.alpha.alpha),
            "residual": self.residual,
            "norm_f": self.norm,
            "volume": volume,
            "singular_gram": self.singular_gram,
        }


def _range_basis(G_KI: np.ndarray, rtol: float):
    """Orthonormal basis of ``range(G_KI)`` via the Gram matrix ``G^T G``."""
    gram = G_KI.T @ G_KI
    s, V = eigh(gram)
    top = s.max(initial=0.0)
    keep = s > rtol * top if top > 0 else np.zeros_like(s, dtype=bool)
    singular = bool(top > 0 and not keep.all())
    Q = (G_KI @ V[:, keep]) / np.sqrt(s[keep])
    return Q, singular


def control_functional(d, p, alpha: MultiIndex, params: ControlParams, f, D: float, op: WaveOperator | None = None) -> float:
    """``sup |(P_K W f - chi phi_1, W h)|`` over ``h in H_I``, ``||P_K W h|| <= 1``.

    With ``u = G_KN a`` and test waves spanning ``range(G_KI)`` this is the
    dual norm ``||Pi (u - e_1)||`` of the projection onto that range.
    """
    op = op or WaveOperator(d, p, params.K, D)
    G = op.matrix(alpha, params.I)
    a = np.asarray(f, dtype=float)
    if a.shape != (params.N,):
        raise ValueError(f"f must have length N={params.N}")
    Q, singular = _range_basis(G, params.gram_rtol)
    if singular:
        warnings.warn("test-wave Gram matrix is rank deficient; using truncated pseudo-inverse", SingularGram, stacklevel=2)
    r = G[:, : params.N] @ a
    r[0] -= 1.0
    return float(np.linalg.norm(Q.T @ r))


def _constrained_lsq(A, y, M, C, rtol=1e-12):
    """``argmin ||A a - y||`` subject to ``a^T M a <= C^2``.

    ``M`` (the source Gram matrix) is whitened through its eigenbasis, with
    directions below ``rtol * max eig`` dropped: those sources carry almost
    no energy and their waves are equally negligible.  In whitened
    coordinates ``c`` the norm is ``||c||`` and the Tikhonov family
    ``c(mu) = sum s_i b_i / (s_i^2 + mu) z_i`` (SVD of ``A W``) is bisected
    in ``mu`` until ``||c(mu)|| = C``.  At ``mu = 0`` the pseudo-inverse gives
    the smallest-norm minimizer.  Returns ``(a, mu)``.
    """
    ev, V = eigh(0.5 * (M + M.T))
    keep = ev > rtol * max(ev.max(initial=0.0), 1e-300)
    W = V[:, keep] / np.sqrt(ev[keep])
    U, sv, Zt = np.linalg.svd(A @ W, full_matrices=False)
    good = sv > 1e-13 * max(sv.max(initial=0.0), 1e-300)
    U, sv, Zt = U[:, good], sv[good], Zt[good]
    b = U.T @ y

    def coef(mu):
        return sv * b / (sv**2 + mu)

    mu = 0.0
    if np.linalg.norm(coef(0.0)) > C:
        lo, hi = 0.0, float(sv.max() * np.abs(b).max() / C)  # ||c(hi)|| <= C
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.linalg.norm(coef(mid)) > C:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * hi:
                break
        mu = hi  # feasible side
    a = W @ (Zt.T @ coef(mu))
    return a, mu


def minimize_control(d, p, alpha: MultiIndex, params: ControlParams, D: float, op: WaveOperator | None = None, strict: bool = True) -> WaveSource:
    """Minimizer of the control functional over ``H_N`` with ``||f|| <= C``.

    Since ``range(G_KN) ⊂ range(G_KI)`` the functional equals
    ``||G_KN a - Pi e_1||``; the source norm is ``a^T G_NN a``.
    Raises :class:`NotConverged` when the minimum exceeds ``sigma`` (unless
    ``strict`` is false).
    """
    op = op or WaveOperator(d, p, params.K, D)
    if not any(alpha.alpha):
        return WaveSource(np.zeros(params.N), alpha, float(D), p.eta)
    G = op.matrix(alpha, params.I)
    Q, singular = _range_basis(G, params.gram_rtol)
    if singular:
        warnings.warn("test-wave Gram matrix is rank deficient; using truncated pseudo-inverse", SingularGram, stacklevel=2)
    target = Q @ Q[0]  # Pi e_1
    A = G[:, : params.N]
    M = 0.5 * (A[: params.N] + A[: params.N].T)
    a, mu = _constrained_lsq(A, target, M, params.C, params.gram_rtol)
    r = A @ a
    r[0] -= 1.0
    residual = float(np.linalg.norm(Q.T @ r))  # the control functional at a
    norm = float(math.sqrt(max(a @ M @ a, 0.0)))
    src = WaveSource(a, alpha, float(D), p.eta, residual, norm, singular, {"mu": mu, "u": A @ a})
    if strict and residual > params.sigma:
        raise NotConverged(residual, params.sigma)
    return src


def approx_volume(d, p, alpha: MultiIndex, params: ControlParams, D: float, op: WaveOperator | None = None, strict: bool = True) -> float:
    """``vol(M_alpha) ~ vol(M) * ||P_K W f*||^2`` with ``vol(M) = phi_1^-2``."""
    if not any(alpha.alpha):
        return 0.0
    src = minimize_control(d, p, alpha, params, D, op, strict)
    return vol_from_phi1(d, rtol=None) * float(np.sum(src.extras["u"] ** 2))
