"""Config-driven experiment runner: generate, perturb, build the distance net,
reconstruct, grade; plus stability sweeps."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .distnet import DistanceNet, VolumeTable, build_distance_net, hausdorff_to_truth, save_net
from .gh import FiniteMetricSpace, gh_distance_bounds
from .reconstruct import ReconstructConfig, Reconstruction, export_reconstruction, reconstruct
from .spectral import SpectralDataset, compute_spectrum, compute_split_limit, perturb_dataset, save_dataset
from .topology import spectral_distance
from .wave import BoundaryPartition, ControlParams, partition_boundary, side_partition

SCHEMA_VERSION = 1
STAGES = ("generate", "perturb", "net", "reconstruct", "grade")
SWEEP_AXES = ("delta_inv", "noise", "eps_degeneration")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


@dataclass(frozen=True)
class ExperimentConfig:
    manifold: dict = field(default_factory=lambda: {"variant": "interval", "params": {"length": math.pi}})
    mesh_h: float = 0.1
    delta_inv: float = 400.0
    noise: dict = field(default_factory=lambda: {"eig_abs": 0.0, "trace_l2": 0.0})
    seed: int = 0
    eta: float = math.pi / 16
    partition: str = "arcs"  # arcs | sides
    D: float | None = None  # default: manifold diameter
    N: int | None = None  # control sizes default to K = #eigenvalues, I = 3K/4, N = K/2
    I: int | None = None
    K: int | None = None
    C: float = 10.0
    control_sigma: float = 0.5
    strict_control: bool = False
    net_sigma_factor: float = 0.5  # net threshold sigma = factor * eta^dim
    rho_factor: float = 3.0
    near_factor: float = 3.0
    thin_factor: float = 2.0
    gh_eps: float | None = None  # true eps-net spacing, default eta
    probe_factor: float = 0.25  # probe spacing in units of eta for d_H
    gh_starts: int = 64
    stages: tuple = STAGES
    out_dir: str = "runs"
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        self.validate()

    def validate(self) -> None:
        if self.version != SCHEMA_VERSION:
            raise ValueError(f"unsupported config version {self.version}")
        geo.manifold_from_dict(self.manifold)
        for name in ("mesh_h", "delta_inv", "eta", "C", "control_sigma", "net_sigma_factor", "rho_factor", "near_factor", "probe_factor"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.thin_factor < 0:
            raise ValueError("thin_factor must be nonnegative")
        for name in ("D", "gh_eps"):
            v = getattr(self, name)
            if v is not None and not (v > 0):
                raise ValueError(f"{name} must be positive")
        sizes = [self.N, self.I, self.K]
        if any(s is not None for s in sizes):
            if any(s is None for s in sizes):
                raise ValueError("give all of N, I, K or none")
            if not (1 <= self.N <= self.I <= self.K):
                raise ValueError(f"need 1 <= N <= I <= K, got N={self.N}, I={self.I}, K={self.K}")
        if self.partition not in ("arcs", "sides"):
            raise ValueError("partition must be 'arcs' or 'sides'")
        if self.partition == "sides" and self.manifold["variant"] != "rectangle":
            raise ValueError("side partition needs a rectangle")
        if any(n < 0 for n in (self.noise.get("eig_abs", 0), self.noise.get("trace_l2", 0))):
            raise ValueError("noise magnitudes must be nonnegative")
        bad = set(self.stages) - set(STAGES)
        if bad:
            raise ValueError(f"unknown stages {sorted(bad)}")
        if self.gh_starts < 1:
            raise ValueError("gh_starts must be positive")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["stages"] = list(self.stages)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @property
    def digest(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_json(Path(path).read_text())


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(cfg.to_json())


# --------------------------------------------------------------------------
# stages


def make_manifold(cfg: ExperimentConfig):
    return geo.manifold_from_dict(cfg.manifold)


def make_mesh(cfg: ExperimentConfig):
    return geo.build_boundary_mesh(make_manifold(cfg), cfg.mesh_h)


def make_partition(cfg: ExperimentConfig, mesh) -> BoundaryPartition:
    return side_partition(mesh, cfg.eta) if cfg.partition == "sides" else partition_boundary(mesh, cfg.eta)


def horizon(cfg: ExperimentConfig) -> float:
    return cfg.D if cfg.D is not None else geo.diameter(make_manifold(cfg))


def control_params(cfg: ExperimentConfig, n: int) -> ControlParams:
    if cfg.K is None:
        return ControlParams.for_size(n, C=cfg.C, sigma=cfg.control_sigma)
    if cfg.K > n:
        raise ValueError(f"K={cfg.K} exceeds the {n} eigenvalues below delta_inv")
    return ControlParams(cfg.N, cfg.I, cfg.K, cfg.C, cfg.control_sigma)


def stage_generate(cfg: ExperimentConfig) -> SpectralDataset:
    m = make_manifold(cfg)
    return compute_spectrum(m, cfg.delta_inv, geo.build_boundary_mesh(m, cfg.mesh_h))


def stage_perturb(cfg: ExperimentConfig, d: SpectralDataset) -> SpectralDataset:
    return perturb_dataset(d, cfg.noise, cfg.delta_inv, cfg.seed)


def stage_net(cfg: ExperimentConfig, d: SpectralDataset) -> tuple[DistanceNet, BoundaryPartition]:
    p = make_partition(cfg, d.mesh)
    params = control_params(cfg, len(d))
    D = horizon(cfg)
    dim = make_manifold(cfg).dim
    table = VolumeTable(d, p, params, D, strict=cfg.strict_control)
    net = build_distance_net(d, p, params, D, sigma=cfg.net_sigma_factor * cfg.eta**dim, table=table)
    return net, p


def stage_reconstruct(cfg: ExperimentConfig, net: DistanceNet, p: BoundaryPartition) -> Reconstruction:
    rc = ReconstructConfig(rho_factor=cfg.rho_factor, near_factor=cfg.near_factor, thin_factor=cfg.thin_factor)
    return reconstruct(net, p, rc)


def probe_points(cfg: ExperimentConfig) -> np.ndarray:
    m = make_manifold(cfg)
    return geo.sample_interior_net(m, cfg.probe_factor * cfg.eta).points


def true_net_space(cfg: ExperimentConfig) -> FiniteMetricSpace:
    m = make_manifold(cfg)
    pts = geo.sample_interior_net(m, cfg.gh_eps or cfg.eta).points
    return FiniteMetricSpace.from_points(pts, metric=lambda x: geo.pairwise_distances(m, x))


def stage_grade(cfg, d_exact, d_pert, net, p, rec) -> dict:
    out: dict = {}
    if d_exact is not None and d_pert is not None:
        # same truncation on both sides so that zero noise grades as zero
        out["spectral_distance"] = spectral_distance(perturb_dataset(d_exact, None, cfg.delta_inv), d_pert)
    if net is not None:
        out["d_H"] = hausdorff_to_truth(net, make_manifold(cfg), probe_points(cfg), p)
    if rec is not None:
        lo, hi = gh_distance_bounds(rec.space, true_net_space(cfg), starts=cfg.gh_starts)
        out["gh_lower"], out["gh_upper"] = lo, hi
    return out


def _run_stage(name, fn, *args):
    try:
        return fn(*args)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - surfaced with the stage name
        raise PipelineError(name, exc) from exc


def run_pipeline(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Run the configured stages; artifacts go to ``out_dir/<config digest>/``."""
    cfg.validate()
    tag = cfg.digest[:16]
    outdir = Path(cfg.out_dir) / tag
    arts: dict[str, str] = {}
    if write:
        outdir.mkdir(parents=True, exist_ok=True)
        save_config(cfg, outdir / "config.json")
    d = dp = net = p = rec = None
    if "generate" in cfg.stages:
        d = _run_stage("generate", stage_generate, cfg)
        if write:
            save_dataset(d, outdir / "dataset.txt")
            arts["dataset"] = "dataset.txt"
    if "perturb" in cfg.stages and d is not None:
        dp = _run_stage("perturb", stage_perturb, cfg, d)
        if write:
            save_dataset(dp, outdir / "perturbed.txt")
            arts["perturbed"] = "perturbed.txt"
    data = dp if dp is not None else d
    if "net" in cfg.stages and data is not None:
        net, p = _run_stage("net", stage_net, cfg, data)
        if write:
            save_net(net, outdir / "net.json")
            arts["net"] = "net.json"
    if "reconstruct" in cfg.stages and net is not None:
        rec = _run_stage("reconstruct", stage_reconstruct, cfg, net, p)
        if write:
            paths = export_reconstruction(rec, outdir / "Y")
            arts.update({f"Y_{k}": Path(v).name for k, v in paths.items()})
    report = {"config_digest": cfg.digest, "eta": cfg.eta, "delta_inv": cfg.delta_inv}
    if d is not None:
        report["n_eigenvalues"] = len(data)
    if net is not None:
        report["net_size"] = len(net)
        report["net_sigma"] = net.sigma
    if rec is not None:
        report["Y_size"] = rec.space.n
        report["edge_methods"] = rec.method_counts()
    if "grade" in cfg.stages:
        report.update(_run_stage("grade", stage_grade, cfg, d, dp, net, p, rec))
    report["artifacts"] = arts
    if write:
        (outdir / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True, default=_json_default))
    return report


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


# --------------------------------------------------------------------------
# sweeps


SWEEP_COLUMNS = ("value", "spectral_delta", "d_H", "gh_lower", "gh_upper", "split_distance", "error")


def _row_config(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "delta_inv":
        return cfg.replace(delta_inv=float(value))
    if axis == "noise":
        return cfg.replace(noise={"eig_abs": float(value), "trace_l2": float(value)})
    if axis == "eps_degeneration":
        if cfg.manifold["variant"] != "warped_annulus":
            raise ValueError("eps_degeneration needs a warped annulus")
        params = dict(cfg.manifold["params"], eps=float(value))
        return cfg.replace(manifold={"variant": "warped_annulus", "params": params})
    raise ValueError(f"axis must be one of {SWEEP_AXES}")


def stability_sweep(cfg: ExperimentConfig, axis: str, values, out_csv=None, write: bool = False) -> list[dict]:
    """One pipeline run per value; failures are recorded per row."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    vals = [float(v) for v in values]
    diffs = np.diff(vals)
    if len(vals) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("sweep values must be strictly monotone")
    rows = []
    for v in vals:
        row = {k: None for k in SWEEP_COLUMNS}
        row["value"] = v
        try:
            rc = _row_config(cfg, axis, v)
            if axis == "eps_degeneration":
                m = make_manifold(rc)
                mesh = geo.build_boundary_mesh(m, rc.mesh_h)
                data = compute_spectrum(m, rc.delta_inv, mesh)
                limit = compute_split_limit(m, rc.delta_inv, mesh)
                row["split_distance"] = spectral_distance(data, limit)
            rep = run_pipeline(rc, write=write)
            row["spectral_delta"] = rep.get("spectral_distance")
            row["d_H"] = rep.get("d_H")
            row["gh_lower"] = rep.get("gh_lower")
            row["gh_upper"] = rep.get("gh_upper")
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if r[k] is None else r[k]) for k in SWEEP_COLUMNS})
    return rows
