"""Benchmark driver: run configurations, frequency x subdomain sweeps, and
CSV emission.

Configs are plain ``key = value`` text files ('#' starts a comment); every
field of RunConfig can appear, and parse(render(cfg)) round-trips exactly.
Frequencies are in Hz at this interface (omega = 2 pi f internally).  A sweep
cell whose estimated DOF count per subdomain falls below ``dofs_floor`` is
skipped and rendered as "-", as is any cell that fails to converge.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .decomposition import assemble_local_matrices, decompose
from .dispersion import dispersion_curve
from .errors import StructuralError
from .helmholtz import HelmholtzProblem, PointSource, assemble_helmholtz
from .linalg import KrylovConfig, krylov_solve
from .maxwell import (
    AspPreconditioner,
    MaxwellProblem,
    OneLevelAdditiveSchwarz,
    TwoLevelAdditiveSchwarz,
    assemble_maxwell,
    build_edge_decomposition,
    build_free_cs,
    build_geneo_complement_cs,
    channel_field,
)
from .mesh import build_rect_mesh, refine_uniform
from .schwarz import (
    EigenSelection,
    OneLevelOras,
    TwoLevel,
    build_deltageneo_cs,
    build_dtn_cs,
    build_grid_cs,
    build_hgeneo_cs,
)
from .velocity import VelocityModel, load_raster_model

__all__ = ["RunConfig", "SolveReport", "run_case", "run_sweep", "sweep_to_csv",
           "emit_dispersion", "parse_config", "render_config"]

HELMHOLTZ_METHODS = ("one-level", "grid", "dtn", "hgeneo", "deltageneo")
MAXWELL_METHODS = ("asp", "one-level", "free-cs", "geneo-complement")


@dataclass(frozen=True)
class RunConfig:
    problem: str = "helmholtz"      # helmholtz | maxwell
    model: str = "constant"         # constant | wedge | raster:<path> | channel
    c: float = 1.0                  # base speed (km/s) / base eps_r
    contrast: float = 1.0           # wedge or channel contrast
    f: float = 1.0                  # Hz
    ppwl: float = 10.0
    order: int = 2
    width: float = 1.0              # km
    height: float = 1.0
    source_x: float | None = None   # defaults to (width/2, 0.9*height)
    source_y: float | None = None
    n_subdomains: int = 4
    partition: str = "auto"         # auto | strips | grid:PXxPY
    overlap_mode: str = "minimum"   # minimum | coarse
    overlap_layers: int = 1
    preconditioner: str = "one-level"
    two_level_mode: str = "hybrid"  # hybrid | additive
    coarse_refine: int = 1          # refinement levels between coarse and fine mesh
    lambda_min: float = 0.5
    m_max: int = 20
    dtn_threshold: float | None = None  # None: the local wavenumber k_j
    tau: float = 10.0
    alpha: float = 1e-2             # maxwell shift
    maxwell_cells: int = 24
    n_channels: int = 4
    channel_width: float = 0.04
    random_source: bool = False
    tol: float = 1e-6
    max_iter: int = 500
    restart: int | None = None
    seed: int = 0
    dofs_floor: int = 200

    def __post_init__(self):
        if self.problem not in ("helmholtz", "maxwell"):
            raise StructuralError(f"unknown problem {self.problem!r}")
        if self.f <= 0 or self.ppwl <= 0:
            raise StructuralError("f and ppwl must be positive")


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    residual: float
    setup_time: float
    solve_time: float
    n_dofs: int
    coarse_dim: int
    config: RunConfig

    def __post_init__(self):
        if self.iterations > self.config.max_iter:
            raise StructuralError("iteration count exceeds max_iter")


# ----------------------------------------------------------------- config io

_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if raw == "none":
        return None
    f = _FIELDS[name]
    t = f.type
    if "bool" in t:
        if raw not in ("true", "false"):
            raise StructuralError(f"bad boolean for {name}: {raw!r}")
        return raw == "true"
    if "int" in t and "float" not in t:
        return int(raw)
    if "float" in t:
        return float(raw)
    return raw


def _render_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse the key = value config grammar; unknown keys are rejected."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise StructuralError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _FIELDS:
            raise StructuralError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in _FIELDS:
            raise StructuralError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
    return RunConfig(**values)


def render_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_render_value(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------- problem setup

def _build_model(cfg: RunConfig) -> VelocityModel:
    if cfg.model == "constant":
        return VelocityModel.constant(cfg.c)
    if cfg.model == "wedge":
        s = cfg.c * np.array([1.0, np.sqrt(cfg.contrast), cfg.contrast])
        return VelocityModel.layered_wedge(
            s, [(0.35 * cfg.height, 0.05 * cfg.height / cfg.width),
                (0.70 * cfg.height, -0.04 * cfg.height / cfg.width)])
    if cfg.model.startswith("raster:"):
        return load_raster_model(cfg.model.split(":", 1)[1], cfg.width, cfg.height)
    raise StructuralError(f"unknown velocity model {cfg.model!r}")


def _helm_mesh_cells(cfg: RunConfig, model: VelocityModel):
    omega = 2 * np.pi * cfg.f
    h = 2 * np.pi * model.min_speed() / (omega * cfg.ppwl)  # ppwl at max wavenumber
    scale = 2**cfg.coarse_refine
    nx_c = max(2, int(np.ceil(cfg.width / (h * scale))))
    ny_c = max(2, int(np.ceil(cfg.height / (h * scale))))
    return nx_c, ny_c


def estimate_dofs(cfg: RunConfig) -> int:
    if cfg.problem == "maxwell":
        n = cfg.maxwell_cells
        return 3 * n * n  # edge count scale
    model = _build_model(cfg)
    nx_c, ny_c = _helm_mesh_cells(cfg, model)
    nx, ny = nx_c * 2**cfg.coarse_refine, ny_c * 2**cfg.coarse_refine
    nv = (nx + 1) * (ny + 1)
    if cfg.order == 1:
        return nv
    return (2 * nx + 1) * (2 * ny + 1)


def _partition_args(cfg: RunConfig):
    if cfg.partition == "strips":
        return "strips", None
    if cfg.partition.startswith("grid:"):
        px, py = cfg.partition.split(":", 1)[1].lower().split("x")
        return "grid", (int(px), int(py))
    if cfg.partition == "auto":
        N = cfg.n_subdomains
        aspect = cfg.width / cfg.height
        best = (N, 1)
        best_err = abs(np.log(N / 1 / aspect))
        for px in range(1, N + 1):
            if N % px:
                continue
            py = N // px
            err = abs(np.log((px / py) / aspect))
            if err < best_err:
                best, best_err = (px, py), err
        if 1 in best:
            return "strips", None
        return "grid", best
    raise StructuralError(f"unknown partition {cfg.partition!r}")


def _run_helmholtz(cfg: RunConfig) -> SolveReport:
    t0 = time.perf_counter()
    model = _build_model(cfg)
    nx_c, ny_c = _helm_mesh_cells(cfg, model)
    coarse = build_rect_mesh(cfg.width, cfg.height, nx_c, ny_c, order=cfg.order)
    mesh = refine_uniform(coarse, cfg.coarse_refine)
    sx = cfg.source_x if cfg.source_x is not None else cfg.width / 2
    sy = cfg.source_y if cfg.source_y is not None else 0.9 * cfg.height
    prob = HelmholtzProblem(
        mesh=mesh, model=model, omega=2 * np.pi * cfg.f,
        source=PointSource(sx, sy),
    )
    system = assemble_helmholtz(prob)
    shape, grid = _partition_args(cfg)
    dec = decompose(mesh, cfg.n_subdomains, shape=shape, grid=grid,
                    layers=cfg.overlap_layers, mode=cfg.overlap_mode,
                    coarse_levels=cfg.coarse_refine)
    assemble_local_matrices(dec, prob, system)
    one = OneLevelOras(dec)
    method = cfg.preconditioner
    coarse_dim = 0
    if method == "one-level":
        op = one.apply
    else:
        if method == "grid":
            cs = build_grid_cs(prob, coarse, system)
        elif method == "dtn":
            cs = build_dtn_cs(dec, system,
                              EigenSelection("re_below", cfg.dtn_threshold, cfg.m_max))
        elif method == "hgeneo":
            cs = build_hgeneo_cs(dec, system,
                                 EigenSelection("abs_largest", None, cfg.m_max))
        elif method == "deltageneo":
            cs = build_deltageneo_cs(dec, prob, system,
                                     EigenSelection("re_above", cfg.lambda_min, cfg.m_max))
        else:
            raise StructuralError(f"unknown helmholtz preconditioner {method!r}")
        coarse_dim = cs.n0
        op = TwoLevel(one, cs, system.A, mode=cfg.two_level_mode).apply
    setup = time.perf_counter() - t0

    t1 = time.perf_counter()
    kcfg = KrylovConfig(tol=cfg.tol, max_iter=cfg.max_iter, restart=cfg.restart)
    _, rep = krylov_solve(system.A, op, system.b, kcfg)
    solve = time.perf_counter() - t1
    return SolveReport(rep.iterations, rep.converged, rep.final_residual,
                       setup, solve, system.A.nrows, coarse_dim, cfg)


def _run_maxwell(cfg: RunConfig) -> SolveReport:
    t0 = time.perf_counter()
    mesh = build_rect_mesh(cfg.width, cfg.height, cfg.maxwell_cells, cfg.maxwell_cells)
    if cfg.model == "channel":
        eps = channel_field(mesh, 1.0 / cfg.contrast, n_channels=cfg.n_channels,
                            base=cfg.c, width_frac=cfg.channel_width)
    elif cfg.model == "constant":
        eps = cfg.c
    else:
        raise StructuralError(f"unknown maxwell model {cfg.model!r}")
    source = None
    if cfg.random_source:
        probe = assemble_maxwell(MaxwellProblem(mesh=mesh, mu_r=1.0, eps_r=eps,
                                                alpha=cfg.alpha))
        source = np.random.default_rng(cfg.seed).standard_normal(probe.n_dofs)
    prob = MaxwellProblem(mesh=mesh, mu_r=1.0, eps_r=eps, alpha=cfg.alpha,
                          source=source)
    system = assemble_maxwell(prob)
    method = cfg.preconditioner
    coarse_dim = 0
    if method == "asp":
        op = AspPreconditioner(system).apply
    else:
        shape, grid = _partition_args(cfg)
        dec = build_edge_decomposition(prob, system, cfg.n_subdomains,
                                       shape=shape, grid=grid,
                                       layers=cfg.overlap_layers)
        one = OneLevelAdditiveSchwarz(dec)
        if method == "one-level":
            op = one.apply
        elif method in ("free-cs", "geneo-complement"):
            free = build_free_cs(dec, system)
            cs = free if method == "free-cs" else build_geneo_complement_cs(
                dec, system, tau=cfg.tau, m_max=cfg.m_max, free_cs=free)
            coarse_dim = cs.n0
            op = TwoLevelAdditiveSchwarz(one, cs, system.A,
                                         mode=cfg.two_level_mode).apply
        else:
            raise StructuralError(f"unknown maxwell preconditioner {method!r}")
    setup = time.perf_counter() - t0

    t1 = time.perf_counter()
    kcfg = KrylovConfig(tol=cfg.tol, max_iter=cfg.max_iter, variant="cg")
    _, rep = krylov_solve(system.A, op, system.b, kcfg)
    solve = time.perf_counter() - t1
    return SolveReport(rep.iterations, rep.converged, rep.final_residual,
                       setup, solve, system.n_dofs, coarse_dim, cfg)


def run_case(cfg: RunConfig) -> SolveReport:
    """One deterministic benchmark run; non-convergence is reported, not raised."""
    if cfg.problem == "maxwell":
        return _run_maxwell(cfg)
    return _run_helmholtz(cfg)


# ----------------------------------------------------------------- sweeps

SWEEP_COLUMNS = ("f", "dofs", "N", "method", "iterations", "coarse_dim",
                 "converged", "setup_time", "solve_time")


def _sweep_cell(base: RunConfig, f, N, method) -> dict:
    cfg = replace(base, f=float(f), n_subdomains=int(N), preconditioner=method)
    est = estimate_dofs(cfg)
    if est / max(N, 1) < cfg.dofs_floor:
        return {"f": f, "dofs": est, "N": N, "method": method,
                "iterations": "-", "coarse_dim": "-", "converged": "skipped",
                "setup_time": "", "solve_time": ""}
    try:
        rep = run_case(cfg)
    except Exception as exc:  # isolate the cell, keep sweeping
        return {"f": f, "dofs": est, "N": N, "method": method,
                "iterations": "-", "coarse_dim": "-",
                "converged": f"error:{type(exc).__name__}",
                "setup_time": "", "solve_time": ""}
    return {
        "f": f, "dofs": rep.n_dofs, "N": N, "method": method,
        "iterations": rep.iterations if rep.converged else "-",
        "coarse_dim": rep.coarse_dim,
        "converged": rep.converged,
        "setup_time": f"{rep.setup_time:.3f}",
        "solve_time": f"{rep.solve_time:.3f}",
    }


def run_sweep(base: RunConfig, f_values, n_values, methods, workers: int = 1) -> list:
    """Cartesian sweep; per-cell failures are isolated and rendered '-'.
    Cells are independent, so they may run on a thread pool; row order is
    always the deterministic (f, N, method) product order."""
    cells = [(f, N, m) for f in f_values for N in n_values for m in methods]
    if workers <= 1:
        return [_sweep_cell(base, *cell) for cell in cells]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: _sweep_cell(base, *c), cells))


def sweep_to_csv(rows, path=None) -> str:
    """RFC-4180-style CSV with a mandatory header; timing columns last."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def emit_dispersion(specs, path=None, samples: int = 50) -> str:
    """CSV of dispersion curves: scheme, p, 1/G, normalized velocity."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["scheme", "p", "inv_G", "velocity"])
    for spec in specs:
        for inv_g, vel in dispersion_curve(spec, samples=samples):
            writer.writerow([spec.scheme, spec.p, f"{inv_g:.10g}", f"{vel:.12g}"])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
