"""Experiment driver: h-sweeps and p-sweeps with CSV/markdown tables.

Exit codes: 0 success, 2 configuration validation failure, 3 solver
residual failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .forms import StabilizationParams, assemble_system
from .mesh import (
    MeshError,
    build_face_topology,
    build_uniform_quad,
    build_uniform_tri,
    build_uniform_tet,
    read_mesh,
    refine_red,
)
from .solve import SolverError, solve_saddle
from .spaces import build_dofmap
from .verify import ErrorReport, case_2d_poly, case_3d_sine, error_energy, error_l2

PROBLEMS = ("elas2d_poly", "elas3d_sine")
MESHES = ("tri-uniform", "quad-uniform", "tet-uniform")

# named presets for the flux/penalty columns of the convergence studies
FLUX_ALIASES = {
    "c11=hinv,c22=0": dict(alpha1=-1.0, alpha2=0.0, beta1=0.0, beta2=0.0, eta=0.0),
    "c11=hinv,c22=1": dict(alpha1=-1.0, alpha2=0.0, beta1=0.0, beta2=0.0),
    "c11=hinv,c22=h": dict(alpha1=-1.0, alpha2=0.0, beta1=1.0, beta2=0.0),
    "c11=1,c22=1": dict(alpha1=0.0, alpha2=0.0, beta1=0.0, beta2=0.0),
    "c11=1,c22=h": dict(alpha1=0.0, alpha2=0.0, beta1=1.0, beta2=0.0),
    "c11=p,c22=1": dict(alpha1=0.0, alpha2=-1.0, beta1=0.0, beta2=0.0),
    "c11=p,c22=pinv": dict(alpha1=0.0, alpha2=-1.0, beta1=0.0, beta2=1.0),
    "c11=1,c22=pinv": dict(alpha1=0.0, alpha2=0.0, beta1=0.0, beta2=1.0),
}


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    problem: str = "elas2d_poly"
    mesh: str = "tri-uniform"
    levels: list = field(default_factory=lambda: [2, 4, 8, 16])
    k: int = 1
    l: int = 1
    k_list: list = None          # set for p-sweeps
    stab: StabilizationParams = None
    fmt: str = "csv"
    out: str = None
    max_level_3d: int = 8
    seed: int = 0

    @property
    def is_p_sweep(self) -> bool:
        return self.k_list is not None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mixeddg",
        description="Mixed DG elasticity convergence studies",
    )
    p.add_argument("--problem", default="elas2d_poly",
                   help="elas2d_poly or elas3d_sine")
    p.add_argument("--mesh", default="tri-uniform",
                   help="tri-uniform, quad-uniform, tet-uniform, or file:<path>")
    p.add_argument("--levels", default="4",
                   help="level count (n = 2, 4, ..., 2^count per axis), "
                        "or an explicit comma-separated n list; for file meshes "
                        "the number of red refinements")
    p.add_argument("--k", default="1",
                   help="displacement degree; a comma list runs a p-sweep with l=k")
    p.add_argument("--l", default=None, help="stress degree (default: k)")
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--alpha1", type=float, default=-1.0)
    p.add_argument("--alpha2", type=float, default=0.0)
    p.add_argument("--beta1", type=float, default=1.0)
    p.add_argument("--beta2", type=float, default=0.0)
    p.add_argument("--flux", default=None, choices=sorted(FLUX_ALIASES),
                   help="named stabilization preset (overrides exponent flags)")
    p.add_argument("--allow-out-of-theory", action="store_true",
                   help="permit exponents outside the analyzed ranges")
    p.add_argument("--format", dest="fmt", default="csv", choices=("csv", "md"))
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--max-level-3d", type=int, default=8,
                   help="cap on n per axis for tetrahedral sweeps")
    p.add_argument("--seed", type=int, default=0,
                   help="seed recorded for reproducibility of randomized tests")
    return p


def config_from_args(args) -> RunConfig:
    if args.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {args.problem!r}; pick from {PROBLEMS}")
    mesh = args.mesh
    if mesh not in MESHES and not mesh.startswith("file:"):
        raise ConfigError(
            f"unknown mesh {mesh!r}; pick from {MESHES} or file:<path>")

    ks = [int(s) for s in str(args.k).split(",")]
    if any(k < 0 for k in ks):
        raise ConfigError("degrees must be >= 0")
    k_list = None
    if len(ks) > 1:
        if args.l is not None and [int(s) for s in args.l.split(",")] != ks:
            raise ConfigError("p-sweeps run with l = k; omit --l")
        k_list, k, l = ks, ks[0], ks[0]
    else:
        k = ks[0]
        l = k if args.l is None else int(args.l)
    if abs(k - l) > 1:
        raise ConfigError(f"|k - l| = {abs(k - l)} > 1 violates the space inclusions")

    stab_kwargs = dict(zeta=args.zeta, eta=args.eta, alpha1=args.alpha1,
                       alpha2=args.alpha2, beta1=args.beta1, beta2=args.beta2)
    if args.flux is not None:
        stab_kwargs.update(FLUX_ALIASES[args.flux])
    stab_kwargs["allow_out_of_theory"] = args.allow_out_of_theory
    try:
        stab = StabilizationParams(**stab_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    levels = _parse_levels(args.levels, mesh, p_sweep=k_list is not None)
    if args.problem == "elas3d_sine" and mesh != "tet-uniform":
        raise ConfigError("elas3d_sine runs on tet-uniform meshes")
    if args.problem == "elas2d_poly" and mesh == "tet-uniform":
        raise ConfigError("elas2d_poly needs a 2d mesh")
    if mesh == "tet-uniform":
        cap = args.max_level_3d
        if any(n > cap for n in levels):
            raise ConfigError(
                f"3d level n > {cap}; raise --max-level-3d to allow it")

    return RunConfig(
        problem=args.problem, mesh=mesh, levels=levels,
        k=k, l=l, k_list=k_list, stab=stab,
        fmt=args.fmt, out=args.out,
        max_level_3d=args.max_level_3d, seed=args.seed,
    )


def _parse_levels(spec: str, mesh: str, p_sweep: bool = False) -> list:
    try:
        parts = [int(s) for s in str(spec).split(",")]
    except ValueError:
        raise ConfigError(f"bad --levels {spec!r}") from None
    if len(parts) == 1 and not p_sweep:
        # a bare integer is a level count: n = 2, 4, ..., 2^count
        count = parts[0]
        if count < 1:
            raise ConfigError("--levels must be >= 1")
        if mesh.startswith("file:"):
            return list(range(count))
        return [2 ** (i + 1) for i in range(count)]
    if any(n < 0 for n in parts):
        raise ConfigError("explicit levels must be nonnegative")
    if p_sweep and len(parts) != 1:
        raise ConfigError("p-sweeps need exactly one mesh level")
    return parts


def _case_for(config: RunConfig):
    return case_3d_sine() if config.problem == "elas3d_sine" else case_2d_poly()


def _meshes_for(config: RunConfig, case):
    builders = {
        "tri-uniform": build_uniform_tri,
        "quad-uniform": build_uniform_quad,
        "tet-uniform": build_uniform_tet,
    }
    if config.mesh in builders:
        for n in config.levels:
            if n < 1:
                raise ConfigError("structured levels need n >= 1")
            yield str(n), builders[config.mesh](n, case.box)
        return
    path = Path(config.mesh[len("file:"):])
    try:
        mesh = read_mesh(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read mesh file: {exc}") from exc
    except MeshError as exc:
        raise ConfigError(f"bad mesh file {path}: {exc}") from exc
    if mesh.dim != case.dim:
        raise ConfigError("mesh dimension does not match the problem")
    import numpy as np
    box = np.asarray(case.box, dtype=float)
    if not np.allclose(mesh.domain_box, box, atol=1e-9):
        raise ConfigError(
            f"mesh covers {mesh.domain_box.tolist()}, problem domain is {box.tolist()}")
    refinements = sorted(config.levels)
    current, done = mesh, 0
    for r in refinements:
        while done < r:
            current = refine_red(current)
            done += 1
        yield f"r{r}", current


def _solve_level(mesh, case, k, l, stab):
    topo = build_face_topology(mesh)
    dofmap = build_dofmap(mesh, k, l)
    system = assemble_system(mesh, topo, dofmap, case.material, stab, case.f)
    coeffs, _report = solve_saddle(system)
    e_l2 = error_l2(mesh, dofmap, coeffs, case)
    e_en = error_energy(mesh, topo, dofmap, coeffs, coeffs, case, stab)
    return dofmap, e_l2, e_en


def run_h_sweep(config: RunConfig):
    """One solve per level; table rows (level, h, dofs, err_l2, order, err_energy, order)."""
    case = _case_for(config)
    report = ErrorReport()
    for level_id, mesh in _meshes_for(config, case):
        try:
            dofmap, e_l2, e_en = _solve_level(mesh, case, config.k, config.l, config.stab)
        except SolverError as exc:
            raise SolverError(f"level {level_id}: {exc}") from exc
        report.add_level(level_id, mesh.h_max, dofmap.total_dofs, e_l2, e_en)
    rows = _report_rows(report)
    return report, _render(rows, "h", config.fmt)


def run_p_sweep(config: RunConfig):
    """Fixed mesh, k = l sweep; errors scaled by the expected p powers.

    Rows hold p^(k+1) * err_l2 and p^s * err_energy with s = k + 1/2 for
    C22 = O(1) and s = k for decaying or absent C22, p = min(k,l) + 1.
    """
    case = _case_for(config)
    if len(config.levels) != 1:
        raise ConfigError("p-sweeps need exactly one mesh level")
    meshes = list(_meshes_for(config, case))
    _, mesh = meshes[0]
    rows = []
    for k in config.k_list:
        try:
            dofmap, e_l2, e_en = _solve_level(mesh, case, k, k, config.stab)
        except SolverError as exc:
            raise SolverError(f"k = {k}: {exc}") from exc
        p = k + 1
        s = k + 0.5 if (config.stab.beta2 == 0.0 and not config.stab.c22_zero) else k
        rows.append({
            "level": str(k),
            "x": float(k),
            "dofs": dofmap.total_dofs,
            "err_l2": p ** (k + 1) * e_l2,
            "order_l2": None,
            "err_energy": p ** s * e_en,
            "order_energy": None,
        })
    return rows, _render(rows, "k", config.fmt)


def _report_rows(report: ErrorReport):
    o_l2 = report.orders_l2()
    o_en = report.orders_energy()
    rows = []
    for i in range(len(report.h)):
        rows.append({
            "level": report.level_ids[i],
            "x": report.h[i],
            "dofs": report.dofs[i],
            "err_l2": report.err_l2[i],
            "order_l2": o_l2[i - 1] if i > 0 else None,
            "err_energy": report.err_energy[i],
            "order_energy": o_en[i - 1] if i > 0 else None,
        })
    return rows


def _fmt_order(v):
    import math
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.2f}"


def _render(rows, x_name: str, fmt: str) -> str:
    header = ["level", x_name, "dofs", "err_l2", "order", "err_energy", "order"]
    table = [
        [
            r["level"],
            f"{r['x']:.6e}",
            str(r["dofs"]),
            f"{r['err_l2']:.6e}",
            _fmt_order(r["order_l2"]),
            f"{r['err_energy']:.6e}",
            _fmt_order(r["order_energy"]),
        ]
        for r in rows
    ]
    if fmt == "csv":
        lines = [",".join(header)] + [",".join(row) for row in table]
        return "\n".join(lines) + "\n"
    widths = [max(len(h), *(len(row[i]) for row in table)) if table else len(h)
              for i, h in enumerate(header)]
    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    lines = [line(header), line(["-" * w for w in widths])]
    lines += [line(row) for row in table]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if config.is_p_sweep:
            _, text = run_p_sweep(config)
        else:
            _, text = run_h_sweep(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    if config.out:
        Path(config.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
