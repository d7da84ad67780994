"""Command-line front end.

Exit status is 0 on success, 1 for invalid input and 2 when a solver fails.
Every number in a report is printed with 17 significant digits.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ambient import Scaffold, check_scaffold_conditions, load_scaffold
from .dec import DecOperators
from .deform import (
    DeformationState,
    NormalField,
    largest_converged_step,
    linearize_at_zero,
    moduli_basis,
    moduli_step,
    newton_solve,
    residual_at,
)
from .errors import MinlagError, SolverError, ValidationError
from .flow import continuation_solve, load_section
from .generators import SHAPES, generate_mesh
from .hodge import neumann_harmonic_basis
from .mesh import BoundaryData, SimplicialPatch, betti_numbers, boundary_data, load_mesh, save_mesh


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


@dataclass
class RunConfig:
    subcommand: str
    mesh: Path | None = None
    scaffold: Path | None = None
    section: Path | None = None
    out: Path | None = None
    out_dir: Path | None = None
    shape: str = "disk"
    resolution: int = 16
    degree: int = 1
    theta: float = 0.0
    step: float = 0.01
    steps: int = 5
    fd_samples: int = 0
    tol: float = 1e-10
    max_iter: int = 50
    seed: int = 0
    quiet: bool = False
    lines: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.tol > 0 or self.max_iter < 1:
            raise ValidationError("tolerances must be positive", module="cli", operation="run")
        for name in ("mesh", "scaffold", "section", "out", "out_dir"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, Path(value).resolve())

    def emit(self, line: str = ""):
        self.lines.append(line)
        if not self.quiet:
            print(line)


def _require(cfg: RunConfig, *names: str):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(cfg, n) is None]
    if missing:
        raise ValidationError(f"missing {', '.join(missing)}", module="cli", operation=cfg.subcommand)


def _validated_scaffold(cfg: RunConfig, patch: SimplicialPatch, bdata: BoundaryData) -> Scaffold:
    """Load the scaffold and check the three scaffold conditions at the retracted boundary."""
    w = load_scaffold(cfg.scaffold)
    idx = bdata.vertex_indices
    q, ok = w.project_many(patch.vertices[idx], strict=False)
    positions = patch.vertices.copy()
    positions[idx[ok]] = q[ok]
    report = check_scaffold_conditions(w, patch, bdata, positions=positions)
    if not ok.all():
        report.notes.append(f"{int((~ok).sum())} boundary vertices could not be projected")
    cfg.emit(f"scaffold: {w.describe()}")
    cfg.emit(report.format())
    if not (report.passed and ok.all()):
        raise ValidationError("scaffold conditions fail: " + ", ".join(report.failures() or ["projection"]),
                              module="cli", operation="validate_scaffold")
    return w


def _state_report(cfg: RunConfig, state: DeformationState):
    om, al = state.norms
    cfg.emit(f"iterations        {state.iterations}")
    cfg.emit(f"theta             {fmt(state.theta)}")
    cfg.emit(f"residual omega    {fmt(om)}")
    cfg.emit(f"residual alpha    {fmt(al)}")
    if state.scaffold is not None:
        idx = state.bdata.vertex_indices
        cfg.emit(f"boundary |F| max  {fmt(np.abs(state.scaffold.values(state.positions[idx])).max())}")


# -- subcommands ---------------------------------------------------------------------
def cmd_generate(cfg: RunConfig) -> int:
    _require(cfg, "out")
    patch = generate_mesh(cfg.shape, cfg.resolution)
    save_mesh(patch, cfg.out)
    b0, b1 = betti_numbers(patch)
    cfg.emit(f"shape {cfg.shape} resolution {cfg.resolution}")
    cfg.emit(f"vertices {patch.num_vertices} simplices {patch.num_faces(patch.n)} "
             f"boundary_faces {len(patch.boundary_face_indices)}")
    cfg.emit(f"betti {b0} {b1}")
    return 0


def cmd_harmonic(cfg: RunConfig) -> int:
    _require(cfg, "mesh")
    patch = load_mesh(cfg.mesh)
    ops = DecOperators(patch)
    basis, info = neumann_harmonic_basis(patch, cfg.degree, ops, return_info=True)
    cfg.emit(f"dual {ops.dual_type}")
    cfg.emit(f"degree {cfg.degree}")
    cfg.emit(f"dimension {info.dimension}")
    cfg.emit(f"betti_b1 {betti_numbers(patch)[1]}")
    cfg.emit(f"spectral_gap {fmt(info.gap)}")
    if cfg.out is not None:
        cols = ",".join(f"basis_{i}" for i in range(len(basis)))
        lines = [f"# degree={cfg.degree} patch={patch.digest} dimension={len(basis)}",
                 "simplex_index" + ("," + cols if cols else "")]
        for j in range(patch.num_faces(cfg.degree)):
            vals = "".join("," + fmt(b.values[j]) for b in basis)
            lines.append(f"{j}{vals}")
        cfg.out.write_text("\n".join(lines) + "\n", encoding="ascii")
    return 0


def cmd_check_slag(cfg: RunConfig) -> int:
    _require(cfg, "mesh")
    from .ambient import alpha_integrals

    patch = load_mesh(cfg.mesh)
    om, al = residual_at(patch, patch.vertices, cfg.theta)
    total = np.sum(alpha_integrals(patch.vertices, patch.simplices, 0.0))
    cfg.emit(f"theta             {fmt(cfg.theta)}")
    cfg.emit(f"residual omega    {fmt(om.norm_inf())}")
    cfg.emit(f"residual alpha    {fmt(al.norm_inf())}")
    cfg.emit(f"best-fit theta    {fmt(np.angle(total))}")
    if cfg.fd_samples:
        bdata = boundary_data(patch)
        w = _validated_scaffold(cfg, patch, bdata) if cfg.scaffold else None
        lin = linearize_at_zero(patch, bdata, w, cfg.theta)
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        h = 1e-5
        for _ in range(cfg.fd_samples):
            v = NormalField.from_coefficients(lin.space, rng.standard_normal(lin.space.size))
            a = float(rng.standard_normal())
            plus = DeformationState.build(patch, bdata, w, v * h, cfg.theta + h * a)
            minus = DeformationState.build(patch, bdata, w, v * (-h), cfg.theta - h * a)
            fd = np.concatenate([plus.residual_omega.values - minus.residual_omega.values,
                                 plus.residual_alpha.values - minus.residual_alpha.values]) / (2 * h)
            s, t = lin.apply(v, a)
            exact = np.concatenate([s.values, t.values])
            worst = max(worst, float(np.abs(fd - exact).max() / np.abs(exact).max()))
        cfg.emit(f"linearization fd samples {cfg.fd_samples} max relative error {fmt(worst)}")
    return 0


def cmd_solve(cfg: RunConfig) -> int:
    _require(cfg, "mesh", "scaffold", "out")
    patch = load_mesh(cfg.mesh)
    bdata = boundary_data(patch)
    w = _validated_scaffold(cfg, patch, bdata)
    state = newton_solve(patch, bdata, w, tol=cfg.tol, max_iter=cfg.max_iter, check_scaffold=False)
    _state_report(cfg, state)
    save_mesh(patch, cfg.out, state.positions)
    return 0


def cmd_moduli(cfg: RunConfig) -> int:
    _require(cfg, "mesh", "scaffold", "out_dir")
    patch = load_mesh(cfg.mesh)
    bdata = boundary_data(patch)
    w = _validated_scaffold(cfg, patch, bdata)
    basis = moduli_basis(patch, bdata, w)
    cfg.emit(f"moduli dimension {len(basis)}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for i, direction in enumerate(basis):
        try:
            state = moduli_step(patch, bdata, w, direction, cfg.step, tol=cfg.tol,
                                max_iter=cfg.max_iter, kernel=basis)
        except SolverError:
            best, _ = largest_converged_step(patch, bdata, w, direction, cfg.step / 2, kernel=basis,
                                             tol=cfg.tol, max_iter=cfg.max_iter)
            cfg.emit(f"direction {i} step {fmt(cfg.step)} failed; largest converged step {fmt(best)}")
            raise
        cfg.emit(f"direction {i} step {fmt(cfg.step)}")
        _state_report(cfg, state)
        save_mesh(patch, cfg.out_dir / f"moduli_{i}.slmesh", state.positions)
    return 0


def cmd_scaffold_flow(cfg: RunConfig) -> int:
    _require(cfg, "mesh", "scaffold", "section", "out")
    patch = load_mesh(cfg.mesh)
    bdata = boundary_data(patch)
    w = _validated_scaffold(cfg, patch, bdata)
    section = load_section(cfg.section)
    cfg.emit(f"section {section.name} steps {cfg.steps}")
    state = continuation_solve(patch, bdata, w, section, steps=cfg.steps, tol=cfg.tol,
                               max_iter=cfg.max_iter)
    _state_report(cfg, state)
    save_mesh(patch, cfg.out, state.positions)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "harmonic": cmd_harmonic,
    "check-slag": cmd_check_slag,
    "solve": cmd_solve,
    "moduli": cmd_moduli,
    "scaffold-flow": cmd_scaffold_flow,
}


def run(cfg: RunConfig) -> int:
    cfg.emit(f"# minlag {cfg.subcommand} seed={cfg.seed} tol={fmt(cfg.tol)}")
    return COMMANDS[cfg.subcommand](cfg)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--tol", type=float, default=1e-10, help="residual tolerance")
    common.add_argument("--quiet", action="store_true", help="suppress the report")

    parser = argparse.ArgumentParser(prog="minlag", parents=[common],
                                     description="Minimal Lagrangian patches with boundary on a scaffold.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a test mesh")
    p.add_argument("--shape", choices=SHAPES, default="disk")
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--out", required=True)

    p = sub.add_parser("harmonic", parents=[common], help="Neumann harmonic basis")
    p.add_argument("--mesh", required=True)
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("check-slag", parents=[common], help="residual of an undeformed patch")
    p.add_argument("--mesh", required=True)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--scaffold")
    p.add_argument("--fd-samples", type=int, default=0,
                   help="random finite-difference checks of the linearization")

    p = sub.add_parser("solve", parents=[common], help="Newton solve on a scaffold")
    p.add_argument("--mesh", required=True)
    p.add_argument("--scaffold", required=True)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--out", required=True)

    p = sub.add_parser("moduli", parents=[common], help="step along each moduli direction")
    p.add_argument("--mesh", required=True)
    p.add_argument("--scaffold", required=True)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("scaffold-flow", parents=[common], help="continuation onto a flowed scaffold")
    p.add_argument("--mesh", required=True)
    p.add_argument("--scaffold", required=True)
    p.add_argument("--section", required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = {k: v for k, v in vars(args).items() if v is not None}
    try:
        cfg = RunConfig(**opts)
        return run(cfg)
    except MinlagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
