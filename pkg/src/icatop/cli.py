"""Batch experiment runner.

``icatop run`` executes one optimization and writes report.json,
history.csv, density.pgm, and (with --monitor-normB) normB.csv into the
output directory.  ``icatop compare`` tabulates several reports of the
same problem side by side with percentage deltas against the first.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .nonlinear import Strategy
from .optimizer import OptimizerConfig, RunHistory, optimize
from .timing import CATEGORIES

HISTORY_COLUMNS = [
    "iteration", "objective", "newton_iters", "factorizations", "ica_iters",
    "fallbacks", "gp_norm_inf", "penalty", "volume", "max_normB",
] + list(CATEGORIES)

COUNT_ROWS = ["Final F", "Outer iterations", "Newton iterations",
              "Factorizations", "Fallbacks"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icatop",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one optimization")
    run.add_argument("--config", type=Path,
                     help="flat key=value file; flags override it")
    run.add_argument("--problem",
                     choices=["cantilever", "slender", "inverter", "gripper"])
    run.add_argument("--mesh", help="WxH element counts, e.g. 60x15")
    run.add_argument("--strategy", default=None,
                     choices=[m.value for m in Strategy])
    run.add_argument("--budget", type=int, default=None)
    run.add_argument("--converge", type=float, default=None,
                     help="stop on the projected-gradient criterion")
    run.add_argument("--move-limit", type=float, default=None)
    run.add_argument("--filter-kernel", choices=["cone", "gaussian"],
                     default=None)
    run.add_argument("--filter-radius", type=float, default=None,
                     help="radius in element lengths (default per problem)")
    run.add_argument("--monitor-normB", action="store_true", default=None)
    run.add_argument("--linear", action="store_true", default=None)
    run.add_argument("--out", type=Path, default=Path("."))

    comp = sub.add_parser("compare", help="tabulate several run reports")
    comp.add_argument("reports", nargs="+", type=Path)
    return parser


def read_config_file(path: Path) -> dict:
    """Flat key=value format; keys match the run flags."""
    opts = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        opts[key.replace("-", "_")] = value
    return opts


_CONFIG_CASTS = {
    "budget": int,
    "converge": float,
    "move_limit": float,
    "filter_radius": float,
    "monitor_normB": lambda s: s.lower() in ("1", "true", "yes"),
    "linear": lambda s: s.lower() in ("1", "true", "yes"),
}


def _merge_options(args) -> dict:
    opts = {}
    if args.config is not None:
        raw = read_config_file(args.config)
        for key, value in raw.items():
            caster = _CONFIG_CASTS.get(key, str)
            opts[key] = caster(value)
    for key in ("problem", "mesh", "strategy", "budget", "converge",
                "move_limit", "filter_kernel", "filter_radius",
                "monitor_normB", "linear"):
        value = getattr(args, key)
        if value is not None:
            opts[key] = value
    return opts


def _parse_mesh(text):
    try:
        nx, ny = text.lower().split("x")
        return int(nx), int(ny)
    except ValueError as exc:
        raise ValueError(f"mesh must look like 60x15, got {text!r}") from exc


def run_command(args) -> int:
    try:
        opts = _merge_options(args)
        if "problem" not in opts:
            raise ValueError("a problem must be given (--problem or config)")
        mesh = _parse_mesh(opts["mesh"]) if "mesh" in opts \
            else bench.DESK_MESH[opts["problem"]]
        problem = bench.build(opts["problem"], mesh=mesh,
                              filter_radius=opts.get("filter_radius"))
        if opts.get("linear"):
            problem = bench.linear_mode(problem)
        config = OptimizerConfig(
            strategy=Strategy.from_name(opts.get("strategy", "N")),
            budget=opts.get("budget", 100 if "converge" not in opts else None),
            converge_tol=opts.get("converge"),
            monitor_normB=bool(opts.get("monitor_normB", False)),
        )
        if "move_limit" in opts:
            config.move_limit = opts["move_limit"]
        if "filter_kernel" in opts:
            config.filter_kernel = opts["filter_kernel"]
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    history = optimize(problem, config)

    write_report(out / "report.json", problem, config, history)
    write_history_csv(out / "history.csv", history)
    write_density_pgm(out / "density.pgm", history.rho_phys,
                      problem.mesh.nx, problem.mesh.ny, config.rho_min)
    if config.monitor_normB:
        write_normB_csv(out / "normB.csv", history)

    if history.aborted:
        print("solver aborted; partial artifacts written", file=sys.stderr)
        return 1
    print(f"{problem.name} {config.strategy.value}: "
          f"F = {history.final_objective:.6g} "
          f"after {history.iterations} outer iterations")
    return 0


def write_report(path: Path, problem, config: OptimizerConfig,
                 history: RunHistory) -> None:
    report = {
        "problem": problem.name,
        "mesh": [problem.mesh.nx, problem.mesh.ny],
        "strategy": config.strategy.value,
        "linear": problem.linear,
        "mode": "converge" if config.converge_tol is not None else "budget",
        "budget": config.budget,
        "converge_tol": config.converge_tol,
        "move_limit": config.move_limit,
        "filter_kernel": config.filter_kernel,
        "filter_radius_elements": problem.filter_radius_elements,
        "final_objective": history.final_objective if history.objective else None,
        "outer_iterations": history.iterations,
        "newton_iterations": history.total("newton_iters"),
        "factorizations": history.total("factorizations"),
        "ica_iterations": history.total("ica_iters"),
        "fallbacks": history.total("fallbacks"),
        "final_gp_norm": history.gp_norm[-1] if history.gp_norm else None,
        "final_volume": history.volume[-1] if history.volume else None,
        "final_penalty": history.penalty[-1] if history.penalty else None,
        "converged": history.converged,
        "aborted": history.aborted,
        "timings": {name: history.timing_table.get(name, 0.0)
                    for name in CATEGORIES},
    }
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_history_csv(path: Path, history: RunHistory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for i in range(history.iterations):
            times = history.times[i]
            writer.writerow([
                i + 1,
                repr(history.objective[i]),
                history.newton_iters[i],
                history.factorizations[i],
                history.ica_iters[i],
                history.fallbacks[i],
                repr(history.gp_norm[i]),
                history.penalty[i],
                repr(history.volume[i]),
                "" if history.max_normB[i] is None else repr(history.max_normB[i]),
            ] + [f"{times.get(name, 0.0):.6f}" for name in CATEGORIES])


def write_density_pgm(path: Path, rho_phys, nx: int, ny: int,
                      rho_min: float) -> None:
    """Binary P5 image, solid material black, rows from the domain top."""
    rho = np.asarray(rho_phys, dtype=float).reshape(ny, nx)
    shade = np.rint(255.0 * (1.0 - (rho - rho_min) / (1.0 - rho_min)))
    pixels = np.clip(shade, 0, 255).astype(np.uint8)[::-1, :]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def write_normB_csv(path: Path, history: RunHistory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "max_normB"])
        for i, value in enumerate(history.max_normB, 1):
            writer.writerow([i, "" if value is None else repr(value)])


def compare_command(args) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            return 2
    if len(reports) < 2:
        print("error: compare needs at least two reports", file=sys.stderr)
        return 2
    keys = {(r["problem"], tuple(r["mesh"])) for r in reports}
    if len(keys) != 1:
        print(f"error: reports mix problems/meshes: {sorted(keys)}",
              file=sys.stderr)
        return 2
    print(format_comparison(reports))
    return 0


def format_comparison(reports) -> str:
    """Side-by-side counts and timings, with % deltas versus the first."""
    base = reports[0]
    names = [r["strategy"] for r in reports]
    width = max(22, *(len(n) + 10 for n in names))
    lines = []
    problem = f"{base['problem']} {base['mesh'][0]}x{base['mesh'][1]}"
    lines.append(problem)
    lines.append("-" * (24 + width * len(reports)))
    header = f"{'':24}" + "".join(f"{n:>{width}}" for n in names)
    lines.append(header)

    def row(label, values, fmt="{:.6g}", base_value=None):
        cells = []
        for i, val in enumerate(values):
            text = fmt.format(val) if val is not None else "-"
            if i > 0 and base_value not in (None, 0) and val is not None:
                text += f" ({100.0 * (val - base_value) / base_value:+.1f}%)"
            cells.append(f"{text:>{width}}")
        return f"{label:24}" + "".join(cells)

    getters = {
        "Final F": lambda r: r["final_objective"],
        "Outer iterations": lambda r: r["outer_iterations"],
        "Newton iterations": lambda r: r["newton_iterations"],
        "Factorizations": lambda r: r["factorizations"],
        "Fallbacks": lambda r: r["fallbacks"],
    }
    for label in COUNT_ROWS:
        values = [getters[label](r) for r in reports]
        lines.append(row(label, values, base_value=getters[label](base)))
    lines.append("CPU time (s)")
    for name in CATEGORIES:
        values = [r["timings"].get(name) for r in reports]
        lines.append(row("  " + name, values, fmt="{:.3f}",
                         base_value=base["timings"].get(name)))
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_command(args)
    return compare_command(args)


if __name__ == "__main__":
    sys.exit(main())
