"""Command-line experiment runner.

Commands: kernel-info, analyze, flow, simulate, montecarlo. Each takes
--config <path to a JSON document> and --out <directory>; artifacts embed
the full config and the tool version, so outputs are reproducible
byte-for-byte from (config, seed, version). Exit status: 0 success,
1 configuration error, 2 runtime failure (partial outputs are removed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    build_grid,
    build_kernel,
    build_sde_config,
    build_thresholds,
    parse_config,
    require_blocks,
)
from .dynamics import find_fixed_points, flow_X, morse_sum
from .geometry import DensityField, uniform_density
from .kernels import kernel_report
from .sde import monte_carlo, run as run_sde
from .seeds import mix64

VERSION_STRING = f"sidlab {__version__}"


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _csv_preamble(config: ExperimentConfig) -> list:
    compact = json.dumps(config.raw, sort_keys=True, separators=(",", ":"))
    return [f"version: {VERSION_STRING}", f"config: {compact}"]


def _write_csv(path: Path, preamble: list, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        for row in rows:
            fh.write(",".join(c if isinstance(c, str) else repr(float(c)) for c in row) + "\n")


class _ArtifactWriter:
    """Tracks written files so a failing command leaves nothing behind."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.paths: list = []

    def json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        path.write_text(_json_text(payload), encoding="utf-8")
        self.paths.append(path)
        return path

    def csv(self, name: str, preamble: list, rows) -> Path:
        path = self.out_dir / name
        _write_csv(path, preamble, rows)
        self.paths.append(path)
        return path

    def discard_all(self) -> None:
        for path in self.paths:
            try:
                path.unlink()
            except OSError:
                pass


def _cmd_kernel_info(config, writer, quiet):
    grid = build_grid(config)
    kernel = build_kernel(config, grid)
    report = kernel_report(kernel, grid)
    writer.json("kernel_report.json", {
        "version": VERSION_STRING,
        "config": config.raw,
        "report": report.to_dict(),
    })
    if not quiet:
        print(f"rho = {report.rho!r}, is_mercer = {report.is_mercer}")


def _cmd_analyze(config, writer, quiet):
    grid = build_grid(config)
    kernel = build_kernel(config, grid)
    s = config.solver
    records = find_fixed_points(
        kernel, grid,
        n_starts=s["n_starts"], seed=s["seed"], picard_damping=s["damping"],
        tol=s["tol"], dedupe_radius=s["dedupe_radius"], eps_deg=s["eps_deg"],
    )
    formats = config.output.get("formats", ("csv", "json"))
    entries = []
    for i, rec in enumerate(records):
        csv_path = None
        if "csv" in formats:
            name = f"fixed_point_{i:03d}.csv"
            rows = [["x", "value"] if grid.dim == 1 else ["x", "y", "value"]]
            rows += [list(pt) + [val] for pt, val in zip(grid.points, rec.density.values)]
            writer.csv(name, _csv_preamble(config), rows)
            csv_path = name
        entries.append({
            "energy": rec.energy,
            "residual": rec.residual,
            "index": rec.spectral.index,
            "degenerate": rec.spectral.degenerate,
            "verdict": rec.spectral.verdict,
            "symmetry_orbit": rec.symmetry_orbit,
            "density_csv_path": csv_path,
        })
    ms = morse_sum(records)
    writer.json("fixed_points.json", {
        "version": VERSION_STRING,
        "config": config.raw,
        "fixed_points": entries,
        "morse_sum": ms if ms is not None else "undefined",
    })
    print(f"morse_sum = {ms if ms is not None else 'undefined'}")
    if not quiet:
        for e in entries:
            print(f"  J = {e['energy']:+.6f}  residual = {e['residual']:.2e}  {e['verdict']}")


def _flow_start(config, grid) -> DensityField:
    blk = config.flow
    if blk.get("init", "random") == "uniform":
        return uniform_density(grid)
    rng = np.random.default_rng(mix64(blk.get("seed", 0), 0))
    from .dynamics import _random_start
    return DensityField(grid, _random_start(grid, rng))


def _cmd_flow(config, writer, quiet):
    grid = build_grid(config)
    kernel = build_kernel(config, grid)
    blk = config.flow
    trace = flow_X(_flow_start(config, grid), kernel, blk["step"], blk["t_end"])
    rows = [["t", "energy", "residual"]]
    rows += [[t, e, r] for t, e, r in zip(trace.times, trace.energies, trace.residuals)]
    writer.csv("flow_trace.csv", _csv_preamble(config), rows)
    term_rows = [["x", "value"] if grid.dim == 1 else ["x", "y", "value"]]
    term_rows += [list(pt) + [val] for pt, val in zip(grid.points, trace.terminal.values)]
    writer.csv("flow_terminal.csv", _csv_preamble(config), term_rows)
    if not quiet:
        print(f"flow: J {trace.energies[0]!r} -> {trace.energies[-1]!r}, "
              f"terminal residual {trace.residuals[-1]:.3e}")


def _default_record_times(sde_cfg):
    # 33 geometric snapshot times spanning warm-up to the end
    lo, hi = sde_cfg.t_warmup, sde_cfg.t_end
    times = np.geomspace(lo, hi, 33)
    times[0], times[-1] = lo, hi
    out = []
    for t in times:
        if not out or t > out[-1] + 1e-9:
            out.append(float(t))
    return tuple(out)


def _cmd_simulate(config, writer, quiet):
    sde_cfg = build_sde_config(config)
    if not sde_cfg.record_times:
        from dataclasses import replace
        sde_cfg = replace(sde_cfg, record_times=_default_record_times(sde_cfg))
    record = run_sde(sde_cfg)
    writer.csv("trajectory.csv", _csv_preamble(config), record.to_csv_rows())
    if not quiet:
        final = record.snapshots[-1] if record.snapshots else None
        if final is not None:
            print(f"simulate: t = {final.t!r}, dist_to_lambda = {final.dist_to_lambda!r}, "
                  f"mode1_abs = {final.mode1_abs!r}")


def _cmd_montecarlo(config, writer, quiet):
    sde_cfg = build_sde_config(config)
    blk = config.montecarlo
    report = monte_carlo(sde_cfg, blk["n_runs"], thresholds=build_thresholds(config),
                         workers=blk.get("workers", 1))
    payload = {"version": VERSION_STRING, "config": config.raw}
    payload.update(report.to_dict())
    writer.json("montecarlo.json", payload)
    if not quiet:
        for cls in payload["classes"]:
            print(f"  {cls['label']}: {cls['fraction']:.3f}")


_COMMANDS = {
    "kernel-info": _cmd_kernel_info,
    "analyze": _cmd_analyze,
    "flow": _cmd_flow,
    "simulate": _cmd_simulate,
    "montecarlo": _cmd_montecarlo,
}


def run_command(name: str, config: ExperimentConfig, out_dir: Path, quiet: bool = False):
    """Execute one command; on failure remove partial outputs and re-raise."""
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = _ArtifactWriter(out_dir)
    try:
        _COMMANDS[name](config, writer, quiet)
    except Exception:
        writer.discard_all()
        raise
    return writer.paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sidlab",
        description="Experiments with symmetric self-interacting diffusions on the torus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON configuration")
        p.add_argument("--out", default=None, help="output directory (default: output.directory)")
        p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"config: cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    try:
        config = parse_config(text)
        require_blocks(config, args.command)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 1

    out_dir = Path(args.out) if args.out else Path(config.output.get("directory", "."))
    try:
        run_command(args.command, config, out_dir, quiet=args.quiet)
    except ConfigError as exc:  # cross-field constraints surfaced by builders
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: report and signal exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
