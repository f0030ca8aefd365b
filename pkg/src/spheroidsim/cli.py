"""Command-line interface: run simulations, validate, re-render grids.

    spheroidsim simulate --config cfg.json [--preset NAME] [--seed S]
                         [--out DIR] [--workers N] [--no-images] [--full-scale]
    spheroidsim validate --suite {analytic,fd-cross-check,properties,all} [--quick]
    spheroidsim render --grid grid.csv --out image.ppm [--scale {linear,log}]

Each run writes, per snapshot and species, a count-grid CSV and
(optionally) a PPM heatmap into ``<outdir>/<preset>/``, plus a
``manifest.json`` recording the full configuration, derived physical
quantities, code version, seed, and diagnostics. Identical configs and
seeds reproduce byte-identical CSVs for any worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .config import FULL_N, SimConfig, load_config_file
from .errors import SimulationError
from .histogram import accumulate, grid_to_csv, render_heatmap, grid_from_csv
from .stepper import Engine, Species, engine_from_config


def run(config: SimConfig) -> int:
    """Execute one simulation and populate the output directory."""
    scene = config.build_scene()
    outdir = Path(config.output_dir) / config.scenario
    outdir.mkdir(parents=True, exist_ok=True)

    emit_e = config.conversion_rate_per_s > 0
    spec = config.grid_spec()
    engine = engine_from_config(scene, config)
    print(f"[run] preset={config.scenario} n={config.n_particles} "
          f"steps={config.n_steps()} workers={config.resolved_workers()} "
          f"seed={config.master_seed}")

    t0 = time.perf_counter()
    written: list[str] = []
    for snap in engine.snapshots():
        species_list = [Species.A, Species.E] if emit_e else [Species.A]
        for sp in species_list:
            positions_um = snap.positions_of(sp) * 1e6
            grid = accumulate(positions_um, spec, species=sp.name, time_s=snap.time_s)
            stem = f"{sp.name}_t{snap.time_s:.10g}"
            if config.emit_csv:
                path = outdir / f"{stem}.csv"
                path.write_text(grid_to_csv(grid), encoding="utf-8")
                written.append(path.name)
            if config.emit_ppm:
                ppm, sidecar = render_heatmap(grid)
                (outdir / f"{stem}.ppm").write_bytes(ppm)
                (outdir / f"{stem}.scale.txt").write_text(sidecar, encoding="utf-8")
                written.extend([f"{stem}.ppm", f"{stem}.scale.txt"])
        print(f"[run] t={snap.time_s:.10g} s: "
              f"A={snap.count(Species.A)} E={snap.count(Species.E)}")

    manifest = {
        "code_version": __version__,
        "config": config.as_dict(),
        "derived": config.derived(),
        "wall_clock_s": time.perf_counter() - t0,
        "outputs": written,
    }
    if config.emit_diagnostics:
        manifest["diagnostics"] = engine.diagnostics.as_dict()
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"[run] wrote {len(written)} files to {outdir}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.config is None and args.preset is None:
        print("simulate: need --config and/or --preset", file=sys.stderr)
        return 2
    config = load_config_file(args.config) if args.config else SimConfig()
    overrides = {}
    if args.preset is not None:
        overrides["scenario"] = args.preset
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.no_images:
        overrides["emit_ppm"] = False
    if args.full_scale:
        overrides["n_particles"] = FULL_N
    if overrides:
        config = SimConfig(**{**config.as_dict(), **overrides})
    return run(config)


def _cmd_validate(args: argparse.Namespace) -> int:
    from .validation import run_suite

    results = run_suite(args.suite, quick=args.quick)
    failed = [r for r in results if not r.passed]
    return 1 if failed else 0


def _cmd_render(args: argparse.Namespace) -> int:
    grid = grid_from_csv(Path(args.grid).read_text(encoding="utf-8"))
    ppm, sidecar = render_heatmap(grid, scale=args.scale,
                                  max_count=args.max_count)
    out = Path(args.out)
    out.write_bytes(ppm)
    out.with_suffix(".scale.txt").write_text(sidecar, encoding="utf-8")
    print(f"[render] wrote {out} ({grid.spec.nx}x{grid.spec.ny})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spheroidsim",
        description="Particle-based simulator for diffusion through porous spheroid receivers",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation")
    sim.add_argument("--config", help="JSON config file")
    sim.add_argument("--preset", help="scenario preset name "
                     "(transparent|one|two|four|ring-center|ring-outside)")
    sim.add_argument("--seed", type=int, help="override the master seed")
    sim.add_argument("--out", help="override the output directory")
    sim.add_argument("--workers", type=int, help="override the worker count")
    sim.add_argument("--no-images", action="store_true", help="skip PPM rendering")
    sim.add_argument("--full-scale", action="store_true",
                     help=f"run the full-size release of {FULL_N} molecules (slow)")
    sim.set_defaults(func=_cmd_simulate)

    val = sub.add_parser("validate", help="run oracle and property checks")
    val.add_argument("--suite", default="all",
                     choices=["analytic", "fd-cross-check", "properties", "all"])
    val.add_argument("--quick", action="store_true",
                     help="smoke-test scale (smaller N; not acceptance evidence)")
    val.set_defaults(func=_cmd_validate)

    ren = sub.add_parser("render", help="re-render a grid CSV as a PPM heatmap")
    ren.add_argument("--grid", required=True, help="grid CSV produced by simulate")
    ren.add_argument("--out", required=True, help="output PPM path")
    ren.add_argument("--scale", default="linear", choices=["linear", "log"])
    ren.add_argument("--max-count", type=float, default=None,
                     help="fix the top of the color scale (default: grid max)")
    ren.set_defaults(func=_cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
