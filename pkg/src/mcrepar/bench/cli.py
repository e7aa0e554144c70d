"""``mcrepar <command> --config <path> [--seed N] [--out DIR] [--no-plots]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, DivergenceError, NonFiniteError
from . import svg
from .commands import COMMAND_FUNCS
from .config import COMMANDS, load_config

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcrepar", description="Monte-Carlo reparameterization sweeps")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip SVG output")
    return p


def run(command, config_path, seed=None, out=".", plots=True) -> list[Path]:
    cfg = load_config(config_path, command)
    if seed is not None:
        cfg.values["seed"] = seed
    reports, plots_out = COMMAND_FUNCS[command](cfg)
    meta = [f"mcrepar {__version__}", f"command: {command}", f"seed: {cfg.seed}"]
    meta += [f"config: {line}" for line in cfg.echo()]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rep in reports.items():
        rep.metadata = meta
        written.append(rep.write(out / name))
    if plots:
        for name, text in plots_out.items():
            svg.write_svg(out / name, text)
            written.append(out / name)
    return written


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        written = run(args.command, args.config, args.seed, args.out, not args.no_plots)
    except ConfigError as exc:
        print(f"mcrepar: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NonFiniteError) as exc:
        where = ""
        if isinstance(exc, DivergenceError) and exc.epoch is not None:
            where = f" (epoch {exc.epoch}, batch {exc.batch})"
        print(f"mcrepar: numeric divergence{where}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
