"""Command-line entry point.

    gelfand run interval-pi-2 --eta 0.2 --output runs/a
    gelfand forward cfg.json --volume.eps1 0.05
    gelfand budget --eta 0.5 --geometry.n 2
    gelfand compare runs/a/report.json runs/b/report.json

Any ``--key value`` pair after the positional arguments overrides the
config; dotted keys reach into sections. Values are parsed as JSON when
they parse, otherwise kept as strings.
"""

from __future__ import annotations

import argparse
import sys

from . import jsonio
from .budget import GeometryConstants, cascade, format_table
from .config import (EXIT_CONFIG, EXIT_OK, ConfigError, apply_overrides, load_config_source, preset_names,
                     validate)
from .pipeline import SchemaMismatch, compare, format_comparison, run, run_stage


def _split_overrides(extra: list[str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(extra):
        flag = extra[i]
        if not flag.startswith("--") or len(flag) == 2:
            raise ConfigError(flag, "expected --key value")
        key = flag[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(key, "missing value")
            value = extra[i + 1]
            i += 2
        pairs.append((key, value))
    return pairs


def _config_error(exc: ConfigError) -> int:
    print(jsonio.dumps({"status": "error", "code": EXIT_CONFIG, "stage": "config",
                        "field": exc.field, "message": exc.message}, indent=None), file=sys.stderr)
    return EXIT_CONFIG


def _load(source: str | None, extra: list[str]):
    raw = load_config_source(source) if source else {}
    return validate(apply_overrides(raw, _split_overrides(extra)))


def _cmd_stage(name: str, args, extra) -> int:
    try:
        cfg = _load(args.config, extra)
    except ConfigError as exc:
        return _config_error(exc)
    if name == "run":
        return run(cfg)
    return run_stage(cfg, name)


def _cmd_budget(args, extra) -> int:
    try:
        pairs = _split_overrides(extra)
        eta = 0.5
        geometry: dict = {}
        for key, value in pairs:
            parsed = apply_overrides({}, [(key, value)])
            if key == "eta":
                eta = parsed["eta"]
            elif key.startswith("geometry."):
                geometry.update(parsed["geometry"])
            else:
                raise ConfigError(key, "budget accepts --eta and --geometry.<constant>")
        if args.config:
            raw = load_config_source(args.config)
            geometry = {**raw.get("geometry", {}), **geometry}
            if not any(k == "eta" for k, _ in pairs) and "eta" in raw:
                eta = raw["eta"]
        try:
            gc = GeometryConstants.from_dict(geometry)
        except (TypeError, ValueError) as exc:
            raise ConfigError("geometry", str(exc)) from None
        if not isinstance(eta, (int, float)) or not 0 < eta < 1:
            raise ConfigError("eta", "must lie in (0, 1)")
    except ConfigError as exc:
        return _config_error(exc)
    ps = cascade(float(eta), gc)
    print(format_table(ps))
    if ps.flagged:
        print(f"out of double range: {', '.join(ps.underflow)}")
    return EXIT_OK


def _cmd_compare(args, extra) -> int:
    if extra:
        return _config_error(ConfigError(extra[0], "compare takes no overrides"))
    try:
        a = jsonio.read_json(args.report_a)
        b = jsonio.read_json(args.report_b)
    except (OSError, ValueError) as exc:
        return _config_error(ConfigError("report", str(exc)))
    try:
        result = compare(a, b)
    except SchemaMismatch as exc:
        return _config_error(ConfigError("schema", str(exc)))
    print(jsonio.dumps(result) if args.json else format_comparison(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gelfand", description=__doc__.split("\n\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("forward", "build exact boundary spectral data"),
                       ("perturb", "apply a seeded delta-perturbation"),
                       ("reconstruct", "compute volumes and the reconstructed point set"),
                       ("evaluate", "score the reconstruction against ground truth"),
                       ("run", "all four stages in order")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", nargs="?", help="config file or preset name")
    p = sub.add_parser("budget", help="print the parameter cascade")
    p.add_argument("config", nargs="?", help="optional config file or preset supplying geometry")
    p = sub.add_parser("compare", help="diff two evaluation reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub.add_parser("presets", help="list shipped presets")
    return parser


STAGE_COMMANDS = ("forward", "perturb", "reconstruct", "evaluate", "run")


def _split_positional(rest: list[str]) -> tuple[str | None, list[str]]:
    """Optional leading config argument, then override pairs."""
    if rest and not rest[0].startswith("--"):
        return rest[0], rest[1:]
    return None, rest


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if argv and argv[0] in STAGE_COMMANDS + ("budget",) and not {"-h", "--help"} & set(argv):
        config, extra = _split_positional(argv[1:])
        args = argparse.Namespace(command=argv[0], config=config)
        if args.command == "budget":
            return _cmd_budget(args, extra)
        return _cmd_stage(args.command, args, extra)
    args = parser.parse_args(argv)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    if args.command == "compare":
        return _cmd_compare(args, [])
    parser.print_help()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
