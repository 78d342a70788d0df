"""Command-line entry point.

    telemloop simulate --config ref.cfg [--seed N] [--out DIR] [--quiet]
    telemloop oracle --config ref.cfg [--seed N] [--out DIR] [--quiet]
    telemloop sketch-bench [--config ref.cfg] [--records N] [--seed N] [--out DIR] [--quiet]

Exit codes: 0 success, 2 invalid configuration, 1 any other failure.
Output files are written under temporary names and renamed only once the
whole command has succeeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile

from .bench import format_report, sketch_bench
from .config import RunConfig, load_config
from .errors import ConfigError
from .oracle import run_oracle
from .sim import simulate, trace_text
from .sketch.universal import SketchGeometry


class _Outputs:
    """Collects finished files in a staging area and publishes them together."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.staged: list[tuple[str, str]] = []

    def write(self, name: str, text: str) -> None:
        os.makedirs(self.out_dir, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out_dir)
        self.staged.append((tmp, os.path.join(self.out_dir, name)))
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    def publish(self) -> list[str]:
        for tmp, final in self.staged:
            os.chmod(tmp, 0o644)
            os.replace(tmp, final)
        return [final for _, final in self.staged]

    def discard(self) -> None:
        for tmp, _ in self.staged:
            if os.path.exists(tmp):
                os.remove(tmp)


def _manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n"


def _resolve(args, required: bool = True) -> RunConfig:
    if args.config is None:
        if required:
            raise ConfigError("--config is required")
        cfg = RunConfig()
    else:
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out=args.out)
    return cfg


def cmd_simulate(args, outputs_factory=_Outputs) -> int:
    cfg = _resolve(args)
    outputs = outputs_factory(cfg.out)
    try:
        result = simulate(cfg)
        outputs.write("trace.csv", trace_text(result.rows))
        outputs.write("manifest.json", _manifest_text(result.manifest))
        written = outputs.publish()
    except BaseException:
        outputs.discard()
        raise
    if not args.quiet:
        m = result.manifest
        print(f"simulated {m['epochs']} epochs, {m['sync_rounds']} sync rounds, {m['trace_rows']} trace rows")
        if "mean_imbalance" in m:
            print(f"mean imbalance adaptive {m['mean_imbalance']:.3f} static {m['mean_imbalance_static']:.3f}")
        if "cache_hit_rate" in m:
            print(f"cache hit rate refreshed {m['cache_hit_rate']:.3f} frozen {m['cache_hit_rate_frozen']:.3f}")
        for path in written:
            print(f"wrote {path}")
    return 0


def cmd_oracle(args, outputs_factory=_Outputs) -> int:
    cfg = _resolve(args)
    outputs = outputs_factory(cfg.out)
    try:
        rows, manifest = run_oracle(cfg)
        outputs.write("oracle.csv", trace_text(rows))
        outputs.write("oracle_manifest.json", _manifest_text(manifest))
        written = outputs.publish()
    except BaseException:
        outputs.discard()
        raise
    if not args.quiet:
        print(f"oracle replayed {manifest['epochs']} epochs, {manifest['trace_rows']} trace rows")
        for path in written:
            print(f"wrote {path}")
    return 0


def cmd_sketch_bench(args, outputs_factory=_Outputs) -> int:
    cfg = _resolve(args, required=False)
    geom = SketchGeometry(cfg.rows, cfg.width, cfg.levels, 1, cfg.capacity, cfg.sketch_seed())
    dims = cfg.dims if args.config is not None else None
    records = args.records if args.records is not None else (cfg.records if args.config is not None else 100_000)
    results = sketch_bench(geom, dims, records, seed=cfg.seed, threshold=cfg.hh_threshold)
    report = format_report(results)
    outputs = outputs_factory(cfg.out)
    try:
        outputs.write("bench.json", _manifest_text({"records": records, "results": [r.as_dict() for r in results]}))
        outputs.write("bench.txt", report + "\n")
        written = outputs.publish()
    except BaseException:
        outputs.discard()
        raise
    if not args.quiet:
        print(report)
        for path in written:
            print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="telemloop", description="In-network telemetry loop simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("simulate", cmd_simulate, "run the closed-loop experiment and write trace.csv + manifest.json"),
        ("oracle", cmd_oracle, "replay the same stream with exact counting and write oracle.csv"),
        ("sketch-bench", cmd_sketch_bench, "compare merged and per-dimension sketches at equal memory"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--quiet", action="store_true")
        if name == "sketch-bench":
            p.add_argument("--records", type=int, metavar="N", help="stream length (default: config records or 100000)")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        where = ""
        if exc.block:
            where = f"[{exc.block}]" + (f" {exc.field}" if exc.field else "") + ": "
        print(f"config error: {where}{exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - surface any failure as a one-line diagnostic
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
