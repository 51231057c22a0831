"""``shearflow-ldp <subcommand> --config path [--seed N] [--out dir]``.

Exit status: 0 on success, 1 when a criterion fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from . import harness
from .config import OUT_ENV, ConfigError, load_config

RUN_STAGES = ("field", "eigen", "rate", "mc")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shearflow-ldp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="master seed; overrides the config")
    common.add_argument("--out", help=f"output root; overrides the config and ${OUT_ENV}")
    common.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUN_STAGES:
        s = sub.add_parser(name, parents=[common], help=f"run the {name} stage")
        s.add_argument("--force", action="store_true", help="ignore cached results")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance criteria")
    v.add_argument("--criteria", type=lambda s: [int(t) for t in s.split(",")],
                   help="comma-separated subset, e.g. 1,3,9")
    sub.add_parser("report", parents=[common], help="render figures next to the CSV artifacts")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {"seed": args.seed, "out": args.out, "workers": args.workers}
    if getattr(args, "criteria", None):
        overrides["verify"] = {"criteria": args.criteria}
    try:
        if args.config and "verify" in overrides:
            base = json.loads(open(args.config).read())
            overrides["verify"] = {**base.get("verify", {}), **overrides["verify"]}
        cfg = load_config(args.config, overrides)
    except (OSError, ConfigError) as exc:
        print(f"shearflow-ldp: {exc}", file=sys.stderr)
        return 2
    root = cfg.output_root()

    if args.command in RUN_STAGES:
        man = harness.run_experiment(cfg, [args.command], force=args.force)
        for s in man.stages:
            print(f"{s.name:7s} {s.status:7s} {s.seconds:8.2f}s {len(s.artifacts)} file(s) {s.error}")
        print(f"manifest: {root / 'manifest.json'}")
        return 0 if man.complete else 1

    if args.command == "verify":
        rep = harness.verify(cfg, root if root.exists() else None, root / "verify")
        for r in rep["results"]:
            print(r.line())
        print(f"report: {root / 'verify' / 'report.json'}")
        return 0 if rep["passed"] else 1

    from .plotting import render_report

    figs = render_report(root)
    if not figs:
        print(f"shearflow-ldp: no artifacts under {root}; run a stage first", file=sys.stderr)
        return 2
    for f in figs:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
