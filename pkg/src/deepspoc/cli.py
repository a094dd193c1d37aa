"""Command-line entry point.

Exit codes: 0 success, 1 numeric abort, 2 usage or configuration error.
"""

import argparse
import json
import logging
import sys
import warnings

from .config import PRESETS, load_preset
from .errors import ConfigurationError, DeepSPoCError, InvalidParameterError

EXIT_OK, EXIT_ABORT, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("deepspoc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _run_flags(p, baseline=False):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="named preset (see list-presets)")
    src.add_argument("--config", help="JSON config file, or the manifest.json of an earlier run")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--particles", type=int, help="particles per batch (K); for baselines the system size")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="artifact directory (default: $DEEPSPOC_OUT/<preset>_seed<seed>)")
    if baseline:
        p.add_argument("--baseline", choices=["poc"], default="poc")
    else:
        p.add_argument("--baseline", choices=["poc"], help="run the reference particle solver instead")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser():
    ap = _Parser(prog="deepspoc", description="Particle/density-model solver for mean-field SDEs.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _run_flags(sub.add_parser("run", help="train a density model"))
    _run_flags(sub.add_parser("baseline", help="run the interacting-particle reference"), baseline=True)
    d = sub.add_parser("diagnose", help="recompute metrics from a finished run")
    d.add_argument("artifact_dir")
    e = sub.add_parser("export-plots", help="write figures for a run")
    e.add_argument("artifact_dir")
    e.add_argument("--out")
    sub.add_parser("list-presets", help="print the available presets")
    return ap


def _load(args):
    from .runner import apply_overrides, config_from_file

    cfg = load_preset(args.preset) if args.preset else config_from_file(args.config)
    return apply_overrides(cfg, args.seed, args.epochs, args.particles, args.workers, args.out)


def _progress(rep):
    log.info("epoch %d loss %.6g lr %.3g (%.2fs)", rep["epoch"], rep["loss"], rep["lr"], rep["seconds"])


def main(argv=None):
    args = build_parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format="%(message)s")
    from . import runner

    try:
        if args.command == "list-presets":
            for name in sorted(PRESETS):
                p = PRESETS[name]
                print(f"{name:12s} {p['problem']['kind']:8s} d={p['problem'].get('dim', 1)} "
                      f"model={p['model']['kind']} epochs={p['training']['epochs']}")
            return EXIT_OK
        if args.command in ("run", "baseline"):
            cfg = _load(args)
            if args.command == "baseline" or args.baseline:
                out = runner.run_baseline(cfg, args.baseline or "poc")
            else:
                out = runner.run(cfg, progress=None if quiet else _progress)
            print(out)
            return EXIT_OK
        if args.command == "diagnose":
            for epoch, name, value, _ in runner.diagnose(args.artifact_dir):
                print(json.dumps({"epoch": epoch, "metric": name, "value": value}))
            return EXIT_OK
        if args.command == "export-plots":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                written, _ = runner_plots(args.artifact_dir, args.out)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            for path in written.values():
                print(path)
            return EXIT_OK
    except (ConfigurationError, InvalidParameterError, FileNotFoundError) as exc:
        print(f"deepspoc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DeepSPoCError as exc:
        print(f"deepspoc: aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_USAGE


def runner_plots(artifact_dir, out=None):
    from .plots import export_plots

    return export_plots(artifact_dir, out)


if __name__ == "__main__":
    sys.exit(main())
