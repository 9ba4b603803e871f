"""Command-line entry point: ``roadbound simulate | track | eval | plot``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from importlib import resources
from typing import List, Optional

from . import evaluation, fileio, simulator
from .errors import ConfigError, DataError, RoadboundError
from .tracker import BoundaryTracker

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

log = logging.getLogger("roadbound")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def bundled_scenes() -> List[str]:
    folder = resources.files("roadbound") / "scenes"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def resolve_scene(name_or_path: str) -> simulator.SceneSpec:
    if os.path.exists(name_or_path):
        return fileio.load_scene(name_or_path)
    if name_or_path in bundled_scenes():
        ref = resources.files("roadbound") / "scenes" / f"{name_or_path}.json"
        with resources.as_file(ref) as p:
            return fileio.parse_scene(fileio.read_json(p), name_or_path)
    raise ConfigError(f"scene {name_or_path!r} is neither a file nor a bundled scene "
                      f"({', '.join(bundled_scenes())})")


def truth_path_for(output: str) -> str:
    stem = output[:-6] if output.endswith(".jsonl") else output
    return stem + ".truth.jsonl"


def _load_config(path: Optional[str], seed: Optional[int]) -> fileio.RunConfig:
    cfg = fileio.load_run_config(path) if path else fileio.RunConfig()
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
        cfg.tracker_config()
    return cfg


def cmd_simulate(args) -> int:
    spec = resolve_scene(args.config)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    frames, truth = simulator.generate(spec)
    truth_path = args.truth or truth_path_for(args.output)
    fileio.write_datagrams(args.output, frames)
    fileio.write_truth(truth_path, truth)
    print(f"wrote {len(frames)} frames to {args.output} (truth: {truth_path})")
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _load_config(args.config, args.seed)
    frames = fileio.read_datagrams(args.input, cfg.fov)
    if not frames:
        log.warning("%s holds no datagrams; writing an empty estimates file", args.input)
    tracker = BoundaryTracker(cfg.tracker_config())
    estimates = tracker.run(frames)
    fileio.write_estimates(args.output, estimates)
    both = sum(1 for e in estimates if e.left is not None and e.right is not None)
    print(f"tracked {len(estimates)} frames, both boundaries in {both}; wrote {args.output}")
    return EXIT_OK


def align(est_records, truths, est_path):
    """Estimates indexed like ``truths``; a truth frame without a record maps to ``None``."""
    index = {ft.timestamp: k for k, ft in enumerate(truths)}
    aligned = [None] * len(truths)
    last = -1
    for line, est in est_records:
        k = index.get(est.timestamp)
        if k is None:
            raise DataError(f"timestamp {est.timestamp!r} has no ground-truth frame", est_path, line)
        if k <= last:
            raise DataError(f"timestamp {est.timestamp!r} is out of order or repeated", est_path, line)
        aligned[k] = est
        last = k
    return aligned


def cmd_eval(args) -> int:
    truths = fileio.read_truth(args.truth)
    records = fileio.read_estimates_with_lines(args.estimates)
    aligned = align(records, truths, args.estimates)
    run = evaluation.evaluate_run(aligned, truths, skip_provisional=not args.include_provisional)
    print(evaluation.format_table(run.sides))
    if args.output:
        fileio.atomic_write_text(args.output, fileio.dumps(evaluation.metrics_record(run)) + "\n")
        figure = args.figure or os.path.splitext(args.output)[0] + "_mae.svg"
        _mae_figure(figure, run)
        print(f"wrote {args.output} and {figure}")
    elif args.figure:
        _mae_figure(args.figure, run)
        print(f"wrote {args.figure}")
    return EXIT_OK


def _mae_figure(path, run):
    from . import plotting
    plotting.plot_mae(path, {side: (run.times[side], m.frame_mae) for side, m in run.sides.items()})


def cmd_plot(args) -> int:
    from . import plotting
    cfg = _load_config(args.config, None)
    frames = fileio.read_datagrams(args.input, cfg.fov)
    estimates = fileio.read_estimates(args.estimates) if args.estimates else None
    truths = fileio.read_truth(args.truth) if args.truth else None
    n = len(frames)
    if estimates is not None and len(estimates) != n:
        raise DataError(f"{len(estimates)} estimate records for {n} datagrams", args.estimates)
    if truths is not None and len(truths) != n:
        raise DataError(f"{len(truths)} truth records for {n} datagrams", args.truth)
    if args.all:
        picks = list(range(n))
    else:
        if not 0 <= args.frame < n:
            raise UsageError(f"frame {args.frame} is out of range (0..{n - 1})")
        picks = [args.frame]
    for k in picks:
        z = frames[k][0]
        path = plotting.frame_filename(args.output, k) if args.all else args.output
        plotting.plot_frame(path, z, estimates[k] if estimates else None,
                            truths[k] if truths else None, cfg.fov, title=f"t = {z.timestamp:.2f} s")
    where = args.output if not args.all else f"{args.output}/frame_*.svg"
    print(f"wrote {len(picks)} figure(s) to {where}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="roadbound", description="Radar road-boundary estimation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="generate a synthetic drive")
    s.add_argument("--config", default="straight_road",
                   help="scene spec file or bundled scene name (default straight_road)")
    s.add_argument("--seed", type=int, help="override the scene seed")
    s.add_argument("--output", required=True, help="datagram file (JSON Lines)")
    s.add_argument("--truth", help="ground-truth sidecar (default <output>.truth.jsonl)")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="estimate boundaries for every datagram")
    t.add_argument("input", help="datagram file")
    t.add_argument("--config", help="run configuration (JSON)")
    t.add_argument("--seed", type=int, help="override the proposer seed")
    t.add_argument("--output", required=True, help="estimates file (JSON Lines)")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score estimates against ground truth")
    e.add_argument("estimates", help="estimates file")
    e.add_argument("truth", help="ground-truth file")
    e.add_argument("--output", help="metrics record (JSON); an MAE figure is written next to it")
    e.add_argument("--figure", help="MAE-vs-time SVG path")
    e.add_argument("--include-provisional", action="store_true",
                   help="also score frames flagged as warm-up")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("plot", help="render top-down views as SVG")
    g.add_argument("input", help="datagram file")
    g.add_argument("estimates", nargs="?", help="estimates file")
    g.add_argument("--truth", help="ground-truth file")
    g.add_argument("--config", help="run configuration (field of view)")
    which = g.add_mutually_exclusive_group(required=True)
    which.add_argument("--frame", type=int, help="frame index")
    which.add_argument("--all", action="store_true", help="every frame")
    g.add_argument("--output", required=True, help="SVG file, or a directory with --all")
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, RoadboundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
