"""Command-line interface.

Subcommands:
    generate    write a token stream (newline-delimited) from a config
    experiment  run the full benchmark and write a metrics CSV
    sketch      build and persist a sketch + tracker from a stream file
    calibrate   fit conformal thresholds from persisted sketch + tracker
    query       read items on stdin, write "item TAB lower TAB upper"
"""

from __future__ import annotations

import argparse
import sys

from . import conformal
from .harness import load_config, run_experiment, write_csv
from .hashing import HashFamily
from .sketch import CountMinSketch
from .tracker import ExactTracker


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sketchci",
        description="Count-min sketching with conformal confidence intervals.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a stream file from the config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None,
                   help="number of tokens (default: m + query_count)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("experiment", help="run repetitions and write the metrics CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--out", default=None, help="override the config output path")

    p = sub.add_parser("sketch", help="sketch a stream file and persist the state")
    p.add_argument("--config", required=True)
    p.add_argument("--stream", required=True, help="newline-delimited token file")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--out-sketch", required=True)
    p.add_argument("--out-tracker", required=True)

    p = sub.add_parser("calibrate", help="fit thresholds from persisted state")
    p.add_argument("--config", required=True)
    p.add_argument("--sketch", required=True)
    p.add_argument("--tracker", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("query", help="answer stdin items with intervals (TSV)")
    p.add_argument("--sketch", required=True)
    p.add_argument("--tracker", required=True)
    p.add_argument("--thresholds", required=True)

    args = parser.parse_args(argv)
    return _COMMANDS[args.command](args)


def _cmd_generate(args) -> int:
    config = load_config(args.config)
    spec = config.stream
    count = args.count if args.count is not None else spec.m + spec.query_count
    tokens = spec.generate(count, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.writelines(t + "\n" for t in tokens)
    return 0


def _cmd_experiment(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    rows = run_experiment(config)
    write_csv(config, rows, path=args.out)
    return 0


def _cmd_sketch(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    with open(args.stream, "r", encoding="utf-8") as fh:
        stream = [line for line in fh.read().splitlines() if line]
    m0 = config.stream.m0
    if not 0 <= m0 < len(stream):
        raise SystemExit(f"m0={m0} incompatible with stream of {len(stream)} tokens")
    family = HashFamily(config.d, config.w, config.master_seed)
    sketch = CountMinSketch(family, variant=config.variant)
    tracker = ExactTracker()
    for token in stream[:m0]:
        tracker.warmup_ingest(token)
    tracker.close_warmup()
    for token in stream[m0:]:
        sketch.update(token)
        tracker.supervised_ingest(token)
    sketch.freeze().save(args.out_sketch)
    tracker.save(args.out_tracker)
    return 0


def _cmd_calibrate(args) -> int:
    config = load_config(args.config)
    sketch = CountMinSketch.load(args.sketch)
    tracker = ExactTracker.load(args.tracker)
    grid_max = sketch.total + tracker.warmup_size
    side_alpha = config.alpha / 2.0 if config.two_sided else config.alpha

    train_fraction = (config.train_fraction
                      if config.rule == conformal.ADAPTIVE_LOWER else 0.0)
    train, calib = tracker.build_calibration_set(sketch, train_fraction)
    if config.rule == conformal.ADAPTIVE_LOWER:
        model = conformal.ResidualQuantileModel().fit(train)
        rule = conformal.AdaptiveLowerRule(model, grid_max)
    elif config.rule == conformal.FIXED_LOWER:
        rule = conformal.FixedLowerRule(grid_max)
    else:
        raise SystemExit(f"unknown rule {config.rule!r}")

    partition = conformal.build_partition(
        [p.label for p in calib], config.bins, grid_max)
    scores, labels = conformal.score_pairs(rule, calib)
    threshold = conformal.calibrate(scores, labels, partition, side_alpha)
    text = conformal.threshold_to_text(rule, threshold)
    if config.two_sided:
        upper_rule = conformal.FixedUpperRule(grid_max)
        up_scores, up_labels = conformal.score_pairs(upper_rule, calib)
        upper_thr = conformal.calibrate(up_scores, up_labels, partition, side_alpha)
        text += conformal.threshold_to_text(upper_rule, upper_thr)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    return 0


def _cmd_query(args) -> int:
    sketch = CountMinSketch.load(args.sketch)
    tracker = ExactTracker.load(args.tracker)
    with open(args.thresholds, "r", encoding="utf-8") as fh:
        text = fh.read()
    sections = _split_threshold_sections(text)
    rule, threshold = conformal.threshold_from_text(sections[0])
    upper = conformal.threshold_from_text(sections[1]) if len(sections) > 1 else None
    out = sys.stdout
    for raw in sys.stdin:
        item = raw.rstrip("\n")
        if not item:
            continue
        if upper is not None:
            ci = conformal.two_sided_interval(
                item, sketch, tracker, rule, threshold, upper[0], upper[1])
        else:
            ci = conformal.predict_interval(item, sketch, tracker, rule, threshold)
        out.write(f"{item}\t{ci.lower}\t{ci.upper}\n")
    return 0


def _split_threshold_sections(text: str) -> list[str]:
    """A threshold file holds one section per calibrated side."""
    sections, current = [], []
    for line in text.splitlines():
        if line.startswith("format=") and current:
            sections.append("\n".join(current) + "\n")
            current = []
        current.append(line)
    if current:
        sections.append("\n".join(current) + "\n")
    return sections


_COMMANDS = {
    "generate": _cmd_generate,
    "experiment": _cmd_experiment,
    "sketch": _cmd_sketch,
    "calibrate": _cmd_calibrate,
    "query": _cmd_query,
}


if __name__ == "__main__":
    sys.exit(main())
