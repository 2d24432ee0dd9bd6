"""Command-line pipeline runner.

Subcommands: convert, roi, stats, infer, eval, flops, selftest, train-toy.
Exit codes: 0 success, 1 usage, 2 data error, 3 check failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import metrics as M
from .config import (
    PipelineConfig,
    config_to_text,
    load_config,
    toy_pipeline_config,
)
from .errors import DataError, EvtrackError, ParameterError, TrainingAbort
from .events import bin_fixed_time, parse_events
from .nn import network as net
from .pipeline import normalized_offsets, process_bins, train_toy
from .representation import frame_from_raw, frame_to_pgm, frame_to_raw

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(p):
    p.add_argument("--config", help="pipeline config file (key = value lines)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="frame-level workers")
    p.add_argument("--limit", type=int, help="process at most N frames")


def _load_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = PipelineConfig(**{**cfg.__dict__, "seed": args.seed})
    return cfg


def _read_stream(path, cfg):
    with open(path, "rb") as fh:
        return parse_events(fh.read(), cfg.geometry)


def _iter_records(args, cfg, events_path):
    stream = _read_stream(events_path, cfg)
    bins = bin_fixed_time(stream, cfg.binning)
    if args.limit is not None:
        import itertools

        bins = itertools.islice(bins, args.limit)
    yield from process_bins(bins, cfg, threads=args.threads)


def cmd_convert(args) -> int:
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    count = 0
    roi_rows, stat_rows = [], []
    for rec in _iter_records(args, cfg, args.events):
        stem = os.path.join(args.out, f"frame_{rec.index:06d}")
        with open(stem + ".pgm", "wb") as fh:
            fh.write(frame_to_pgm(rec.frame))
        with open(stem + ".raw", "wb") as fh:
            fh.write(frame_to_raw(rec.frame))
        b = rec.box
        roi_rows.append(f"{rec.index},{b.x0},{b.y0},{b.w},{b.h},{int(rec.found)}")
        stats = ",".join(repr(float(v)) for v in rec.stats.as_array())
        stat_rows.append(f"{rec.index},{stats}")
        count += 1
    with open(os.path.join(args.out, "roi.csv"), "w") as fh:
        fh.write("\n".join(roi_rows) + ("\n" if roi_rows else ""))
    with open(os.path.join(args.out, "stats.csv"), "w") as fh:
        fh.write("\n".join(stat_rows) + ("\n" if stat_rows else ""))
    if count == 0:
        print("warning: no events, zero frames emitted", file=sys.stderr)
    print(f"wrote {count} frames to {args.out}")
    return EXIT_OK


def cmd_roi(args) -> int:
    cfg = _load_config(args)
    for rec in _iter_records(args, cfg, args.events):
        b = rec.box
        print(f"{rec.index},{b.x0},{b.y0},{b.w},{b.h},{int(rec.found)}")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _load_config(args)
    for rec in _iter_records(args, cfg, args.events):
        print(",".join(repr(float(v)) for v in rec.stats.as_array()))
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _load_config(args)
    weights = net.Weights.load(args.weights, cfg.net)
    rows = []
    if os.path.isdir(args.input):
        names = sorted(f for f in os.listdir(args.input) if f.endswith(".raw"))
        if args.limit is not None:
            names = names[: args.limit]
        for name in names:
            with open(os.path.join(args.input, name), "rb") as fh:
                frame = frame_from_raw(fh.read())
            if frame.values.shape == (cfg.net.input_h, cfg.net.input_w):
                roi_frame, offsets = frame, (0, 0)
            else:
                from .pipeline import FrameRecord
                from .roi import build_roi, crop, fallback_roi, locate_wrist

                wrist = locate_wrist(frame, cfg.roi.tau, cfg.roi.n_thr)
                box = (
                    build_roi(wrist, cfg.roi.height, cfg.roi.width, frame.geometry)
                    if wrist
                    else fallback_roi(cfg.roi.height, cfg.roi.width, frame.geometry)
                )
                roi_frame, offsets = crop(frame, box)
            pose, aux = net.forward(
                roi_frame, offsets, cfg.geometry, weights, cfg.net, with_aux=args.aux
            )
            rows.append((pose, aux))
    else:
        for rec in _iter_records(args, cfg, args.input):
            pose, aux = net.forward(
                rec.roi_frame, rec.offsets, cfg.geometry, weights, cfg.net,
                with_aux=args.aux,
            )
            rows.append((pose, aux))
    for pose, aux in rows:
        vals = list(pose.as_array())
        if args.aux and aux is not None:
            vals += list(aux.as_array())
        print(",".join(repr(float(v)) for v in vals))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    preds = M.load_joint_file(args.pred)
    gts = M.load_joint_file(args.gt)
    thresholds = M.default_thresholds(cfg.metrics.steps, cfg.metrics.tau_max)
    curve = M.pck_curve(preds, gts, thresholds)
    for t, v in zip(curve.thresholds, curve.values):
        print(f"{t:.6f} {v:.6f}")
    score = M.auc(curve, cfg.metrics.tau_max)
    print(f"# auc {score:.6f} pairs {len(preds) - curve.skipped_pairs} skipped {curve.skipped_pairs}")
    return EXIT_OK


def cmd_flops(args) -> int:
    cfg = _load_config(args)
    for name, macs in net.flops_breakdown(cfg.net, include_aux=args.aux):
        print(f"{name} {macs}")
    total_roi = net.count_flops(cfg.net, include_aux=args.aux)
    full_h, full_w = args.full_h, args.full_w
    total_full = net.count_flops(cfg.net, full_h, full_w, include_aux=args.aux)
    print(f"total {total_roi}")
    print(
        f"# roi {cfg.net.input_h}x{cfg.net.input_w} vs full {full_h}x{full_w}: "
        f"{total_roi}/{total_full} = {total_roi / total_full:.4f}"
    )
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    cfg = _load_config(args) if args.config else toy_pipeline_config()
    results = run_all(cfg, inject_fault=args.inject_fault)
    failed = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"# {len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK


def cmd_train_toy(args) -> int:
    cfg = _load_config(args) if args.config else toy_pipeline_config()
    if args.seed is not None:
        cfg = PipelineConfig(**{**cfg.__dict__, "seed": args.seed})
    if args.no_aux:
        from .config import TrainParams

        tp = cfg.train
        cfg = PipelineConfig(
            **{
                **cfg.__dict__,
                "train": TrainParams(tp.steps, tp.batch, tp.lr, tp.samples, False),
            }
        )

    def log_fn(losses):
        aux = "" if losses["aux"] is None else f" aux {losses['aux']:.6f}"
        print(f"step {losses['step']} total {losses['total']:.6f} main {losses['main']:.6f}{aux}")

    log, weights = train_toy(cfg, log_fn=log_fn)
    weights.save(args.out)
    first, last = log[0]["total"], log[-1]["total"]
    print(f"# loss {first:.4f} -> {last:.4f} ({100 * (1 - last / first):.1f}% reduction)")
    print(f"# weights written to {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="evtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="events -> frames + ROI/stat sidecars")
    p.add_argument("events")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("roi", help="per-frame ROI rows")
    p.add_argument("events")
    _add_common(p)
    p.set_defaults(fn=cmd_roi)

    p = sub.add_parser("stats", help="per-frame auxiliary statistics rows")
    p.add_argument("events")
    _add_common(p)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("infer", help="pose rows from events or raw frames")
    p.add_argument("input", help="events file or directory of .raw frames")
    p.add_argument("--weights", required=True)
    p.add_argument("--aux", action="store_true", help="append the 7 aux values")
    _add_common(p)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="PCK curve and AUC from joint files")
    p.add_argument("pred")
    p.add_argument("gt")
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("flops", help="per-layer multiply-add counts")
    p.add_argument("--full-h", type=int, default=180)
    p.add_argument("--full-w", type=int, default=240)
    p.add_argument("--aux", action="store_true", help="include the aux branch")
    _add_common(p)
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("selftest", help="oracle/invariant/gradient checks")
    p.add_argument("--inject-fault", choices=["gradient"], help="force a failure")
    _add_common(p)
    p.set_defaults(fn=cmd_selftest)

    p = sub.add_parser("train-toy", help="seed-fixed toy training run")
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--no-aux", action="store_true", help="main task only")
    _add_common(p)
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("print-config", help="dump the effective configuration")
    _add_common(p)
    p.set_defaults(fn=lambda a: print(config_to_text(_load_config(a)), end="") or EXIT_OK)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        code = args.fn(args)
        return EXIT_OK if code is None else code
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except TrainingAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (DataError, ParameterError, EvtrackError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
