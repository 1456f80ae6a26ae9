"""Command-line pipeline over LNDP model files and LNDS batch files.

Exit codes are fixed for scripting: 0 success, 2 usage, 3 I/O,
4 validation/format, 5 numerical failure. Human-readable tables go to
stdout; machine-readable JSON is written only via --report.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from .engine import forward
from .errors import FormatError, NumericalError, ValidationError
from .layers import Conv2D, Dense, Flatten, Model, validate
from .metrics import count_costs, evaluate_top1
from .pruning import PruneConfig, find_consumer, prunable_layers, prune_model
from .serialization import load_batch, load_model, save_model
from .validation import require_finite

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_NUMERICAL = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linprune",
        description="Structured channel pruning for sequential CNNs",
    )
    parser.add_argument("--seed", type=int, default=0,
                        help="seed reserved for sampling variants (pipeline is deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="prune a model against a calibration batch")
    p.add_argument("--model", required=True, help="input LNDP model")
    p.add_argument("--calib", required=True, help="LNDS calibration batch")
    p.add_argument("--tau", type=float, default=1e-6, help="pruning threshold in [0, 1)")
    p.add_argument("--min-channels", type=int, default=1, help="channels each layer keeps")
    p.add_argument("--out", required=True, help="output LNDP model")
    p.add_argument("--report", default=None, help="optional JSON report path")

    e = sub.add_parser("eval", help="top-1 accuracy and cost breakdown")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True, help="labelled LNDS dataset")

    i = sub.add_parser("info", help="per-layer shapes, parameters, and MACs")
    i.add_argument("--model", required=True)

    b = sub.add_parser("bench", help="median forward latency")
    b.add_argument("--model", required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--baseline", default=None, help="second LNDP model to compare against")
    return parser


def _layer_label(layer) -> str:
    if isinstance(layer, Conv2D):
        return (
            f"Conv2D {layer.in_channels}->{layer.out_channels} "
            f"k{layer.kernel_size} s{layer.stride} p{layer.padding}"
        )
    if isinstance(layer, Dense):
        return f"Dense {layer.in_features}->{layer.out_features}"
    return type(layer).__name__


def _print_info(model: Model) -> None:
    costs = count_costs(model)
    print(f"{'idx':>4}  {'layer':<28} {'output':<16} {'params':>12} {'MACs':>14}")
    for lc, layer in zip(costs.layers, model.layers):
        shape = "x".join(str(d) for d in lc.output_shape)
        print(f"{lc.index:>4}  {_layer_label(layer):<28} {shape:<16} "
              f"{lc.params:>12} {lc.macs:>14}")
    if model.layers:
        print(f"{'':>4}  {'total':<28} {'':<16} {costs.total_params:>12} {costs.total_macs:>14}")
        print(f"total FLOPs (2 per MAC): {costs.total_flops}")


def _check_calibration_feasible(model: Model, batch) -> tuple[list[str], int]:
    """Per-layer check that the tap satisfies B*H*W > C before any work.

    Returns the per-layer problem lines and the number of feasible
    prunable layers; infeasible layers are skipped (with a record), not
    fatal, unless nothing at all can be pruned.
    """
    trace = validate(model)
    b = batch.images.shape[0]
    problems = []
    feasible = 0
    for idx in prunable_layers(model):
        consumer_index = find_consumer(model, idx)
        channels = model.layers[idx].out_channels
        tap_shape = trace[consumer_index]
        if len(tap_shape) == 3:
            samples = b * tap_shape[1] * tap_shape[2]
        else:
            flatten_index = next(
                j for j in range(idx + 1, consumer_index)
                if isinstance(model.layers[j], Flatten)
            )
            h, w = trace[flatten_index][1], trace[flatten_index][2]
            samples = b * h * w
        if samples <= channels:
            problems.append(
                f"layer {idx}: B*H*W = {samples} must exceed C = {channels}"
            )
        else:
            feasible += 1
    return problems, feasible


def _cmd_prune(args) -> int:
    if not 0.0 <= args.tau < 1.0:
        print(f"error: --tau must lie in [0, 1), got {args.tau}", file=sys.stderr)
        return EXIT_USAGE
    if args.min_channels < 1:
        print(f"error: --min-channels must be >= 1, got {args.min_channels}", file=sys.stderr)
        return EXIT_USAGE
    model = load_model(args.model)
    batch = load_batch(args.calib)
    validate(model)
    require_finite(batch.images, f"calibration batch {args.calib}")
    for i, layer in enumerate(model.layers):
        for name in ("weights", "bias", "gamma", "beta", "running_mean", "running_var"):
            arr = getattr(layer, name, None)
            if arr is not None:
                require_finite(arr, f"model layer {i} {name}")
    problems, feasible = _check_calibration_feasible(model, batch)
    if problems and feasible == 0:
        for line in problems:
            print(f"error: calibration batch too small: {line}", file=sys.stderr)
        return EXIT_VALIDATION
    for line in problems:
        print(f"warning: layer will be skipped, calibration batch too small: {line}",
              file=sys.stderr)

    config = PruneConfig(tau=args.tau, min_channels_kept=args.min_channels)
    pruned, report = prune_model(model, batch, config)
    save_model(pruned, args.out)
    if args.report:
        report.save(args.report)

    print(f"{'layer':>6} {'status':<8} {'C':>5} {'C_prime':>8} {'removed':>8} {'residual':>12}")
    for rec in report.records:
        print(f"{rec.layer_index:>6} {rec.status:<8} {rec.channels_before:>5} "
              f"{rec.channels_after:>8} {rec.channels_before - rec.channels_after:>8} "
              f"{rec.recovery_residual:>12.3e}")
        if rec.detail:
            print(f"       layer {rec.layer_index}: {rec.detail}")
    print(f"channels removed: {report.total_channels_removed}")
    print(f"FLOPs reduction:  {report.flops_reduction_percent:.2f}%")
    print(f"params reduction: {report.params_reduction_percent:.2f}%")
    print(f"pruned model written to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    batch = load_batch(args.data)
    if batch.labels is None:
        raise ValidationError(f"{args.data}: evaluation requires a labelled dataset")
    validate(model)
    accuracy = evaluate_top1(model, batch)
    print(f"samples:        {batch.size}")
    print(f"top-1 accuracy: {accuracy:.4f}")
    _print_info(model)
    return EXIT_OK


def _cmd_info(args) -> int:
    model = load_model(args.model)
    validate(model)
    _print_info(model)
    return EXIT_OK


def _time_forward(model: Model, images, reps: int) -> list[float]:
    for _ in range(3):
        forward(model, images)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        forward(model, images)
        times.append(time.perf_counter() - t0)
    return times


def _cmd_bench(args) -> int:
    if args.reps < 1:
        print(f"error: --reps must be >= 1, got {args.reps}", file=sys.stderr)
        return EXIT_USAGE
    model = load_model(args.model)
    batch = load_batch(args.data)
    validate(model)
    times = _time_forward(model, batch.images, args.reps)
    median = statistics.median(times)
    spread = (np.percentile(times, 75) - np.percentile(times, 25)) / median * 100.0
    print(f"model:  {args.model}")
    print(f"median forward time: {median * 1e3:.2f} ms over {args.reps} reps "
          f"(batch of {batch.size})")
    print(f"noise floor (IQR/median): {spread:.1f}%")
    if args.baseline:
        base = load_model(args.baseline)
        validate(base)
        base_times = _time_forward(base, batch.images, args.reps)
        base_median = statistics.median(base_times)
        rel = (median - base_median) / base_median * 100.0
        base_spread = (np.percentile(base_times, 75) - np.percentile(base_times, 25)) \
            / base_median * 100.0
        print(f"baseline: {args.baseline}")
        print(f"baseline median forward time: {base_median * 1e3:.2f} ms")
        print(f"relative latency vs baseline: {rel:+.1f}% "
              f"(noise floor {max(spread, base_spread):.1f}%)")
    return EXIT_OK


_COMMANDS = {
    "prune": _cmd_prune,
    "eval": _cmd_eval,
    "info": _cmd_info,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())
