"""CLI for exporting torch checkpoints and CIFAR-10 data to LNDP/LNDS."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .cifar import export_batch, load_cifar10, normalize_images
from .convert import ExportError, export_model, verify_parity
from .vgg import load_checkpoint


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linprune-export",
        description="Bridge torch checkpoints and CIFAR-10 archives to LNDP/LNDS files",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("model", help="export a VGG-style checkpoint to LNDP")
    m.add_argument("--checkpoint", required=True, help="torch .pt/.pth file")
    m.add_argument("--arch", default="vgg16", help="VGG variant for state-dict checkpoints")
    m.add_argument("--input-shape", default="3,32,32", help="C,H,W of the model input")
    m.add_argument("--out", required=True, help="output LNDP path")
    m.add_argument("--manifest", required=True, help="output manifest JSON path")
    m.add_argument("--verify-images", type=int, default=64, metavar="N",
                   help="random probe images for the parity check (0 disables)")
    m.add_argument("--verify-tol", type=float, default=1e-3)
    m.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("batch", help="export a CIFAR-10 batch to LNDS")
    b.add_argument("--cifar-dir", required=True, help="extracted cifar-10-batches-py directory")
    b.add_argument("--split", choices=["train", "test"], default="test")
    b.add_argument("--count", type=int, default=256)
    b.add_argument("--out", required=True, help="output LNDS path")
    b.add_argument("--manifest", default=None, help="optional manifest JSON path")
    b.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_model(args) -> int:
    shape = tuple(int(d) for d in args.input_shape.split(","))
    if len(shape) != 3:
        print(f"error: --input-shape must be C,H,W, got {args.input_shape}", file=sys.stderr)
        return 2
    model = load_checkpoint(args.checkpoint, arch=args.arch)
    manifest = export_model(model, shape, args.out, args.manifest,
                            source=str(args.checkpoint))
    print(f"exported {len(manifest.layer_map)} layers to {args.out}")
    if args.verify_images > 0:
        rng = np.random.default_rng(args.seed)
        probe = rng.standard_normal((args.verify_images,) + shape).astype(np.float32)
        diff = verify_parity(model, args.out, probe)
        print(f"parity: max |torch - kit| = {diff:.3e} on {args.verify_images} probe images")
        if diff > args.verify_tol:
            print(f"error: parity {diff:.3e} exceeds tolerance {args.verify_tol:.1e}",
                  file=sys.stderr)
            return 1
    return 0


def _cmd_batch(args) -> int:
    export_batch(args.cifar_dir, args.out, count=args.count, split=args.split,
                 seed=args.seed, manifest_path=args.manifest)
    print(f"exported {args.count} {args.split} images to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "model":
            return _cmd_model(args)
        return _cmd_batch(args)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
