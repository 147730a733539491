"""Command-line entry point for the feature exporter."""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportManifest, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Extract pooled penultimate-layer CNN features from a "
                    "class-per-folder image tree into an .impd dataset")
    parser.add_argument("--images", required=True,
                        help="directory with one subfolder per class")
    parser.add_argument("--out", required=True, help="output .impd path")
    parser.add_argument("--model", default="squeezenet1_1",
                        choices=("squeezenet1_1", "resnet18"))
    parser.add_argument("--weights", default="pretrained",
                        choices=("pretrained", "random"),
                        help="'random' is seeded and works offline")
    parser.add_argument("--init-seed", type=int, default=0,
                        help="weight seed for --weights random")
    parser.add_argument("--resize-edge", type=int, default=256)
    parser.add_argument("--crop", default="none", choices=("none", "center"))
    parser.add_argument("--crop-size", type=int, default=224)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--skipped-report",
                        help="path for the unreadable-image list "
                             "(default: <out>.skipped.txt)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    manifest = ExportManifest(
        image_dir=args.images, output_path=args.out, model=args.model,
        weights=args.weights, resize_edge=args.resize_edge, crop=args.crop,
        crop_size=args.crop_size, batch_size=args.batch_size,
        init_seed=args.init_seed, skipped_report=args.skipped_report)
    try:
        result = export(manifest)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    print(f"wrote {args.out}: {result.count} records, dim {result.dim}, "
          f"{result.n_classes} classes")
    for name, label in zip(result.class_names, range(result.n_classes)):
        print(f"class {label} = {name}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} unreadable images "
              "(see report)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
