"""Command-line surface.

Subcommands: gen | train | sweep | eval | compress | bench | openset | report.
Every run prints its resolved configuration (flags win over the optional
key=value config file, which wins over defaults) including the seed, so any
output can be reproduced.

Exit codes: 0 success, 2 usage, 3 missing file, 4 file-format error,
5 invalid values/shapes.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import _kernels, bench, openset, pq
from .backbone import Backbone
from .data import (DataFormatError, SyntheticSpec, generate, read_dataset,
                   read_model, write_dataset, write_model)
from .rbf import ImpostorSet
from .train import TrainConfig, TrainedModel, evaluate, train

EXIT_OK = 0
EXIT_MISSING = 3
EXIT_FORMAT = 4
EXIT_INVALID = 5


def _read_config_file(path) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


# defaults shared by train-like subcommands
_TRAIN_DEFAULTS = {
    "scheme": "loose", "sigma": 0.5, "lam": 1.0, "lr": 1e-2,
    "weight_decay": 5e-4, "epochs": 60, "batch_size": 32,
    "refresh_period": 10, "seed": 0, "embed_dim": 512, "hidden_dims": "32",
    "impostor_lr": None, "pq_m": None, "pq_k": None,
}

_CASTS = {
    "sigma": float, "lam": float, "lr": float, "weight_decay": float,
    "epochs": int, "batch_size": int, "refresh_period": int, "seed": int,
    "embed_dim": int, "impostor_lr": float, "pq_m": int, "pq_k": int,
    "reps": int, "per_class": int, "classes": int, "noise": float,
}


# config-file spelling -> internal name (the flag is --lambda)
_KEY_ALIASES = {"lambda": "lam"}


def _resolve(args, defaults: dict) -> dict:
    """flags > config file > defaults, with string casts for file values."""
    file_values = _read_config_file(args.config) if getattr(args, "config",
                                                            None) else {}
    file_values = {_KEY_ALIASES.get(k, k): v for k, v in file_values.items()}
    resolved = {}
    for key, default in defaults.items():
        value = getattr(args, key, None)
        if value is None and key in file_values:
            raw = file_values[key]
            value = _CASTS.get(key, str)(raw) if raw != "none" else None
        if value is None:
            value = default
        resolved[key] = value
    return resolved


def _print_config(name: str, resolved: dict) -> None:
    pairs = " ".join(f"{k}={v}" for k, v in sorted(resolved.items()))
    print(f"[{name}] {pairs}")


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        scheme=cfg["scheme"], sigma=cfg["sigma"], lam=cfg["lam"],
        learning_rate=cfg["lr"], weight_decay=cfg["weight_decay"],
        epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        tied_refresh_period=cfg["refresh_period"], seed=cfg["seed"],
        impostor_learning_rate=cfg["impostor_lr"], pq_m=cfg["pq_m"],
        pq_k=cfg["pq_k"])


def _build_backbone(cfg: dict, input_dim: int) -> Backbone:
    hidden = [int(h) for h in str(cfg["hidden_dims"]).split(",") if h.strip()]
    return Backbone.init([input_dim, *hidden, cfg["embed_dim"]],
                         seed=cfg["seed"])


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    cfg = _resolve(args, {"generator": "rings", "classes": 2,
                          "per_class": 1000, "noise": 0.1, "seed": 0,
                          "fractions": "0.5,0.25,0.25"})
    _print_config("gen", cfg)
    fractions = tuple(float(f) for f in cfg["fractions"].split(","))
    spec = SyntheticSpec(generator=cfg["generator"], classes=cfg["classes"],
                         per_class=cfg["per_class"], noise=cfg["noise"],
                         seed=cfg["seed"], fractions=fractions)
    splits = generate(spec)
    for name in ("train", "val", "test"):
        path = f"{args.out}.{name}.impd"
        write_dataset(path, getattr(splits, name))
        print(f"wrote {path}")
    return EXIT_OK


def _run_training(cfg: dict, data_path, val_path):
    dataset = read_dataset(data_path)
    val_set = read_dataset(val_path) if val_path else None
    config = _train_config(cfg)
    net = _build_backbone(cfg, dataset.dim)
    return train(dataset, config, net, val_set)


def cmd_train(args) -> int:
    cfg = _resolve(args, _TRAIN_DEFAULTS)
    _print_config("train", cfg)
    model = _run_training(cfg, args.data, args.val)
    write_model(args.out, model)
    print(f"wrote {args.out}")
    if args.log:
        rows = [(r["epoch"], r["mean_loss"], r["classification_term"],
                 r["attachment_term"],
                 "" if r["val_accuracy"] is None else r["val_accuracy"])
                for r in model.history]
        _write_csv(args.log, ["epoch", "mean_loss", "classification_term",
                              "attachment_term", "val_accuracy"], rows)
        print(f"wrote {args.log}")
    if model.history and model.history[-1]["val_accuracy"] is not None:
        print(f"final_val_accuracy={model.history[-1]['val_accuracy']}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _resolve(args, _TRAIN_DEFAULTS)
    _print_config("sweep", cfg)
    sigmas = [float(s) for s in args.sigmas.split(",") if s.strip()]
    if not sigmas:
        raise ValueError("empty sigma grid")
    rows = []
    best_sigma, best_acc = None, -1.0
    val_set = read_dataset(args.val)
    for sigma in sigmas:
        run_cfg = dict(cfg, sigma=sigma)
        model = _run_training(run_cfg, args.data, None)
        acc = evaluate(model, val_set).accuracy
        rows.append((sigma, acc))
        print(f"sigma={sigma} val_accuracy={acc}")
        # ties go to the larger (smoother) bandwidth
        if acc > best_acc or (acc == best_acc and sigma > best_sigma):
            best_sigma, best_acc = sigma, acc
    if args.out:
        _write_csv(args.out, ["sigma", "val_accuracy"], rows)
        print(f"wrote {args.out}")
    print(f"best_sigma={best_sigma} best_val_accuracy={best_acc}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args, {"seed": 0})
    _print_config("eval", cfg)
    model = read_model(args.model)
    dataset = read_dataset(args.data)
    result = evaluate(model, dataset)
    print(f"accuracy={result.accuracy}")
    if args.out:
        rows = [(label, int(result.per_class_counts[label]),
                 "" if np.isnan(result.per_class_accuracy[label])
                 else result.per_class_accuracy[label])
                for label in range(model.class_count)]
        rows.append(("overall", dataset.count, result.accuracy))
        _write_csv(args.out, ["class", "count", "accuracy"], rows)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_compress(args) -> int:
    cfg = _resolve(args, {"pq_m": 8, "pq_k": None, "seed": 0})
    _print_config("compress", cfg)
    model = read_model(args.model)
    if model.impostors is None:
        raise ValueError("model has no reference points to compress")
    codebook = pq.train_codebook(model.impostors, cfg["pq_m"], cfg["pq_k"],
                                 seed=cfg["seed"])
    codes = pq.encode(codebook, model.impostors.points)
    decoded = ImpostorSet(pq.decode(codebook, codes), model.impostors.labels,
                          model.class_count, frozen=True)
    compressed = TrainedModel(
        backbone=model.backbone, impostors=decoded, kernel=model.kernel,
        class_count=model.class_count,
        metadata=dict(model.metadata, compressed=True, pq_m=cfg["pq_m"],
                      pq_k=codebook.k),
        codebook=codebook, codes=codes)
    write_model(args.out, compressed)
    report = pq.memory_report(codebook, model.impostors.count)
    for key, value in report.items():
        print(f"{key}={value}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _resolve(args, {"reps": 9, "seed": 0})
    _print_config("bench", cfg)
    model = read_model(args.model)
    dataset = read_dataset(args.data)
    counters = bench.op_counters(model, dataset.vectors[0])
    backends = (_kernels.available_backends() if args.compare_backends
                else (_kernels.active_backend(),))
    rows = []
    for backend in backends:
        _kernels.set_backend(backend)
        report = bench.bench_inference(model, dataset.vectors,
                                       repetitions=cfg["reps"])
        print(f"backend={backend} backbone_ns={report.backbone_ns} "
              f"rbf_ns={report.rbf_ns} rbf_fraction={report.rbf_fraction}")
        rows.append((backend, report.m_impostors, report.dim,
                     int(report.compressed), report.backbone_ns,
                     report.backbone_iqr_ns, report.rbf_ns,
                     report.rbf_iqr_ns, report.rbf_fraction,
                     counters["backbone_madds"], counters["rbf_madds"]))
    if args.out:
        _write_csv(args.out,
                   ["backend", "m_impostors", "dim", "compressed",
                    "backbone_ns", "backbone_iqr_ns", "rbf_ns", "rbf_iqr_ns",
                    "rbf_fraction", "backbone_madds", "rbf_madds"], rows)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_openset(args) -> int:
    cfg = _resolve(args, {"seed": 0})
    _print_config("openset", cfg)
    model = read_model(args.model)
    seen = read_dataset(args.seen)
    unseen = read_dataset(args.unseen)
    report = openset.open_set_report(model, seen, unseen,
                                     allow_overlap=args.allow_overlap)
    print(f"ks_distance={report.ks_distance!r}")
    if args.out:
        rows = [(report.bin_edges[i], report.bin_edges[i + 1],
                 int(report.seen_counts[i]), int(report.unseen_counts[i]))
                for i in range(len(report.seen_counts))]
        _write_csv(args.out, ["bin_lo", "bin_hi", "seen_count",
                              "unseen_count"], rows)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _resolve(args, {"seed": 0})
    _print_config("report", cfg)
    model = read_model(args.model)
    dataset = read_dataset(args.data)
    if model.impostors is None:
        raise ValueError("model has no reference points to report on")
    if model.impostors.count != dataset.count:
        raise ValueError("dataset size does not match the model's point "
                         "count; pass the training split in training order")
    from .backbone import forward
    emb, _ = forward(model.backbone, dataset.vectors)
    distances = np.linalg.norm(emb - model.impostors.points, axis=1)
    rows = []
    for label in range(model.class_count):
        ids = np.flatnonzero(dataset.labels == label)
        order = ids[np.argsort(distances[ids], kind="stable")]
        for rank, idx in enumerate(order):
            flag = ""
            if rank < 5:
                flag = "closest5"
            elif rank >= order.size - 5:
                flag = "farthest5"
            rows.append((label, int(idx), distances[idx], flag))
    _write_csv(args.out, ["class", "example_id", "distance", "flag"], rows)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=("tied", "fixed", "loose", "softmax"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lam", type=float,
                   help="attachment weight (loose scheme)")
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--refresh-period", type=int,
                   help="tied scheme: epochs between point refreshes")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--hidden-dims", help="comma list of hidden widths")
    p.add_argument("--impostor-lr", type=float,
                   help="loose scheme: learning rate for the points")
    p.add_argument("--pq-m", type=int,
                   help="fixed scheme: train against points coded with m subspaces")
    p.add_argument("--pq-k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impostornet",
        description="Train and run RBF reference-point classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--config", help="key=value config file")

    p = sub.add_parser("gen", help="generate a synthetic dataset triple")
    common(p)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--generator", choices=("rings", "blobs", "moons"))
    p.add_argument("--classes", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--fractions", help="train,val,test fractions")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--val")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch CSV")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="grid-search the bandwidth on validation")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--sigmas", required=True, help="comma list of bandwidths")
    p.add_argument("--out")
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="accuracy of a model on a dataset")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="per-class CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compress", help="code a model's points with PQ")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pq-m", type=int)
    p.add_argument("--pq-k", type=int)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("bench", help="time the two inference stages")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="queries")
    p.add_argument("--reps", type=int)
    p.add_argument("--out")
    p.add_argument("--compare-backends", action="store_true",
                   help="time every available kernel backend")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("openset", help="entropy separation of unseen classes")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--seen", required=True)
    p.add_argument("--unseen", required=True)
    p.add_argument("--out", help="histogram CSV")
    p.add_argument("--allow-overlap", action="store_true",
                   help="diagnostic: skip the disjoint-label check")
    p.set_defaults(func=cmd_openset)

    p = sub.add_parser("report", help="embedding-to-point distance ranking")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="training split")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
