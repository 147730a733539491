"""Inference-cost measurement: embedding forward pass vs the voting rule.

Wall-clock numbers are reported as medians with inter-quartile ranges over
repetitions (after discarded warm-ups); they are machine-bound, so the
hardware-independent contract is the multiply-add counters, which are exact
closed forms.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import backbone as bb
from .train import TrainedModel

WARMUP_RUNS = 3


@dataclass
class TimingReport:
    backbone_ns: float
    backbone_iqr_ns: float
    rbf_ns: float
    rbf_iqr_ns: float
    rbf_fraction: float
    m_impostors: int
    dim: int
    compressed: bool
    repetitions: int
    backend: str
    predictions: np.ndarray = None


def _median_iqr(samples: list[float]) -> tuple[float, float]:
    arr = np.asarray(samples)
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    return float(med), float(q3 - q1)


def bench_inference(model: TrainedModel, inputs: np.ndarray,
                    repetitions: int = 9) -> TimingReport:
    """Time the two inference stages separately over the given queries.

    Runs WARMUP_RUNS discarded iterations first. The predictions are
    returned so callers can confirm timing never changes the outputs.
    """
    inputs = np.asarray(inputs, dtype=np.float32)
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise ValueError("inputs must be a non-empty (N, input_dim) matrix")
    if repetitions < 5:
        raise ValueError("need at least 5 repetitions")
    if model.impostors is None:
        raise ValueError("benchmark needs a voting-rule model")

    imp = model.impostors
    inv2s2 = model.kernel.inv_two_sigma2
    compressed = model.codebook is not None
    points = np.ascontiguousarray(imp.points, dtype=np.float64)
    labels = np.ascontiguousarray(imp.labels, dtype=np.int64)
    if compressed:
        centroids = np.ascontiguousarray(model.codebook.centroids,
                                         dtype=np.float64)
        codes = np.ascontiguousarray(model.codes, dtype=np.int64)

    backbone_ns, rbf_ns = [], []
    probs = None
    for rep in range(WARMUP_RUNS + repetitions):
        t0 = time.perf_counter_ns()
        emb, _ = bb.forward(model.backbone, inputs)
        t1 = time.perf_counter_ns()
        emb = np.ascontiguousarray(emb)
        t2 = time.perf_counter_ns()
        if compressed:
            tables = _kernels.adc_tables(emb, centroids)
            probs = _kernels.adc_probs(tables, codes, labels,
                                       model.class_count, inv2s2)
        else:
            probs = _kernels.rbf_probs(emb, points, labels,
                                       model.class_count, inv2s2)
        t3 = time.perf_counter_ns()
        if rep >= WARMUP_RUNS:
            backbone_ns.append(t1 - t0)
            rbf_ns.append(t3 - t2)

    bmed, biqr = _median_iqr(backbone_ns)
    rmed, riqr = _median_iqr(rbf_ns)
    return TimingReport(
        backbone_ns=bmed, backbone_iqr_ns=biqr, rbf_ns=rmed, rbf_iqr_ns=riqr,
        rbf_fraction=rmed / (bmed + rmed), m_impostors=imp.count,
        dim=imp.dim, compressed=compressed, repetitions=repetitions,
        backend=_kernels.active_backend(),
        predictions=probs.argmax(axis=1))


def op_counters(model: TrainedModel, input_vec: np.ndarray) -> dict[str, int]:
    """Exact multiply-add counts for one inference of a single input."""
    input_vec = np.asarray(input_vec)
    if input_vec.ndim != 1 or input_vec.shape[0] != model.backbone.input_dim:
        raise ValueError("input_vec must be one input-width vector")
    backbone_madds = sum(l.weights.shape[0] * l.weights.shape[1]
                         for l in model.backbone.layers)
    if model.codebook is not None:
        cb = model.codebook
        m = model.codes.shape[0]
        rbf_madds = m * cb.n_subspaces + cb.n_subspaces * cb.k * cb.sub_dim
    elif model.impostors is not None:
        rbf_madds = model.impostors.count * model.impostors.dim + model.impostors.count
    else:
        rbf_madds = model.class_count * model.backbone.embed_dim
    return {"backbone_madds": int(backbone_madds), "rbf_madds": int(rbf_madds)}
