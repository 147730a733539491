"""Training orchestration for the three schemes, plus a softmax baseline.

Protocol: initialize one reference point per training example from the
initial embeddings, rescale points and the last layer by the average point
norm, then run Adam over mini-batches of the chosen loss.

  fixed  points stay at their post-rescale values; only the net moves.
  tied   like fixed, but the cached points are reset to the current
         embeddings of all training examples every refresh period.
  loose  points are free parameters updated jointly with the net.

The softmax baseline trains the same backbone with a linear head and
cross-entropy, for accuracy and open-set comparisons.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import backbone as bb
from . import pq as pqmod
from .data import LabeledEmbeddingSet
from .loss import LooseParams, loose_loss, nca_loss
from .rbf import ImpostorSet, KernelParams, classify_batch

SCHEMES = ("tied", "fixed", "loose", "softmax")


@dataclass
class TrainConfig:
    scheme: str = "loose"
    sigma: float = 0.5
    lam: float = 1.0
    learning_rate: float = 1e-2
    weight_decay: float = 5e-4
    epochs: int = 60
    batch_size: int = 32
    tied_refresh_period: int = 10
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    impostor_learning_rate: float | None = None  # defaults to learning_rate
    pq_m: int | None = None   # fixed scheme only: train against coded points
    pq_k: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; "
                             f"expected one of {SCHEMES}")
        if self.sigma <= 0 or self.learning_rate <= 0:
            raise ValueError("sigma and learning_rate must be positive")
        if self.lam < 0 or self.weight_decay < 0:
            raise ValueError("lambda and weight_decay must be non-negative")
        if self.epochs < 0 or self.batch_size < 1 or self.tied_refresh_period < 1:
            raise ValueError("bad epoch/batch/refresh settings")
        if self.pq_m is not None and self.scheme != "fixed":
            raise ValueError("compressed training is defined for the fixed scheme")

    @property
    def kernel(self) -> KernelParams:
        return KernelParams(self.sigma)


@dataclass
class AdamState:
    """First/second-moment accumulators, one pair per parameter tensor."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState, *, learning_rate: float,
              beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8,
              weight_decay: float = 0.0) -> list[np.ndarray]:
    """One Adam update with bias correction; returns new parameter arrays.

    Weight decay is coupled L2: added to the gradient before the moment
    updates. The state is advanced in place.
    """
    if len(params) != len(grads) or any(p.shape != g.shape
                                        for p, g in zip(params, grads)):
        raise ValueError("parameter/gradient shape mismatch")
    state.step += 1
    t = state.step
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if weight_decay:
            g = g + weight_decay * p
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / bias1
        v_hat = state.v[i] / bias2
        out.append(p - learning_rate * m_hat / (np.sqrt(v_hat) + epsilon))
    return out


@dataclass
class SoftmaxHead:
    weights: np.ndarray  # (L, d)
    bias: np.ndarray     # (L,)


@dataclass
class TrainedModel:
    backbone: bb.Backbone
    impostors: ImpostorSet | None
    kernel: KernelParams | None
    class_count: int
    metadata: dict = field(default_factory=dict)
    codebook: pqmod.PqCodebook | None = None
    codes: np.ndarray | None = None
    softmax_head: SoftmaxHead | None = None
    history: list[dict] = field(default_factory=list, repr=False)

    @property
    def kind(self) -> int:
        from .data import KIND_PQ, KIND_RAW, KIND_SOFTMAX
        if self.softmax_head is not None:
            return KIND_SOFTMAX
        if self.codebook is not None:
            return KIND_PQ
        return KIND_RAW


@dataclass
class EvalResult:
    accuracy: float
    per_class_accuracy: np.ndarray  # nan for classes absent from the data
    per_class_counts: np.ndarray


def predict_proba(model: TrainedModel, vectors: np.ndarray) -> np.ndarray:
    """Class distributions for raw inputs, shape (N, class_count)."""
    emb, _ = bb.forward(model.backbone, vectors)
    if model.softmax_head is not None:
        logits = emb @ model.softmax_head.weights.T + model.softmax_head.bias
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)
    if model.codebook is not None:
        return pqmod.classify_compressed_batch(
            emb, model.codebook, model.codes, model.impostors.labels,
            model.class_count, model.kernel)
    return classify_batch(emb, model.impostors, model.kernel)


def predict_labels(model: TrainedModel, vectors: np.ndarray) -> np.ndarray:
    return predict_proba(model, vectors).argmax(axis=1)


def evaluate(model: TrainedModel, dataset: LabeledEmbeddingSet) -> EvalResult:
    """Fraction of examples whose argmax class matches the ground truth."""
    if dataset.count < 1:
        raise ValueError("empty dataset")
    if dataset.dim != model.backbone.input_dim:
        raise ValueError(f"dataset dim {dataset.dim} does not match model "
                         f"input dim {model.backbone.input_dim}")
    predicted = predict_labels(model, dataset.vectors)
    hits = predicted == dataset.labels
    n_classes = model.class_count
    per_class = np.full(n_classes, np.nan)
    counts = np.zeros(n_classes, dtype=np.int64)
    for label in range(n_classes):
        mask = dataset.labels == label
        counts[label] = mask.sum()
        if counts[label]:
            per_class[label] = hits[mask].mean()
    return EvalResult(float(hits.mean()), per_class, counts)


def init_impostors(net: bb.Backbone,
                   dataset: LabeledEmbeddingSet) -> ImpostorSet:
    """One reference point per training example: its initial embedding."""
    emb, _ = bb.forward(net, dataset.vectors)
    return ImpostorSet(emb, dataset.labels.copy(), dataset.n_classes)


def normalize_scale(net: bb.Backbone,
                    impostors: ImpostorSet) -> tuple[bb.Backbone, ImpostorSet, float]:
    """Divide points and the last layer by the average point L2 norm.

    Pins the typical distance scale to 1 so one bandwidth range works
    across embedding widths and initializations.
    """
    norms = np.linalg.norm(impostors.points, axis=1)
    factor = float(norms.mean())
    if factor <= 0.0:
        raise ValueError("all reference points are zero; cannot rescale")
    scaled = ImpostorSet(impostors.points / factor, impostors.labels.copy(),
                         impostors.n_classes, impostors.frozen)
    return bb.rescale_last_layer(net, factor), scaled, factor


def _check_class_coverage(dataset: LabeledEmbeddingSet) -> None:
    counts = np.bincount(dataset.labels, minlength=dataset.n_classes)
    singles = np.flatnonzero(counts == 1)
    if singles.size:
        warnings.warn(
            f"classes {singles.tolist()} have a single example; their "
            "leave-one-out terms can never score the correct class",
            stacklevel=3)


def _epoch_batches(rng, count: int, batch_size: int):
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def train(dataset: LabeledEmbeddingSet, config: TrainConfig,
          backbone_init: bb.Backbone,
          val_set: LabeledEmbeddingSet | None = None) -> TrainedModel:
    """Run the configured scheme and return the trained model.

    ``model.history`` holds one record per epoch: mean loss, its two terms,
    the degenerate-term count and (when ``val_set`` is given) validation
    accuracy.
    """
    if config.scheme == "softmax":
        return train_softmax(dataset, config, backbone_init, val_set)
    if dataset.dim != backbone_init.input_dim:
        raise ValueError("dataset does not match the backbone input width")
    if dataset.n_classes < 2:
        raise ValueError("need at least two classes")
    _check_class_coverage(dataset)

    net = backbone_init.copy()
    impostors = init_impostors(net, dataset)
    net, impostors, factor = normalize_scale(net, impostors)

    codebook = codes = None
    if config.pq_m is not None:
        codebook = pqmod.train_codebook(impostors, config.pq_m, config.pq_k,
                                        seed=config.seed)
        codes = pqmod.encode(codebook, impostors.points)
        impostors = ImpostorSet(pqmod.decode(codebook, codes),
                                impostors.labels, impostors.n_classes,
                                frozen=True)
    if config.scheme == "fixed":
        impostors.frozen = True

    kernel = config.kernel
    loose = LooseParams(config.lam)
    rng = np.random.default_rng(config.seed)
    adam_net = AdamState.for_params(net.parameters())
    adam_imp = AdamState.for_params([impostors.points])
    imp_lr = (config.impostor_learning_rate
              if config.impostor_learning_rate is not None
              else config.learning_rate)

    history = []
    degenerate_total = 0
    for epoch in range(1, config.epochs + 1):
        sums = np.zeros(3)
        n_batches = 0
        for batch in _epoch_batches(rng, dataset.count, config.batch_size):
            emb, cache = bb.forward(net, dataset.vectors[batch])
            labels = dataset.labels[batch]
            if config.scheme == "loose":
                value, grads = loose_loss(emb, batch, labels, impostors,
                                          kernel, loose)
            else:
                value, grads = nca_loss(emb, batch, labels, impostors, kernel)
            param_grads, _ = bb.backward(net, cache, grads.d_embeddings)
            new_params = adam_step(
                net.parameters(), param_grads, adam_net,
                learning_rate=config.learning_rate, beta1=config.adam_beta1,
                beta2=config.adam_beta2, epsilon=config.adam_epsilon,
                weight_decay=config.weight_decay)
            net = net.replace_parameters(new_params)
            if config.scheme == "loose":
                # reference points are data representatives, not weights:
                # no decay on their coordinates
                (new_points,) = adam_step(
                    [impostors.points], [grads.d_impostors], adam_imp,
                    learning_rate=imp_lr, beta1=config.adam_beta1,
                    beta2=config.adam_beta2, epsilon=config.adam_epsilon)
                impostors = ImpostorSet(new_points, impostors.labels,
                                        impostors.n_classes)
            sums += (value.total, value.classification_term,
                     value.attachment_term)
            degenerate_total += value.degenerate_count
            n_batches += 1

        if config.scheme == "tied" and epoch % config.tied_refresh_period == 0:
            refreshed, _ = bb.forward(net, dataset.vectors)
            impostors = ImpostorSet(refreshed, impostors.labels,
                                    impostors.n_classes)

        record = {"epoch": epoch,
                  "mean_loss": sums[0] / n_batches,
                  "classification_term": sums[1] / n_batches,
                  "attachment_term": sums[2] / n_batches,
                  "val_accuracy": None}
        if val_set is not None:
            snapshot = TrainedModel(net, impostors, kernel,
                                    dataset.n_classes)
            record["val_accuracy"] = evaluate(snapshot, val_set).accuracy
        history.append(record)

    if degenerate_total:
        warnings.warn(f"{degenerate_total} loss terms had no same-class "
                      "reference point and were clamped", stacklevel=2)

    metadata = {"scheme": config.scheme, "sigma": config.sigma,
                "lambda": config.lam, "epochs": config.epochs,
                "seed": config.seed, "norm_factor": factor,
                "degenerate_terms": degenerate_total}
    if history:
        metadata["final_loss"] = history[-1]["mean_loss"]
        if history[-1]["val_accuracy"] is not None:
            metadata["final_val_accuracy"] = history[-1]["val_accuracy"]
    model = TrainedModel(net, impostors, kernel, dataset.n_classes,
                         metadata=metadata, codebook=codebook, codes=codes,
                         history=history)
    return model


def train_softmax(dataset: LabeledEmbeddingSet, config: TrainConfig,
                  backbone_init: bb.Backbone,
                  val_set: LabeledEmbeddingSet | None = None) -> TrainedModel:
    """Cross-entropy baseline: the same backbone with a linear classifier."""
    if dataset.dim != backbone_init.input_dim:
        raise ValueError("dataset does not match the backbone input width")
    net = backbone_init.copy()
    n_classes = dataset.n_classes
    rng = np.random.default_rng(config.seed)
    bound = 1.0 / np.sqrt(net.embed_dim)
    head_w = rng.uniform(-bound, bound, size=(n_classes, net.embed_dim))
    head_b = rng.uniform(-bound, bound, size=n_classes)

    adam = AdamState.for_params(net.parameters() + [head_w, head_b])
    history = []
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        n_batches = 0
        for batch in _epoch_batches(rng, dataset.count, config.batch_size):
            emb, cache = bb.forward(net, dataset.vectors[batch])
            labels = dataset.labels[batch]
            logits = emb @ head_w.T + head_b
            logits -= logits.max(axis=1, keepdims=True)
            expl = np.exp(logits)
            probs = expl / expl.sum(axis=1, keepdims=True)
            b = batch.shape[0]
            total += float(-np.log(probs[np.arange(b), labels] + 1e-300).mean())
            d_logits = probs.copy()
            d_logits[np.arange(b), labels] -= 1.0
            d_logits /= b
            d_head_w = d_logits.T @ emb
            d_head_b = d_logits.sum(axis=0)
            d_emb = d_logits @ head_w
            param_grads, _ = bb.backward(net, cache, d_emb)
            new_params = adam_step(
                net.parameters() + [head_w, head_b],
                param_grads + [d_head_w, d_head_b], adam,
                learning_rate=config.learning_rate, beta1=config.adam_beta1,
                beta2=config.adam_beta2, epsilon=config.adam_epsilon,
                weight_decay=config.weight_decay)
            net = net.replace_parameters(new_params[:-2])
            head_w, head_b = new_params[-2:]
            n_batches += 1
        record = {"epoch": epoch, "mean_loss": total / n_batches,
                  "classification_term": total / n_batches,
                  "attachment_term": 0.0, "val_accuracy": None}
        if val_set is not None:
            snapshot = TrainedModel(net, None, None, n_classes,
                                    softmax_head=SoftmaxHead(head_w, head_b))
            record["val_accuracy"] = evaluate(snapshot, val_set).accuracy
        history.append(record)

    metadata = {"scheme": "softmax", "epochs": config.epochs,
                "seed": config.seed}
    if history:
        metadata["final_loss"] = history[-1]["mean_loss"]
    return TrainedModel(net, None, None, n_classes, metadata=metadata,
                        softmax_head=SoftmaxHead(head_w, head_b),
                        history=history)
