"""RBF reference-point classifiers on learned embeddings.

A small trainable embedding network feeds a nonparametric voting head: one
labeled reference point per training example, classified by Gaussian-kernel
votes. Three training schemes (fixed, tied, loose) control whether and how
the points move; the point set can be product-quantized for memory, and the
prediction entropy separates unseen classes.
"""

from ._kernels import active_backend, available_backends, set_backend
from .backbone import Backbone, backward, forward, rescale_last_layer
from .bench import TimingReport, bench_inference, op_counters
from .data import (LabeledEmbeddingSet, SyntheticSpec, generate,
                   read_dataset, read_model, write_dataset, write_model)
from .loss import LooseParams, LossGradients, LossValue, loose_loss, nca_loss
from .openset import EntropyReport, entropy, ks_distance, open_set_report
from .pq import (PqCodebook, adc_distance, adc_distance_table,
                 classify_compressed, decode, encode, kmeans, memory_report,
                 train_codebook)
from .rbf import (ImpostorSet, KernelParams, classify, classify_batch,
                  kernel_weight, predict_label)
from .train import (AdamState, EvalResult, SoftmaxHead, TrainConfig,
                    TrainedModel, adam_step, evaluate, init_impostors,
                    normalize_scale, predict_labels, predict_proba, train,
                    train_softmax)

__version__ = "0.1.0"
