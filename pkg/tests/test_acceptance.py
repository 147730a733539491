"""Acceptance suite: one test per gate criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.

The desk-scale benchmark is the two-rings dataset (radii 1 and 2, radial
noise 0.1, seed 7; 500 train / 250 val / 250 test per class) with a
two-layer backbone (2 -> 2 ReLU -> 8 linear, seed 0), bandwidth 0.35 after
average-norm rescaling, Adam at 0.05 for 100 epochs, batch 32.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

import helpers
from impostornet import (Backbone, ImpostorSet, KernelParams, SyntheticSpec,
                         TrainConfig, TrainedModel, bench_inference, evaluate,
                         generate, op_counters, read_dataset, train,
                         write_dataset)
from impostornet.cli import main as cli_main
from impostornet.loss import LooseParams, loose_loss, nca_loss
from impostornet.pq import decode, encode, train_codebook
from impostornet.backbone import backward, forward


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"\n[ACCEPTANCE] {name}: PASS")


RINGS = SyntheticSpec(generator="rings", classes=2, per_class=1000,
                      noise=0.1, seed=7)
BACKBONE_DIMS = [2, 2, 8]
BACKBONE_SEED = 0


def ring_config(scheme, epochs=100, **kw):
    base = dict(scheme=scheme, sigma=0.35, epochs=epochs, seed=0,
                learning_rate=0.05, batch_size=32)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def splits():
    return generate(RINGS)


@pytest.fixture(scope="module")
def scheme_runs(splits):
    """The four training runs shared by the method-advantage and
    scheme-ordering criteria, with their wall-clock time."""
    start = time.perf_counter()
    runs = {}
    for scheme, epochs in (("fixed", 0), ("fixed", 100), ("loose", 100),
                           ("softmax", 100)):
        net = Backbone.init(BACKBONE_DIMS, seed=BACKBONE_SEED)
        key = "init" if epochs == 0 else scheme
        model = train(splits.train, ring_config(scheme, epochs), net)
        runs[key] = evaluate(model, splits.test).accuracy
    runs["elapsed"] = time.perf_counter() - start
    return runs


class TestGradientSuite:
    def test_gradients_match_finite_differences(self):
        with criterion("gradient-suite"):
            start = time.perf_counter()
            rng = np.random.default_rng(1000)
            sigma = KernelParams(0.7)
            for case in range(50):
                emb, idx, lab, points, imp_labels = \
                    helpers.random_loss_instance(rng)
                imp = ImpostorSet(points, imp_labels, 3)
                for use_loose in (False, True):
                    if use_loose:
                        _, grads = loose_loss(emb, idx, lab, imp, sigma,
                                              LooseParams(1.0))
                        value = lambda e, p: helpers.direct_loose_value(
                            e, idx, lab, p, imp_labels, 0.7, 1.0)
                    else:
                        _, grads = nca_loss(emb, idx, lab, imp, sigma)
                        value = lambda e, p: helpers.direct_nca_value(
                            e, idx, lab, p, imp_labels, 0.7)
                    fd_emb = helpers.fd_gradient(
                        lambda e: value(e, points), emb)
                    fd_imp = helpers.fd_gradient(
                        lambda p: value(emb, p), points)
                    assert helpers.gradient_close(grads.d_embeddings, fd_emb)
                    assert helpers.gradient_close(grads.d_impostors, fd_imp)

            for case in range(50):
                n_layers = int(rng.integers(1, 4))
                dims = [int(rng.integers(2, 9)) for _ in range(n_layers + 1)]
                net = Backbone.init(dims, seed=int(rng.integers(1 << 30)))
                x = rng.normal(0, 1, (3, net.input_dim))
                w = rng.normal(0, 1, (3, net.embed_dim))
                _, cache = forward(net, x)
                grads, _ = backward(net, cache, w)
                params = net.parameters()
                for p_i, param in enumerate(params):
                    def objective(values, p_i=p_i):
                        trial = [v.astype(np.float64) for v in params]
                        trial[p_i] = values.astype(np.float64)
                        out, _ = forward(net.replace_parameters(trial), x)
                        return (w * out).sum()
                    fd = helpers.fd_gradient(objective, param)
                    assert helpers.gradient_close(grads[p_i], fd)
            elapsed = time.perf_counter() - start
            assert elapsed < 30.0, f"gradient suite took {elapsed:.1f}s"


class TestOracleSuite:
    def test_classify_matches_brute_force(self):
        with criterion("oracle-suite"):
            rng = np.random.default_rng(2000)
            from impostornet import classify
            for case in range(100):
                m = int(rng.integers(2, 51))
                d = int(rng.integers(1, 9))
                n_classes = int(rng.integers(2, 6))
                points = rng.normal(0, 1, (m, d))
                labels = rng.integers(0, n_classes, m)
                y = rng.normal(0, 1, d)
                sigma = float(rng.uniform(0.2, 3.0))
                imp = ImpostorSet(points, labels, n_classes)
                got = classify(y, imp, KernelParams(sigma))
                want = helpers.brute_force_distribution(
                    y, points, labels, n_classes, sigma)
                np.testing.assert_allclose(got, want, atol=1e-6)

            from impostornet.pq import (adc_distance, adc_distance_table,
                                        classify_compressed)
            for case in range(100):
                m = int(rng.integers(8, 40))
                n_sub = int(rng.integers(1, 5))
                d = n_sub * int(rng.integers(1, 4))
                k = int(rng.integers(1, 7))
                n_classes = int(rng.integers(2, 5))
                points = rng.normal(0, 1, (m, d))
                labels = rng.integers(0, n_classes, m)
                imp = ImpostorSet(points, labels, n_classes)
                cb = train_codebook(imp, n_sub, min(k, m), seed=case)
                codes = encode(cb, points)
                decoded = decode(cb, codes)
                y = rng.normal(0, 1, d)
                sigma = float(rng.uniform(0.3, 2.0))
                got = classify_compressed(y, cb, codes, labels, n_classes,
                                          KernelParams(sigma))
                want = helpers.brute_force_distribution(
                    y, decoded, labels, n_classes, sigma)
                np.testing.assert_allclose(got, want, atol=1e-6)
                # table-lookup distances equal exact decoded distances
                table = adc_distance_table(y, cb)
                for j in range(0, m, 5):
                    exact = float(((y - decoded[j]) ** 2).sum())
                    assert abs(adc_distance(table, codes[j]) - exact) < 1e-9


class TestMethodAdvantage:
    def test_loose_beats_softmax_by_ten_points(self, scheme_runs):
        with criterion("method-advantage"):
            assert scheme_runs["loose"] >= 0.95, scheme_runs
            assert scheme_runs["softmax"] <= scheme_runs["loose"] - 0.10, \
                scheme_runs
            assert scheme_runs["elapsed"] < 120.0


class TestSchemeOrdering:
    def test_loose_fixed_and_initialization_order(self, scheme_runs):
        with criterion("scheme-ordering"):
            assert scheme_runs["loose"] >= scheme_runs["fixed"] - 0.02, \
                scheme_runs
            assert scheme_runs["fixed"] >= scheme_runs["init"] + 0.05, \
                scheme_runs


class TestCompressionAnalogue:
    def test_training_against_coded_points_stays_close(self, splits):
        with criterion("compression-analogue"):
            dims = [2, 2, 16]
            net = Backbone.init(dims, seed=BACKBONE_SEED)
            plain = train(splits.train, ring_config("fixed"), net)
            coded = train(splits.train,
                          ring_config("fixed", pq_m=8, pq_k=16), net)
            acc_plain = evaluate(plain, splits.test).accuracy
            acc_coded = evaluate(coded, splits.test).accuracy
            assert acc_plain - acc_coded <= 0.02, (acc_plain, acc_coded)
            from impostornet import memory_report
            report = memory_report(coded.codebook, coded.impostors.count)
            assert report["code_bytes"] == splits.train.count * 8


class TestOpenSetAnalogue:
    def test_loose_separates_unseen_better_than_softmax(self, splits,
                                                        tmp_path, capsys):
        with criterion("open-set-analogue"):
            train_path = tmp_path / "train.impd"
            write_dataset(train_path, splits.train)
            write_dataset(tmp_path / "seen.impd", splits.test)
            three = generate(SyntheticSpec(generator="rings", classes=3,
                                           per_class=1000, noise=0.1,
                                           seed=7))
            unseen = three.test.subset(three.test.labels == 2)
            write_dataset(tmp_path / "unseen.impd", unseen)

            flags = ["--data", str(train_path), "--hidden-dims", "2",
                     "--embed-dim", "8", "--sigma", "0.35", "--lr", "0.05",
                     "--epochs", "100", "--seed", "0", "--batch-size", "32"]
            ks = {}
            for scheme in ("loose", "softmax"):
                model_path = tmp_path / f"{scheme}.impm"
                assert cli_main(["train", *flags, "--scheme", scheme,
                                 "--out", str(model_path)]) == 0
                assert cli_main(["openset", "--model", str(model_path),
                                 "--seen", str(tmp_path / "seen.impd"),
                                 "--unseen",
                                 str(tmp_path / "unseen.impd")]) == 0
                stdout = capsys.readouterr().out
                line = [l for l in stdout.splitlines()
                        if l.startswith("ks_distance=")][0]
                ks[scheme] = float(line.split("=", 1)[1])
            assert ks["loose"] > ks["softmax"], ks


class TestCostDecomposition:
    def test_counters_exact_and_rbf_fraction_small(self):
        with criterion("cost-decomposition"):
            rng = np.random.default_rng(3000)
            m_points, d = 10_000, 512
            net = Backbone.init([512, 4096, 4096, 4096, 512], seed=1)
            imp = ImpostorSet(rng.normal(0, 1, (m_points, d)),
                              rng.integers(0, 50, m_points), 50)
            model = TrainedModel(net, imp, KernelParams(0.5), 50)
            counters = op_counters(model, np.zeros(512, dtype=np.float32))
            assert counters["rbf_madds"] == m_points * d + m_points
            assert counters["backbone_madds"] >= 1_000_000
            queries = rng.normal(0, 1, (8, 512)).astype(np.float32)
            report = bench_inference(model, queries, repetitions=7)
            assert report.rbf_fraction < 0.5, report


class TestDeterminism:
    def test_repeated_runs_are_bitwise_identical(self, splits, tmp_path,
                                                 capsys):
        with criterion("determinism"):
            data = tmp_path / "train.impd"
            test = tmp_path / "test.impd"
            write_dataset(data, splits.train)
            write_dataset(test, splits.test)
            flags = ["--data", str(data), "--scheme", "loose", "--epochs",
                     "10", "--seed", "0", "--hidden-dims", "2",
                     "--embed-dim", "8", "--sigma", "0.35", "--lr", "0.05"]
            blobs, accuracies = [], []
            for name in ("one", "two"):
                model_path = tmp_path / f"{name}.impm"
                assert cli_main(["train", *flags, "--out",
                                 str(model_path)]) == 0
                assert cli_main(["eval", "--model", str(model_path),
                                 "--data", str(test)]) == 0
                stdout = capsys.readouterr().out
                acc = [l for l in stdout.splitlines()
                       if l.startswith("accuracy=")][0]
                blobs.append(model_path.read_bytes())
                accuracies.append(acc)
            assert blobs[0] == blobs[1]
            assert accuracies[0] == accuracies[1]
