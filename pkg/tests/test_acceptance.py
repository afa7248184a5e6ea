"""Acceptance gate: one test per criterion, at the stated tolerances.

Criteria 6, 7, and 10 are specified on MNIST. The raw IDX files cannot be
downloaded in this sandbox (no general network access), so when they are
absent under the data directory those tests skip with an explicit
diagnostic, and equivalent desk-scale proxies on the bundled scikit-learn
digits set run in their place. Drop the four standard IDX files into
./data (or point OPZO_DATA_DIR at them) to run the full versions.
"""

import os
import statistics

import numpy as np
import pytest

from opzo import verify
from opzo.metrics import CostModelInput, cost_model
from opzo.rng import NoiseDistribution
from opzo.runner import RunConfig, analyze_variance, run

MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def _data_dir():
    return os.environ.get("OPZO_DATA_DIR", "data")


def _mnist_missing():
    d = _data_dir()
    missing = [f for f in MNIST_FILES if not os.path.exists(os.path.join(d, f))]
    return missing


def _require_mnist():
    missing = _mnist_missing()
    if missing:
        pytest.skip(
            f"MNIST IDX files not found under {_data_dir()!r} (missing: {missing}); "
            "this environment has no dataset network access. The digits-proxy "
            "test below covers the same property at desk scale."
        )


def _assert_all(results):
    failed = [r for r in results if not r.passed]
    assert not failed, "; ".join(f"{r.name}: {r.detail}" for r in failed)


# ---------------------------------------------------------------------------
# 1. Estimator unbiasedness


def test_criterion_01_unbiased_estimators():
    _assert_all([
        verify.check_two_point_unbiased(d=8, alpha=1e-3, draws=200_000),
        verify.check_single_point_unbiased(d=8, alpha=1e-3, draws=200_000),
    ])


# 2. Momentum feedback converges to the Jacobian transpose


def test_criterion_02_feedback_convergence():
    _assert_all([verify.check_feedback_convergence(momentum=0.999, updates=10_000)])


# 3. Variance formula matches measurement


def test_criterion_03_variance_formula():
    _assert_all([
        verify.check_variance_prediction(NoiseDistribution.GAUSSIAN),
        verify.check_variance_prediction(NoiseDistribution.RADEMACHER),
    ])


# 4. Projected errors remain a descent direction


def test_criterion_04_descent_direction():
    _assert_all([verify.check_descent_direction(samples=1000)])


# 5. Online gradient matches the finite-difference oracle


def test_criterion_05_finite_difference_oracle():
    _assert_all([verify.check_bp_sg_finite_difference(h=1e-5)])


# 6. Per-layer gradient variance ordering


def _hidden_variance(dataset, engine):
    cfg = RunConfig(engine=engine, model="fc300-desk", dataset=dataset,
                    epochs=1, batch_size=128, time_steps=4, seed=0, lr=1e-3)
    result = analyze_variance(cfg)
    # the first four entries are the hidden W/b tensors; the readout
    # (shared across engines) is excluded from the comparison
    return sum(result["layer_variances"][:4])


def _check_variance_ordering(dataset):
    v_zo = _hidden_variance(dataset, "zo_sp")
    v_opzo = _hidden_variance(dataset, "opzo")
    v_bp = _hidden_variance(dataset, "bp_sg")
    assert v_zo / v_opzo > 1e2, (v_zo, v_opzo)
    assert v_opzo / v_bp < 1e2, (v_opzo, v_bp)


def test_criterion_06_variance_ordering_mnist():
    _require_mnist()
    _check_variance_ordering("mnist")


def test_criterion_06_variance_ordering_digits_proxy():
    _check_variance_ordering("digits")


# 7. Accuracy ordering across engines


def _median_accs(dataset, epochs, seeds, lr):
    medians = {}
    for engine in ("bp_sg", "opzo", "dfa", "zo_sp"):
        accs = []
        for seed in seeds:
            cfg = RunConfig(engine=engine, model="fc300-desk", dataset=dataset,
                            epochs=epochs, batch_size=64, time_steps=4,
                            seed=seed, lr=lr)
            accs.append(run(cfg).final_test_acc)
        medians[engine] = statistics.median(accs)
    return medians


def test_criterion_07_accuracy_ordering_mnist():
    _require_mnist()
    med = _median_accs("mnist", epochs=10, seeds=(0, 1, 2), lr=2e-4)
    assert med["bp_sg"] >= 0.975, med
    assert med["opzo"] >= 0.970, med
    assert med["opzo"] - med["dfa"] >= 0.0, med
    assert med["zo_sp"] <= 0.92, med


def test_criterion_07_accuracy_ordering_digits_proxy():
    med = _median_accs("digits", epochs=10, seeds=(0, 1, 2), lr=1e-3)
    assert med["bp_sg"] >= 0.95, med
    assert med["opzo"] >= 0.95, med
    assert med["opzo"] - med["dfa"] >= 0.0, med
    assert med["zo_sp"] <= 0.85, med


# 8. Noise robustness across distribution and injection position


def test_criterion_08_noise_robustness():
    accs = {}
    for dist in ("gaussian", "rademacher"):
        for pos in ("after_neuron", "before_neuron"):
            cfg = RunConfig(engine="opzo", model="conv-desk",
                            dataset="synthetic-conv", epochs=8, batch_size=64,
                            time_steps=4, seed=5, lr=1e-3,
                            noise_dist=dist, noise_position=pos)
            accs[(dist, pos)] = run(cfg).final_test_acc
    baseline = accs[("gaussian", "after_neuron")]
    for combo, acc in accs.items():
        assert acc >= baseline - 0.02, (combo, acc, baseline)


# 9. Neuromorphic cost model reference point


def test_criterion_09_cost_model():
    table = cost_model(CostModelInput(n_hidden_layers=2, hidden_width=800,
                                      output_width=10))
    assert table["bp_sg"].operations == 648_000
    assert table["opzo"].operations == 16_000
    assert table["zo_sp"].operations == 1_600


# 10. Bit-level determinism of a training run


def _determinism_config(dataset, out_dir, lr):
    return RunConfig(engine="opzo", model="fc300-desk", dataset=dataset,
                     epochs=2, batch_size=64, time_steps=4, seed=1, lr=lr,
                     out_dir=out_dir)


def _check_determinism(dataset, lr, tmp_path):
    run(_determinism_config(dataset, str(tmp_path / "a"), lr))
    run(_determinism_config(dataset, str(tmp_path / "b"), lr))
    with open(tmp_path / "a" / "metrics.csv", "rb") as fa, \
         open(tmp_path / "b" / "metrics.csv", "rb") as fb:
        assert fa.read() == fb.read()


def test_criterion_10_determinism_mnist(tmp_path):
    _require_mnist()
    _check_determinism("mnist", 2e-4, tmp_path)


def test_criterion_10_determinism_digits_proxy(tmp_path):
    _check_determinism("digits", 1e-3, tmp_path)
