"""Experiment configuration, the training driver, and run comparison.

A run is fully described by a JSON config. Everything the run touches is
seeded from config fields, so two runs from the same config produce
byte-identical metrics files.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from .credit import (
    DfaEngine,
    FeedbackState,
    LossSpec,
    OpzoEngine,
    PerturbSampler,
    ZoSpEngine,
)
from .credit import BpSgEngine
from .data import Dataset, EncoderKind, EncoderSpec
from .local_learning import LocalLearning
from .metrics import per_layer_gradient_variance
from .network import build_model
from .online import OptimState, evaluate, train_step
from .rng import NoiseDistribution, RngState

DATA_DIR_ENV = "OPZO_DATA_DIR"


@dataclass
class RunConfig:
    engine: str
    model: str
    dataset: str
    epochs: int = 1
    batch_size: int = 128
    time_steps: int = 6
    seed: int = 0
    lr: float = 2e-4
    weight_decay: float = 2e-4
    ce_weight: float = 0.9
    dropout: float = 0.0
    noise_dist: str = "gaussian"
    noise_position: str = "after_neuron"
    antithetic: bool = True
    alpha_start: float = 0.2
    alpha_end: float = 0.01
    feedback_momentum: float = 0.99999
    local_learning: bool = False
    local_scale: float = 0.01
    igl_split: int | None = None
    data_dir: str | None = None
    out_dir: str | None = None
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.engine not in ("bp_sg", "dfa", "zo_sp", "opzo"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.time_steps < 1:
            raise ValueError("epochs, batch_size, time_steps must be positive")
        NoiseDistribution(self.noise_dist)
        if self.noise_position not in ("after_neuron", "before_neuron"):
            raise ValueError(f"unknown noise position {self.noise_position!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def alpha_at(self, epoch: int) -> float:
        if self.epochs == 1:
            return self.alpha_start
        frac = epoch / (self.epochs - 1)
        return self.alpha_start + (self.alpha_end - self.alpha_start) * frac


def resolve_data_dir(config: RunConfig) -> str:
    return config.data_dir or os.environ.get(DATA_DIR_ENV, "data")


def load_datasets(config: RunConfig):
    """Return (train, test, EncoderSpec) for the configured dataset."""
    name = config.dataset
    if name == "mnist":
        d = resolve_data_dir(config)
        train = data_mod.load_mnist(d, "train")
        test = data_mod.load_mnist(d, "test")
        train, test, _ = data_mod.normalize(train, test)
        return train, test, EncoderSpec(EncoderKind.CONSTANT_CURRENT)
    if name == "digits":
        train, test = data_mod.load_digits_dataset(seed=1)
        train, test, _ = data_mod.normalize(train, test)
        return train, test, EncoderSpec(EncoderKind.CONSTANT_CURRENT)
    if name == "synthetic-fc":
        full = data_mod.make_synthetic_fc(768, seed=11)
        train, test = _split(full, 512)
        train, test, _ = data_mod.normalize(train, test)
        return train, test, EncoderSpec(EncoderKind.CONSTANT_CURRENT)
    if name == "synthetic-conv":
        full = data_mod.make_synthetic_conv(840, size=12, seed=12)
        train, test = _split(full, 600)
        train, test, _ = data_mod.normalize(train, test)
        return train, test, EncoderSpec(EncoderKind.CONSTANT_CURRENT)
    if name == "synthetic-events":
        full = data_mod.make_synthetic_event_frames(840, T=config.time_steps, seed=13)
        train, test = _split(full, 600)
        return train, test, EncoderSpec(EncoderKind.PRE_BINNED_FRAMES)
    if name == "pbf":
        d = resolve_data_dir(config)
        train = data_mod.load_pbf(os.path.join(d, "train.pbf"))
        test = data_mod.load_pbf(os.path.join(d, "test.pbf"))
        return train, test, EncoderSpec(EncoderKind.PRE_BINNED_FRAMES)
    raise ValueError(f"unknown dataset {name!r}")


def _split(ds: Dataset, n_train: int):
    return (
        Dataset(ds.x[:n_train], ds.y[:n_train], ds.num_classes, ds.frames),
        Dataset(ds.x[n_train:], ds.y[n_train:], ds.num_classes, ds.frames),
    )


def build_engine(config: RunConfig, model, rng: RngState):
    widths = model.spiking_widths
    m = model.num_classes
    if config.engine == "bp_sg":
        return BpSgEngine()
    if config.engine == "dfa":
        return DfaEngine(FeedbackState.random_fixed(widths, m, rng.fork("dfa-feedback")))
    if config.engine == "zo_sp":
        return ZoSpEngine()
    return OpzoEngine(
        FeedbackState.momentum_jacobian(widths, m, config.feedback_momentum)
    )


def build_sampler(config: RunConfig, model, rng: RngState, alpha: float):
    return PerturbSampler(
        model.spiking_shapes,
        alpha,
        config.noise_position,
        NoiseDistribution(config.noise_dist),
        rng.fork("perturbation"),
        antithetic=config.antithetic,
    )


@dataclass
class RunRecord:
    config: dict
    epochs: list
    final_test_acc: float
    train_seconds: float

    def to_dict(self):
        return dataclasses.asdict(self)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def run(config: RunConfig, grad_hook=None, progress=None, return_state=False):
    """Train per the config and return the record. When config.out_dir is
    set, also write config.json, record.json, and the per-step metrics.csv
    (which carries no timestamps, so repeated runs match byte for byte).
    """
    train_ds, test_ds, enc = load_datasets(config)
    rng = RngState.from_seed(config.seed)
    model = build_model(
        config.model, train_ds.input_shape, train_ds.num_classes, rng, dropout=config.dropout
    )
    engine = build_engine(config, model, rng)
    sampler = build_sampler(config, model, rng, config.alpha_start)
    loss_spec = LossSpec(config.ce_weight)
    steps_per_epoch = (len(train_ds) + config.batch_size - 1) // config.batch_size
    optim = OptimState(
        lr=config.lr,
        weight_decay=config.weight_decay,
        total_steps=config.epochs * steps_per_epoch,
    )
    local = None
    if config.local_learning or config.igl_split is not None:
        local = LocalLearning(
            model,
            rng,
            loss_scale=config.local_scale,
            enabled=config.local_learning,
            igl_split=config.igl_split,
            optim=OptimState(lr=config.lr, weight_decay=config.weight_decay,
                             total_steps=config.epochs * steps_per_epoch),
        )
    dropout_rng = rng.fork("dropout") if config.dropout > 0.0 else None
    shuffle_rng = rng.fork("shuffle")
    enc_rng = rng.fork("encoder")

    def encoder(xb, T):
        x_seq = data_mod.encode(xb, enc, T, enc_rng)
        if x_seq.shape[2:] != model.input_shape:
            # FC presets take flattened inputs.
            x_seq = x_seq.reshape(x_seq.shape[:2] + model.input_shape)
        return x_seq

    csv_rows = []
    header = None
    epochs_out = []
    step_idx = 0
    t0 = time.monotonic()
    for epoch in range(config.epochs):
        sampler.alpha = config.alpha_at(epoch)
        losses, accs = [], []
        for xb, yb in data_mod.batches(train_ds, config.batch_size, shuffle_rng):
            x_seq = encoder(xb, config.time_steps)
            report = train_step(
                model, x_seq, yb, engine, optim, loss_spec,
                sampler=sampler if getattr(engine, "needs_perturbation", False) else None,
                local=local, dropout_rng=dropout_rng, grad_hook=grad_hook,
            )
            losses.append(report.loss)
            accs.append(report.accuracy)
            if header is None:
                header = (
                    ["step", "epoch", "loss", "accuracy"]
                    + [f"grad_norm_{i}" for i in range(len(report.grad_norms))]
                    + [f"firing_rate_{i}" for i in range(len(report.firing_rates))]
                )
            csv_rows.append(
                [step_idx, epoch, report.loss, report.accuracy]
                + report.grad_norms
                + report.firing_rates
            )
            step_idx += 1
        test_acc, test_loss = evaluate(
            model, test_ds.x, test_ds.y, config.time_steps, encoder, loss_spec,
            config.eval_batch_size,
        )
        epochs_out.append(
            {
                "epoch": epoch,
                "alpha": sampler.alpha,
                "train_loss": float(np.mean(losses)),
                "train_acc": float(np.mean(accs)),
                "test_loss": test_loss,
                "test_acc": test_acc,
            }
        )
        if progress is not None:
            progress(epochs_out[-1])
    record = RunRecord(
        config=config.to_dict(),
        epochs=epochs_out,
        final_test_acc=epochs_out[-1]["test_acc"],
        train_seconds=time.monotonic() - t0,
    )
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        with open(os.path.join(config.out_dir, "config.json"), "w") as f:
            json.dump(config.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        with open(os.path.join(config.out_dir, "record.json"), "w") as f:
            json.dump(record.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        with open(os.path.join(config.out_dir, "metrics.csv"), "w") as f:
            f.write(",".join(header) + "\n")
            for row in csv_rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
    if return_state:
        return record, model, encoder, test_ds, loss_spec
    return record


def profile_run_efficiency(config: RunConfig, max_batches: int = 8):
    """Train per the config, then record noise-free test-set rollouts and
    report firing rates and synaptic operations."""
    from .metrics import efficiency_profile
    from .network import ForwardTape, forward_step

    record, model, encoder, test_ds, _ = run(config, return_state=True)
    tapes = []
    for i, (xb, yb) in enumerate(data_mod.batches(test_ds, config.eval_batch_size)):
        if i >= max_batches:
            break
        x_seq = encoder(xb, config.time_steps)
        states = model.init_states(len(yb))
        tape = ForwardTape()
        for t in range(config.time_steps):
            states, _, step = forward_step(model, states, x_seq[t])
            tape.append(step)
        tapes.append(tape)
    return record, efficiency_profile(model, tapes)


# ---------------------------------------------------------------------------
# Analyses built on the driver


def analyze_variance(config: RunConfig) -> dict:
    """Train one epoch and report per-weight-layer gradient variance over
    the epoch's batch gradients."""
    grads = []
    cfg = dataclasses.replace(config, epochs=1, out_dir=None)
    run(cfg, grad_hook=grads.append)
    layer_vars = per_layer_gradient_variance(grads)
    return {
        "engine": config.engine,
        "batches": len(grads),
        "layer_variances": layer_vars,
        "total_variance": float(sum(layer_vars)),
    }


def compare(run_dirs: list) -> list:
    """Summarize finished runs grouped by (dataset, model, engine):
    mean and spread of the final test accuracy across seeds."""
    groups: dict = {}
    for d in run_dirs:
        with open(os.path.join(d, "record.json")) as f:
            rec = json.load(f)
        c = rec["config"]
        key = (c["dataset"], c["model"], c["engine"])
        groups.setdefault(key, []).append(rec["final_test_acc"])
    rows = []
    for (dataset, model, engine), accs in sorted(groups.items()):
        a = np.array(accs)
        rows.append(
            {
                "dataset": dataset,
                "model": model,
                "engine": engine,
                "runs": len(accs),
                "mean_acc": float(a.mean()),
                "std_acc": float(a.std(ddof=1)) if len(accs) > 1 else 0.0,
            }
        )
    rows.sort(key=lambda r: (r["dataset"], r["model"], -r["mean_acc"]))
    return rows


def format_table(rows: list, columns: list) -> str:
    """Plain fixed-width table used by the CLI report commands."""
    cells = [[str(c) for c in columns]]
    for r in rows:
        cells.append([
            f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in columns
        ])
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
