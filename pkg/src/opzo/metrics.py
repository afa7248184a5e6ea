"""Gradient-variance measurement, firing/SynOp profiling, and the
neuromorphic cost model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def gradient_variance(batch_grads: list) -> float:
    """var = sum ||g_i - g_bar||^2 / n with n = batches * elements.

    batch_grads is a list of same-shaped gradient arrays, one per batch.
    """
    if len(batch_grads) < 2:
        raise ValueError("need at least 2 batch gradients")
    g = np.stack([np.asarray(b).ravel() for b in batch_grads])
    gbar = g.mean(axis=0)
    n = g.shape[0] * g.shape[1]
    return float(((g - gbar) ** 2).sum() / n)


def per_layer_gradient_variance(per_batch_layer_grads: list) -> list:
    """Apply gradient_variance layer-wise: input is a list over batches of
    lists over layers."""
    n_layers = len(per_batch_layer_grads[0])
    return [
        gradient_variance([b[i] for b in per_batch_layer_grads]) for i in range(n_layers)
    ]


@dataclass
class VarianceReport:
    """Empirical decomposition terms feeding the analytic predictions."""

    d: int
    m: int
    B: int
    beta: float
    alpha: float
    V_theta: float
    S_theta: float
    V_L: float
    S_L: float
    V_o: float = 0.0
    S_o: float = 0.0
    V_eps: float = 0.0
    V_oM: float = 0.0

    def __post_init__(self):
        for name in ("V_theta", "S_theta", "V_L", "S_L", "V_o", "S_o", "V_eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d < self.m:
            raise ValueError("d must be >= m")


def predict_variance(report: VarianceReport):
    """Analytic average gradient variance of the single-point zeroth-order
    estimator and of the momentum-feedback (pseudo-zeroth-order) estimator."""
    if report.B == 0:
        raise ValueError("B must be positive")
    if report.alpha == 0.0:
        raise ValueError("alpha must be nonzero")
    d, beta, a2 = report.d, report.beta, report.alpha**2
    zo_sp = (
        (d + beta) * report.V_theta
        + (d + beta - 1.0) * report.S_theta
        + report.V_L / a2
        + report.S_L / a2
    ) / report.B
    pzo = (
        report.m * report.V_eps * report.V_o
        + report.m * report.V_eps * report.S_o
        + report.V_oM
    ) / report.B
    return zo_sp, pzo


@dataclass
class EfficiencyReport:
    layer_rates: list
    total_rate: float
    synops: float


def layer_fanouts(model) -> list:
    """Outgoing synapses per neuron of each spiking layer: the number of
    weights one of its spikes multiplies in the next weight layer (average
    pooling between costs nothing; it only regroups the spike)."""
    fanouts = []
    spiking = list(model.spiking_indices)
    weight_layers = [b.layer for b in model.blocks if b.layer.kind in ("fc", "conv")]
    for pos, bi in enumerate(spiking):
        if pos + 1 < len(weight_layers):
            nxt = weight_layers[pos + 1]
        else:
            nxt = model.readout
        if nxt.kind == "fc":
            fanouts.append(nxt.W.shape[0])
        else:
            cout, _, k, _ = nxt.W.shape
            fanouts.append(cout * k * k / (nxt.stride * nxt.stride))
    return fanouts


def efficiency_profile(model, tapes: list, batch_sizes: list | None = None) -> EfficiencyReport:
    """Per-layer and total firing rates plus synaptic operation counts over
    recorded tapes (one tape per batch)."""
    if not tapes or any(len(t) == 0 for t in tapes):
        raise ValueError("empty tapes")
    widths = model.spiking_widths
    counts = np.zeros(len(widths))
    denom = np.zeros(len(widths))
    for tape in tapes:
        B = tape.steps[0].s[0].shape[0]
        counts += tape.spike_counts()
        denom += np.array(widths, dtype=float) * B * len(tape)
    rates = counts / denom
    fanouts = layer_fanouts(model)
    synops = float(sum(c * f for c, f in zip(counts, fanouts)))
    total_rate = float(counts.sum() / denom.sum())
    return EfficiencyReport([float(r) for r in rates], total_rate, synops)


@dataclass(frozen=True)
class CostModelInput:
    n_hidden_layers: int
    hidden_width: int
    output_width: int

    def __post_init__(self):
        if min(self.n_hidden_layers, self.hidden_width, self.output_width) <= 0:
            raise ValueError("all dimensions must be positive")


@dataclass
class CostEntry:
    memory: int
    operations: int
    parallelizable: bool


def cost_model(inp: CostModelInput) -> dict:
    """Exact polynomial training-cost estimates on neuromorphic hardware
    for the error feedback of each method (memory and operation counts)."""
    N, n, m = inp.n_hidden_layers, inp.hidden_width, inp.output_width
    bp = (N - 1) * n * n + m * n
    return {
        "bp_sg": CostEntry(bp, bp, parallelizable=False),
        "dfa": CostEntry(N * m * n, N * m * n, parallelizable=True),
        "zo_sp": CostEntry(N * n, N * n, parallelizable=True),
        "opzo": CostEntry(N * m * n, N * m * n, parallelizable=True),
    }
