"""Online training loop: presynaptic traces, the three-factor weight
update, and an AdamW optimizer with cosine-annealed learning rate.

Temporal credit assignment is carried entirely by the traces; no gradient
ever flows backward through time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .credit import LossSpec, PerturbSampler, loss_and_error
from .network import ForwardTape, ModelSpec, accumulate_logits, forward_step
from .rng import RngState


class TraceState:
    """Exponentially decayed running sum of each hidden weight layer's input:
    a_hat[t] = leak * a_hat[t-1] + x[t]."""

    def __init__(self, traces: list):
        self.traces = traces
        # The bias sees a constant presynaptic input of 1, so its trace is
        # the same geometric sum for every hidden layer.
        self.bias_trace = 0.0

    @classmethod
    def zeros_like(cls, x_in: list) -> "TraceState":
        return cls([np.zeros_like(x) for x in x_in])

    def update(self, x_in: list, leak: float) -> None:
        if len(x_in) != len(self.traces):
            raise ValueError("trace/input layer count mismatch")
        for a, x in zip(self.traces, x_in):
            if a.shape != x.shape:
                raise ValueError(f"trace shape {a.shape} != input shape {x.shape}")
            a *= leak
            a += x
        self.bias_trace = leak * self.bias_trace + 1.0


def update_traces(traces: TraceState, x_in: list, leak: float) -> TraceState:
    traces.update(x_in, leak)
    return traces


class GradAccum:
    """Per-parameter gradient sums for the current optimizer step."""

    def __init__(self, params: list):
        self.grads = [np.zeros_like(p) for p in params]

    def zero(self):
        for g in self.grads:
            g[...] = 0.0

    def add(self, idx: int, g: np.ndarray):
        self.grads[idx] += g


def three_factor_update(model: ModelSpec, traces: TraceState, errors: list,
                        e_readout: np.ndarray, step, accum: GradAccum) -> None:
    """Accumulate outer-product weight gradients for one time step.

    Hidden layer l gets errors[l] (gradient at the postsynaptic membrane
    drive) times the trace of its presynaptic input; the plain affine
    readout pairs its error with its instantaneous input.
    """
    hidden = [b.layer for b in model.blocks if b.layer.kind in ("fc", "conv")]
    pi = 0
    for layer, g, a in zip(hidden, errors, traces.traces):
        if layer.kind == "fc":
            g = g.reshape(g.shape[0], -1)
        gW, gb = layer.weight_grad(g, a)
        accum.add(pi, gW)
        accum.add(pi + 1, gb * traces.bias_trace)
        pi += 2
    gW, gb = model.readout.weight_grad(np.atleast_2d(e_readout), step.x_in[-1])
    accum.add(pi, gW)
    accum.add(pi + 1, gb)


@dataclass
class OptimState:
    """AdamW with decoupled weight decay and cosine annealing to zero."""

    lr: float = 2e-4
    weight_decay: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    total_steps: int = 1
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def lr_at(self, k: int) -> float:
        if self.total_steps <= 0:
            return self.lr
        frac = min(k / self.total_steps, 1.0)
        return self.lr * 0.5 * (1.0 + np.cos(np.pi * frac))


def optimizer_step(params: list, accum: GradAccum, opt: OptimState) -> None:
    """Apply one AdamW update in place and zero the accumulator."""
    if not opt.m:
        opt.m = [np.zeros_like(p) for p in params]
        opt.v = [np.zeros_like(p) for p in params]
    lr = opt.lr_at(opt.step_count)
    opt.step_count += 1
    t = opt.step_count
    b1, b2 = opt.beta1, opt.beta2
    for p, g, m, v in zip(params, accum.grads, opt.m, opt.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p -= lr * (mhat / (np.sqrt(vhat) + opt.eps) + opt.weight_decay * p)
    accum.zero()


@dataclass
class StepReport:
    loss: float
    accuracy: float
    grad_norms: list
    firing_rates: list
    spike_counts: list


def train_step(model: ModelSpec, x_seq: np.ndarray, y: np.ndarray, engine,
               optim: OptimState, loss_spec: LossSpec,
               sampler: PerturbSampler | None = None,
               local=None, dropout_rng: RngState | None = None,
               keep_tape: bool = False, grad_hook=None):
    """One optimizer step over a batch: T forward sweeps with per-step
    error feedback and gradient accumulation, then a single AdamW update.

    x_seq has shape (T, B, *input_shape). Returns a StepReport (and the
    tape when keep_tape is set).
    """
    T, B = x_seq.shape[0], x_seq.shape[1]
    if B == 0:
        raise ValueError("empty batch")
    states = model.init_states(B)
    traces: TraceState | None = None
    accum = GradAccum(model.parameters())
    tape = ForwardTape()
    losses = []

    needs_noise = getattr(engine, "needs_perturbation", False)
    if needs_noise and sampler is None:
        raise ValueError(f"engine {engine.name} requires a perturbation sampler")

    for t in range(T):
        perturb = sampler.step(t, B) if needs_noise and sampler is not None else None
        states, o_t, step = forward_step(model, states, x_seq[t], perturb, dropout_rng)
        loss_t, e, per_sample = loss_and_error(o_t, y, loss_spec)
        step.per_sample_loss = per_sample
        losses.append(loss_t)
        tape.append(step)

        if traces is None:
            traces = TraceState.zeros_like(step.x_in[:-1])
        traces.update(step.x_in[:-1], model.lif.leak)

        errors = engine.errors(model, step, e)
        if local is not None:
            local.apply(model, step, y, errors, accum, loss_spec)
        three_factor_update(model, traces, errors, e, step, accum)

        if hasattr(engine, "update_feedback") and perturb is not None:
            engine.update_feedback(perturb, o_t)

    grad_norms = [float(np.linalg.norm(g)) for g in accum.grads]
    if grad_hook is not None:
        grad_hook([g.copy() for g in accum.grads])
    optimizer_step(model.parameters(), accum, optim)
    if local is not None:
        local.step_optimizer()
    model.refresh_effective()

    logits = accumulate_logits(tape)
    acc = float((logits.argmax(axis=1) == y).mean())
    counts = tape.spike_counts()
    widths = model.spiking_widths
    rates = [float(c / (w * B * T)) for c, w in zip(counts, widths)]
    report = StepReport(
        loss=float(np.mean(losses)),
        accuracy=acc,
        grad_norms=grad_norms,
        firing_rates=rates,
        spike_counts=[float(c) for c in counts],
    )
    if keep_tape:
        return report, tape
    return report


def evaluate(model: ModelSpec, x: np.ndarray, y: np.ndarray, T: int, encoder,
             loss_spec: LossSpec, batch_size: int = 256):
    """Noise-free evaluation; classification by accumulated logits."""
    n = len(y)
    correct = 0
    total_loss = 0.0
    steps = 0
    for start in range(0, n, batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        x_seq = encoder(xb, T)
        states = model.init_states(len(yb))
        tape = ForwardTape()
        for t in range(T):
            states, o_t, step = forward_step(model, states, x_seq[t])
            loss_t, _, _ = loss_and_error(o_t, yb, loss_spec)
            total_loss += loss_t
            steps += 1
            tape.append(step)
        logits = accumulate_logits(tape)
        correct += int((logits.argmax(axis=1) == yb).sum())
    return correct / n, total_loss / max(steps, 1)
