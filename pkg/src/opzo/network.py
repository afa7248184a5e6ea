"""Layer and model definitions for spiking networks.

A model is a stack of hidden blocks (fully connected or convolutional
layers followed by LIF neurons, with average-pooling blocks interleaved)
topped by a non-spiking affine readout. The readout emits o[t] each step;
classification uses the accumulated sum of o[t] over the rollout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import convops
from .credit import PerturbRecord
from .neuron import LifConfig, NeuronState, SurrogateConfig, lif_step
from .rng import RngState


def weight_standardize(W: np.ndarray, gain: float = 1.0) -> np.ndarray:
    """Per-output-unit standardization scaled by gain * sqrt(1/fan_in).

    Degenerate (zero-variance) rows are guarded so the output stays finite.
    """
    W2 = W.reshape(W.shape[0], -1)
    fan_in = W2.shape[1]
    if fan_in < 2:
        raise ValueError("weight standardization needs fan_in >= 2")
    mean = W2.mean(axis=1, keepdims=True)
    var = W2.var(axis=1, keepdims=True)
    denom = np.sqrt(np.maximum(var, 1e-10))
    out = (W2 - mean) / denom * (gain / np.sqrt(fan_in))
    return out.reshape(W.shape)


class FcLayer:
    kind = "fc"

    def __init__(self, W: np.ndarray, b: np.ndarray, standardize: bool = False):
        self.W = W
        self.b = b
        self.standardize = standardize
        self._W_eff = None
        self.refresh()

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def refresh(self):
        self._W_eff = weight_standardize(self.W) if self.standardize else self.W

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(x.shape[0], -1) @ self._W_eff.T + self.b

    def back(self, g: np.ndarray, in_shape) -> np.ndarray:
        return (g @ self._W_eff).reshape((g.shape[0],) + tuple(in_shape))

    def weight_grad(self, g: np.ndarray, a: np.ndarray):
        B = g.shape[0]
        return g.T @ a.reshape(B, -1) / B, g.mean(axis=0)

    def params(self):
        return [self.W, self.b]


class ConvLayer:
    kind = "conv"

    def __init__(self, W, b, stride=1, padding=1, standardize=False):
        self.W = W
        self.b = b
        self.stride = stride
        self.padding = padding
        self.standardize = standardize
        self._W_eff = None
        self.refresh()

    def refresh(self):
        self._W_eff = weight_standardize(self.W) if self.standardize else self.W

    def apply(self, x: np.ndarray) -> np.ndarray:
        return convops.conv2d(x, self._W_eff, self.b, self.stride, self.padding)

    def back(self, g: np.ndarray, in_shape) -> np.ndarray:
        x_shape = (g.shape[0],) + tuple(in_shape)
        return convops.conv2d_input_grad(g, self._W_eff, x_shape, self.stride, self.padding)

    def weight_grad(self, g: np.ndarray, a: np.ndarray):
        return convops.conv2d_weight_grad(
            a, g, self.W.shape[2], self.stride, self.padding
        )

    def params(self):
        return [self.W, self.b]


class AvgPoolLayer:
    kind = "pool"

    def __init__(self, k: int):
        self.k = k

    def apply(self, x: np.ndarray) -> np.ndarray:
        return convops.avg_pool(x, self.k)

    def back(self, g: np.ndarray, in_shape) -> np.ndarray:
        return convops.avg_pool_input_grad(g, self.k)

    def params(self):
        return []


@dataclass
class Block:
    layer: object
    spiking: bool


@dataclass
class StepRecord:
    """One time step of the forward tape."""

    u: list  # membrane potentials per spiking layer
    s: list  # spikes per spiking layer
    x_in: list  # inputs to each weight layer (hidden layers then readout)
    o: np.ndarray
    perturb: PerturbRecord | None = None
    per_sample_loss: np.ndarray | None = None


@dataclass
class ForwardTape:
    steps: list = field(default_factory=list)

    def append(self, step: StepRecord):
        self.steps.append(step)

    def __len__(self):
        return len(self.steps)

    def spike_counts(self):
        """Total nonzero spikes per spiking layer over the rollout."""
        n = len(self.steps[0].s)
        counts = np.zeros(n)
        for step in self.steps:
            for i, s in enumerate(step.s):
                counts[i] += np.count_nonzero(s)
        return counts


class ModelSpec:
    def __init__(self, input_shape, blocks, readout: FcLayer,
                 lif=LifConfig(), sg=SurrogateConfig(), dropout: float = 0.0):
        self.input_shape = tuple(input_shape)
        self.blocks = blocks
        self.readout = readout
        self.lif = lif
        self.sg = sg
        self.dropout = dropout
        self._infer_shapes()

    def _infer_shapes(self):
        # Input shape of every block, of every spiking layer's state, and of
        # the readout, derived by tracing a zero batch of one sample.
        self.block_input_shapes = []
        self.spiking_indices = []
        self.spiking_shapes = []
        x = np.zeros((1,) + self.input_shape)
        for bi, block in enumerate(self.blocks):
            self.block_input_shapes.append(x.shape[1:])
            x = block.layer.apply(x)
            if block.spiking:
                self.spiking_indices.append(bi)
                self.spiking_shapes.append(x.shape[1:])
        self.readout_input_shape = x.shape[1:]
        self.num_classes = self.readout.out_dim

    @property
    def spiking_widths(self):
        return [int(np.prod(s)) for s in self.spiking_shapes]

    def init_states(self, batch: int):
        return [NeuronState.zeros((batch,) + s) for s in self.spiking_shapes]

    def weight_layers(self):
        return [b.layer for b in self.blocks if b.layer.kind in ("fc", "conv")] + [self.readout]

    def parameters(self):
        out = []
        for layer in self.weight_layers():
            out.extend(layer.params())
        return out

    def refresh_effective(self):
        for layer in self.weight_layers():
            if hasattr(layer, "refresh"):
                layer.refresh()

    def readout_back(self, g: np.ndarray) -> np.ndarray:
        return self.readout.back(g, self.readout_input_shape)

    def block_back(self, bi: int, g: np.ndarray) -> np.ndarray:
        block = self.blocks[bi]
        g = g.reshape((g.shape[0], -1)) if block.layer.kind == "fc" else g
        return block.layer.back(g, self.block_input_shapes[bi])


def forward_step(model: ModelSpec, states, x_t, perturb: PerturbRecord | None = None,
                 dropout_rng: RngState | None = None):
    """One synchronous bottom-to-top sweep at a single time step.

    Returns (new states, o_t, StepRecord). Noise, when present, is added
    either to the membrane currents (before_neuron) or to the transmitted
    post-neuron activity (after_neuron).
    """
    if x_t.shape[1:] != model.input_shape:
        raise ValueError(f"input shape {x_t.shape[1:]} != model input {model.input_shape}")
    z_signed = perturb.signed_z if perturb is not None else None
    if z_signed is not None and len(z_signed) != len(model.spiking_indices):
        raise ValueError("perturbation layer count mismatch")

    x = x_t
    new_states, us, ss, x_in = [], [], [], []
    sp = 0
    for block in model.blocks:
        if block.layer.kind in ("fc", "conv"):
            x_in.append(x)
        c = block.layer.apply(x)
        if block.spiking:
            if z_signed is not None and perturb.position == "before_neuron":
                c = c + perturb.alpha * z_signed[sp].reshape(c.shape)
            st = lif_step(states[sp], c, model.lif)
            new_states.append(st)
            us.append(st.u)
            ss.append(st.s)
            out = st.s
            if model.dropout > 0.0 and dropout_rng is not None:
                keep = dropout_rng.gen.random(out.shape) >= model.dropout
                out = out * keep / (1.0 - model.dropout)
            if z_signed is not None and perturb.position == "after_neuron":
                out = out + perturb.alpha * z_signed[sp].reshape(out.shape)
            x = out
            sp += 1
        else:
            x = c
    x_in.append(x)
    o = model.readout.apply(x)
    if not np.all(np.isfinite(o)):
        raise FloatingPointError("non-finite readout activation")
    return new_states, o, StepRecord(u=us, s=ss, x_in=x_in, o=o, perturb=perturb)


def accumulate_logits(tape: ForwardTape) -> np.ndarray:
    """Sum of the readout outputs over all recorded time steps."""
    if len(tape) == 0:
        raise ValueError("empty tape")
    total = np.zeros_like(tape.steps[0].o)
    for step in tape.steps:
        total += step.o
    return total


# ---------------------------------------------------------------------------
# Presets


def _uniform_init(rng: RngState, shape, fan_in):
    k = 1.0 / np.sqrt(fan_in)
    return rng.gen.uniform(-k, k, size=shape)


def _fc(rng, in_dim, out_dim, standardize=False):
    return FcLayer(
        _uniform_init(rng, (out_dim, in_dim), in_dim),
        _uniform_init(rng, (out_dim,), in_dim),
        standardize=standardize,
    )


def _conv(rng, c_in, c_out, k=3, stride=1, padding=1, standardize=True):
    fan_in = c_in * k * k
    return ConvLayer(
        _uniform_init(rng, (c_out, c_in, k, k), fan_in),
        _uniform_init(rng, (c_out,), fan_in),
        stride=stride,
        padding=padding,
        standardize=standardize,
    )


MODEL_PRESETS = ("fc800", "fc300-desk", "conv5", "conv9", "conv-desk")


def build_model(preset: str, input_shape, num_classes: int, rng: RngState,
                lif=LifConfig(), sg=SurrogateConfig(), dropout: float = 0.0) -> ModelSpec:
    """Construct a named architecture for the given input/output sizes.

    FC presets flatten the input; conv presets expect (C, H, W) inputs.
    """
    rng = rng.fork("model-init")
    input_shape = tuple(input_shape)
    if preset in ("fc800", "fc300-desk"):
        width = 800 if preset == "fc800" else 300
        in_dim = int(np.prod(input_shape))
        blocks = [
            Block(_fc(rng, in_dim, width), spiking=True),
            Block(_fc(rng, width, width), spiking=True),
        ]
        readout = _fc(rng, width, num_classes)
        return ModelSpec((in_dim,), blocks, readout, lif, sg, dropout)

    if preset in ("conv5", "conv9", "conv-desk"):
        if len(input_shape) != 3:
            raise ValueError("conv presets need (C, H, W) inputs")
        c, h, w = input_shape
        if preset == "conv5":
            plan = [("c", 128), ("p", 2), ("c", 256), ("p", 2), ("c", 512), ("p", 2), ("c", 512)]
        elif preset == "conv9":
            plan = [("c", 64), ("c", 128), ("p", 2), ("c", 256), ("c", 256), ("p", 2),
                    ("c", 512), ("c", 512), ("p", 2), ("c", 512), ("c", 512)]
        else:
            plan = [("c", 8), ("p", 2), ("c", 16)]
        blocks = []
        for kind, v in plan:
            if kind == "c":
                blocks.append(Block(_conv(rng, c, v), spiking=True))
                c = v
            else:
                blocks.append(Block(AvgPoolLayer(v), spiking=False))
                h //= v
                w //= v
        readout = _fc(rng, c * h * w, num_classes)
        return ModelSpec(input_shape, blocks, readout, lif, sg, dropout)

    raise ValueError(f"unknown model preset: {preset!r} (known: {MODEL_PRESETS})")
