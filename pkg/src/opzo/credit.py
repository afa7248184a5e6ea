"""Spatial credit assignment engines.

Every engine consumes the same per-step forward record and emits one error
signal per spiking layer: the estimated gradient of the instantaneous loss
with respect to that layer's membrane drive. Engines are interchangeable;
swapping one for another changes nothing else in the training loop.

Engine names (config strings): "bp_sg", "dfa", "zo_sp", "opzo".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neuron import surrogate_deriv
from .rng import NoiseDistribution, RngState, sample_noise


# ---------------------------------------------------------------------------
# Perturbation bookkeeping


@dataclass
class PerturbRecord:
    """Per-layer noise for one time step of a perturbed forward pass."""

    z: list  # one array per spiking layer, batch-leading
    alpha: float
    position: str  # "after_neuron" | "before_neuron"
    antithetic_sign: int = 1
    dist: NoiseDistribution = NoiseDistribution.GAUSSIAN

    @property
    def signed_z(self) -> list:
        if self.antithetic_sign == 1:
            return self.z
        return [-z for z in self.z]


class PerturbSampler:
    """Draws per-layer noise each step; in antithetic mode the draw of an
    even step is reused with flipped sign on the following odd step."""

    def __init__(self, shapes, alpha, position, dist, rng: RngState, antithetic=True):
        if position not in ("after_neuron", "before_neuron"):
            raise ValueError(f"unknown perturbation position: {position}")
        self.shapes = shapes
        self.alpha = alpha
        self.position = position
        self.dist = dist
        self.rng = rng
        self.antithetic = antithetic
        self._last_z = None

    def step(self, t: int, batch: int) -> PerturbRecord:
        if self.antithetic and t % 2 == 1 and self._last_z is not None:
            return PerturbRecord(
                self._last_z, self.alpha, self.position, antithetic_sign=-1, dist=self.dist
            )
        z = [
            sample_noise(self.rng, self.dist, (batch,) + tuple(shape))
            for shape in self.shapes
        ]
        self._last_z = z
        return PerturbRecord(z, self.alpha, self.position, antithetic_sign=1, dist=self.dist)


# ---------------------------------------------------------------------------
# Loss


@dataclass(frozen=True)
class LossSpec:
    """Weighted cross-entropy + mean-square-error mix on the readout."""

    ce_weight: float = 0.9

    def __post_init__(self):
        if not (0.0 <= self.ce_weight <= 1.0):
            raise ValueError("ce_weight must be in [0, 1]")


def softmax(o: np.ndarray) -> np.ndarray:
    e = np.exp(o - o.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_error(o_t: np.ndarray, y: np.ndarray, loss: LossSpec):
    """Instantaneous loss (mean over batch) and its per-sample gradient at o_t.

    y holds integer class labels. CE gradient is softmax(o) - onehot(y);
    MSE is 0.5 * ||o - onehot||^2 with gradient o - onehot.
    """
    o_t = np.atleast_2d(o_t)
    y = np.atleast_1d(y)
    m = o_t.shape[-1]
    if y.min() < 0 or y.max() >= m:
        raise ValueError(f"label out of range [0, {m})")
    onehot = np.zeros_like(o_t)
    onehot[np.arange(len(y)), y] = 1.0
    p = softmax(o_t)
    logp = o_t - o_t.max(axis=-1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=-1, keepdims=True))
    ce = -logp[np.arange(len(y)), y]
    mse = 0.5 * ((o_t - onehot) ** 2).sum(axis=-1)
    w = loss.ce_weight
    per_sample = w * ce + (1.0 - w) * mse
    e = w * (p - onehot) + (1.0 - w) * (o_t - onehot)
    return float(per_sample.mean()), e, per_sample


# ---------------------------------------------------------------------------
# Feedback state


@dataclass
class FeedbackState:
    """Per-spiking-layer feedback matrices of shape (layer_width, m).

    kind "random_fixed" is drawn once and never updated (direct feedback
    alignment); kind "momentum_jacobian" is the exponentially averaged
    Jacobian-transpose estimate updated from perturbations.
    """

    matrices: list
    kind: str  # "random_fixed" | "momentum_jacobian"
    momentum: float = 0.99999

    @classmethod
    def random_fixed(cls, widths, m, rng: RngState, scale: float | None = None):
        mats = []
        for w in widths:
            s = scale if scale is not None else 1.0 / np.sqrt(w)
            mats.append(rng.gen.uniform(-s, s, size=(w, m)))
        return cls(mats, "random_fixed")

    @classmethod
    def momentum_jacobian(cls, widths, m, momentum=0.99999):
        # Zero start: the moving average self-corrects and the first
        # updates are pure estimates.
        return cls([np.zeros((w, m)) for w in widths], "momentum_jacobian", momentum)


def opzo_update_feedback(
    fb: FeedbackState, perturb: PerturbRecord, o_tilde: np.ndarray, with_alpha: bool = False
) -> None:
    """Momentum update M <- lam*M + (1-lam) * mean_batch(z o~^T), in place.

    The 1/alpha factor of the two-point form is dropped by default (the
    practical single-pass variant); pass with_alpha=True for the estimator
    used by the Jacobian-convergence oracle.
    """
    if fb.kind != "momentum_jacobian":
        raise ValueError("feedback state is not a momentum Jacobian")
    lam = fb.momentum
    o_tilde = np.atleast_2d(o_tilde)
    B = o_tilde.shape[0]
    for M, z in zip(fb.matrices, perturb.signed_z):
        zf = z.reshape(B, -1)
        upd = zf.T @ o_tilde / B
        if with_alpha:
            upd = upd / perturb.alpha
        M *= lam
        M += (1.0 - lam) * upd


def jacobian_estimate_update(
    fb: FeedbackState, perturb: PerturbRecord, delta_o: np.ndarray
) -> None:
    """Two-point oracle update M <- lam*M + (1-lam) * z (o~ - o)^T / alpha."""
    opzo_update_feedback(fb, perturb, delta_o, with_alpha=True)


# ---------------------------------------------------------------------------
# Engines


class BpSgEngine:
    """Layer-by-layer spatial backpropagation with surrogate derivatives
    (no backpropagation through time)."""

    name = "bp_sg"
    needs_perturbation = False

    def errors(self, model, step, e: np.ndarray) -> list:
        gs = [None] * len(model.spiking_indices)
        g = e  # gradient w.r.t. readout output, per sample
        g = model.readout_back(g)
        spike_pos = len(model.spiking_indices) - 1
        for bi in reversed(range(len(model.blocks))):
            block = model.blocks[bi]
            if block.spiking:
                u = step.u[spike_pos]
                g_shaped = g.reshape(u.shape)
                gu = g_shaped * surrogate_deriv(u, model.lif, model.sg)
                gs[spike_pos] = gu
                g = model.block_back(bi, gu)
                spike_pos -= 1
            else:
                g = model.block_back(bi, g)
        return gs


class DfaEngine:
    """Direct feedback alignment: fixed random top-down projections."""

    name = "dfa"
    needs_perturbation = False

    def __init__(self, fb: FeedbackState, apply_surrogate: bool = True):
        if fb.kind != "random_fixed":
            raise ValueError("DFA requires random_fixed feedback")
        self.fb = fb
        self.apply_surrogate = apply_surrogate

    def errors(self, model, step, e: np.ndarray) -> list:
        return feedback_errors(self.fb, model, step, e, self.apply_surrogate)


class OpzoEngine:
    """Momentum-feedback error projection (pseudo-zeroth-order)."""

    name = "opzo"
    needs_perturbation = True

    def __init__(self, fb: FeedbackState, apply_surrogate: bool = True):
        if fb.kind != "momentum_jacobian":
            raise ValueError("OPZO requires momentum_jacobian feedback")
        self.fb = fb
        self.apply_surrogate = apply_surrogate

    def errors(self, model, step, e_tilde: np.ndarray) -> list:
        return feedback_errors(self.fb, model, step, e_tilde, self.apply_surrogate)

    def update_feedback(self, perturb: PerturbRecord, o_tilde: np.ndarray) -> None:
        opzo_update_feedback(self.fb, perturb, o_tilde)


def feedback_errors(fb: FeedbackState, model, step, e: np.ndarray, apply_surrogate: bool) -> list:
    """Project the readout error to every spiking layer through per-layer
    feedback matrices, optionally gated by the local surrogate derivative."""
    e = np.atleast_2d(e)
    gs = []
    for M, u in zip(fb.matrices, step.u):
        g = (e @ M.T).reshape(u.shape)
        if apply_surrogate:
            g = g * surrogate_deriv(u, model.lif, model.sg)
        gs.append(g)
    return gs


class ZoSpEngine:
    """Single-point zeroth-order node perturbation: the per-sample loss of
    the (perturbed) pass, scaled by 1/alpha, broadcast along each layer's
    own noise direction."""

    name = "zo_sp"
    needs_perturbation = True

    def errors(self, model, step, e=None) -> list:
        perturb = step.perturb
        if perturb is None:
            raise ValueError("zo_sp requires a perturbed forward pass")
        if perturb.alpha == 0.0:
            raise ValueError("alpha must be nonzero")
        loss = step.per_sample_loss  # (B,)
        scale = loss / perturb.alpha
        gs = []
        for z in perturb.signed_z:
            B = z.shape[0]
            gs.append(z * scale.reshape((B,) + (1,) * (z.ndim - 1)))
        return gs


def zo_sp_grad(per_sample_loss: np.ndarray, perturb: PerturbRecord) -> list:
    """Standalone single-point estimate (L~/alpha) z per layer."""
    if perturb.alpha == 0.0:
        raise ValueError("alpha must be nonzero")
    loss = np.atleast_1d(per_sample_loss)
    out = []
    for z in perturb.signed_z:
        B = z.shape[0]
        out.append(z * (loss / perturb.alpha).reshape((B,) + (1,) * (z.ndim - 1)))
    return out


def zo_two_point_grad(f, theta: np.ndarray, z: np.ndarray, alpha: float, one_sided=False):
    """Directional zeroth-order estimate from two probe evaluations.

    Two-sided: (f(theta + a z) - f(theta - a z)) / (2a) * z.
    One-sided: (f(theta + a z) - f(theta)) / a * z.
    Test/oracle use only; training paths never evaluate a clean pass.
    """
    if alpha == 0.0:
        raise ValueError("alpha must be nonzero")
    if one_sided:
        diff = (f(theta + alpha * z) - f(theta)) / alpha
    else:
        diff = (f(theta + alpha * z) - f(theta - alpha * z)) / (2.0 * alpha)
    return diff * z


ENGINE_NAMES = ("bp_sg", "dfa", "zo_sp", "opzo")
