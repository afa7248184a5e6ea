"""Per-layer local readout supervision and intermediate global learning.

Local learning (LL) attaches a trained affine readout to each hidden
layer; its loss gradient flows back to the layer's spikes through the
readout transpose, scaled by a small factor, and is added to the global
engine's error signal. Intermediate global learning (IGL) instead drives
the first k spiking layers from a mid-network readout's error through
their own feedback matrices.
"""

from __future__ import annotations

import numpy as np

from .credit import FeedbackState, LossSpec, loss_and_error, opzo_update_feedback
from .neuron import surrogate_deriv
from .network import FcLayer, ModelSpec
from .online import GradAccum, OptimState, optimizer_step
from .rng import RngState


def local_errors(spikes: np.ndarray, readout: FcLayer, y: np.ndarray,
                 loss_spec: LossSpec, scale: float):
    """Local readout loss and the scaled gradient w.r.t. the layer's spikes.

    Errors propagate through the readout by weight symmetry (R transpose).
    """
    B = spikes.shape[0]
    r = readout.apply(spikes)
    loss, e, _ = loss_and_error(r, y, loss_spec)
    ds = scale * (e @ readout.W).reshape(spikes.shape)
    return scale * loss, ds, e


class LocalLearning:
    """Optional LL readouts per spiking layer and an optional IGL split.

    igl_split = k drives spiking layers 0..k-1 from a readout attached to
    spiking layer k-1. k equal to the number of spiking layers degenerates
    to the plain engine (the mid readout is the final readout).
    """

    def __init__(self, model: ModelSpec, rng: RngState, loss_scale: float = 0.01,
                 enabled: bool = True, igl_split: int | None = None,
                 igl_momentum: float = 0.99999, igl_kind: str = "momentum_jacobian",
                 optim: OptimState | None = None):
        self.enabled = enabled
        self.loss_scale = loss_scale
        self.igl_split = igl_split
        widths = model.spiking_widths
        m = model.num_classes
        self.readouts: list[FcLayer] = []
        rng = rng.fork("local-learning")
        if enabled:
            for w in widths:
                k = 1.0 / np.sqrt(w)
                self.readouts.append(
                    FcLayer(rng.gen.uniform(-k, k, (m, w)), rng.gen.uniform(-k, k, (m,)))
                )
        self.igl_fb = None
        self.igl_readout = None
        if igl_split is not None and igl_split < len(widths):
            if not (0 < igl_split < len(widths) + 1):
                raise ValueError("igl_split must lie inside the network")
            below = widths[:igl_split]
            if igl_kind == "momentum_jacobian":
                self.igl_fb = FeedbackState.momentum_jacobian(below, m, igl_momentum)
            else:
                self.igl_fb = FeedbackState.random_fixed(below, m, rng.fork("igl-b"))
            k = 1.0 / np.sqrt(widths[igl_split - 1])
            self.igl_readout = FcLayer(
                rng.gen.uniform(-k, k, (m, widths[igl_split - 1])),
                rng.gen.uniform(-k, k, (m,)),
            )
        self._params = []
        for r in self.readouts:
            self._params.extend(r.params())
        if self.igl_readout is not None:
            self._params.extend(self.igl_readout.params())
        self.accum = GradAccum(self._params) if self._params else None
        self.optim = optim or OptimState()

    def apply(self, model: ModelSpec, step, y: np.ndarray, errors: list,
              accum: GradAccum, loss_spec: LossSpec) -> float:
        """Mutate the engine's error signals in place for one time step and
        accumulate the readout gradients. Returns the summed local loss."""
        total = 0.0
        pi = 0
        if self.enabled:
            for li, (readout, s) in enumerate(zip(self.readouts, step.s)):
                u = step.u[li]
                sf = s.reshape(s.shape[0], -1)
                loss_l, ds, e_l = local_errors(sf, readout, y, loss_spec, self.loss_scale)
                total += loss_l
                errors[li] += ds.reshape(u.shape) * surrogate_deriv(u, model.lif, model.sg)
                gW, gb = readout.weight_grad(self.loss_scale * e_l, sf)
                self.accum.add(pi, gW)
                self.accum.add(pi + 1, gb)
                pi += 2
        if self.igl_fb is not None:
            k = self.igl_split
            s_mid = step.s[k - 1].reshape(step.s[k - 1].shape[0], -1)
            r_mid = self.igl_readout.apply(s_mid)
            loss_mid, e_mid, _ = loss_and_error(r_mid, y, loss_spec)
            total += loss_mid
            for li in range(k):
                u = step.u[li]
                M = self.igl_fb.matrices[li]
                g = (e_mid @ M.T).reshape(u.shape)
                errors[li] = g * surrogate_deriv(u, model.lif, model.sg)
            gW, gb = self.igl_readout.weight_grad(e_mid, s_mid)
            self.accum.add(pi, gW)
            self.accum.add(pi + 1, gb)
            if self.igl_fb.kind == "momentum_jacobian" and step.perturb is not None:
                sub = type(step.perturb)(
                    step.perturb.z[:k], step.perturb.alpha, step.perturb.position,
                    step.perturb.antithetic_sign, step.perturb.dist,
                )
                opzo_update_feedback(self.igl_fb, sub, r_mid)
        return total

    def step_optimizer(self):
        if self.accum is not None:
            optimizer_step(self._params, self.accum, self.optim)
