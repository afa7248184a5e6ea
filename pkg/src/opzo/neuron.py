"""Leaky integrate-and-fire dynamics and the local surrogate derivative.

The membrane recurrence is
    u[t+1] = leak * (u[t] - v_th * s[t]) + input_current
    s[t+1] = H(u[t+1] - v_th)
with a soft reset by threshold subtraction. The last readout layer of a
network bypasses this entirely (see network.py).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import RngState


@dataclass(frozen=True)
class LifConfig:
    v_th: float = 1.0
    leak: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.leak < 1.0):
            raise ValueError("leak must be in [0, 1)")
        if self.v_th <= 0.0:
            raise ValueError("v_th must be positive")


@dataclass(frozen=True)
class SurrogateConfig:
    """Sharpness of the sigmoid-like local surrogate derivative."""

    a1: float = 0.25

    def __post_init__(self):
        if self.a1 <= 0.0:
            raise ValueError("a1 must be positive")


class SpikeCdf(Enum):
    SIGMOID = "sigmoid"
    ERF = "erf"


@dataclass(frozen=True)
class StochasticNeuronConfig:
    enabled: bool = False
    cdf: SpikeCdf = SpikeCdf.SIGMOID
    temperature: float = 0.25


@dataclass
class NeuronState:
    """Per-layer membrane potentials and binary spikes."""

    u: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "NeuronState":
        return cls(np.zeros(shape), np.zeros(shape))


def lif_step(state: NeuronState, input_current: np.ndarray, cfg: LifConfig) -> NeuronState:
    """Advance the membrane recurrence one step (deterministic spiking)."""
    if state.u.shape != input_current.shape:
        raise ValueError(
            f"shape mismatch: state {state.u.shape} vs input {input_current.shape}"
        )
    u_new = cfg.leak * (state.u - cfg.v_th * state.s) + input_current
    s_new = np.where(u_new >= cfg.v_th, 1.0, 0.0)
    return NeuronState(u_new, s_new)


def surrogate_deriv(u: np.ndarray, cfg: LifConfig, sg: SurrogateConfig) -> np.ndarray:
    """Sigmoid-like surrogate for dS/du, peaked at the threshold.

    psi(u) = (1/a1) * exp((v_th - u)/a1) / (1 + exp((v_th - u)/a1))^2
    which equals sigmoid'((u - v_th)/a1) / a1.
    """
    x = (u - cfg.v_th) / sg.a1
    sig = 1.0 / (1.0 + np.exp(-np.abs(x)))
    # sigmoid'(x) written via |x| to avoid overflow in either tail
    return sig * (1.0 - sig) / sg.a1


def firing_probability(u: np.ndarray, cfg: LifConfig, st: StochasticNeuronConfig) -> np.ndarray:
    x = (u - cfg.v_th) / st.temperature
    if st.cdf is SpikeCdf.SIGMOID:
        return 1.0 / (1.0 + np.exp(-x))
    from scipy.special import erf

    return 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def stochastic_spike(
    u: np.ndarray, cfg: LifConfig, st: StochasticNeuronConfig, rng: RngState
) -> np.ndarray:
    """Bernoulli spikes with probability F(u - v_th)."""
    if not st.enabled:
        raise ValueError("stochastic spiking is not enabled")
    p = firing_probability(u, cfg, st)
    return np.where(rng.gen.random(u.shape) < p, 1.0, 0.0)
