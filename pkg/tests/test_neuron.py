import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opzo.neuron import (
    LifConfig,
    NeuronState,
    SpikeCdf,
    StochasticNeuronConfig,
    SurrogateConfig,
    firing_probability,
    lif_step,
    stochastic_spike,
    surrogate_deriv,
)
from opzo.rng import RngState


def test_lif_step_hand_example():
    # u' = 0.5*(0.8 - 1*0) + 0.7 = 1.1 >= 1 so it spikes.
    state = NeuronState(u=np.array([[0.8]]), s=np.array([[0.0]]))
    out = lif_step(state, np.array([[0.7]]), LifConfig(v_th=1.0, leak=0.5))
    assert out.u == pytest.approx(1.1)
    assert out.s == 1.0


def test_lif_soft_reset_subtracts_threshold():
    # After a spike the next potential starts from leak*(u - v_th).
    state = NeuronState(u=np.array([[1.4]]), s=np.array([[1.0]]))
    out = lif_step(state, np.array([[0.0]]), LifConfig(v_th=1.0, leak=0.5))
    assert out.u == pytest.approx(0.5 * (1.4 - 1.0))
    assert out.s == 0.0


def test_lif_threshold_boundary_spikes():
    state = NeuronState.zeros((1, 1))
    out = lif_step(state, np.array([[1.0]]), LifConfig(v_th=1.0, leak=0.5))
    assert out.s == 1.0


def test_lif_shape_mismatch_raises():
    state = NeuronState.zeros((2, 3))
    with pytest.raises(ValueError):
        lif_step(state, np.zeros((2, 4)), LifConfig())


def test_lif_config_validation():
    with pytest.raises(ValueError):
        LifConfig(v_th=0.0)
    with pytest.raises(ValueError):
        LifConfig(leak=1.5)


def test_surrogate_peak_at_threshold():
    lif, sg = LifConfig(1.0, 0.5), SurrogateConfig(0.25)
    # sigmoid'(0)/a1 = 0.25/0.25 = 1 at the threshold.
    assert surrogate_deriv(np.array([1.0]), lif, sg) == pytest.approx(1.0)


def test_surrogate_known_point():
    lif, sg = LifConfig(1.0, 0.5), SurrogateConfig(0.25)
    x = (1.5 - lif.v_th) / sg.a1
    sig = 1.0 / (1.0 + np.exp(-x))
    expected = sig * (1.0 - sig) / sg.a1
    assert surrogate_deriv(np.array([1.5]), lif, sg) == pytest.approx(expected)


def test_surrogate_no_overflow_far_from_threshold():
    lif, sg = LifConfig(1.0, 0.5), SurrogateConfig(0.25)
    v = surrogate_deriv(np.array([-1e4, 1e4]), lif, sg)
    assert np.all(np.isfinite(v))
    assert np.all(v >= 0.0)


@given(st.floats(min_value=-50, max_value=50))
@settings(max_examples=50, deadline=None)
def test_surrogate_symmetric_positive(u):
    lif, sg = LifConfig(1.0, 0.5), SurrogateConfig(0.25)
    lo = surrogate_deriv(np.array([lif.v_th - u]), lif, sg)
    hi = surrogate_deriv(np.array([lif.v_th + u]), lif, sg)
    assert lo == pytest.approx(hi, rel=1e-12)
    assert lo >= 0.0


def test_firing_probability_monotone_and_bounded():
    lif = LifConfig(1.0, 0.5)
    cfg = StochasticNeuronConfig(True, SpikeCdf.SIGMOID, temperature=0.25)
    u = np.linspace(-3, 5, 50)
    p = firing_probability(u, lif, cfg)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.diff(p) >= 0)
    assert firing_probability(np.array([lif.v_th]), lif, cfg) == pytest.approx(0.5)


def test_firing_probability_erf_matches_sigmoid_midpoint():
    lif = LifConfig(1.0, 0.5)
    cfg = StochasticNeuronConfig(True, SpikeCdf.ERF, temperature=0.25)
    assert firing_probability(np.array([lif.v_th]), lif, cfg) == pytest.approx(0.5)


def test_stochastic_spike_rate_matches_probability():
    lif = LifConfig(1.0, 0.5)
    cfg = StochasticNeuronConfig(True, SpikeCdf.SIGMOID, temperature=0.25)
    rng = RngState.from_seed(9)
    u = np.full(50_000, 1.2)
    s = stochastic_spike(u, lif, cfg, rng)
    p = firing_probability(np.array([1.2]), lif, cfg)[0]
    assert set(np.unique(s)) <= {0.0, 1.0}
    assert s.mean() == pytest.approx(p, abs=0.01)
