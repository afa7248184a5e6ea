import numpy as np
import pytest

from opzo.credit import (
    BpSgEngine,
    DfaEngine,
    FeedbackState,
    LossSpec,
    OpzoEngine,
    PerturbRecord,
    PerturbSampler,
    ZoSpEngine,
    loss_and_error,
    opzo_update_feedback,
    zo_sp_grad,
    zo_two_point_grad,
)
from opzo.network import StepRecord, build_model, forward_step
from opzo.rng import NoiseDistribution, RngState


# ---------------------------------------------------------------------------
# Loss


def test_ce_error_hand_example():
    # Pure CE at o=[0,0], y=0: softmax is [0.5,0.5], e = [-0.5, 0.5].
    _, e, _ = loss_and_error(np.array([[0.0, 0.0]]), np.array([0]), LossSpec(1.0))
    assert np.allclose(e, [[-0.5, 0.5]])


def test_mse_error_hand_example():
    # Pure MSE at o=[2,1], y=0: e = o - onehot = [1, 1].
    loss, e, _ = loss_and_error(np.array([[2.0, 1.0]]), np.array([0]), LossSpec(0.0))
    assert np.allclose(e, [[1.0, 1.0]])
    assert loss == pytest.approx(0.5 * (1.0 + 1.0))


def test_mixed_loss_is_convex_combination():
    o = np.array([[0.3, -0.2, 1.0]])
    y = np.array([2])
    l_ce, e_ce, _ = loss_and_error(o, y, LossSpec(1.0))
    l_mse, e_mse, _ = loss_and_error(o, y, LossSpec(0.0))
    l_mix, e_mix, _ = loss_and_error(o, y, LossSpec(0.9))
    assert l_mix == pytest.approx(0.9 * l_ce + 0.1 * l_mse)
    assert np.allclose(e_mix, 0.9 * e_ce + 0.1 * e_mse)


def test_loss_label_out_of_range():
    with pytest.raises(ValueError):
        loss_and_error(np.zeros((1, 3)), np.array([3]), LossSpec())


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec(1.2)


# ---------------------------------------------------------------------------
# Perturbation sampling


def test_sampler_antithetic_reuses_noise_with_flipped_sign():
    rng = RngState.from_seed(0)
    sampler = PerturbSampler([(4,)], 0.1, "after_neuron", NoiseDistribution.GAUSSIAN, rng)
    r0 = sampler.step(0, 2)
    r1 = sampler.step(1, 2)
    assert r0.antithetic_sign == 1 and r1.antithetic_sign == -1
    assert np.array_equal(r0.z[0], r1.z[0])
    assert np.array_equal(r1.signed_z[0], -r0.z[0])
    r2 = sampler.step(2, 2)
    assert not np.array_equal(r2.z[0], r0.z[0])


def test_sampler_non_antithetic_always_fresh():
    rng = RngState.from_seed(0)
    sampler = PerturbSampler(
        [(4,)], 0.1, "before_neuron", NoiseDistribution.GAUSSIAN, rng, antithetic=False
    )
    r0, r1 = sampler.step(0, 2), sampler.step(1, 2)
    assert r1.antithetic_sign == 1
    assert not np.array_equal(r0.z[0], r1.z[0])


def test_sampler_rejects_unknown_position():
    with pytest.raises(ValueError):
        PerturbSampler([(4,)], 0.1, "inside_neuron", NoiseDistribution.GAUSSIAN,
                       RngState.from_seed(0))


# ---------------------------------------------------------------------------
# Feedback updates


def test_feedback_update_hand_example():
    # With momentum 0 the update is exactly mean_batch(z o~^T):
    # z=[1,-1], o~=[2] gives M = [[2], [-2]].
    fb = FeedbackState([np.zeros((2, 1))], "momentum_jacobian", momentum=0.0)
    rec = PerturbRecord([np.array([[1.0, -1.0]])], 0.1, "after_neuron")
    opzo_update_feedback(fb, rec, np.array([[2.0]]))
    assert np.allclose(fb.matrices[0], [[2.0], [-2.0]])


def test_feedback_update_momentum_mixing():
    fb = FeedbackState([np.ones((1, 1))], "momentum_jacobian", momentum=0.75)
    rec = PerturbRecord([np.array([[2.0]])], 0.1, "after_neuron")
    opzo_update_feedback(fb, rec, np.array([[3.0]]))
    assert fb.matrices[0][0, 0] == pytest.approx(0.75 * 1.0 + 0.25 * 6.0)


def test_feedback_update_respects_antithetic_sign():
    fb = FeedbackState([np.zeros((1, 1))], "momentum_jacobian", momentum=0.0)
    rec = PerturbRecord([np.array([[1.0]])], 0.1, "after_neuron", antithetic_sign=-1)
    opzo_update_feedback(fb, rec, np.array([[2.0]]))
    assert fb.matrices[0][0, 0] == pytest.approx(-2.0)


def test_feedback_update_rejects_fixed_kind():
    fb = FeedbackState.random_fixed([4], 2, RngState.from_seed(0))
    rec = PerturbRecord([np.zeros((1, 4))], 0.1, "after_neuron")
    with pytest.raises(ValueError):
        opzo_update_feedback(fb, rec, np.zeros((1, 2)))


def test_random_fixed_scale():
    fb = FeedbackState.random_fixed([400], 10, RngState.from_seed(0))
    bound = 1.0 / np.sqrt(400)
    assert fb.matrices[0].shape == (400, 10)
    assert np.abs(fb.matrices[0]).max() <= bound


# ---------------------------------------------------------------------------
# Zeroth-order estimates


def test_zo_two_point_exact_on_quadratic():
    # Even terms cancel, so the two-sided probe is exact for quadratics.
    A = np.diag([1.0, 2.0, 3.0])
    f = lambda t: 0.5 * t @ A @ t
    theta = np.array([1.0, -1.0, 0.5])
    z = np.array([0.3, 0.2, -0.7])
    est = zo_two_point_grad(f, theta, z, alpha=0.1)
    assert np.allclose(est, ((A @ theta) @ z) * z)


def test_zo_two_point_one_sided():
    # linear f: (f(az) - f(0))/a = 3*sum(z) exactly
    f = lambda t: 3.0 * t.sum()
    z = np.array([1.0, -2.0])
    est = zo_two_point_grad(f, np.zeros(2), z, alpha=0.5, one_sided=True)
    assert np.allclose(est, (3.0 * z.sum()) * z)


def test_zo_sp_grad_scaling():
    rec = PerturbRecord([np.array([[1.0, -2.0]])], 0.5, "after_neuron")
    out = zo_sp_grad(np.array([3.0]), rec)
    assert np.allclose(out[0], [[6.0, -12.0]])


def test_zo_alpha_zero_rejected():
    rec = PerturbRecord([np.array([[1.0]])], 0.0, "after_neuron")
    with pytest.raises(ValueError):
        zo_sp_grad(np.array([1.0]), rec)
    with pytest.raises(ValueError):
        zo_two_point_grad(lambda t: 0.0, np.zeros(1), np.ones(1), 0.0)


# ---------------------------------------------------------------------------
# Engines on a real forward record


def _record(seed=0, B=3):
    rng = RngState.from_seed(seed)
    model = build_model("fc300-desk", (10,), 4, rng)
    x = rng.gen.standard_normal((B, 10)) * 2
    _, o, step = forward_step(model, model.init_states(B), x)
    y = rng.gen.integers(0, 4, B)
    _, e, per_sample = loss_and_error(o, y, LossSpec())
    step.per_sample_loss = per_sample
    return model, step, e


def test_engine_error_shapes_match_layers():
    model, step, e = _record()
    engines = [
        BpSgEngine(),
        DfaEngine(FeedbackState.random_fixed(model.spiking_widths, 4, RngState.from_seed(1))),
        OpzoEngine(FeedbackState.momentum_jacobian(model.spiking_widths, 4)),
    ]
    for eng in engines:
        gs = eng.errors(model, step, e)
        assert [g.shape for g in gs] == [u.shape for u in step.u]


def test_zo_sp_engine_needs_perturbation():
    model, step, e = _record()
    with pytest.raises(ValueError):
        ZoSpEngine().errors(model, step, e)


def test_dfa_and_opzo_kind_checks():
    with pytest.raises(ValueError):
        DfaEngine(FeedbackState.momentum_jacobian([4], 2))
    with pytest.raises(ValueError):
        OpzoEngine(FeedbackState.random_fixed([4], 2, RngState.from_seed(0)))


def test_bp_sg_top_layer_matches_readout_transpose():
    from opzo.neuron import surrogate_deriv

    model, step, e = _record()
    gs = BpSgEngine().errors(model, step, e)
    expected = (e @ model.readout.W) * surrogate_deriv(step.u[-1], model.lif, model.sg)
    assert np.allclose(gs[-1], expected)
