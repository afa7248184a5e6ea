"""Self-contained Monte-Carlo, finite-difference, and brute-force checks
of the estimator guarantees the training method relies on.

Each suite returns a list of CheckResult; the CLI `verify` subcommand
prints one line per check and exits nonzero on any failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .credit import (
    BpSgEngine,
    FeedbackState,
    LossSpec,
    PerturbRecord,
    feedback_errors,
    jacobian_estimate_update,
    loss_and_error,
)
from .metrics import VarianceReport, predict_variance
from .network import Block, FcLayer, ModelSpec, StepRecord
from .neuron import LifConfig, SurrogateConfig
from .online import GradAccum, TraceState, three_factor_update
from .rng import NoiseDistribution, RngState, sample_noise


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# Unbiasedness of the zeroth-order estimators (quadratic probe)


def check_two_point_unbiased(d=8, alpha=1e-3, draws=200_000, seed=2022,
                             dist=NoiseDistribution.GAUSSIAN) -> CheckResult:
    """Monte-Carlo mean of (f(t+az) - f(t-az))/(2a) z vs the true gradient
    of f(t) = 0.5||t - t*||^2, per coordinate within 4 standard errors."""
    rng = RngState.from_seed(seed)
    theta_star = rng.gen.standard_normal(d)
    theta = rng.gen.standard_normal(d)
    grad = theta - theta_star
    z = sample_noise(rng, dist, (draws, d))
    fp = 0.5 * ((theta + alpha * z - theta_star) ** 2).sum(axis=1)
    fm = 0.5 * ((theta - alpha * z - theta_star) ** 2).sum(axis=1)
    est = ((fp - fm) / (2 * alpha))[:, None] * z
    return _mean_within_se(est, grad, "lemma-two-point-unbiased")


def check_single_point_unbiased(d=8, alpha=1e-3, draws=200_000, seed=2022,
                                dist=NoiseDistribution.GAUSSIAN) -> CheckResult:
    """Same probe for the single-point form (f(t+az)/a) z."""
    rng = RngState.from_seed(seed)
    theta_star = rng.gen.standard_normal(d)
    theta = rng.gen.standard_normal(d)
    grad = theta - theta_star
    z = sample_noise(rng, dist, (draws, d))
    fp = 0.5 * ((theta + alpha * z - theta_star) ** 2).sum(axis=1)
    est = (fp / alpha)[:, None] * z
    return _mean_within_se(est, grad, "lemma-single-point-unbiased")


def _mean_within_se(est: np.ndarray, grad: np.ndarray, name: str) -> CheckResult:
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / np.sqrt(est.shape[0])
    dev = np.abs(mean - grad) / se
    ok = bool((dev <= 4.0).all())
    return CheckResult(name, ok, f"max |mean-grad|/SE = {dev.max():.2f} (limit 4)")


# ---------------------------------------------------------------------------
# Momentum feedback convergence to the Jacobian transpose (linear map)


def converge_feedback(n_in=3, n_out=2, momentum=0.999, updates=10_000,
                      alpha=1e-3, seed=2026):
    """Run the two-point momentum estimator on o = J(x + alpha z) and
    return (M, J)."""
    rng = RngState.from_seed(seed)
    J = rng.gen.standard_normal((n_out, n_in))
    fb = FeedbackState.momentum_jacobian([n_in], n_out, momentum)
    for _ in range(updates):
        x = rng.gen.standard_normal(n_in)
        z = sample_noise(rng, NoiseDistribution.GAUSSIAN, (1, n_in))
        o = J @ x
        o_tilde = J @ (x + alpha * z[0])
        rec = PerturbRecord([z], alpha, "after_neuron")
        jacobian_estimate_update(fb, rec, (o_tilde - o)[None, :])
    return fb.matrices[0], J


def check_feedback_convergence(momentum=0.999, updates=10_000, seed=2026) -> CheckResult:
    M, J = converge_feedback(momentum=momentum, updates=updates, seed=seed)
    rel = np.linalg.norm(M - J.T) / np.linalg.norm(J.T)
    return CheckResult(
        "feedback-matrix-convergence", bool(rel < 0.05),
        f"rel Frobenius error {rel:.4f} (limit 0.05)",
    )


def check_descent_direction(samples=1000, seed=2026) -> CheckResult:
    """With converged M, <E[J^T e], E[M e]> over the data distribution must
    be positive: the projected errors still point downhill."""
    M, J = converge_feedback(seed=seed)
    rng = RngState.from_seed(seed + 1)
    y0 = rng.gen.standard_normal(J.shape[0])
    x = rng.gen.standard_normal((samples, J.shape[1]))
    e = x @ J.T - y0  # gradient of 0.5||Jx - y0||^2 at the output
    true_dir = (e @ J).mean(axis=0)
    fb_dir = (e @ M.T).mean(axis=0)
    ip = float(true_dir @ fb_dir)
    return CheckResult("descent-direction", ip > 0.0, f"inner product {ip:.4f} (> 0)")


# ---------------------------------------------------------------------------
# Variance decomposition (linear probe, weight-space single-point estimator)


def measure_zo_sp_variance(d=8, m=2, alpha=1e-2, draws=100_000, seed=2022,
                           dist=NoiseDistribution.GAUSSIAN):
    """Empirical per-coordinate average variance of the single-point
    estimator on the probe f(x; W) = Wx with loss 0.5||Wx - Ax||^2,
    together with the measured decomposition terms."""
    rng = RngState.from_seed(seed)
    n_in = d // m
    W = rng.gen.standard_normal((m, n_in))
    A = W + 0.5 * rng.gen.standard_normal((m, n_in))

    x = rng.gen.standard_normal((draws, n_in))
    z = sample_noise(rng, dist, (draws, d))
    Wp = W[None] + alpha * z.reshape(draws, m, n_in)
    err = np.einsum("nij,nj->ni", Wp, x) - x @ A.T
    L = 0.5 * (err**2).sum(axis=1)
    est = (L / alpha)[:, None] * z
    measured = float(est.var(axis=0, ddof=1).mean())

    # Exact per-sample loss and gradient statistics over the x distribution.
    e0 = x @ (W - A).T
    L0 = 0.5 * (e0**2).sum(axis=1)
    g = np.einsum("ni,nj->nij", e0, x).reshape(draws, d)
    report = VarianceReport(
        d=d, m=m, B=1, beta=dist.beta, alpha=alpha,
        V_theta=float(g.var(axis=0, ddof=1).mean()),
        S_theta=float((g.mean(axis=0) ** 2).mean()),
        V_L=float(L0.var(ddof=1)),
        S_L=float(L0.mean() ** 2),
        V_o=float(e0.var(axis=0, ddof=1).mean()),
        S_o=float((e0.mean(axis=0) ** 2).mean()),
    )
    return measured, report


def check_variance_prediction(dist=NoiseDistribution.GAUSSIAN, seed=2022) -> CheckResult:
    measured, report = measure_zo_sp_variance(dist=dist, seed=seed)
    predicted, _ = predict_variance(report)
    rel = abs(measured - predicted) / predicted
    return CheckResult(
        f"variance-prediction-{dist.value}", bool(rel < 0.15),
        f"measured {measured:.4g} vs predicted {predicted:.4g} (rel err {rel:.3f}, limit 0.15)",
    )


# ---------------------------------------------------------------------------
# Finite-difference oracle for the online BP-SG gradient


def _make_relaxed_net(seed=2022, n_in=6, n_hid=8, n_out=3):
    rng = RngState.from_seed(seed)
    k1, k2 = 1 / np.sqrt(n_in), 1 / np.sqrt(n_hid)
    hidden = FcLayer(rng.gen.uniform(-k1, k1, (n_hid, n_in)), rng.gen.uniform(-k1, k1, (n_hid,)))
    readout = FcLayer(rng.gen.uniform(-k2, k2, (n_out, n_hid)), rng.gen.uniform(-k2, k2, (n_out,)))
    model = ModelSpec((n_in,), [Block(hidden, True)], readout,
                      lif=LifConfig(1.0, 0.5), sg=SurrogateConfig(0.25))
    return model


def _relaxed_sigma(u, lif, sg):
    return 1.0 / (1.0 + np.exp(-(u - lif.v_th) / sg.a1))


def _relaxed_rollout_loss(model, x_seq, y, loss_spec, frozen_spikes=None):
    """Rollout with sigmoid spikes. When frozen_spikes is given, the reset
    term uses those recorded values instead of the live ones: this detaches
    the temporal dependency exactly the way the online update does.

    Returns (total loss, recorded spikes per step).
    """
    hidden, readout = model.blocks[0].layer, model.readout
    lif, sg = model.lif, model.sg
    T, B = x_seq.shape[0], x_seq.shape[1]
    u = np.zeros((B, hidden.out_dim))
    s = np.zeros_like(u)
    total = 0.0
    spikes = []
    for t in range(T):
        # The reset at step t uses the spike of step t-1; that is the value
        # frozen for the detached-gradient oracle.
        s_reset = frozen_spikes[t] if frozen_spikes is not None else s
        if frozen_spikes is None:
            spikes.append(s.copy())
        u = lif.leak * (u - lif.v_th * s_reset) + hidden.apply(x_seq[t])
        s = _relaxed_sigma(u, lif, sg)
        o = readout.apply(s)
        loss_t, _, _ = loss_and_error(o, y, loss_spec)
        total += loss_t
    return total, spikes


def online_bp_sg_gradient(model, x_seq, y, loss_spec):
    """The production engine and three-factor accumulation applied to the
    relaxed (sigmoid-spike) rollout."""
    hidden, readout = model.blocks[0].layer, model.readout
    lif, sg = model.lif, model.sg
    engine = BpSgEngine()
    T, B = x_seq.shape[0], x_seq.shape[1]
    u = np.zeros((B, hidden.out_dim))
    s = np.zeros_like(u)
    accum = GradAccum(model.parameters())
    traces = None
    for t in range(T):
        u = lif.leak * (u - lif.v_th * s) + hidden.apply(x_seq[t])
        s = _relaxed_sigma(u, lif, sg)
        o = readout.apply(s)
        step = StepRecord(u=[u], s=[s], x_in=[x_seq[t], s], o=o)
        _, e, per_sample = loss_and_error(o, y, loss_spec)
        step.per_sample_loss = per_sample
        if traces is None:
            traces = TraceState.zeros_like(step.x_in[:-1])
        traces.update(step.x_in[:-1], lif.leak)
        errors = engine.errors(model, step, e)
        three_factor_update(model, traces, errors, e, step, accum)
    return accum.grads


def fd_gradient(model, x_seq, y, loss_spec, h=1e-5):
    """Central finite differences of the temporally detached relaxed loss."""
    _, frozen = _relaxed_rollout_loss(model, x_seq, y, loss_spec)
    grads = []
    for p in model.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            lp, _ = _relaxed_rollout_loss(model, x_seq, y, loss_spec, frozen)
            p[idx] = orig - h
            lm, _ = _relaxed_rollout_loss(model, x_seq, y, loss_spec, frozen)
            p[idx] = orig
            g[idx] = (lp - lm) / (2 * h)
        grads.append(g)
    return grads


def check_bp_sg_finite_difference(seed=2022, T=4, batch=2, h=1e-5) -> CheckResult:
    model = _make_relaxed_net(seed)
    rng = RngState.from_seed(seed + 1)
    x_seq = rng.gen.standard_normal((T, batch, 6)) * 2.0
    y = rng.gen.integers(0, 3, batch)
    loss_spec = LossSpec()
    analytic = online_bp_sg_gradient(model, x_seq, y, loss_spec)
    numeric = fd_gradient(model, x_seq, y, loss_spec, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), 1e-6)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return CheckResult(
        "bp-sg-finite-difference", worst < 1e-4,
        f"max relative error {worst:.2e} (limit 1e-4)",
    )


def check_loss_gradient_fd(seed=2022, dim=5, h=1e-5) -> CheckResult:
    """Cross-entropy+MSE gradient vs central differences on a random logit."""
    rng = RngState.from_seed(seed)
    o = rng.gen.standard_normal((1, dim))
    y = np.array([int(rng.gen.integers(0, dim))])
    spec = LossSpec()
    _, e, _ = loss_and_error(o, y, spec)
    num = np.zeros(dim)
    for i in range(dim):
        op, om = o.copy(), o.copy()
        op[0, i] += h
        om[0, i] -= h
        num[i] = (loss_and_error(op, y, spec)[0] - loss_and_error(om, y, spec)[0]) / (2 * h)
    err = float(np.abs(e[0] - num).max())
    return CheckResult("loss-gradient-fd", err < 1e-6, f"max abs err {err:.2e} (limit 1e-6)")


# ---------------------------------------------------------------------------
# Exact-feedback equivalence


def check_exact_jacobian_matches_bp(seed=2022) -> CheckResult:
    """With M set to the readout's transposed weights (the true Jacobian of
    o w.r.t. the hidden spikes), the feedback projection must reproduce the
    BP-SG signal exactly."""
    model = _make_relaxed_net(seed)
    rng = RngState.from_seed(seed + 5)
    B = 4
    u = rng.gen.standard_normal((B, 8))
    s = _relaxed_sigma(u, model.lif, model.sg)
    o = model.readout.apply(s)
    x = rng.gen.standard_normal((B, 6))
    step = StepRecord(u=[u], s=[s], x_in=[x, s], o=o)
    y = rng.gen.integers(0, 3, B)
    _, e, _ = loss_and_error(o, y, LossSpec())
    bp = BpSgEngine().errors(model, step, e)[0]
    fb = FeedbackState([model.readout.W.T.copy()], "momentum_jacobian")
    proj = feedback_errors(fb, model, step, e, apply_surrogate=True)[0]
    err = float(np.abs(bp - proj).max())
    return CheckResult("exact-jacobian-equals-bp", err < 1e-9, f"max abs diff {err:.2e}")


# ---------------------------------------------------------------------------
# Brute-force equivalence oracles


def check_lif_straight_line(T=20, n=7, seed=2022) -> CheckResult:
    """The production neuron step iterated over T steps vs a scalar-loop
    re-implementation of the membrane recurrence, element exact."""
    from .neuron import NeuronState, lif_step

    rng = RngState.from_seed(seed)
    lif = LifConfig(1.0, 0.5)
    c = rng.gen.standard_normal((T, 1, n)) * 1.5
    state = NeuronState.zeros((1, n))
    got_u, got_s = [], []
    for t in range(T):
        state = lif_step(state, c[t], lif)
        got_u.append(state.u.copy())
        got_s.append(state.s.copy())
    worst = 0.0
    for j in range(n):
        u = 0.0
        s = 0.0
        for t in range(T):
            u = lif.leak * (u - lif.v_th * s) + c[t, 0, j]
            s = 1.0 if u >= lif.v_th else 0.0
            worst = max(worst, abs(got_u[t][0, j] - u), abs(got_s[t][0, j] - s))
    return CheckResult("lif-straight-line", worst == 0.0, f"max abs diff {worst:.1e}")


def check_trace_closed_form(T=12, n=5, leak=0.5, seed=2022) -> CheckResult:
    """Incremental trace update vs the explicit geometric sum."""
    rng = RngState.from_seed(seed)
    x = rng.gen.standard_normal((T, 2, n))
    traces = TraceState.zeros_like([x[0]])
    worst = 0.0
    for t in range(T):
        traces.update([x[t]], leak)
        closed = sum(leak ** (t - tau) * x[tau] for tau in range(t + 1))
        worst = max(worst, float(np.abs(traces.traces[0] - closed).max()))
        bias_closed = sum(leak**tau for tau in range(t + 1))
        worst = max(worst, abs(traces.bias_trace - bias_closed))
    return CheckResult("trace-closed-form", worst < 1e-12, f"max abs diff {worst:.1e}")


def check_conv_fc_duality(seed=2022) -> CheckResult:
    """A 1x1 convolution on a 1x1 image is a fully connected layer; forward,
    input gradient, and weight gradient must all agree."""
    from .network import ConvLayer

    rng = RngState.from_seed(seed)
    B, cin, cout = 3, 4, 5
    W = rng.gen.standard_normal((cout, cin))
    b = rng.gen.standard_normal(cout)
    fc = FcLayer(W.copy(), b.copy())
    conv = ConvLayer(W.reshape(cout, cin, 1, 1).copy(), b.copy(), stride=1, padding=0)
    x = rng.gen.standard_normal((B, cin))
    g = rng.gen.standard_normal((B, cout))
    worst = float(np.abs(fc.apply(x) - conv.apply(x.reshape(B, cin, 1, 1)).reshape(B, cout)).max())
    worst = max(worst, float(np.abs(
        fc.back(g, (cin,)) - conv.back(g.reshape(B, cout, 1, 1), (cin, 1, 1)).reshape(B, cin)
    ).max()))
    gW_fc, gb_fc = fc.weight_grad(g, x)
    gW_cv, gb_cv = conv.weight_grad(g.reshape(B, cout, 1, 1), x.reshape(B, cin, 1, 1))
    worst = max(worst, float(np.abs(gW_fc - gW_cv.reshape(cout, cin)).max()))
    worst = max(worst, float(np.abs(gb_fc - gb_cv).max()))
    return CheckResult("conv-fc-duality", worst < 1e-12, f"max abs diff {worst:.1e}")


def check_alpha_zero_noop(seed=2022) -> CheckResult:
    """A perturbed forward pass with alpha=0 must equal the clean pass."""
    from .network import build_model, forward_step

    rng = RngState.from_seed(seed)
    model = build_model("fc300-desk", (10,), 4, rng)
    x = rng.gen.standard_normal((2, 10))
    worst = 0.0
    for position in ("after_neuron", "before_neuron"):
        z = [rng.gen.standard_normal((2, w)).reshape((2,) + s)
             for w, s in zip(model.spiking_widths, model.spiking_shapes)]
        rec = PerturbRecord(z, 0.0, position)
        states = model.init_states(2)
        _, o_pert, _ = forward_step(model, states, x, rec)
        states = model.init_states(2)
        _, o_clean, _ = forward_step(model, states, x)
        worst = max(worst, float(np.abs(o_pert - o_clean).max()))
    return CheckResult("alpha-zero-noop", worst == 0.0, f"max abs diff {worst:.1e}")


# ---------------------------------------------------------------------------
# Suites


def run_suite(name: str) -> list[CheckResult]:
    if name == "lemmas":
        return [
            check_two_point_unbiased(),
            check_single_point_unbiased(),
            check_feedback_convergence(),
        ]
    if name == "prop1":
        return [
            check_variance_prediction(NoiseDistribution.GAUSSIAN),
            check_variance_prediction(NoiseDistribution.RADEMACHER),
        ]
    if name == "prop2":
        return [check_descent_direction()]
    if name == "fd":
        return [check_loss_gradient_fd(), check_bp_sg_finite_difference()]
    if name == "oracle_eq":
        return [
            check_lif_straight_line(),
            check_trace_closed_form(),
            check_conv_fc_duality(),
            check_alpha_zero_noop(),
            check_exact_jacobian_matches_bp(),
        ]
    raise ValueError(f"unknown suite {name!r} (known: lemmas, prop1, prop2, fd, oracle_eq)")


SUITES = ("lemmas", "prop1", "prop2", "fd", "oracle_eq")
