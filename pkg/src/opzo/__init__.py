"""Online pseudo-zeroth-order training of spiking neural networks.

A numpy library for training leaky integrate-and-fire networks forward in
time with pluggable spatial credit assignment: surrogate-gradient spatial
backpropagation, direct feedback alignment, single-point zeroth-order node
perturbation, and momentum-feedback OPZO, plus the verification suites
and cost/efficiency analyses that back them.
"""

from .credit import (
    ENGINE_NAMES,
    BpSgEngine,
    DfaEngine,
    FeedbackState,
    LossSpec,
    OpzoEngine,
    PerturbRecord,
    PerturbSampler,
    ZoSpEngine,
    jacobian_estimate_update,
    loss_and_error,
    opzo_update_feedback,
    zo_sp_grad,
    zo_two_point_grad,
)
from .metrics import (
    CostModelInput,
    EfficiencyReport,
    VarianceReport,
    cost_model,
    efficiency_profile,
    gradient_variance,
    predict_variance,
)
from .network import (
    ForwardTape,
    ModelSpec,
    accumulate_logits,
    build_model,
    forward_step,
    weight_standardize,
)
from .neuron import (
    LifConfig,
    NeuronState,
    StochasticNeuronConfig,
    SurrogateConfig,
    lif_step,
    stochastic_spike,
    surrogate_deriv,
)
from .online import (
    GradAccum,
    OptimState,
    StepReport,
    TraceState,
    evaluate,
    optimizer_step,
    three_factor_update,
    train_step,
    update_traces,
)
from .rng import NoiseDistribution, RngState, empirical_beta, sample_noise

__version__ = "0.1.0"
