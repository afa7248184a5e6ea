"""Why momentum feedback helps: gradient variance and hardware cost.

Part 1 measures per-layer gradient variance of each engine over one
training epoch. Single-point zeroth-order variance on the hidden layers
is orders of magnitude above the rest; OPZO's projected errors sit near
the backprop baseline.

Part 2 evaluates the neuromorphic cost model at the reference size
(2 hidden layers of 800 units, 10 classes): backprop feedback needs
(N-1)n^2 + mn transports while OPZO needs only Nmn, and unlike backprop
the feedback is layer-parallel.
"""

import dataclasses

from opzo.metrics import CostModelInput, cost_model
from opzo.runner import RunConfig, analyze_variance

base = RunConfig(engine="bp_sg", model="fc300-desk", dataset="digits",
                 epochs=1, batch_size=128, time_steps=4, seed=0, lr=1e-3)

print("hidden-layer gradient variance over one epoch:")
for engine in ("bp_sg", "dfa", "opzo", "zo_sp"):
    result = analyze_variance(dataclasses.replace(base, engine=engine))
    hidden = sum(result["layer_variances"][:4])
    print(f"{engine:>6}: {hidden:.3e}")

print()
print("feedback cost at n=800, m=10, N=2 hidden layers:")
for name, entry in cost_model(CostModelInput(2, 800, 10)).items():
    par = "layer-parallel" if entry.parallelizable else "sequential"
    print(f"{name:>6}: {entry.operations:>7} ops, {entry.memory:>7} memory, {par}")
