"""OPZO under the four perturbation configurations.

The estimator admits Gaussian or Rademacher noise, injected either on the
transmitted spikes (after the neuron) or on the membrane currents (before
it). Training quality should be nearly indifferent to the choice; this
runs the small conv model on the synthetic oriented-pattern benchmark
under all four combinations.
"""

from opzo.runner import RunConfig, run

baseline = None
for dist in ("gaussian", "rademacher"):
    for pos in ("after_neuron", "before_neuron"):
        cfg = RunConfig(
            engine="opzo",
            model="conv-desk",
            dataset="synthetic-conv",
            epochs=8,
            batch_size=64,
            time_steps=4,
            seed=5,
            lr=1e-3,
            noise_dist=dist,
            noise_position=pos,
        )
        acc = run(cfg).final_test_acc
        if baseline is None:
            baseline = acc
        print(f"{dist:>10} / {pos:<13} acc {acc:.4f} "
              f"(delta vs baseline {100 * (acc - baseline):+.1f} pts)")
