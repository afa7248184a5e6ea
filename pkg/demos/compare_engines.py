"""Train the same spiking network with all four credit-assignment engines.

Runs the 8x8 digits benchmark on the two-hidden-layer FC model and prints
a final accuracy table. Expect the ordering BP-SG ~ OPZO > DFA >> ZO-SP:
the momentum-feedback engine closes most of the gap to surrogate-gradient
backprop while remaining a forward-only, node-perturbation method, whereas
plain single-point zeroth-order estimates are too noisy to train well.

Takes about a minute on one CPU core.
"""

from opzo.runner import RunConfig, run

ENGINES = ("bp_sg", "opzo", "dfa", "zo_sp")

results = {}
for engine in ENGINES:
    cfg = RunConfig(
        engine=engine,
        model="fc300-desk",
        dataset="digits",
        epochs=10,
        batch_size=64,
        time_steps=4,
        seed=0,
        lr=1e-3,
    )
    rec = run(cfg)
    results[engine] = rec
    print(f"{engine:>6}: final test acc {rec.final_test_acc:.4f} "
          f"({rec.train_seconds:.1f}s)")

print()
print("loss trajectories (train loss per epoch):")
for engine in ENGINES:
    losses = " ".join(f"{ep['train_loss']:.3f}" for ep in results[engine].epochs)
    print(f"{engine:>6}: {losses}")
