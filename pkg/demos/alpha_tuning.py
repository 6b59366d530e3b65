"""Pick the learning-rate constant by comparing streaming loss.

For each constant on the grid, replicated runs record the loss of the current
averaged model on each incoming observation (before updating).  The running
average of that loss is smooth; the constant with the lowest final running
average wins.  Too small a constant converges slowly, too large a constant
pays an early variance penalty.
"""
from banditsgd import ExperimentConfig, tune_alpha

config = ExperimentConfig(
    model="linear",
    horizon=4_000,
    reps=100,
    seed=20090501,
    checkpoints=(4_000,),
    workers=2,
    out="results/tune_demo",
)

result = tune_alpha(config, [0.1, 0.5, 1.0])
print(f"{'alpha':>6s} {'final running-mean loss':>24s}")
for alpha, loss in sorted(result.final_loss.items()):
    marker = "  <-- best" if alpha == result.best_alpha else ""
    print(f"{alpha:6.2f} {loss:24.5f}{marker}")
print("\ntrajectories written under", config.out)
