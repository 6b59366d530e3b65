"""Desk-scale coverage experiment for the logistic setting.

Runs seeded replications in parallel and prints, per checkpoint, the ratio of
the mean estimated standard error to the Monte Carlo standard deviation (R),
the empirical 95% interval coverage (C), and the mean interval length (L) for
every coordinate and for the value estimate.  With more replications (the
CLI default is 1000) the coverage lands near 0.95 for horizons of 1e4 and up.
"""
from banditsgd import ExperimentConfig, run_monte_carlo

config = ExperimentConfig(
    model="logistic",
    horizon=10_000,
    reps=200,            # desk scale; increase for tighter Monte Carlo error
    seed=20090501,
    checkpoints=(1_000, 10_000),
    workers=2,
    out="results/mc_logistic_demo",
)

summary = run_monte_carlo(config)
print(f"truth value = {summary.truth_value:.4f} (+/- {summary.truth_value_se:.4f})")
print(f"{'t':>6s} {'name':10s} {'R':>6s} {'C':>6s} {'L':>8s}")
for row in summary.rows:
    print(f"{row.t:6d} {row.name:10s} {row.ratio:6.3f} {row.coverage:6.3f} "
          f"{row.ci_length:8.4f}")
print("\nfiles written under", config.out)
