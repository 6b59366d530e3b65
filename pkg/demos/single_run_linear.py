"""One seeded run of the linear setting, printed as an inference table.

The stream makes epsilon-greedy decisions, learns by averaged SGD with
inverse-propensity-weighted gradients, and keeps the sandwich covariance and
the value accumulators online.  At the end we print Wald intervals for every
coordinate and for the optimal-rule value.
"""
import numpy as np

from banditsgd import (ExplorationSchedule, LearningSchedule, LinearModel,
                       RngStream, SyntheticConfig, SyntheticEnvironment,
                       oracle_value, run_stream, sandwich_covariance,
                       value_estimate, value_standard_error, wald_report)
from banditsgd.inference import value_report_row

BETA0 = np.array([0.3, -0.1, 0.7, 0.8, 0.5, -0.4])

model = LinearModel(3, sigma2=0.01)
rng = RngStream(seed=20090501)
env = SyntheticEnvironment(SyntheticConfig(model, BETA0), rng)

result = run_stream(
    env, model,
    LearningSchedule(alpha=0.5, gamma=0.501),
    ExplorationSchedule.fixed(0.2, burn_in=50),
    rng, horizon=10_000,
)

cov = sandwich_covariance(result.plugin)
report = wald_report(result.state.bar_beta, cov, level=0.95)
eps_final = 0.2
report.rows.append(value_report_row(
    value_estimate(result.value),
    value_standard_error(result.value, eps_final), level=0.95))

print(f"{'name':10s} {'truth':>8s} {'estimate':>9s} {'se':>8s} {'95% CI':>20s}")
truth_v, _ = oracle_value(model, BETA0, 1_000_000, RngStream(1))
truths = list(BETA0) + [truth_v]
for row, truth in zip(report.rows, truths):
    ci = f"[{row.ci_lo: .4f}, {row.ci_hi: .4f}]"
    print(f"{row.name:10s} {truth:8.4f} {row.estimate:9.4f} {row.se:8.4f} {ci:>20s}")
print(f"\ncumulative reward over {result.summary.steps} steps: "
      f"{result.summary.total_reward:.1f}")
