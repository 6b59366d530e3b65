"""Online plugin accumulators, sandwich covariance, and Wald reporting.

The accumulators keep running sums of the weighted-gradient outer products
and of the inverse-propensity-weighted curvatures, both evaluated at the
running average of the iterates before each step.  Storage is O(p^2)
regardless of the stream length.
"""
from __future__ import annotations

import math

import numpy as np

from .types import InferenceReport, Observation, ReportRow

DEFAULT_MAX_CONDITION = 1e12


class SingularHessianError(RuntimeError):
    """Curvature estimate too ill-conditioned to invert."""

    def __init__(self, condition: float):
        super().__init__(
            f"curvature matrix is numerically singular (condition estimate {condition:.3e}); "
            "accumulate more steps or enable the ridge fallback"
        )
        self.condition = condition


class PluginAccumulators:
    """Running sums for the gradient second moment and the weighted curvature."""

    def __init__(self, dim: int):
        if dim < 2 or dim % 2 != 0:
            raise ValueError(f"accumulator dimension must be even and positive, got {dim}")
        self.dim = dim
        self.S_sum = np.zeros((dim, dim))
        self.H_sum = np.zeros((dim, dim))
        self.n = 0

    def copy(self) -> "PluginAccumulators":
        out = PluginAccumulators(self.dim)
        out.S_sum[:] = self.S_sum
        out.H_sum[:] = self.H_sum
        out.n = self.n
        return out

    def merge(self, other: "PluginAccumulators") -> "PluginAccumulators":
        """Combine streams by summing sums and counts."""
        if other.dim != self.dim:
            raise ValueError("cannot merge accumulators of different dimensions")
        self.S_sum += other.S_sum
        self.H_sum += other.H_sum
        self.n += other.n
        return self

    def s_hat(self) -> np.ndarray:
        if self.n < 1:
            raise ValueError("no accumulated steps")
        return self.S_sum / self.n

    def h_hat(self) -> np.ndarray:
        if self.n < 1:
            raise ValueError("no accumulated steps")
        return self.H_sum / self.n


def ipw_weight(a: int, pi: float) -> float:
    """Importance ratio toward the uniform-random rule: 1/(2*pi) for action 1,
    1/(2*(1-pi)) for action 0."""
    if not 0.0 < pi < 1.0:
        raise ValueError(f"propensity must lie strictly in (0, 1), got {pi}")
    return 1.0 / (2.0 * pi) if a == 1 else 1.0 / (2.0 * (1.0 - pi))


def accumulate(acc: PluginAccumulators, model, bar_beta_prev, obs: Observation,
               pi_prev: float, variant: str = "exact") -> PluginAccumulators:
    """Add one step to the running sums.

    ``bar_beta_prev`` must be the averaged iterate before the step and
    ``pi_prev`` the propensity that actually sampled ``obs.a``.  Mutates and
    returns ``acc``.
    """
    w = ipw_weight(obs.a, pi_prev)
    g = w * model.loss_gradient(bar_beta_prev, obs)
    acc.S_sum += np.outer(g, g)
    acc.H_sum += w * model.loss_hessian(bar_beta_prev, obs, variant)
    acc.n += 1
    return acc


def sandwich_covariance(acc: PluginAccumulators, *, ridge: bool = False,
                        max_condition: float = DEFAULT_MAX_CONDITION) -> np.ndarray:
    """Covariance estimate of the averaged iterate: Hhat^-1 Shat Hhat^-T / n.

    The curvature is factored symmetrically (eigendecomposition); no explicit
    cofactor inversion.  If its condition number exceeds ``max_condition`` a
    SingularHessianError carrying the estimate is raised, unless ``ridge`` is
    set, in which case lam = 1e-8 * trace(Hhat) / dim is added to the diagonal
    before inverting.
    """
    if acc.n < 1:
        raise ValueError("no accumulated steps")
    h = acc.h_hat()
    lam, q = np.linalg.eigh(h)
    lam_abs = np.abs(lam)
    cond = math.inf if lam_abs.min() == 0.0 else float(lam_abs.max() / lam_abs.min())
    if lam.min() <= 0.0 or cond > max_condition:
        if not ridge:
            raise SingularHessianError(cond)
        h = h + (1e-8 * np.trace(h) / acc.dim) * np.eye(acc.dim)
        lam, q = np.linalg.eigh(h)
        if lam.min() <= 0.0:
            raise SingularHessianError(cond)
    s = acc.s_hat()
    core = (q.T @ s @ q) / np.outer(lam, lam)
    cov = (q @ core @ q.T) / acc.n
    return 0.5 * (cov + cov.T)


# ---------------------------------------------------------------------------
# Normal distribution helpers (no statistics-library dependency).
# ---------------------------------------------------------------------------

def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def two_sided_p(t: float) -> float:
    """Two-sided tail probability 2 * (1 - Phi(|t|)) = erfc(|t| / sqrt(2))."""
    return math.erfc(abs(t) / math.sqrt(2.0))


# Rational-approximation coefficients for the inverse normal CDF
# (P. Acklam's algorithm; absolute error ~1.15e-9 before refinement).
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
           3.754408661907416e+00)
_ICDF_P_LOW = 0.02425


def normal_quantile(prob: float) -> float:
    """Standard normal quantile, rational approximation plus one Halley step.

    Accurate to well below 1e-8 over (0, 1).
    """
    if not 0.0 < prob < 1.0:
        raise ValueError(f"probability must lie strictly in (0, 1), got {prob}")
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    if prob < _ICDF_P_LOW:
        q = math.sqrt(-2.0 * math.log(prob))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif prob <= 1.0 - _ICDF_P_LOW:
        q = prob - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - prob))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    # One Halley refinement against the erfc-based CDF.
    err = normal_cdf(x) - prob
    u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def _parameter_names(dim: int) -> list[str]:
    if dim % 2 == 0 and dim > 0:
        p = dim // 2
        return [f"beta0_{j + 1}" for j in range(p)] + [f"beta1_{j + 1}" for j in range(p)]
    return [f"b{j + 1}" for j in range(dim)]


def wald_report(bar_beta, cov, level: float = 0.95, null=None,
                names: list[str] | None = None) -> InferenceReport:
    """Per-coordinate Wald intervals, t statistics, and two-sided p values.

    A zero standard error yields t = +/-inf with p = 0, except when the
    estimate equals the null, in which case t = 0 and p = 1.
    """
    bar_beta = np.asarray(bar_beta, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    dim = bar_beta.shape[0]
    if cov.shape != (dim, dim):
        raise ValueError(f"covariance shape {cov.shape} does not match estimate length {dim}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    if null is None:
        null = np.zeros(dim)
    null = np.asarray(null, dtype=np.float64)
    variances = np.diag(cov)
    if variances.min() < -1e-10:
        raise ValueError(f"negative variance on the diagonal: {variances.min()}")
    z = normal_quantile(0.5 * (1.0 + level))
    names = names if names is not None else _parameter_names(dim)
    report = InferenceReport(level=level)
    for j in range(dim):
        est = float(bar_beta[j])
        se = math.sqrt(max(variances[j], 0.0))
        if se == 0.0:
            if est == null[j]:
                t, pv = 0.0, 1.0
            else:
                t = math.inf if est > null[j] else -math.inf
                pv = 0.0
        else:
            t = (est - null[j]) / se
            pv = two_sided_p(t)
        report.rows.append(ReportRow(
            name=names[j], estimate=est, se=se,
            ci_lo=est - z * se, ci_hi=est + z * se, t_value=t, p_value=pv,
        ))
    return report


def value_report_row(estimate: float, se: float, level: float, flag: str = "") -> ReportRow:
    """Wald record for the value estimate; no t statistic or p value."""
    if se < 0:
        raise ValueError(f"standard error must be nonnegative, got {se}")
    z = normal_quantile(0.5 * (1.0 + level))
    return ReportRow(name="V_opt", estimate=estimate, se=se,
                     ci_lo=estimate - z * se, ci_hi=estimate + z * se,
                     t_value=None, p_value=None, flag=flag)
