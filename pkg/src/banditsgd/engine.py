"""Streaming execution: decide, act, observe, update.

``run_stream`` performs one inverse-propensity-weighted SGD step per observed
reward and maintains the running average of the iterates.  Inference and
value accumulators are fed with the pre-step average, the sampling
propensity, and the exploration rate in force at sampling time, before the
step is applied.  ``run_stream_lagged`` handles rewards that arrive after
later actions have already been taken: decisions use the most recent
average under a propensity that stays frozen between updates, and each
arriving reward triggers exactly one update, in first-in-first-out order.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .inference import PluginAccumulators, ipw_weight
from .policy import RngStream, exploration_rate, learning_rate
from .types import ExplorationSchedule, LearningSchedule, Observation, ParameterState
from .value import ValueAccumulator


class ProtocolError(RuntimeError):
    """A lagged environment violated the reward-delivery contract."""


@dataclass
class StepRecord:
    """Pending decision awaiting its reward in lagged mode."""

    x: np.ndarray
    a: int
    pi_used: float
    eps_used: float
    greedy: int
    step: int
    include_value: bool = True


@dataclass
class Checkpoint:
    """State snapshot taken immediately after a given decision step."""

    t: int
    bar_beta: np.ndarray
    eps: float
    plugin: PluginAccumulators | None
    value: ValueAccumulator | None


@dataclass
class RunSummary:
    steps: int = 0
    updates: int = 0
    total_reward: float = 0.0
    exhausted: bool = False
    pending: int = 0
    losses: np.ndarray | None = None
    checkpoints: list[Checkpoint] = field(default_factory=list)


@dataclass
class StreamResult:
    state: ParameterState
    plugin: PluginAccumulators | None
    value: ValueAccumulator | None
    summary: RunSummary


def ipw_gradient(model, beta_prev, obs: Observation, pi_prev: float) -> np.ndarray:
    """Loss gradient reweighted toward the uniform-random action rule."""
    return ipw_weight(obs.a, pi_prev) * model.loss_gradient(beta_prev, obs)


def sgd_step(state: ParameterState, model, schedule: LearningSchedule,
             obs: Observation, pi_used: float) -> ParameterState:
    """One weighted SGD step plus the recursive average; returns a new state."""
    t_next = state.t + 1
    g = ipw_gradient(model, state.hat_beta, obs, pi_used)
    hat = state.hat_beta - learning_rate(schedule, t_next) * g
    bar = (hat + state.t * state.bar_beta) / t_next
    return ParameterState(hat, bar, t_next)


class _UpdateCore:
    """Shared per-reward arithmetic for both engine loops.

    Keeps the raw iterate and its running average as plain arrays and applies
    accumulator and SGD updates in one pass.  The public ``sgd_step`` /
    ``accumulate`` / ``update_value`` operations define the semantics; this
    core mirrors them (tests assert the equivalence) with cached block views
    and preallocated buffers, since these few lines dominate the run time.
    """

    def __init__(self, model, learn: LearningSchedule, *, variant: str,
                 collect_inference: bool, collect_value: bool, aipw: bool):
        self.model = model
        self.p = model.p
        self.alpha = learn.alpha
        self.gamma = learn.gamma
        self.variant = variant
        self.aipw = aipw
        p = model.p
        dim = 2 * p
        self.hat = np.zeros(dim)
        self.bar = np.zeros(dim)
        self._hat_blocks = (self.hat[:p], self.hat[p:])
        self._bar_blocks = (self.bar[:p], self.bar[p:])
        self.plugin = PluginAccumulators(dim) if collect_inference else None
        if self.plugin is not None:
            s, h = self.plugin.S_sum, self.plugin.H_sum
            self._s_blocks = (s[:p, :p], s[p:, p:])
            self._h_blocks = (h[:p, :p], h[p:, p:])
            self._xx = np.empty((p, p))
            self._pp = np.empty((p, p))
        self.value = ValueAccumulator(aipw=aipw) if collect_value else None
        self._link = model.mean_from_index
        self._hess_scale = model.hessian_scale
        self._check_reward = model.validate_reward
        self.updates = 0

    def decide(self, x) -> tuple[int, float, float]:
        # Same expression as the update-time recomputation so that zero-lag
        # delivery reproduces the plain stream bit for bit.
        u0 = float(x @ self._bar_blocks[0])
        u1 = float(x @ self._bar_blocks[1])
        return (1 if u1 > u0 else 0), u0, u1

    def loss_at_bar(self, x, a: int, y: float) -> float:
        mu = self._link(float(x @ self._bar_blocks[a]))
        return self.model.loss_from_mean(mu, y)

    def apply(self, x, a: int, y: float, pi: float, eps: float, greedy: int,
              include_value: bool = True, u_bar: float | None = None) -> None:
        """Consume one reward: feed accumulators at the pre-step average, then
        take the SGD step with ordinal ``updates + 1``.

        ``u_bar`` may carry the active-block index at the current average when
        the caller already computed it for the decision.
        """
        self._check_reward(y)
        w = 0.5 / pi if a == 1 else 0.5 / (1.0 - pi)
        ordinal = self.updates + 1

        if self.plugin is not None:
            if u_bar is None:
                u_bar = float(x @ self._bar_blocks[a])
            mu_bar = self._link(u_bar)
            xx = self._xx
            np.multiply(x[:, None], x, out=xx)
            gw = (mu_bar - y) * w
            np.multiply(xx, gw * gw, out=self._pp)
            sb = self._s_blocks[a]
            np.add(sb, self._pp, out=sb)
            np.multiply(xx, self._hess_scale(mu_bar, y, self.variant) * w, out=self._pp)
            hb = self._h_blocks[a]
            np.add(hb, self._pp, out=hb)
            self.plugin.n += 1
        if self.value is not None and include_value:
            mu_greedy = None
            if self.aipw:
                mu_greedy = self._link(float(x @ self._bar_blocks[greedy]))
            self.value.add_scalars(a, y, greedy, eps, mu_greedy)

        hat_block = self._hat_blocks[a]
        u_hat = float(x @ hat_block)
        g_scale = (self._link(u_hat) - y) * w
        alpha_t = self.alpha * float(ordinal) ** (-self.gamma)
        hat_block -= (alpha_t * g_scale) * x
        # In-place running average keeps the cached views valid.
        bar = self.bar
        bar *= float(ordinal - 1)
        bar += self.hat
        bar /= float(ordinal)
        self.updates = ordinal

    def snapshot(self, t: int, eps: float) -> Checkpoint:
        return Checkpoint(
            t=t, bar_beta=self.bar.copy(), eps=eps,
            plugin=self.plugin.copy() if self.plugin is not None else None,
            value=self.value.copy() if self.value is not None else None,
        )

    def state(self) -> ParameterState:
        return ParameterState(self.hat.copy(), self.bar.copy(), self.updates)


def run_stream(env, model, learn: LearningSchedule, explore: ExplorationSchedule,
               rng: RngStream, horizon: int, *, hessian: str = "exact",
               aipw: bool = False, collect_inference: bool = True,
               collect_value: bool = True, checkpoints=(), record_losses: bool = False,
               trace_path=None, skip_value_burn_in: bool = False,
               hooks=()) -> StreamResult:
    """Run ``horizon`` decision steps against an environment.

    The environment supplies features via ``next_feature()`` (``None`` once
    exhausted, which stops the run cleanly) and rewards via
    ``outcome(x, action)``; an ``outcome`` of ``None`` marks a skipped replay
    entry, which consumes the entry but not a decision step.  Fixed seeds give
    bit-identical runs.  ``hooks`` are called as
    ``hook(bar_beta_prev, obs, pi, eps, greedy)`` before each update.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    core = _UpdateCore(model, learn, variant=hessian,
                       collect_inference=collect_inference,
                       collect_value=collect_value, aipw=aipw)
    summary = RunSummary()
    if record_losses:
        summary.losses = np.full(horizon, np.nan)
    cp_set = set(int(c) for c in checkpoints)
    trace_file = writer = None
    if trace_path is not None:
        trace_file = open(trace_path, "w", newline="")
        writer = csv.writer(trace_file)
        writer.writerow(["step", "eps", "pi", "action", "reward", "loss"])
    try:
        for t in range(1, horizon + 1):
            eps = exploration_rate(explore, t)
            while True:
                x = env.next_feature()
                if x is None:
                    summary.exhausted = True
                    break
                greedy, u0, u1 = core.decide(x)
                pi = 1.0 - eps / 2.0 if greedy == 1 else eps / 2.0
                a = 1 if rng.uniform() < pi else 0
                y = env.outcome(x, a)
                if y is not None:
                    break
            if summary.exhausted:
                break
            if hooks:
                obs = Observation(x, a, y)
                bar_prev = core.bar.copy()
                for hook in hooks:
                    hook(bar_prev, obs, pi, eps, greedy)
            loss = None
            if record_losses or writer is not None:
                loss = core.loss_at_bar(x, a, y)
                if record_losses:
                    summary.losses[t - 1] = loss
            include_value = not (skip_value_burn_in and t <= explore.burn_in)
            core.apply(x, a, float(y), pi, eps, greedy, include_value,
                       u_bar=u1 if a == 1 else u0)
            summary.total_reward += y
            summary.steps = t
            if writer is not None:
                writer.writerow([t, repr(eps), repr(pi), a, repr(float(y)), repr(loss)])
            if t in cp_set:
                summary.checkpoints.append(core.snapshot(t, eps))
    finally:
        if trace_file is not None:
            trace_file.close()
    if record_losses and summary.steps < horizon:
        summary.losses = summary.losses[:summary.steps]
    summary.updates = core.updates
    return StreamResult(core.state(), core.plugin, core.value, summary)


def run_stream_lagged(env, model, learn: LearningSchedule, explore: ExplorationSchedule,
                      rng: RngStream, horizon: int, *, hessian: str = "exact",
                      aipw: bool = False, collect_inference: bool = True,
                      collect_value: bool = True, checkpoints=(),
                      skip_value_burn_in: bool = False) -> StreamResult:
    """Run with delayed reward delivery.

    The environment exposes ``next_feature()``, ``submit(step, x, action)``
    and ``arrivals(step)``; the latter returns ``(step_index, reward)`` pairs
    that have just become available and must follow the order actions were
    taken.  Updates use the propensity stored with the pending record and the
    learning-rate index equal to the update ordinal.  The exploration clock
    advances with completed updates, so the rule stays frozen while rewards
    are outstanding.  Records whose rewards never arrive simply never update
    (they remain counted in ``summary.pending``).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    core = _UpdateCore(model, learn, variant=hessian,
                       collect_inference=collect_inference,
                       collect_value=collect_value, aipw=aipw)
    summary = RunSummary()
    cp_set = set(int(c) for c in checkpoints)
    pending: deque[StepRecord] = deque()

    def drain(now: int) -> None:
        for step_idx, y in env.arrivals(now):
            if not pending:
                raise ProtocolError(f"reward for step {step_idx} has no pending record")
            head = pending[0]
            if head.step != step_idx:
                raise ProtocolError(
                    f"reward for step {step_idx} arrived out of order; "
                    f"expected step {head.step}"
                )
            pending.popleft()
            core.apply(head.x, head.a, float(y), head.pi_used, head.eps_used,
                       head.greedy, head.include_value)
            summary.total_reward += y

    for t in range(1, horizon + 1):
        drain(t)
        x = env.next_feature()
        if x is None:
            summary.exhausted = True
            break
        ordinal_next = core.updates + 1
        eps = exploration_rate(explore, ordinal_next)
        greedy, _, _ = core.decide(x)
        pi = 1.0 - eps / 2.0 if greedy == 1 else eps / 2.0
        a = 1 if rng.uniform() < pi else 0
        include_value = not (skip_value_burn_in and ordinal_next <= explore.burn_in)
        pending.append(StepRecord(x, a, pi, eps, greedy, t, include_value))
        env.submit(t, x, a)
        drain(t)
        summary.steps = t
        if t in cp_set:
            summary.checkpoints.append(core.snapshot(t, eps))
    summary.updates = core.updates
    summary.pending = len(pending)
    return StreamResult(core.state(), core.plugin, core.value, summary)
