import csv
import math

import numpy as np
import pytest

from banditsgd import (ExplorationSchedule, LearningSchedule, LinearModel,
                       LogisticModel, Observation, ParameterState, ProtocolError,
                       RngStream, SyntheticConfig, SyntheticEnvironment,
                       exploration_rate, ipw_gradient, make_model, run_stream,
                       run_stream_lagged, sgd_step)
from banditsgd.environments import LaggedSyntheticEnvironment, constant_lag, geometric_lag
from banditsgd.inference import PluginAccumulators, accumulate
from banditsgd.value import ValueAccumulator, update_value

BETA0 = np.array([0.3, -0.1, 0.7, 0.8, 0.5, -0.4])
LEARN = LearningSchedule(0.5, 0.501)
EXPLORE = ExplorationSchedule.fixed(0.2, burn_in=50)


def make_env(family="linear", seed=1, sigma2=0.01):
    model = make_model(family, 3, sigma2=sigma2)
    rng = RngStream(seed)
    env = SyntheticEnvironment(SyntheticConfig(model, BETA0), rng)
    return model, env, rng


class TestIpwGradient:
    def test_half_propensity_is_unweighted(self):
        m = LinearModel(3)
        obs = Observation([1.0, 0.3, -0.2], 1, 0.7)
        np.testing.assert_allclose(ipw_gradient(m, BETA0, obs, 0.5),
                                   m.loss_gradient(BETA0, obs), rtol=1e-15)

    def test_action_one_scaling(self):
        m = LinearModel(3)
        obs = Observation([1.0, 0.3, -0.2], 1, 0.7)
        np.testing.assert_allclose(ipw_gradient(m, BETA0, obs, 0.9),
                                   m.loss_gradient(BETA0, obs) / 1.8, rtol=1e-15)

    def test_action_zero_scaling(self):
        m = LinearModel(3)
        obs = Observation([1.0, 0.3, -0.2], 0, 0.7)
        np.testing.assert_allclose(ipw_gradient(m, BETA0, obs, 0.9),
                                   m.loss_gradient(BETA0, obs) / 0.2, rtol=1e-15)

    def test_propensity_bounds(self):
        m = LinearModel(3)
        obs = Observation([1.0, 0.3, -0.2], 0, 0.7)
        for pi in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError):
                ipw_gradient(m, BETA0, obs, pi)

    def test_mean_matches_uniform_rule_gradient(self):
        # Weighted gradient under Bernoulli(pi) actions has the same mean as
        # the plain gradient under uniform actions (one configuration here;
        # the acceptance suite checks twenty).
        rng = np.random.default_rng(101)
        m = LinearModel(3)
        beta = rng.standard_normal(6)
        x = np.append(1.0, rng.standard_normal(2))
        pi = 0.85
        n = 100_000
        diff = _mc_gradient_mean_gap(m, beta, x, pi, n, rng)
        assert (np.abs(diff[0]) <= 4.0 * diff[1]).all()


def _mc_gradient_mean_gap(model, beta, x, pi, n, rng):
    """Mean IPW gradient under Bernoulli(pi) minus mean plain gradient under
    Bernoulli(1/2), with the combined standard error; rewards from the truth."""
    u = np.array([float(x @ BETA0[:3]), float(x @ BETA0[3:])])
    mean_at = np.array([float(x @ beta[:3]), float(x @ beta[3:])])

    def draws(prob, weighted):
        a = (rng.random(n) < prob).astype(int)
        if model.tag == "linear":
            y = u[a] + 0.1 * rng.standard_normal(n)
            resid = mean_at[a] - y
        else:
            mu_true = model.mean_from_index_array(u[a])
            y = (rng.random(n) < mu_true).astype(float)
            resid = model.mean_from_index_array(mean_at[a]) - y
        w = np.where(a == 1, 0.5 / prob, 0.5 / (1.0 - prob)) if weighted else 1.0
        g = np.zeros((n, 6))
        g[a == 0, :3] = (w * resid)[a == 0, None] * x
        g[a == 1, 3:] = (w * resid)[a == 1, None] * x
        return g

    g_pi = draws(pi, weighted=True)
    g_half = draws(0.5, weighted=False)
    gap = g_pi.mean(axis=0) - g_half.mean(axis=0)
    se = np.sqrt(g_pi.var(axis=0, ddof=1) / n + g_half.var(axis=0, ddof=1) / n)
    return gap, se


class TestSgdStep:
    def test_hand_computed_first_step(self):
        m = LinearModel(3)
        state = ParameterState.zeros(3)
        obs = Observation([1.0, 0.0, 0.0], 1, 1.0)
        new = sgd_step(state, m, LEARN, obs, 0.5)
        np.testing.assert_allclose(new.hat_beta, [0, 0, 0, 0.5, 0, 0], atol=1e-15)
        np.testing.assert_allclose(new.bar_beta, new.hat_beta, atol=1e-15)
        assert new.t == 1

    def test_zero_gradient_fixed_point(self):
        m = LinearModel(3)
        hat = BETA0.copy()
        state = ParameterState(hat, hat.copy(), 5)
        x = np.array([1.0, 0.2, -0.1])
        obs = Observation(x, 1, m.mean_reward(1, x, BETA0))
        new = sgd_step(state, m, LEARN, obs, 0.7)
        np.testing.assert_array_equal(new.hat_beta, state.hat_beta)
        np.testing.assert_allclose(new.bar_beta, state.bar_beta, rtol=1e-15)
        assert new.t == 6

    def test_value_semantics(self):
        m = LinearModel(3)
        state = ParameterState.zeros(3)
        before_hat = state.hat_beta.copy()
        obs = Observation([1.0, 1.0, -1.0], 0, 2.0)
        sgd_step(state, m, LEARN, obs, 0.4)
        np.testing.assert_array_equal(state.hat_beta, before_hat)
        assert state.t == 0

    def test_inactive_block_never_touched(self):
        m = LogisticModel(3)
        rng = np.random.default_rng(61)
        state = ParameterState(rng.standard_normal(6), rng.standard_normal(6), 3)
        for _ in range(30):
            x = np.append(1.0, rng.standard_normal(2))
            a = int(rng.integers(0, 2))
            obs = Observation(x, a, float(rng.integers(0, 2)))
            new = sgd_step(state, m, LEARN, obs, float(rng.uniform(0.2, 0.8)))
            inactive = slice(3, 6) if a == 0 else slice(0, 3)
            np.testing.assert_array_equal(new.hat_beta[inactive],
                                          state.hat_beta[inactive])
            state = new

    def test_average_matches_store_all_oracle(self):
        m = LogisticModel(3)
        rng = np.random.default_rng(55)
        state = ParameterState.zeros(3)
        iterates = []
        for _ in range(500):
            x = np.append(1.0, rng.standard_normal(2))
            obs = Observation(x, int(rng.integers(0, 2)), float(rng.integers(0, 2)))
            state = sgd_step(state, m, LEARN, obs, float(rng.uniform(0.1, 0.9)))
            iterates.append(state.hat_beta)
        oracle = np.mean(iterates, axis=0)
        np.testing.assert_allclose(state.bar_beta, oracle, rtol=1e-12)


class TestRunStream:
    def test_single_step_burn_in(self):
        m, env, rng = make_env()
        seen = []
        res = run_stream(env, m, LEARN, EXPLORE, rng, 1,
                         hooks=[lambda bar, obs, pi, eps, greedy: seen.append((pi, eps))])
        assert res.summary.steps == 1 and res.plugin.n == 1 and res.value.t == 1
        assert seen == [(0.5, 1.0)]

    def test_fixed_seed_bit_identical(self):
        m1, env1, rng1 = make_env(seed=42)
        m2, env2, rng2 = make_env(seed=42)
        r1 = run_stream(env1, m1, LEARN, EXPLORE, rng1, 3000)
        r2 = run_stream(env2, m2, LEARN, EXPLORE, rng2, 3000)
        np.testing.assert_array_equal(r1.state.bar_beta, r2.state.bar_beta)
        np.testing.assert_array_equal(r1.plugin.S_sum, r2.plugin.S_sum)
        assert r1.value.sum_v == r2.value.sum_v

    @pytest.mark.parametrize("family", ["linear", "logistic"])
    def test_engine_matches_public_operations(self, family):
        # The engine's fused update must reproduce the per-step operations
        # applied one at a time.
        m, env, rng = make_env(family, seed=7)
        steps = []
        res = run_stream(env, m, LEARN,
                         ExplorationSchedule.fixed(0.2, burn_in=10), rng, 1500,
                         hooks=[lambda *rec: steps.append(rec)])
        state = ParameterState.zeros(3)
        acc = PluginAccumulators(6)
        val = ValueAccumulator()
        for bar_prev, obs, pi, eps, greedy in steps:
            np.testing.assert_allclose(bar_prev, state.bar_beta, rtol=1e-10, atol=1e-13)
            accumulate(acc, m, state.bar_beta, obs, pi)
            update_value(val, obs, greedy, eps)
            state = sgd_step(state, m, LEARN, obs, pi)
        np.testing.assert_allclose(res.state.hat_beta, state.hat_beta, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(res.state.bar_beta, state.bar_beta, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(res.plugin.S_sum, acc.S_sum, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(res.plugin.H_sum, acc.H_sum, rtol=1e-12, atol=1e-13)
        assert res.value.t == val.t
        assert res.value.sum_v == pytest.approx(val.sum_v, rel=1e-13)

    def test_consistency_over_replications(self):
        # At horizon 1e4 the averaged iterate should be inside a 0.1 ball
        # around the truth in at least 99 of 100 seeded replications.
        hits = 0
        for rep in range(100):
            m, env, rng = make_env(seed=1000 + rep)
            res = run_stream(env, m, LEARN, EXPLORE, rng, 10_000,
                             collect_inference=False, collect_value=False)
            hits += np.linalg.norm(res.state.bar_beta - BETA0) < 0.1
        assert hits >= 99

    def test_losses_recorded_at_running_average(self):
        m, env, rng = make_env(seed=3)
        res = run_stream(env, m, LEARN, EXPLORE, rng, 200, record_losses=True)
        assert res.summary.losses.shape == (200,)
        assert np.isfinite(res.summary.losses).all()
        assert (res.summary.losses >= 0).all()

    def test_trace_emission(self, tmp_path):
        m, env, rng = make_env(seed=4)
        path = tmp_path / "trace.csv"
        res = run_stream(env, m, LEARN, EXPLORE, rng, 5, trace_path=path)
        rows = list(csv.DictReader(open(path)))
        assert len(rows) == 5
        assert list(rows[0]) == ["step", "eps", "pi", "action", "reward", "loss"]
        assert float(rows[0]["eps"]) == 1.0 and float(rows[0]["pi"]) == 0.5
        total = sum(float(r["reward"]) for r in rows)
        assert total == pytest.approx(res.summary.total_reward, rel=1e-12)

    def test_checkpoint_snapshots_are_frozen_copies(self):
        m, env, rng = make_env(seed=5)
        res = run_stream(env, m, LEARN, EXPLORE, rng, 400, checkpoints=(100, 400))
        cps = res.summary.checkpoints
        assert [cp.t for cp in cps] == [100, 400]
        assert cps[0].plugin.n == 100 and cps[1].plugin.n == 400
        assert cps[0].value.t == 100
        assert not np.array_equal(cps[0].bar_beta, res.state.bar_beta)
        np.testing.assert_array_equal(cps[1].bar_beta, res.state.bar_beta)

    def test_environment_exhaustion_stops_cleanly(self):
        from banditsgd import ReplayCursor, ReplayEnvironment, ReplayLogEntry
        rng_np = np.random.default_rng(6)
        entries = [ReplayLogEntry(np.append(1.0, rng_np.standard_normal(2)),
                                  int(rng_np.integers(0, 2)), float(rng_np.integers(0, 2)))
                   for _ in range(40)]
        m = LogisticModel(3)
        cursor = ReplayCursor(entries)
        res = run_stream(ReplayEnvironment(cursor), m, LEARN, EXPLORE,
                         RngStream(8), 1000)
        assert res.summary.exhausted
        assert res.summary.steps == cursor.matched
        assert cursor.consumed == 40

    def test_value_burn_in_exclusion_switch(self):
        m1, env1, rng1 = make_env(seed=9)
        keep = run_stream(env1, m1, LEARN, EXPLORE, rng1, 200)
        m2, env2, rng2 = make_env(seed=9)
        skip = run_stream(env2, m2, LEARN, EXPLORE, rng2, 200, skip_value_burn_in=True)
        assert keep.value.t == 200
        assert skip.value.t == 200 - EXPLORE.burn_in
        np.testing.assert_array_equal(keep.state.bar_beta, skip.state.bar_beta)


class _RecordingLaggedEnv:
    """Wraps a lagged environment, logging actions and arrivals in call order."""

    def __init__(self, inner):
        self.inner = inner
        self.events = []

    def next_feature(self):
        return self.inner.next_feature()

    def submit(self, step, x, a):
        self.events.append(("action", step, x.copy(), a))
        self.inner.submit(step, x, a)

    def arrivals(self, now):
        out = self.inner.arrivals(now)
        for step, y in out:
            self.events.append(("arrival", step, y))
        return out


def _store_and_replay_reference(model, learn, explore, events):
    """Independent fold of the lagged semantics from the recorded event
    sequence, built on the public one-step operations: the decision rule
    freezes between updates, and each arriving reward applies one update with
    the propensity stored at decision time and an ordinal learning-rate
    index."""
    state = ParameterState.zeros(model.p)
    stored = {}
    for ev in events:
        if ev[0] == "action":
            _, step, x, a = ev
            eps = exploration_rate(explore, state.t + 1)
            u0 = float(x @ state.bar_beta[:model.p])
            u1 = float(x @ state.bar_beta[model.p:])
            greedy = 1 if u1 > u0 else 0
            pi = 1.0 - eps / 2.0 if greedy == 1 else eps / 2.0
            stored[step] = (x, a, pi)
        else:
            _, step, y = ev
            x, a, pi = stored.pop(step)
            state = sgd_step(state, model, learn, Observation(x, a, y), pi)
    return state


class TestRunStreamLagged:
    def test_zero_lag_equals_plain_stream(self):
        m1, _, rng1 = make_env(seed=21)
        env1 = LaggedSyntheticEnvironment(SyntheticConfig(m1, BETA0), rng1, lag=0)
        lag_res = run_stream_lagged(env1, m1, LEARN, EXPLORE, rng1, 800)
        m2, env2, rng2 = make_env(seed=21)
        plain = run_stream(env2, m2, LEARN, EXPLORE, rng2, 800)
        np.testing.assert_array_equal(lag_res.state.bar_beta, plain.state.bar_beta)
        np.testing.assert_array_equal(lag_res.plugin.S_sum, plain.plugin.S_sum)
        assert lag_res.value.sum_v == plain.value.sum_v
        assert lag_res.summary.pending == 0

    def test_unit_lag_is_one_update_behind(self):
        # With constant lag one the decisions coincide with the lag-free run;
        # only the final reward is still outstanding.
        m1, _, rng1 = make_env(seed=22)
        env1 = LaggedSyntheticEnvironment(SyntheticConfig(m1, BETA0), rng1, lag=1)
        lag_res = run_stream_lagged(env1, m1, LEARN, EXPLORE, rng1, 600)
        m2, env2, rng2 = make_env(seed=22)
        steps = []
        run_stream(env2, m2, LEARN, EXPLORE, rng2, 600,
                   hooks=[lambda *rec: steps.append(rec)])
        state = ParameterState.zeros(3)
        for bar_prev, obs, pi, eps, greedy in steps[:-1]:
            state = sgd_step(state, m2, LEARN, obs, pi)
        assert lag_res.summary.updates == 599
        assert lag_res.summary.pending == 1
        np.testing.assert_allclose(lag_res.state.bar_beta, state.bar_beta,
                                   rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("lag", [2, 5])
    def test_constant_lag_matches_reference(self, lag):
        m, _, rng = make_env(seed=23 + lag)
        env = _RecordingLaggedEnv(
            LaggedSyntheticEnvironment(SyntheticConfig(m, BETA0), rng, lag=lag))
        res = run_stream_lagged(env, m, LEARN, EXPLORE, rng, 500)
        ref = _store_and_replay_reference(m, LEARN, EXPLORE, env.events)
        assert res.summary.updates == ref.t == 500 - lag
        np.testing.assert_allclose(res.state.bar_beta, ref.bar_beta,
                                   rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(res.state.hat_beta, ref.hat_beta,
                                   rtol=1e-10, atol=1e-12)

    def test_geometric_lag_matches_reference(self):
        m, _, rng = make_env("logistic", seed=31)
        env = _RecordingLaggedEnv(
            LaggedSyntheticEnvironment(SyntheticConfig(m, BETA0), rng,
                                       lag=geometric_lag(0.4)))
        res = run_stream_lagged(env, m, LEARN, EXPLORE, rng, 400)
        ref = _store_and_replay_reference(m, LEARN, EXPLORE, env.events)
        assert res.summary.updates == ref.t
        assert res.summary.updates + res.summary.pending == res.summary.steps
        np.testing.assert_allclose(res.state.bar_beta, ref.bar_beta,
                                   rtol=1e-10, atol=1e-12)

    def test_out_of_order_arrival_raises(self):
        m, _, rng = make_env(seed=41)

        class Shuffled:
            """Holds step 3's reward back one step, then delivers reversed."""

            def __init__(self):
                self.inner = LaggedSyntheticEnvironment(SyntheticConfig(m, BETA0), rng, lag=1)
                self.held = []

            def next_feature(self):
                return self.inner.next_feature()

            def submit(self, step, x, a):
                self.inner.submit(step, x, a)

            def arrivals(self, now):
                got = self.held + self.inner.arrivals(now)
                self.held = []
                if now == 4 and got:
                    self.held = got
                    return []
                if now == 5:
                    return list(reversed(got))
                return got

        with pytest.raises(ProtocolError):
            run_stream_lagged(Shuffled(), m, LEARN, EXPLORE, rng, 10)

    def test_unknown_step_reward_raises(self):
        m, _, rng = make_env(seed=43)

        class Phantom:
            def __init__(self):
                self.inner = LaggedSyntheticEnvironment(SyntheticConfig(m, BETA0), rng, lag=0)

            def next_feature(self):
                return self.inner.next_feature()

            def submit(self, step, x, a):
                self.inner.submit(step, x, a)

            def arrivals(self, now):
                out = self.inner.arrivals(now)
                return out + out  # deliver each reward twice

        with pytest.raises(ProtocolError):
            run_stream_lagged(Phantom(), m, LEARN, EXPLORE, rng, 10)

    def test_missing_rewards_never_update(self):
        m, _, rng = make_env(seed=44)

        class BlackHole:
            def __init__(self):
                self.inner = LaggedSyntheticEnvironment(SyntheticConfig(m, BETA0), rng, lag=0)

            def next_feature(self):
                return self.inner.next_feature()

            def submit(self, step, x, a):
                self.inner.submit(step, x, a)

            def arrivals(self, now):
                # swallow every second step's reward and everything after it
                return [sy for sy in self.inner.arrivals(now) if sy[0] <= 3]

        res = run_stream_lagged(BlackHole(), m, LEARN, EXPLORE, rng, 10)
        assert res.summary.updates == 3
        assert res.summary.pending == 7
