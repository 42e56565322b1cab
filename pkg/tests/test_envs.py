import numpy as np
import pytest

from simplexrl.envs import (GridWorldEnv, PendulumEnv, PointMassEnv,
                            SynthConfig, env_spec, make_env, synth_generate)


ALL_ENVS = ["pointmass", "pendulum", "gridworld"]


@pytest.mark.parametrize("name", ALL_ENVS)
class TestEnvContract:
    def test_reset_deterministic(self, name):
        a = make_env(name).reset(seed=11)
        b = make_env(name).reset(seed=11)
        np.testing.assert_array_equal(a, b)

    def test_step_deterministic(self, name):
        spec = env_spec(name)
        outs = []
        for _ in range(2):
            env = make_env(name)
            env.reset(seed=3)
            traj = []
            rng = np.random.default_rng(0)
            for _ in range(20):
                if spec.action_kind == "discrete":
                    act = int(rng.integers(0, spec.action_dim))
                else:
                    act = rng.uniform(-1, 1, spec.action_dim)
                obs, r, done = env.step(act)
                traj.append((obs.copy(), r, done))
                if done:
                    env.reset(seed=4)
            outs.append(traj)
        for (o1, r1, d1), (o2, r2, d2) in zip(*outs):
            np.testing.assert_array_equal(o1, o2)
            assert r1 == r2 and d1 == d2

    def test_rewards_within_declared_bounds(self, name):
        spec = env_spec(name)
        env = make_env(name)
        env.reset(seed=0)
        rng = np.random.default_rng(1)
        for _ in range(500):
            if spec.action_kind == "discrete":
                act = int(rng.integers(0, spec.action_dim))
            else:
                act = rng.uniform(-1, 1, spec.action_dim) * 3  # out-of-range too
            _, r, done = env.step(act)
            assert spec.reward_bounds[0] <= r <= spec.reward_bounds[1]
            if done:
                env.reset(seed=int(rng.integers(0, 1000)))

    def test_episode_limit_enforced(self, name):
        spec = env_spec(name)
        env = make_env(name)
        env.reset(seed=1)
        null_act = 0 if spec.action_kind == "discrete" else np.zeros(spec.action_dim)
        for t in range(spec.episode_limit + 1):
            _, _, done = env.step(null_act)
            if done:
                break
        assert done
        assert t < spec.episode_limit

    def test_obs_width_matches_spec(self, name):
        spec = env_spec(name)
        obs = make_env(name).reset(seed=0)
        assert obs.shape == (spec.obs_dim,)


class TestGridWorld:
    def test_one_hot_observation(self):
        env = GridWorldEnv()
        obs = env.reset(seed=0)
        assert obs.sum() == 2.0  # position + goal
        assert set(np.unique(obs)) <= {0.0, 1.0}

    def test_goal_never_equals_start(self):
        for seed in range(50):
            env = GridWorldEnv()
            env.reset(seed=seed)
            assert env.pos != env.goal

    def test_reaching_goal_terminates_with_bonus(self):
        env = GridWorldEnv()
        env.reset(seed=0)
        # walk greedily toward the goal
        for _ in range(20):
            dr = np.sign(env.goal[0] - env.pos[0])
            dc = np.sign(env.goal[1] - env.pos[1])
            act = {(-1, 0): 0, (1, 0): 1, (0, -1): 2, (0, 1): 3}[
                (dr, 0) if dr != 0 else (0, dc)]
            _, r, done = env.step(act)
            if done:
                break
        assert done and r == pytest.approx(1.0 - 0.01)


class TestPendulum:
    def test_observation_is_unit_circle_plus_velocity(self):
        env = PendulumEnv()
        obs = env.reset(seed=5)
        assert obs[0] ** 2 + obs[1] ** 2 == pytest.approx(1.0)
        assert abs(obs[2]) <= 8.0

    def test_velocity_clipped(self):
        env = PendulumEnv()
        env.reset(seed=0)
        for _ in range(300):
            obs, _, done = env.step(np.array([1.0]))
            assert abs(obs[2]) <= 8.0 + 1e-12
            if done:
                env.reset(seed=1)


class TestPointMass:
    def test_goal_within_box(self):
        env = PointMassEnv()
        for seed in range(20):
            env.reset(seed=seed)
            assert np.all(np.abs(env.goal) <= 0.8)

    def test_standing_at_goal_is_near_zero_reward(self):
        env = PointMassEnv()
        env.reset(seed=0)
        env.p = env.goal.copy()
        env.v = np.zeros(2)
        _, r, _ = env.step(np.zeros(2))
        assert r > -0.1


class TestSynthDataset:
    def test_split_sizes(self):
        data = synth_generate(SynthConfig(2000, 32, 10), seed=0)
        assert len(data.x_train) == 1600 and len(data.x_eval) == 400
        assert data.x_train.shape[1] == 32

    def test_classes_balanced(self):
        data = synth_generate(SynthConfig(2000, 32, 10), seed=1)
        all_y = np.concatenate([data.y_train, data.y_eval])
        counts = np.bincount(all_y, minlength=10)
        assert counts.max() - counts.min() <= 1

    def test_deterministic(self):
        a = synth_generate(SynthConfig(), seed=7)
        b = synth_generate(SynthConfig(), seed=7)
        np.testing.assert_array_equal(a.x_train, b.x_train)
        np.testing.assert_array_equal(a.y_train, b.y_train)

    def test_linearly_separable_by_nearest_mean(self):
        data = synth_generate(SynthConfig(1000, 32, 10), seed=2)
        d = ((data.x_eval[:, None, :] - data.class_means[None]) ** 2).sum(axis=2)
        acc = (d.argmin(axis=1) == data.y_eval).mean()
        assert acc > 0.95
