"""Minimal on-policy agent: clipped surrogate objective with generalized
advantage estimation, supporting discrete and continuous action spaces.
The policy trunk carries the same configurable representation head as the
off-policy actor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from . import diagnostics as dg
from . import heads as hd
from . import networks as nets
from .autodiff import Rng, Tensor
from .envs import EnvSpec

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs_per_batch: int = 4
    minibatch_size: int = 256
    rollout_length: int = 128
    num_envs: int = 8
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 2.6e-3
    total_steps: int = 200_000
    eval_interval: int = 10_000
    eval_episodes: int = 8
    hidden: int = 128
    normalize_advantages: bool = True
    diag_states: int = 1024

    def __post_init__(self):
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")


def ppo_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
            gamma: float, lam: float, normalize: bool = True):
    """Standard GAE recursion; ``values`` has one extra row for the bootstrap.

    Returns (advantages, returns); advantages are normalized to mean 0,
    std 1 (eps 1e-8) when ``normalize`` is set.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    T = rewards.shape[0]
    if values.shape[0] != T + 1 or dones.shape[0] != T:
        raise ValueError("ppo_gae: rewards [T], values [T+1], dones [T] required")
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0] if rewards.ndim > 1 else np.float64(0.0))
    for t in range(T - 1, -1, -1):
        cont = 1.0 - dones[t].astype(np.float64)
        delta = rewards[t] + gamma * values[t + 1] * cont - values[t]
        last = delta + gamma * lam * cont * last
        adv[t] = last
    returns = adv + values[:-1]
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


class _ValueNet:
    def __init__(self, obs_dim, hidden, rng: Rng):
        self.l1 = nets.Linear(obs_dim, hidden, rng.split(0))
        self.l2 = nets.Linear(hidden, hidden, rng.split(1))
        self.out = nets.Linear(hidden, 1, rng.split(2))

    def forward(self, obs) -> Tensor:
        x = obs if isinstance(obs, Tensor) else Tensor(obs)
        return self.out(ad.relu(self.l2(ad.relu(self.l1(x)))))

    def params(self):
        return self.l1.params() + self.l2.params() + self.out.params()


class PpoAgent:
    def __init__(self, env_spec: EnvSpec, cfg: PpoConfig, head_kind: hd.HeadKind,
                 rng: Rng):
        self.cfg = cfg
        self.env_spec = env_spec
        self.discrete = env_spec.action_kind == "discrete"
        out_dim = env_spec.action_dim
        self.policy = nets._HeadedMlp(env_spec.obs_dim, out_dim, cfg.hidden,
                                      head_kind, rng.split(0))
        self.head_kind = head_kind
        self.log_std = None
        if not self.discrete:
            self.log_std = Tensor(np.full(out_dim, -0.5), requires_grad=True)
        self.value = _ValueNet(env_spec.obs_dim, cfg.hidden, rng.split(1))
        self._rng_gumbel = rng.split(2)
        self.params = self.policy.params() + self.value.params()
        if self.log_std is not None:
            self.params.append(self.log_std)
        self.opt = ad.AdamState.for_params(self.params, cfg.learning_rate)
        self.skipped_minibatches = 0

    # -- policy evaluation ---------------------------------------------------

    def _policy_out(self, obs, train):
        x = obs if isinstance(obs, Tensor) else Tensor(obs)
        penult, aux = self.policy.trunk_and_head(x, self._rng_gumbel, train)
        raw = self.policy.out(penult)
        if self.discrete:
            return raw, penult, aux
        return ad.tanh(raw), penult, aux

    def sample_actions(self, obs, rng: Rng):
        """Sample actions and return (actions, log-probs, values)."""
        out, _, _ = self._policy_out(obs, train=False)
        v = self.value.forward(obs).data.reshape(-1)
        if self.discrete:
            logp_all = ad.log_softmax(out).data
            probs = np.exp(logp_all)
            acts = rng.choice_from_probs(probs)
            logp = logp_all[np.arange(len(acts)), acts]
            return acts, logp, v
        std = np.exp(self.log_std.data)
        noise = rng.normal(size=out.data.shape)
        acts = out.data + noise * std
        logp = -0.5 * (((acts - out.data) / std) ** 2
                       + 2.0 * self.log_std.data + LOG_2PI).sum(axis=1)
        return np.clip(acts, -1.0, 1.0), logp, v

    def greedy_actions(self, obs):
        out, _, _ = self._policy_out(obs, train=False)
        if self.discrete:
            return out.data.argmax(axis=1)
        return out.data

    def _log_prob_entropy(self, obs, actions, train=True):
        out, penult, aux = self._policy_out(obs, train=train)
        if self.discrete:
            logp_all = ad.log_softmax(out)
            logp = ad.gather_rows(logp_all, actions.astype(np.int64))
            ent = ad.neg(ad.scale(ad.sum_all(ad.mul(ad.exp(logp_all), logp_all)),
                                  1.0 / out.shape[0]))
            return logp, ent, aux
        diff = ad.sub(Tensor(actions), out)
        inv_var = ad.exp(ad.scale(self.log_std, -2.0))
        quad = ad.mul(ad.square(diff), ad.add_bias(
            Tensor(np.zeros_like(actions)), inv_var))
        # sum over action dims per row: use matmul with ones vector
        ones = Tensor(np.ones((actions.shape[1], 1)))
        row_quad = ad.matmul(quad, ones)
        sum_log_std = ad.sum_all(self.log_std)
        k = actions.shape[1]
        logp_rows = ad.add(ad.scale(row_quad, -0.5),
                           ad.scale(sum_log_std, -1.0))  # scalar broadcast
        logp_rows = ad.add(logp_rows, Tensor(np.full((actions.shape[0], 1),
                                                     -0.5 * k * LOG_2PI)))
        ent = ad.add(ad.sum_all(self.log_std),
                     Tensor(np.asarray(0.5 * k * (1.0 + LOG_2PI))))
        return logp_rows, ent, aux

    # -- update ----------------------------------------------------------------

    def update(self, rollout) -> dict:
        cfg = self.cfg
        obs = rollout["obs"]
        acts = rollout["actions"]
        logp_old = rollout["logp"]
        adv = rollout["advantages"]
        rets = rollout["returns"]
        n = len(adv)
        order_rng = rollout["rng"]
        losses = {"policy": [], "value": [], "entropy": []}
        for _ in range(cfg.epochs_per_batch):
            perm = order_rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                mb = perm[start:start + cfg.minibatch_size]
                stats = self._minibatch_step(obs[mb], acts[mb], logp_old[mb],
                                             adv[mb], rets[mb])
                if stats is None:
                    self.skipped_minibatches += 1
                    continue
                for k, v in stats.items():
                    losses[k].append(v)
        return {k: float(np.mean(v)) if v else None for k, v in losses.items()}

    def _minibatch_step(self, obs, acts, logp_old, adv, rets):
        cfg = self.cfg
        for p in self.params:
            p.grad = None
        logp, ent, aux = self._log_prob_entropy(obs, acts)
        if self.discrete:
            ratio = ad.exp(ad.sub(logp, Tensor(logp_old)))
            adv_t = Tensor(adv)
        else:
            ratio = ad.exp(ad.sub(logp, Tensor(logp_old[:, None])))
            adv_t = Tensor(adv[:, None])
        if not np.isfinite(ratio.data).all():
            return None
        surr1 = ad.mul(ratio, adv_t)
        surr2 = ad.mul(ad.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_t)
        policy_obj = ad.mean_all(ad.minimum(surr1, surr2))
        v = self.value.forward(obs)
        v_loss = ad.mean_all(ad.square(ad.sub(v, Tensor(rets[:, None]))))
        loss = ad.add(ad.neg(policy_obj), ad.scale(v_loss, cfg.value_coef))
        loss = ad.sub(loss, ad.scale(ent, cfg.entropy_coef))
        if aux is not None:
            loss = ad.add(loss, ad.scale(aux, 1.0 / obs.shape[0]))
        ad.backward(loss)
        ad.adam_step(self.params, self.opt)
        return {"policy": -float(policy_obj.data), "value": float(v_loss.data),
                "entropy": float(ent.data)}


def collect_rollout(agent: PpoAgent, envs, obs, cfg: PpoConfig, rng: Rng):
    """Roll ``rollout_length`` vectorized steps; returns (rollout dict, obs)."""
    T, E = cfg.rollout_length, len(envs)
    obs_dim = agent.env_spec.obs_dim
    obs_buf = np.zeros((T, E, obs_dim))
    act_shape = (T, E) if agent.discrete else (T, E, agent.env_spec.action_dim)
    act_buf = np.zeros(act_shape)
    logp_buf = np.zeros((T, E))
    rew_buf = np.zeros((T, E))
    done_buf = np.zeros((T, E), dtype=bool)
    val_buf = np.zeros((T + 1, E))

    for t in range(T):
        obs_buf[t] = obs
        acts, logp, vals = agent.sample_actions(obs, rng)
        act_buf[t] = acts
        logp_buf[t] = logp
        val_buf[t] = vals
        for i, env in enumerate(envs):
            nxt, r, done = env.step(acts[i])
            rew_buf[t, i] = r
            done_buf[t, i] = done
            obs[i] = env.reset() if done else nxt
    val_buf[T] = agent.value.forward(obs).data.reshape(-1)

    adv, rets = ppo_gae(rew_buf, val_buf, done_buf, cfg.gamma, cfg.gae_lambda,
                        normalize=cfg.normalize_advantages)
    flat = lambda a: a.reshape(T * E, *a.shape[2:])
    rollout = {"obs": flat(obs_buf), "actions": flat(act_buf),
               "logp": logp_buf.reshape(-1), "advantages": adv.reshape(-1),
               "returns": rets.reshape(-1), "rng": rng}
    return rollout, obs


def evaluate_policy(agent: PpoAgent, env_factory, rng: Rng, episodes: int,
                    diag_states: int):
    returns, states, actions = [], [], []
    for _ in range(episodes):
        env = env_factory()
        obs = env.reset(seed=int(rng.integers(0, 2 ** 31)))
        total, done = 0.0, False
        while not done:
            act = agent.greedy_actions(obs[None, :])[0]
            if len(states) < diag_states:
                states.append(obs.copy())
                actions.append(np.atleast_1d(act).astype(np.float64))
            obs, r, done = env.step(act)
            total += r
        returns.append(total)
    return float(np.mean(returns)), np.array(states), np.array(actions)


def ppo_train(env_factory: Callable, cfg: PpoConfig, head_kind: hd.HeadKind,
              seed: int, logger, run_dir: Optional[str] = None) -> dict:
    rng = Rng(seed)
    proto = env_factory()
    spec = proto.spec
    agent = PpoAgent(spec, cfg, head_kind, rng.split(1))
    envs = [env_factory() for _ in range(cfg.num_envs)]
    obs = np.stack([env.reset(seed=int(rng.split(2, i).integers(0, 2 ** 31)))
                    for i, env in enumerate(envs)])
    rng_rollout = rng.split(3)
    rng_eval = rng.split(4)

    steps = 0
    next_eval = 0
    last_losses = {"policy": None, "value": None}
    rows = []

    def run_eval():
        eval_return, states, actions = evaluate_policy(
            agent, env_factory, rng_eval.split(steps), cfg.eval_episodes,
            cfg.diag_states)
        row = dg.MetricsRow(step=steps, eval_return=eval_return,
                            critic_loss=last_losses["value"],
                            actor_loss=last_losses["policy"])
        if len(states) >= 2:
            x = Tensor(states)
            penult, _ = agent.policy.trunk_and_head(x)
            fb = dg.FeatureBatch(penult.data, "actor")
            row.eff_rank_actor = dg.effective_rank(fb)
            row.stable_rank = dg.stable_rank(fb)
            row.dormant_frac = dg.dormant_fraction(fb)
            row.gini = dg.gini(fb)
            if isinstance(agent.head_kind, (hd.Sem, hd.GumbelST)):
                row.simplex_entropy = dg.simplex_entropy(
                    fb, agent.head_kind.cfg.L, agent.head_kind.cfg.V)
            if actions.shape[0] >= 2:
                row.action_std = dg.action_std(actions)
        row.weight_norm_actor = dg.weight_norm(agent.policy.named_parameters())["total"]
        logger.log(row)
        rows.append(row)

    while steps < cfg.total_steps:
        if steps >= next_eval:
            run_eval()
            next_eval += cfg.eval_interval
        rollout, obs = collect_rollout(agent, envs, obs, cfg, rng_rollout)
        stats = agent.update(rollout)
        last_losses["policy"] = stats["policy"]
        last_losses["value"] = stats["value"]
        steps += cfg.rollout_length * cfg.num_envs
    run_eval()

    if run_dir:
        import os
        nets.checkpoint_save(
            [("policy." + n, p.data) for n, p in agent.policy.named_parameters()],
            os.path.join(run_dir, "final.ckpt"))
    finals = [r.eval_return for r in rows if r.eval_return is not None]
    return {"final_return": finals[-1] if finals else None,
            "auc": float(np.mean(finals)) if finals else None,
            "rows": rows,
            "skipped_minibatches": agent.skipped_minibatches}
