"""Off-policy actor-critic trainer: twin critics, delayed actor updates,
clipped double-Q targets, target-policy smoothing noise, and an optional
categorical (distributional) critic loss.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from . import diagnostics as dg
from . import distrl
from . import heads as hd
from . import networks as nets
from .autodiff import Rng, Tensor
from .envs import EnvSpec
from .replay import ReplayBuffer


class TrainingAborted(RuntimeError):
    pass


@dataclass
class Td3Config:
    gamma: float = 0.99
    batch_size: int = 256
    policy_delay: int = 2
    sigma_explore: float = 0.1
    sigma_target: float = 0.2
    target_noise_clip: float = 0.5
    use_cdq: bool = True
    use_c51: bool = True
    polyak: float = 0.995
    num_envs: int = 16
    total_steps: int = 100_000
    learning_starts: int = 2_000
    eval_interval: int = 5_000
    eval_episodes: int = 4
    buffer_capacity: int = 200_000
    n_atoms: int = 101
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden_actor: int = 128
    hidden_critic: int = 128
    placement: str = "actor"  # where the configured head goes: actor|critic|both
    diag_states: int = 1024

    def __post_init__(self):
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be > 0")
        if self.placement not in ("actor", "critic", "both"):
            raise ValueError(f"placement must be actor|critic|both, got {self.placement}")


def explore_action(actor: nets.ActorNet, obs: np.ndarray, sigma_explore: float,
                   rng: Rng) -> np.ndarray:
    """pi(s) plus clipped Gaussian exploration noise."""
    mean = actor.act(obs)
    if sigma_explore > 0:
        mean = mean + rng.normal(0.0, sigma_explore, mean.shape)
    return np.clip(mean, -1.0, 1.0)


class Td3Agent:
    def __init__(self, env_spec: EnvSpec, cfg: Td3Config, head_kind: hd.HeadKind,
                 rng: Rng):
        self.cfg = cfg
        self.env_spec = env_spec
        obs_dim, act_dim = env_spec.obs_dim, env_spec.action_dim
        actor_head = head_kind if cfg.placement in ("actor", "both") else hd.Baseline()
        critic_head = head_kind if cfg.placement in ("critic", "both") else hd.Baseline()
        n_out = cfg.n_atoms if cfg.use_c51 else 1
        self.support = distrl.Support.for_reward_bounds(
            env_spec.reward_bounds[0], env_spec.reward_bounds[1], cfg.gamma,
            cfg.n_atoms) if cfg.use_c51 else None

        self.actor = nets.ActorNet(obs_dim, act_dim, actor_head, rng.split(0),
                                   hidden=cfg.hidden_actor)
        self.critic1 = nets.CriticNet(obs_dim, act_dim, critic_head, rng.split(1),
                                      hidden=cfg.hidden_critic, n_out=n_out)
        self.critic2 = nets.CriticNet(obs_dim, act_dim, critic_head, rng.split(2),
                                      hidden=cfg.hidden_critic, n_out=n_out)
        self.actor_t = nets.ActorNet(obs_dim, act_dim, actor_head, rng.split(0),
                                     hidden=cfg.hidden_actor)
        self.critic1_t = nets.CriticNet(obs_dim, act_dim, critic_head, rng.split(1),
                                        hidden=cfg.hidden_critic, n_out=n_out)
        self.critic2_t = nets.CriticNet(obs_dim, act_dim, critic_head, rng.split(2),
                                        hidden=cfg.hidden_critic, n_out=n_out)
        self.pairs = [
            nets.TargetPair(self.actor.params(), self.actor_t.params(), cfg.polyak),
            nets.TargetPair(self.critic1.params(), self.critic1_t.params(), cfg.polyak),
            nets.TargetPair(self.critic2.params(), self.critic2_t.params(), cfg.polyak),
        ]
        for pair in self.pairs:
            nets.hard_update(pair)

        self.actor_opt = ad.AdamState.for_params(self.actor.params(), cfg.actor_lr)
        self.critic1_opt = ad.AdamState.for_params(self.critic1.params(), cfg.critic_lr)
        self.critic2_opt = ad.AdamState.for_params(self.critic2.params(), cfg.critic_lr)
        self._rng_target_noise = rng.split(10)
        self._rng_gumbel = rng.split(11)
        self.critic_updates = 0

    # -- helpers -----------------------------------------------------------

    def _zero_grads(self):
        for net in (self.actor, self.critic1, self.critic2):
            for p in net.params():
                p.grad = None

    def _critic_probs(self, critic, obs, action, train=False):
        out = critic.forward(obs, action, rng=self._rng_gumbel, train=train)
        probs = _softmax(out.output.data)
        return out, probs

    def cdq_target(self, batch):
        """Bootstrapped target from target nets with smoothing noise.

        C51 mode returns projected probability rows [B x N]; scalar mode
        returns y = r + gamma*(1-done)*min_i Q_i.
        """
        cfg = self.cfg
        s_next = batch["s_next"]
        a_next = self.actor_t.act(s_next)
        if cfg.sigma_target > 0:
            eps = self._rng_target_noise.normal(0.0, cfg.sigma_target, a_next.shape)
            eps = np.clip(eps, -cfg.target_noise_clip, cfg.target_noise_clip)
            a_next = np.clip(a_next + eps, -1.0, 1.0)

        if cfg.use_c51:
            _, p1 = self._critic_probs(self.critic1_t, s_next, a_next)
            if cfg.use_cdq:
                _, p2 = self._critic_probs(self.critic2_t, s_next, a_next)
                q1 = distrl.expected_value(p1, self.support)
                q2 = distrl.expected_value(p2, self.support)
                probs = np.where((q1 <= q2)[:, None], p1, p2)
            else:
                probs = p1
            return distrl.project(probs, batch["r"], batch["done"], cfg.gamma,
                                  self.support)
        q1 = self.critic1_t.forward(s_next, a_next).output.data.reshape(-1)
        if cfg.use_cdq:
            q2 = self.critic2_t.forward(s_next, a_next).output.data.reshape(-1)
            q = np.minimum(q1, q2)
        else:
            q = q1
        return batch["r"] + cfg.gamma * (~batch["done"]) * q

    # -- updates -----------------------------------------------------------

    def critic_update(self, batch):
        cfg = self.cfg
        target = self.cdq_target(batch)
        self._zero_grads()
        losses = []
        expected = []
        for critic in (self.critic1, self.critic2):
            out = critic.forward(batch["s"], batch["a"], rng=self._rng_gumbel, train=True)
            if cfg.use_c51:
                loss = distrl.cross_entropy(out.output, target)
                expected.append(distrl.expected_value(_softmax(out.output.data),
                                                      self.support))
            else:
                diff = ad.sub(out.output, Tensor(target[:, None]))
                loss = ad.mean_all(ad.square(diff))
                expected.append(out.output.data.reshape(-1))
            if out.aux_loss is not None:
                loss = ad.add(loss, ad.scale(out.aux_loss, 1.0 / len(batch["r"])))
            losses.append(loss)

        total = ad.add(losses[0], losses[1])
        if not np.isfinite(total.data).all():
            raise TrainingAborted("non-finite critic loss")
        ad.backward(total)
        ad.adam_step(self.critic1.params(), self.critic1_opt)
        ad.adam_step(self.critic2.params(), self.critic2_opt)
        self.critic_updates += 1

        if cfg.use_c51:
            target_q = distrl.expected_value(target, self.support)
        else:
            target_q = target
        td_error = float(np.abs(expected[0] - target_q).mean())
        disagreement = float(np.abs(expected[0] - expected[1]).mean())
        return float(total.data) / 2.0, td_error, disagreement

    def actor_update(self, batch):
        """Deterministic policy gradient through critic 1; polyak afterwards."""
        self._zero_grads()
        out = self.actor.forward(batch["s"], rng=self._rng_gumbel, train=True)
        q_out = self.critic1.forward(batch["s"], out.output, train=False)
        if self.cfg.use_c51:
            probs = ad.grouped_softmax(q_out.output, 1, self.cfg.n_atoms, 1.0)
            q = distrl.expected_value_t(probs, self.support)
        else:
            q = q_out.output
        loss = ad.neg(ad.mean_all(q))
        if out.aux_loss is not None:
            loss = ad.add(loss, ad.scale(out.aux_loss, 1.0 / len(batch["r"])))
        if not np.isfinite(loss.data).all():
            raise TrainingAborted("non-finite actor loss")
        ad.backward(loss)
        ad.adam_step(self.actor.params(), self.actor_opt)
        # discard critic grads produced by the pass-through
        for p in self.critic1.params():
            p.grad = None
        for pair in self.pairs:
            nets.polyak_update(pair)
        return float(loss.data)

    def named_parameters(self):
        items = []
        for prefix, net in (("actor.", self.actor), ("critic1.", self.critic1),
                            ("critic2.", self.critic2)):
            items += [(prefix + n, p) for n, p in net.named_parameters()]
        return items


def _softmax(logits):
    x = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def evaluate_policy(agent: Td3Agent, env_factory: Callable, rng: Rng,
                    episodes: int, diag_states: int):
    """Deterministic-policy rollouts; returns (mean return, states, actions)."""
    returns = []
    states, actions = [], []
    for ep in range(episodes):
        env = env_factory()
        obs = env.reset(seed=int(rng.integers(0, 2 ** 31)))
        total, done = 0.0, False
        while not done:
            act = agent.actor.act(obs[None, :])[0]
            if len(states) < diag_states:
                states.append(obs.copy())
                actions.append(act.copy())
            obs, r, done = env.step(act)
            total += r
        returns.append(total)
    return float(np.mean(returns)), np.array(states), np.array(actions)


def _diagnostics_row(agent: Td3Agent, step, eval_return, critic_loss, actor_loss,
                     td_error, disagreement, states, actions) -> dg.MetricsRow:
    row = dg.MetricsRow(step=step, eval_return=eval_return, critic_loss=critic_loss,
                        actor_loss=actor_loss, td_error=td_error,
                        critic_disagreement=disagreement)
    if len(states) >= 2:
        a_out = agent.actor.forward(states)
        fb_actor = dg.FeatureBatch(a_out.penult.data, "actor")
        c1 = agent.critic1.forward(states, actions)
        c2 = agent.critic2.forward(states, actions)
        fb_critic = dg.FeatureBatch(c1.penult.data, "critic")
        row.eff_rank_actor = dg.effective_rank(fb_actor)
        row.eff_rank_critic = dg.effective_rank(fb_critic)
        row.stable_rank = dg.stable_rank(fb_actor)
        row.dormant_frac = dg.dormant_fraction(fb_actor)
        row.gini = dg.gini(fb_actor)
        row.action_std = dg.action_std(actions)
        head = agent.actor.head_kind
        if isinstance(head, (hd.Sem, hd.GumbelST)):
            row.simplex_entropy = dg.simplex_entropy(fb_actor, head.cfg.L, head.cfg.V)
        if agent.cfg.use_c51:
            p1 = _softmax(c1.output.data)
            p2 = _softmax(c2.output.data)
            row.cramer_discrepancy = float(
                distrl.cramer_distance(p1, p2, agent.support).mean())
    row.weight_norm_actor = dg.weight_norm(agent.actor.named_parameters())["total"]
    row.weight_norm_critic = dg.weight_norm(agent.critic1.named_parameters())["total"]
    return row


def td3_train(env_factory: Callable, cfg: Td3Config, head_kind: hd.HeadKind,
              seed: int, logger, run_dir: Optional[str] = None) -> dict:
    """Full training loop; emits a MetricsRow to ``logger`` every eval_interval
    env steps and returns summary artifacts."""
    rng = Rng(seed)
    proto = env_factory()
    spec = proto.spec
    agent = Td3Agent(spec, cfg, head_kind, rng.split(1))
    buffer = ReplayBuffer(cfg.buffer_capacity, spec.obs_dim, spec.action_dim,
                          rng.split(2))
    envs = [env_factory() for _ in range(cfg.num_envs)]
    obs = np.stack([env.reset(seed=int(rng.split(3, i).integers(0, 2 ** 31)))
                    for i, env in enumerate(envs)])
    rng_explore = rng.split(4)
    rng_eval = rng.split(5)
    rng_warmup = rng.split(6)

    steps = 0
    next_eval = 0
    last = {"critic_loss": None, "actor_loss": None, "td_error": None,
            "disagreement": None}
    rows = []

    def run_eval():
        eval_return, states, actions = evaluate_policy(
            agent, env_factory, rng_eval.split(steps), cfg.eval_episodes,
            cfg.diag_states)
        row = _diagnostics_row(agent, steps, eval_return, last["critic_loss"],
                               last["actor_loss"], last["td_error"],
                               last["disagreement"], states, actions)
        logger.log(row)
        rows.append(row)

    try:
        while steps < cfg.total_steps:
            if steps >= next_eval:
                run_eval()
                next_eval += cfg.eval_interval

            if steps < cfg.learning_starts:
                acts = rng_warmup.uniform(-1.0, 1.0, (cfg.num_envs, spec.action_dim))
            else:
                acts = explore_action(agent.actor, obs, cfg.sigma_explore, rng_explore)
            new_obs = np.empty_like(obs)
            for i, env in enumerate(envs):
                nxt, r, done = env.step(acts[i])
                buffer.push(obs[i], acts[i], r, nxt, done)
                if done:
                    nxt = env.reset()
                new_obs[i] = nxt
            obs = new_obs
            steps += cfg.num_envs

            if steps >= cfg.learning_starts:
                batch = buffer.sample(cfg.batch_size)
                c_loss, td, dis = agent.critic_update(batch)
                last.update(critic_loss=c_loss, td_error=td, disagreement=dis)
                if agent.critic_updates % cfg.policy_delay == 0:
                    last["actor_loss"] = agent.actor_update(batch)

        run_eval()
    except TrainingAborted as exc:
        if run_dir:
            _dump_abort(run_dir, agent, str(exc), steps)
        raise

    if run_dir:
        nets.checkpoint_save([(n, p.data) for n, p in agent.named_parameters()],
                             os.path.join(run_dir, "final.ckpt"))
    finals = [r.eval_return for r in rows if r.eval_return is not None]
    return {"final_return": finals[-1] if finals else None,
            "auc": float(np.mean(finals)) if finals else None,
            "rows": rows}


def _dump_abort(run_dir, agent, reason, steps):
    os.makedirs(run_dir, exist_ok=True)
    nets.checkpoint_save([(n, p.data) for n, p in agent.named_parameters()],
                         os.path.join(run_dir, "abort.ckpt"))
    with open(os.path.join(run_dir, "abort.json"), "w") as fh:
        json.dump({"reason": reason, "steps": steps}, fh)
