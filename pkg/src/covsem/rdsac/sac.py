"""Soft actor-critic baseline with a tanh-squashed Gaussian policy and fixed temperature."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from covsem import neural
from covsem.environment import EnvConfig
from covsem.neural import BoundNet, NetSpec, OptState, ParamSet, Tensor
from covsem.rdsac.buffer import ReplayBuffer
from covsem.rdsac.critics import CriticPair, bellman_targets, critic_loss
from covsem.rdsac.trainer import TrainConfig, TrainResult, run_loop

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


@dataclass
class GaussianPolicy:
    net: ParamSet
    action_dim: int

    @classmethod
    def create(cls, state_dim: int, action_dim: int, rng: np.random.Generator,
               hidden: tuple[int, ...] = (64, 64)) -> "GaussianPolicy":
        spec = NetSpec((state_dim, *hidden, 2 * action_dim), "silu")
        return cls(neural.init_params(spec, rng), action_dim)

    def dist(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out = neural.forward(self.net, states)
        k = self.action_dim
        return out[:, :k], np.clip(out[:, k:], LOG_STD_MIN, LOG_STD_MAX)

    def sample(self, states: np.ndarray, rng: np.random.Generator,
               deterministic: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Squashed actions and pre-squash values; ``deterministic`` returns tanh(mean)."""
        mu, log_std = self.dist(np.atleast_2d(states))
        u = mu if deterministic else mu + np.exp(log_std) * rng.standard_normal(mu.shape)
        return np.tanh(u), u

    def log_prob_graph(self, net: BoundNet, states: np.ndarray,
                       rng: np.random.Generator) -> tuple[Tensor, Tensor]:
        """Reparameterized squashed sample and its log density (summed over action dims)."""
        out = net(states)
        k = self.action_dim
        mu = out[:, :k]
        log_std = out[:, k:].clip(LOG_STD_MIN, LOG_STD_MAX)
        z = rng.standard_normal((states.shape[0], k))
        u = mu + log_std.exp() * z
        a = u.tanh()
        log_n = -(log_std + _HALF_LOG_2PI) - 0.5 * z * z
        log_jac = (1.0 - a * a + 1e-6).log()
        return a, (log_n - log_jac).sum(axis=-1)


@dataclass
class SacAgent:
    policy: GaussianPolicy
    critics: CriticPair
    actor_opt: OptState
    critic_opts: tuple[OptState, OptState]

    def act(self, states: np.ndarray, rng: np.random.Generator, deterministic: bool = False) -> np.ndarray:
        return self.policy.sample(states, rng, deterministic)[0]


def sac_update(agent: SacAgent, buffer: ReplayBuffer, cfg: TrainConfig,
               rng: np.random.Generator) -> tuple[float, float]:
    batch = buffer.sample(cfg.batch_size, rng)
    critics, policy, alpha = agent.critics, agent.policy, cfg.sac_alpha
    next_v = None
    if np.any(batch.dones != 1.0):
        a_next, (logp,) = _sample_logp(policy, batch.next_states, rng)
        next_v = critics.min_target(batch.next_states, a_next) - alpha * logp
    y = bellman_targets(batch.rewards * cfg.reward_scale, batch.dones, cfg.gamma, next_v)
    c_loss, (g1, g2) = neural.gradient(
        lambda n1, n2: critic_loss((n1, n2), batch.states, batch.actions, y), critics.q1, critics.q2)
    neural.optimizer_step(critics.q1, g1, agent.critic_opts[0])
    neural.optimizer_step(critics.q2, g2, agent.critic_opts[1])

    qnets = (BoundNet(critics.q1, trainable=False), BoundNet(critics.q2, trainable=False))

    def loss(net):
        a, logp = policy.log_prob_graph(net, batch.states, rng)
        x = neural.concat([Tensor(batch.states), a])
        q = neural.minimum(qnets[0](x), qnets[1](x))[:, 0]
        return (logp * alpha - q).mean()

    a_loss, (ga,) = neural.gradient(loss, policy.net)
    neural.optimizer_step(policy.net, ga, agent.actor_opt)
    critics.soft_update(cfg.tau)
    return c_loss, a_loss


def _sample_logp(policy: GaussianPolicy, states: np.ndarray, rng: np.random.Generator):
    a, logp = policy.log_prob_graph(BoundNet(policy.net, trainable=False), states, rng)
    return a.data, (logp.data,)


def make_sac_agent(state_dim: int, action_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> SacAgent:
    policy = GaussianPolicy.create(state_dim, action_dim, rng, cfg.hidden)
    critics = CriticPair.create(state_dim, action_dim, rng, cfg.hidden)
    opt = dict(max_grad_norm=cfg.max_grad_norm)
    return SacAgent(policy, critics, OptState.for_params(policy.net, cfg.lr_actor, **opt),
                    (OptState.for_params(critics.q1, cfg.lr_critic, **opt),
                     OptState.for_params(critics.q2, cfg.lr_critic, **opt)))


def sac_baseline_train(env_cfg: EnvConfig = EnvConfig(), cfg: TrainConfig = TrainConfig(), seed: int = 0,
                       log: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Same loop, seed streams and evaluation protocol as :func:`covsem.rdsac.train`."""
    s_dim, a_dim = env_cfg.ranges.state_dim, env_cfg.ranges.k_count
    return run_loop(env_cfg, cfg, seed, lambda rng: make_sac_agent(s_dim, a_dim, cfg, rng), sac_update,
                    "sac", log)


def mean_policy_std(policy: GaussianPolicy, states: np.ndarray) -> float:
    """Average pre-squash standard deviation over ``states``."""
    return float(np.mean(np.exp(policy.dist(states)[1])))
