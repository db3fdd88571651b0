"""Off-policy training loop for the diffusion-policy contract designer."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from covsem import neural
from covsem.environment import EnvConfig, encode_state, sample_state
from covsem.neural import BoundNet, OptState, Tensor
from covsem.rdsac.buffer import ReplayBuffer
from covsem.rdsac.critics import CriticPair, bellman_targets, critic_loss
from covsem.rdsac.diffusion import PolicyBundle, build_schedule, forward_noise
from covsem.rdsac.entropy import entropy_tensor

CURVE_COLUMNS = ("episode", "mean_reward", "critic_loss", "actor_loss", "feasibility_rate")
CURVE_SCHEMA_VERSION = 1


class TrainingDiverged(FloatingPointError):
    """A loss or gradient became non-finite; the message names the episode and update."""

ActFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class TrainConfig:
    """Hyperparameters.  Learning rates default to very small values; raise them for short runs."""

    episodes: int = 2000
    steps_per_episode: int = 16
    updates_per_episode: int = 1
    batch_size: int = 256
    buffer_capacity: int = 100_000
    warmup: int = 256
    gamma: float = 0.95
    tau: float = 0.005
    rho: float = 0.9
    beta_entropy: float = 0.05
    lr_actor: float = 2e-7
    lr_critic: float = 2e-6
    max_grad_norm: Optional[float] = None
    reward_scale: float = 1.0
    q_normalize: bool = False
    diffusion_steps: int = 5
    delta_lo: float = 1e-4
    delta_hi: float = 0.2
    hidden: tuple[int, ...] = (64, 64)
    time_dim: int = 8
    entropy_states: int = 16
    entropy_particles: int = 8
    eval_every: int = 50
    eval_states: int = 64
    eval_deterministic: bool = False
    tail: int = 5
    # SAC baseline only
    sac_alpha: float = 0.05

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        for name in ("steps_per_episode", "batch_size", "buffer_capacity",
                     "diffusion_steps", "eval_every", "eval_states", "tail"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.tau <= 1.0:
            raise ValueError("gamma and tau must lie in [0, 1]")
        if self.entropy_particles < 2 and self.beta_entropy != 0.0:
            raise ValueError("entropy term needs >= 2 particles")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Agent:
    policy: PolicyBundle
    critics: CriticPair
    actor_opt: OptState
    critic_opts: tuple[OptState, OptState]

    def act(self, states: np.ndarray, rng: np.random.Generator, deterministic: bool = False) -> np.ndarray:
        return self.policy.sample(states, rng, deterministic=deterministic)[0]


@dataclass
class TrainResult:
    agent: Agent
    curve: list[dict]
    eval_history: list[tuple[int, float, float]]
    config: TrainConfig
    seconds: float
    algo: str = "rdsac"
    extras: dict = field(default_factory=dict)

    def tail_mean(self, n: Optional[int] = None) -> float:
        """Mean of the last ``n`` evaluation means (``config.tail`` by default)."""
        n = n or self.config.tail
        if not self.eval_history:
            return float("nan")
        return float(np.mean([m for _, m, _ in self.eval_history[-n:]]))


def seed_streams(seed: int, n: int = 5) -> list[np.random.Generator]:
    """Independent generators for init, environment, replay, chain noise, evaluation."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def make_agent(state_dim: int, action_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> Agent:
    schedule = build_schedule(cfg.diffusion_steps, cfg.delta_lo, cfg.delta_hi)
    policy = PolicyBundle.create(state_dim, action_dim, rng, schedule, cfg.hidden, cfg.time_dim)
    critics = CriticPair.create(state_dim, action_dim, rng, cfg.hidden)
    opt = dict(max_grad_norm=cfg.max_grad_norm)
    return Agent(policy, critics, OptState.for_params(policy.noise_net, cfg.lr_actor, **opt),
                 (OptState.for_params(critics.q1, cfg.lr_critic, **opt),
                  OptState.for_params(critics.q2, cfg.lr_critic, **opt)))


def diffusion_loss(net: BoundNet, policy: PolicyBundle, states: np.ndarray, actions: np.ndarray,
                   rng: np.random.Generator) -> Tensor:
    """Noise-prediction loss on replayed (pre-squash) actions at uniform random steps."""
    n = states.shape[0]
    t = rng.integers(1, policy.schedule.steps + 1, size=n)
    eps = rng.standard_normal(actions.shape)
    x_t = forward_noise(actions, t, policy.schedule, eps)
    err = net(policy.net_input(x_t, states, t)) - eps
    return (err * err).sum(axis=-1).mean()


def actor_loss(net: BoundNet, agent: Agent, states: np.ndarray, pre_actions: np.ndarray,
               cfg: TrainConfig, rng: np.random.Generator) -> tuple[Tensor, dict]:
    """rho * (-min Q - beta * entropy) + (1 - rho) * diffusion loss."""
    if len(states) == 0:
        raise ValueError("actor_loss needs a nonempty batch")
    policy, critics = agent.policy, agent.critics
    qnets = (BoundNet(critics.q1, trainable=False), BoundNet(critics.q2, trainable=False))
    parts = {}
    total = None
    if cfg.rho > 0.0:
        a = policy.sample_graph(net, states, rng).tanh()
        x = neural.concat([Tensor(states), a])
        q = neural.minimum(qnets[0](x), qnets[1](x))
        l_q = -q.mean()
        if cfg.q_normalize:
            l_q = l_q / (float(np.mean(np.abs(q.data))) + 1e-8)
        parts["q"] = l_q.item()
        policy_term = l_q
        if cfg.beta_entropy != 0.0:
            s = states[: cfg.entropy_states]
            rep = np.repeat(s, cfg.entropy_particles, axis=0)
            a_e = policy.sample_graph(net, rep, rng).tanh()
            h = entropy_tensor(a_e.reshape(s.shape[0], cfg.entropy_particles, policy.action_dim))
            parts["entropy"] = h.item()
            policy_term = policy_term - h * cfg.beta_entropy
        total = policy_term * cfg.rho
    if cfg.rho < 1.0:
        l_d = diffusion_loss(net, policy, states, pre_actions, rng)
        parts["diffusion"] = l_d.item()
        total = l_d * (1.0 - cfg.rho) if total is None else total + l_d * (1.0 - cfg.rho)
    return total, parts


def update(agent: Agent, buffer: ReplayBuffer, cfg: TrainConfig, rng: np.random.Generator) -> tuple[float, float]:
    """One critic step, one actor step and the soft target updates; returns both losses."""
    batch = buffer.sample(cfg.batch_size, rng)
    critics = agent.critics
    next_v = None
    if np.any(batch.dones != 1.0):
        a_next, _ = agent.policy.sample(batch.next_states, rng, target=True)
        next_v = critics.min_target(batch.next_states, a_next)
    y = bellman_targets(batch.rewards * cfg.reward_scale, batch.dones, cfg.gamma, next_v)
    c_loss, (g1, g2) = neural.gradient(
        lambda n1, n2: critic_loss((n1, n2), batch.states, batch.actions, y), critics.q1, critics.q2)
    neural.optimizer_step(critics.q1, g1, agent.critic_opts[0])
    neural.optimizer_step(critics.q2, g2, agent.critic_opts[1])

    a_loss, (ga,) = neural.gradient(
        lambda net: actor_loss(net, agent, batch.states, batch.pre_actions, cfg, rng)[0],
        agent.policy.noise_net)
    neural.optimizer_step(agent.policy.noise_net, ga, agent.actor_opt)

    critics.soft_update(cfg.tau)
    neural.soft_update(agent.policy.target_noise_net, agent.policy.noise_net, cfg.tau)
    return c_loss, a_loss


def eval_states(env_cfg: EnvConfig, n: int, seed: Union[int, np.random.Generator]):
    """Fixed evaluation markets and their encodings."""
    rng = np.random.default_rng(seed)
    states = [sample_state(env_cfg.ranges, rng) for _ in range(n)]
    enc = [encode_state(s, env_cfg.ranges) for s in states]
    return states, np.stack(enc) if enc else np.empty((0, env_cfg.ranges.state_dim))


def evaluate(act: ActFn, env_cfg: EnvConfig, n_states: int = 64,
             seed: Union[int, np.random.Generator] = 0, states=None) -> tuple[float, float]:
    """Mean and std of the gated reward of ``act`` over evaluation markets.

    ``act`` maps encoded states (n, S) to raw actions (n, K).  Pass ``states``
    as returned by :func:`eval_states` to reuse a fixed set.
    """
    markets, enc = states if states is not None else eval_states(env_cfg, n_states, seed)
    raw = np.atleast_2d(act(enc))
    rewards = np.array([env_cfg.reward(s, r)[0] for s, r in zip(markets, raw)])
    return float(rewards.mean()), float(rewards.std())


def rollout(env_cfg: EnvConfig, sample_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
            n: int, env_rng: np.random.Generator, buffer: ReplayBuffer):
    """Collect ``n`` single-step transitions into ``buffer``; returns (rewards, feasible flags).

    ``sample_fn`` maps encoded states to (raw actions, pre-squash actions).
    """
    ranges = env_cfg.ranges
    markets = [sample_state(ranges, env_rng) for _ in range(n + 1)]
    enc = np.stack([encode_state(s, ranges) for s in markets])
    actions, pre = sample_fn(enc[:-1])
    rewards = np.empty(n)
    feasible = np.empty(n, dtype=bool)
    for i in range(n):
        r, menu = env_cfg.reward(markets[i], actions[i])
        rewards[i] = r
        feasible[i] = menu is not None
        buffer.add(enc[i], actions[i], pre[i], r, enc[i + 1], 1.0)
    return rewards, feasible


def run_loop(env_cfg: EnvConfig, cfg: TrainConfig, seed: int, build: Callable, update_fn: Callable,
             algo: str, log: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Shared episode loop.

    ``build(init_rng)`` returns an agent exposing ``policy.sample(states, rng)``
    and ``act(states, rng, deterministic)``; ``update_fn(agent, buffer, cfg, rng)``
    performs one gradient update and returns (critic loss, actor loss).
    """
    t0 = time.perf_counter()
    init_rng, env_rng, replay_rng, noise_rng, eval_rng = seed_streams(seed)
    s_dim, a_dim = env_cfg.ranges.state_dim, env_cfg.ranges.k_count
    agent = build(init_rng)
    buffer = ReplayBuffer(cfg.buffer_capacity, s_dim, a_dim)
    fixed_eval = eval_states(env_cfg, cfg.eval_states, eval_rng)
    eval_noise_seed = int(eval_rng.integers(2**63))

    curve, history = [], []
    for ep in range(1, cfg.episodes + 1):
        rewards, feasible = rollout(env_cfg, lambda enc: agent.policy.sample(enc, noise_rng),
                                    cfg.steps_per_episode, env_rng, buffer)
        c_loss = a_loss = float("nan")
        if len(buffer) >= min(cfg.warmup, cfg.buffer_capacity):
            for u in range(cfg.updates_per_episode):
                try:
                    c_loss, a_loss = update_fn(agent, buffer, cfg, replay_rng)
                except FloatingPointError as exc:
                    raise TrainingDiverged(
                        f"{algo}: episode {ep}, update {u}: {exc} (last critic loss {c_loss}, "
                        f"last actor loss {a_loss}, buffer size {len(buffer)})") from exc
        row = {"episode": ep, "mean_reward": float(rewards.mean()), "critic_loss": c_loss,
               "actor_loss": a_loss, "feasibility_rate": float(feasible.mean())}
        curve.append(row)
        if ep % cfg.eval_every == 0 or ep == cfg.episodes:
            rng = np.random.default_rng(eval_noise_seed)
            m, s = evaluate(lambda enc: agent.act(enc, rng, cfg.eval_deterministic), env_cfg,
                            states=fixed_eval)
            history.append((ep, m, s))
            if log is not None:
                log({**row, "eval_mean": m, "eval_std": s})
    return TrainResult(agent, curve, history, cfg, time.perf_counter() - t0, algo=algo)


def train(env_cfg: EnvConfig = EnvConfig(), cfg: TrainConfig = TrainConfig(), seed: int = 0,
          log: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Train the diffusion policy.  Identical ``seed`` and configs give identical results."""
    s_dim, a_dim = env_cfg.ranges.state_dim, env_cfg.ranges.k_count
    return run_loop(env_cfg, cfg, seed, lambda rng: make_agent(s_dim, a_dim, cfg, rng), update,
                    "rdsac", log)


def write_curve(path: Union[str, Path], curve: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
        w.writeheader()
        for row in curve:
            w.writerow({k: row[k] for k in CURVE_COLUMNS})


def read_curve(path: Union[str, Path]) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"episode": int(r["episode"]), **{k: float(r[k]) for k in CURVE_COLUMNS[1:]}}
                for r in csv.DictReader(fh)]


def save_agent(path: Union[str, Path], agent, cfg: TrainConfig, meta: Optional[dict] = None) -> None:
    """Checkpoint an RDSAC :class:`Agent` or a SAC agent (weights, optimizer moments, config)."""
    c = agent.critics
    nets = {"q1": c.q1, "q2": c.q2, "target_q1": c.target_q1, "target_q2": c.target_q2}
    if isinstance(agent, Agent):
        p = agent.policy
        nets.update(noise=p.noise_net, target_noise=p.target_noise_net)
        info = {"algo": "rdsac", "state_dim": p.state_dim, "action_dim": p.action_dim}
    else:
        nets.update(gaussian=agent.policy.net)
        info = {"algo": "sac", "state_dim": agent.policy.net.spec.layer_sizes[0],
                "action_dim": agent.policy.action_dim}
    opts = {"actor": agent.actor_opt, "q1": agent.critic_opts[0], "q2": agent.critic_opts[1]}
    neural.save_checkpoint(path, nets, opts, {**info, "train": cfg.to_dict(), **(meta or {})})


def load_agent(path: Union[str, Path]):
    """Inverse of :func:`save_agent`; returns (agent, train config, meta)."""
    from covsem.rdsac.sac import GaussianPolicy, SacAgent

    nets, opts, meta = neural.load_checkpoint(path)
    algo = meta.get("algo")
    cfg = TrainConfig.from_dict(meta["train"])
    critics = CriticPair(nets["q1"], nets["q2"], nets["target_q1"], nets["target_q2"])
    critic_opts = (opts["q1"], opts["q2"])
    if algo == "rdsac":
        schedule = build_schedule(cfg.diffusion_steps, cfg.delta_lo, cfg.delta_hi)
        policy = PolicyBundle(nets["noise"], nets["target_noise"], schedule, meta["state_dim"],
                              meta["action_dim"], cfg.time_dim)
        return Agent(policy, critics, opts["actor"], critic_opts), cfg, meta
    if algo == "sac":
        policy = GaussianPolicy(nets["gaussian"], meta["action_dim"])
        return SacAgent(policy, critics, opts["actor"], critic_opts), cfg, meta
    raise ValueError(f"{path}: unknown algorithm {algo!r} in checkpoint")
