"""Noise schedule and the forward / reverse chains of the diffusion policy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from covsem import neural
from covsem.neural import NetSpec, ParamSet, Tensor


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step variances ``delta`` (index 0 is step t=1) and derived products.

    ``chi_bar[t]`` is indexed by step, with ``chi_bar[0] = 1``.
    """

    delta: np.ndarray
    chi: np.ndarray
    chi_bar: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.delta)

    def delta_at(self, t):
        return self.delta[np.asarray(t) - 1]

    def chi_at(self, t):
        return self.chi[np.asarray(t) - 1]


def build_schedule(steps: int = 5, delta_lo: float = 1e-4, delta_hi: float = 0.2) -> DiffusionSchedule:
    """Linear variances from ``delta_lo`` (t=1) to ``delta_hi`` (t=T)."""
    if steps < 1:
        raise ValueError("need at least one diffusion step")
    if not 0.0 < delta_lo <= delta_hi < 1.0:
        raise ValueError("need 0 < delta_lo <= delta_hi < 1")
    delta = np.linspace(delta_lo, delta_hi, steps) if steps > 1 else np.array([delta_lo])
    chi = 1.0 - delta
    chi_bar = np.concatenate([[1.0], np.cumprod(chi)])
    return DiffusionSchedule(delta=delta, chi=chi, chi_bar=chi_bar)


def forward_noise(action: np.ndarray, t, schedule: DiffusionSchedule, noise: np.ndarray) -> np.ndarray:
    """Sample of the forward process at step ``t`` (scalar or per-row array)."""
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > schedule.steps):
        raise ValueError(f"t must lie in [1, {schedule.steps}]")
    cb = schedule.chi_bar[t]
    if cb.ndim == 1:
        cb = cb[:, None]
    return np.sqrt(cb) * action + np.sqrt(1.0 - cb) * noise


def _mean_coefs(schedule: DiffusionSchedule, t: int) -> tuple[float, float]:
    """(1/sqrt(chi_t), delta_t / sqrt(1 - chi_bar_t)) for the reverse mean."""
    return 1.0 / np.sqrt(schedule.chi[t - 1]), schedule.delta[t - 1] / np.sqrt(1.0 - schedule.chi_bar[t])


EpsFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def reverse_chain(eps_fn: EpsFn, states: np.ndarray, schedule: DiffusionSchedule, action_dim: int,
                  rng: np.random.Generator, x_T: Optional[np.ndarray] = None,
                  deterministic: bool = False) -> np.ndarray:
    """Run the reverse chain from ``x_T`` (standard normal by default) down to step 0.

    No noise is injected at the last step.  ``deterministic`` starts at zero and
    follows the means only.  Returns the pre-squash sample.
    """
    n = states.shape[0]
    if x_T is not None:
        x = np.array(x_T, dtype=float)
    elif deterministic:
        x = np.zeros((n, action_dim))
    else:
        x = rng.standard_normal((n, action_dim))
    for t in range(schedule.steps, 0, -1):
        eps = eps_fn(x, states, t)
        if not np.all(np.isfinite(eps)):
            raise FloatingPointError(f"non-finite denoiser output at step {t}")
        a, b = _mean_coefs(schedule, t)
        x = a * (x - b * eps)
        if t > 1 and not deterministic:
            x = x + np.sqrt(schedule.delta[t - 1]) * rng.standard_normal(x.shape)
    return x


def squash(x):
    return x.tanh() if isinstance(x, Tensor) else np.tanh(x)


@dataclass
class PolicyBundle:
    """Noise-prediction network, its target copy and the schedule."""

    noise_net: ParamSet
    target_noise_net: ParamSet
    schedule: DiffusionSchedule
    state_dim: int
    action_dim: int
    time_dim: int = 8

    def __post_init__(self):
        if self.noise_net.spec != self.target_noise_net.spec:
            raise ValueError("online and target noise nets must share one spec")

    @classmethod
    def create(cls, state_dim: int, action_dim: int, rng: np.random.Generator,
               schedule: Optional[DiffusionSchedule] = None, hidden: tuple[int, ...] = (64, 64),
               time_dim: int = 8, activation: str = "silu") -> "PolicyBundle":
        spec = NetSpec((state_dim + action_dim + time_dim, *hidden, action_dim), activation)
        net = neural.init_params(spec, rng)
        return cls(net, net.copy(), schedule or build_schedule(), state_dim, action_dim, time_dim)

    def net_input(self, x, states, t):
        """Concatenate [state, noisy action, time features] for step ``t`` (int or per-row array)."""
        n = states.shape[0]
        emb = neural.time_embed(np.broadcast_to(np.asarray(t), (n,)), self.schedule.steps, self.time_dim)
        if isinstance(x, Tensor):
            return neural.concat([Tensor(states), x, Tensor(emb)])
        return np.concatenate([states, x, emb], axis=1)

    def eps_fn(self, params: ParamSet) -> EpsFn:
        return lambda x, s, t: neural.forward(params, self.net_input(x, s, t))

    def sample(self, states: np.ndarray, rng: np.random.Generator, target: bool = False,
               deterministic: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Squashed actions in [-1, 1] and their pre-squash values."""
        params = self.target_noise_net if target else self.noise_net
        pre = reverse_chain(self.eps_fn(params), np.atleast_2d(states), self.schedule,
                            self.action_dim, rng, deterministic=deterministic)
        return np.tanh(pre), pre

    def sample_graph(self, net, states: np.ndarray, rng: np.random.Generator) -> Tensor:
        """Differentiable reverse chain through a bound network; returns the pre-squash tensor.

        Injected noises are constants, so gradients follow the mean path.
        """
        n = states.shape[0]
        x = Tensor(rng.standard_normal((n, self.action_dim)))
        for t in range(self.schedule.steps, 0, -1):
            eps = net(self.net_input(x, states, t))
            a, b = _mean_coefs(self.schedule, t)
            x = (x - eps * b) * a
            if t > 1:
                x = x + np.sqrt(self.schedule.delta[t - 1]) * rng.standard_normal((n, self.action_dim))
        return x


def reverse_sample(policy: PolicyBundle, encoded_state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Raw action(s) in [-1, 1] from the online policy."""
    actions, _ = policy.sample(np.atleast_2d(encoded_state), rng)
    return actions[0] if np.ndim(encoded_state) == 1 else actions
