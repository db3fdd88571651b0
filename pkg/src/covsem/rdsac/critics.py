"""Twin Q-networks with target copies and the clipped double-Q Bellman loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from covsem import neural
from covsem.neural import BoundNet, NetSpec, ParamSet, Tensor


@dataclass
class CriticPair:
    q1: ParamSet
    q2: ParamSet
    target_q1: ParamSet
    target_q2: ParamSet

    def __post_init__(self):
        specs = {self.q1.spec, self.q2.spec, self.target_q1.spec, self.target_q2.spec}
        if len(specs) != 1:
            raise ValueError("all four critic nets must share one spec")

    @classmethod
    def create(cls, state_dim: int, action_dim: int, rng: np.random.Generator,
               hidden: tuple[int, ...] = (64, 64), activation: str = "silu") -> "CriticPair":
        spec = NetSpec((state_dim + action_dim, *hidden, 1), activation)
        q1 = neural.init_params(spec, rng)
        q2 = neural.init_params(spec, rng)
        return cls(q1, q2, q1.copy(), q2.copy())

    def min_target(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        x = np.concatenate([states, actions], axis=1)
        return np.minimum(neural.forward(self.target_q1, x), neural.forward(self.target_q2, x))[:, 0]

    def min_online(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        x = np.concatenate([states, actions], axis=1)
        return np.minimum(neural.forward(self.q1, x), neural.forward(self.q2, x))[:, 0]

    def soft_update(self, tau: float) -> None:
        neural.soft_update(self.target_q1, self.q1, tau)
        neural.soft_update(self.target_q2, self.q2, tau)


def bellman_targets(rewards: np.ndarray, dones: np.ndarray, gamma: float,
                    next_values: np.ndarray | None) -> np.ndarray:
    """y = r + gamma (1 - d) V(s'); ``next_values`` may be None when every d is 1."""
    y = np.asarray(rewards, dtype=float).copy()
    live = 1.0 - np.asarray(dones, dtype=float)
    if np.any(live != 0.0):
        if next_values is None:
            raise ValueError("next_values required for non-terminal transitions")
        y += gamma * live * next_values
    return y


def critic_loss(nets: tuple[BoundNet, BoundNet], states: np.ndarray, actions: np.ndarray,
                targets: np.ndarray) -> Tensor:
    """Sum over both critics of the mean squared Bellman error."""
    if len(states) == 0:
        raise ValueError("critic_loss needs a nonempty batch")
    x = np.concatenate([states, actions], axis=1)
    y = np.asarray(targets, dtype=float)[:, None]
    total = None
    for net in nets:
        err = net(x) - y
        term = (err * err).mean()
        total = term if total is None else total + term
    return total
