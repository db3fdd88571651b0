"""Contextual MDP around the contract design problem.

A state describes one market (UAV count, type count, reference point, unit
cost, SINR, type proportions and type values).  An action is a vector of K
raw values in [-1, 1] mapped linearly to densities in [0, q_max].  Episodes
last one step: the next state is a fresh, independent draw.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from covsem import contract
from covsem.channel import db_to_linear
from covsem.contract import ContractMenu, EconParams, Mode, PtParams, UavPopulation

DEFAULT_SNR_DB = (-3.0, 0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0)


@dataclass(frozen=True)
class EnvRanges:
    """Sampling ranges plus the fixed normalization box used by the encoder.

    ``norm_*`` pairs are (lo, hi) bounds mapped to [0, 1]; type-value and cost
    bounds come from the sampling ranges themselves.
    """

    theta_ranges: tuple[tuple[float, float], ...] = ((10.0, 50.0), (100.0, 200.0))
    cost_range: tuple[float, float] = (80.0, 100.0)
    snr_set: tuple[float, ...] = DEFAULT_SNR_DB
    u_ref: float = 160.0
    m_count: int = 5
    k_count: int = 2
    q_max: float = 50.0
    norm_m: tuple[float, float] = (0.0, 10.0)
    norm_k: tuple[float, float] = (0.0, 10.0)
    norm_u_ref: tuple[float, float] = (0.0, 500.0)
    norm_sinr: tuple[float, float] = (0.0, 200.0)

    def __post_init__(self):
        object.__setattr__(self, "theta_ranges", tuple(tuple(map(float, r)) for r in self.theta_ranges))
        object.__setattr__(self, "cost_range", tuple(map(float, self.cost_range)))
        object.__setattr__(self, "snr_set", tuple(map(float, self.snr_set)))
        for name in ("norm_m", "norm_k", "norm_u_ref", "norm_sinr"):
            object.__setattr__(self, name, tuple(map(float, getattr(self, name))))
        if len(self.theta_ranges) != self.k_count:
            raise ValueError("need one theta range per type")
        for lo, hi in (*self.theta_ranges, self.cost_range, self.norm_m, self.norm_k,
                       self.norm_u_ref, self.norm_sinr):
            if not lo < hi:
                raise ValueError(f"empty interval [{lo}, {hi})")
        if not self.snr_set:
            raise ValueError("snr_set must be nonempty")
        if self.m_count < 1 or self.k_count < 1 or self.q_max <= 0:
            raise ValueError("m_count, k_count and q_max must be positive")

    @property
    def state_dim(self) -> int:
        return 2 * self.k_count + 5


@dataclass(frozen=True)
class MdpState:
    m: int
    k: int
    u_ref: float
    unit_cost: float
    sinr: float
    proportions: tuple[float, ...]
    type_values: tuple[float, ...]

    def population(self) -> UavPopulation:
        return UavPopulation(self.type_values, self.proportions, self.m)

    def econ(self, base: EconParams) -> EconParams:
        return replace(base, unit_cost=self.unit_cost)

    def pt(self, base: PtParams) -> PtParams:
        return replace(base, u_ref=self.u_ref)


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: float = 1.0
    pre_action: Optional[np.ndarray] = None

    def to_json(self) -> str:
        rec = {"state": self.state.tolist(), "action": self.action.tolist(),
               "reward": float(self.reward), "next_state": self.next_state.tolist(),
               "done": float(self.done)}
        if self.pre_action is not None:
            rec["pre_action"] = self.pre_action.tolist()
        return json.dumps(rec)


def log_transitions(path: Union[str, Path], transitions: Iterable[Transition]) -> None:
    """Append transitions as JSON lines."""
    with open(path, "a") as fh:
        for tr in transitions:
            fh.write(tr.to_json() + "\n")


# -- states -------------------------------------------------------------------

def sample_state(ranges: EnvRanges, rng: Union[np.random.Generator, int]) -> MdpState:
    """Draw a market.  Proportions are flat-Dirichlet via normalized exponentials."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    theta = np.sort([rng.uniform(lo, hi) for lo, hi in ranges.theta_ranges])
    cost = rng.uniform(*ranges.cost_range)
    snr_db = ranges.snr_set[rng.integers(len(ranges.snr_set))]
    e = rng.exponential(1.0, size=ranges.k_count)
    lam = e / e.sum()
    return MdpState(m=ranges.m_count, k=ranges.k_count, u_ref=ranges.u_ref, unit_cost=float(cost),
                    sinr=float(db_to_linear(snr_db)), proportions=tuple(map(float, lam)),
                    type_values=tuple(map(float, theta)))


def _bounds(ranges: EnvRanges) -> tuple[np.ndarray, np.ndarray]:
    k = ranges.k_count
    lo = [ranges.norm_m[0], ranges.norm_k[0], ranges.norm_u_ref[0], ranges.cost_range[0],
          ranges.norm_sinr[0], *([0.0] * k), *(r[0] for r in ranges.theta_ranges)]
    hi = [ranges.norm_m[1], ranges.norm_k[1], ranges.norm_u_ref[1], ranges.cost_range[1],
          ranges.norm_sinr[1], *([1.0] * k), *(r[1] for r in ranges.theta_ranges)]
    return np.array(lo), np.array(hi)


def encode_state(state: MdpState, ranges: EnvRanges) -> np.ndarray:
    """Flatten to ``[M, K, U_ref, a, SINR, lambda..., theta...]`` scaled into the unit box."""
    raw = np.array([state.m, state.k, state.u_ref, state.unit_cost, state.sinr,
                    *state.proportions, *state.type_values], dtype=float)
    lo, hi = _bounds(ranges)
    if raw.size != lo.size:
        raise ValueError(f"state has {raw.size} entries, ranges expect {lo.size}")
    return (raw - lo) / (hi - lo)


def decode_state(vec: np.ndarray, ranges: EnvRanges) -> MdpState:
    lo, hi = _bounds(ranges)
    raw = np.asarray(vec, dtype=float) * (hi - lo) + lo
    k = ranges.k_count
    return MdpState(m=int(round(raw[0])), k=int(round(raw[1])), u_ref=float(raw[2]),
                    unit_cost=float(raw[3]), sinr=float(raw[4]),
                    proportions=tuple(map(float, raw[5:5 + k])),
                    type_values=tuple(map(float, raw[5 + k:5 + 2 * k])))


# -- actions and rewards --------------------------------------------------------

def raw_to_q(raw: np.ndarray, q_max: float) -> np.ndarray:
    return (np.asarray(raw, dtype=float) + 1.0) / 2.0 * q_max


def action_to_menu(raw: Sequence[float], state: MdpState, econ: EconParams,
                   q_max: float = 50.0) -> Optional[ContractMenu]:
    """Menu for a raw action, or ``None`` when the densities are not nondecreasing."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (state.k,) or np.any(np.abs(raw) > 1.0):
        raise ValueError(f"raw action must lie in [-1, 1]^{state.k}")
    q = np.clip(raw_to_q(raw, q_max), 0.0, q_max)
    if np.any(np.diff(q) < 0):
        return None
    return contract.closed_form_menu(q, state.population(), state.econ(econ))


def menu_reward(menu: ContractMenu, state: MdpState, econ: EconParams, pt: PtParams,
                mode: Mode = Mode.PT) -> float:
    """BS subjective utility + UAV utilities + IC slack over all ordered type pairs."""
    pop = state.population()
    e = state.econ(econ)
    theta = np.asarray(pop.type_values)[:, None]
    q, r = np.asarray(menu.q), np.asarray(menu.r)
    cross = contract.uav_utility(theta, q[None, :], r[None, :], e)  # type k (row) at item n (col)
    own = np.diag(cross)
    u_bs = contract.bs_total_utility(menu, pop, e, mode, state.pt(pt))
    return float(u_bs + own.sum() + (own[:, None] - cross).sum())


def batch_reward(q: np.ndarray, state: MdpState, econ: EconParams, pt: PtParams,
                 mode: Mode = Mode.PT) -> np.ndarray:
    """Vectorized :func:`menu_reward` for closed-form menus of nondecreasing rows of ``q``."""
    pop = state.population()
    e = state.econ(econ)
    r = contract.optimal_rewards(q, pop, e)
    theta = np.asarray(pop.type_values)
    per_item = e.beta_profit * np.log1p(q) - r
    f = per_item if Mode(mode) is Mode.EUT else contract.pt_transform(per_item, state.pt(pt))
    u_bs = pop.uav_count * (np.atleast_2d(f) @ np.asarray(pop.proportions))
    cross = e.upsilon * theta[None, :, None] * r[:, None, :] - e.unit_cost * q[:, None, :]
    own = np.einsum("bkk->bk", cross)
    return u_bs + own.sum(axis=1) + (own[:, :, None] - cross).sum(axis=(1, 2))


def gated_reward(state: MdpState, raw: Sequence[float], econ: EconParams, pt: PtParams,
                 q_max: float = 50.0, mode: Mode = Mode.PT,
                 infeasible_reward: float = 0.0) -> tuple[float, Optional[ContractMenu]]:
    """Reward of a raw action; ``infeasible_reward`` unless the menu passes full IR/IC."""
    menu = action_to_menu(raw, state, econ, q_max)
    if menu is None:
        return infeasible_reward, None
    if not contract.check_feasibility(menu, state.population(), state.econ(econ)).feasible:
        return infeasible_reward, None
    return menu_reward(menu, state, econ, pt, mode), menu


@dataclass
class StepResult:
    reward: float
    next_state: MdpState
    done: float
    feasible: bool
    menu: Optional[ContractMenu] = None


class ContractEnv:
    """Single-step contract environment.

    ``infeasible_reward`` is 0 by default (literal gating); a negative value
    turns the gate into a penalty.  Not safe to step from several threads.
    """

    def __init__(self, ranges: EnvRanges = EnvRanges(), econ: EconParams = EconParams(),
                 pt: PtParams = PtParams(), mode: Mode = Mode.PT, seed: int = 0,
                 infeasible_reward: float = 0.0):
        self.ranges = ranges
        self.econ = econ
        self.pt = pt
        self.mode = Mode(mode)
        self.infeasible_reward = infeasible_reward
        self.rng = np.random.default_rng(seed)
        self.state = sample_state(ranges, self.rng)

    def reset(self) -> MdpState:
        self.state = sample_state(self.ranges, self.rng)
        return self.state

    def encode(self, state: Optional[MdpState] = None) -> np.ndarray:
        return encode_state(self.state if state is None else state, self.ranges)

    def reward(self, state: MdpState, raw: Sequence[float]) -> tuple[float, Optional[ContractMenu]]:
        return gated_reward(state, raw, self.econ, self.pt, self.ranges.q_max, self.mode,
                            self.infeasible_reward)

    def step(self, raw: Sequence[float]) -> StepResult:
        reward, menu = self.reward(self.state, raw)
        next_state = self.reset()
        return StepResult(reward=reward, next_state=next_state, done=1.0,
                          feasible=menu is not None, menu=menu)


def step(state: MdpState, raw: Sequence[float], econ: EconParams, pt: PtParams,
         ranges: EnvRanges, rng: Union[np.random.Generator, int], mode: Mode = Mode.PT,
         infeasible_reward: float = 0.0) -> tuple[float, MdpState, float]:
    """Functional form of :meth:`ContractEnv.step`: ``(reward, next_state, done)``."""
    reward, _ = gated_reward(state, raw, econ, pt, ranges.q_max, mode, infeasible_reward)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return reward, sample_state(ranges, rng), 1.0


def oracle_reward_solve(state: MdpState, econ: EconParams, pt: PtParams, q_max: float = 50.0,
                        grid_n: int = 101, mode: Mode = Mode.PT) -> contract.Solution:
    """Grid optimum of the environment reward (not the BS utility) for one state."""
    return contract.oracle_grid_solve(
        state.population(), state.econ(econ), mode, state.pt(pt), q_max=q_max, grid_n=grid_n,
        objective=lambda qs: batch_reward(qs, state, econ, pt, mode))


def ranges_to_dict(ranges: EnvRanges) -> dict:
    return asdict(ranges)


@dataclass(frozen=True)
class EnvConfig:
    """Everything needed to build a :class:`ContractEnv` except the seed."""

    ranges: EnvRanges = field(default_factory=EnvRanges)
    econ: EconParams = field(default_factory=EconParams)
    pt: PtParams = field(default_factory=PtParams)
    mode: Mode = Mode.PT
    infeasible_reward: float = 0.0

    def make(self, seed: Union[int, np.random.Generator, np.random.SeedSequence]) -> ContractEnv:
        env = ContractEnv(self.ranges, self.econ, self.pt, self.mode, 0, self.infeasible_reward)
        env.rng = np.random.default_rng(seed)
        env.state = sample_state(self.ranges, env.rng)
        return env

    def reward(self, state: MdpState, raw: Sequence[float]) -> tuple[float, Optional[ContractMenu]]:
        return gated_reward(state, raw, self.econ, self.pt, self.ranges.q_max, self.mode,
                            self.infeasible_reward)
