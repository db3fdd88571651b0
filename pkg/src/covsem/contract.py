"""Contract model: utilities, prospect-theory transform, feasibility and solvers.

Types are indexed ascending (``theta_1 <= ... <= theta_K``).  A menu item is a
``(q, r)`` pair: required covert semantic density and the reward paid.

Rewards for a nondecreasing density vector follow the closed form that binds
type-1 IR and every downward-adjacent IC constraint, which reduces the design
problem to a search over densities only.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class UavPopulation:
    type_values: tuple[float, ...]
    proportions: tuple[float, ...]
    uav_count: int = 5

    def __post_init__(self):
        theta = tuple(float(t) for t in self.type_values)
        lam = tuple(float(x) for x in self.proportions)
        object.__setattr__(self, "type_values", theta)
        object.__setattr__(self, "proportions", lam)
        if len(theta) == 0 or len(theta) != len(lam):
            raise ValueError("type_values and proportions must be nonempty and of equal length")
        if any(t <= 0 for t in theta) or any(b < a for a, b in zip(theta, theta[1:])):
            raise ValueError("type values must be positive and ascending")
        if any(x < 0 for x in lam) or abs(sum(lam) - 1.0) > 1e-9:
            raise ValueError("proportions must be nonnegative and sum to 1")
        if self.uav_count < 1:
            raise ValueError("uav_count must be a positive integer")

    @property
    def type_count(self) -> int:
        return len(self.type_values)


@dataclass(frozen=True)
class EconParams:
    upsilon: float = 200.0
    unit_cost: float = 90.0
    beta_profit: float = 50.0

    def __post_init__(self):
        if min(self.upsilon, self.unit_cost, self.beta_profit) <= 0:
            raise ValueError("economic parameters must be strictly positive")


@dataclass(frozen=True)
class PtParams:
    u_ref: float = 160.0
    gain_exp: float = 1.0
    loss_exp: float = 1.0
    loss_aversion: float = 0.5

    def __post_init__(self):
        if not (0 < self.gain_exp <= 1 and 0 < self.loss_exp <= 1):
            raise ValueError("PT exponents must lie in (0, 1]")
        if self.loss_aversion < 0:
            raise ValueError("loss aversion must be >= 0")


class Mode(str, Enum):
    EUT = "eut"
    PT = "pt"


@dataclass(frozen=True)
class ContractMenu:
    q: tuple[float, ...]
    r: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        object.__setattr__(self, "r", tuple(float(x) for x in self.r))
        if len(self.q) != len(self.r):
            raise ValueError("q and r must have equal length")
        if any(x < 0 for x in self.q + self.r):
            raise ValueError("menu entries must be nonnegative")

    def __len__(self):
        return len(self.q)

    @property
    def items(self) -> list[tuple[float, float]]:
        return list(zip(self.q, self.r))

    @classmethod
    def zeros(cls, k: int) -> "ContractMenu":
        return cls((0.0,) * k, (0.0,) * k)


# -- utilities ------------------------------------------------------------------

def uav_utility(theta, q, r, econ: EconParams):
    """Utility of a type-``theta`` UAV accepting item ``(q, r)``; may be negative."""
    return econ.upsilon * theta * r - econ.unit_cost * q


def bs_item_utility_eut(q, r, econ: EconParams):
    if np.any(np.asarray(q) < 0):
        raise ValueError("q must be >= 0")
    return econ.beta_profit * np.log1p(q) - r


def pt_transform(u, pt: PtParams):
    """Reference-dependent subjective utility (gains and losses treated asymmetrically)."""
    u = np.asarray(u, dtype=float)
    gain = np.maximum(u - pt.u_ref, 0.0) ** pt.gain_exp
    loss = -pt.loss_aversion * np.maximum(pt.u_ref - u, 0.0) ** pt.loss_exp
    out = np.where(u >= pt.u_ref, gain, loss)
    return float(out) if out.ndim == 0 else out


def _subjective(u, mode: Mode, pt: Optional[PtParams]):
    if Mode(mode) is Mode.EUT:
        return u
    if pt is None:
        raise ValueError("PT mode requires PtParams")
    return pt_transform(u, pt)


def bs_total_utility(menu: ContractMenu, pop: UavPopulation, econ: EconParams,
                     mode: Mode = Mode.EUT, pt: Optional[PtParams] = None) -> float:
    if len(menu) != pop.type_count:
        raise ValueError(f"menu has {len(menu)} items for {pop.type_count} types")
    per_item = bs_item_utility_eut(np.array(menu.q), np.array(menu.r), econ)
    f = _subjective(per_item, mode, pt)
    return float(pop.uav_count * np.dot(pop.proportions, f))


# -- feasibility ----------------------------------------------------------------

@dataclass
class FeasibilityReport:
    ir_ok: list[bool]
    ic_ok: dict[tuple[int, int], bool]
    monotone_ok: bool

    @property
    def feasible(self) -> bool:
        return all(self.ir_ok) and all(self.ic_ok.values()) and self.monotone_ok


def check_feasibility(menu: ContractMenu, pop: UavPopulation, econ: EconParams,
                      tol: float = FEAS_TOL) -> FeasibilityReport:
    """Full IR and K(K-1) IC checks plus monotonicity of the menu.

    ``ic_ok[(k, n)]`` states that type k weakly prefers item k over item n.
    A constraint holds when its slack is >= ``-tol``.
    """
    if len(menu) != pop.type_count:
        raise ValueError(f"menu has {len(menu)} items for {pop.type_count} types")
    theta, q, r = pop.type_values, menu.q, menu.r
    own = [uav_utility(theta[k], q[k], r[k], econ) for k in range(len(q))]
    ir_ok = [u >= -tol for u in own]
    ic_ok = {(k, n): own[k] - uav_utility(theta[k], q[n], r[n], econ) >= -tol
             for k, n in itertools.permutations(range(len(q)), 2)}
    monotone = all(b >= a for a, b in zip(q, q[1:])) and all(b >= a for a, b in zip(r, r[1:]))
    return FeasibilityReport(ir_ok=ir_ok, ic_ok=ic_ok, monotone_ok=monotone)


def optimal_rewards(q_vec: Sequence[float], pop: UavPopulation, econ: EconParams) -> np.ndarray:
    """Closed-form rewards for nondecreasing densities.

    ``R_k = (a/u) * (Q_1/theta_1 + sum_{i=2..k} (Q_i - Q_{i-1}) / theta_i)``.
    Accepts a single vector (K,) or a batch (n, K).
    """
    q = np.asarray(q_vec, dtype=float)
    theta = np.asarray(pop.type_values)
    if q.shape[-1] != theta.size:
        raise ValueError(f"expected {theta.size} densities, got {q.shape[-1]}")
    if np.any(q < 0):
        raise ValueError("densities must be nonnegative")
    if np.any(np.diff(q, axis=-1) < 0):
        raise ValueError("densities must be nondecreasing in type")
    increments = np.diff(q, axis=-1, prepend=0.0) / theta
    return econ.unit_cost / econ.upsilon * np.cumsum(increments, axis=-1)


def closed_form_menu(q_vec: Sequence[float], pop: UavPopulation, econ: EconParams) -> ContractMenu:
    return ContractMenu(tuple(q_vec), tuple(optimal_rewards(q_vec, pop, econ)))


# -- solvers ------------------------------------------------------------------

@dataclass
class Solution:
    menu: ContractMenu
    utility: float


def _batch_bs_utility(q: np.ndarray, pop: UavPopulation, econ: EconParams,
                      mode: Mode, pt: Optional[PtParams]) -> np.ndarray:
    r = optimal_rewards(q, pop, econ)
    per_item = econ.beta_profit * np.log1p(q) - r
    return pop.uav_count * (_subjective(per_item, mode, pt) @ np.asarray(pop.proportions))


def nondecreasing_grid(grid: np.ndarray, k: int) -> np.ndarray:
    """All nondecreasing length-``k`` vectors over ``grid``, lexicographic order."""
    idx = np.array(list(itertools.combinations_with_replacement(range(len(grid)), k)), dtype=np.int64)
    return grid[idx]


BatchObjective = Callable[[np.ndarray], np.ndarray]


def grid_argmax(candidates: np.ndarray, objective: BatchObjective,
                chunk: int = 200_000, n_jobs: int = 1) -> tuple[int, float]:
    """Index and value of the best candidate row.

    Candidates must be in lexicographic order; ties resolve to the smallest
    index, whatever the chunking or worker count, so the result is deterministic.
    """
    starts = list(range(0, len(candidates), chunk))

    def best_in(start: int) -> tuple[float, int]:
        vals = objective(candidates[start: start + chunk])
        i = int(np.argmax(vals))
        return float(vals[i]), start + i

    if n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(best_in, starts))
    else:
        results = [best_in(s) for s in starts]
    value, index = max(results, key=lambda vi: (vi[0], -vi[1]))
    return index, value


def oracle_grid_solve(pop: UavPopulation, econ: EconParams, mode: Mode = Mode.EUT,
                      pt: Optional[PtParams] = None, q_max: float = 50.0, grid_n: int = 101,
                      objective: Optional[BatchObjective] = None, n_jobs: int = 1) -> Solution:
    """Exhaustive search over nondecreasing densities on a uniform grid.

    The default objective is the BS total utility; ``objective`` may replace
    it with any batch function of density vectors (n, K) -> (n,).
    """
    k = pop.type_count
    if q_max <= 0:
        return Solution(ContractMenu.zeros(k), bs_total_utility(ContractMenu.zeros(k), pop, econ, mode, pt))
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    grid = np.linspace(0.0, q_max, grid_n)
    if k == 1:
        cands = grid[:, None]
    else:
        n_cands = math.comb(grid_n + k - 1, k)
        if n_cands > 50_000_000:
            raise ValueError(f"grid too large: {n_cands} candidates")
        cands = nondecreasing_grid(grid, k)
    obj = objective or (lambda qs: _batch_bs_utility(qs, pop, econ, mode, pt))
    idx, value = grid_argmax(cands, obj, n_jobs=n_jobs)
    menu = closed_form_menu(cands[idx], pop, econ)
    if objective is not None:
        return Solution(menu, value)
    return Solution(menu, bs_total_utility(menu, pop, econ, mode, pt))


def complete_info_solve(pop: UavPopulation, econ: EconParams, mode: Mode = Mode.EUT,
                        pt: Optional[PtParams] = None, q_max: float = 50.0,
                        grid_n: int = 101) -> Solution:
    """Benchmark where the BS observes types: full surplus extraction per type.

    Each type is paid ``a Q / (u theta)`` and its density is chosen from the
    grid plus the clipped first-order optimum ``beta u theta / a - 1``.  The
    search space contains the asymmetric-information grid, so the result
    upper-bounds :func:`oracle_grid_solve` on the same grid.
    """
    q_items, r_items = [], []
    grid = np.linspace(0.0, max(q_max, 0.0), max(grid_n, 2))
    for theta in pop.type_values:
        q_star = econ.beta_profit * econ.upsilon * theta / econ.unit_cost - 1.0
        cands = np.append(grid, min(max(q_star, 0.0), max(q_max, 0.0)))
        r = econ.unit_cost * cands / (econ.upsilon * theta)
        vals = _subjective(econ.beta_profit * np.log1p(cands) - r, mode, pt)
        best = max(range(len(cands)), key=lambda i: (vals[i], -cands[i]))
        q_items.append(float(cands[best]))
        r_items.append(float(r[best]))
    menu = ContractMenu(tuple(q_items), tuple(r_items))
    return Solution(menu, bs_total_utility(menu, pop, econ, mode, pt))


def random_menu(pop: UavPopulation, econ: EconParams, rng: np.random.Generator,
                q_max: float = 50.0, grid_n: int = 101) -> ContractMenu:
    """Type-agnostic menu: sorted random grid densities with closed-form rewards."""
    grid = np.linspace(0.0, q_max, grid_n)
    q = np.sort(rng.choice(grid, size=pop.type_count))
    return closed_form_menu(q, pop, econ)


def random_menu_utility(pop: UavPopulation, econ: EconParams, mode: Mode, pt: Optional[PtParams],
                        rng: np.random.Generator, q_max: float = 50.0, grid_n: int = 101,
                        n_draws: int = 256) -> float:
    """Monte Carlo expected BS utility of :func:`random_menu`."""
    grid = np.linspace(0.0, q_max, grid_n)
    q = np.sort(rng.choice(grid, size=(n_draws, pop.type_count)), axis=1)
    return float(np.mean(_batch_bs_utility(q, pop, econ, mode, pt)))


# -- serialization --------------------------------------------------------------

def menu_records(menu: ContractMenu, pop: UavPopulation, econ: EconParams,
                 pt: Optional[PtParams] = None) -> list[dict]:
    pt = pt or PtParams()
    out = []
    for k, (theta, lam, q, r) in enumerate(zip(pop.type_values, pop.proportions, menu.q, menu.r), start=1):
        u_eut = float(bs_item_utility_eut(q, r, econ))
        out.append({
            "k": k, "theta": theta, "lambda": lam, "q": q, "r": r,
            "u_uav": float(uav_utility(theta, q, r, econ)),
            "u_bs_eut": u_eut,
            "u_bs_pt": float(pt_transform(u_eut, pt)),
        })
    return out


def save_menu(path: Union[str, Path], menu: ContractMenu, pop: UavPopulation, econ: EconParams,
              pt: Optional[PtParams] = None) -> None:
    Path(path).write_text(json.dumps(menu_records(menu, pop, econ, pt), indent=2))


def load_menu(path: Union[str, Path]) -> ContractMenu:
    records = sorted(json.loads(Path(path).read_text()), key=lambda rec: rec["k"])
    return ContractMenu(tuple(rec["q"] for rec in records), tuple(rec["r"] for rec in records))
