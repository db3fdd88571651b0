"""Short RDSAC and SAC training runs against the grid-oracle reference.

Starts from the desk preset in configs/desk.json with half its episode
budget, so one seed of each agent finishes in about a minute.

    python3 demos/train_agents.py
"""

from pathlib import Path

import numpy as np

from covsem.cli import ca_solution
from covsem.config import load_config
from covsem.environment import menu_reward
from covsem.rdsac import eval_states, sac_baseline_train, train
from covsem.rdsac.trainer import seed_streams


def main():
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "desk.json", {"train.episodes": 400})
    env_cfg, tcfg, seed = cfg.env_config(), cfg.train, 0
    markets, _ = eval_states(env_cfg, tcfg.eval_states, seed_streams(seed)[4])
    oracle = np.mean([menu_reward(ca_solution(s, env_cfg).menu, s, env_cfg.econ, env_cfg.pt, env_cfg.mode)
                      for s in markets])
    print(f"oracle CA reward on the evaluation markets: {oracle:.0f}")
    for name, fn in (("RDSAC", train), ("SAC", sac_baseline_train)):
        result = fn(env_cfg, tcfg, seed, log=None)
        history = ", ".join(f"ep {e}: {m:.0f}" for e, m, _ in result.eval_history)
        print(f"{name:5s} {history}  ({result.tail_mean() / oracle:.2f} of oracle, {result.seconds:.0f} s)")


if __name__ == "__main__":
    main()
