"""Batch experiment runner.

Subcommands ``table-q``, ``oracle``, ``train``, ``eval`` and ``sweep-ref``
each write their outputs plus ``resolved_config.json`` into ``--out`` and
print a JSON summary on stdout.  Failures exit with status 1 (2 for bad
arguments) and print ``{"error": ..., "message": ...}`` on stderr.

Output schemas (version :data:`SCHEMA_VERSION`, column order fixed):

* ``table_q.csv``: snr_db, per_g1, per_g2, per_g3, q_g1, q_g2, q_g3
* ``oracle_states.csv``: state, random, ca, cc, ca_reward
* ``curve.csv``: episode, mean_reward, critic_loss, actor_loss, feasibility_rate
* ``sweep_ref.csv``: u_ref, utility
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from covsem import channel, contract, semantics
from covsem.config import ConfigError, RunConfig, load_config, save_config
from covsem.environment import EnvConfig, MdpState, menu_reward
from covsem.rdsac import (eval_states, evaluate, load_agent, sac_baseline_train, save_agent, train,
                          write_curve)

SCHEMA_VERSION = 1
ORACLE_COLUMNS = ("state", "random", "ca", "cc", "ca_reward")


# -- commands -------------------------------------------------------------------

def _prepare(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "resolved_config.json")
    except OSError as exc:
        raise OSError(f"{out}: cannot write outputs ({exc.strerror})") from exc
    return out


def covert_prob(cfg: RunConfig) -> float:
    """Warden-side covertness for the configured warden geometry."""
    rx = channel.received_power(cfg.willie, cfg.channel)
    return channel.covert_probability(cfg.detection, cfg.channel.noise_willie, rx)


def scene_batch(cfg: RunConfig) -> list[semantics.Scene]:
    base = cfg.seeds()["scenes"] % (2**31)
    sb = cfg.scenes
    return [semantics.generate_scene(base + i, sb.height, sb.width, sb.n_objects) for i in range(sb.n_scenes)]


def cmd_table_q(cfg: RunConfig, snr_list_db: Optional[Sequence[float]] = None) -> semantics.QTable:
    snr = list(cfg.snr_db if snr_list_db is None else snr_list_db)
    if not snr:
        raise ValueError("empty SNR list")
    out = _prepare(cfg)
    ssims = semantics.level_ssims(scene_batch(cfg), cfg.semantic.kappa)
    table = semantics.q_table(snr, semantics.info_degrees(ssims, cfg.semantic), covert_prob(cfg),
                              cfg.semantic, cfg.per)
    table.to_csv(out / "table_q.csv")
    return table


def _oracle_states(cfg: RunConfig, n: int) -> tuple[list[MdpState], np.ndarray]:
    return eval_states(cfg.env_config(), n, cfg.seeds()["eval"])


def ca_solution(state: MdpState, env_cfg: EnvConfig, grid_n: int = 101, n_jobs: int = 1) -> contract.Solution:
    """Asymmetric-information grid optimum of the BS utility for one market."""
    return contract.oracle_grid_solve(state.population(), state.econ(env_cfg.econ), env_cfg.mode,
                                      state.pt(env_cfg.pt), q_max=env_cfg.ranges.q_max, grid_n=grid_n,
                                      n_jobs=n_jobs)


def oracle_rows(states: Sequence[MdpState], env_cfg: EnvConfig, grid_n: int = 101,
                random_draws: int = 256, seed: int = 0, n_jobs: int = 1) -> list[dict]:
    """Per-market random / CA / CC utilities and the environment reward of the CA menu."""
    rng = np.random.default_rng(seed)
    rows = []
    for i, s in enumerate(states):
        pop, econ, pt = s.population(), s.econ(env_cfg.econ), s.pt(env_cfg.pt)
        ca = ca_solution(s, env_cfg, grid_n, n_jobs)
        cc = contract.complete_info_solve(pop, econ, env_cfg.mode, pt, env_cfg.ranges.q_max, grid_n)
        rnd = contract.random_menu_utility(pop, econ, env_cfg.mode, pt, rng, env_cfg.ranges.q_max,
                                           grid_n, random_draws)
        rows.append({"state": i, "random": rnd, "ca": ca.utility, "cc": cc.utility,
                     "ca_reward": menu_reward(ca.menu, s, env_cfg.econ, env_cfg.pt, env_cfg.mode)})
    return rows


def cmd_oracle(cfg: RunConfig) -> dict:
    out = _prepare(cfg)
    n = cfg.oracle.n_states
    states, _ = _oracle_states(cfg, n)
    rows = oracle_rows(states, cfg.env_config(), cfg.oracle.grid_n, cfg.oracle.random_draws,
                       cfg.seeds()["oracle"], cfg.oracle.n_jobs)
    with open(out / "oracle_states.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ORACLE_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    report = {"schema_version": SCHEMA_VERSION, "n_states": n}
    if rows:
        means = {k: float(np.mean([r[k] for r in rows])) for k in ORACLE_COLUMNS[1:]}
        report.update({f"{k}_mean": v for k, v in means.items()})
        report["cc_ca_gap"] = means["cc"] - means["ca"]
        report["cc_random_gap"] = means["cc"] - means["random"]
        report["bound_chain_ok"] = all(r["cc"] >= r["ca"] - 1e-9 and r["ca"] >= r["random"] - 1e-9
                                       for r in rows)
    (out / "oracle.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def cmd_train(cfg: RunConfig, algo: str = "rdsac") -> dict:
    if algo not in ("rdsac", "sac"):
        raise ValueError(f"unknown algorithm {algo!r}; choose rdsac or sac")
    out = _prepare(cfg)
    trainer = train if algo == "rdsac" else sac_baseline_train
    result = trainer(cfg.env_config(), cfg.train, cfg.seeds()["train"])
    write_curve(out / "curve.csv", result.curve)
    save_agent(out / "checkpoint.json", result.agent, cfg.train, {"seed": cfg.seed})
    summary = {"schema_version": SCHEMA_VERSION, "algo": algo, "episodes": len(result.curve),
               "eval_history": [{"episode": e, "mean": m, "std": s} for e, m, s in result.eval_history],
               "tail_mean": result.tail_mean() if result.eval_history else None,
               "seconds": result.seconds}
    (out / "train_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_eval(cfg: RunConfig, checkpoint: Optional[str] = None, n_states: Optional[int] = None,
             oracle_replay: bool = False) -> dict:
    """Evaluate a checkpoint, or replay the CA oracle menus when ``oracle_replay`` is set."""
    if (checkpoint is None) == (not oracle_replay):
        raise ValueError("give exactly one of a checkpoint or oracle replay")
    n = cfg.eval.n_states if n_states is None else n_states
    if n < 1:
        raise ValueError("n_states must be >= 1")
    out = _prepare(cfg)
    env_cfg = cfg.env_config()
    states = _oracle_states(cfg, n)
    if oracle_replay:
        rewards = [menu_reward(ca_solution(s, env_cfg, cfg.oracle.grid_n, cfg.oracle.n_jobs).menu, s,
                               env_cfg.econ, env_cfg.pt, env_cfg.mode) for s in states[0]]
        mean, std, source = float(np.mean(rewards)), float(np.std(rewards)), "oracle"
    else:
        agent, tcfg, meta = load_agent(checkpoint)
        rng = np.random.default_rng(cfg.seeds()["eval"])
        mean, std = evaluate(lambda enc: agent.act(enc, rng, tcfg.eval_deterministic), env_cfg,
                             states=states)
        source = meta.get("algo")
    report = {"schema_version": SCHEMA_VERSION, "source": source, "n_states": n, "mean": mean, "std": std}
    (out / "eval.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def sweep_rows(states: Sequence[MdpState], env_cfg: EnvConfig, refs: Sequence[float],
               grid_n: int = 101) -> list[dict]:
    """Mean oracle BS utility per reference point, all else fixed."""
    rows = []
    for ref in refs:
        pt = replace(env_cfg.pt, u_ref=float(ref))
        util = [contract.oracle_grid_solve(s.population(), s.econ(env_cfg.econ), env_cfg.mode, pt,
                                           q_max=env_cfg.ranges.q_max, grid_n=grid_n).utility
                for s in states]
        rows.append({"u_ref": float(ref), "utility": float(np.mean(util))})
    return rows


def cmd_sweep_ref(cfg: RunConfig, refs: Optional[Sequence[float]] = None) -> list[dict]:
    refs = list(cfg.sweep.refs if refs is None else refs)
    if not refs:
        raise ValueError("empty reference list")
    out = _prepare(cfg)
    states, _ = _oracle_states(cfg, cfg.sweep.n_states)
    rows = sweep_rows(states, cfg.env_config(), refs, cfg.oracle.grid_n)
    with open(out / "sweep_ref.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=("u_ref", "utility"))
        w.writeheader()
        w.writerows(rows)
    return rows


# -- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        sys.exit(2)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; omitted keys take defaults")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")

    parser = _Parser(prog="covsem", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("table-q", parents=[common], help="PER and density per abstraction level")
    p.add_argument("--snr", type=_float_list, help="comma-separated SNR values in dB")
    sub.add_parser("oracle", parents=[common], help="random / CA / CC utilities on sampled markets")
    p = sub.add_parser("train", parents=[common], help="train a policy and write its curve")
    p.add_argument("--algo", choices=("rdsac", "sac"), default="rdsac")
    p.add_argument("--episodes", type=int, help="episode budget (overrides the config)")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or the oracle")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="checkpoint written by train")
    src.add_argument("--oracle-replay", action="store_true", help="replay CA oracle menus")
    p.add_argument("--n-states", type=int, help="evaluation markets (default from config)")
    p = sub.add_parser("sweep-ref", parents=[common], help="oracle utility per PT reference point")
    p.add_argument("--refs", type=_float_list, help="comma-separated reference points")
    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "episodes", None) is not None:
        overrides["train.episodes"] = args.episodes
    return load_config(args.config, overrides)


def run(argv: Optional[Sequence[str]] = None):
    args = build_parser().parse_args(argv)
    cfg = _config_from_args(args)
    if args.command == "table-q":
        table = cmd_table_q(cfg, args.snr)
        return {"rows": table.rows(), "eps0": table.eps0}
    if args.command == "oracle":
        return cmd_oracle(cfg)
    if args.command == "train":
        return cmd_train(cfg, args.algo)
    if args.command == "eval":
        return cmd_eval(cfg, args.checkpoint, args.n_states, args.oracle_replay)
    return {"rows": cmd_sweep_ref(cfg, args.refs)}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        result = run(argv)
    except ConfigError as exc:
        _emit_error("ConfigError", str(exc))
        return 1
    except (OSError, ValueError, FloatingPointError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    print(json.dumps(result, default=_json_default))
    return 0


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
