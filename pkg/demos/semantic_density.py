"""Covertness, packet errors and semantic density across SNR.

Builds the per-level Q-table from synthetic scenes and prints which
abstraction level carries the most covert semantic density at each SNR.

    python3 demos/semantic_density.py
"""

from covsem import channel, semantics
from covsem.cli import covert_prob, scene_batch
from covsem.config import RunConfig


def main():
    cfg = RunConfig()
    eps0 = covert_prob(cfg)
    print(f"warden at {cfg.willie.horiz_dist_m:.0f} m: covert probability {eps0:.4f}")

    ssims = semantics.level_ssims(scene_batch(cfg), cfg.semantic.kappa)
    info = semantics.info_degrees(ssims, cfg.semantic)
    print("mean SSIM per level:", [round(float(s), 3) for s in ssims.mean(axis=0)])

    table = semantics.q_table(cfg.snr_db, info, eps0, cfg.semantic, cfg.per)
    print(f"{'SNR':>5} {'PER g1':>8} {'PER g3':>8}  best level")
    for snr, per, q in zip(table.snr_db, table.per, table.q):
        print(f"{snr:5.0f} {per[0]:8.4f} {per[2]:8.4f}  g{int(q.argmax()) + 1}")
    print("PER at 10 dB, 1024-bit packet:", float(channel.packet_error_rate(channel.db_to_linear(10), cfg.per, 1024)))


if __name__ == "__main__":
    main()
