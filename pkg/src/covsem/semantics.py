"""Synthetic scenes, hierarchical semantic abstraction and the covert density metric.

Scenes stand in for perception output: the binary mask is ground truth by
construction.  Abstraction levels:

* ``G1`` keeps only masked (task-critical) pixels,
* ``G2`` additionally keeps a block-averaged copy of the background,
* ``G3`` keeps the full image.

All levels keep the array shape, so the transmitted payload size is fixed.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from covsem import channel

MIN_SCENE_SIZE = 32
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


class Level(IntEnum):
    G1 = 1
    G2 = 2
    G3 = 3


@dataclass(frozen=True)
class AbstractionLevel:
    level: Level
    kappa: int = 4

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        if self.kappa < 2:
            raise ValueError("kappa must be >= 2")


@dataclass(frozen=True)
class Scene:
    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.image.shape != self.mask.shape:
            raise ValueError("image and mask must have identical shapes")
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("mask must be binary")


@dataclass(frozen=True)
class SemanticConfig:
    """Task-level parameters of the semantic utility.

    ``level_bits`` are the effective packet sizes per abstraction level used
    by the PER model (G1, G2, G3).  They are a modelling choice: with a single
    packet size the level ordering of the density could never flip with SNR.
    """

    p_base: float = 0.1
    sens_lambda: float = 2.0
    alpha_scale: float = 100.0
    payload_l: float = 1.0
    kappa: int = 4
    level_bits: tuple[int, int, int] = (1024, 4096, 16384)

    def __post_init__(self):
        if not 0 < self.p_base < 1:
            raise ValueError("p_base must lie in (0, 1)")
        if self.sens_lambda < 0:
            raise ValueError("sens_lambda must be >= 0")
        if self.alpha_scale <= 0 or self.payload_l <= 0:
            raise ValueError("alpha_scale and payload_l must be > 0")
        if len(self.level_bits) != 3:
            raise ValueError("level_bits needs one entry per abstraction level")
        object.__setattr__(self, "level_bits", tuple(int(b) for b in self.level_bits))


# -- scenes ---------------------------------------------------------------------

def generate_scene(seed: int, height: int = 64, width: int = 64, n_objects: int = 3) -> Scene:
    """Procedural scene: filled shapes (mask=1) over a smooth textured background.

    Bit-identical for a fixed argument tuple; uses its own generator.
    """
    if height < MIN_SCENE_SIZE or width < MIN_SCENE_SIZE:
        raise ValueError(f"scene must be at least {MIN_SCENE_SIZE}x{MIN_SCENE_SIZE}")
    if n_objects < 1:
        raise ValueError("n_objects must be >= 1")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(float)

    # Background: a few low-frequency gratings plus smoothed noise, in [0.2, 0.8].
    bg = np.zeros((height, width))
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 3.0, size=2) * 2 * np.pi
        phase = rng.uniform(0, 2 * np.pi)
        bg += np.sin(fy * yy / height + fx * xx / width + phase)
    bg += 4.0 * ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma=1.5)
    bg = 0.2 + 0.6 * (bg - bg.min()) / (np.ptp(bg) + 1e-12)

    image = bg.copy()
    mask = np.zeros((height, width), dtype=np.uint8)
    s = min(height, width)
    for _ in range(n_objects):
        cy, cx = rng.uniform(0.15, 0.85) * height, rng.uniform(0.15, 0.85) * width
        size = rng.uniform(0.08, 0.16) * s
        kind = rng.integers(3)
        if kind == 0:
            shape = (yy - cy) ** 2 + (xx - cx) ** 2 <= size ** 2
        elif kind == 1:
            shape = (np.abs(yy - cy) <= size) & (np.abs(xx - cx) <= size * rng.uniform(0.6, 1.4))
        else:
            shape = (yy - cy + size >= 0) & (np.abs(xx - cx) <= (yy - cy + size) / 2) & (yy - cy <= size)
        level = rng.uniform(0.0, 1.0)
        stripes = 0.15 * np.sin(2 * np.pi * (yy + xx) / rng.uniform(3.0, 6.0))
        image[shape] = np.clip(level + stripes[shape], 0.0, 1.0)
        mask[shape] = 1

    if mask.all() or not mask.any():
        # Guarantee both labels exist: carve or plant a small patch.
        r = max(2, s // 16)
        mask[:r, :r] = 0 if mask.all() else 1
        image[:r, :r] = bg[:r, :r] if mask[0, 0] == 0 else 1.0
    return Scene(image=image, mask=mask)


def lowpass(image: np.ndarray, kappa: int) -> np.ndarray:
    """Block-average downsample by ``kappa`` then nearest-neighbour upsample.

    Partial blocks at the right/bottom edges are averaged over their actual size.
    """
    if kappa < 2:
        raise ValueError("kappa must be >= 2")
    h, w = image.shape
    rows = np.arange(0, h, kappa)
    cols = np.arange(0, w, kappa)
    sums = np.add.reduceat(np.add.reduceat(image, rows, axis=0), cols, axis=1)
    counts = np.outer(np.diff(np.append(rows, h)), np.diff(np.append(cols, w)))
    means = sums / counts
    return np.repeat(np.repeat(means, kappa, axis=0)[:h], kappa, axis=1)[:, :w]


def apply_abstraction(scene: Scene, level: AbstractionLevel) -> np.ndarray:
    x, m = scene.image, scene.mask
    if level.level is Level.G1:
        return x * m
    if level.level is Level.G2:
        return x * m + lowpass(x, level.kappa) * (1 - m)
    return x.copy()


# -- SSIM -------------------------------------------------------------------

def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    k = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, kernel, axis=0, mode="constant")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="constant")
    pad = (len(kernel) - 1) // 2
    return out[pad:-pad, pad:-pad]


def ssim(img_a: np.ndarray, img_b: np.ndarray, data_range: float = 1.0) -> float:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), averaged over valid windows."""
    a = np.asarray(img_a, dtype=float)
    b = np.asarray(img_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    k = _gaussian_kernel()
    mu_a, mu_b = _filter_valid(a, k), _filter_valid(b, k)
    var_a = _filter_valid(a * a, k) - mu_a ** 2
    var_b = _filter_valid(b * b, k) - mu_b ** 2
    cov = _filter_valid(a * b, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# -- metric chain --------------------------------------------------------------

def semantic_error_probability(ssim_val: float, cfg: SemanticConfig) -> float:
    """Task error probability, clamped to [0, 1]."""
    p = cfg.p_base * (1.0 + cfg.sens_lambda * (1.0 - ssim_val))
    return float(min(1.0, max(0.0, p)))


def semantic_info_degree(p_e: float) -> float:
    return 1.0 - p_e


def expected_semantic_value(per: float, i_s: float) -> float:
    return (1.0 - per) * i_s


def covert_semantic_density(eps0: float, v: float, cfg: SemanticConfig) -> float:
    return cfg.alpha_scale * eps0 * v / cfg.payload_l


def level_ssims(scenes: Iterable[Scene], kappa: int = 4) -> np.ndarray:
    """SSIM of every scene against each abstraction level; shape (n_scenes, 3)."""
    rows = []
    for scene in scenes:
        rows.append([ssim(scene.image, apply_abstraction(scene, AbstractionLevel(lv, kappa)))
                     for lv in Level])
    return np.array(rows)


def info_degrees(ssims: np.ndarray, cfg: SemanticConfig) -> np.ndarray:
    """Mean semantic information degree per level from a (n, 3) SSIM matrix."""
    i_s = np.vectorize(lambda s: semantic_info_degree(semantic_error_probability(s, cfg)))(ssims)
    return i_s.mean(axis=0)


@dataclass
class QTable:
    snr_db: np.ndarray
    per: np.ndarray  # (n_snr, 3)
    q: np.ndarray  # (n_snr, 3)
    info_degree: np.ndarray = field(default_factory=lambda: np.zeros(3))
    eps0: float = 1.0

    COLUMNS = ("snr_db", "per_g1", "per_g2", "per_g3", "q_g1", "q_g2", "q_g3")

    def rows(self) -> list[tuple[float, ...]]:
        return [(float(s), *map(float, p), *map(float, q))
                for s, p, q in zip(self.snr_db, self.per, self.q)]

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        try:
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(self.COLUMNS)
                for row in self.rows():
                    writer.writerow([repr(v) for v in row])
        except OSError as exc:
            raise OSError(f"cannot write Q-table to {path}: {exc}") from exc


def q_table(snr_db: Sequence[float], info_degree: np.ndarray, eps0: float,
            sem_cfg: SemanticConfig, per_cfg: channel.PerConfig) -> QTable:
    """Density per abstraction level over an SNR sweep.

    ``info_degree`` holds I_S for (G1, G2, G3); the PER of each level uses its
    own packet size from ``sem_cfg.level_bits``.
    """
    snr_db = np.asarray(list(snr_db), dtype=float)
    if snr_db.size == 0:
        raise ValueError("empty SNR list")
    ups = channel.db_to_linear(snr_db)
    ups = np.atleast_1d(ups)
    per = np.column_stack([channel.packet_error_rate(ups, per_cfg, packet_bits=n)
                           for n in sem_cfg.level_bits])
    v = (1.0 - per) * np.asarray(info_degree)[None, :]
    q = sem_cfg.alpha_scale * eps0 * v / sem_cfg.payload_l
    return QTable(snr_db=snr_db, per=per, q=q, info_degree=np.asarray(info_degree), eps0=eps0)


# -- image export ------------------------------------------------------------

def write_pgm(path: str | Path, image: np.ndarray, maxval: int = 255) -> None:
    """Binary (P5) portable greymap of an image with values in [0, 1]."""
    data = np.clip(np.rint(np.asarray(image, dtype=float) * maxval), 0, maxval).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    data = np.frombuffer(raw[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)
    return data.astype(float) / maxval


def export_scene(scene: Scene, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>.pgm`` (image) and ``<stem>.mask.pgm`` (mask as 0/255)."""
    stem = Path(stem)
    img_path = stem.with_suffix(".pgm")
    mask_path = stem.with_suffix(".mask.pgm")
    write_pgm(img_path, scene.image)
    write_pgm(mask_path, scene.mask.astype(float))
    return img_path, mask_path
