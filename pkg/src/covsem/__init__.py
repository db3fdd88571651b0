"""Covert semantic communication contracts for UAV networks.

Submodules: ``channel`` (air-to-ground link, PER, warden detection),
``semantics`` (abstraction levels, SSIM, covert semantic density),
``contract`` (menus, feasibility, oracles), ``environment`` (single-step MDP),
``neural`` (tape autodiff, MLPs, Adam), ``rdsac`` (diffusion-policy SAC and a
Gaussian SAC baseline), ``config`` and ``cli``.
"""

__version__ = "0.1.0"
