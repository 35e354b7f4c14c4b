"""Reference beampattern: ideal main-lobe mask and its least-squares scale fit."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .manifold import ManifoldSpec, rcg_minimize
from .model import ChannelSet, RisPhases, ScenarioConfig, beampattern_grid, main_lobe_mask
from .solver import _CachedOracle, blocks_cost_grad, ris_oracle, sensing_rows


@dataclass(frozen=True)
class ReferenceBeampattern:
    values: np.ndarray  # (N_psi, N_c)
    scale: float
    mask: np.ndarray  # (N_psi,) of 0/1

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("reference scale must be nonnegative")


def ideal_pattern(targets, halfwidth: float, grid) -> np.ndarray:
    """1 within ``halfwidth`` degrees of any target, 0 elsewhere."""
    return main_lobe_mask(grid, targets, halfwidth).astype(float)


def fit_scale(bp: np.ndarray, mask: np.ndarray) -> float:
    """Least-squares ``beta`` minimizing ``sum_{psi,n} (BP_n(psi) - beta d(psi))^2``, clamped at 0."""
    bp = np.asarray(bp, dtype=float)
    den = bp.shape[1] * float(np.sum(mask**2))
    if den == 0:
        raise ValueError("ideal pattern is identically zero")
    return max(float(mask @ bp.sum(axis=1)) / den, 0.0)


def design_reference(config: ScenarioConfig, ch: ChannelSet, seed: int) -> ReferenceBeampattern:
    """Fit the reference pattern with all transmit power devoted to sensing.

    Alternates, for ``config.ref_rounds`` rounds: RCG over per-subcarrier
    sensing covariances factors (N_t x N_t blocks, total power ``p_max``),
    RCG over the RIS phases, and the closed-form scale. The covariance factor
    is square so the fit does not depend on the number of users.
    """
    mask = ideal_pattern(config.target_angles, config.lobe_halfwidth, config.angle_grid)
    if not mask.any():
        raise ValueError("ideal pattern is identically zero")
    nc, nt = config.n_sc, config.n_tx
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x5E5]))
    sphere = ManifoldSpec.power_sphere(np.sqrt(config.p_max), (nc, nt, nt))
    circle = ManifoldSpec.complex_circle((config.n_ris,))
    blocks = sphere.random_point(rng)
    ris = RisPhases(circle.random_point(rng))

    beta = fit_scale(beampattern_grid(ch, ris, blocks, config.angle_grid), mask)
    for _ in range(config.ref_rounds):
        target = np.outer(mask, np.full(nc, beta))
        x_rows = sensing_rows(ch, ris, config.angle_grid)
        oracle = _CachedOracle(
            lambda w, g: blocks_cost_grad(w, x_rows, target, None, None, 0.0, g)
        )
        blocks = rcg_minimize(oracle, sphere, blocks, config.rcg).point
        v_oracle = ris_oracle(ch, blocks, target, config.angle_grid)
        ris = RisPhases(rcg_minimize(v_oracle, circle, ris.v, config.rcg).point)
        beta = fit_scale(beampattern_grid(ch, ris, blocks, config.angle_grid), mask)
    values = np.outer(mask, np.full(nc, beta))
    return ReferenceBeampattern(values=values, scale=beta, mask=mask)


def dump_csv(ref: ReferenceBeampattern, grid, path) -> None:
    """Write ``angle_deg, ref_sc0, ref_sc1, ...`` rows."""
    nc = ref.values.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg"] + [f"ref_sc{n}" for n in range(nc)])
        for ang, row in zip(grid, ref.values):
            w.writerow([f"{ang:.9g}"] + [f"{x:.9g}" for x in row])
