"""Comparison schemes: fully-digital beamforming with optimized or random RIS,
and hybrid beamforming with a random RIS."""

from __future__ import annotations

import enum
import time

import numpy as np

from .manifold import ManifoldSpec, rcg_minimize
from .model import ChannelSet, RisPhases, ScenarioConfig, combined_channels, evaluate_design
from .solver import (
    RHO_INIT,
    PenaltySpec,
    _CachedOracle,
    _ref_values,
    admm_solve,
    blocks_cost_grad,
    penalty_update,
    ris_oracle,
    sensing_rows,
)


class SchemeId(str, enum.Enum):
    PROPOSED = "proposed"
    FDB_RIS = "fdb_ris"
    FDB_RND_RIS = "fdb_rnd_ris"
    HB_RND_RIS = "hb_rnd_ris"

    def __str__(self) -> str:
        return self.value


ALL_SCHEMES = tuple(SchemeId)


def random_ris(r: int, seed: int) -> RisPhases:
    """I.i.d. uniform phase shifts on [0, 2 pi)."""
    if r < 1:
        raise ValueError("r must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x215]))
    return RisPhases.from_angles(rng.uniform(0.0, 2 * np.pi, r))


def fdb_cost_oracle(ch, ris, ref, config: ScenarioConfig, rho2: float):
    """Sensing SSE plus SINR penalty over per-subcarrier digital precoders (N_c, N_t, K)."""
    x_rows = sensing_rows(ch, ris, config.angle_grid)
    htil = combined_channels(ch, ris)
    pen = PenaltySpec.from_config(config)
    return _CachedOracle(lambda w, g: blocks_cost_grad(w, x_rows, ref, htil, pen, rho2, g))


def solve_fdb(config: ScenarioConfig, ch: ChannelSet, ref_bp, optimize_ris: bool, seed: int):
    """Alternate RCG over the digital precoders and (optionally) the RIS phases.

    The stacked precoders live on the power sphere of radius ``sqrt(p_max)``.
    Without RIS optimization the phases are ``random_ris(R, seed)`` throughout.
    Returns ``(blocks, ris, metrics)``.
    """
    t0 = time.perf_counter()
    ref = _ref_values(ref_bp)
    nc, nt, k = config.n_sc, config.n_tx, config.n_users
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0xFDB]))
    sphere = ManifoldSpec.power_sphere(np.sqrt(config.p_max), (nc, nt, k))
    circle = ManifoldSpec.complex_circle((config.n_ris,))
    blocks = sphere.random_point(rng)
    ris = random_ris(config.n_ris, seed)
    if optimize_ris:
        ris = RisPhases(circle.random_point(rng))
    rho2 = rho3 = RHO_INIT
    prev = None
    it = 0
    for it in range(1, config.admm_max_iters + 1):
        res = rcg_minimize(fdb_cost_oracle(ch, ris, ref, config, rho2), sphere, blocks, config.rcg)
        blocks = res.point
        if optimize_ris:
            v_or = ris_oracle(ch, blocks, ref, config.angle_grid, rho3, PenaltySpec.from_config(config))
            ris = RisPhases(rcg_minimize(v_or, circle, ris.v, config.rcg).point)
        cost = fdb_cost_oracle(ch, ris, ref, config, rho2).cost(blocks)
        converged = (
            prev is not None and rho2 >= 1000.0 and abs(prev - cost) <= 1e-4 * max(abs(cost), 1e-300)
        )
        prev = cost
        rho2, rho3 = penalty_update(rho2), penalty_update(rho3)
        if converged:
            break
    metrics = evaluate_design(config, ch, ref, blocks, ris)
    metrics["iterations"] = it
    metrics["runtime"] = time.perf_counter() - t0
    return blocks, ris, metrics


def run_scheme(scheme, config: ScenarioConfig, ch: ChannelSet, ref_bp, seed: int) -> dict:
    """Dispatch one scheme on a shared channel realization and reference pattern."""
    scheme = SchemeId(scheme)
    if scheme is SchemeId.PROPOSED:
        _, metrics = admm_solve(config, ch, ref_bp, seed)
    elif scheme is SchemeId.HB_RND_RIS:
        frozen = random_ris(config.n_ris, seed)
        _, metrics = admm_solve(config, ch, ref_bp, seed, optimize_ris=False, ris_init=frozen)
    else:
        _, _, metrics = solve_fdb(config, ch, ref_bp, scheme is SchemeId.FDB_RIS, seed)
    return metrics
