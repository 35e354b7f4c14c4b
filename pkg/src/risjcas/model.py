"""System model for RIS-assisted mmWave OFDM joint communication and sensing.

Conventions used throughout the package:

* subcarriers are indexed ``n = 0 .. N_c - 1``;
* per-subcarrier channels are stacked along a leading axis, e.g.
  ``h_bs_ue`` has shape ``(N_c, N_t, K)``;
* ``h_bs_ris[n]`` is the ``N_t x R`` matrix ``H_br,n``, so the physical
  BS-to-RIS propagation matrix is its conjugate transpose;
* the RIS phase vector ``v`` holds ``e^{-j theta_r}`` and the reflection
  matrix is ``Theta = diag(conj(v))``. With this choice the reflected term
  ``h_ru^H Theta H_br^H w`` equals ``v^H a`` with
  ``a = diag(h_ru^H) H_br^H w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .manifold import RcgSettings

__all__ = [
    "ScenarioConfig",
    "ChannelSet",
    "RisPhases",
    "HybridBeamformer",
    "EffectivePrecoder",
    "dbm_to_watts",
    "db_to_linear",
    "linear_to_db",
    "dft_matrix",
    "bs_steering",
    "ris_steering",
    "ris_steering_matrix",
    "sample_channels",
    "combined_channel",
    "combined_channels",
    "sinr",
    "sinr_matrix",
    "beampattern",
    "beampattern_grid",
    "beampattern_mse",
    "pslr",
    "feasibility_ratio",
    "total_power",
]


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class ScenarioConfig:
    """Dimensions, power budget, thresholds and solver settings of one scenario.

    Powers are stored in watts and thresholds in linear scale; use
    :meth:`build` to construct from the usual dBm / dB quantities.
    ``subcarrier_spacing`` and ``symbol_length`` are carried as metadata only.
    """

    n_tx: int
    n_rf: int
    n_sc: int
    n_users: int
    n_ris: int
    target_angles: tuple[float, ...]
    p_max: float
    sinr_threshold: np.ndarray
    noise_var: float
    angle_grid: np.ndarray
    lobe_halfwidth: float = 6.0
    n_clusters: int = 4
    n_paths: int = 5
    rcg: RcgSettings = field(default_factory=RcgSettings)
    admm_max_iters: int = 30
    admm_tol: float = 1e-2
    base_seed: int = 0
    ref_rounds: int = 5
    # large-scale power gains of the three links, in dB
    gain_bs_ue_db: float = 0.0
    gain_bs_ris_db: float = 0.0
    gain_ris_ue_db: float = 0.0
    # SINR penalty: "absolute" squares the raw linearized margin; "relative"
    # divides it by sigma^2 Gamma first and weights the square by penalty_scale
    penalty_form: str = "relative"
    penalty_scale: float = 1e-2
    # the optimizers aim at Gamma * 10^(margin/10); metrics use Gamma itself
    sinr_margin_db: float = 1.0
    subcarrier_spacing: float = 120e3
    symbol_length: int = 1

    def __post_init__(self):
        thr = np.array(self.sinr_threshold, dtype=float)
        if thr.ndim == 0:
            thr = np.full((self.n_users, self.n_sc), float(thr))
        grid = np.array(self.angle_grid, dtype=float)
        object.__setattr__(self, "sinr_threshold", thr)
        object.__setattr__(self, "angle_grid", grid)
        object.__setattr__(self, "target_angles", tuple(float(a) for a in self.target_angles))
        self.validate()

    def validate(self) -> None:
        if min(self.n_tx, self.n_rf, self.n_sc, self.n_users, self.n_ris) < 1:
            raise ValueError("all dimensions must be positive")
        if self.n_rf > self.n_tx:
            raise ValueError(f"n_rf={self.n_rf} exceeds n_tx={self.n_tx}")
        if not self.p_max > 0 or not self.noise_var > 0:
            raise ValueError("p_max and noise_var must be positive")
        if self.sinr_threshold.shape != (self.n_users, self.n_sc):
            raise ValueError(
                f"sinr_threshold shape {self.sinr_threshold.shape} != {(self.n_users, self.n_sc)}"
            )
        if np.any(self.sinr_threshold <= 0):
            raise ValueError("SINR thresholds must be positive")
        grid = self.angle_grid
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("angle_grid must be strictly increasing with at least 2 points")
        if grid[0] < -90.0 or grid[-1] > 90.0:
            raise ValueError("angle_grid must lie within [-90, 90] degrees")
        if not self.target_angles:
            raise ValueError("at least one target angle is required")
        if any(a < grid[0] or a > grid[-1] for a in self.target_angles):
            raise ValueError("target angles must lie within the angle grid")
        if self.lobe_halfwidth < 0:
            raise ValueError("lobe_halfwidth must be nonnegative")
        if self.n_clusters < 1 or self.n_paths < 1:
            raise ValueError("n_clusters and n_paths must be positive")
        if self.penalty_form not in ("absolute", "relative"):
            raise ValueError(f"unknown penalty_form {self.penalty_form!r}")
        if not self.penalty_scale > 0:
            raise ValueError("penalty_scale must be positive")
        if self.sinr_margin_db < 0:
            raise ValueError("sinr_margin_db must be nonnegative")
        if self.admm_max_iters < 1:
            raise ValueError("admm_max_iters must be >= 1")

    @classmethod
    def build(
        cls,
        *,
        n_tx: int,
        n_rf: int,
        n_sc: int,
        n_users: int,
        n_ris: int,
        target_angles=(-50.0, 0.0, 50.0),
        p_max_dbm: float = 30.0,
        snr_db: float = 25.0,
        gamma_db=10.0,
        n_angles: int = 181,
        **kwargs,
    ) -> "ScenarioConfig":
        """Construct from dBm/dB inputs; noise power is ``P_max / 10^(SNR/10)``."""
        p_max = dbm_to_watts(p_max_dbm)
        noise_var = p_max / 10.0 ** (snr_db / 10.0)
        gamma = np.broadcast_to(db_to_linear(gamma_db), (n_users, n_sc)).copy()
        grid = np.linspace(-90.0, 90.0, n_angles)
        return cls(
            n_tx=n_tx,
            n_rf=n_rf,
            n_sc=n_sc,
            n_users=n_users,
            n_ris=n_ris,
            target_angles=tuple(target_angles),
            p_max=p_max,
            sinr_threshold=gamma,
            noise_var=noise_var,
            angle_grid=grid,
            **kwargs,
        )

    def replace(self, **changes) -> "ScenarioConfig":
        """``dataclasses.replace`` that keeps the threshold matrix in step with ``n_users``/``n_sc``."""
        if ("n_users" in changes or "n_sc" in changes) and "sinr_threshold" not in changes:
            k = changes.get("n_users", self.n_users)
            n = changes.get("n_sc", self.n_sc)
            changes["sinr_threshold"] = np.full((k, n), float(self.sinr_threshold.flat[0]))
        return replace(self, **changes)

    @property
    def design_threshold(self) -> np.ndarray:
        """SINR thresholds the optimizers aim at: ``Gamma`` raised by the design margin."""
        return self.sinr_threshold * 10.0 ** (self.sinr_margin_db / 10.0)

    @property
    def snr_db(self) -> float:
        return float(linear_to_db(self.p_max / self.noise_var))

    @property
    def gamma_db(self) -> float:
        return float(linear_to_db(np.mean(self.sinr_threshold)))

    @property
    def n_angles(self) -> int:
        return int(self.angle_grid.size)


@dataclass(frozen=True)
class ChannelSet:
    """Per-subcarrier channels of one realization.

    ``h_bs_ue``: (N_c, N_t, K); ``h_bs_ris``: (N_c, N_t, R); ``h_ris_ue``: (N_c, R, K).
    """

    h_bs_ue: np.ndarray
    h_bs_ris: np.ndarray
    h_ris_ue: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        nc, nt, k = self.h_bs_ue.shape
        if self.h_bs_ris.shape[:2] != (nc, nt):
            raise ValueError("h_bs_ris shape inconsistent with h_bs_ue")
        r = self.h_bs_ris.shape[2]
        if self.h_ris_ue.shape != (nc, r, k):
            raise ValueError("h_ris_ue shape inconsistent")
        for a in (self.h_bs_ue, self.h_bs_ris, self.h_ris_ue):
            if not np.all(np.isfinite(a)):
                raise ValueError("channel entries must be finite")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(N_c, N_t, K, R)"""
        nc, nt, k = self.h_bs_ue.shape
        return nc, nt, k, self.h_bs_ris.shape[2]

    def ris_to_bs(self) -> np.ndarray:
        """``H_br,n^H`` for all n, shape (N_c, R, N_t)."""
        return np.conj(np.swapaxes(self.h_bs_ris, 1, 2))

    def equals(self, other: "ChannelSet") -> bool:
        return (
            np.array_equal(self.h_bs_ue, other.h_bs_ue)
            and np.array_equal(self.h_bs_ris, other.h_bs_ris)
            and np.array_equal(self.h_ris_ue, other.h_ris_ue)
        )


@dataclass(frozen=True)
class RisPhases:
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=complex).ravel()
        if np.any(np.abs(np.abs(v) - 1.0) > 1e-9):
            raise ValueError("RIS phases must have unit modulus")
        object.__setattr__(self, "v", v)

    @classmethod
    def from_angles(cls, theta) -> "RisPhases":
        return cls(np.exp(-1j * np.asarray(theta, dtype=float)))

    @property
    def theta(self) -> np.ndarray:
        """Phase shifts in [0, 2*pi)."""
        return np.mod(-np.angle(self.v), 2 * np.pi)

    @property
    def n(self) -> int:
        return self.v.size

    def diag(self) -> np.ndarray:
        """Reflection matrix ``Theta = diag(e^{j theta})``."""
        return np.diag(np.conj(self.v))

    def block_diag(self, n_sc: int) -> np.ndarray:
        return np.kron(np.eye(n_sc), self.diag())


@dataclass(frozen=True)
class HybridBeamformer:
    """Frequency-flat unit-modulus RF precoder plus per-subcarrier baseband precoders."""

    rf: np.ndarray  # (N_t, N_RF)
    bb: np.ndarray  # (N_c, N_RF, K)

    def __post_init__(self):
        if np.any(np.abs(np.abs(self.rf) - 1.0) > 1e-9):
            raise ValueError("RF precoder entries must have unit modulus")
        if self.bb.ndim != 3 or self.bb.shape[1] != self.rf.shape[1]:
            raise ValueError("baseband shape inconsistent with RF precoder")

    def product(self) -> np.ndarray:
        """Full ``W^RF (F^H kron I) W^BB`` of shape (N_c N_t, N_c K)."""
        return hybrid_product(self.rf, self.bb)

    def effective(self) -> "EffectivePrecoder":
        return EffectivePrecoder(self.product(), n_sc=self.bb.shape[0])


def hybrid_product(rf: np.ndarray, bb: np.ndarray) -> np.ndarray:
    # block (n, m) = conj(F[m, n]) * rf @ bb[m]
    nc, _, k = bb.shape
    fh = dft_matrix(nc).conj().T
    per_sc = rf @ bb  # (N_c, N_t, K)
    full = np.einsum("nm,mik->nimk", fh, per_sc)
    return full.reshape(nc * rf.shape[0], nc * k)


class EffectivePrecoder:
    """Full precoding matrix ``W`` (N_c N_t x N_c K) with diagonal-block access.

    The per-(user, subcarrier) precoding vector ``w_{k,n}`` is column ``k`` of
    the ``(n, n)`` diagonal block.
    """

    def __init__(self, full: np.ndarray, n_sc: int):
        full = np.asarray(full, dtype=complex)
        rows, cols = full.shape
        if rows % n_sc or cols % n_sc:
            raise ValueError("full precoder shape not divisible by n_sc")
        self.full = full
        self.n_sc = n_sc
        self.n_tx = rows // n_sc
        self.n_users = cols // n_sc

    @classmethod
    def from_blocks(cls, blocks: np.ndarray) -> "EffectivePrecoder":
        nc, nt, k = blocks.shape
        full = np.zeros((nc * nt, nc * k), dtype=complex)
        for n in range(nc):
            full[n * nt:(n + 1) * nt, n * k:(n + 1) * k] = blocks[n]
        return cls(full, nc)

    @property
    def blocks(self) -> np.ndarray:
        """Diagonal blocks, shape (N_c, N_t, K)."""
        return diag_blocks(self.full, self.n_sc)

    def block(self, n: int) -> np.ndarray:
        nt, k = self.n_tx, self.n_users
        return self.full[n * nt:(n + 1) * nt, n * k:(n + 1) * k]

    def column(self, k: int, n: int) -> np.ndarray:
        return self.block(n)[:, k]


def diag_blocks(full: np.ndarray, n_sc: int) -> np.ndarray:
    rows, cols = full.shape
    nt, k = rows // n_sc, cols // n_sc
    four = full.reshape(n_sc, nt, n_sc, k)
    idx = np.arange(n_sc)
    return four[idx, :, idx, :]


def dft_matrix(n_sc: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(-j 2 pi n n' / N) / sqrt(N)``."""
    if n_sc < 1:
        raise ValueError("n_sc must be >= 1")
    idx = np.arange(n_sc)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n_sc) / np.sqrt(n_sc)


def bs_steering(angle, n: int) -> np.ndarray:
    """Half-wavelength ULA response, normalized to unit norm."""
    return ris_steering(angle, n) / np.sqrt(n)


def ris_steering(angle, r: int) -> np.ndarray:
    """Unnormalized half-wavelength ULA response ``exp(j pi m sin(angle))``."""
    phase = np.pi * np.sin(np.deg2rad(angle))
    return np.exp(1j * phase * np.arange(r))


def ris_steering_matrix(angles, r: int) -> np.ndarray:
    """Rows are ``ris_steering(angle, r)`` for each angle, shape (N_psi, R)."""
    phase = np.pi * np.sin(np.deg2rad(np.asarray(angles, dtype=float)))
    return np.exp(1j * np.outer(phase, np.arange(r)))


def _cn(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def _sv_link(rng, n_sc, n_cl, n_p, n_out, n_in, n_links):
    """Saleh-Valenzuela draws for ``n_links`` independent links.

    Returns an array (n_links, N_c, n_out, n_in) of matrices
    ``sum alpha a_out(phi_out) a_in(phi_in)^H e^{-j 2 pi psi_c n / N_c}``
    (without the leading scale factor). A vector link uses ``n_out = 1``.
    """
    alpha = _cn(rng, (n_links, n_cl, n_p))
    phi_out = rng.uniform(-90.0, 90.0, (n_links, n_cl, n_p))
    phi_in = rng.uniform(-90.0, 90.0, (n_links, n_cl, n_p))
    delay = rng.integers(0, n_sc, (n_links, n_cl))
    a_out = bs_steering(phi_out[..., None], n_out)  # (L, cl, p, n_out)
    a_in = bs_steering(phi_in[..., None], n_in)
    n = np.arange(n_sc)
    ramp = np.exp(-2j * np.pi * delay[..., None] * n / n_sc)  # (L, cl, N_c)
    return np.einsum("lcp,lcpo,lcpi,lcn->lnoi", alpha, a_out, np.conj(a_in), ramp)


def sample_channels(config: ScenarioConfig, seed: int) -> ChannelSet:
    """Draw one extended Saleh-Valenzuela realization for all subcarriers.

    Each link type uses its own child stream of ``seed`` so that, for a fixed
    seed, the BS-RIS channel does not depend on the number of users.
    Path gains are circular complex normal with unit variance, angles are
    uniform on [-90, 90] degrees and cluster delays uniform on {0..N_c-1}.
    """
    nt, r, k, nc = config.n_tx, config.n_ris, config.n_users, config.n_sc
    ncl, npth = config.n_clusters, config.n_paths
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1))
    rng_br, rng_bu, rng_ru = (np.random.default_rng(s) for s in ss.spawn(3))

    gbu = np.sqrt(db_to_linear(config.gain_bs_ue_db))
    gbr = np.sqrt(db_to_linear(config.gain_bs_ris_db))
    gru = np.sqrt(db_to_linear(config.gain_ris_ue_db))

    # row channel h_bu,kn^H = c * sum alpha a_b(phi)^H e^{...}; stored as a column
    rows = _sv_link(rng_bu, nc, ncl, npth, 1, nt, k)[:, :, 0, :]  # (K, N_c, N_t)
    h_bu = gbu * np.sqrt(nt / (ncl * npth)) * np.conj(rows).transpose(1, 2, 0)

    # H_br,n^H = c * sum alpha a_r(phi_r) a_b(phi_b)^H e^{...}  (R x N_t)
    g = _sv_link(rng_br, nc, ncl, npth, r, nt, 1)[0]  # (N_c, R, N_t)
    h_br = gbr * np.sqrt(nt * r / (ncl * npth)) * np.conj(np.swapaxes(g, 1, 2))

    rows = _sv_link(rng_ru, nc, ncl, npth, 1, r, k)[:, :, 0, :]  # (K, N_c, R)
    h_ru = gru * np.sqrt(r / (ncl * npth)) * np.conj(rows).transpose(1, 2, 0)

    return ChannelSet(h_bs_ue=h_bu, h_bs_ris=h_br, h_ris_ue=h_ru, seed=int(seed))


def combined_channels(ch: ChannelSet, ris: RisPhases) -> np.ndarray:
    """All combined channels ``h~_{k,n}``, shape (N_c, N_t, K)."""
    return ch.h_bs_ue + ch.h_bs_ris @ (ris.v[None, :, None] * ch.h_ris_ue)


def combined_channel(ch: ChannelSet, ris: RisPhases, k: int, n: int) -> np.ndarray:
    """``h~_{k,n}`` with ``h~^H = h_bu^H + h_ru^H Theta H_br^H``."""
    nc, _, kk, _ = ch.dims
    if not (0 <= k < kk and 0 <= n < nc):
        raise IndexError(f"user {k} / subcarrier {n} out of range")
    return ch.h_bs_ue[n, :, k] + ch.h_bs_ris[n] @ (ris.v * ch.h_ris_ue[n, :, k])


def sinr_matrix(ch: ChannelSet, ris: RisPhases, blocks: np.ndarray, noise_var: float) -> np.ndarray:
    """SINR of every (user, subcarrier), shape (K, N_c), from diagonal blocks (N_c, N_t, K)."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    htil = combined_channels(ch, ris)
    gains = np.abs(np.einsum("nik,nij->nkj", np.conj(htil), blocks)) ** 2  # (N_c, K, K)
    sig = np.einsum("nkk->nk", gains)
    interf = gains.sum(axis=2) - sig
    return (sig / (interf + noise_var)).T


def sinr(ch: ChannelSet, ris: RisPhases, prec: EffectivePrecoder, noise_var: float, k: int, n: int) -> float:
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    h = combined_channel(ch, ris, k, n)
    wn = prec.block(n)
    g = np.abs(np.conj(h) @ wn) ** 2
    return float(g[k] / (g.sum() - g[k] + noise_var))


def beampattern_grid(ch: ChannelSet, ris: RisPhases, blocks: np.ndarray, angles) -> np.ndarray:
    """``BP_n(psi)`` for every grid angle and subcarrier, shape (N_psi, N_c)."""
    a = ris_steering_matrix(angles, ch.dims[3])
    rows = np.conj(a) * np.conj(ris.v)[None, :]  # v^H diag(a^H)
    proj = np.einsum("pr,nrt,ntk->pnk", rows, ch.ris_to_bs(), blocks)
    return np.sum(np.abs(proj) ** 2, axis=2)


def beampattern(ch: ChannelSet, ris: RisPhases, prec: EffectivePrecoder, angle: float):
    """Per-subcarrier beampattern toward ``angle`` and its sum over subcarriers."""
    per_sc = beampattern_grid(ch, ris, prec.blocks, [angle])[0]
    return per_sc, float(per_sc.sum())


def beampattern_mse(designed, reference) -> tuple[float, float]:
    """Mean squared beampattern error over (angle, subcarrier); returns (linear, dB)."""
    designed = np.asarray(designed, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if designed.shape != reference.shape:
        raise ValueError(f"shape mismatch {designed.shape} vs {reference.shape}")
    lin = float(np.mean((designed - reference) ** 2))
    with np.errstate(divide="ignore"):
        return lin, float(10.0 * np.log10(lin))


def main_lobe_mask(grid, targets, halfwidth: float) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.size == 0:
        raise ValueError("at least one target angle is required")
    return np.any(np.abs(grid[:, None] - targets[None, :]) <= halfwidth + 1e-9, axis=1)


def pslr(pattern, grid, targets, halfwidth: float) -> float:
    """Peak-to-side-lobe ratio in dB of a pattern sampled on ``grid``."""
    pattern = np.asarray(pattern, dtype=float)
    mask = main_lobe_mask(grid, targets, halfwidth)
    if mask.all() or not mask.any():
        raise ValueError("grid has no points in one of the main-lobe / side-lobe regions")
    if not np.any(pattern > 0):
        raise ValueError("all-zero pattern")
    main = pattern[mask].max()
    side = pattern[~mask].max()
    if side <= 0:
        return float("inf")
    return float(10.0 * np.log10(main / side))


def feasibility_ratio(sinrs, thresholds) -> float:
    sinrs = np.asarray(sinrs, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    if sinrs.shape != thresholds.shape:
        raise ValueError(f"shape mismatch {sinrs.shape} vs {thresholds.shape}")
    return float(np.mean(sinrs >= thresholds))


def total_power(bf: HybridBeamformer) -> float:
    """``||W^RF (F^H kron I) W^BB||_F^2``."""
    return float(np.linalg.norm(bf.product()) ** 2)


def total_power_per_subcarrier(bf: HybridBeamformer) -> float:
    return float(np.sum(np.abs(bf.rf @ bf.bb) ** 2))


def evaluate_design(config: ScenarioConfig, ch: ChannelSet, ref, blocks: np.ndarray, ris: RisPhases) -> dict:
    """Reported metrics of a design given its per-subcarrier precoders (N_c, N_t, K)."""
    ref = np.asarray(getattr(ref, "values", ref), dtype=float)
    bp = beampattern_grid(ch, ris, blocks, config.angle_grid)
    _, mse_db = beampattern_mse(bp, ref)
    gam = sinr_matrix(ch, ris, blocks, config.noise_var)
    return {
        "bp_mse_db": mse_db,
        "pslr_db": pslr(bp.sum(axis=1), config.angle_grid, config.target_angles, config.lobe_halfwidth),
        "feasibility": feasibility_ratio(gam, config.sinr_threshold),
        "avg_sinr_db": float(linear_to_db(np.mean(gam))),
        "beampattern": bp,
        "sinr": gam,
    }
