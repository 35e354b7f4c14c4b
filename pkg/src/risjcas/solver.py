"""Manifold-based ADMM for joint hybrid beamforming and RIS phase design.

The auxiliary precoder ``W`` (N_c N_t x N_c K) is coupled to the hybrid
product ``W^RF (F^H kron I) W^BB`` through an augmented Lagrangian. Each ADMM
iteration updates, in order: W (RCG on the power sphere), the RF precoder
(RCG on the complex circle), the baseband precoders (closed form), the RIS
phases (RCG on the complex circle), the dual matrix, and the penalty weights.
SINR constraints enter every subproblem as squared hinge penalties on the
linearized margin ``gamma' - sigma^2 Gamma`` (see :class:`PenaltySpec`).

All gradients use the convention ``df/dRe + j df/dIm``; with it the analytic
expressions carry no extra scale factor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .manifold import CostOracle, ManifoldSpec, RcgResult, rcg_minimize
from .model import (
    ChannelSet,
    EffectivePrecoder,
    HybridBeamformer,
    RisPhases,
    ScenarioConfig,
    combined_channels,
    diag_blocks,
    evaluate_design,
    feasibility_ratio,
    sinr_matrix,
    dft_matrix,
    hybrid_product,
    ris_steering_matrix,
)

__all__ = [
    "SolverState",
    "PenaltyTerms",
    "IterRecord",
    "gamma_prime",
    "penalty_terms",
    "penalty_weight",
    "PenaltySpec",
    "PENALTY_FORMS",
    "sensing_rows",
    "blocks_cost_grad",
    "cost_grad_w",
    "cost_grad_wrf",
    "cost_grad_v",
    "ris_oracle",
    "sensing_sse",
    "normalized_hybrid",
    "coupling_target",
    "coupling_blocks",
    "update_wbb",
    "dual_update",
    "penalty_update",
    "primal_residual",
    "initial_state",
    "admm_solve",
]

RHO_INIT = 0.1
RHO_CAP = 1000.0
COND_LIMIT = 1e12


@dataclass
class IterRecord:
    iteration: int
    objective: float  # sensing SSE of the hybrid precoder against the reference
    aux_objective: float  # sensing SSE of the auxiliary W
    lagrangian: float  # W-subproblem cost at the end of the iteration
    residual: float  # ||W - W^RF (F^H kron I) W^BB||_F
    rel_residual: float
    feasibility: float
    rho1: float
    rho2: float
    rho3: float


@dataclass
class SolverState:
    w_aux: np.ndarray
    bf: HybridBeamformer
    ris: RisPhases
    dual: np.ndarray
    rho1: float = RHO_INIT
    rho2: float = RHO_INIT
    rho3: float = RHO_INIT
    iter: int = 0
    history: list[IterRecord] = field(default_factory=list)
    traces: list[tuple[str, RcgResult]] = field(default_factory=list)

    @property
    def n_sc(self) -> int:
        return self.bf.bb.shape[0]

    def product(self) -> np.ndarray:
        return self.bf.product()


@dataclass
class PenaltyTerms:
    """Linearized SINR margins of one precoder, all arrays shaped (N_c, K)."""

    gamma_prime: np.ndarray
    violation: np.ndarray  # min(gamma' - sigma^2 Gamma, 0)
    penalty: np.ndarray  # weight * violation ** 2
    gains: np.ndarray  # (N_c, K, K): h~_k^H w_i
    weight: np.ndarray | float = 1.0  # per-(n, k) penalty weight


PENALTY_FORMS = ("absolute", "relative")


def penalty_weight(g: np.ndarray, noise_var: float, form: str = "absolute", scale: float = 1.0):
    """Per-(n, k) multiplier of the squared violation.

    ``absolute`` penalizes the raw margin; ``relative`` divides the margin by
    ``sigma^2 Gamma`` (so the penalty does not depend on the power unit) and
    multiplies by ``scale``. Both vanish on exactly the same set.
    """
    if form == "absolute":
        return 1.0
    if form == "relative":
        return scale / (noise_var * g) ** 2
    raise ValueError(f"unknown penalty form {form!r}")


def gamma_prime(htil: np.ndarray, blocks: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """``(1+G) |h~_k^H w_k|^2 - G sum_i |h~_k^H w_i|^2`` for all (n, k).

    ``htil`` and ``blocks`` are (N_c, N_t, K); ``gamma`` is (K, N_c).
    """
    s = np.einsum("ntk,nti->nki", np.conj(htil), blocks)
    return _gamma_prime_from_gains(s, gamma.T)


def _gamma_prime_from_gains(s: np.ndarray, g: np.ndarray) -> np.ndarray:
    p = np.abs(s) ** 2
    own = np.einsum("nkk->nk", p)
    return (1.0 + g) * own - g * p.sum(axis=2)


def penalty_terms(
    htil: np.ndarray,
    blocks: np.ndarray,
    gamma: np.ndarray,
    noise_var: float,
    form: str = "absolute",
    scale: float = 1.0,
) -> PenaltyTerms:
    s = np.einsum("ntk,nti->nki", np.conj(htil), blocks)
    g = gamma.T
    gp = _gamma_prime_from_gains(s, g)
    viol = np.minimum(gp - noise_var * g, 0.0)
    wt = penalty_weight(g, noise_var, form, scale)
    return PenaltyTerms(gamma_prime=gp, violation=viol, penalty=wt * viol**2, gains=s, weight=wt)


@dataclass(frozen=True)
class PenaltySpec:
    """Thresholds (K, N_c), noise power and weighting of the SINR penalty."""

    gamma: np.ndarray
    noise_var: float
    form: str = "absolute"
    scale: float = 1.0

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "PenaltySpec":
        """Design thresholds of ``config`` (the evaluation thresholds plus the design margin)."""
        return cls(config.design_threshold, config.noise_var, config.penalty_form, config.penalty_scale)

    def terms(self, htil: np.ndarray, blocks: np.ndarray) -> PenaltyTerms:
        return penalty_terms(htil, blocks, self.gamma, self.noise_var, self.form, self.scale)

    def weight(self):
        return penalty_weight(self.gamma.T, self.noise_var, self.form, self.scale)


def _penalty_row_weights(terms: PenaltyTerms, g: np.ndarray) -> np.ndarray:
    """``4 m_k ((1+G_k) delta_ki - G_k) S_ki``, shape (N_c, K, K)."""
    k = g.shape[1]
    coef = -g[:, :, None] * np.ones((1, 1, k)) + (1.0 + g)[:, :, None] * np.eye(k)[None]
    m = terms.violation * terms.weight
    return 4.0 * m[:, :, None] * coef * terms.gains


def sensing_rows(ch: ChannelSet, ris: RisPhases, angles) -> np.ndarray:
    """Rows ``x_{psi,n} = v^H diag(a^H(psi)) H_br,n^H``, shape (N_c, N_psi, N_t)."""
    a = ris_steering_matrix(angles, ch.dims[3])
    left = np.conj(a) * np.conj(ris.v)[None, :]
    return np.einsum("pr,nrt->npt", left, ch.ris_to_bs())


def blocks_cost_grad(
    blocks: np.ndarray,
    x_rows: np.ndarray,
    ref: np.ndarray,
    htil: np.ndarray | None,
    pen: PenaltySpec | None,
    rho_pen: float,
    want_grad: bool = True,
):
    """Sensing SSE plus weighted SINR penalty over diagonal blocks (N_c, N_t, K).

    ``ref`` is (N_psi, N_c). With ``rho_pen == 0`` the user channels and the
    penalty spec are not touched. Returns ``cost`` or ``(cost, grad)``.
    """
    y = x_rows @ blocks  # (N_c, N_psi, K)
    err = np.sum(np.abs(y) ** 2, axis=2) - ref.T
    cost = float(np.sum(err**2))
    terms = None
    if rho_pen > 0:
        terms = pen.terms(htil, blocks)
        cost += rho_pen * float(terms.penalty.sum())
    if not want_grad:
        return cost
    grad = 4.0 * np.conj(np.swapaxes(x_rows, 1, 2)) @ (err[:, :, None] * y)
    if terms is not None and np.any(terms.violation < 0):
        grad = grad + rho_pen * htil @ _penalty_row_weights(terms, pen.gamma.T)
    return cost, grad


def _scatter_blocks(blocks: np.ndarray, shape) -> np.ndarray:
    nc, nt, k = blocks.shape
    out = np.zeros((nc, nt, nc, k), dtype=complex)
    idx = np.arange(nc)
    out[idx, :, idx, :] = blocks
    return out.reshape(shape)


def coupling_target(state: SolverState) -> np.ndarray:
    """``W^RF (F^H kron I) W^BB - Lambda / rho1``: the point the coupling term pulls W to."""
    return state.product() - state.dual / state.rho1


class _CachedOracle(CostOracle):
    """Shares the cost/gradient evaluation when both are requested at one point."""

    def __init__(self, fun):
        self._fun = fun
        self._key = None
        self._val = None
        super().__init__(cost=self._cost, grad=self._grad)

    def _eval(self, x):
        if self._key is None or not np.array_equal(self._key, x):
            self._val = self._fun(x, True)
            self._key = x.copy()
        return self._val

    def _cost(self, x):
        if self._key is not None and np.array_equal(self._key, x):
            return self._val[0]
        return self._fun(x, False)

    def _grad(self, x):
        return self._eval(x)[1]


def cost_grad_w(state: SolverState, ch: ChannelSet, ref_bp, config: ScenarioConfig) -> CostOracle:
    """W-subproblem: sensing SSE of the diagonal blocks, coupling, SINR penalty."""
    ref = _ref_values(ref_bp)
    nc = config.n_sc
    x_rows = sensing_rows(ch, state.ris, config.angle_grid)
    htil = combined_channels(ch, state.ris)
    target = coupling_target(state)
    rho1, rho2 = state.rho1, state.rho2
    pen = PenaltySpec.from_config(config)

    def fun(w, want_grad):
        blocks = diag_blocks(w, nc)
        diff = w - target
        c = 0.5 * rho1 * float(np.vdot(diff, diff).real)
        if not want_grad:
            return c + blocks_cost_grad(blocks, x_rows, ref, htil, pen, rho2, False)
        cb, gb = blocks_cost_grad(blocks, x_rows, ref, htil, pen, rho2)
        return c + cb, _scatter_blocks(gb, w.shape) + rho1 * diff

    return _CachedOracle(fun)


def coupling_blocks(bb: np.ndarray) -> np.ndarray:
    """Block rows of ``(F^H kron I) W^BB``: shape (N_c, N_RF, N_c K)."""
    nc, nrf, k = bb.shape
    fh = dft_matrix(nc).conj().T
    return np.einsum("nm,mrk->nrmk", fh, bb).reshape(nc, nrf, nc * k)


def cost_grad_wrf(state: SolverState, config: ScenarioConfig) -> CostOracle:
    """RF-precoder subproblem ``(rho1/2) sum_n ||T_n - W~ Q_n||^2``."""
    nc, nt = config.n_sc, config.n_tx
    t = (state.w_aux + state.dual / state.rho1).reshape(nc, nt, -1)
    q = coupling_blocks(state.bf.bb)
    rho1 = state.rho1
    qq = np.einsum("nrj,nsj->rs", q, np.conj(q))  # sum_n Q_n Q_n^H
    tq = np.einsum("ntj,nsj->ts", t, np.conj(q))  # sum_n T_n Q_n^H

    def fun(rf, want_grad):
        diff = t - np.einsum("tr,nrj->ntj", rf, q)
        c = 0.5 * rho1 * float(np.vdot(diff, diff).real)
        if not want_grad:
            return c
        return c, rho1 * (rf @ qq - tq)

    return _CachedOracle(fun)


def update_wbb(state: SolverState, config: ScenarioConfig) -> np.ndarray:
    """Closed-form baseband precoders ``W_m^BB = G^{-1} M_mm``.

    ``G = W~^H W~`` and ``M_mm`` is the (m, m) block of
    ``(W^RF (F^H kron I))^H (W + Lambda/rho1)``.
    """
    rf = state.bf.rf
    nc, nt, k = config.n_sc, config.n_tx, state.w_aux.shape[1] // config.n_sc
    gram = rf.conj().T @ rf
    if np.linalg.cond(gram) > COND_LIMIT:
        raise np.linalg.LinAlgError("RF precoder Gram matrix is singular")
    t = (state.w_aux + state.dual / state.rho1).reshape(nc, nt, nc, k)
    f = dft_matrix(nc)
    # column block m of W^RF (F^H kron I) stacks conj(F[m, n]) W~ over n
    tm = np.einsum("mn,ntmk->mtk", f, t)
    m_blocks = rf.conj().T @ tm
    return np.linalg.solve(gram[None], m_blocks)


def cost_grad_v(state: SolverState, ch: ChannelSet, ref_bp, config: ScenarioConfig) -> CostOracle:
    """RIS-phase subproblem over v: sensing SSE plus SINR penalty weighted by rho3."""
    ref = _ref_values(ref_bp)
    blocks = diag_blocks(state.w_aux, config.n_sc)
    return ris_oracle(ch, blocks, ref, config.angle_grid, state.rho3, PenaltySpec.from_config(config))


def ris_oracle(ch, blocks, ref, angles, rho3: float = 0.0, pen: PenaltySpec | None = None) -> CostOracle:
    """Cost/gradient in v for fixed per-subcarrier precoders ``blocks`` (N_c, N_t, K).

    With ``rho3 == 0`` only the sensing term is used and the user channels are ignored.
    """
    a = ris_steering_matrix(angles, ch.dims[3])
    d = ch.ris_to_bs() @ blocks  # (N_c, R, K): H_br,n^H W_n
    ca = np.conj(a)
    ref_t = ref.T
    use_pen = rho3 > 0
    if use_pen:
        b = np.einsum("ntk,nti->nki", np.conj(ch.h_bs_ue), blocks)  # h_bu,k^H w_i
        hru_c = np.conj(ch.h_ris_ue)  # (N_c, R, K)
        g, noise_var = pen.gamma.T, pen.noise_var  # (N_c, K)
        k = blocks.shape[2]
        coef = -g[:, :, None] * np.ones((1, 1, k)) + (1.0 + g)[:, :, None] * np.eye(k)[None]
        wt = pen.weight()

    def fun(v, want_grad):
        vc = np.conj(v)
        y = np.einsum("pr,nrk->npk", ca * vc[None, :], d)
        err = np.sum(np.abs(y) ** 2, axis=2) - ref_t
        cost = float(np.sum(err**2))
        if use_pen:
            s = b + np.einsum("r,nrk,nri->nki", vc, hru_c, d)
            viol = np.minimum(_gamma_prime_from_gains(s, g) - noise_var * g, 0.0)
            cost += rho3 * float(np.sum(wt * viol**2))
        if not want_grad:
            return cost
        t = np.einsum("npk,nrk->npr", np.conj(y), d)
        grad = 4.0 * np.einsum("np,pr,npr->r", err, ca, t)
        if use_pen and np.any(viol < 0):
            u = np.einsum("nri,nki->nrk", d, coef * np.conj(s))
            grad = grad + rho3 * 4.0 * np.einsum("nk,nrk,nrk->r", wt * viol, hru_c, u)
        return cost, grad

    return _CachedOracle(fun)


def dual_update(state: SolverState) -> np.ndarray:
    return state.dual + state.rho1 * (state.w_aux - state.product())


def penalty_update(rho: float) -> float:
    if not rho > 0:
        raise ValueError("penalty parameter must be positive")
    return min(10.0 * rho, RHO_CAP)


def primal_residual(state: SolverState) -> float:
    return float(np.linalg.norm(state.w_aux - state.product()))


def _ref_values(ref_bp) -> np.ndarray:
    return np.asarray(getattr(ref_bp, "values", ref_bp), dtype=float)


def initial_state(config: ScenarioConfig, init_seed: int, ris: RisPhases | None = None) -> SolverState:
    """Random W on the power sphere, random unit-modulus RF precoder, baseband by closed form."""
    rng = np.random.default_rng(np.random.SeedSequence(int(init_seed) & (2**64 - 1)))
    nc, nt, k = config.n_sc, config.n_tx, config.n_users
    sphere = ManifoldSpec.power_sphere(np.sqrt(config.p_max), (nc * nt, nc * k))
    w = sphere.random_point(rng)
    rf = np.exp(1j * rng.uniform(0.0, 2 * np.pi, (nt, config.n_rf)))
    v_rand = RisPhases(np.exp(1j * rng.uniform(0.0, 2 * np.pi, config.n_ris)))
    bf = HybridBeamformer(rf, np.zeros((nc, config.n_rf, k), dtype=complex))
    state = SolverState(
        w_aux=w,
        bf=bf,
        ris=ris if ris is not None else v_rand,
        dual=np.zeros_like(w),
    )
    state.bf = HybridBeamformer(rf, update_wbb(state, config))
    return state


def sensing_sse(ch: ChannelSet, ris: RisPhases, blocks: np.ndarray, ref: np.ndarray, angles) -> float:
    x_rows = sensing_rows(ch, ris, angles)
    y = x_rows @ blocks
    return float(np.sum((np.sum(np.abs(y) ** 2, axis=2) - ref.T) ** 2))


def normalized_hybrid(bf: HybridBeamformer, p_max: float) -> HybridBeamformer:
    """Rescale the baseband part so the hybrid precoder spends exactly ``p_max``."""
    p = float(np.linalg.norm(bf.product()) ** 2)
    if p == 0.0:
        return bf
    return HybridBeamformer(bf.rf, bf.bb * np.sqrt(p_max / p))


def admm_solve(
    config: ScenarioConfig,
    ch: ChannelSet,
    ref_bp,
    init_seed: int,
    *,
    optimize_ris: bool = True,
    ris_init: RisPhases | None = None,
    record: bool = False,
    min_iters: int = 1,
):
    """Run the manifold-based ADMM.

    Stops when the relative primal residual is below ``config.admm_tol`` and
    the objective changed by at most 1e-4 (relative) over the last three
    iterations, or after ``config.admm_max_iters`` iterations.

    Returns ``(state, metrics)`` where ``metrics`` describes the final hybrid
    precoder normalized to ``p_max`` (see :func:`risjcas.model.evaluate_design`).
    """
    t0 = time.perf_counter()
    ref = _ref_values(ref_bp)
    state = initial_state(config, init_seed, ris_init)
    if not optimize_ris and ris_init is None:
        raise ValueError("a frozen RIS configuration must be supplied")
    nc = config.n_sc
    sphere = ManifoldSpec.power_sphere(np.sqrt(config.p_max), state.w_aux.shape)
    circle_rf = ManifoldSpec.complex_circle(state.bf.rf.shape)
    circle_v = ManifoldSpec.complex_circle((config.n_ris,))
    settings = config.rcg

    for t in range(config.admm_max_iters):
        state.iter = t + 1
        res_w = rcg_minimize(cost_grad_w(state, ch, ref, config), sphere, state.w_aux, settings)
        state.w_aux = res_w.point

        res_rf = rcg_minimize(cost_grad_wrf(state, config), circle_rf, state.bf.rf, settings)
        state.bf = HybridBeamformer(res_rf.point, state.bf.bb)
        state.bf = HybridBeamformer(state.bf.rf, update_wbb(state, config))

        res_v = None
        if optimize_ris:
            res_v = rcg_minimize(cost_grad_v(state, ch, ref, config), circle_v, state.ris.v, settings)
            state.ris = RisPhases(res_v.point)

        state.dual = dual_update(state)
        if record:
            state.traces.append(("w", res_w))
            state.traces.append(("rf", res_rf))
            if res_v is not None:
                state.traces.append(("v", res_v))

        resid = primal_residual(state)
        wnorm = float(np.linalg.norm(state.w_aux))
        hyb = normalized_hybrid(state.bf, config.p_max)
        hyb_blocks = diag_blocks(hyb.product(), nc)
        feas = feasibility_ratio(sinr_matrix(ch, state.ris, hyb_blocks, config.noise_var), config.sinr_threshold)
        state.history.append(
            IterRecord(
                iteration=t + 1,
                objective=sensing_sse(ch, state.ris, hyb_blocks, ref, config.angle_grid),
                aux_objective=sensing_sse(ch, state.ris, diag_blocks(state.w_aux, nc), ref, config.angle_grid),
                lagrangian=res_w.cost,
                residual=resid,
                rel_residual=resid / wnorm,
                feasibility=feas,
                rho1=state.rho1,
                rho2=state.rho2,
                rho3=state.rho3,
            )
        )
        state.rho1 = penalty_update(state.rho1)
        state.rho2 = penalty_update(state.rho2)
        state.rho3 = penalty_update(state.rho3)
        if t + 1 >= max(min_iters, 4) and _converged(state.history, config.admm_tol):
            break

    final = normalized_hybrid(state.bf, config.p_max)
    metrics = evaluate_design(config, ch, ref, final.effective().blocks, state.ris)
    metrics["iterations"] = state.iter
    metrics["runtime"] = time.perf_counter() - t0
    return state, metrics


def _converged(history: list[IterRecord], tol: float) -> bool:
    if history[-1].rel_residual > tol:
        return False
    objs = [h.objective for h in history[-4:]]
    ref = max(abs(objs[-1]), 1e-300)
    return all(abs(a - objs[-1]) / ref <= 1e-4 for a in objs[:-1])
