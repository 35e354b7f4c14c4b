import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn
from risjcas import solver
from risjcas.manifold import ManifoldSpec, tangent_project
from risjcas.model import (
    ChannelSet,
    HybridBeamformer,
    RisPhases,
    ScenarioConfig,
    beampattern_grid,
    diag_blocks,
    dft_matrix,
    sample_channels,
    sinr_matrix,
)
from risjcas.solver import (
    PenaltySpec,
    SolverState,
    blocks_cost_grad,
    cost_grad_v,
    cost_grad_w,
    cost_grad_wrf,
    dual_update,
    gamma_prime,
    penalty_terms,
    penalty_update,
    penalty_weight,
    sensing_rows,
    update_wbb,
)


def _fd_check(oracle, x, rng, n=20, h=1e-6):
    """Max relative error of the analytic gradient against central differences."""
    g = oracle.grad(x)
    floor = 1e-6 * np.max(np.abs(g))
    worst = 0.0
    for _ in range(n):
        i = rng.integers(x.size)
        unit = 1.0 if rng.integers(2) == 0 else 1j
        e = np.zeros(x.size, complex)
        e[i] = h * unit
        e = e.reshape(x.shape)
        fd = (oracle.cost(x + e) - oracle.cost(x - e)) / (2 * h)
        an = g.flat[i].real if unit == 1.0 else g.flat[i].imag
        worst = max(worst, abs(fd - an) / max(abs(fd), floor))
    return worst


def _instance(seed, **kw):
    rng = np.random.default_rng(seed)
    cfg = ScenarioConfig.build(n_tx=4, n_rf=2, n_sc=2, n_users=2, n_ris=4, n_angles=5, **kw)
    ch = sample_channels(cfg, seed)
    ref = rng.uniform(0, 2, (5, 2))
    state = solver.initial_state(cfg, seed + 1)
    state.dual = crandn(rng, *state.w_aux.shape)
    state.rho1, state.rho2, state.rho3 = 10.0 ** rng.uniform(-1, 3, 3)
    return rng, cfg, ch, ref, state


# --------------------------------------------------------------------------- penalty


def test_gamma_prime_single_user_is_signal_power(rng):
    h, w = crandn(rng, 2, 4, 1), crandn(rng, 2, 4, 1)
    gp = gamma_prime(h, w, np.array([[3.0, 0.5]]))
    assert np.allclose(gp[:, 0], np.abs(np.sum(h.conj() * w, axis=1))[:, 0] ** 2)


@given(st.integers(0, 2**32 - 1))
def test_penalty_zero_iff_sinr_feasible(seed):
    rng = np.random.default_rng(seed)
    k, nt = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    h, w = crandn(rng, 2, nt, k), crandn(rng, 2, nt, k)
    noise = float(10 ** rng.uniform(-2, 0))
    gam = 10 ** rng.uniform(-1, 1, (k, 2))
    ch = ChannelSet(h, np.zeros((2, nt, 1)), np.zeros((2, 1, k)))
    snr = sinr_matrix(ch, RisPhases([1.0]), w, noise)
    clear = np.abs(snr - gam) > 1e-9 * gam  # skip numerically ambiguous boundary points
    for form in ("absolute", "relative"):
        zero = penalty_terms(h, w, gam, noise, form).penalty.T == 0
        assert np.array_equal(zero[clear], (snr >= gam)[clear])


def test_penalty_vanishes_at_boundary(rng):
    h, w = crandn(rng, 1, 3, 2), crandn(rng, 1, 3, 2)
    noise = 0.1
    ch = ChannelSet(h, np.zeros((1, 3, 1)), np.zeros((1, 1, 2)))
    gam = sinr_matrix(ch, RisPhases([1.0]), w, noise)
    gp = gamma_prime(h, w, gam)
    assert np.allclose(gp, noise * gam.T, rtol=1e-9)
    for form in ("absolute", "relative"):
        assert np.max(penalty_terms(h, w, gam, noise, form).penalty) <= 1e-18


def test_penalty_weight_forms():
    g = np.array([[2.0]])
    assert penalty_weight(g, 0.5) == 1.0
    assert penalty_weight(g, 0.5, "relative", 3.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        penalty_weight(g, 0.5, "cubic")


def test_penalty_gradient_continuous_at_boundary(rng):
    """Penalty and gradient tend to zero as the margin tends to zero from either side."""
    h = crandn(rng, 1, 3, 1)
    w0 = crandn(rng, 1, 3, 1)
    noise = 0.2
    sig = abs(np.vdot(h[0, :, 0], w0[0, :, 0])) ** 2
    x_rows = np.zeros((1, 1, 3), complex)
    ref = np.zeros((1, 1))
    for eps in (1e-3, 1e-6, -1e-6, -1e-3):
        gam = np.array([[sig / noise * (1 + eps)]])
        pen = PenaltySpec(gam, noise)
        c, g = blocks_cost_grad(w0, x_rows, ref, h, pen, 1.0)
        if eps < 0:
            assert c == 0.0 and np.all(g == 0)
        else:
            assert c <= (eps * sig) ** 2 * 1.0001 and np.linalg.norm(g) <= 4 * eps * sig * np.linalg.norm(h) * 10


# --------------------------------------------------------------------------- W subproblem


def test_w_cost_zero_at_global_minimum():
    cfg = ScenarioConfig.build(n_tx=4, n_rf=2, n_sc=2, n_users=2, n_ris=4, n_angles=5)
    ch = sample_channels(cfg, 3)
    state = solver.initial_state(cfg, 4)
    ris = state.ris
    # make everything consistent: reference = achieved pattern, coupling exact, SINR trivially met
    w = state.product()
    w = w * np.sqrt(cfg.p_max) / np.linalg.norm(w)
    state.bf = HybridBeamformer(state.bf.rf, state.bf.bb * np.sqrt(cfg.p_max) / np.linalg.norm(state.product()))
    state.w_aux = state.product()
    ref = beampattern_grid(ch, ris, diag_blocks(state.w_aux, 2), cfg.angle_grid)
    easy = cfg.replace(sinr_threshold=np.full((2, 2), 1e-12), sinr_margin_db=0.0)
    oracle = cost_grad_w(state, ch, ref, easy)
    assert oracle.cost(state.w_aux) <= 1e-20 * max(1.0, np.sum(ref**2))
    m = ManifoldSpec.power_sphere(np.sqrt(cfg.p_max), state.w_aux.shape)
    assert np.linalg.norm(tangent_project(m, state.w_aux, oracle.grad(state.w_aux))) <= 1e-9


def test_w_cost_without_penalty_is_sensing_plus_coupling():
    rng, cfg, ch, ref, state = _instance(7)
    state.rho2 = 1e-300
    w = state.w_aux
    blocks = diag_blocks(w, cfg.n_sc)
    sse = solver.sensing_sse(ch, state.ris, blocks, ref, cfg.angle_grid)
    coup = 0.5 * state.rho1 * np.linalg.norm(w + state.dual / state.rho1 - state.product()) ** 2
    assert cost_grad_w(state, ch, ref, cfg).cost(w) == pytest.approx(sse + coup, rel=1e-9)


@pytest.mark.parametrize("form", ["absolute", "relative"])
@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed, form):
    rng, cfg, ch, ref, state = _instance(seed, penalty_form=form)
    assert _fd_check(cost_grad_w(state, ch, ref, cfg), state.w_aux, rng) <= 1e-4
    assert _fd_check(cost_grad_wrf(state, cfg), state.bf.rf, rng) <= 1e-4
    assert _fd_check(cost_grad_v(state, ch, ref, cfg), state.ris.v, rng) <= 1e-4


def test_fd_check_detects_wrong_gradient():
    rng, cfg, ch, ref, state = _instance(0)
    good = cost_grad_v(state, ch, ref, cfg)
    bad = solver.CostOracle(cost=good.cost, grad=lambda v: -good.grad(v))
    assert _fd_check(bad, state.ris.v, rng) > 1.0


# --------------------------------------------------------------------------- RF precoder subproblem


def test_rf_cost_zero_when_coupling_exact():
    rng, cfg, ch, ref, state = _instance(2)
    state.dual = np.zeros_like(state.dual)
    state.w_aux = state.product()
    oracle = cost_grad_wrf(state, cfg)
    assert oracle.cost(state.bf.rf) <= 1e-24
    assert np.max(np.abs(oracle.grad(state.bf.rf))) <= 1e-10


def test_rf_cost_single_subcarrier_is_least_squares(rng):
    cfg = ScenarioConfig.build(n_tx=4, n_rf=2, n_sc=1, n_users=2, n_ris=2, n_angles=5)
    rf = np.exp(1j * rng.uniform(0, 6, (4, 2)))
    bb = crandn(rng, 1, 2, 2)
    w, dual = crandn(rng, 4, 2), crandn(rng, 4, 2)
    state = SolverState(w_aux=w, bf=HybridBeamformer(rf, bb), ris=RisPhases([1, 1]), dual=dual, rho1=3.0)
    oracle = cost_grad_wrf(state, cfg)
    x = np.exp(1j * rng.uniform(0, 6, (4, 2)))
    assert oracle.cost(x) == pytest.approx(1.5 * np.linalg.norm(w + dual / 3.0 - x @ bb[0]) ** 2)


# --------------------------------------------------------------------------- baseband closed form


def test_update_wbb_scalar():
    cfg = ScenarioConfig.build(n_tx=1, n_rf=1, n_sc=1, n_users=1, n_ris=1, n_angles=5)
    state = SolverState(
        w_aux=np.array([[2.0 + 0j]]),
        bf=HybridBeamformer(np.ones((1, 1), complex), np.zeros((1, 1, 1), complex)),
        ris=RisPhases([1.0]),
        dual=np.array([[1.0 + 0j]]),
        rho1=1.0,
    )
    assert np.allclose(update_wbb(state, cfg), [[[3.0]]])


def _coupling_cost(state, bb):
    return np.linalg.norm(state.w_aux + state.dual / state.rho1 - HybridBeamformer(state.bf.rf, bb).product()) ** 2


@pytest.mark.parametrize("seed", range(3))
def test_update_wbb_is_local_minimum(seed):
    rng, cfg, ch, ref, state = _instance(seed + 10)
    bb = update_wbb(state, cfg)
    base = _coupling_cost(state, bb)
    for idx in np.ndindex(bb.shape):
        for delta in (1e-3, -1e-3, 1e-3j, -1e-3j):
            pert = bb.copy()
            pert[idx] += delta
            assert _coupling_cost(state, pert) >= base


def test_update_wbb_matches_dense_least_squares():
    rng, cfg, ch, ref, state = _instance(21)
    nc, nrf, k = cfg.n_sc, cfg.n_rf, cfg.n_users
    bb = update_wbb(state, cfg)
    a = np.kron(np.eye(nc), state.bf.rf) @ np.kron(dft_matrix(nc).conj().T, np.eye(nrf))
    x = np.linalg.lstsq(a, state.w_aux + state.dual / state.rho1, rcond=None)[0]
    for m in range(nc):
        assert np.allclose(bb[m], x[m * nrf:(m + 1) * nrf, m * k:(m + 1) * k], rtol=1e-8, atol=1e-10)


def test_update_wbb_rejects_rank_deficient_rf():
    rng, cfg, ch, ref, state = _instance(1)
    rf = np.ones((cfg.n_tx, cfg.n_rf), complex)
    state.bf = HybridBeamformer(rf, state.bf.bb)
    with pytest.raises(np.linalg.LinAlgError):
        update_wbb(state, cfg)


# --------------------------------------------------------------------------- RIS subproblem


def test_v_cost_without_sensing_rows_is_reference_energy(rng):
    cfg = ScenarioConfig.build(n_tx=4, n_rf=2, n_sc=2, n_users=2, n_ris=3, n_angles=5)
    ch = ChannelSet(crandn(rng, 2, 4, 2), np.zeros((2, 4, 3)), crandn(rng, 2, 3, 2))
    ref = rng.uniform(0, 2, (5, 2))
    state = solver.initial_state(cfg, 0)
    state.rho3 = 1e-300
    oracle = cost_grad_v(state, ch, ref, cfg)
    v = state.ris.v
    assert oracle.cost(v) == pytest.approx(np.sum(ref**2))
    assert np.allclose(oracle.grad(v), 0.0)


def test_v_sensing_cost_constant_for_single_element(rng):
    cfg = ScenarioConfig.build(n_tx=4, n_rf=2, n_sc=2, n_users=1, n_ris=1, n_angles=5)
    ch = sample_channels(cfg, 1)
    blocks = crandn(rng, 2, 4, 1)
    oracle = solver.ris_oracle(ch, blocks, rng.uniform(0, 1, (5, 2)), cfg.angle_grid)
    m = ManifoldSpec.complex_circle((1,))
    for th in rng.uniform(0, 6.3, 5):
        v = np.array([np.exp(1j * th)])
        assert np.allclose(tangent_project(m, v, oracle.grad(v)), 0.0, atol=1e-10)


def test_sensing_rows_reproduce_beampattern(rng):
    ch = sample_channels(ScenarioConfig.build(n_tx=4, n_rf=2, n_sc=2, n_users=2, n_ris=3), 2)
    ris = RisPhases(np.exp(1j * rng.uniform(0, 6, 3)))
    blocks = crandn(rng, 2, 4, 2)
    angles = np.array([-30.0, 0.0, 45.0])
    y = sensing_rows(ch, ris, angles) @ blocks
    assert np.allclose(np.sum(np.abs(y) ** 2, axis=2).T, beampattern_grid(ch, ris, blocks, angles))


# --------------------------------------------------------------------------- dual and penalty schedule


def test_dual_update_examples(rng):
    rng_, cfg, ch, ref, state = _instance(3)
    state.w_aux = state.product()
    assert np.allclose(dual_update(state), state.dual)
    state.rho1 = 1.0
    d = crandn(rng, *state.w_aux.shape)
    state.w_aux = state.product() + d
    assert np.allclose(dual_update(state), state.dual + d)


def test_penalty_update_examples():
    assert penalty_update(0.1) == pytest.approx(1.0)
    assert penalty_update(1000.0) == 1000.0
    assert penalty_update(200.0) == 1000.0
    with pytest.raises(ValueError):
        penalty_update(0.0)


@given(st.floats(1e-6, 1e6))
def test_penalty_update_monotone_and_capped(rho):
    out = penalty_update(rho)
    assert out >= min(rho, 1000.0) and out <= 1000.0


# --------------------------------------------------------------------------- full ADMM


@pytest.fixture(scope="module")
def desk_run():
    from risjcas.refbp import design_reference
    from risjcas.verify import desk_config

    cfg = desk_config()
    ch = sample_channels(cfg, 0)
    ref = design_reference(cfg, ch, 0)
    state, metrics = solver.admm_solve(cfg, ch, ref, 0, record=True, min_iters=30)
    return cfg, state, metrics


def test_admm_final_point_on_manifolds(desk_run):
    cfg, state, metrics = desk_run
    assert abs(np.linalg.norm(state.w_aux) - np.sqrt(cfg.p_max)) <= 1e-9
    assert np.max(np.abs(np.abs(state.bf.rf) - 1)) <= 1e-9
    assert np.max(np.abs(np.abs(state.ris.v) - 1)) <= 1e-9


def test_admm_residual_shrinks_and_traces_descend(desk_run):
    cfg, state, metrics = desk_run
    hist = state.history
    assert len(hist) == 30
    assert hist[-1].residual < hist[0].residual
    assert all(np.isfinite(h.objective) for h in hist)
    for _, res in state.traces:
        assert np.all(np.diff(res.costs) <= 1e-12)
    rhos = [h.rho2 for h in hist]
    assert all(b >= a for a, b in zip(rhos, rhos[1:])) and max(rhos) <= 1000.0


def test_admm_metrics_match_recomputation(desk_run):
    cfg, state, metrics = desk_run
    hyb = solver.normalized_hybrid(state.bf, cfg.p_max)
    assert np.linalg.norm(hyb.product()) ** 2 == pytest.approx(cfg.p_max)
    blocks = diag_blocks(hyb.product(), cfg.n_sc)
    assert np.allclose(metrics["sinr"], sinr_matrix(state_channels(cfg), state.ris, blocks, cfg.noise_var))


def state_channels(cfg):
    return sample_channels(cfg, 0)


def test_admm_frozen_ris_requires_phases():
    cfg = ScenarioConfig.build(n_tx=4, n_rf=2, n_sc=2, n_users=2, n_ris=4, n_angles=5)
    ch = sample_channels(cfg, 0)
    with pytest.raises(ValueError):
        solver.admm_solve(cfg, ch, np.ones((5, 2)), 0, optimize_ris=False)
