"""Verification suites shared by ``risjcas gradcheck`` and the acceptance tests.

Each suite returns a :class:`SuiteResult`; ``run_all`` runs them in order.
``scale="small"`` shrinks instance and seed counts (same tolerances) for a
quick smoke run.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import solver
from .baselines import ALL_SCHEMES, SchemeId, run_scheme
from .manifold import CostOracle, ManifoldSpec, RcgSettings, rcg_minimize
from .model import (
    HybridBeamformer,
    ScenarioConfig,
    dft_matrix,
    feasibility_ratio,
    main_lobe_mask,
    pslr,
    sample_channels,
    total_power,
    total_power_per_subcarrier,
)
from .refbp import design_reference

__all__ = ["SuiteResult", "SUITES", "run_all", "desk_config", "gradient_config"]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    tolerance: str
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.detail} (tolerance: {self.tolerance}; {self.seconds:.1f} s)"


def _counts(scale: str, default: int, small: int) -> int:
    if scale not in ("small", "default"):
        raise ValueError(f"unknown scale {scale!r}")
    return default if scale == "default" else small


def gradient_config(**kw) -> ScenarioConfig:
    """Tiny scenario used by the finite-difference suite."""
    base = dict(n_tx=4, n_rf=2, n_sc=2, n_users=2, n_ris=4, n_angles=5, gamma_db=10.0)
    base.update(kw)
    return ScenarioConfig.build(**base)


def desk_config(**kw) -> ScenarioConfig:
    """The bundled desk scenario, with optional overrides (engineering units)."""
    from .harness import bundled_config, config_from_dict

    d = bundled_config("desk")
    d.update({k: str(v) for k, v in kw.items()})
    return config_from_dict(d)


# --------------------------------------------------------------------------- 1. gradients


def _fd_pairs(oracle: CostOracle, x: np.ndarray, rng, n_coords: int, h: float = 1e-6):
    """(finite difference, analytic) pairs at random real/imaginary coordinates."""
    g = oracle.grad(x)
    flat = x.size
    idx = rng.choice(flat, size=n_coords, replace=flat < n_coords)
    parts = rng.integers(0, 2, size=n_coords)
    out = []
    for i, part in zip(idx, parts):
        e = np.zeros(flat, dtype=complex)
        e[i] = h if part == 0 else 1j * h
        e = e.reshape(x.shape)
        fd = (oracle.cost(x + e) - oracle.cost(x - e)) / (2 * h)
        an = g.flat[i].real if part == 0 else g.flat[i].imag
        out.append((fd, an))
    return np.array(out), float(np.max(np.abs(g)))


def _gradient_instance(seed: int):
    rng = np.random.default_rng(seed)
    cfg = gradient_config()
    ch = sample_channels(cfg, seed)
    ref = rng.uniform(0.0, 2.0, (cfg.n_angles, cfg.n_sc))
    state = solver.initial_state(cfg, seed + 1)
    state.dual = rng.standard_normal(state.w_aux.shape) + 1j * rng.standard_normal(state.w_aux.shape)
    state.rho1, state.rho2, state.rho3 = 10.0 ** rng.uniform(-1, 3, 3)
    return cfg, ch, ref, state


def _oracles(cfg, ch, ref, state):
    # looked up on the module so a test can substitute a faulty oracle
    return {
        "grad_w": (solver.cost_grad_w(state, ch, ref, cfg), state.w_aux),
        "grad_rf": (solver.cost_grad_wrf(state, cfg), state.bf.rf),
        "grad_v": (solver.cost_grad_v(state, ch, ref, cfg), state.ris.v),
    }


def suite_gradients(scale: str = "default") -> SuiteResult:
    t0 = time.perf_counter()
    n_inst = _counts(scale, 10, 3)
    pairs = {k: [] for k in ("grad_w", "grad_rf", "grad_v")}
    gmax = {k: [] for k in pairs}
    for seed in range(n_inst):
        rng = np.random.default_rng(1000 + seed)
        for name, (orc, x) in _oracles(*_gradient_instance(seed)).items():
            p, m = _fd_pairs(orc, x, rng, 20)
            pairs[name].append(p)
            gmax[name].append(np.full(len(p), m))
    ok, parts, scales = True, [], {}
    for name in pairs:
        p = np.concatenate(pairs[name])
        fd, an = p[:, 0], p[:, 1]
        s = float(fd @ an / (an @ an)) if an @ an > 0 else float("nan")
        floor = 1e-6 * np.concatenate(gmax[name])
        err = np.abs(s * an - fd) / np.maximum(np.abs(fd), floor)
        good = s > 0 and float(err.max()) <= 1e-4
        ok &= good
        scales[name] = s
        parts.append(f"{name} scale {s:.6g} max rel err {err.max():.2e}")
    return SuiteResult(
        "gradients", bool(ok), "rel err <= 1e-4 at 20 coords x instances, positive global scale",
        f"{n_inst} instances; " + "; ".join(parts), time.perf_counter() - t0, {"scales": scales},
    )


# --------------------------------------------------------------------------- 2. manifold invariants


def suite_manifold(scale: str = "default") -> SuiteResult:
    t0 = time.perf_counter()
    cfg = desk_config()
    seed = 7
    ch = sample_channels(cfg, seed)
    ref = design_reference(cfg, ch, seed)
    state, _ = solver.admm_solve(cfg, ch, ref, seed, record=True)
    sph = max(r.max_manifold_residual for n, r in state.traces if n == "w")
    sph = max(sph, abs(np.linalg.norm(state.w_aux) - np.sqrt(cfg.p_max)))
    circ = max(r.max_manifold_residual for n, r in state.traces if n in ("rf", "v"))
    circ = max(circ, float(np.max(np.abs(np.abs(state.bf.rf) - 1))), float(np.max(np.abs(np.abs(state.ris.v) - 1))))
    tang = max(r.max_tangent_residual for n, r in state.traces if n == "w")
    ok = sph <= 1e-9 and circ <= 1e-9 and tang <= 1e-10
    return SuiteResult(
        "manifold_invariants", ok, "norm/modulus 1e-9, tangency 1e-10",
        f"{state.iter} ADMM iterations; sphere residual {sph:.2e}, circle residual {circ:.2e}, "
        f"tangency {tang:.2e}", time.perf_counter() - t0, {"traces": state.traces},
    )


# --------------------------------------------------------------------------- 3. closed-form baseband


def _random_coupling_state(seed: int):
    rng = np.random.default_rng(seed)
    nt, nrf, nc, k = 8, 4, int(rng.integers(1, 4)), int(rng.integers(1, 4))
    cfg = ScenarioConfig.build(n_tx=nt, n_rf=nrf, n_sc=nc, n_users=k, n_ris=4, n_angles=5)
    w = rng.standard_normal((nc * nt, nc * k)) + 1j * rng.standard_normal((nc * nt, nc * k))
    dual = rng.standard_normal(w.shape) + 1j * rng.standard_normal(w.shape)
    rf = np.exp(1j * rng.uniform(0, 2 * np.pi, (nt, nrf)))
    bf = HybridBeamformer(rf, np.zeros((nc, nrf, k), dtype=complex))
    st = solver.SolverState(w_aux=w, bf=bf, ris=None, dual=dual, rho1=float(10 ** rng.uniform(-1, 3)))
    return cfg, st


def suite_baseband(scale: str = "default") -> SuiteResult:
    t0 = time.perf_counter()
    n = _counts(scale, 20, 5)
    worst_g = worst_o = 0.0
    for seed in range(n):
        cfg, st = _random_coupling_state(seed)
        nc, nt, nrf = cfg.n_sc, cfg.n_tx, cfg.n_rf
        k = cfg.n_users
        bb = solver.update_wbb(st, cfg)
        t = st.w_aux + st.dual / st.rho1
        a = np.kron(np.eye(nc), st.bf.rf) @ np.kron(dft_matrix(nc).conj().T, np.eye(nrf))
        bdiag = np.zeros((nc * nrf, nc * k), dtype=complex)
        for m in range(nc):
            bdiag[m * nrf:(m + 1) * nrf, m * k:(m + 1) * k] = bb[m]
        full_grad = -st.rho1 * a.conj().T @ (t - a @ bdiag)
        scale_ref = st.rho1 * a.conj().T @ t
        x = np.linalg.lstsq(a, t, rcond=None)[0]
        for m in range(nc):
            sl = (slice(m * nrf, (m + 1) * nrf), slice(m * k, (m + 1) * k))
            worst_g = max(worst_g, np.linalg.norm(full_grad[sl]) / np.linalg.norm(scale_ref[sl]))
            worst_o = max(worst_o, np.linalg.norm(bb[m] - x[sl]) / np.linalg.norm(x[sl]))
    ok = worst_g <= 1e-8 and worst_o <= 1e-8
    return SuiteResult(
        "baseband_closed_form", ok, "1e-8 relative",
        f"{n} instances; block gradient {worst_g:.2e}, dense normal-equation mismatch {worst_o:.2e}",
        time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------- 4. penalty equivalence


def suite_penalty(scale: str = "default") -> SuiteResult:
    t0 = time.perf_counter()
    n = _counts(scale, 1000, 200)
    rng = np.random.default_rng(44)
    mismatches, worst_boundary = 0, 0.0
    for _ in range(n):
        nt, k = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        h = rng.standard_normal((1, nt, k)) + 1j * rng.standard_normal((1, nt, k))
        w = rng.standard_normal((1, nt, k)) + 1j * rng.standard_normal((1, nt, k))
        nv = float(10 ** rng.uniform(-2, 0))
        gam = 10 ** rng.uniform(-1, 1.5, (k, 1))
        # brute-force SINR, one user at a time
        snr = np.empty(k)
        for u in range(k):
            p = np.abs(h[0, :, u].conj() @ w[0]) ** 2
            snr[u] = p[u] / (p.sum() - p[u] + nv)
        gp = solver.gamma_prime(h, w, gam)[0]
        mismatches += int(np.sum(np.sign(gp - nv * gam[:, 0]) != np.sign(snr - gam[:, 0])))
        at = snr[:, None]
        gp_b = solver.gamma_prime(h, w, at)[0]
        worst_boundary = max(worst_boundary, float(np.max(np.abs(gp_b - nv * at[:, 0]) / (nv * at[:, 0]))))
    ok = mismatches == 0 and worst_boundary <= 1e-9
    return SuiteResult(
        "penalty_equivalence", ok, "exact sign agreement; boundary 1e-9 relative",
        f"{n} instances; sign mismatches {mismatches}; boundary residual {worst_boundary:.2e}",
        time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------- 5. RCG descent


def circle_toy(seed: int = 5):
    """``||B v - c||^2`` over two unit-modulus entries."""
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    c = rng.standard_normal(3) + 1j * rng.standard_normal(3)

    def cost(v):
        r = b @ v - c
        return float(np.vdot(r, r).real)

    def grad(v):
        return 2.0 * b.conj().T @ (b @ v - c)

    return b, c, CostOracle(cost, grad)


def _toy_grid_min(b, c, step_deg=0.1) -> float:
    th = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    e = np.exp(1j * th)
    best = np.inf
    for row0 in range(0, th.size, 400):
        v1 = e[row0:row0 + 400, None, None]
        r = b[None, None, :, 0] * v1 + b[None, None, :, 1] * e[None, :, None] - c[None, None, :]
        best = min(best, float(np.min(np.sum(np.abs(r) ** 2, axis=2))))
    return best


def suite_rcg(scale: str = "default", traces=None) -> SuiteResult:
    t0 = time.perf_counter()
    recorded = list(traces or [])
    settings = RcgSettings(max_iters=200)
    for seed in range(_counts(scale, 10, 3)):
        cfg, ch, ref, state = _gradient_instance(seed)
        sph = ManifoldSpec.power_sphere(np.sqrt(cfg.p_max), state.w_aux.shape)
        circ_rf = ManifoldSpec.complex_circle(state.bf.rf.shape)
        circ_v = ManifoldSpec.complex_circle(state.ris.v.shape)
        orc = _oracles(cfg, ch, ref, state)
        recorded.append(("w", rcg_minimize(orc["grad_w"][0], sph, state.w_aux, settings)))
        recorded.append(("rf", rcg_minimize(orc["grad_rf"][0], circ_rf, state.bf.rf, settings)))
        recorded.append(("v", rcg_minimize(orc["grad_v"][0], circ_v, state.ris.v, settings)))
    worst_rise = max(
        (float(np.max(np.diff(r.costs))) for _, r in recorded if len(r.costs) > 1), default=-np.inf
    )
    b, c, toy = circle_toy()
    m = ManifoldSpec.complex_circle((2,))
    rng = np.random.default_rng(0)
    starts = [m.random_point(rng) for _ in range(8)]
    tight = RcgSettings(max_iters=2000, grad_tol=1e-10)
    best = min(rcg_minimize(toy, m, s, tight).cost for s in starts)
    grid = _toy_grid_min(b, c)
    gap = best - grid
    ok = worst_rise <= 1e-12 and abs(gap) <= 1e-3
    return SuiteResult(
        "rcg_descent", ok, "cost rise <= 1e-12 per step; toy within 1e-3 of 0.1 deg grid optimum",
        f"{len(recorded)} traces, largest step change {worst_rise:.2e}; toy RCG {best:.6f} vs grid {grid:.6f}",
        time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------- 6. ADMM convergence


def suite_admm(scale: str = "default") -> SuiteResult:
    t0 = time.perf_counter()
    cfg = desk_config(gamma_db=6.0, admm_max_iters=30)
    n_seeds = 5
    good, parts = 0, []
    from .harness import trial_seed

    for i in range(n_seeds if scale == "default" else 2):
        seed = trial_seed(cfg.base_seed, i)
        ch = sample_channels(cfg, seed)
        ref = design_reference(cfg, ch, seed)
        state, _ = solver.admm_solve(cfg, ch, ref, seed, min_iters=30)
        h = state.history
        rr = h[29].rel_residual if len(h) >= 30 else float("inf")
        drop = 1.0 - h[-1].objective / h[0].objective
        passed = rr < 1e-2 and drop >= 0.9
        good += passed
        parts.append(f"seed{i}: resid {rr:.1e}, drop {100 * drop:.1f}%")
    need = 4 if scale == "default" else 2
    return SuiteResult(
        "admm_convergence", good >= need, f"residual < 1e-2 ||W||, objective drop >= 90%, {need}/{n_seeds if scale == 'default' else 2} seeds",
        f"{good} seeds pass; " + "; ".join(parts), time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------- 7/8. trends


def paired_runs(cfg: ScenarioConfig, schemes, n_trials: int) -> dict[str, np.ndarray]:
    """Metrics (bp_mse_db, feasibility) per scheme over shared channel/reference draws."""
    from .harness import trial_seed

    out = {str(s): [] for s in schemes}
    for i in range(n_trials):
        seed = trial_seed(cfg.base_seed, i)
        ch = sample_channels(cfg, seed)
        ref = design_reference(cfg, ch, seed)
        for s in schemes:
            m = run_scheme(s, cfg, ch, ref, seed)
            out[str(s)].append((m["bp_mse_db"], m["feasibility"]))
    return {k: np.array(v) for k, v in out.items()}


def suite_ris_benefit(scale: str = "default") -> SuiteResult:
    t0 = time.perf_counter()
    n = _counts(scale, 20, 4)
    res = paired_runs(desk_config(), ALL_SCHEMES, n)
    p, h = res["proposed"], res["hb_rnd_ris"]
    f, fr = res["fdb_ris"], res["fdb_rnd_ris"]
    mse_win = float(np.mean(p[:, 0] < h[:, 0]))
    feas_win = float(np.mean(p[:, 1] > h[:, 1]))
    fdb_win = float(np.mean(f[:, 0] < fr[:, 0]))
    means = "; ".join(f"{k} mse {v[:, 0].mean():.2f} dB feas {v[:, 1].mean():.3f}" for k, v in res.items())
    ok = mse_win >= 0.8 and feas_win >= 0.8 and fdb_win >= 0.8
    return SuiteResult(
        "ris_benefit", ok, "each win rate >= 80% of pairs",
        f"{n} pairs; proposed<hb_rnd_ris MSE {mse_win:.2f}, proposed>hb_rnd_ris feasibility {feas_win:.2f}, "
        f"fdb_ris<fdb_rnd_ris MSE {fdb_win:.2f}; means: {means}",
        time.perf_counter() - t0, {"runs": res},
    )


def monotone_with_one_inversion(seq, rel: float = 0.05) -> bool:
    """Non-decreasing, except for at most one drop of at most ``rel`` (relative)."""
    drops = [(a, b) for a, b in zip(seq[:-1], seq[1:]) if b < a]
    if not drops:
        return True
    if len(drops) > 1:
        return False
    a, b = drops[0]
    return (a - b) <= rel * abs(a)


def suite_trends(scale: str = "default") -> SuiteResult:
    t0 = time.perf_counter()
    n = _counts(scale, 20, 4)
    base = desk_config()
    mse_k = []
    for k in (1, 2, 3):
        runs = paired_runs(base.replace(n_users=k), (SchemeId.PROPOSED,), n)["proposed"]
        mse_k.append(float(np.mean(10 ** (runs[:, 0] / 10))))
    feas_snr = []
    for snr in (15.0, 25.0, 35.0):
        cfg = base.replace(noise_var=base.p_max / 10 ** (snr / 10))
        runs = paired_runs(cfg, (SchemeId.PROPOSED,), n)["proposed"]
        feas_snr.append(float(np.mean(runs[:, 1])))
    ok_k = monotone_with_one_inversion(mse_k)
    ok_s = monotone_with_one_inversion(feas_snr)
    return SuiteResult(
        "monotone_trends", ok_k and ok_s, "non-decreasing, one inversion <= 5% relative",
        f"{n} seeds; mean linear MSE vs K=1,2,3: {', '.join(f'{x:.4g}' for x in mse_k)} "
        f"({'ok' if ok_k else 'violated'}); mean feasibility vs SNR=15,25,35 dB: "
        f"{', '.join(f'{x:.3f}' for x in feas_snr)} ({'ok' if ok_s else 'violated'})",
        time.perf_counter() - t0, {"mse_k": mse_k, "feas_snr": feas_snr},
    )


# --------------------------------------------------------------------------- 9. metric plumbing


def _pslr_brute(pattern, grid, targets, halfwidth):
    main = side = -np.inf
    for x, ang in zip(pattern, grid):
        if any(abs(ang - t) <= halfwidth + 1e-9 for t in targets):
            main = max(main, x)
        else:
            side = max(side, x)
    return float(10 * np.log10(main / side))


def suite_metrics(scale: str = "default") -> SuiteResult:
    t0 = time.perf_counter()
    n = _counts(scale, 100, 20)
    rng = np.random.default_rng(9)
    dft_err = max(
        float(np.max(np.abs(dft_matrix(nc) @ dft_matrix(nc).conj().T - np.eye(nc)))) for nc in (1, 2, 4, 8, 16)
    )
    pars = 0.0
    for _ in range(n):
        nt, nrf, nc, k = (int(x) for x in rng.integers(1, 6, 4))
        nrf = min(nrf, nt)
        rf = np.exp(1j * rng.uniform(0, 2 * np.pi, (nt, nrf)))
        bb = rng.standard_normal((nc, nrf, k)) + 1j * rng.standard_normal((nc, nrf, k))
        bf = HybridBeamformer(rf, bb)
        a, b = total_power(bf), total_power_per_subcarrier(bf)
        pars = max(pars, abs(a - b) / b)
    grid = np.linspace(-90, 90, 181)
    pslr_bad = feas_bad = 0
    for _ in range(n):
        targets = rng.uniform(-80, 80, int(rng.integers(1, 4)))
        hw = float(rng.uniform(0, 10))
        pat = rng.exponential(1.0, grid.size)
        if main_lobe_mask(grid, targets, hw).any():
            pslr_bad += pslr(pat, grid, targets, hw) != _pslr_brute(pat, grid, targets, hw)
        s = rng.exponential(1.0, (3, 4))
        th = np.where(rng.random((3, 4)) < 0.2, s, rng.exponential(1.0, (3, 4)))
        brute = sum(1 for x, y in zip(s.ravel(), th.ravel()) if x >= y) / s.size
        feas_bad += feasibility_ratio(s, th) != brute
    ok = dft_err <= 1e-12 and pars <= 1e-9 and pslr_bad == 0 and feas_bad == 0
    return SuiteResult(
        "metric_plumbing", ok, "DFT 1e-12, Parseval 1e-9 relative, oracles exact",
        f"DFT unitarity {dft_err:.1e}; Parseval {pars:.1e} over {n}; pslr mismatches {pslr_bad}; "
        f"feasibility mismatches {feas_bad}",
        time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------- 10. determinism


def _strip_runtime(text: str) -> list[list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    i = rows[0].index("runtime_s")
    return [r[:i] + r[i + 1:] for r in rows]


def suite_determinism(scale: str = "default", tmpdir=None) -> SuiteResult:
    import tempfile
    from pathlib import Path

    from .harness import SweepSpec, emit, run_sweep

    t0 = time.perf_counter()
    spec = SweepSpec(
        base=desk_config(admm_max_iters=4, rcg_max_iters=30),
        axis="n_users",
        values=(1, 2),
        trials=2,
        schemes=(SchemeId.PROPOSED, SchemeId.FDB_RND_RIS),
    )
    with tempfile.TemporaryDirectory(dir=tmpdir) as d:
        texts = []
        for i in range(2):
            path = Path(d) / f"sweep{i}.csv"
            emit(run_sweep(spec).rows, path, "csv")
            texts.append(path.read_text())
    same = _strip_runtime(texts[0]) == _strip_runtime(texts[1])
    n_rows = len(texts[0].splitlines()) - 1
    return SuiteResult(
        "determinism", same, "bit-identical CSV excluding runtime_s",
        f"two sweeps of {n_rows} rows {'identical' if same else 'DIFFER'}", time.perf_counter() - t0,
    )


SUITES = {
    "gradients": suite_gradients,
    "manifold_invariants": suite_manifold,
    "baseband_closed_form": suite_baseband,
    "penalty_equivalence": suite_penalty,
    "rcg_descent": suite_rcg,
    "admm_convergence": suite_admm,
    "ris_benefit": suite_ris_benefit,
    "monotone_trends": suite_trends,
    "metric_plumbing": suite_metrics,
    "determinism": suite_determinism,
}


def run_all(scale: str = "default") -> list[SuiteResult]:
    results = []
    traces = None
    for name, fn in SUITES.items():
        if name == "rcg_descent":
            res = fn(scale, traces=traces)
        else:
            res = fn(scale)
        if name == "manifold_invariants":
            traces = res.data.get("traces")
        results.append(res)
    return results
