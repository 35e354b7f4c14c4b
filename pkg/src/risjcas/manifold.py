"""Riemannian conjugate gradient on the power sphere and the complex circle.

Points, tangent vectors and Euclidean gradients are complex ndarrays of the
same shape. The inner product is ``Re tr(A^H B)``; the Euclidean gradient of a
real cost ``f(Z)`` is ``df/dRe(Z) + j df/dIm(Z)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ManifoldSpec",
    "RcgSettings",
    "CostOracle",
    "RcgResult",
    "LineSearchError",
    "inner",
    "tangent_project",
    "retract",
    "polak_ribiere",
    "armijo_step",
    "rcg_minimize",
]

_ON_MANIFOLD_TOL = 1e-6


class LineSearchError(RuntimeError):
    """No step satisfied the sufficient-decrease condition."""


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str  # "power_sphere" | "complex_circle"
    shape: tuple[int, ...]
    radius: float = 1.0
    projection_mode: str = "strict"  # "strict" | "entrywise"; sphere only

    def __post_init__(self):
        if self.kind not in ("power_sphere", "complex_circle"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.projection_mode not in ("strict", "entrywise"):
            raise ValueError(f"unknown projection mode {self.projection_mode!r}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if any(d < 1 for d in self.shape):
            raise ValueError("shape dimensions must be positive")

    @classmethod
    def power_sphere(cls, radius: float, shape, projection_mode: str = "strict") -> "ManifoldSpec":
        return cls("power_sphere", tuple(shape), float(radius), projection_mode)

    @classmethod
    def complex_circle(cls, shape) -> "ManifoldSpec":
        return cls("complex_circle", tuple(shape))

    def residual(self, point: np.ndarray) -> float:
        """Distance-like violation of the manifold constraint."""
        if self.kind == "power_sphere":
            return abs(np.linalg.norm(point) - self.radius)
        return float(np.max(np.abs(np.abs(point) - 1.0)))

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "power_sphere":
            z = rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)
            return self.radius * z / np.linalg.norm(z)
        return np.exp(1j * rng.uniform(0.0, 2 * np.pi, self.shape))


@dataclass(frozen=True)
class RcgSettings:
    max_iters: int = 1000
    grad_tol: float = 1e-3
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_initial_step: float = 1.0
    pr_plus: bool = True
    max_backtracks: int = 50

    def __post_init__(self):
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError("armijo_shrink must lie in (0, 1)")
        if not self.armijo_initial_step > 0:
            raise ValueError("armijo_initial_step must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")


@dataclass
class CostOracle:
    """Cost and Euclidean gradient of a real function of a complex array."""

    cost: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


@dataclass
class RcgResult:
    point: np.ndarray
    cost: float
    iterations: int
    grad_norms: list[float] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)
    max_tangent_residual: float = 0.0
    max_manifold_residual: float = 0.0


def inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a, b).real)


def _check_on(m: ManifoldSpec, point: np.ndarray) -> None:
    if m.residual(point) > _ON_MANIFOLD_TOL * max(1.0, m.radius if m.kind == "power_sphere" else 1.0):
        raise ValueError(f"point is off the manifold (residual {m.residual(point):.3g})")


def tangent_project(m: ManifoldSpec, point: np.ndarray, ambient: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``ambient`` onto the tangent space at ``point``."""
    _check_on(m, point)
    if m.kind == "power_sphere" and m.projection_mode == "strict":
        return ambient - (inner(point, ambient) / m.radius**2) * point
    # entrywise: complex circle, or the literal entrywise sphere rule
    return ambient - np.real(ambient * np.conj(point)) * point


def retract(m: ManifoldSpec, point: np.ndarray, tangent: np.ndarray, step: float) -> np.ndarray:
    z = point + step * tangent
    if m.kind == "power_sphere":
        nrm = np.linalg.norm(z)
        if nrm == 0.0:
            raise ZeroDivisionError("retraction through the origin")
        return m.radius * z / nrm
    mag = np.abs(z)
    if np.any(mag == 0.0):
        raise ZeroDivisionError("retraction hits a zero entry")
    return z / mag


def polak_ribiere(g_now: np.ndarray, g_prev: np.ndarray, prev_projected: np.ndarray, pr_plus: bool = True) -> float:
    """Polak-Ribiere coefficient; ``prev_projected`` is the old gradient moved to the new tangent space."""
    den = inner(g_prev, g_prev)
    if den == 0.0:
        raise ZeroDivisionError("previous gradient has zero norm")
    beta = inner(g_now, g_now - prev_projected) / den
    return max(beta, 0.0) if pr_plus else beta


def armijo_step(
    oracle: CostOracle,
    m: ManifoldSpec,
    point: np.ndarray,
    direction: np.ndarray,
    settings: RcgSettings,
    *,
    cost0: float | None = None,
    grad: np.ndarray | None = None,
    initial: float | None = None,
) -> tuple[float, np.ndarray, float]:
    """Backtracking Armijo rule along the retraction curve.

    Returns ``(step, new_point, new_cost)`` for the largest
    ``step = initial * shrink**i`` with
    ``cost(R(point, step*direction)) <= cost(point) + c1 * step * <grad, direction>``.
    """
    f0 = oracle.cost(point) if cost0 is None else cost0
    if grad is None:
        grad = tangent_project(m, point, oracle.grad(point))
    slope = inner(grad, direction)
    step = settings.armijo_initial_step if initial is None else initial
    for _ in range(settings.max_backtracks + 1):
        cand = retract(m, point, direction, step)
        fc = oracle.cost(cand)
        if fc <= f0 + settings.armijo_c1 * step * slope:
            return step, cand, fc
        step *= settings.armijo_shrink
    raise LineSearchError(
        f"no acceptable step after {settings.max_backtracks} backtracks (slope {slope:.3g})"
    )


def rcg_minimize(
    oracle: CostOracle,
    m: ManifoldSpec,
    init: np.ndarray,
    settings: RcgSettings,
) -> RcgResult:
    """Riemannian conjugate gradient with Armijo steps and Polak-Ribiere updates.

    Stops after ``settings.max_iters`` iterations or once the Riemannian
    gradient norm drops to ``settings.grad_tol``. A line search that cannot
    make progress (round-off level) also ends the run.
    """
    x = np.array(init, dtype=complex)
    _check_on(m, x)
    f = float(oracle.cost(x))
    eg = oracle.grad(x)
    if not np.isfinite(f) or not np.all(np.isfinite(eg)):
        raise FloatingPointError("oracle returned a non-finite cost or gradient")
    g = tangent_project(m, x, eg)
    gn = float(np.linalg.norm(g))
    res = RcgResult(point=x, cost=f, iterations=0, grad_norms=[gn], costs=[f])
    res.max_tangent_residual = _tangent_residual(m, x, g)
    d = -g
    drop = 0.0  # cost decrease of the previous iteration
    q = 0
    while gn > settings.grad_tol and q < settings.max_iters:
        slope = inner(g, d)
        if slope >= 0:
            d = -g
            slope = -gn**2
        # initial trial step: the step at which the previous decrease would be
        # reached along the current slope, capped at the configured step
        step0 = settings.armijo_initial_step
        if drop > 0.0:
            step0 = min(step0, 2.02 * drop / -slope)
        try:
            step, x_new, f_new = armijo_step(
                oracle, m, x, d, settings, cost0=f, grad=g, initial=step0
            )
        except LineSearchError:
            break
        eg = oracle.grad(x_new)
        if not np.isfinite(f_new) or not np.all(np.isfinite(eg)):
            raise FloatingPointError("oracle returned a non-finite cost or gradient")
        g_new = tangent_project(m, x_new, eg)
        beta = polak_ribiere(g_new, g, tangent_project(m, x_new, g), settings.pr_plus)
        d = -g_new + beta * tangent_project(m, x_new, d)
        drop = f - float(f_new)
        x, f, g = x_new, float(f_new), g_new
        gn = float(np.linalg.norm(g))
        q += 1
        res.costs.append(f)
        res.grad_norms.append(gn)
        res.max_tangent_residual = max(res.max_tangent_residual, _tangent_residual(m, x, g))
        res.max_manifold_residual = max(res.max_manifold_residual, m.residual(x))
    res.point, res.cost, res.iterations = x, f, q
    return res


def _tangent_residual(m: ManifoldSpec, point: np.ndarray, tangent: np.ndarray) -> float:
    """Normalized tangency violation of ``tangent`` at ``point``."""
    tn = np.linalg.norm(tangent)
    if tn == 0.0:
        return 0.0
    if m.kind == "power_sphere" and m.projection_mode == "strict":
        return abs(inner(tangent, point)) / (tn * np.linalg.norm(point))
    return float(np.max(np.abs(np.real(tangent * np.conj(point))))) / tn
