"""Discrete magnetic action functionals on polygonal loops and their gradients.

For a loop with per-edge rescaled speeds s_j = sqrt(E) * N * ell_j (ell_j the
Riemannian edge length) and circulation C = sum_j A(m_j) . d_j, the package
evaluates three functionals:

  action_S          S_E      = sqrt(E) * L + C        (length-type action)
  action_S_eps_tau  S_eps,tau = (1/N) sum_j [eps * s_j^2 + s_j^(1+tau)] + C
  action_F_cutoff   F        = f(S_0,tau) * S_eps,tau

with f a cubic smoothstep vanishing below lo = c_ref/20 and equal to 1 above
hi = c_ref/10.  At eps = tau = 0 the regularized sum collapses to
(1/N) sum s_j + C = sqrt(E) * L + C, so action_S is the common E = 1 limit.
Speeds are floored at ``delta`` inside the power term only, which keeps the
functional smooth through one-point loops without perturbing any loop whose
speeds exceed the floor.

Gradients are exact derivatives of these discrete sums (midpoint metric and
potential, forward-difference edges), not discretizations of a continuum
formula; finite differences of the values reproduce them to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (GeometrySpec, metric_eval, metric_grad,
                       potential_eval, potential_jac)
from .loops import Loop


@dataclass(frozen=True)
class ActionParams:
    """Energy level and regularization strengths.

    E > 0; eps >= 0; 0 <= tau < 1; delta >= 0 is the speed floor used inside
    the s^(1+tau) term and the tau-dependent force denominator.
    """

    E: float = 1.0
    eps: float = 0.0
    tau: float = 0.0
    delta: float = 1e-9

    def __post_init__(self):
        if not (math.isfinite(self.E) and self.E > 0):
            raise ValueError("E must be positive")
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ValueError("eps must be nonnegative")
        if not (0.0 <= self.tau < 1.0):
            raise ValueError("tau must satisfy 0 <= tau < 1")
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValueError("delta must be nonnegative")


@dataclass(frozen=True)
class CutoffSpec:
    """Smoothstep window for the cutoff functional.

    The reference level c_ref fixes the thresholds lo = c_ref/20 and
    hi = c_ref/10; beta is the admissible increase of the minimax level
    introduced by the cutoff.
    """

    c_ref: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.c_ref) and self.c_ref > 0):
            raise ValueError("c_ref must be positive")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive")

    @property
    def lo(self) -> float:
        return self.c_ref / 20.0

    @property
    def hi(self) -> float:
        return self.c_ref / 10.0


def cutoff_f(x: float, cut: CutoffSpec) -> float:
    """Cubic smoothstep: 0 below lo, 3t^2 - 2t^3 between, 1 above hi."""
    if x <= cut.lo:
        return 0.0
    if x >= cut.hi:
        return 1.0
    t = (x - cut.lo) / (cut.hi - cut.lo)
    return t * t * (3.0 - 2.0 * t)


def cutoff_df(x: float, cut: CutoffSpec) -> float:
    """Derivative of cutoff_f; nonnegative, zero outside (lo, hi)."""
    if x <= cut.lo or x >= cut.hi:
        return 0.0
    t = (x - cut.lo) / (cut.hi - cut.lo)
    return 6.0 * t * (1.0 - t) / (cut.hi - cut.lo)


def _edge_quantities(spec: GeometrySpec, loop: Loop, E: float):
    d = loop.displacements()
    m = loop.midpoints()
    g = metric_eval(spec, m)
    q = np.maximum(np.einsum("ni,nij,nj->n", d, g, d), 0.0)
    ell = np.sqrt(q)
    s = math.sqrt(E) * loop.n * ell
    return d, m, g, ell, s


def circulation(spec: GeometrySpec, loop: Loop) -> float:
    """Discrete line integral of the potential, sum_j A(m_j) . d_j.

    Exact for the linear plane potential: equals B times the signed polygon
    area.
    """
    d = loop.displacements()
    A = potential_eval(spec, loop.midpoints())
    return float(np.einsum("ni,ni->", A, d))


def action_S(spec: GeometrySpec, loop: Loop, E: float) -> float:
    """Length-type action sqrt(E) * length + circulation."""
    if E <= 0:
        raise ValueError("E must be positive")
    _, _, _, ell, _ = _edge_quantities(spec, loop, E)
    return math.sqrt(E) * float(ell.sum()) + circulation(spec, loop)


def _speed_sums(s: np.ndarray, n: int, params: ActionParams):
    """Returns (sum s^(1+tau)/N with floor, sum eps*s^2/N)."""
    sf = np.maximum(s, params.delta)
    p0 = float(np.power(sf, 1.0 + params.tau).sum()) / n
    p1 = params.eps * float((s * s).sum()) / n
    return p0, p1


def action_pair(spec: GeometrySpec, loop: Loop,
                params: ActionParams) -> tuple[float, float]:
    """(S_{0,tau}, S_{eps,tau}) evaluated in one pass."""
    _, _, _, _, s = _edge_quantities(spec, loop, params.E)
    p0, p1 = _speed_sums(s, loop.n, params)
    circ = circulation(spec, loop)
    return p0 + circ, p0 + p1 + circ


def action_S_eps_tau(spec: GeometrySpec, loop: Loop,
                     params: ActionParams) -> float:
    """Regularized action S_{eps,tau}; equals action_S at eps = tau = 0."""
    return action_pair(spec, loop, params)[1]


def action_F_cutoff(spec: GeometrySpec, loop: Loop, params: ActionParams,
                    cut: CutoffSpec) -> float:
    """Cutoff functional f(S_{0,tau}) * S_{eps,tau}; nonnegative once
    c_ref >= 0 since f vanishes wherever S_{0,tau} <= lo."""
    s0, s1 = action_pair(spec, loop, params)
    return cutoff_f(s0, cut) * s1


def _grad_components(spec: GeometrySpec, loop: Loop, params: ActionParams):
    """Exact gradients of S_{0,tau} and S_{eps,tau} plus their values.

    Returns (s0, s1, grad0, grad1) with grads of shape (N, 2).
    """
    n = loop.n
    d, m, g, ell, s = _edge_quantities(spec, loop, params.E)
    rootE = math.sqrt(params.E)

    sf = np.maximum(s, params.delta)
    p0 = float(np.power(sf, 1.0 + params.tau).sum()) / n
    p1 = params.eps * float((s * s).sum()) / n
    A = potential_eval(spec, m)
    circ = float(np.einsum("ni,ni->", A, d))

    # d(per-edge speed term)/ds; the floored branch is constant in s.
    w0 = (1.0 + params.tau) * np.power(sf, params.tau) * (s >= params.delta) / n
    w1 = w0 + 2.0 * params.eps * s / n

    # ds/d(quadratic form q): s = sqrt(E) n sqrt(q)
    pos = ell > 0.0
    dsdq = np.zeros_like(ell)
    dsdq[pos] = rootE * n / (2.0 * ell[pos])

    gd = np.einsum("nij,nj->ni", g, d)
    dG = metric_grad(spec, m)
    T = np.einsum("nkij,ni,nj->nk", dG, d, d)
    dq_da = -2.0 * gd + 0.5 * T
    dq_db = 2.0 * gd + 0.5 * T

    J = potential_jac(spec, m)
    half_Jd = 0.5 * np.einsum("nki,ni->nk", J, d)
    circ_a = half_Jd - A
    circ_b = half_Jd + A

    def assemble(weights):
        coef = (weights * dsdq)[:, None]
        grad = np.zeros((n, 2))
        contrib_a = coef * dq_da + circ_a
        contrib_b = coef * dq_db + circ_b
        grad += contrib_a
        grad += np.roll(contrib_b, 1, axis=0)
        return grad

    return p0 + circ, p0 + p1 + circ, assemble(w0), assemble(w1)


def grad_action(spec: GeometrySpec, loop: Loop, params: ActionParams,
                cut: CutoffSpec | None = None) -> np.ndarray:
    """Gradient of S_{eps,tau} (cut None) or of the cutoff functional F.

    Shape (N, 2); entry (j, i) is the derivative with respect to vertex j's
    i-th chart coordinate.  Winding offsets are fixed data, so the gradient
    is well defined on torus loops in any covering representative.
    """
    s0, s1, g0, g1 = _grad_components(spec, loop, params)
    if cut is None:
        return g1
    f = cutoff_f(s0, cut)
    df = cutoff_df(s0, cut)
    return df * s1 * g0 + f * g1


def grad_norm(gradient: np.ndarray) -> float:
    """Euclidean norm of the flattened gradient array."""
    return float(np.linalg.norm(gradient.ravel()))
