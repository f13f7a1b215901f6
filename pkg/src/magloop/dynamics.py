"""Lorentz flow integration and Euler-Lagrange residuals for loops.

The flow is the second-order system

    dp/dt = v,
    dv^i/dt = -Gamma^i_jk v^j v^k + g^ik F_kj v^j,

whose kinetic energy (1/2) g(v, v) is a first integral.  Integration uses
classical fixed-step RK4, so the energy drift scales like h^4 and stays
below 1e-8 for the step sizes used in the benchmarks.

Residual evaluators measure how far a polygonal loop is from solving the
extremal equations, using winding-aware central differences:

    gamma_dot_j  = N * (d_j + d_{j-1}) / 2
    gamma_ddot_j = N^2 * (d_j - d_{j-1})

Both residuals are scale-normalized (divided by the squared speed) so they
are comparable across energy levels, and both converge at second order in
1/N on smooth extremals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLoop
from .geometry import (ChartPoint, GeometrySpec, christoffel, field_F,
                       metric_eval, metric_inverse)
from .loops import Loop, resample_arclength, speed_cv

_UNIFORM_CV = 1e-9


@dataclass(frozen=True)
class FlowState:
    """Phase-space point: chart position and tangent vector."""

    p: ChartPoint
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (2,):
            raise ValueError("v must be a 2-vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("v must be finite")
        v = np.array(v)
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    def as_array(self) -> np.ndarray:
        return np.array([self.p.x, self.p.y, self.v[0], self.v[1]])

    @classmethod
    def from_array(cls, y: np.ndarray) -> "FlowState":
        return cls(ChartPoint(float(y[0]), float(y[1])), y[2:4])


def kinetic_energy(spec: GeometrySpec, state: FlowState) -> float:
    """Conserved mechanical energy (1/2) g_p(v, v)."""
    g = metric_eval(spec, state.p)
    return 0.5 * float(state.v @ g @ state.v)


def _rhs(spec: GeometrySpec, y: np.ndarray) -> np.ndarray:
    p = y[:2]
    v = y[2:]
    gamma = christoffel(spec, p)
    gi = metric_inverse(spec, p)
    F = field_F(spec, p)
    acc = -np.einsum("ijk,j,k->i", gamma, v, v) + gi @ (F @ v)
    return np.concatenate([v, acc])


def integrate_flow(spec: GeometrySpec, state: FlowState, T: float,
                   steps: int) -> list[FlowState]:
    """Integrate the Lorentz flow for time T with `steps` RK4 steps.

    Returns steps + 1 states including the initial one.  Positions are kept
    in the unwrapped chart so trajectories are continuous; wrap on output if
    needed.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    if not math.isfinite(T) or T <= 0:
        raise ValueError("T must be positive")
    h = T / steps
    y = state.as_array()
    out = [state]
    for _ in range(steps):
        k1 = _rhs(spec, y)
        k2 = _rhs(spec, y + 0.5 * h * k1)
        k3 = _rhs(spec, y + 0.5 * h * k2)
        k4 = _rhs(spec, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append(FlowState.from_array(y))
    return out


def write_trajectory_csv(path, spec: GeometrySpec, states: list[FlowState],
                         T: float):
    """Write t,x,y,vx,vy,energy rows for an integrate_flow output."""
    n = len(states) - 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "vx", "vy", "energy"])
        for i, st in enumerate(states):
            writer.writerow([repr(i * T / n), repr(float(st.p.x)),
                             repr(float(st.p.y)), repr(float(st.v[0])),
                             repr(float(st.v[1])),
                             repr(kinetic_energy(spec, st))])


@dataclass(frozen=True)
class ResidualReport:
    """Per-vertex extremal-equation defect of a loop."""

    per_vertex: np.ndarray
    max_res: float
    mean_res: float
    speed_cv: float

    def to_json_dict(self) -> dict:
        return {
            "max_res": self.max_res,
            "mean_res": self.mean_res,
            "speed_cv": self.speed_cv,
        }


def _central_derivatives(loop: Loop):
    d = loop.displacements()
    d_prev = np.roll(d, 1, axis=0)
    vel = 0.5 * loop.n * (d + d_prev)
    acc = loop.n ** 2 * (d - d_prev)
    return vel, acc


def _covariant_parts(spec: GeometrySpec, loop: Loop):
    v = loop.vertices
    gamma = christoffel(spec, v)
    g = metric_eval(spec, v)
    gi = metric_inverse(spec, v)
    F = field_F(spec, v)
    vel, acc = _central_derivatives(loop)
    cov_acc = acc + np.einsum("nijk,nj,nk->ni", gamma, vel, vel)
    lorentz = np.einsum("nij,njk,nk->ni", gi, F, vel)
    sp = np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", vel, g, vel), 0.0))
    if np.any(sp == 0.0):
        raise DegenerateLoop("residual undefined where the speed vanishes")
    return g, cov_acc, lorentz, sp


def _report(spec: GeometrySpec, loop: Loop, res: np.ndarray,
            g: np.ndarray, cv: float) -> ResidualReport:
    norms = np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", res, g, res), 0.0))
    return ResidualReport(per_vertex=norms, max_res=float(norms.max()),
                          mean_res=float(norms.mean()), speed_cv=cv)


def el_residual_SE(spec: GeometrySpec, loop: Loop, E: float) -> ResidualReport:
    """Defect of the length-type extremal equation at energy E.

    The equation compares sqrt(E) times the covariant acceleration against
    the Lorentz force along the loop; an exact extremal traversed at constant
    speed zeroes it.  Non-uniform loops are resampled to arc length
    internally (the equation presumes that parameterization); the reported
    speed_cv always refers to the input loop.
    """
    if E <= 0:
        raise ValueError("E must be positive")
    cv = speed_cv(spec, loop)
    work = loop if cv <= _UNIFORM_CV else resample_arclength(spec, loop, loop.n)
    g, cov_acc, lorentz, sp = _covariant_parts(spec, work)
    rootE = math.sqrt(E)
    res = rootE * cov_acc / (sp * sp)[:, None] - lorentz / sp[:, None]
    return _report(spec, work, res, g, cv)


def el_residual_deq(spec: GeometrySpec, loop: Loop, eps: float, tau: float,
                    delta: float = 1e-9) -> ResidualReport:
    """Defect of the regularized extremal equation at (eps, tau).

    The force denominator is 2*eps + (1+tau) * s^(tau-1) with the same speed
    floor as the action; at eps = tau = 0 the equation coincides with the
    length-type one at E = 1 on arc-length loops.
    """
    if eps < 0 or not (0.0 <= tau < 1.0):
        raise ValueError("require eps >= 0 and 0 <= tau < 1")
    cv = speed_cv(spec, loop)
    g, cov_acc, lorentz, sp = _covariant_parts(spec, loop)
    denom = 2.0 * eps + (1.0 + tau) * np.power(np.maximum(sp, delta), tau - 1.0)
    res = (cov_acc - lorentz / denom[:, None]) / (sp * sp)[:, None]
    return _report(spec, loop, res, g, cv)
