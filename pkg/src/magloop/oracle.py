"""Independent reference values for cross-checking the variational solver.

Nothing here reuses the minimax machinery: closed forms, dense radius scans,
finite differences of the action values, and direct integration of the
Lorentz flow provide second routes to the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .action import (ActionParams, CutoffSpec, action_F_cutoff, action_S,
                     action_S_eps_tau)
from .dynamics import FlowState, integrate_flow, kinetic_energy
from .errors import InvalidOracleInput
from .geometry import ChartPoint, GeometryKind, GeometrySpec, metric_eval
from .loops import Loop, make_circle

__all__ = [
    "larmor_orbit", "circle_action_profile", "fd_gradient",
    "OrbitCandidate", "shooting_periodic", "orbit_to_loop",
]


def larmor_orbit(E: float, B: float) -> tuple[float, float]:
    """Closed-form circular extremal on the constant-field plane.

    Returns (radius, level) = (sqrt(E)/B, pi*E/B): the stationary radius of
    h(r) = 2 pi sqrt(E) r - pi B r^2 and the value there.
    """
    if not (E > 0 and B > 0):
        raise InvalidOracleInput("larmor_orbit requires E > 0 and B > 0")
    return math.sqrt(E) / B, math.pi * E / B


def circle_action_profile(spec: GeometrySpec, E: float, r_grid,
                          n: int) -> np.ndarray:
    """Discrete length-type action S_E of concentric circles on the plane.

    The orientation is chosen so the enclosed flux contributes negatively
    (the branch with an interior maximum).  Torus charts are refused; the
    profile is only a faithful one-parameter reduction on the plane.
    """
    if spec.kind is not GeometryKind.PLANE_CONSTANT_B:
        raise InvalidOracleInput("circle profile is defined on the plane only")
    if E <= 0:
        raise InvalidOracleInput("E must be positive")
    orientation = -1 if spec.B >= 0 else 1
    out = np.empty(len(r_grid))
    for i, r in enumerate(r_grid):
        if r < 0:
            raise InvalidOracleInput("radii must be nonnegative")
        out[i] = action_S(spec, make_circle((0.0, 0.0), float(r),
                                            orientation, n), E)
    return out


def fd_gradient(spec: GeometrySpec, loop: Loop, params: ActionParams,
                cut: CutoffSpec | None = None, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of the action value, shape (N, 2).

    Differentiates exactly the function grad_action claims to differentiate:
    S_{eps,tau} without a cutoff, the cutoff functional with one.
    """
    if h <= 0:
        raise InvalidOracleInput("h must be positive")

    def value(verts):
        lp = Loop(verts, loop.windings)
        if cut is None:
            return action_S_eps_tau(spec, lp, params)
        return action_F_cutoff(spec, lp, params, cut)

    base = loop.vertices
    out = np.empty_like(base)
    for j in range(loop.n):
        for i in range(2):
            vp = base.copy()
            vm = base.copy()
            vp[j, i] += h
            vm[j, i] -= h
            out[j, i] = (value(vp) - value(vm)) / (2.0 * h)
    return out


@dataclass(frozen=True)
class OrbitCandidate:
    """A periodic Lorentz orbit found by shooting."""

    state: FlowState
    period: float
    closure_residual: float
    energy_mech: float
    energy_match: float  # S_E convention: square of the traversal speed

    def to_json_dict(self) -> dict:
        return {
            "period": self.period,
            "closure_residual": self.closure_residual,
            "energy_mech": self.energy_mech,
            "energy_match": self.energy_match,
        }


def _normalize_state(spec, state, E_mech):
    g = metric_eval(spec, state.p)
    v = np.asarray(state.v, dtype=float)
    norm = math.sqrt(float(v @ g @ v))
    if norm == 0.0:
        raise InvalidOracleInput("seed velocity must be nonzero")
    return FlowState(state.p, v * (math.sqrt(2.0 * E_mech) / norm))


def _integrate_to(spec, y0, dt):
    """One RK4 step of length dt from the packed state y0."""
    from .dynamics import _rhs
    k1 = _rhs(spec, y0)
    k2 = _rhs(spec, y0 + 0.5 * dt * k1)
    k3 = _rhs(spec, y0 + 0.5 * dt * k2)
    k4 = _rhs(spec, y0 + dt * k3)
    return y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _torus_gap(spec, delta):
    if spec.is_torus:
        return delta - np.round(delta)
    return delta


def _state_gap(spec, y, y0):
    pos = _torus_gap(spec, y[:2] - y0[:2])
    return float(np.linalg.norm(np.concatenate([pos, y[2:] - y0[2:]])))


def _first_return(spec, y0, p_base, nhat, dt, t_cap):
    """First same-direction crossing of the section through p_base with
    normal nhat, after a short blanking interval.  Returns (t, y) or None.
    """

    def h(y):
        return float(_torus_gap(spec, y[:2] - p_base) @ nhat)

    y, t = y0.copy(), 0.0
    steps = int(math.ceil(t_cap / dt))
    for _ in range(steps):
        y_next = _integrate_to(spec, y, dt)
        if (t > 2.0 * dt and h(y) < 0.0 <= h(y_next)
                and y_next[2:] @ nhat > 0.0):
            lo, hi, ylo = 0.0, dt, y
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                ymid = _integrate_to(spec, ylo, mid - lo)
                if h(ymid) < 0.0:
                    lo, ylo = mid, ymid
                else:
                    hi = mid
                if hi - lo < 1e-16:
                    break
            return t + 0.5 * (lo + hi), _integrate_to(spec, ylo,
                                                      0.5 * (hi - lo) - 0.0)
        y, t = y_next, t + dt
    return None


def shooting_periodic(spec: GeometrySpec, E_mech: float, seed_grid,
                      period_cap: float, tol: float,
                      dt: float = 1e-3) -> list[OrbitCandidate]:
    """Search for periodic orbits of the Lorentz flow at mechanical energy
    E_mech = (1/2) g(v, v).

    For each seed a Poincare section is fixed through the seed point, normal
    to its velocity.  The return map in the two section coordinates (offset
    along the section, launch angle) is driven to a fixed point by a damped
    finite-difference Newton iteration; least-squares solves tolerate the
    singular directions produced by continuous symmetries (a translated
    orbit is equally periodic).  A refined orbit whose full phase-space gap
    after one return is below tol becomes a candidate; near-duplicates
    (close periods and close discrete Frechet distance) are merged.  The
    list may be empty; that is evidence against a periodic orbit near the
    seeds at this resolution.
    """
    if E_mech <= 0:
        raise InvalidOracleInput("E_mech must be positive")
    if period_cap <= 0 or tol <= 0 or dt <= 0:
        raise InvalidOracleInput("period_cap, tol, dt must be positive")
    speed = math.sqrt(2.0 * E_mech)

    candidates = []
    for seed in seed_grid:
        state = _normalize_state(spec, seed, E_mech)
        y0 = state.as_array()
        p_base = y0[:2].copy()
        nhat = y0[2:] / np.linalg.norm(y0[2:])
        mhat = np.array([-nhat[1], nhat[0]])
        phi0 = math.atan2(y0[3], y0[2])

        def launch(u):
            pos = p_base + u[0] * mhat
            vdir = np.array([math.cos(u[1]), math.sin(u[1])])
            g = metric_eval(spec, pos)
            vel = vdir * (speed / math.sqrt(float(vdir @ g @ vdir)))
            return np.concatenate([pos, vel])

        def return_gap(u, t_cap):
            ret = _first_return(spec, launch(u), p_base, nhat, dt, t_cap)
            if ret is None:
                return None
            t_cross, y_cross = ret
            c_out = float(_torus_gap(spec, y_cross[:2] - p_base) @ mhat)
            phi_out = math.atan2(y_cross[3], y_cross[2])
            dphi = (phi_out - u[1] + math.pi) % (2.0 * math.pi) - math.pi
            return np.array([c_out - u[0], dphi]), t_cross, y_cross

        u = np.array([0.0, phi0])
        first = return_gap(u, period_cap)
        if first is None:
            continue
        gap_vec, t_cross, y_cross = first
        t_cap = min(period_cap, 1.6 * t_cross + 4.0 * dt)
        for _ in range(12):
            if np.linalg.norm(gap_vec) < 1e-12:
                break
            fd = 1e-7
            J = np.empty((2, 2))
            failed = False
            for j in range(2):
                up = u.copy()
                up[j] += fd
                probe = return_gap(up, t_cap)
                if probe is None:
                    failed = True
                    break
                J[:, j] = (probe[0] - gap_vec) / fd
            if failed:
                break
            step, *_ = np.linalg.lstsq(J, -gap_vec, rcond=1e-12)
            norm = float(np.linalg.norm(step))
            if norm > 0.1:
                step *= 0.1 / norm
            nxt = return_gap(u + step, t_cap)
            if nxt is None:
                break
            u, (gap_vec, t_cross, y_cross) = u + step, nxt
        y_start = launch(u)
        closure = _state_gap(spec, y_cross, y_start)
        if closure >= tol:
            continue
        refined = FlowState(ChartPoint(float(y_start[0]), float(y_start[1])),
                            y_start[2:])
        candidates.append(OrbitCandidate(
            state=refined, period=float(t_cross),
            closure_residual=float(closure),
            energy_mech=float(kinetic_energy(spec, refined)),
            energy_match=float(speed * speed)))

    return _dedup_candidates(spec, candidates)


def _sample_orbit(spec, cand, n):
    states = integrate_flow(spec, cand.state, cand.period, n)
    return np.array([[s.p.x, s.p.y] for s in states])


def _polyline_gap(P, Q, wrap: bool) -> float:
    """Max over the points of P of the distance to the closed polyline Q
    (torus differences wrapped to the nearest period)."""
    A = Q
    edges = np.roll(Q, -1, axis=0) - A
    diff = P[:, None, :] - A[None, :, :]
    if wrap:
        diff = diff - np.round(diff)
    denom = np.maximum((edges * edges).sum(axis=1), 1e-300)
    t = np.clip((diff * edges[None, :, :]).sum(axis=2) / denom, 0.0, 1.0)
    foot = diff - t[:, :, None] * edges[None, :, :]
    d = np.sqrt((foot * foot).sum(axis=2))
    return float(d.min(axis=1).max())


def _dedup_candidates(spec, candidates, n_probe: int = 256,
                      dist_tol: float = 1e-3):
    """Merge candidates tracing the same orbit up to the field's exact
    translation symmetries (all translations on the constant-field plane,
    y-translations on the torus kinds, whose field and metric depend on x
    only).  Orbits are compared as point sets by symmetric polyline
    Hausdorff distance, which is indifferent to the starting phase, after a
    quick period prefilter."""
    kept = []
    samples = []
    for cand in candidates:
        pts = _sample_orbit(spec, cand, n_probe)[:-1]
        duplicate = False
        for other, opts in zip(kept, samples):
            if abs(cand.period - other.period) > 0.05 * max(cand.period,
                                                            other.period):
                continue
            shift_mean = pts.mean(axis=0) - opts.mean(axis=0)
            if spec.is_torus:
                shift_mean[0] = 0.0  # x is not a symmetry direction
            aligned = opts + shift_mean
            gap = max(_polyline_gap(pts, aligned, spec.is_torus),
                      _polyline_gap(aligned, pts, spec.is_torus))
            if gap < dist_tol:
                duplicate = True
                break
        if not duplicate:
            kept.append(cand)
            samples.append(pts)
    return kept


def orbit_to_loop(spec: GeometrySpec, cand: OrbitCandidate, n: int) -> Loop:
    """Sample a candidate orbit into an n-gon Loop (torus windings recovered
    from the net chart drift over one period)."""
    oversample = 8
    states = integrate_flow(spec, cand.state, cand.period, n * oversample)
    pts = np.array([[s.p.x, s.p.y] for s in states])
    verts = pts[:-1:oversample]
    w = np.zeros((n, 2), dtype=int)
    if spec.is_torus:
        w[-1] = np.round(pts[-1] - pts[0]).astype(int)
    return Loop(verts, w)
