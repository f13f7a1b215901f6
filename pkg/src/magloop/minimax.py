"""Minimax critical levels over throwing-out families of loops.

A family is a string (or a cylinder of strings) of loops from a one-point
loop to a loop of negative action.  Every continuous family in that class
crosses the positive barrier around short loops, so

    c = inf over families of max over the family

is a positive critical level.  The engine estimates it from above:

1. relax every interior loop by monotone backtracking descent,
2. re-interpolate each string to equal spacing, accepting the proposal only
   if repair descent keeps it below the current family maximum,
3. polish the family maximum by a bounded 1-D search over the two segments
   adjacent to the argmax (the segment maximum dominates the level of the
   continuous piecewise-linear family, so the running minimum of polished
   values is a true upper-bound history),
4. finish with a Newton refinement of the argmax using a finite-difference
   Hessian of the analytic gradient, accepted only while the gradient norm
   decreases and the value does not rise above the recorded level.

Levels in the history are non-increasing, and the reported level equals the
family maximum at termination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .action import (ActionParams, CutoffSpec, action_F_cutoff, action_S,
                     action_S_eps_tau, grad_action, grad_norm)
from .errors import NoNegativeLoopFound
from .geometry import GeometrySpec, field_strength
from .loops import Loop, LoopFamily, interpolate, make_circle, make_point_loop, rms_distance

_IMPROVE_RTOL = 1e-9
_PLATEAU_SWEEPS = 6
_INNER_DESCENT = 2
_REPAIR_DESCENT = 8


@dataclass(frozen=True)
class DescentSettings:
    """Budgets and step policy shared by descent and the minimax engine."""

    max_iters: int = 400
    grad_tol: float = 1e-6
    step0: float = 0.1
    backtrack: float = 0.5
    family_size: int = 33
    family_size_p: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (self.grad_tol > 0):
            raise ValueError("grad_tol must be positive")
        if not (self.step0 > 0):
            raise ValueError("step0 must be positive")
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError("backtrack must lie in (0, 1)")
        if self.family_size < 3:
            raise ValueError("family_size must be at least 3")
        if self.family_size_p < 1:
            raise ValueError("family_size_p must be positive")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ValueError("rng_seed must be a nonnegative integer")


@dataclass(frozen=True)
class MinimaxResult:
    """Outcome of one minimax solve."""

    level: float
    argmax: Loop
    grad_norm: float
    history: tuple
    converged: bool

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "history": [[int(i), float(v)] for i, v in self.history],
        }


def _value(spec, loop, params, cut):
    if cut is None:
        return action_S_eps_tau(spec, loop, params)
    return action_F_cutoff(spec, loop, params, cut)


def _descend(spec, loop, params, cut, settings, budget, step):
    """Backtracking gradient descent; value never increases.

    Returns (loop, grad_norm_at_exit, last_good_step).
    """
    val = _value(spec, loop, params, cut)
    for _ in range(budget):
        g = grad_action(spec, loop, params, cut)
        gn = grad_norm(g)
        if gn <= settings.grad_tol:
            return loop, gn, step
        accepted = False
        t = step
        for _ in range(40):
            trial = loop.with_vertices(loop.vertices - t * g)
            tval = _value(spec, trial, params, cut)
            if tval <= val - 1e-4 * t * gn * gn:
                loop, val = trial, tval
                step = min(t / math.sqrt(settings.backtrack),
                           settings.step0 * 16.0)
                accepted = True
                break
            t *= settings.backtrack
        if not accepted:
            return loop, gn, step
    g = grad_action(spec, loop, params, cut)
    return loop, grad_norm(g), step


def descend_loop(spec: GeometrySpec, loop: Loop, params: ActionParams,
                 settings: DescentSettings,
                 cut: CutoffSpec | None = None) -> tuple[Loop, float]:
    """Relax a single loop; the functional value is non-increasing across
    accepted steps and descent stops at grad_tol or when the budget runs out.
    """
    out, gn, _ = _descend(spec, loop, params, cut, settings,
                          settings.max_iters, settings.step0)
    return out, gn


def _segment_polish(spec, row, idx, params, cut):
    """Maximize the value over the two family segments adjacent to row[idx].

    Returns (loop, value) for the best point found; value is at least the
    value at row[idx] itself.
    """
    best_loop = row[idx]
    best_val = _value(spec, best_loop, params, cut)
    for a, b in ((idx - 1, idx), (idx, idx + 1)):
        if a < 0 or b >= len(row):
            continue
        la, lb = row[a], row[b]

        def neg(t):
            return -_value(spec, interpolate(la, lb, float(t)), params, cut)

        res = optimize.minimize_scalar(neg, bounds=(0.0, 1.0),
                                       method="bounded",
                                       options={"xatol": 1e-10})
        if -res.fun > best_val:
            best_val = float(-res.fun)
            best_loop = interpolate(la, lb, float(res.x))
    return best_loop, best_val


def _reinterp_row(spec, row, params, cut, settings, guard):
    """Equal-spacing re-interpolation of a string, with repair.

    Proposed interior loops whose value exceeds ``guard`` are descended; if
    any still exceeds it the original row is kept, so re-interpolation never
    raises the family maximum.
    """
    m = len(row)
    gaps = np.array([rms_distance(row[i], row[i + 1]) for i in range(m - 1)])
    total = float(gaps.sum())
    if total <= 0.0:
        return row
    cum = np.concatenate([[0.0], np.cumsum(gaps)])
    slack = 1e-10 * max(1.0, abs(guard))
    new_row = [row[0]]
    for j in range(1, m - 1):
        target = total * j / (m - 1)
        i = int(np.searchsorted(cum, target, side="right") - 1)
        i = min(max(i, 0), m - 2)
        t = 0.0 if gaps[i] == 0.0 else (target - cum[i]) / gaps[i]
        cand = interpolate(row[i], row[i + 1], float(t))
        if _value(spec, cand, params, cut) > guard + slack:
            cand, _, _ = _descend(spec, cand, params, cut, settings,
                                  _REPAIR_DESCENT, settings.step0)
            if _value(spec, cand, params, cut) > guard + slack:
                return row
        new_row.append(cand)
    new_row.append(row[-1])
    return new_row


def _fd_hessian(gfun, x, h):
    dim = x.size
    H = np.empty((dim, dim))
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = h
        H[:, i] = (gfun(x + e) - gfun(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


def _saddle_refine(spec, loop, params, cut, settings):
    """Newton iteration on the gradient with a pseudo-inverse Hessian solve.

    Symmetry directions (translations, rotations, reparameterizations) give
    near-null Hessian modes; lstsq with an rcond floor projects them out.
    Steps are accepted only when the gradient norm decreases.
    """
    n = loop.n
    w = loop.windings

    def gfun(x):
        return grad_action(spec, Loop(x.reshape(n, 2), w), params, cut).ravel()

    x = loop.vertices.ravel().copy()
    extent = float(np.ptp(loop.vertices, axis=0).max())
    h = 1e-7 * (1.0 + extent)
    cap = 0.5 * (extent + 1e-9)
    g = gfun(x)
    gn = float(np.linalg.norm(g))
    for _ in range(30):
        if gn <= 0.1 * settings.grad_tol:
            break
        H = _fd_hessian(gfun, x, h)
        step, *_ = np.linalg.lstsq(H, -g, rcond=1e-9)
        sn = float(np.linalg.norm(step))
        if not np.all(np.isfinite(step)) or sn == 0.0:
            break
        if sn > cap:
            step *= cap / sn
        t = 1.0
        accepted = False
        for _ in range(12):
            xn = x + t * step
            gnew = gfun(xn)
            gnn = float(np.linalg.norm(gnew))
            if gnn < gn:
                x, g, gn = xn, gnew, gnn
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    return Loop(x.reshape(n, 2), w), gn


def _argmax_rows(vals):
    best = None
    for r, row in enumerate(vals):
        for i, v in enumerate(row):
            if best is None or v > best[0]:
                best = (v, r, i)
    return best[1], best[2], best[0]


def _engine(spec, rows, params, cut, settings):
    """Shared path/cylinder minimax driver; returns (MinimaxResult, rows)."""
    rows = [list(r) for r in rows]
    m = len(rows[0])
    for row in rows:
        terminal_action = action_S(spec, row[-1], params.E)
        if not (terminal_action < 0.0):
            raise NoNegativeLoopFound(
                f"family terminal has action {terminal_action:.6g} >= 0")

    steps = {}
    history = []
    best_level = math.inf
    best_rows = None
    stall = 0
    k = 0
    for k in range(settings.max_iters):
        vals = [[_value(spec, lp, params, cut) for lp in row] for row in rows]
        r0, i0, _ = _argmax_rows(vals)
        ploop, pval = _segment_polish(spec, rows[r0], i0, params, cut)
        tgt = min(max(i0, 1), m - 2)
        if pval >= vals[r0][tgt]:
            rows[r0][tgt] = ploop
            vals[r0][tgt] = pval
        _, _, level_now = _argmax_rows(vals)

        improved = level_now < best_level - _IMPROVE_RTOL * max(1.0, abs(best_level))
        if level_now <= best_level:
            best_level = level_now
            best_rows = [list(r) for r in rows]
        stall = 0 if improved else stall + 1
        history.append((k, best_level))
        if stall >= _PLATEAU_SWEEPS and k >= 3:
            break

        for r, row in enumerate(rows):
            for i in range(1, m - 1):
                row[i], _, st = _descend(spec, row[i], params, cut, settings,
                                         _INNER_DESCENT,
                                         steps.get((r, i), settings.step0))
                steps[(r, i)] = st
        guard = max(_value(spec, lp, params, cut)
                    for row in rows for lp in row)
        rows = [_reinterp_row(spec, row, params, cut, settings, guard)
                for row in rows]
        rows = [list(r) for r in rows]

    # adopt the best recorded family, then refine its argmax
    if best_rows is not None:
        rows = [list(r) for r in best_rows]
    vals = [[_value(spec, lp, params, cut) for lp in row] for row in rows]
    r0, i0, level = _argmax_rows(vals)
    scale = max(1.0, abs(level))
    if 0 < i0 < m - 1:
        refined, _ = _saddle_refine(spec, rows[r0][i0], params, cut, settings)
        if _value(spec, refined, params, cut) <= level + 1e-12 * scale:
            rows[r0][i0] = refined
    vals = [[_value(spec, lp, params, cut) for lp in row] for row in rows]
    r0, i0, level = _argmax_rows(vals)
    argmax = rows[r0][i0]
    gn = grad_norm(grad_action(spec, argmax, params, cut))
    final_level = min(level, history[-1][1]) if history else level
    history.append((k + 1, final_level))
    return (MinimaxResult(level=float(final_level), argmax=argmax,
                          grad_norm=float(gn),
                          history=tuple(history),
                          converged=bool(gn <= settings.grad_tol)),
            rows)


def mountain_pass(spec: GeometrySpec, family: LoopFamily, params: ActionParams,
                  settings: DescentSettings,
                  cut: CutoffSpec | None = None) -> MinimaxResult:
    """Minimax estimate over a path family (single string)."""
    if family.shape != "path":
        raise ValueError("mountain_pass expects a path family")
    result, _ = _engine(spec, family.rows, params, cut, settings)
    return result


def family_minimax(spec: GeometrySpec, family: LoopFamily,
                   params: ActionParams, settings: DescentSettings,
                   cut: CutoffSpec | None = None) -> MinimaxResult:
    """Minimax estimate over a path or cylinder family."""
    result, _ = _engine(spec, family.rows, params, cut, settings)
    return result


def _circle_row(center, radii, orientation, n):
    row = []
    for r in radii:
        if r == 0.0:
            row.append(make_point_loop(center, n))
        else:
            row.append(make_circle(center, float(r), orientation, n))
    return row


def _rectangle_loop(center, width, height, n, clockwise):
    """N points equally spaced along the boundary of an axis-aligned
    rectangle, starting at the lower-left corner."""
    cx, cy = center
    w2, h2 = 0.5 * width, 0.5 * height
    corners = np.array([[cx - w2, cy - h2], [cx + w2, cy - h2],
                        [cx + w2, cy + h2], [cx - w2, cy + h2]])
    if clockwise:
        corners = corners[[0, 3, 2, 1]]
    sides = np.roll(corners, -1, axis=0) - corners
    side_len = np.linalg.norm(sides, axis=1)
    per = float(side_len.sum())
    if per == 0.0:
        return Loop(np.tile(corners[0], (n, 1)))
    cum = np.concatenate([[0.0], np.cumsum(side_len)])
    t = per * np.arange(n) / n
    idx = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, 3)
    frac = (t - cum[idx]) / np.where(side_len[idx] == 0.0, 1.0, side_len[idx])
    verts = corners[idx] + frac[:, None] * sides[idx]
    return Loop(verts)


def _scan_negative_circle(spec, E, center, orientation, n, r_cap):
    """Smallest scanned circle radius about center with action < 0, or None.

    The scan starts at 1.5 times the continuum zero of the radial action
    profile (where the action is already negative for a locally constant
    field) and escalates geometrically up to r_cap, so the terminal stays
    close to the barrier and the swept family resolves it.
    """
    f_abs = abs(field_strength(spec, np.asarray(center)))
    if f_abs <= 0.0 or r_cap <= 0.0:
        return None
    r0 = 2.0 * math.sqrt(E) / f_abs
    for j in range(41):
        r = min(1.5 * r0 * 1.25 ** j, r_cap)
        s = action_S(spec, make_circle(center, r, orientation, n), E)
        if s < -1e-12:
            return r
        if r >= r_cap:
            break
    return None


def init_sweep_family(spec: GeometrySpec, E: float, shape: str, M: int,
                      N: int, rng_seed: int = 0, m_p: int = 8) -> LoopFamily:
    """Construct a throwing-out family whose terminal loops have S_E < 0.

    Centers at a maximizer of the field magnitude, orientation chosen so the
    enclosed flux contributes negatively, radii swept from zero until the
    action turns negative.  On a torus, if no contractible circle works, an
    axis-aligned rectangle hugging a single field band is tried.  Raises
    NoNegativeLoopFound when neither construction produces a negative
    terminal (e.g. a vanishing field).  Deterministic; rng_seed is reserved.
    """
    if shape not in ("path", "cylinder"):
        raise ValueError("shape must be 'path' or 'cylinder'")
    if M < 3:
        raise ValueError("family size must be at least 3")
    if E <= 0:
        raise ValueError("E must be positive")

    if spec.is_torus:
        xs = np.arange(512) / 512.0
        pts = np.stack([xs, np.full_like(xs, 0.5)], axis=1)
        strengths = np.abs(field_strength(spec, pts))
        x_star = float(xs[int(np.argmax(strengths))])
        r_cap = min(0.4, 0.249 / spec.k)
    else:
        x_star = 0.0
        b_abs = abs(spec.B)
        r_cap = 100.0 * math.sqrt(E) / b_abs if b_abs > 0 else 0.0

    if shape == "cylinder":
        ys = [j / m_p for j in range(m_p)] if spec.is_torus else \
             [0.5 * j for j in range(m_p)]
    else:
        ys = [0.5 if spec.is_torus else 0.0]

    rows = []
    fallback = False
    for y in ys:
        center = (x_star, y)
        f_c = field_strength(spec, np.asarray(center))
        orientation = -1 if f_c >= 0 else 1
        r_term = _scan_negative_circle(spec, E, center, orientation, N, r_cap)
        if r_term is not None:
            radii = np.linspace(0.0, r_term, M)
            rows.append(_circle_row(center, radii, orientation, N))
            continue
        if not spec.is_torus:
            raise NoNegativeLoopFound(
                "no circle with negative action exists for this field")
        fallback = True
        break

    if fallback:
        rows = []
        width = 0.5 / spec.k
        best = None
        for h in np.linspace(0.2, 0.98, 27):
            lp = _rectangle_loop((x_star, 0.5), width, h, N, clockwise=True)
            s = action_S(spec, lp, E)
            if s < 0.0 and (best is None or s < best[1]):
                best = (float(h), s)
        if best is None:
            raise NoNegativeLoopFound(
                "no contractible loop with negative action found")
        h_term = best[0]
        for y in ys:
            row = []
            for t in np.linspace(0.0, 1.0, M):
                if t == 0.0:
                    row.append(make_point_loop((x_star, y), N))
                else:
                    row.append(_rectangle_loop((x_star, y), t * width,
                                               t * h_term, N, clockwise=True))
            rows.append(row)

    return LoopFamily(shape=shape, rows=tuple(tuple(r) for r in rows))
