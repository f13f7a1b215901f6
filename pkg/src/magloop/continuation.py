"""Regularization continuation (eps, tau) -> 0 and outcome classification.

A run bootstraps a reference level c_ref by one minimax solve without any
cutoff at (eps0, tau0), fixes the cutoff window and margin beta from it,
then follows the minimax level down a geometric schedule, warm-starting each
step's family from the previous one.  Each step records the argmax loop, its
rescaled length l = sqrt(E) * length, the combination nu = eps * l, and the
implied energies of the limiting orbit:

    E_lin = E * (1 + 2 nu)       (first-order shift)
    E_exact = E * (1 + 2 nu)^2     (exact curvature balance)

Two terminal behaviors are distinguished.  Either the lengths stabilize and
the final loop solves the extremal equation (ConvergedExtremal at energy E),
or the lengths grow while nu shrinks, in which case the recorded loops are
approximate extremals at the implied energies (DivergingLengths with the
energy ladder attached).  Anything else is Inconclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .action import ActionParams, CutoffSpec
from .dynamics import ResidualReport, el_residual_SE
from .geometry import GeometrySpec
from .loops import Loop, length
from .minimax import DescentSettings, MinimaxResult, _engine, init_sweep_family


@dataclass(frozen=True)
class Schedule:
    """Joint geometric schedule eps_n = eps0 rho^n, tau_n = tau0 rho^n."""

    eps0: float
    tau0: float
    rho: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.eps0) and self.eps0 > 0):
            raise ValueError("eps0 must be positive")
        if not (0.0 <= self.tau0 < 1.0):
            raise ValueError("tau must satisfy 0 <= tau < 1")
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")

    def eps(self, n: int) -> float:
        return self.eps0 * self.rho ** n

    def tau(self, n: int) -> float:
        return self.tau0 * self.rho ** n

    def pairs(self, nested: bool = False) -> list[tuple[float, float]]:
        """The (eps, tau) visit order; nested mode sweeps tau first at fixed
        eps0, then eps at the final tau."""
        if not nested:
            return [(self.eps(n), self.tau(n)) for n in range(self.n_steps)]
        tau_min = self.tau(self.n_steps - 1)
        first = [(self.eps0, self.tau(n)) for n in range(self.n_steps)]
        second = [(self.eps(n), tau_min) for n in range(1, self.n_steps)]
        return first + second


def implied_energy(nu: float, E: float) -> tuple[float, float]:
    """(first-order, exact) energies of the orbit a diverging sequence
    approximates: E(1+2nu) and E(1+2nu)^2."""
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    if E <= 0:
        raise ValueError("E must be positive")
    shift = 1.0 + 2.0 * nu
    return E * shift, E * shift * shift


@dataclass(frozen=True)
class ContinuationRecord:
    """One continuation step: regularization, level, and argmax diagnostics."""

    step: int
    eps: float
    tau: float
    level: float
    loop: Loop
    l: float
    nu: float
    E_lin: float
    E_exact: float
    residual: ResidualReport
    minimax: MinimaxResult

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "eps": self.eps,
            "tau": self.tau,
            "level": self.level,
            "l": self.l,
            "nu": self.nu,
            "E_lin": self.E_lin,
            "E_exact": self.E_exact,
            "residual": self.residual.to_json_dict(),
            "minimax": self.minimax.to_json_dict(),
        }


@dataclass(frozen=True)
class ConvergedExtremal:
    """Lengths stabilized; the final loop is an extremal at energy E."""

    loop: Loop
    residual: ResidualReport

    case = "ConvergedExtremal"

    def to_json_dict(self) -> dict:
        return {"case": self.case, "residual": self.residual.to_json_dict()}


@dataclass(frozen=True)
class DivergingLengths:
    """Lengths grow while nu shrinks; each recorded loop approximates an
    extremal at its implied energy."""

    pairs: tuple
    ladder_lin: tuple
    ladder_exact: tuple

    case = "DivergingLengths"

    def to_json_dict(self) -> dict:
        return {
            "case": self.case,
            "ladder_lin": list(self.ladder_lin),
            "ladder_exact": list(self.ladder_exact),
        }


@dataclass(frozen=True)
class Inconclusive:
    """Neither terminal pattern matched within the run's budget."""

    reason: str

    case = "Inconclusive"

    def to_json_dict(self) -> dict:
        return {"case": self.case, "reason": self.reason}


Classification = ConvergedExtremal | DivergingLengths | Inconclusive


def classify_outcome(records: list[ContinuationRecord],
                     residual_tol: float = 1e-2,
                     length_window: float = 0.01) -> Classification:
    """Pattern classification of a finished continuation run.

    ConvergedExtremal: the last three rescaled lengths agree within
    length_window (relative) and the final extremal-equation residual is
    below residual_tol.  DivergingLengths: the last three lengths strictly
    increase while nu strictly decreases.  Otherwise Inconclusive.
    """
    if len(records) < 3:
        return Inconclusive(f"need at least 3 records, got {len(records)}")
    tail = records[-3:]
    ls = [r.l for r in tail]
    nus = [r.nu for r in tail]
    spread = (max(ls) - min(ls)) / max(min(ls), 1e-300)
    final_res = records[-1].residual.max_res
    if spread <= length_window:
        if final_res < residual_tol:
            return ConvergedExtremal(records[-1].loop, records[-1].residual)
        return Inconclusive(
            f"lengths stabilized (spread {spread:.3g}) but final residual "
            f"{final_res:.3g} >= {residual_tol:.3g}")
    if ls[0] < ls[1] < ls[2] and nus[0] > nus[1] > nus[2]:
        return DivergingLengths(
            pairs=tuple((r.E_lin, r.loop) for r in records),
            ladder_lin=tuple(r.E_lin for r in records),
            ladder_exact=tuple(r.E_exact for r in records),
        )
    return Inconclusive(
        f"no terminal pattern: lengths {ls}, nu {nus}, "
        f"final residual {final_res:.3g}")


def continuation_run(spec: GeometrySpec, E: float, w_shape: str,
                     schedule: Schedule, settings: DescentSettings, *,
                     n_vertices: int = 128, delta: float = 1e-9,
                     beta_frac: float = 0.1, residual_tol: float = 1e-2,
                     nested: bool = False
                     ) -> tuple[list[ContinuationRecord], Classification, float]:
    """Run the full continuation; returns (records, classification, c_ref).

    Raises NoNegativeLoopFound if no sweep family can be constructed.  The
    cutoff window is fixed once from the bootstrap level c_ref and kept for
    the whole schedule; beta = beta_frac * c_ref.
    """
    family = init_sweep_family(spec, E, w_shape, settings.family_size,
                               n_vertices, settings.rng_seed,
                               m_p=settings.family_size_p)
    params0 = ActionParams(E=E, eps=schedule.eps0, tau=schedule.tau0,
                           delta=delta)
    boot, rows = _engine(spec, family.rows, params0, None, settings)
    c_ref = boot.level
    if not (c_ref > 0.0):
        return [], Inconclusive(
            f"bootstrap level {c_ref:.6g} is not positive"), c_ref
    cut = CutoffSpec(c_ref=c_ref, beta=beta_frac * c_ref)

    records = []
    for n, (eps_n, tau_n) in enumerate(schedule.pairs(nested)):
        params = ActionParams(E=E, eps=eps_n, tau=tau_n, delta=delta)
        result, rows = _engine(spec, rows, params, cut, settings)
        loop = result.argmax
        l_resc = math.sqrt(E) * length(spec, loop)
        nu = eps_n * l_resc
        e_lin, e_exact = implied_energy(nu, E)
        rep = el_residual_SE(spec, loop, E)
        records.append(ContinuationRecord(
            step=n, eps=eps_n, tau=tau_n, level=result.level, loop=loop,
            l=l_resc, nu=nu, E_lin=e_lin, E_exact=e_exact,
            residual=rep, minimax=result))
    return records, classify_outcome(records, residual_tol), c_ref
