"""Two-dimensional Riemannian charts carrying exact magnetic potentials.

Three chart kinds are built in:

* ``plane_constant_B``: Euclidean metric on R^2, potential
  A = (-B*y/2, B*x/2), constant field F_12 = B.
* ``flat_torus_sine``: flat unit-square torus, potential
  A = (0, a*sin(2*pi*k*x)), field F_12 = 2*pi*k*a*cos(2*pi*k*x).
  The field has zero mean, so A is a globally defined one-form.
* ``conformal_torus``: same potential over the metric exp(2*u)*delta_ij
  with u = u_amp*cos(2*pi*x).

All evaluations accept a single ChartPoint or an array of shape (..., 2)
and broadcast.  On the torus kinds coordinates are wrapped into [0, 1)
before any trigonometric evaluation, so field values are exactly periodic
(bitwise) under integer translations of the chart coordinates.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi


class GeometryKind(enum.Enum):
    PLANE_CONSTANT_B = "plane_constant_B"
    FLAT_TORUS_SINE = "flat_torus_sine"
    CONFORMAL_TORUS = "conformal_torus"


@dataclass(frozen=True)
class ChartPoint:
    """A point in chart coordinates."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("chart coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class GeometrySpec:
    """Immutable description of a chart: kind plus field/metric parameters.

    Unused parameters are kept at their defaults; ``B`` only matters on the
    plane, ``a``/``k`` on the torus kinds, ``u_amp`` on the conformal torus.
    """

    kind: GeometryKind
    B: float = 0.0
    a: float = 0.0
    k: int = 1
    u_amp: float = 0.0

    def __post_init__(self):
        if not isinstance(self.kind, GeometryKind):
            raise ValueError("kind must be a GeometryKind")
        for name in ("B", "a", "u_amp"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")

    @property
    def is_torus(self) -> bool:
        return self.kind is not GeometryKind.PLANE_CONSTANT_B

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "B": float(self.B),
            "a": float(self.a),
            "k": int(self.k),
            "u_amp": float(self.u_amp),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "GeometrySpec":
        """Build a spec from a JSON object.

        Absent numeric parameters default to 0 (k defaults to 1); unknown
        keys are rejected.
        """
        if not isinstance(obj, dict):
            raise ConfigError("geometry must be a JSON object")
        allowed = {"kind", "B", "a", "k", "u_amp"}
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"geometry: unknown keys {sorted(unknown)}")
        if "kind" not in obj:
            raise ConfigError("geometry: missing 'kind'")
        try:
            kind = GeometryKind(obj["kind"])
        except ValueError:
            names = [m.value for m in GeometryKind]
            raise ConfigError(
                f"geometry: unknown kind {obj['kind']!r}; expected one of {names}"
            ) from None
        try:
            return cls(
                kind=kind,
                B=float(obj.get("B", 0.0)),
                a=float(obj.get("a", 0.0)),
                k=int(obj.get("k", 1)),
                u_amp=float(obj.get("u_amp", 0.0)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"geometry: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GeometrySpec":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"geometry JSON: {exc.msg} at line {exc.lineno} column {exc.colno}"
            ) from None
        return cls.from_json_dict(obj)


def _as_xy(p) -> np.ndarray:
    """Coerce a ChartPoint or array-like into an (..., 2) float array."""
    if isinstance(p, ChartPoint):
        return p.as_array()
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("points must have trailing dimension 2")
    return arr


def wrap_point(spec: GeometrySpec, p):
    """Wrap chart coordinates into the fundamental domain [0,1)^2.

    Identity on the plane.  Returns the same container type as the input.
    """
    if isinstance(p, ChartPoint):
        if not spec.is_torus:
            return p
        return ChartPoint(p.x - math.floor(p.x), p.y - math.floor(p.y))
    xy = _as_xy(p)
    if not spec.is_torus:
        return np.array(xy, dtype=float)
    return xy - np.floor(xy)


def _wrapped_x(spec: GeometrySpec, xy: np.ndarray) -> np.ndarray:
    x = xy[..., 0]
    if spec.is_torus:
        x = x - np.floor(x)
    return x


def _conformal_u(spec: GeometrySpec, xy: np.ndarray) -> np.ndarray:
    return spec.u_amp * np.cos(TWO_PI * _wrapped_x(spec, xy))


def metric_eval(spec: GeometrySpec, p) -> np.ndarray:
    """Metric tensor g_ij at p, shape (..., 2, 2).  Symmetric positive definite."""
    xy = _as_xy(p)
    base = xy.shape[:-1]
    g = np.zeros(base + (2, 2), dtype=float)
    if spec.kind is GeometryKind.CONFORMAL_TORUS:
        lam = np.exp(2.0 * _conformal_u(spec, xy))
        g[..., 0, 0] = lam
        g[..., 1, 1] = lam
    else:
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = 1.0
    return g


def metric_grad(spec: GeometrySpec, p) -> np.ndarray:
    """Coordinate derivatives of the metric: out[..., k, i, j] = d_k g_ij."""
    xy = _as_xy(p)
    base = xy.shape[:-1]
    dg = np.zeros(base + (2, 2, 2), dtype=float)
    if spec.kind is GeometryKind.CONFORMAL_TORUS:
        x = _wrapped_x(spec, xy)
        lam = np.exp(2.0 * spec.u_amp * np.cos(TWO_PI * x))
        ux = -TWO_PI * spec.u_amp * np.sin(TWO_PI * x)
        d = 2.0 * ux * lam  # d_x exp(2u); u has no y dependence
        dg[..., 0, 0, 0] = d
        dg[..., 0, 1, 1] = d
    return dg


def metric_inverse(spec: GeometrySpec, p) -> np.ndarray:
    """Inverse metric g^ij at p, shape (..., 2, 2)."""
    xy = _as_xy(p)
    base = xy.shape[:-1]
    gi = np.zeros(base + (2, 2), dtype=float)
    if spec.kind is GeometryKind.CONFORMAL_TORUS:
        lam = np.exp(-2.0 * _conformal_u(spec, xy))
        gi[..., 0, 0] = lam
        gi[..., 1, 1] = lam
    else:
        gi[..., 0, 0] = 1.0
        gi[..., 1, 1] = 1.0
    return gi


def christoffel(spec: GeometrySpec, p) -> np.ndarray:
    """Christoffel symbols of g: out[..., i, j, k] = Gamma^i_{jk}.

    Assembled from the exact metric derivatives via
    Gamma^i_{jk} = (1/2) g^{il} (d_j g_{lk} + d_k g_{lj} - d_l g_{jk}),
    which reduces to the usual conformal closed form on conformal_torus
    and to zero on the flat kinds.
    """
    xy = _as_xy(p)
    base = xy.shape[:-1]
    if spec.kind is not GeometryKind.CONFORMAL_TORUS:
        return np.zeros(base + (2, 2, 2), dtype=float)
    dg = metric_grad(spec, xy)
    gi = metric_inverse(spec, xy)
    # brackets[..., l, j, k] = d_j g_{lk} + d_k g_{lj} - d_l g_{jk}
    br = (np.einsum("...jlk->...ljk", dg)
          + np.einsum("...klj->...ljk", dg)
          - dg)
    return 0.5 * np.einsum("...il,...ljk->...ijk", gi, br)


def potential_eval(spec: GeometrySpec, p) -> np.ndarray:
    """Magnetic potential one-form components (A_1, A_2) at p, shape (..., 2)."""
    xy = _as_xy(p)
    A = np.zeros_like(xy)
    if spec.kind is GeometryKind.PLANE_CONSTANT_B:
        A[..., 0] = -0.5 * spec.B * xy[..., 1]
        A[..., 1] = 0.5 * spec.B * xy[..., 0]
    else:
        x = _wrapped_x(spec, xy)
        A[..., 1] = spec.a * np.sin(TWO_PI * spec.k * x)
    return A


def potential_jac(spec: GeometrySpec, p) -> np.ndarray:
    """Jacobian of the potential: out[..., i, j] = d_i A_j."""
    xy = _as_xy(p)
    base = xy.shape[:-1]
    J = np.zeros(base + (2, 2), dtype=float)
    if spec.kind is GeometryKind.PLANE_CONSTANT_B:
        J[..., 0, 1] = 0.5 * spec.B
        J[..., 1, 0] = -0.5 * spec.B
    else:
        x = _wrapped_x(spec, xy)
        J[..., 0, 1] = TWO_PI * spec.k * spec.a * np.cos(TWO_PI * spec.k * x)
    return J


def field_F(spec: GeometrySpec, p) -> np.ndarray:
    """Field two-form components F_ij = d_i A_j - d_j A_i, shape (..., 2, 2)."""
    J = potential_jac(spec, p)
    return J - np.swapaxes(J, -1, -2)


def field_strength(spec: GeometrySpec, p) -> np.ndarray:
    """Scalar field component F_12 at p."""
    return field_F(spec, p)[..., 0, 1]
