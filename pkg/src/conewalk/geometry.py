"""Closed-form cone library.

Each supported cone carries a positive harmonic function ``u`` that vanishes
on the boundary and is homogeneous of degree ``p``, plus the Euclidean
distance to the boundary ``d(x)``.  Supported kinds:

==========  ===  =====================================  ==========
kind        dim  u(x)                                   p
==========  ===  =====================================  ==========
halfline    1    x                                      1
halfspace   d    x_d                                    1
orthant     d    prod(x_i)                              d
wedge       2    r^(pi/alpha) * cos((pi/alpha) theta)   pi/alpha
weyl_d2     2    x1^2 - x2^2                            2
==========  ===  =====================================  ==========

The wedge is symmetric about the positive x-axis, theta in
(-alpha/2, alpha/2).  All cones are open; u is defined to be 0 outside.
All functions accept a single point of shape (d,) or a batch (n, d) and
are safe for concurrent use (no state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Cone",
    "parse_cone",
    "contains",
    "dist_to_boundary",
    "u_value",
    "exponent_p",
    "canonical_axis",
    "assumption_g_probe",
]


class ConeError(ValueError):
    """Invalid cone specification or point of wrong dimension."""


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int
    alpha: float | None = None  # wedge opening angle, radians

    def __post_init__(self):
        if self.kind not in ("halfline", "halfspace", "orthant", "wedge", "weyl_d2"):
            raise ConeError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ConeError("dimension must be positive")
        if self.kind == "halfline" and self.dim != 1:
            raise ConeError("halfline is one-dimensional")
        if self.kind in ("wedge", "weyl_d2") and self.dim != 2:
            raise ConeError(f"{self.kind} is two-dimensional")
        if self.kind == "wedge":
            if self.alpha is None or not (0.0 < self.alpha < 2 * math.pi):
                raise ConeError("wedge angle must lie in (0, 2*pi)")
        elif self.alpha is not None:
            raise ConeError("alpha is only meaningful for wedge cones")

    def spec_string(self) -> str:
        if self.kind == "halfline":
            return "halfline"
        if self.kind == "weyl_d2":
            return "weyl_d2"
        if self.kind == "wedge":
            return f"wedge:{self.alpha:g}"
        return f"{self.kind}:{self.dim}"


def parse_cone(text: str) -> Cone:
    """Parse the cone grammar:

    ``halfline | halfspace:<d> | orthant:<d> | wedge:<alpha> | weyl_d2``
    """
    parts = text.strip().split(":")
    head = parts[0]
    try:
        if head == "halfline" and len(parts) == 1:
            return Cone("halfline", 1)
        if head == "weyl_d2" and len(parts) == 1:
            return Cone("weyl_d2", 2)
        if head == "halfspace" and len(parts) == 2:
            return Cone("halfspace", int(parts[1]))
        if head == "orthant" and len(parts) == 2:
            return Cone("orthant", int(parts[1]))
        if head == "wedge" and len(parts) == 2:
            return Cone("wedge", 2, float(parts[1]))
    except ConeError:
        raise
    except ValueError as exc:
        raise ConeError(f"bad cone spec {text!r}: {exc}") from None
    raise ConeError(f"bad cone spec {text!r}")


def _as_batch(cone: Cone, x) -> tuple[np.ndarray, bool]:
    """Coerce x to shape (n, d); returns (array, was_single_point)."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0 and cone.dim == 1:
        a = a.reshape(1, 1)
        return a, True
    if a.ndim == 1:
        if a.shape[0] != cone.dim:
            raise ConeError(
                f"point has dimension {a.shape[0]}, cone has dimension {cone.dim}"
            )
        return a.reshape(1, -1), True
    if a.ndim == 2:
        if a.shape[1] != cone.dim:
            raise ConeError(
                f"points have dimension {a.shape[1]}, cone has dimension {cone.dim}"
            )
        return a, False
    raise ConeError("points must be a vector or an (n, d) array")


def _maybe_scalar(v: np.ndarray, single: bool):
    return float(v[0]) if single else v


def exponent_p(cone: Cone) -> float:
    """Homogeneity degree of u."""
    if cone.kind in ("halfline", "halfspace"):
        return 1.0
    if cone.kind == "orthant":
        return float(cone.dim)
    if cone.kind == "wedge":
        return math.pi / cone.alpha
    return 2.0  # weyl_d2


def canonical_axis(cone: Cone) -> np.ndarray:
    """The fixed interior unit direction used for boundary-offset shifts.

    Bisector for wedge-like cones, all-ones direction for the orthant,
    the inward normal for half-spaces.
    """
    if cone.kind == "halfline":
        return np.array([1.0])
    if cone.kind == "halfspace":
        e = np.zeros(cone.dim)
        e[-1] = 1.0
        return e
    if cone.kind == "orthant":
        return np.full(cone.dim, 1.0 / math.sqrt(cone.dim))
    # wedge and weyl_d2: positive x-axis is the bisector
    return np.array([1.0, 0.0])


def contains(cone: Cone, x):
    """Membership in the open cone.  Boundary points count as outside."""
    a, single = _as_batch(cone, x)
    if cone.kind == "halfline":
        m = a[:, 0] > 0
    elif cone.kind == "halfspace":
        m = a[:, -1] > 0
    elif cone.kind == "orthant":
        m = np.all(a > 0, axis=1)
    elif cone.kind == "weyl_d2":
        m = np.abs(a[:, 1]) < a[:, 0]
    else:  # wedge
        theta = np.arctan2(a[:, 1], a[:, 0])
        r = np.hypot(a[:, 0], a[:, 1])
        m = (r > 0) & (np.abs(theta) < cone.alpha / 2)
    return bool(m[0]) if single else m


def _dist_to_ray(a: np.ndarray, angle: float) -> np.ndarray:
    """Distance from points a (n,2) to the ray from the origin at `angle`."""
    v = np.array([math.cos(angle), math.sin(angle)])
    t = a @ v
    perp = np.abs(a[:, 0] * v[1] - a[:, 1] * v[0])
    r = np.hypot(a[:, 0], a[:, 1])
    return np.where(t > 0, perp, r)


def dist_to_boundary(cone: Cone, x):
    """Euclidean distance to the cone boundary; 0 for points outside."""
    a, single = _as_batch(cone, x)
    if cone.kind == "halfline":
        d = a[:, 0]
    elif cone.kind == "halfspace":
        d = a[:, -1]
    elif cone.kind == "orthant":
        d = np.min(a, axis=1)
    elif cone.kind == "weyl_d2":
        d = (a[:, 0] - np.abs(a[:, 1])) / math.sqrt(2.0)
    else:  # wedge
        d = np.minimum(
            _dist_to_ray(a, cone.alpha / 2), _dist_to_ray(a, -cone.alpha / 2)
        )
    inside = contains(cone, a)
    d = np.where(inside, d, 0.0)
    return _maybe_scalar(np.maximum(d, 0.0), single)


def u_value(cone: Cone, x):
    """Harmonic function of the cone, 0 outside the open cone."""
    a, single = _as_batch(cone, x)
    if cone.kind == "halfline":
        u = a[:, 0]
    elif cone.kind == "halfspace":
        u = a[:, -1]
    elif cone.kind == "orthant":
        u = np.prod(a, axis=1)
    elif cone.kind == "weyl_d2":
        u = a[:, 0] ** 2 - a[:, 1] ** 2
    else:  # wedge
        p = math.pi / cone.alpha
        r = np.hypot(a[:, 0], a[:, 1])
        theta = np.arctan2(a[:, 1], a[:, 0])
        with np.errstate(invalid="ignore"):
            u = np.where(r > 0, r**p * np.cos(p * theta), 0.0)
    inside = contains(cone, a)
    u = np.where(inside, u, 0.0)
    return _maybe_scalar(u, single)


def u_value_signed(cone: Cone, x):
    """The same polynomial / conformal expression as u_value but without
    zeroing outside the cone; used where overshoot values of u at exit
    points are needed."""
    a, single = _as_batch(cone, x)
    if cone.kind == "halfline":
        u = a[:, 0]
    elif cone.kind == "halfspace":
        u = a[:, -1]
    elif cone.kind == "orthant":
        u = np.prod(a, axis=1)
    elif cone.kind == "weyl_d2":
        u = a[:, 0] ** 2 - a[:, 1] ** 2
    else:  # wedge
        p = math.pi / cone.alpha
        r = np.hypot(a[:, 0], a[:, 1])
        theta = np.arctan2(a[:, 1], a[:, 0])
        with np.errstate(invalid="ignore"):
            u = np.where(r > 0, r**p * np.cos(p * theta), 0.0)
    return _maybe_scalar(u, single)


def assumption_g_probe(cone: Cone, samples) -> dict:
    """Min/max over interior samples of u(x) / (|x|^(p-1) d(x)).

    Both bounds being finite and positive is the numeric counterpart of the
    two-sided comparability of u with |x|^(p-1) d(x).
    """
    pts = [np.atleast_1d(np.asarray(s, dtype=float)) for s in samples]
    if not pts:
        raise ConeError("assumption_g_probe needs at least one sample")
    a = np.stack(pts)
    inside = contains(cone, a)
    if not np.all(inside):
        raise ConeError("all probe samples must lie in the open cone")
    p = exponent_p(cone)
    norms = np.linalg.norm(a, axis=1)
    d = dist_to_boundary(cone, a)
    u = u_value(cone, a)
    ratio = u / (norms ** (p - 1.0) * d)
    return {"c_low": float(np.min(ratio)), "c_high": float(np.max(ratio))}
