"""Step distributions for the walk.

The lattice families live on sqrt(2) * Z^2 and are built from a driving
one-dimensional family {p_k}: a vector that moves vertically by +-1 with
probability 1/4 each, and horizontally by k with probability p_k, where

    sum p_k = 1/2,   sum k p_k = 0,   sum k^2 p_k = 1/2,   k >= -1.

Scaling the vector by sqrt(2) yields zero mean and identity covariance.
The "swapped" variant exchanges the two coordinates, which turns the
heavy horizontal moves into vertical ones and changes the exit behaviour
qualitatively.  Probabilities are kept as exact ``fractions.Fraction``
throughout so that moment identities and the exact DP are free of
round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "PkSpec",
    "IncrementModel",
    "make_pk_family",
    "make_pk_heavy",
    "make_model",
    "parse_model",
    "validate_moments",
    "sample_steps",
    "sample_step",
    "tail_functional",
]

SQRT2 = math.sqrt(2.0)

HALF = Fraction(1, 2)


class ModelError(ValueError):
    """Invalid step-distribution parameters."""


@dataclass(frozen=True)
class PkSpec:
    """Horizontal move distribution {p_k}, exact probabilities."""

    support: tuple  # ((k, Fraction), ...) sorted by k
    tail_kind: str = "finite"  # "finite" | "heavy"
    tail_c: float | None = None  # heavy-tail constant, for diagnostics

    def __post_init__(self):
        ks = [k for k, _ in self.support]
        if ks != sorted(ks) or len(set(ks)) != len(ks):
            raise ModelError("pk support must be sorted and duplicate-free")
        if any(k < -1 for k in ks):
            raise ModelError("pk support is restricted to k >= -1")
        if any(p < 0 for _, p in self.support):
            raise ModelError("negative probability in pk family")
        s0 = sum(p for _, p in self.support)
        s1 = sum(k * p for k, p in self.support)
        s2 = sum(k * k * p for k, p in self.support)
        if not (s0 == HALF and s1 == 0 and s2 == HALF):
            raise ModelError(
                f"pk constraints violated: sum={s0}, mean={s1}, second={s2}"
            )

    def probs(self) -> dict:
        return dict(self.support)


def make_pk_family(k: int) -> PkSpec:
    """Three-point family on {-1, 0, k}.

    For k >= 2 the unique solution of the constraints is
    p_k = 1/(2k(k+1)), p_-1 = 1/(2(k+1)), p_0 = 1/2 - 1/(2k).
    k = 1 is the degenerate symmetric case p_1 = p_-1 = 1/4.
    """
    if k == 1:
        return PkSpec(((-1, Fraction(1, 4)), (1, Fraction(1, 4))))
    if k < 2:
        raise ModelError("family parameter must be >= 1")
    pk = Fraction(1, 2 * k * (k + 1))
    pm1 = Fraction(1, 2 * (k + 1))
    p0 = HALF - Fraction(1, 2 * k)
    return PkSpec(((-1, pm1), (0, p0), (k, pk)))


def _heavy_tail_weight(k: int) -> float:
    return 1.0 / (k**3 * math.log(k) * math.log(math.log(k)) ** 2)


def make_pk_heavy(k_max: int, c: float | None = None) -> PkSpec:
    """Truncated heavy family: p_k proportional to 1/(k^3 log k (log log k)^2)
    for 3 <= k <= k_max, with (p_-1, p_0, p_2) solved exactly so the three
    constraints hold for the truncated measure.

    The tail makes log(m) * E[W1^2; W1 >= m] grow, while the second moment
    stays summable; truncation keeps the model usable in an exact DP.
    """
    if k_max < 100:
        raise ModelError("k_max must be at least 100")
    tail = [(k, Fraction(_heavy_tail_weight(k))) for k in range(3, k_max + 1)]
    t0 = sum(p for _, p in tail)
    t1 = sum(k * p for k, p in tail)
    t2 = sum(k * k * p for k, p in tail)
    if c is None:
        # default: 90% of the largest feasible tail constant, to make the
        # heavy-tail trends as strong as the constraints allow
        c = 0.9 * float(HALF / (t1 + t2))
    cf = Fraction(c)
    T0, T1, T2 = cf * t0, cf * t1, cf * t2
    # solve p_-1 + p_0 + p_2 = 1/2 - T0; -p_-1 + 2 p_2 = -T1; p_-1 + 4 p_2 = 1/2 - T2
    p2 = (HALF - T1 - T2) / 6
    pm1 = 2 * p2 + T1
    p0 = HALF - T0 - pm1 - p2
    if min(p2, pm1, p0) < 0:
        raise ModelError(
            "heavy family infeasible: reduce the tail constant or raise k_max"
        )
    support = [(-1, pm1), (0, p0), (2, p2)] + [(k, cf * p) for k, p in tail]
    return PkSpec(tuple(sorted(support)), tail_kind="heavy", tail_c=float(cf))


def heavy_diagnostic(spec: PkSpec, m_values) -> list:
    """The sequence m -> log(m) * E[W1^2; W1 >= m] for a heavy family.

    Computed on the truncated measure that the spec actually carries.  The
    truncation deficit 1/loglog(k_max) decays so slowly that this sequence
    is *decreasing* at desk scales even though the untruncated family's
    version diverges; see ideal_heavy_diagnostic for the design-intent
    curve.
    """
    return [
        (float(m), math.log(m) * float(_second_moment_tail(spec, m)))
        for m in m_values
    ]


def ideal_heavy_diagnostic(c: float, m_values, k_big: int = 10**7) -> list:
    """log(m) * E[W1^2; W1 >= m] for the untruncated tail
    c / (k^3 log k (loglog k)^2), summed to k_big with the analytic
    remainder c/loglog(k_big).  Nondecreasing once log m > e."""
    ks = np.arange(3, k_big, dtype=np.float64)
    w = 1.0 / (ks * np.log(ks) * np.log(np.log(ks)) ** 2)
    cum = np.cumsum(w[::-1])[::-1]
    rem = 1.0 / math.log(math.log(k_big))
    return [
        (float(m), math.log(m) * c * (cum[int(m) - 3] + rem))
        for m in m_values
    ]


def _second_moment_tail(spec: PkSpec, m) -> Fraction:
    return sum((k * k * p for k, p in spec.support if k >= m), Fraction(0))


@dataclass(frozen=True)
class IncrementModel:
    """A step distribution with zero mean and identity covariance.

    kinds: "gauss" (standard normal, any dim), "ex1"/"ex2" (the sqrt(2)
    lattice walks driven by a PkSpec; ex2 swaps the coordinates), and
    "custom" (finite atoms given directly in real coordinates).
    """

    kind: str
    dim: int
    pk: PkSpec | None = None
    atoms: tuple | None = None  # ((vector tuple, Fraction prob), ...)
    spec_string: str = ""

    @property
    def is_lattice(self) -> bool:
        return self.kind in ("ex1", "ex2")

    def lattice_atoms(self):
        """Integer lattice atoms (a, b) with probabilities; real step is
        sqrt(2) * (a, b)."""
        if not self.is_lattice:
            raise ModelError("not a lattice model")
        out = [((0, 1), Fraction(1, 4)), ((0, -1), Fraction(1, 4))]
        out += [((k, 0), p) for k, p in self.pk.support if p > 0]
        if self.kind == "ex2":
            out = [((b, a), p) for (a, b), p in out]
        return out

    def real_atoms(self):
        """Atoms in real coordinates with float probabilities."""
        if self.is_lattice:
            return [
                (np.array(a, dtype=float) * SQRT2, float(p))
                for a, p in self.lattice_atoms()
            ]
        if self.kind == "custom":
            return [(np.array(v, dtype=float), float(p)) for v, p in self.atoms]
        raise ModelError("gaussian model has no atoms")


def make_model(kind: str, dim: int = 2, pk: PkSpec | None = None,
               atoms=None, spec_string: str = "") -> IncrementModel:
    if kind == "gauss":
        return IncrementModel("gauss", dim, spec_string=spec_string or f"gauss:{dim}")
    if kind in ("ex1", "ex2"):
        if pk is None:
            raise ModelError(f"{kind} needs a pk family")
        return IncrementModel(kind, 2, pk=pk, spec_string=spec_string or kind)
    if kind == "custom":
        if not atoms:
            raise ModelError("custom model needs atoms")
        atoms = tuple((tuple(map(float, v)), Fraction(p)) for v, p in atoms)
        total = sum(p for _, p in atoms)
        if total != 1:
            raise ModelError(f"custom atom probabilities sum to {total}, not 1")
        return IncrementModel("custom", len(atoms[0][0]), atoms=atoms,
                              spec_string=spec_string or "custom")
    raise ModelError(f"unknown model kind {kind!r}")


def parse_model(text: str) -> IncrementModel:
    """Parse the model grammar:

    ``gauss:<d> | ex1:family:<k> | ex1:heavy:<kmax> | ex2:family:<k> |
    ex2:heavy:<kmax> | pm1``

    ``pm1`` is the one-dimensional +-1 walk used with the half-line cone.
    """
    parts = text.strip().split(":")
    try:
        if parts[0] == "gauss" and len(parts) == 2:
            return make_model("gauss", int(parts[1]), spec_string=text)
        if parts[0] == "pm1" and len(parts) == 1:
            return make_model(
                "custom",
                atoms=[((1.0,), Fraction(1, 2)), ((-1.0,), Fraction(1, 2))],
                spec_string="pm1",
            )
        if parts[0] in ("ex1", "ex2") and len(parts) == 3:
            if parts[1] == "family":
                return make_model(parts[0], pk=make_pk_family(int(parts[2])),
                                  spec_string=text)
            if parts[1] == "heavy":
                return make_model(parts[0], pk=make_pk_heavy(int(parts[2])),
                                  spec_string=text)
    except (ModelError, ValueError) as exc:
        raise ModelError(f"bad model spec {text!r}: {exc}") from None
    raise ModelError(f"bad model spec {text!r}")


def validate_moments(model: IncrementModel, tol: float = 1e-10) -> dict:
    """Exact (lattice/custom) or analytic (gaussian) mean and covariance.

    Raises ModelError if the zero-mean / identity-covariance contract is
    violated beyond tol.
    """
    d = model.dim
    if model.kind == "gauss":
        mean = np.zeros(d)
        cov = np.eye(d)
        exact = True
    else:
        atoms = (
            model.lattice_atoms() if model.is_lattice
            else [(v, p) for v, p in model.atoms]
        )
        scale = Fraction(2) if model.is_lattice else Fraction(1)
        meanf = [sum(Fraction(a[i]) * p for a, p in atoms) for i in range(d)]
        covf = [
            [
                scale * sum(Fraction(a[i]) * Fraction(a[j]) * p for a, p in atoms)
                for j in range(d)
            ]
            for i in range(d)
        ]
        exact = all(m == 0 for m in meanf) and all(
            covf[i][j] == (1 if i == j else 0) for i in range(d) for j in range(d)
        )
        mean = np.array([float(m) for m in meanf])
        cov = np.array([[float(c) for c in row] for row in covf])
        if model.is_lattice:
            mean = mean * SQRT2
    err = max(
        float(np.max(np.abs(mean))), float(np.max(np.abs(cov - np.eye(d))))
    )
    if err > tol:
        raise ModelError(f"moment contract violated by {err:.3e}")
    return {"mean": mean, "cov": cov, "exact": exact, "max_error": err}


def sample_steps(model: IncrementModel, rng: np.random.Generator, n: int,
                 scaled: bool = True) -> np.ndarray:
    """Draw n i.i.d. steps, shape (n, dim).  Lattice steps are exact
    multiples of sqrt(2); with scaled=False lattice draws are returned in
    integer coordinates (exact floats), so simulations can keep boundary
    comparisons free of accumulated round-off."""
    if model.kind == "gauss":
        return rng.standard_normal((n, model.dim))
    if not scaled and model.is_lattice:
        atoms = [(np.array(a, dtype=float), float(p))
                 for a, p in model.lattice_atoms()]
    else:
        atoms = model.real_atoms()
    vecs = np.stack([v for v, _ in atoms])
    probs = np.array([p for _, p in atoms])
    probs = probs / probs.sum()  # remove float round-off from the simplex
    idx = rng.choice(len(atoms), size=n, p=probs)
    return vecs[idx]


def sample_step(model: IncrementModel, rng: np.random.Generator) -> np.ndarray:
    return sample_steps(model, rng, 1)[0]


def tail_functional(model: IncrementModel, m: float) -> dict:
    """For lattice models: E[W1^2; W1 >= m] and the partial sum of
    E[W1^2 log(1 + |W1|)] over the driving family's support."""
    if not model.is_lattice:
        raise ModelError("tail functionals are defined for lattice models only")
    spec = model.pk
    tail = _second_moment_tail(spec, m)
    log_part = sum(
        float(k * k * p) * math.log1p(abs(k)) for k, p in spec.support
    )
    return {"second_moment_tail": tail, "log_moment_partial": log_part}


def log_moment_partial_sums(spec: PkSpec, cutoffs) -> list:
    """Partial sums of E[W1^2 log(1+|W1|)] restricted to |k| <= cutoff."""
    out = []
    for cut in cutoffs:
        s = sum(
            float(k * k * p) * math.log1p(abs(k))
            for k, p in spec.support
            if abs(k) <= cut
        )
        out.append((cut, s))
    return out
