"""Explicit supermartingale construction for a one-dimensional walk on the
half-line, and its verifiers.

For a zero-mean step law X the module builds the tail quadruple

    beta(x)    = P(X <= -x)
    beta_I(x)  = E[(x+X)^-]
    beta_II(x) = E[((x+X)^-)^2] / 2
    m(x)       = A * int_0^x beta_II(y) dy,   A = 4 / E[(X^-)^2]

and the candidate function V(y) = y + R + m(y) on y >= 0 (0 below).  With
R chosen large enough the one-step drift

    Delta(x) = E[V(x+X); x+X >= 0] - V(x)

satisfies Delta(x) <= -beta(x), which makes V(x+S(n)) 1{tau_x > n} a
supermartingale, and the overshoot obeys -E[x + S(tau_x)] <= m(x) + R.

Convention: the walk here survives at 0, i.e. it is killed when the
position becomes strictly negative.  (That is what the drift restriction
"x+X >= 0" encodes; the exact ±1-law identities - overshoot exactly 1,
V(x) = x + 1 - hold only under this convention.)

All four tail functions have the closed primitive
beta_III(x) = E[((x+X)^-)^3] / 6 with beta_III' = -beta_II, so
m(x) = A (beta_III(0) - beta_III(x)) without quadrature; atomic laws are
evaluated in exact rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, stats

from .rng import stream

__all__ = [
    "StepLaw1D",
    "TailFunctions1D",
    "parse_law",
    "build_tail_functions",
    "choose_R",
    "drift_delta",
    "verify_drift_inequality",
    "overshoot_check",
    "harmonic_V1d_check",
]


class LawError(ValueError):
    pass


@dataclass(frozen=True)
class StepLaw1D:
    kind: str  # "gauss" | "atoms"
    atoms: tuple = ()  # ((Fraction value, Fraction prob), ...)
    spec_string: str = ""

    def __post_init__(self):
        if self.kind == "atoms":
            total = sum(p for _, p in self.atoms)
            if total != 1:
                raise LawError(f"atom probabilities sum to {total}, not 1")
            mean = sum(v * p for v, p in self.atoms)
            if mean != 0:
                raise LawError(f"law has nonzero mean {mean}")
            if not any(v < 0 and p > 0 for v, p in self.atoms):
                raise LawError("law must charge the negative half-line")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gauss":
            return rng.standard_normal(n)
        vals = np.array([float(v) for v, _ in self.atoms])
        probs = np.array([float(p) for _, p in self.atoms])
        return vals[rng.choice(len(vals), size=n, p=probs / probs.sum())]


def parse_law(text: str) -> StepLaw1D:
    """Law grammar: ``pm1 | gauss | atoms:v1:p1,v2:p2,...``"""
    t = text.strip()
    if t == "pm1":
        return StepLaw1D("atoms",
                         ((Fraction(-1), Fraction(1, 2)),
                          (Fraction(1), Fraction(1, 2))), "pm1")
    if t == "gauss":
        return StepLaw1D("gauss", (), "gauss")
    if t.startswith("atoms:"):
        try:
            pairs = []
            for item in t[len("atoms:"):].split(","):
                v, p = item.split(":")
                pairs.append((Fraction(v), Fraction(p)))
            return StepLaw1D("atoms", tuple(pairs), t)
        except (ValueError, ZeroDivisionError) as exc:
            raise LawError(f"bad law spec {text!r}: {exc}") from None
    raise LawError(f"bad law spec {text!r}")


def _phi(x):
    return np.exp(-0.5 * np.asarray(x, dtype=float) ** 2) / math.sqrt(2 * math.pi)


def _Phi(x):
    return stats.norm.cdf(x)


@dataclass
class TailFunctions1D:
    law: StepLaw1D
    A: float
    sigma_minus_sq: float
    x_hi: float
    grid: np.ndarray
    R: float | None = None

    # ---- float evaluators (vectorized) ----

    def beta(self, x):
        x = np.asarray(x, dtype=float)
        if self.law.kind == "gauss":
            return _Phi(-x)
        out = np.zeros_like(x)
        for v, p in self.law.atoms:
            out = out + float(p) * (float(v) <= -x)
        return out

    def beta_I(self, x):
        x = np.asarray(x, dtype=float)
        if self.law.kind == "gauss":
            return _phi(x) - x * _Phi(-x)
        out = np.zeros_like(x)
        for v, p in self.law.atoms:
            out = out + float(p) * np.maximum(-(x + float(v)), 0.0)
        return out

    def beta_II(self, x):
        x = np.asarray(x, dtype=float)
        if self.law.kind == "gauss":
            return ((1 + x**2) * _Phi(-x) - x * _phi(x)) / 2
        out = np.zeros_like(x)
        for v, p in self.law.atoms:
            out = out + float(p) * np.maximum(-(x + float(v)), 0.0) ** 2
        return out / 2

    def beta_III(self, x):
        x = np.asarray(x, dtype=float)
        if self.law.kind == "gauss":
            return ((x**2 + 2) * _phi(x) - x * (x**2 + 3) * _Phi(-x)) / 6
        out = np.zeros_like(x)
        for v, p in self.law.atoms:
            out = out + float(p) * np.maximum(-(x + float(v)), 0.0) ** 3
        return out / 6

    def m(self, x):
        return self.A * (self.beta_III(0.0) - self.beta_III(x))

    def V(self, x):
        if self.R is None:
            raise LawError("R has not been chosen yet")
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, x + self.R + self.m(np.maximum(x, 0.0)), 0.0)

    # ---- exact evaluators for atomic laws ----

    def m_exact(self, x: Fraction) -> Fraction:
        if self.law.kind != "atoms":
            raise LawError("exact evaluation needs an atomic law")
        s2 = sum(p * v * v for v, p in self.law.atoms if v < 0)
        A = Fraction(4) / s2
        acc = Fraction(0)
        for v, p in self.law.atoms:
            if v < 0:
                rest = max(-v - x, Fraction(0))
                acc += p * ((-v) ** 3 - rest**3)
        return A * acc / 6

    def beta_exact(self, x: Fraction) -> Fraction:
        return sum((p for v, p in self.law.atoms if v <= -x), Fraction(0))


def build_tail_functions(law: StepLaw1D) -> TailFunctions1D:
    """Compute sigma_-^2 = E[(X^-)^2], A = 4/sigma_-^2 and a geometric
    verification grid on [0, x_hi] with beta(x_hi) < 1e-12."""
    if law.kind == "gauss":
        s2 = 0.5
        x_hi = 7.2  # Phi(-7.2) < 1e-12
    else:
        s2f = sum(p * v * v for v, p in law.atoms if v < 0)
        if s2f == 0:
            raise LawError("law never goes down; tail functions degenerate")
        s2 = float(s2f)
        x_hi = float(max(-v for v, p in law.atoms if v < 0 and p > 0)) + 1.0
    grid = np.concatenate([[0.0], np.geomspace(1e-4, x_hi, 1023)])
    return TailFunctions1D(law=law, A=4.0 / s2, sigma_minus_sq=s2,
                           x_hi=x_hi, grid=grid)


def choose_R(tf: TailFunctions1D) -> float:
    """Two-stage selection of R on the grid: find the least x0 past which
    2 A beta_I beta_II <= beta_I everywhere, majorize the drift numerator
    below x0 by beta, then add 1."""
    g = tf.grid
    bI = tf.beta_I(g)
    bII = tf.beta_II(g)
    b = tf.beta(g)
    ok = (2 * tf.A * bII <= 1.0) | (bI == 0.0)
    # least index from which ok holds for the whole suffix
    suffix_ok = np.flip(np.logical_and.accumulate(np.flip(ok)))
    idx = int(np.argmax(suffix_ok))
    if not suffix_ok[idx]:
        raise LawError("no valid x0 on the grid; enlarge the grid")
    below = slice(0, idx)
    numer = bI[below] + 2 * tf.A * bI[below] * bII[below]
    if np.any((b[below] == 0) & (numer > 0)):
        raise LawError("beta vanishes where the drift numerator is positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(b[below] > 0, numer / b[below], 0.0)
    R = 1.0 + (float(ratio.max()) if ratio.size else 0.0)
    tf.R = R
    return R


def drift_delta(tf: TailFunctions1D, law: StepLaw1D, x: float):
    """Delta(x) = E[V(x+X); x+X >= 0] - V(x).  Exact rationals for atomic
    laws (when x and R are rational), quadrature for the Gaussian."""
    if tf.R is None:
        raise LawError("R has not been chosen yet")
    if law.kind == "atoms":
        xq = Fraction(x)
        Rq = Fraction(tf.R)

        def Vq(y: Fraction) -> Fraction:
            return y + Rq + tf.m_exact(y)

        acc = Fraction(0)
        for v, p in law.atoms:
            y = xq + v
            if y >= 0:
                acc += p * Vq(y)
        return acc - Vq(xq)
    lo = -float(x)
    val, err = integrate.quad(
        lambda s: float(tf.V(x + s)) * float(_phi(s)), lo, 40.0,
        epsabs=1e-12, epsrel=1e-11, limit=200,
    )
    if err > 1e-8:
        raise LawError(f"drift quadrature did not converge (err={err:.2e})")
    return val - float(tf.V(x))


def verify_drift_inequality(tf: TailFunctions1D, law: StepLaw1D, grid=None) -> dict:
    """Check Delta(x) <= -beta(x) on the grid.  Atomic laws are checked
    exactly (tolerance 0); the Gaussian gets 1e-9 absolute slack for
    quadrature error."""
    g = tf.grid if grid is None else np.asarray(grid, dtype=float)
    tol = 0 if law.kind == "atoms" else 1e-9
    worst = None
    worst_x = None
    failures = []
    rows = []
    for x in g:
        d = drift_delta(tf, law, x)
        if law.kind == "atoms":
            margin = -tf.beta_exact(Fraction(float(x))) - d  # >= 0 means pass
        else:
            margin = -float(tf.beta(x)) - d
        rows.append((float(x), float(d), -float(tf.beta(x)), float(margin)))
        if worst is None or margin < worst:
            worst, worst_x = margin, float(x)
        if margin < -tol:
            failures.append(float(x))
    return {
        "passed": not failures,
        "worst_margin": float(worst),
        "worst_x": worst_x,
        "failures": failures,
        "rows": rows,
        "R": tf.R,
    }


def _simulate_exits(law: StepLaw1D, x: float, reps: int, seed: int,
                    cap: int = 10**6, chunk: int = 4096):
    """Run-to-exit paths; returns final positions of exited paths and the
    number of paths still alive at the cap."""
    finals = []
    capped = 0
    done = 0
    batch = 0
    while done < reps:
        n = min(chunk, reps - done)
        rng = stream(seed, batch)
        batch += 1
        pos = np.full(n, float(x))
        alive = np.arange(n)
        steps = 0
        while alive.size and steps < cap:
            take = min(256, cap - steps)
            inc = law.sample(rng, alive.size * take).reshape(alive.size, take)
            path = pos[alive, None] + np.cumsum(inc, axis=1)
            neg = path < 0
            hit = neg.any(axis=1)
            first = np.where(hit, neg.argmax(axis=1), 0)
            finals.extend(path[hit, first[hit]])
            pos[alive] = path[:, -1]
            alive = alive[~hit]
            steps += take
        capped += alive.size
        done += n
    return np.array(finals), capped


def overshoot_check(tf: TailFunctions1D, law: StepLaw1D, x: float,
                    reps: int = 20000, seed: int = 1) -> dict:
    """MC check of -E[x + S(tau_x)] <= m(x) + R."""
    if tf.R is None:
        raise LawError("R has not been chosen yet")
    finals, capped = _simulate_exits(law, x, reps, seed)
    over = -finals
    est = float(over.mean())
    half = 1.96 * float(over.std(ddof=1)) / math.sqrt(len(over))
    bound = float(tf.m(x)) + tf.R
    return {
        "passed": est - half <= bound,
        "estimate": est,
        "ci_half": half,
        "bound": bound,
        "capped_paths": capped,
        "reps": reps,
        "seed": seed,
    }


def harmonic_V1d_check(law: StepLaw1D, x_grid, reps: int = 20000,
                       seed: int = 1) -> dict:
    """MC check of V(x) = E[V(x+X); x+X >= 0] for V(x) = E[-S(tau_x)].

    V is estimated on x_grid plus the points needed for the right-hand
    side (atom shifts, or a dense interpolation grid for continuous laws).
    """
    x_grid = [float(x) for x in x_grid]
    if law.kind == "atoms":
        shifts = [float(v) for v, p in law.atoms if p > 0]
        needed = sorted({round(x + s, 12) for x in x_grid for s in shifts if x + s >= 0}
                        | set(x_grid))
    else:
        hi = max(x_grid) + 9.0
        needed = sorted(set(np.round(np.arange(0.0, hi, 0.25), 12)) | set(x_grid))
    vhat = {}
    vvar = {}
    for i, pt in enumerate(needed):
        finals, capped = _simulate_exits(law, pt, reps, seed + 7919 * i)
        # final position = pt + S(tau), so -S(tau) = pt - final
        vals = pt - finals
        vhat[pt] = float(vals.mean())
        vvar[pt] = float(vals.var(ddof=1)) / len(vals)
    rows = []
    ok = True
    for x in x_grid:
        if law.kind == "atoms":
            rhs = 0.0
            rvar = 0.0
            for v, p in law.atoms:
                y = round(x + float(v), 12)
                if y >= 0:
                    rhs += float(p) * vhat[y]
                    rvar += float(p) ** 2 * vvar[y]
        else:
            pts = np.array(needed)
            vv = np.array([vhat[p] for p in needed])
            # asymptotically V(y) ~ y + const; extend linearly past the grid
            c_inf = vv[-1] - pts[-1]

            def vfun(y):
                return np.interp(y, pts, vv, right=0.0) + np.where(
                    y > pts[-1], y + c_inf, 0.0)

            rhs, _ = integrate.quad(lambda s: vfun(np.array([x + s]))[0] * float(_phi(s)),
                                    -x, 40.0, limit=200)
            rvar = max(vvar.values())  # conservative
        joint = 1.96 * math.sqrt(vvar[x] + rvar)
        diff = vhat[x] - rhs
        rows.append({"x": x, "V": vhat[x], "rhs": rhs, "diff": diff,
                     "joint_ci": joint})
        if abs(diff) > max(joint, 3e-2 * max(1.0, vhat[x])):
            ok = False
    return {"passed": ok, "rows": rows, "reps": reps, "seed": seed}
