"""Monte Carlo engine for killed random walks in cones.

Batched, deterministic simulation: a run of `reps` paths is split into
fixed-size batches, batch b draws from an rng stream derived injectively
from (seed, b), and partial statistics are merged in batch order, so any
worker count reproduces the same output bit for bit.

Estimators: survival probabilities over shared trajectories (exactly
monotone in the horizon), truncated harmonic-function estimates
E[u(x+S(n)); tau > n], kappa plateau fits, conditional endpoint laws,
the boundary-exit decomposition of V, maximum-of-path moments.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import Cone
from .models import IncrementModel, sample_steps
from .rng import stream

__all__ = [
    "EstimateCI",
    "ExitRecord",
    "simulate_exit",
    "estimate_survival",
    "estimate_V_truncated",
    "estimate_En_sequence",
    "estimate_kappa_fit",
    "conditional_endpoint_test",
    "estimate_V_decomposition",
    "estimate_max_moment",
    "MCError",
]

DEFAULT_BATCH = 8192
WINDOW = 64
HORIZON_CAP = 10_000_000


class MCError(ValueError):
    pass


@dataclass
class EstimateCI:
    value: float
    half_width: float
    reps: int
    seed: int
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.half_width < 0 or self.reps <= 0:
            raise MCError("invalid estimate: half_width >= 0 and reps > 0 required")


@dataclass
class ExitRecord:
    tau: int | None  # None means censored at n_max
    exit_point: np.ndarray | None  # position at tau, when uncensored
    endpoint: np.ndarray | None  # position at horizon, when censored

    @property
    def censored(self) -> bool:
        return self.tau is None


def _mean_ci(total: float, total_sq: float, reps: int) -> tuple[float, float]:
    mean = total / reps
    var = max(total_sq / reps - mean * mean, 0.0)
    return mean, 1.96 * math.sqrt(var / reps)


def _survival_ci(count: int, reps: int) -> tuple[float, float]:
    """95% interval for a proportion: normal unless the estimate is below
    1e-3, where the normal interval degenerates and Wilson is used."""
    p = count / reps
    if p >= 1e-3:
        return p, 1.96 * math.sqrt(max(p * (1 - p), 0.0) / reps)
    z = 1.96
    denom = 1 + z * z / reps
    center = (p + z * z / (2 * reps)) / denom
    half = z * math.sqrt(p * (1 - p) / reps + z * z / (4 * reps * reps)) / denom
    return p, half + abs(center - p)


SQRT2 = math.sqrt(2.0)


def _frame(model: IncrementModel, x: np.ndarray):
    """Simulation frame (start, scale, scaled_sampling).

    Lattice models whose start lies on the sqrt(2) lattice are simulated in
    integer coordinates: membership tests on a cone are scale invariant, so
    they can run on the exact integer positions, while u and distances are
    evaluated at scale * position.  This keeps boundary comparisons exact;
    accumulating +-sqrt(2) in floats lets paths tunnel through the
    |x2| = x1 boundary."""
    x = np.asarray(x, dtype=float)
    if getattr(model, "is_lattice", False):
        z = x / SQRT2
        zi = np.round(z)
        if np.max(np.abs(z - zi)) < 1e-9:
            return zi, SQRT2, False
    return x, 1.0, True


def _run_batches(reps: int, seed: int, worker, workers: int = 1,
                 batch: int = DEFAULT_BATCH):
    """Split reps into batches, run worker(batch_index, batch_size, rng),
    return the list of partial results in batch-index order."""
    sizes = []
    left = reps
    while left > 0:
        sizes.append(min(batch, left))
        left -= batch
    jobs = [(b, nb) for b, nb in enumerate(sizes)]
    if workers <= 1:
        return [worker(b, nb, stream(seed, b)) for b, nb in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(worker, b, nb, stream(seed, b)) for b, nb in jobs]
        return [f.result() for f in futs]


def _advance(cone: Cone, model: IncrementModel, pos: np.ndarray, k: int,
             rng: np.random.Generator, scaled: bool = True):
    """Advance all paths k steps with kill on leaving the cone.

    Returns (survivor positions, alive mask over the input paths)."""
    m = len(pos)
    if m == 0:
        return pos, np.zeros(0, dtype=bool)
    d = pos.shape[1]
    steps = sample_steps(model, rng, m * k, scaled=scaled).reshape(m, k, d)
    traj = pos[:, None, :] + np.cumsum(steps, axis=1)
    inside = geometry.contains(cone, traj.reshape(-1, d)).reshape(m, k)
    ok = np.logical_and.accumulate(inside, axis=1)
    alive = ok[:, -1]
    return traj[alive, -1, :], alive


def simulate_exit(cone: Cone, model: IncrementModel, x, n_max: int,
                  rng: np.random.Generator) -> ExitRecord:
    """Walk a single path from x until it leaves the open cone or reaches
    the horizon.  tau inspects positions from step 1 on, so a start on the
    boundary of the closed cone is allowed."""
    x = np.asarray(x, dtype=float)
    if n_max < 1:
        raise MCError("n_max must be >= 1")
    if not geometry.contains(cone, x[None, :])[0] and geometry.dist_to_boundary(cone, x) < 0:
        raise MCError("start must lie in the closed cone")
    pos, scale, scaled = _frame(model, x)
    for n in range(1, n_max + 1):
        pos = pos + sample_steps(model, rng, 1, scaled=scaled)[0]
        if not geometry.contains(cone, pos[None, :])[0]:
            return ExitRecord(tau=n, exit_point=pos * scale, endpoint=None)
    return ExitRecord(tau=None, exit_point=None, endpoint=pos * scale)


def _checkpoint_worker(cone: Cone, model: IncrementModel, x: np.ndarray,
                       n_list, collect_endpoints_at: int | None = None):
    """Build a batch worker that advances shared trajectories through the
    increasing horizons n_list and records per-horizon sufficient
    statistics: survivor count, sum of u, sum of u^2 (plus survivor
    endpoints at one designated horizon)."""
    start, scale, scaled = _frame(model, x)

    def worker(b: int, nb: int, rng: np.random.Generator):
        pos = np.tile(start, (nb, 1))
        counts = np.zeros(len(n_list), dtype=np.int64)
        sums = np.zeros(len(n_list))
        sqs = np.zeros(len(n_list))
        endpoints = None
        n_cur = 0
        for i, target in enumerate(n_list):
            while n_cur < target and len(pos):
                k = min(WINDOW, target - n_cur)
                pos, _ = _advance(cone, model, pos, k, rng, scaled=scaled)
                n_cur += k
            counts[i] = len(pos)
            if len(pos):
                u = geometry.u_value(cone, pos * scale)
                sums[i] = float(u.sum())
                sqs[i] = float((u * u).sum())
            if collect_endpoints_at == target:
                endpoints = pos * scale
        return counts, sums, sqs, endpoints

    return worker


def _run_checkpoints(cone, model, x, n_list, reps, seed, workers=1,
                     collect_endpoints_at=None):
    x = np.asarray(x, dtype=float)
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise MCError("n_list must be strictly increasing")
    worker = _checkpoint_worker(cone, model, x, n_list, collect_endpoints_at)
    parts = _run_batches(reps, seed, worker, workers=workers)
    counts = np.sum([p[0] for p in parts], axis=0)
    sums = np.sum([p[1] for p in parts], axis=0)
    sqs = np.sum([p[2] for p in parts], axis=0)
    eps = [p[3] for p in parts if p[3] is not None and len(p[3])]
    endpoints = np.concatenate(eps, axis=0) if eps else np.zeros((0, cone.dim))
    return counts, sums, sqs, endpoints


def estimate_survival(cone: Cone, model: IncrementModel, x, n_list,
                      reps: int, seed: int, workers: int = 1):
    """P(tau_x > n) for each n in the increasing n_list, from one shared
    simulation pass, so the estimates are exactly nonincreasing."""
    counts, _, _, _ = _run_checkpoints(cone, model, x, n_list, reps, seed,
                                       workers=workers)
    flags = {"low_reps": True} if reps < 100 else {}
    out = []
    for n, cnt in zip(n_list, counts):
        p, half = _survival_ci(int(cnt), reps)
        out.append((n, EstimateCI(p, half, reps, seed, dict(flags))))
    return out


def estimate_V_truncated(cone: Cone, model: IncrementModel, x, n: int,
                         reps: int, seed: int, workers: int = 1) -> EstimateCI:
    """E[u(x + S(n)); tau_x > n] (killed paths contribute 0)."""
    _, sums, sqs, _ = _run_checkpoints(cone, model, x, [n], reps, seed,
                                       workers=workers)
    mean, half = _mean_ci(float(sums[0]), float(sqs[0]), reps)
    return EstimateCI(mean, half, reps, seed)


def estimate_En_sequence(cone: Cone, model: IncrementModel, x, n_list,
                         reps: int, seed: int, workers: int = 1):
    """E_n = E[u(x + S(n)); tau_x > n] along n_list, shared trajectories."""
    _, sums, sqs, _ = _run_checkpoints(cone, model, x, n_list, reps, seed,
                                       workers=workers)
    out = []
    for i, n in enumerate(n_list):
        mean, half = _mean_ci(float(sums[i]), float(sqs[i]), reps)
        out.append((n, EstimateCI(mean, half, reps, seed)))
    return out


def estimate_kappa_fit(cone: Cone, model: IncrementModel, x, n_list,
                       reps: int, seed: int, workers: int = 1) -> dict:
    """kappa_hat(n) = P(tau > n) n^{p/2} / V_hat(x); the plateau spread over
    the top half of n_list is the stability diagnostic."""
    p_exp = geometry.exponent_p(cone)
    counts, sums, sqs, _ = _run_checkpoints(cone, model, x, n_list, reps,
                                            seed, workers=workers)
    # V_hat from the first horizon of the same pass
    v_hat, v_half = _mean_ci(float(sums[0]), float(sqs[0]), reps)
    if v_hat <= 0:
        raise MCError("V estimate is nonpositive; cannot normalize kappa")
    rows = []
    for n, cnt in zip(n_list, counts):
        surv, half = _survival_ci(int(cnt), reps)
        rows.append({
            "n": n,
            "kappa_hat": surv * n ** (p_exp / 2) / v_hat,
            "ci_half": half * n ** (p_exp / 2) / v_hat,
        })
    top = rows[len(rows) // 2:]
    vals = [r["kappa_hat"] for r in top]
    stability = (max(vals) - min(vals)) / max(vals) if max(vals) > 0 else math.inf
    return {"rows": rows, "kappa_hat": vals[-1], "stability": stability,
            "v_hat": v_hat, "v_ci_half": v_half, "reps": reps, "seed": seed}


def fit_survival_slope(survival_rows) -> float:
    """Least-squares slope of log P(tau > n) against log n."""
    xs, ys = [], []
    for n, est in survival_rows:
        if est.value > 0:
            xs.append(math.log(n))
            ys.append(math.log(est.value))
    if len(xs) < 2:
        raise MCError("not enough positive survival estimates for a slope fit")
    return float(np.polyfit(np.array(xs), np.array(ys), 1)[0])


# ---------------------------------------------------------------------------
# conditional endpoint law (planar quadrant)
# ---------------------------------------------------------------------------

def _rayleigh_edges(n_bins: int, cap: float) -> np.ndarray:
    """Equal-probability edges on [0, cap] for the density t e^{-t^2/2}
    (normalized to the cap)."""
    total = 1.0 - math.exp(-cap * cap / 2)
    qs = np.linspace(0.0, total, n_bins + 1)
    return np.sqrt(-2.0 * np.log(1.0 - qs))


def conditional_endpoint_test(cone: Cone, model: IncrementModel, x, n: int,
                              reps: int, seed: int, bins: int = 5,
                              workers: int = 1, cap: float = 3.0) -> dict:
    """Empirical law of (x + S(n)) / sqrt(n) given tau_x > n, binned over
    the compact window [0, cap]^2 with bins equal-probability under the
    reference density proportional to u(z) e^{-|z|^2/2}.

    For the planar quadrant the reference factorizes into two densities
    t e^{-t^2/2} with unit normalization per axis, so the overall constant
    is 1 and the bin edges are per-coordinate quantiles."""
    if not (cone.kind == "orthant" and cone.dim == 2):
        raise MCError("endpoint test implemented for the planar quadrant")
    _, _, _, endpoints = _run_checkpoints(cone, model, x, [n], reps, seed,
                                          workers=workers,
                                          collect_endpoints_at=n)
    z = endpoints / math.sqrt(n)
    edges = _rayleigh_edges(bins, cap)
    in_window = (z[:, 0] < cap) & (z[:, 1] < cap)
    zi = z[in_window]
    i1 = np.clip(np.searchsorted(edges, zi[:, 0], side="right") - 1, 0, bins - 1)
    i2 = np.clip(np.searchsorted(edges, zi[:, 1], side="right") - 1, 0, bins - 1)
    counts = np.zeros((bins, bins), dtype=np.int64)
    np.add.at(counts, (i1, i2), 1)
    n_window = int(counts.sum())
    expected = n_window / (bins * bins)
    if expected > 0:
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
    else:
        chi2 = math.inf
    from scipy import stats
    dof = bins * bins - 1
    rows = []
    for a in range(bins):
        for b in range(bins):
            rows.append({
                "bin_id": a * bins + b,
                "z1_lo": float(edges[a]), "z1_hi": float(edges[a + 1]),
                "z2_lo": float(edges[b]), "z2_hi": float(edges[b + 1]),
                "count": int(counts[a, b]), "expected": expected,
            })
    cond_mean = float(z[:, 0].mean()) if len(z) else math.nan
    cond_se = float(z[:, 0].std(ddof=1) / math.sqrt(len(z))) if len(z) > 1 else math.nan
    cond_mean2 = float(z[:, 1].mean()) if len(z) else math.nan
    cond_se2 = float(z[:, 1].std(ddof=1) / math.sqrt(len(z))) if len(z) > 1 else math.nan
    return {
        "histogram": rows,
        "gof_statistic": chi2,
        "dof": dof,
        "critical_99": float(stats.chi2.ppf(0.99, dof)),
        "survivors": int(len(z)),
        "under_powered": expected < 10,
        "conditional_mean_z1": cond_mean,
        "conditional_mean_z1_se": cond_se,
        "conditional_mean_z2": cond_mean2,
        "conditional_mean_z2_se": cond_se2,
        "reference_mean": math.sqrt(math.pi / 2),
        "reps": reps,
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# run-to-exit estimators
# ---------------------------------------------------------------------------

def _run_to_exit_worker(cone: Cone, model: IncrementModel, x: np.ndarray,
                        accumulate):
    """Batch worker that runs every path to exit (horizon cap HORIZON_CAP)
    and feeds real-coordinate positions to the accumulator, which must be
    associative over windows:
      - acc.visits(traj, ok, prev) per window of positions
      - acc.exits(points) for paths that left the cone this window"""
    frame_start, scale, scaled = _frame(model, x)

    def worker(b: int, nb: int, rng: np.random.Generator):
        acc = accumulate()
        pos = np.tile(frame_start, (nb, 1))
        d = pos.shape[1]
        n_cur = 0
        acc.start(nb)
        while len(pos) and n_cur < HORIZON_CAP:
            k = min(WINDOW, HORIZON_CAP - n_cur)
            m = len(pos)
            steps = sample_steps(model, rng, m * k, scaled=scaled).reshape(m, k, d)
            traj = pos[:, None, :] + np.cumsum(steps, axis=1)
            inside = geometry.contains(cone, traj.reshape(-1, d)).reshape(m, k)
            ok = np.logical_and.accumulate(inside, axis=1)
            alive = ok[:, -1]
            real = traj if scale == 1.0 else traj * scale
            acc.visits(real, ok, pos)
            died = ~alive
            if died.any():
                first_out = np.argmin(ok[died], axis=1)
                acc.exits(real[died, first_out, :])
            pos = traj[alive, -1, :]
            n_cur += k
        acc.finish(len(pos))
        return acc

    return worker


def estimate_V_decomposition(cone: Cone, model: IncrementModel, x, R: float,
                             reps: int, seed: int, workers: int = 1,
                             f_values=None) -> EstimateCI:
    """V_hat = u(x + R x0) - E[u(x + R x0 + S(tau_x))] + E[sum_{k<tau_x} f(x + R x0 + S(k))].

    The walk runs from x and is killed at tau_x, while u and f are read at
    the positions shifted by R x0; this is what makes the estimate
    R-independent even though no single term is.

    The f appearing in this telescoping (paired with the exit-value term)
    is the unkilled harmonic defect f(z) = E[u(z + X)] - u(z).  For the
    half-line, half-space, orthant and |x2| < x1 cones u is a harmonic
    polynomial annihilated by any centered identity-covariance step law,
    so f vanishes identically and the sum is dropped; pass f_values for
    cones (wedges) where it does not."""
    x = np.asarray(x, dtype=float)
    x0 = geometry.canonical_axis(cone)
    shift = R * x0
    start = x + shift
    if f_values is None and cone.kind == "wedge":
        raise MCError("wedge cones need an explicit f_values evaluator")

    class Acc:
        def __init__(self):
            self.exit_u_sum = 0.0
            self.exit_u_sq = 0.0
            self.fsum = None
            self.fsum_done = []
            self.capped = 0
            self.nb = 0

        def start(self, nb):
            self.nb = nb
            if f_values is not None:
                self.fsum = np.zeros(nb)
                self.alive_idx = np.arange(nb)
                fs = f_values(np.tile(start, (nb, 1)))
                self.fsum += fs

        def visits(self, traj, ok, prev_pos):
            if f_values is None:
                return
            m, k, d = traj.shape
            # pre-exit positions at window steps 1..k-1 (the exit position
            # itself, step tau, is excluded from the f-sum)
            flat = traj[:, :-1, :].reshape(-1, d) + shift
            mask = ok[:, :-1].reshape(-1)
            vals = np.zeros(m * (k - 1))
            if mask.any():
                vals[mask] = f_values(flat[mask])
            add = vals.reshape(m, k - 1).sum(axis=1)
            np.add.at(self.fsum, self.alive_idx, add)
            alive = ok[:, -1]
            self.alive_idx = self.alive_idx[alive]
            # window-final position of surviving paths is also pre-exit
            if alive.any():
                self.fsum[self.alive_idx] += f_values(traj[alive, -1, :] + shift)

        def exits(self, pts):
            u = geometry.u_value_signed(cone, pts + shift)
            self.exit_u_sum += float(u.sum())
            self.exit_u_sq += float((u * u).sum())

        def finish(self, capped):
            self.capped = capped

    parts = _run_batches(reps, seed, _run_to_exit_worker(cone, model, x, Acc),
                         workers=workers)
    exit_sum = sum(p.exit_u_sum for p in parts)
    exit_sq = sum(p.exit_u_sq for p in parts)
    capped = sum(p.capped for p in parts)
    exit_mean, exit_half = _mean_ci(exit_sum, exit_sq, reps)
    u_start = float(geometry.u_value(cone, start[None, :])[0])
    value = u_start - exit_mean
    half = exit_half
    if f_values is not None:
        fs = np.concatenate([p.fsum for p in parts])
        f_mean, f_half = _mean_ci(float(fs.sum()), float((fs * fs).sum()), reps)
        value += f_mean
        half = math.sqrt(exit_half**2 + f_half**2)
    flags = {}
    if capped > 0.001 * reps:
        flags["horizon_cap_unreliable"] = capped
    return EstimateCI(value, half, reps, seed, flags)


def estimate_max_moment(cone: Cone, model: IncrementModel, x, q: float,
                        reps: int, seed: int, workers: int = 1,
                        R: float = 0.0) -> EstimateCI:
    """E[max_{k <= tau} |S(k)|^q] with the path run to exit; reported with
    the normalization u(x + R x0)^{q/p} for the boundedness diagnostic."""
    p_exp = geometry.exponent_p(cone)
    if not 0 <= q < p_exp:
        raise MCError("q must satisfy 0 <= q < p")
    x = np.asarray(x, dtype=float)
    x0 = geometry.canonical_axis(cone)
    start = x + R * x0

    class Acc:
        def __init__(self):
            self.best = None
            self.done_sum = 0.0
            self.done_sq = 0.0
            self.capped = 0

        def start(self, nb):
            self.best = np.zeros(nb)
            self.alive_idx = np.arange(nb)

        def visits(self, traj, ok, prev_pos):
            m, k, _ = traj.shape
            disp = np.linalg.norm(traj - start[None, None, :], axis=2)
            # the maximum runs over k <= tau: the exit position counts, so
            # include the first outside position as well as inside ones
            reach = np.concatenate([np.ones((m, 1), dtype=bool), ok[:, :-1]], axis=1)
            disp = np.where(reach, disp, 0.0)
            np.maximum.at(self.best, self.alive_idx, disp.max(axis=1))
            died = ~ok[:, -1]
            if died.any():
                vals = self.best[self.alive_idx[died]] ** q
                self.done_sum += float(vals.sum())
                self.done_sq += float((vals * vals).sum())
            self.alive_idx = self.alive_idx[ok[:, -1]]

        def exits(self, pts):
            pass

        def finish(self, capped):
            self.capped = capped
            if capped:
                vals = self.best[self.alive_idx] ** q
                self.done_sum += float(vals.sum())
                self.done_sq += float((vals * vals).sum())

    parts = _run_batches(reps, seed, _run_to_exit_worker(cone, model, start, Acc),
                         workers=workers)
    total = sum(p.done_sum for p in parts)
    total_sq = sum(p.done_sq for p in parts)
    capped = sum(p.capped for p in parts)
    mean, half = _mean_ci(total, total_sq, reps)
    u_start = float(geometry.u_value(cone, start[None, :])[0])
    flags = {"normalizer": u_start ** (q / p_exp)}
    if capped > 0.001 * reps:
        flags["horizon_cap_unreliable"] = capped
    return EstimateCI(mean, half, reps, seed, flags)
