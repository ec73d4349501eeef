"""Experiment dispatch: RunConfig -> CSV outputs + manifest.

Every run writes its outputs, a config echo, and a manifest.json with the
in-run assertion results in a stable key order; the process exit status is
0 exactly when all assertions passed.
"""

from __future__ import annotations

import json
import os
import time
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np

from . import __version__, geometry, halfline, lattice, mc, models, potential
from .config import RunConfig

__all__ = ["run", "RunnerError"]


class RunnerError(RuntimeError):
    pass


def _fmt(v) -> str:
    """Serialize one CSV cell: floats at 17 significant digits, exact
    rationals as 30-significant-digit decimal strings."""
    if isinstance(v, Fraction):
        getcontext().prec = 30
        return str(Decimal(v.numerator) / Decimal(v.denominator))
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _x_vec(cfg: RunConfig) -> np.ndarray:
    return np.asarray(cfg.x, dtype=float)


def _exp_survival(cfg, workers, out_dir, assertions, outputs):
    cone = geometry.parse_cone(cfg.cone)
    model = models.parse_model(cfg.model)
    rows = mc.estimate_survival(cone, model, _x_vec(cfg), list(cfg.n_list),
                                cfg.reps, cfg.seed, workers=workers)
    path = os.path.join(out_dir, "survival.csv")
    _write_csv(path, ["n", "estimate", "ci_half", "reps", "seed"],
               [(n, e.value, e.half_width, e.reps, e.seed) for n, e in rows])
    outputs.append(path)
    vals = [e.value for _, e in rows]
    assertions["survival_monotone"] = all(a >= b for a, b in zip(vals, vals[1:]))


def _exp_v_estimate(cfg, workers, out_dir, assertions, outputs):
    cone = geometry.parse_cone(cfg.cone)
    model = models.parse_model(cfg.model)
    rows = mc.estimate_En_sequence(cone, model, _x_vec(cfg), list(cfg.n_list),
                                   cfg.reps, cfg.seed, workers=workers)
    path = os.path.join(out_dir, "v_estimates.csv")
    _write_csv(path, ["n", "estimate", "ci_half", "reps", "seed", "R"],
               [(n, e.value, e.half_width, e.reps, e.seed, 0.0) for n, e in rows])
    outputs.append(path)
    assertions["v_estimates_positive"] = all(e.value > 0 for _, e in rows)


def _exp_v_decomposition(cfg, workers, out_dir, assertions, outputs):
    cone = geometry.parse_cone(cfg.cone)
    model = models.parse_model(cfg.model)
    R = cfg.R if cfg.R is not None else 0.0
    est = mc.estimate_V_decomposition(cone, model, _x_vec(cfg), R,
                                      cfg.reps, cfg.seed, workers=workers)
    path = os.path.join(out_dir, "v_estimates.csv")
    _write_csv(path, ["n", "estimate", "ci_half", "reps", "seed", "R"],
               [(0, est.value, est.half_width, est.reps, est.seed, R)])
    outputs.append(path)
    assertions["v_decomposition_uncapped"] = \
        "horizon_cap_unreliable" not in est.flags


def _exp_conditional_law(cfg, workers, out_dir, assertions, outputs):
    cone = geometry.parse_cone(cfg.cone)
    model = models.parse_model(cfg.model)
    res = mc.conditional_endpoint_test(cone, model, _x_vec(cfg), cfg.n,
                                       cfg.reps, cfg.seed, bins=cfg.bins,
                                       workers=workers)
    path = os.path.join(out_dir, "endpoint_histogram.csv")
    _write_csv(path,
               ["bin_id", "z1_lo", "z1_hi", "z2_lo", "z2_hi", "count", "expected"],
               [(r["bin_id"], r["z1_lo"], r["z1_hi"], r["z2_lo"], r["z2_hi"],
                 r["count"], r["expected"]) for r in res["histogram"]])
    outputs.append(path)
    assertions["endpoint_gof_below_critical"] = \
        res["gof_statistic"] < res["critical_99"]
    assertions["endpoint_powered"] = not res["under_powered"]


def _exp_en_sequence(cfg, workers, out_dir, assertions, outputs):
    cone = geometry.parse_cone(cfg.cone)
    model = models.parse_model(cfg.model)
    rows = mc.estimate_En_sequence(cone, model, _x_vec(cfg), list(cfg.n_list),
                                   cfg.reps, cfg.seed, workers=workers)
    path = os.path.join(out_dir, "en_mc.csv")
    _write_csv(path, ["n", "estimate", "ci_half", "reps", "seed", "R"],
               [(n, e.value, e.half_width, e.reps, e.seed, 0.0) for n, e in rows])
    outputs.append(path)
    assertions["en_sequence_positive"] = all(e.value > 0 for _, e in rows)


def _exp_dp_exact(cfg, workers, out_dir, assertions, outputs):
    model = models.parse_model(cfg.model)
    x = tuple(int(v) for v in cfg.x)
    mode = cfg.mode or "auto"
    res = lattice.dp_run(x, model, cfg.n_max, mode=mode)
    rows = []
    for n in range(1, cfg.n_max + 1):
        ratio = ""
        if 2 * n <= cfg.n_max:
            en = res.en[n]
            ratio = (res.en[2 * n] / en) if en else ""
            if isinstance(ratio, Fraction) is False and ratio != "":
                ratio = float(ratio)
        surv = res.survival[n]
        en = res.en[n]
        pruned = res.mass_defect
        rows.append((n, surv, en, ratio, pruned))
    path = os.path.join(out_dir, "lattice.csv")
    _write_csv(path, ["n", "survival", "E_n", "ratio_2n", "pruned_mass"], rows)
    outputs.append(path)
    assertions["dp_mass_conserved"] = float(res.mass_defect) < 1e-12


def _exp_halfline(cfg, workers, out_dir, assertions, outputs):
    law = halfline.parse_law(cfg.law)
    tf = halfline.build_tail_functions(law)
    if cfg.R is not None:
        tf.R = cfg.R
    else:
        halfline.choose_R(tf)
    report = halfline.verify_drift_inequality(tf, law)
    path = os.path.join(out_dir, "drift.csv")
    _write_csv(path, ["x", "delta", "neg_beta", "margin"], report["rows"])
    outputs.append(path)
    assertions["drift_inequality"] = report["passed"]


def _gamma_and_tail(cfg):
    if cfg.model:
        model = models.parse_model(cfg.model)
        tail = potential.model_tail_function(model)
    else:
        tail = potential.tail_power3
    name = cfg.gamma or "log2"
    if name == "log2":
        return potential.gamma_log2(), tail
    if name == "log1":
        return potential.gamma_log1(), tail
    if name == "const":
        return potential.gamma_const(), tail
    built = potential.construct_gamma_default(tail, p=2.0)
    if isinstance(built, dict):
        raise RunnerError(f"gamma construction failed validation: {built['checks']}")
    return built, tail


def _exp_gamma_check(cfg, workers, out_dir, assertions, outputs):
    gamma, tail = _gamma_and_tail(cfg)
    report = potential.validate_gamma(gamma, tail, p=2.0)
    g = gamma.grid
    step = max(1, len(g) // 256)
    rows = []
    for i in range(0, len(g), step):
        t = float(g[i])
        ell = float(gamma.ell_bar[i]) if gamma.ell_bar is not None else 0.0
        rows.append((t, float(gamma.values[i]), ell,
                     float(gamma(2 * t) / gamma.values[i])))
    path = os.path.join(out_dir, "gamma.csv")
    _write_csv(path, ["t", "gamma", "ell_bar", "ratio"], rows)
    outputs.append(path)
    for name, ok in report["checks"].items():
        assertions[f"gamma_{name}"] = bool(ok)


def _exp_potential_scan(cfg, workers, out_dir, assertions, outputs):
    cone = geometry.parse_cone(cfg.cone or "orthant:2")
    betafield = potential.BetaField(cone, potential.gamma_log2())
    ds = list(cfg.n_list) if cfg.n_list else [4, 16, 64]
    ys = [np.array([float(d), float(d)]) for d in ds]
    res = potential.potential_ratio_scan(cone, betafield, ys)
    rows = [(r["d_y"], r["I1"], r["I2"], r["I3"], r["I4"], r["u_y"], r["ratio"])
            for r in res["rows"]]
    path = os.path.join(out_dir, "potential.csv")
    _write_csv(path, ["d_y", "I1", "I2", "I3", "I4", "u_y", "ratio"], rows)
    outputs.append(path)
    ratios = [r["ratio"] for r in res["rows"]]
    assertions["potential_ratio_halves"] = ratios[-1] <= 0.5 * ratios[0]


def _exp_y_check(cfg, workers, out_dir, assertions, outputs):
    cone = geometry.parse_cone(cfg.cone)
    model = models.parse_model(cfg.model)
    res = potential.supermartingale_Y_check(
        cone, model, _x_vec(cfg), R=cfg.R,
        c=cfg.c if cfg.c is not None else 1.0 / 3.0,
        n_max=cfg.n_max or 50, reps=cfg.reps, seed=cfg.seed)
    path = os.path.join(out_dir, "y_means.csv")
    _write_csv(path, ["n", "y_mean"],
               [(n, v) for n, v in enumerate(res["means"])])
    outputs.append(path)
    assertions["y_means_nonincreasing"] = res["monotone_ok"]
    assertions["beta_sum_bounded"] = \
        res["beta_sum_mean"] <= res["beta_bound"] + res["beta_sum_ci"]


_DISPATCH = {
    "survival": _exp_survival,
    "v_estimate": _exp_v_estimate,
    "v_decomposition": _exp_v_decomposition,
    "conditional_law": _exp_conditional_law,
    "en_sequence": _exp_en_sequence,
    "dp_exact": _exp_dp_exact,
    "halfline": _exp_halfline,
    "gamma_check": _exp_gamma_check,
    "potential_scan": _exp_potential_scan,
    "y_check": _exp_y_check,
}


def run(cfg: RunConfig, workers: int = 1, out_dir: str | None = None) -> int:
    """Execute one experiment; returns 0 iff every in-run assertion passed.

    Outputs: the experiment's CSVs, config.txt (echo), manifest.json."""
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    assertions: dict = {}
    outputs: list = []
    t0 = time.time()
    error = None
    try:
        _DISPATCH[cfg.experiment](cfg, workers, out_dir, assertions, outputs)
    except Exception as exc:  # partial outputs are retained
        error = f"{type(exc).__name__}: {exc}"
    echo_path = os.path.join(out_dir, "config.txt")
    with open(echo_path, "w", encoding="utf-8") as fh:
        for key in sorted(cfg.raw):
            fh.write(f"{key} = {cfg.raw[key]}\n")
    outputs.append(echo_path)
    manifest = {
        "assertions": {k: bool(v) for k, v in sorted(assertions.items())},
        "config": {k: cfg.raw[k] for k in sorted(cfg.raw)},
        "error": error,
        "experiment": cfg.experiment,
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "version": __version__,
        "wall_time_s": round(time.time() - t0, 3),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if error is not None:
        return 2
    return 0 if all(assertions.values()) else 1
