"""Acceptance gate: one test per headline claim, each ending in a single
PASS/FAIL line.  Tolerances are pinned here and nowhere else.

The heavy-tail trend margin (criterion 2b) is implemented faithfully and
is expected to fail at desk scale: the truncated heavy family's ratio
advantage over the light family is about 0.007, below the required 0.02.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from conewalk import lattice, potential
from conewalk.geometry import parse_cone
from conewalk.halfline import (build_tail_functions, choose_R, drift_delta,
                               overshoot_check, parse_law,
                               verify_drift_inequality)
from conewalk.mc import (conditional_endpoint_test, estimate_En_sequence,
                         estimate_survival, estimate_V_decomposition,
                         fit_survival_slope)
from conewalk.models import parse_model
from conewalk.potential import (BetaField, f_bound_scan, gamma_log1,
                                gamma_log2, model_tail_function,
                                potential_ratio_scan,
                                supermartingale_Y_check, tail_power3,
                                validate_gamma)

SQRT2 = math.sqrt(2.0)
WORKERS = 4

QUAD = parse_cone("orthant:2")
WEYL = parse_cone("weyl_d2")
GAUSS = parse_model("gauss:2")


def _report(name: str, ok: bool, detail: str = ""):
    line = f"{'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. lattice-exact martingale property of the first example family
# ---------------------------------------------------------------------------

def test_c1_example1_martingale_exactness():
    ok = True
    for fam in (1, 2):
        model = parse_model(f"ex1:family:{fam}")
        for x in ((1, 0), (2, 0), (3, 1)):
            res = lattice.dp_run(x, model, 200, mode="exact", audit=True)
            u0 = Fraction(2 * (x[0] ** 2 - x[1] ** 2))
            ok &= all(e == u0 for e in res.en)
            exited = res.exit_u_min is not None
            ok &= (not exited) or (res.exit_u_min == 0 and res.exit_u_max == 0)
    audit = lattice.exit_value_audit((2, 0), 200, parse_model("ex1:family:1"))
    ok &= audit["max_exit_u"] == 0 and audit["min_exit_u"] == 0
    _report("exact DP: E_n = u(x) and all exits on the zero set "
            "(families 1 and 2, three starts, n <= 200)", ok)


# ---------------------------------------------------------------------------
# 2. swapped-coordinate family trends (light passes, heavy margin is RED)
# ---------------------------------------------------------------------------

def _light_heavy_runs():
    light = lattice.dp_run((2, 0), parse_model("ex2:family:2"), 1000,
                           mode="float")
    heavy = lattice.dp_run((2, 0), parse_model("ex2:heavy:10000"), 1000,
                           mode="float")
    return light, heavy


@pytest.fixture(scope="module")
def example2_runs():
    return _light_heavy_runs()


def test_c2a_example2_light_trends(example2_runs):
    light, _ = example2_runs
    en = [float(v) for v in light.en]
    surv = [float(v) for v in light.survival]
    nondecreasing = all(b >= a for a, b in zip(en[:401], en[1:401]))
    ratios = [en[2 * n] / en[n] for n in (25, 50, 100, 200)]
    ratio_monotone = all(b <= a for a, b in zip(ratios, ratios[1:]))
    ratio_to_one = all(r >= 1.0 - 1e-9 for r in ratios)
    final_ratio_ok = en[400] / en[200] < 1.05
    nps = [n * surv[n] / en[n] for n in (100, 200)]
    plateau_ok = abs(nps[1] - nps[0]) / nps[0] < 0.20
    ok = nondecreasing and ratio_monotone and ratio_to_one and \
        final_ratio_ok and plateau_ok
    _report("light swapped family: E_n nondecreasing, doubling ratio "
            "decreasing toward 1, E_400/E_200 < 1.05, n*P/E_n plateau "
            "within 20%", ok,
            f"E400/E200={en[400] / en[200]:.4f}")


def test_c2b_example2_heavy_margin(example2_runs):
    light, heavy = example2_runs
    rl = float(light.en[1000]) / float(light.en[250])
    rh = float(heavy.en[1000]) / float(heavy.en[250])
    margin = rh - rl
    _report("heavy swapped family: doubling-ratio margin over the light "
            "family exceeds 0.02", margin > 0.02,
            f"margin={margin:.4f}; truncation at k_max=1e4 caps the "
            "attainable margin near 0.007")


# ---------------------------------------------------------------------------
# 3. survival tail exponents
# ---------------------------------------------------------------------------

def test_c3_tail_exponents():
    n_list = [1000, 2000, 5000, 10000, 20000, 50000, 100000]
    runs = [
        (QUAD, GAUSS, [3.0, 3.0], -1.0, 0.1, 61, "quadrant+gauss"),
        (parse_cone("halfline"), parse_model("pm1"), [0.0], -0.5, 0.05, 62,
         "halfline+pm1"),
        (WEYL, parse_model("ex1:family:1"),
         np.array([2.0, 0.0]) * SQRT2, -1.0, 0.1, 63, "weyl+family1"),
    ]
    ok = True
    details = []
    for cone, model, x, target, tol, seed, label in runs:
        rows = estimate_survival(cone, model, x, n_list, 1_000_000,
                                 seed=seed, workers=WORKERS)
        slope = fit_survival_slope(rows)
        ok &= abs(slope - target) <= tol
        details.append(f"{label}: {slope:.3f}")
    _report("log-log survival slopes -1.0/-0.5/-1.0 within stated "
            "tolerances at 1e6 paths", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 4. conditional endpoint law
# ---------------------------------------------------------------------------

def test_c4_conditional_limit_law():
    r = conditional_endpoint_test(QUAD, GAUSS, [2.0, 2.0], 10_000,
                                  48_000_000, seed=71, workers=WORKERS)
    ref = math.sqrt(math.pi / 2)
    powered = r["survivors"] >= 20_000
    mean_ok = (abs(r["conditional_mean_z1"] - ref) <= 0.03 and
               abs(r["conditional_mean_z2"] - ref) <= 0.03)
    gof_ok = r["gof_statistic"] < r["critical_99"]
    ok = powered and mean_ok and gof_ok
    _report("conditional endpoint law: >= 2e4 survivors, per-coordinate "
            "mean sqrt(pi/2) +- 0.03, chi-square over 25 bins below the "
            "99% critical value", ok,
            f"survivors={r['survivors']}, m1={r['conditional_mean_z1']:.4f}, "
            f"m2={r['conditional_mean_z2']:.4f}, "
            f"chi2={r['gof_statistic']:.1f} < {r['critical_99']:.1f}")


# ---------------------------------------------------------------------------
# 5. V estimator consistency
# ---------------------------------------------------------------------------

def test_c5_v_consistency():
    ok = True
    details = []
    for x, seed in (([3.0, 3.0], 101), ([6.0, 6.0], 102)):
        rows = estimate_En_sequence(QUAD, GAUSS, x, [100, 1000, 10000],
                                    30_000, seed=seed, workers=WORKERS)
        vd = estimate_V_decomposition(QUAD, GAUSS, x, 0.0, 30_000,
                                      seed=seed + 50, workers=WORKERS)
        for n, e in rows:
            joint = math.hypot(e.half_width, vd.half_width)
            agree = abs(e.value - vd.value) <= 4 * joint
            ok &= agree
            details.append(f"x={x[0]:g} n={n}: "
                           f"|{e.value:.2f}-{vd.value:.2f}|<=4*{joint:.2f}")
    vb = estimate_V_decomposition(QUAD, GAUSS, [50.0, 50.0], 0.0, 4_000,
                                  seed=77, workers=WORKERS)
    ratio = vb.value / 2500.0
    ok &= 0.9 <= ratio <= 1.1
    details.append(f"bisector d=50 ratio={ratio:.3f}")
    _report("truncated and decomposition V estimators agree within 4 joint "
            "CI; deep-interior ratio V/u in [0.9, 1.1]", ok,
            "; ".join(details[-3:]))


# ---------------------------------------------------------------------------
# 6. half-line drift inequality and overshoot
# ---------------------------------------------------------------------------

def test_c6_halfline_drift_inequality():
    ok = True
    details = []
    for spec in ("pm1", "gauss"):
        law = parse_law(spec)
        tf = build_tail_functions(law)
        choose_R(tf)
        rep = verify_drift_inequality(tf, law)
        ok &= rep["passed"] and len(rep["rows"]) >= 1000
        details.append(f"{spec}: worst margin {rep['worst_margin']:.3e} "
                       f"on {len(rep['rows'])} points")
    # negative control in exact arithmetic
    law = parse_law("pm1")
    tf = build_tail_functions(law)
    tf.R = 0.0
    delta0 = drift_delta(tf, law, 0.0)
    ok &= delta0 == Fraction(5, 6)
    ok &= tf.beta_exact(Fraction(0)) == Fraction(1, 2)
    ok &= not (delta0 <= -Fraction(1, 2))
    # overshoot: the +-1 walk always lands exactly on -1
    choose_R(tf)
    for x in (0.0, 1.0, 5.0):
        r = overshoot_check(tf, law, x, reps=2000, seed=3)
        ok &= r["passed"] and r["estimate"] == 1.0
    _report("drift inequality on the 1e3-point grid (pm1, gauss); R=0 "
            "control fails exactly with Delta(0)=5/6 vs -1/2; overshoot "
            "exactly 1 at x in {0,1,5}", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 7. gamma and beta machinery
# ---------------------------------------------------------------------------

def test_c7_gamma_beta_machinery():
    ok = True
    details = []
    heavy_tail = model_tail_function(parse_model("ex1:heavy:10000"))
    for tail, label in ((tail_power3, "t^-3"), (heavy_tail, "heavy")):
        r = validate_gamma(gamma_log2(), tail, p=2.0)
        ok &= r["passed"]
        details.append(f"log2 vs {label}: {r['passed']}")
    r1 = validate_gamma(gamma_log1(), tail_power3, p=2.0)
    ok &= (not r1["passed"]) and (not r1["checks"]["integrability"])

    bf = BetaField(QUAD, gamma_log2())
    fs = f_bound_scan(QUAD, GAUSS, bf, [1.0, 1.0], [2.0, 4.0, 8.0, 16.0, 32.0])
    ok &= fs["last_ratio"] <= 0.5 * fs["first_ratio"]
    details.append(f"f/beta: {fs['first_ratio']:.3f} -> {fs['last_ratio']:.3f}")

    ys = [np.array([d, d], dtype=float) for d in (4.0, 16.0, 64.0)]
    ps = potential_ratio_scan(QUAD, bf, ys)
    ratios = [row["ratio"] for row in ps["rows"]]
    ok &= ratios[-1] <= 0.5 * ratios[0]
    details.append(f"potential: {ratios[0]:.3f} -> {ratios[-1]:.3f}")
    _report("slowly-varying gamma validated (and the 1/log control "
            "rejected); |f|/beta and potential/u ratios halve across the "
            "scan ranges", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 8. supermartingale spot check
# ---------------------------------------------------------------------------

def test_c8_supermartingale_Y():
    r = supermartingale_Y_check(QUAD, GAUSS, [3.0, 3.0], c=1.0 / 3.0,
                                n_max=50, reps=20_000, seed=2)
    beta_ok = r["beta_sum_mean"] <= r["beta_bound"] + r["beta_sum_ci"]
    ok = r["passed"] and r["monotone_ok"] and beta_ok
    _report("Y means nonincreasing within CI over n <= 50 at c = 1/3; "
            "accumulated beta within three potentials of the start", ok,
            f"R={r['R']}, beta sum {r['beta_sum_mean']:.2f} <= "
            f"{r['beta_bound']:.1f}")


# ---------------------------------------------------------------------------
# 9. estimator-vs-exact-DP equivalence
# ---------------------------------------------------------------------------

def test_c9_oracle_equivalence():
    model = parse_model("ex1:family:2")
    ns = [1, 2, 5, 10, 50, 100, 200]
    ok = True
    worst = 0.0
    for x0 in ((1, 0), (2, 0)):
        dp = lattice.dp_run(x0, model, 200, mode="exact", audit=False)
        x = np.array(x0, dtype=float) * SQRT2
        srows = estimate_survival(WEYL, model, x, ns, 200_000, seed=81,
                                  workers=WORKERS)
        erows = estimate_En_sequence(WEYL, model, x, ns, 200_000, seed=81,
                                     workers=WORKERS)
        for (n, s), (_, e) in zip(srows, erows):
            ds = abs(s.value - float(dp.survival[n]))
            de = abs(e.value - float(dp.en[n]))
            ok &= ds <= 4 * s.half_width and de <= 4 * e.half_width
            worst = max(worst,
                        ds / max(s.half_width, 1e-300),
                        de / max(e.half_width, 1e-300))
    _report("MC survival and E_n match the exact DP within 4 CI on the "
            "full start-by-horizon grid", ok,
            f"worst deviation {worst:.2f} half-widths")
