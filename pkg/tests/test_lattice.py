import itertools
import math
from fractions import Fraction

import pytest

from conewalk import lattice
from conewalk.lattice import (LatticeError, dp_run, exact_En, exact_survival,
                              exit_value_audit, make_table,
                              slow_variation_report)
from conewalk.models import parse_model


def _u(a, b):
    return 2 * (a * a - b * b)


def _enumerate(x, model, n):
    """Independent oracle: brute-force path enumeration over atom tuples."""
    atoms = model.lattice_atoms()
    surv = Fraction(0)
    en = Fraction(0)
    for combo in itertools.product(atoms, repeat=n):
        a, b = x
        prob = Fraction(1)
        alive = True
        for (da, db), p in combo:
            prob *= p
            a, b = a + da, b + db
            if not abs(b) < a:
                alive = False
                break
        if alive:
            surv += prob
            en += prob * _u(a, b)
    return surv, en


@pytest.mark.parametrize("spec,x,n", [
    ("ex1:family:1", (2, 0), 3),
    ("ex1:family:2", (2, 0), 3),
    ("ex2:family:2", (2, 0), 3),
    ("ex1:family:3", (3, 1), 2),
])
def test_dp_matches_enumeration(spec, x, n):
    model = parse_model(spec)
    surv, en = _enumerate(x, model, n)
    assert exact_survival(x, n, model) == surv
    assert exact_En(x, n, model) == en


def test_one_step_survival_from_the_edge():
    # from (1, 0) the vertical moves land on |b| = a and the left move
    # lands on the apex; only the right move survives
    model = parse_model("ex1:family:1")
    assert exact_survival((1, 0), 1, model) == Fraction(1, 4)


def test_martingale_exactness_short():
    model = parse_model("ex1:family:2")
    res = dp_run((2, 0), model, 40, mode="exact")
    assert all(e == 8 for e in res.en)
    audit = exit_value_audit((2, 0), 40, model)
    assert audit["max_exit_u"] == 0 and audit["min_exit_u"] == 0
    assert audit["killed_u_sum"] == 0


def test_float_mode_tracks_exact():
    model = parse_model("ex1:family:2")
    re = dp_run((3, 1), model, 60, mode="exact")
    rf = dp_run((3, 1), model, 60, mode="float")
    for n in (1, 10, 30, 60):
        assert float(re.survival[n]) == pytest.approx(rf.survival[n], rel=1e-12)
        assert float(re.en[n]) == pytest.approx(rf.en[n], rel=1e-10)


def test_fft_mode_tracks_direct_float():
    model = parse_model("ex2:heavy:200")  # 201 atoms triggers the FFT path
    rf = dp_run((2, 0), model, 30, mode="float")
    # direct float convolution on the same model via a small-support check
    # is unavailable; validate with conservation and a probability sanity
    assert rf.mass_defect < 1e-9
    assert all(0.0 <= s <= 1.0 + 1e-12 for s in rf.survival)
    assert all(b <= a + 1e-12 for a, b in zip(rf.survival, rf.survival[1:]))


def test_mass_conservation_exact():
    model = parse_model("ex1:family:3")
    res = dp_run((2, 0), model, 50, mode="exact")
    assert res.mass_defect == 0.0


def test_survival_monotone_and_bounded():
    model = parse_model("ex2:family:2")
    res = dp_run((2, 0), model, 80, mode="exact")
    s = res.survival
    assert s[0] == 1
    assert all(b <= a for a, b in zip(s, s[1:]))
    assert all(0 <= v <= 1 for v in s)


def test_start_must_be_interior():
    model = parse_model("ex1:family:1")
    with pytest.raises(LatticeError):
        make_table((1, 1), model, 5)


def test_dp_requires_lattice_model():
    with pytest.raises(LatticeError):
        dp_run((2, 0), parse_model("gauss:2"), 5)


def test_slow_variation_report_columns():
    model = parse_model("ex2:family:2")
    rows = slow_variation_report((2, 0), model, 40, mode="exact")
    res = dp_run((2, 0), model, 40, mode="exact")
    for n, e_n, ratio, nps in rows:
        assert e_n == pytest.approx(float(res.en[n]))
        assert ratio == pytest.approx(float(res.en[2 * n]) / float(res.en[n]))
        assert nps == pytest.approx(
            n * float(res.survival[n]) / float(res.en[n]))
