import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conewalk import geometry
from conewalk.geometry import (Cone, ConeError, assumption_g_probe,
                               canonical_axis, contains, dist_to_boundary,
                               exponent_p, parse_cone, u_value, u_value_signed)


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

def test_parse_cone_grammar():
    assert parse_cone("halfline").kind == "halfline"
    assert parse_cone("halfspace:3").dim == 3
    assert parse_cone("orthant:2").dim == 2
    w = parse_cone("wedge:1.5")
    assert w.kind == "wedge" and w.alpha == 1.5
    assert parse_cone("weyl_d2").dim == 2


@pytest.mark.parametrize("bad", [
    "halfline:2", "orthant", "wedge", "wedge:0", "pyramid:3", "orthant:x",
])
def test_parse_cone_rejects(bad):
    with pytest.raises(ConeError):
        parse_cone(bad)


def test_wedge_angle_bound_named():
    with pytest.raises(ConeError, match="2\\*pi"):
        parse_cone("wedge:6.7")


def test_spec_string_round_trip():
    for s in ["halfline", "halfspace:4", "orthant:3", "wedge:1.5", "weyl_d2"]:
        assert parse_cone(parse_cone(s).spec_string()).spec_string() == \
            parse_cone(s).spec_string()


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def test_quadrant_closed_forms():
    c = parse_cone("orthant:2")
    assert contains(c, [1.0, 2.0])
    assert not contains(c, [0.0, 1.0])  # boundary is outside (open cone)
    assert not contains(c, [-1.0, 1.0])
    assert u_value(c, [3.0, 4.0]) == 12.0
    assert u_value(c, [-3.0, 4.0]) == 0.0
    assert dist_to_boundary(c, [3.0, 4.0]) == 3.0


def test_weyl_closed_forms():
    c = parse_cone("weyl_d2")
    assert contains(c, [2.0, 1.0]) and not contains(c, [2.0, 2.0])
    assert u_value(c, [3.0, 1.0]) == 8.0
    assert u_value(c, [2.0, 2.0]) == 0.0
    assert dist_to_boundary(c, [3.0, 1.0]) == pytest.approx(2.0 / math.sqrt(2))


def test_halfspace_and_halfline():
    h = parse_cone("halfspace:3")
    assert u_value(h, [5.0, -2.0, 0.7]) == 0.7
    assert dist_to_boundary(h, [5.0, -2.0, 0.7]) == 0.7
    l = parse_cone("halfline")
    assert u_value(l, [2.5]) == 2.5 and u_value(l, [-1.0]) == 0.0


def test_wedge_halfplane_matches_halfspace_exponent():
    # alpha = pi is the right half-plane: p = 1 and u is the distance to
    # the bounding vertical line, i.e. the first coordinate
    w = parse_cone(f"wedge:{math.pi}")
    assert exponent_p(w) == pytest.approx(1.0)
    assert u_value(w, [1.0, 0.5]) == pytest.approx(1.0)
    assert dist_to_boundary(w, [1.0, 0.5]) == pytest.approx(1.0)


def test_exponents():
    assert exponent_p(parse_cone("halfline")) == 1.0
    assert exponent_p(parse_cone("halfspace:5")) == 1.0
    assert exponent_p(parse_cone("orthant:3")) == 3.0
    assert exponent_p(parse_cone("weyl_d2")) == 2.0
    assert exponent_p(parse_cone("wedge:1.5707963267948966")) == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

CONES = ["orthant:2", "orthant:3", "weyl_d2", "wedge:1.2", "halfspace:2"]


def _interior_point(cone: Cone, rng: np.random.Generator) -> np.ndarray:
    for _ in range(100):
        x = rng.uniform(-4, 4, size=cone.dim)
        if contains(cone, x):
            return x
    return canonical_axis(cone) * 2.0


@settings(deadline=None, max_examples=40)
@given(spec=st.sampled_from(CONES), seed=st.integers(0, 10**6),
       scale=st.floats(0.1, 10.0))
def test_u_homogeneity(spec, seed, scale):
    cone = parse_cone(spec)
    x = _interior_point(cone, np.random.default_rng(seed))
    p = exponent_p(cone)
    assert u_value(cone, scale * x) == pytest.approx(
        scale**p * u_value(cone, x), rel=1e-9)


@settings(deadline=None, max_examples=40)
@given(spec=st.sampled_from(CONES), seed=st.integers(0, 10**6))
def test_dist_bounded_by_norm(spec, seed):
    cone = parse_cone(spec)
    x = np.random.default_rng(seed).uniform(-4, 4, size=cone.dim)
    assert dist_to_boundary(cone, x) <= np.linalg.norm(x) + 1e-12


@settings(deadline=None, max_examples=40)
@given(spec=st.sampled_from(CONES), seed=st.integers(0, 10**6))
def test_u_positive_inside_zero_outside(spec, seed):
    cone = parse_cone(spec)
    x = np.random.default_rng(seed).uniform(-4, 4, size=cone.dim)
    u = u_value(cone, x)
    if contains(cone, x):
        assert u > 0
        assert u_value_signed(cone, x) == u
    else:
        assert u == 0.0


def test_signed_u_is_negative_past_the_boundary():
    c = parse_cone("weyl_d2")
    assert u_value(c, [1.0, 2.0]) == 0.0
    assert u_value_signed(cone := c, x := [1.0, 2.0]) == -3.0


def test_batch_matches_scalar():
    cone = parse_cone("orthant:2")
    pts = np.array([[1.0, 2.0], [-1.0, 2.0], [0.5, 0.5]])
    batch = u_value(cone, pts)
    for row, expect in zip(pts, batch):
        assert u_value(cone, row) == expect


def test_dimension_mismatch_raises():
    with pytest.raises(ConeError):
        u_value(parse_cone("orthant:2"), [1.0, 2.0, 3.0])


def test_comparability_probe():
    cone = parse_cone("orthant:2")
    rng = np.random.default_rng(5)
    pts = [_interior_point(cone, rng) for _ in range(200)]
    r = assumption_g_probe(cone, pts)
    assert 0 < r["c_low"] <= r["c_high"] < math.inf


def test_probe_rejects_outside_points():
    with pytest.raises(ConeError):
        assumption_g_probe(parse_cone("orthant:2"), [[1.0, -1.0]])
