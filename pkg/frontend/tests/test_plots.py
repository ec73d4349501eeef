import math
import os

import pytest

from conewalk_plots import FigureSpec, PlotError, render
from conewalk_plots.cli import main
from conewalk_plots.render import _exponent_from_config

REF = os.path.join(os.path.dirname(__file__), "..", "reference")

CASES = [
    ("survival_loglog", "survival/survival.csv"),
    ("en_curves", "en/en_mc.csv"),
    ("endpoint_heatmap", "endpoint/endpoint_histogram.csv"),
    ("drift_margin", "drift/drift.csv"),
    ("gamma_report", "gamma/gamma.csv"),
    ("potential_ratio", "potential/potential.csv"),
]


@pytest.mark.parametrize("kind,rel", CASES)
def test_reference_figures_render(kind, rel, tmp_path):
    out = tmp_path / f"{kind}.png"
    got = render(FigureSpec(os.path.join(REF, rel), kind, str(out)))
    assert got == str(out)
    assert out.exists() and out.stat().st_size > 1000


@pytest.mark.parametrize("kind,rel", CASES)
def test_rendering_is_deterministic(kind, rel, tmp_path):
    a = tmp_path / "a.png"
    b = tmp_path / "b.png"
    render(FigureSpec(os.path.join(REF, rel), kind, str(a)))
    render(FigureSpec(os.path.join(REF, rel), kind, str(b)))
    assert a.read_bytes() == b.read_bytes()


def test_overlay_exponent_from_config_echo():
    # the reference survival run is the planar quadrant: p = 2, slope -1
    p = _exponent_from_config(os.path.join(REF, "survival", "survival.csv"))
    assert p == 2.0


def test_exponent_closed_forms(tmp_path):
    for cone, expect in [("halfline", 1.0), ("halfspace:4", 1.0),
                         ("orthant:3", 3.0), ("weyl_d2", 2.0),
                         ("wedge:1.5707963267948966", 2.0)]:
        (tmp_path / "config.txt").write_text(f"cone = {cone}\n")
        csv = tmp_path / "survival.csv"
        csv.write_text("n,estimate\n1,0.5\n")
        assert _exponent_from_config(str(csv)) == pytest.approx(expect)


def test_schema_mismatch_names_missing_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("n,estimate,reps,seed\n10,0.5,100,1\n")
    out = tmp_path / "o.png"
    with pytest.raises(PlotError, match="'ci_half'"):
        render(FigureSpec(str(bad), "survival_loglog", str(out)))
    assert not out.exists()


def test_empty_csv_writes_nothing(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("n,estimate,ci_half,reps,seed\n")
    out = tmp_path / "o.png"
    with pytest.raises(PlotError, match="no data rows"):
        render(FigureSpec(str(empty), "survival_loglog", str(out)))
    assert not out.exists()


def test_missing_file_errors(tmp_path):
    with pytest.raises(PlotError, match="not found"):
        render(FigureSpec(str(tmp_path / "nope.csv"), "survival_loglog",
                          str(tmp_path / "o.png")))


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(PlotError, match="unknown figure kind"):
        render(FigureSpec("x.csv", "pie", str(tmp_path / "o.png")))


def test_drift_violation_gets_distinct_marker(tmp_path):
    csv = tmp_path / "drift.csv"
    csv.write_text("x,delta,neg_beta,margin\n"
                   "0,-0.6,-0.5,0.1\n"
                   "1,0.8,-0.5,-1.3\n")
    out = tmp_path / "d.png"
    render(FigureSpec(str(csv), "drift_margin", str(out)))
    legend = (tmp_path / "d.png.legend.txt").read_text().splitlines()
    assert "violation" in legend


def test_clean_drift_has_no_violation_class(tmp_path):
    out = tmp_path / "d.png"
    render(FigureSpec(os.path.join(REF, "drift", "drift.csv"), "drift_margin",
                      str(out)))
    legend = (tmp_path / "d.png.legend.txt").read_text().splitlines()
    assert "violation" not in legend
    assert "drift" in legend


def test_cli_round_trip(tmp_path, capsys):
    out = tmp_path / "fig.png"
    rc = main(["--csv", os.path.join(REF, "survival", "survival.csv"),
               "--kind", "survival_loglog", "--out", str(out)])
    assert rc == 0
    assert out.exists()


def test_cli_reports_schema_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    rc = main(["--csv", str(bad), "--kind", "gamma_report",
               "--out", str(tmp_path / "x.png")])
    assert rc == 1
    assert "missing column" in capsys.readouterr().err
