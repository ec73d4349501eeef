import pytest

from conewalk.config import ConfigError, parse_config

MINIMAL = """
experiment = survival
cone = orthant:2
model = gauss:2
x = 3,3
n_list = 10,100
reps = 1000
seed = 7
"""


def test_minimal_survival_config_parses():
    cfg = parse_config(MINIMAL)
    assert cfg.experiment == "survival"
    assert cfg.seed == 7
    assert cfg.x == (3.0, 3.0)
    assert cfg.n_list == (10, 100)


def test_comments_and_blank_lines():
    cfg = parse_config("# a comment\n\n" + MINIMAL)
    assert cfg.seed == 7


def test_missing_seed_message():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("seed = 7", ""))
    assert "seed required for reproducibility" in exc.value.errors


def test_all_errors_reported_not_just_first():
    text = """
experiment = teleport
cone = wedge:6.7
model = gauss:2
x = 3,3
n_list = 10,100
reps = 1000
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    errors = "\n".join(exc.value.errors)
    assert "teleport" in errors
    assert "cone" in errors
    assert "seed required" in errors
    assert len(exc.value.errors) >= 3


def test_wedge_angle_error_names_bound():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("orthant:2", "wedge:6.7"))
    assert any("2*pi" in e for e in exc.value.errors)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "\nturbo = yes\n")
    assert any("unknown key" in e for e in exc.value.errors)


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "\nseed = 9\n")
    assert any("duplicate" in e for e in exc.value.errors)


def test_n_list_must_increase():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("10,100", "100,10"))
    assert any("strictly increasing" in e for e in exc.value.errors)


def test_experiment_specific_requirements():
    with pytest.raises(ConfigError) as exc:
        parse_config("experiment = dp_exact\nseed = 1\n")
    errors = "\n".join(exc.value.errors)
    assert "model" in errors and "n_max" in errors


def test_gamma_enum():
    with pytest.raises(ConfigError):
        parse_config("experiment = gamma_check\ngamma = cubic\nseed = 1\n")
    cfg = parse_config("experiment = gamma_check\ngamma = log2\nseed = 1\n")
    assert cfg.gamma == "log2"


def test_gamma_auto_needs_model():
    with pytest.raises(ConfigError) as exc:
        parse_config("experiment = gamma_check\ngamma = auto\nseed = 1\n")
    assert any("requires a model" in e for e in exc.value.errors)


def test_law_grammar_checked():
    with pytest.raises(ConfigError) as exc:
        parse_config("experiment = halfline\nlaw = pm3\nseed = 1\n")
    assert any("law" in e for e in exc.value.errors)
