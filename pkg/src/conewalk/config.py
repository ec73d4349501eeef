"""Flat key = value run configuration.

A config is a UTF-8 text document of `key = value` lines (# comments,
blank lines allowed).  Parsing validates everything and reports the full
list of problems, not just the first; a seed is always required so no run
depends on implicit entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import geometry, halfline, models

__all__ = ["RunConfig", "ConfigError", "parse_config", "parse_config_file"]

EXPERIMENTS = (
    "survival",
    "v_estimate",
    "v_decomposition",
    "conditional_law",
    "en_sequence",
    "dp_exact",
    "halfline",
    "gamma_check",
    "potential_scan",
    "y_check",
)

_KNOWN_KEYS = {
    "experiment", "cone", "model", "law", "x", "n", "n_list", "n_max",
    "reps", "seed", "out_dir", "R", "c", "q", "gamma", "mode", "bins",
}

_NEEDS = {
    # keys required per experiment beyond (experiment, seed)
    "survival": ("cone", "model", "x", "n_list", "reps"),
    "v_estimate": ("cone", "model", "x", "n_list", "reps"),
    "v_decomposition": ("cone", "model", "x", "reps"),
    "conditional_law": ("cone", "model", "x", "n", "reps"),
    "en_sequence": ("cone", "model", "x", "n_list", "reps"),
    "dp_exact": ("model", "x", "n_max"),
    "halfline": ("law",),
    "gamma_check": ("gamma",),
    "potential_scan": (),
    "y_check": ("cone", "model", "x", "reps"),
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    experiment: str
    seed: int
    cone: str | None = None
    model: str | None = None
    law: str | None = None
    x: tuple | None = None
    n: int | None = None
    n_list: tuple | None = None
    n_max: int | None = None
    reps: int | None = None
    out_dir: str = "."
    R: float | None = None
    c: float | None = None
    q: float | None = None
    gamma: str | None = None
    mode: str | None = None
    bins: int = 5
    raw: dict = field(default_factory=dict)


def _parse_lines(text: str):
    pairs = {}
    errors = []
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            errors.append(f"line {ln}: expected key = value")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip().strip('"').strip("'")
        if key in pairs:
            errors.append(f"line {ln}: duplicate key {key!r}")
            continue
        pairs[key] = value
    return pairs, errors


def _to_int(pairs, key, errors):
    try:
        return int(pairs[key])
    except ValueError:
        errors.append(f"{key}: expected an integer, got {pairs[key]!r}")
        return None


def _to_float(pairs, key, errors):
    try:
        return float(pairs[key])
    except ValueError:
        errors.append(f"{key}: expected a number, got {pairs[key]!r}")
        return None


def _to_seq(pairs, key, errors, kind=float):
    try:
        return tuple(kind(tok) for tok in pairs[key].split(",") if tok.strip() != "")
    except ValueError:
        errors.append(f"{key}: expected comma-separated values, got {pairs[key]!r}")
        return None


def parse_config(text: str) -> RunConfig:
    pairs, errors = _parse_lines(text)

    for key in pairs:
        if key not in _KNOWN_KEYS:
            errors.append(f"unknown key {key!r}")

    experiment = pairs.get("experiment")
    if experiment is None:
        errors.append("experiment is required")
    elif experiment not in EXPERIMENTS:
        errors.append(
            f"experiment {experiment!r} is not one of {', '.join(EXPERIMENTS)}")

    if "seed" not in pairs:
        errors.append("seed required for reproducibility")
        seed = None
    else:
        seed = _to_int(pairs, "seed", errors)

    cfg = RunConfig(experiment=experiment or "", seed=seed if seed is not None else 0,
                    raw=dict(pairs))

    if "cone" in pairs:
        cfg.cone = pairs["cone"]
        try:
            geometry.parse_cone(cfg.cone)
        except geometry.ConeError as exc:
            errors.append(f"cone: {exc}")
    if "model" in pairs:
        cfg.model = pairs["model"]
        try:
            models.parse_model(cfg.model)
        except models.ModelError as exc:
            errors.append(f"model: {exc}")
    if "law" in pairs:
        cfg.law = pairs["law"]
        try:
            halfline.parse_law(cfg.law)
        except halfline.LawError as exc:
            errors.append(f"law: {exc}")
    if "x" in pairs:
        cfg.x = _to_seq(pairs, "x", errors)
    if "n" in pairs:
        cfg.n = _to_int(pairs, "n", errors)
    if "n_list" in pairs:
        nl = _to_seq(pairs, "n_list", errors, kind=int)
        if nl is not None:
            if any(b <= a for a, b in zip(nl, nl[1:])):
                errors.append("n_list must be strictly increasing")
            cfg.n_list = nl
    if "n_max" in pairs:
        cfg.n_max = _to_int(pairs, "n_max", errors)
    if "reps" in pairs:
        cfg.reps = _to_int(pairs, "reps", errors)
        if cfg.reps is not None and cfg.reps <= 0:
            errors.append("reps must be positive")
    if "out_dir" in pairs:
        cfg.out_dir = pairs["out_dir"]
    if "R" in pairs:
        cfg.R = _to_float(pairs, "R", errors)
    if "c" in pairs:
        cfg.c = _to_float(pairs, "c", errors)
    if "q" in pairs:
        cfg.q = _to_float(pairs, "q", errors)
    if "gamma" in pairs:
        cfg.gamma = pairs["gamma"]
        if cfg.gamma not in ("log2", "log1", "const", "auto"):
            errors.append("gamma: expected one of log2, log1, const, auto")
    if "mode" in pairs:
        cfg.mode = pairs["mode"]
        if cfg.mode not in ("auto", "exact", "float"):
            errors.append("mode: expected one of auto, exact, float")
    if "bins" in pairs:
        b = _to_int(pairs, "bins", errors)
        if b is not None:
            cfg.bins = b

    if experiment in _NEEDS:
        for key in _NEEDS[experiment]:
            if key not in pairs:
                errors.append(f"experiment {experiment!r} requires {key!r}")
    if experiment == "gamma_check" and pairs.get("gamma") == "auto" \
            and "model" not in pairs:
        errors.append("gamma_check with gamma = auto requires a model")

    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config_file(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
