"""Experiment configuration files.

The format is INI (read with :mod:`configparser`)::

    [problem]
    kind = synthetic-poisoning      # poisoning | synthetic-poisoning | quadratic-saddle | bilinear
    n = 500
    d = 20

    [solver]
    algorithm = pgfda-concave       # pgfda | nl-pgfda | pgfda-concave | nl-pgfda-concave
    eps = 0.1
    eta_x = 0.01
    ...

    [recipe]                        # alternative to explicit step sizes / batch sizes
    delta = 0.1
    eps = 0.1

    [run]
    seed = 0
    max_szo = 1000000

    [certify]                       # optional
    N = 10000

    [output]
    trace = trace.csv
    format = csv                    # csv | jsonl (alias json-lines)

See the README for every key and its default.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "dump_config"]

PROBLEM_KINDS = ("poisoning", "synthetic-poisoning", "quadratic-saddle", "bilinear")
ALGORITHMS = ("pgfda", "nl-pgfda", "pgfda-concave", "nl-pgfda-concave")
FORMATS = ("csv", "jsonl", "json-lines")

_PROBLEM_KEYS = {
    "kind": str,
    "path": str,
    "n_features": int,
    "r": float,
    "lam": float,
    "beta": float,
    "corrupt_frac": float,
    "split_seed": int,
    "x_bound": float,
    "n": int,
    "d": int,
    "data_seed": int,
    "d_x": int,
    "d_y": int,
    "mu": float,
    "sigma": float,
    "toy_seed": int,
}
_PGFDA_KEYS = {
    "eta_x": float,
    "eta_y": float,
    "eta_y_tilde": float,
    "T": int,
    "K_in": int,
    "K_out": int,
    "delta": float,
    "p": float,
    "b": int,
    "b_tilde": int,
}
_NL_KEYS = {"eta": float, "T": int, "b": int, "K": int, "delta": float, "delta_tilde": float}
_RECIPE_KEYS = {"delta": float, "eps": float, "const": float, "delta_hat": float, "delta_tilde": float}
_RUN_KEYS = {
    "seed": int,
    "max_szo": int,
    "trace_every": int,
    "phi_method": str,
    "phi_budget": int,
    "phi_samples": int,
    "record_wall_ms": bool,
    "x0": str,
    "y0": str,
}
_CERTIFY_KEYS = {"N": int, "eta_x": float, "eta_y": float, "eta": float, "inner_budget": int}
_OUTPUT_KEYS = {"trace": str, "format": str}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    problem: dict
    algorithm: str
    params: dict = field(default_factory=dict)
    recipe: dict | None = None
    eps: float | None = None
    run: dict = field(default_factory=dict)
    certify: dict | None = None
    output: dict = field(default_factory=dict)

    @property
    def concave(self) -> bool:
        return self.algorithm.endswith("-concave")

    @property
    def nested(self) -> bool:
        return self.algorithm.startswith("nl-")


def _convert(section: str, key: str, raw: str, typ):
    try:
        if typ is bool:
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {typ.__name__}") from None


def _section(cp: configparser.ConfigParser, name: str, schema: dict, required: bool = False) -> dict | None:
    if not cp.has_section(name):
        if required:
            raise ConfigError(f"missing [{name}] section")
        return None
    out = {}
    for key, raw in cp.items(name):
        if key not in schema:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        out[key] = _convert(name, key, raw, schema[key])
    return out


def _keys_ci(schema: dict) -> dict:
    # configparser lower-cases option names
    return {k.lower(): v for k, v in schema.items()}


_CANON = {k.lower(): k for k in list(_PGFDA_KEYS) + list(_NL_KEYS) + list(_CERTIFY_KEYS)}


def _canon(d: dict | None) -> dict | None:
    return None if d is None else {_CANON.get(k, k): v for k, v in d.items()}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"problem", "solver", "recipe", "run", "certify", "output"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")

    problem = _section(cp, "problem", _PROBLEM_KEYS, required=True)
    kind = problem.get("kind")
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"[problem] kind must be one of {PROBLEM_KINDS}, got {kind!r}")
    if kind == "poisoning" and "path" not in problem:
        raise ConfigError("[problem] kind = poisoning needs a dataset path")

    if not cp.has_section("solver"):
        raise ConfigError("missing [solver] section")
    algorithm = cp.get("solver", "algorithm", fallback=None)
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"[solver] algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    param_schema = _NL_KEYS if algorithm.startswith("nl-") else _PGFDA_KEYS
    solver = _section(cp, "solver", {"algorithm": str, "eps": float, **_keys_ci(param_schema)})
    solver.pop("algorithm")
    eps = solver.pop("eps", None)
    params = _canon(solver)
    recipe = _section(cp, "recipe", _RECIPE_KEYS)
    if recipe is not None and params:
        raise ConfigError("[recipe] and explicit solver parameters are mutually exclusive")
    if recipe is None:
        required = set(param_schema) - {"eta_y_tilde", "delta_tilde"}
        missing = sorted(required - set(params))
        if missing:
            raise ConfigError(f"[solver] missing parameter(s): {', '.join(missing)}")
    else:
        for k in ("delta", "eps"):
            if k not in recipe:
                raise ConfigError(f"[recipe] needs {k}")
        if eps is None:
            eps = recipe["eps"]
    if algorithm.endswith("-concave") and eps is None:
        raise ConfigError("concave algorithms need [solver] eps (target accuracy)")

    run = _section(cp, "run", _RUN_KEYS) or {}
    run.setdefault("seed", 0)
    run.setdefault("trace_every", 1)
    run.setdefault("phi_method", "auto")
    run.setdefault("phi_budget", 200)
    run.setdefault("phi_samples", 1000)
    run.setdefault("record_wall_ms", True)
    if run["trace_every"] < 1:
        raise ConfigError("[run] trace_every must be >= 1")
    if run["phi_method"] not in ("auto", "exact", "inner", "none"):
        raise ConfigError("[run] phi_method must be auto, exact, inner or none")
    certify = _canon(_section(cp, "certify", _keys_ci(_CERTIFY_KEYS)))
    if certify is not None:
        certify.setdefault("N", 10_000)
        if certify["N"] < 1:
            raise ConfigError("[certify] N must be >= 1")
    output = _section(cp, "output", _OUTPUT_KEYS) or {}
    output.setdefault("format", "csv")
    if output["format"] not in FORMATS:
        raise ConfigError(f"[output] format must be one of {FORMATS}")
    return ExperimentConfig(problem, algorithm, params, recipe, eps, run, certify, output)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize ``cfg`` back to the INI format (``parse_config`` inverts this)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["problem"] = {k: _fmt(v) for k, v in cfg.problem.items()}
    solver = {"algorithm": cfg.algorithm}
    if cfg.eps is not None:
        solver["eps"] = _fmt(cfg.eps)
    solver.update({k: _fmt(v) for k, v in cfg.params.items()})
    cp["solver"] = solver
    if cfg.recipe is not None:
        cp["recipe"] = {k: _fmt(v) for k, v in cfg.recipe.items()}
    cp["run"] = {k: _fmt(v) for k, v in cfg.run.items()}
    if cfg.certify is not None:
        cp["certify"] = {k: _fmt(v) for k, v in cfg.certify.items()}
    cp["output"] = {k: _fmt(v) for k, v in cfg.output.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
