"""Command-line front end: ``zominimax run | validate | recipe``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numeric failure during a run (the partial trace is flushed first).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .bench_problems import (
    load_libsvm,
    metrics_view,
    phi_value,
    poisoning_phi_exact,
    poisoning_problem,
    quadratic_saddle,
    bilinear_saddle,
    random_split,
    synthetic_dataset,
)
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .geometry import Projector, stream
from .minimax_solvers import (
    IterRecord,
    NlPgfdaConfig,
    PgfdaConfig,
    SolverDivergence,
    ggsp_complexity,
    gssp_complexity,
    nl_pgfda,
    pgfda,
    recipe_ncsc_ggsp,
    recipe_ncsc_gssp,
)
from .problem import ProblemSpec, SaddlePoint, wrap_phi_regularizer, wrap_strong_concavity
from .stationarity import ResidualReport, estimate_ggsp_residual, estimate_gssp_residual

TRACE_COLUMNS = (
    "iter",
    "szo_calls",
    "phi_estimate",
    "phi_gap_bound",
    "gx_residual",
    "gy_residual",
    "refresh",
    "wall_ms",
)

EXIT_OK, EXIT_VALIDATE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# problem construction


@dataclass
class BuiltProblem:
    problem: ProblemSpec
    # exact primal value of the unregularized problem, when a closed form exists
    exact_phi: object = None


def build_problem(pcfg: dict) -> BuiltProblem:
    kind = pcfg["kind"]
    if kind in ("poisoning", "synthetic-poisoning"):
        if kind == "poisoning":
            data = load_libsvm(pcfg["path"], pcfg.get("n_features"))
        else:
            data = synthetic_dataset(pcfg.get("n", 500), pcfg.get("d", 20), pcfg.get("data_seed", 0))
        split = random_split(data.n, pcfg.get("corrupt_frac", 0.15), pcfg.get("split_seed", 0))
        prob = poisoning_problem(
            data,
            split,
            r=pcfg.get("r", 2.0),
            lam=pcfg.get("lam"),
            beta=pcfg.get("beta", 2.0),
            x_bound=pcfg.get("x_bound", 1.0),
        )
        return BuiltProblem(prob, lambda x: poisoning_phi_exact(prob, x))
    if kind == "quadratic-saddle":
        toy = quadratic_saddle(
            pcfg.get("d_x", 5),
            pcfg.get("d_y", 5),
            pcfg.get("mu", 1.0),
            sigma=pcfg.get("sigma", 0.0),
            seed=pcfg.get("toy_seed", 0),
        )
        return BuiltProblem(toy.problem, toy.phi)
    toy = bilinear_saddle(pcfg.get("mu", 1.0), pcfg.get("sigma", 0.0))
    return BuiltProblem(toy.problem, toy.phi)


def _vector(text: str | None, dim: int, name: str) -> np.ndarray | None:
    if text is None:
        return None
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"[run] {name}: expected numbers, got {text!r}") from None
    if len(vals) == 1:
        return np.full(dim, vals[0])
    if len(vals) != dim:
        raise ConfigError(f"[run] {name}: expected 1 or {dim} values, got {len(vals)}")
    return np.array(vals)


def solver_problem(cfg: ExperimentConfig, root: ProblemSpec, y0) -> ProblemSpec:
    """The (possibly regularized) problem the solver actually runs on."""
    if not cfg.concave:
        if root.mu <= 0:
            raise ConfigError(f"{cfg.algorithm} needs a strongly concave problem; use {cfg.algorithm}-concave")
        return root
    if root.mu > 0:
        raise ConfigError(f"{cfg.algorithm} is for merely concave problems; this one has mu > 0")
    if cfg.nested:
        delta = cfg.recipe["delta"] if cfg.recipe is not None else cfg.params["delta"]
        return wrap_phi_regularizer(root, delta, cfg.eps, y0)
    return wrap_strong_concavity(root, cfg.eps, y0)


def solver_config(cfg: ExperimentConfig, problem: ProblemSpec):
    """Explicit parameters, or recipe values computed for ``problem``."""
    seed = cfg.run["seed"]
    try:
        if cfg.recipe is not None:
            r = cfg.recipe
            common = dict(const=r.get("const", 1.0), delta_hat=r.get("delta_hat", 1.0), seed=seed)
            if cfg.nested:
                return recipe_ncsc_ggsp(problem, r["delta"], r["eps"], delta_tilde=r.get("delta_tilde"), **common)
            return recipe_ncsc_gssp(problem, r["delta"], r["eps"], **common)
        p = dict(cfg.params)
        if cfg.nested:
            p.setdefault("delta_tilde", p["delta"])
            return NlPgfdaConfig(seed=seed, **p)
        p.setdefault("eta_y_tilde", p["eta_y"])
        return PgfdaConfig(seed=seed, **p)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None


# ---------------------------------------------------------------------------
# trace output


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


class TraceWriter:
    """Streams one row per traced iteration; rows are flushed as they are written."""

    def __init__(self, path, fmt: str = "csv", record_wall_ms: bool = True):
        self.fmt = "jsonl" if fmt == "json-lines" else fmt
        self.record_wall_ms = record_wall_ms
        self.rows = 0
        self._fh = None if path is None else open(path, "w", encoding="utf-8", newline="")
        if self._fh is not None and self.fmt == "csv":
            self._csv = csv.writer(self._fh, lineterminator="\n")
            self._csv.writerow(TRACE_COLUMNS)
            self._fh.flush()

    def row(self, rec: IterRecord) -> dict:
        return {
            "iter": rec.t,
            "szo_calls": rec.szo_calls,
            "phi_estimate": rec.phi_estimate,
            "phi_gap_bound": rec.phi_gap_bound,
            "gx_residual": rec.gx_residual,
            "gy_residual": rec.gy_residual,
            "refresh": bool(rec.refresh),
            "wall_ms": round(rec.wall_ms, 3) if self.record_wall_ms else 0.0,
        }

    def write(self, rec: IterRecord):
        self.rows += 1
        if self._fh is None:
            return
        row = self.row(rec)
        if self.fmt == "csv":
            self._csv.writerow([_cell(row[c]) for c in TRACE_COLUMNS])
        else:
            self._fh.write(json.dumps(row) + "\n")
        self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_trace(path) -> list[dict]:
    """Parse a CSV or JSON-lines trace back into typed rows."""
    text = Path(path).read_text(encoding="utf-8")
    if text.startswith("iter,"):
        out = []
        for r in csv.DictReader(text.splitlines()):
            row = {}
            for c in TRACE_COLUMNS:
                v = r[c]
                if c in ("iter", "szo_calls"):
                    row[c] = int(v)
                elif c == "refresh":
                    row[c] = v == "1"
                else:
                    row[c] = float(v) if v != "" else None
            out.append(row)
        return out
    return [json.loads(line) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# run


@dataclass
class RunResult:
    exit_code: int
    trace: object = None
    final_phi: tuple | None = None
    certificate: ResidualReport | None = None
    metrics_szo: int = 0
    message: str = ""


def _phi_fn(cfg: ExperimentConfig, built: BuiltProblem, solved: ProblemSpec):
    method = cfg.run["phi_method"]
    if method == "none":
        return None, None
    if method in ("auto", "exact") and built.exact_phi is not None:
        return (lambda x, t: (float(built.exact_phi(x)), 0.0)), None
    if method == "exact":
        raise ConfigError("[run] phi_method = exact but this problem has no closed-form primal value")
    view = metrics_view(solved)
    seed = cfg.run["seed"]

    def phi(x, t):
        return phi_value(view, x, cfg.run["phi_budget"], stream(seed, "phi", t), n_eval=cfg.run["phi_samples"])

    return phi, view


def _certify(cfg, root, solved, solver_cfg, point) -> tuple[ResidualReport, int]:
    c = cfg.certify
    seed = cfg.run["seed"]
    if cfg.nested:
        view = metrics_view(solved)
        rep = estimate_ggsp_residual(
            view,
            point.x,
            solver_cfg.delta,
            c.get("eta", solver_cfg.eta),
            c.get("inner_budget", solver_cfg.K),
            c["N"],
            stream(seed, "certify"),
            inner_nu=solver_cfg.delta_tilde,
        )
        if cfg.concave:
            rep = replace(rep, transfer_slack=cfg.eps / 2)
    else:
        # strongly concave wrappers are certified on the original problem
        view = metrics_view(root)
        rep = estimate_gssp_residual(
            view,
            point,
            solver_cfg.delta,
            c.get("eta_x", solver_cfg.eta_x),
            c.get("eta_y", solver_cfg.eta_y_tilde),
            c["N"],
            stream(seed, "certify"),
        )
    return rep, view.szo_calls


def execute(cfg: ExperimentConfig, trace_path=None, out=None) -> RunResult:
    """Run one experiment; ``trace_path`` overrides ``[output] trace``."""
    out = sys.stdout if out is None else out
    built = build_problem(cfg.problem)
    root = built.problem
    x0 = _vector(cfg.run.get("x0"), root.d_x, "x0")
    y0 = _vector(cfg.run.get("y0"), root.d_y, "y0")
    y0 = root.proj_y(np.zeros(root.d_y) if y0 is None else y0)
    try:
        solved = solver_problem(cfg, root, y0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scfg = solver_config(cfg, solved)
    phi, phi_view = _phi_fn(cfg, built, solved)
    every = cfg.run["trace_every"]
    path = trace_path if trace_path is not None else cfg.output.get("trace")
    writer = TraceWriter(path, cfg.output["format"], cfg.run["record_wall_ms"])

    def callback(rec: IterRecord, x, y):
        if rec.t % every:
            return
        if phi is not None:
            rec.phi_estimate, rec.phi_gap_bound = phi(x, rec.t)
        writer.write(rec)

    runner = nl_pgfda if cfg.nested else pgfda
    result = RunResult(EXIT_OK)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            warnings.simplefilter("ignore", RuntimeWarning)
            sol, trace = runner(solved, scfg, x0=x0, y_init=y0, max_szo=cfg.run.get("max_szo"), callback=callback)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        point = sol if isinstance(sol, SaddlePoint) else SaddlePoint(sol, y0)
        result.trace = trace
        if phi is not None:
            result.final_phi = phi(point.x, "final")
        if cfg.certify is not None:
            result.certificate, result.metrics_szo = _certify(cfg, root, solved, scfg, point)
    except (SolverDivergence, FloatingPointError) as exc:
        result.exit_code = EXIT_NUMERIC
        result.trace = getattr(exc, "trace", None)
        result.message = f"numeric failure: {exc}"
    finally:
        writer.close()
    if phi_view is not None:
        result.metrics_szo += phi_view.szo_calls
    _summary(cfg, result, writer.rows, out)
    return result


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.6g}"


def _summary(cfg: ExperimentConfig, res: RunResult, rows: int, out):
    tr = res.trace
    print(f"algorithm      : {cfg.algorithm} on {cfg.problem['kind']}", file=out)
    if res.exit_code != EXIT_OK:
        print(f"status         : FAILED ({res.message})", file=out)
    if tr is not None:
        last = tr.records[-1] if tr.records else None
        print(f"iterations     : {len(tr.records)} (trace rows {rows})", file=out)
        print(f"total SZO      : {tr.total_szo if res.exit_code == EXIT_OK else (last.szo_calls if last else 0)}", file=out)
        print(f"metrics SZO    : {res.metrics_szo}", file=out)
        if res.final_phi is not None:
            print(f"final Phi      : {_fmt(res.final_phi[0])} (gap bound {_fmt(res.final_phi[1])})", file=out)
        if last is not None:
            print(f"last residuals : gx={_fmt(last.gx_residual)} gy={_fmt(last.gy_residual)}", file=out)
    c = res.certificate
    if c is not None:
        line = f"certificate    : r_x={c.r_x:.4g} +/- {c.stderr_x:.2g}"
        if c.r_y is not None:
            line += f", r_y={c.r_y:.4g} +/- {c.stderr_y:.2g}"
        if c.transfer_slack:
            line += f" (transfer slack {c.transfer_slack:g})"
        print(line + f", N={c.batch}", file=out)
    print("# effective config", file=out)
    print(dump_config(cfg), file=out)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        res = execute(cfg, trace_path=args.trace)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if res.exit_code == EXIT_NUMERIC:
        print(res.message, file=sys.stderr)
    return res.exit_code


# ---------------------------------------------------------------------------
# validate / recipe


def cmd_validate(args) -> int:
    from .validation import format_table, run_checks

    results = run_checks(quick=args.quick)
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failing checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VALIDATE
    return EXIT_OK


def constants_problem(L: float, mu: float, d_x: int, d_y: int) -> ProblemSpec:
    """A placeholder problem carrying only the constants the recipes read."""
    if not (L > 0 and mu > 0 and d_x > 0 and d_y > 0):
        raise ValueError("L, mu, d_x and d_y must be positive")

    def no_oracle(X, Y, xi):
        raise RuntimeError("constants-only problem has no oracle")

    return ProblemSpec(
        oracle=no_oracle,
        draw_noise=lambda rng, n: np.zeros(n, dtype=np.int64),
        proj_x=Projector.unconstrained(d_x),
        proj_y=Projector.unconstrained(d_y),
        L=L,
        mu=mu,
        D_y=1.0,
    )


def recipe_text(algorithm: str, delta, eps, L, mu, d_x, d_y, const=1.0, delta_hat=1.0) -> str:
    prob = constants_problem(L, mu, d_x, d_y)
    lines = ["[solver]", f"algorithm = {algorithm}"]
    if algorithm == "nl-pgfda":
        c = recipe_ncsc_ggsp(prob, delta, eps, const, delta_hat)
        keys = ("eta", "T", "b", "K", "delta", "delta_tilde")
        bound = ggsp_complexity(prob, delta, eps, delta_hat)
        form = "O(d_x^3.5 d_y L^7 (Delta + delta L) / (mu^2 delta^3 eps^6))"
    else:
        c = recipe_ncsc_gssp(prob, delta, eps, const, delta_hat)
        keys = ("eta_x", "eta_y", "eta_y_tilde", "T", "K_in", "K_out", "delta", "p", "b", "b_tilde")
        bound = gssp_complexity(prob, delta, eps, delta_hat)
        form = "O(d^3 L^5 (Delta + delta L) / (mu^3 delta^4 eps^3))"
    lines += [f"{k} = {_cell(getattr(c, k))}" for k in keys]
    lines.append(f"# SZO complexity {form} ~ {bound:.4g}")
    return "\n".join(lines)


def cmd_recipe(args) -> int:
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            text = recipe_text(args.algorithm, args.delta, args.eps, args.L, args.mu, args.d_x, args.d_y, args.const, args.delta_hat)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zominimax", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("config")
    run.add_argument("--trace", help="trace output path (overrides [output] trace)")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="run the invariant checks and print a pass/fail table")
    val.add_argument("--quick", action="store_true", help="smaller sample sizes")
    val.set_defaults(func=cmd_validate)
    rec = sub.add_parser("recipe", help="print solver parameters for a target accuracy")
    rec.add_argument("--algorithm", choices=("pgfda", "nl-pgfda"), default="pgfda")
    rec.add_argument("--delta", type=float, required=True)
    rec.add_argument("--eps", type=float, required=True)
    rec.add_argument("--L", type=float, required=True)
    rec.add_argument("--mu", type=float, required=True)
    rec.add_argument("--d-x", dest="d_x", type=int, required=True)
    rec.add_argument("--d-y", dest="d_y", type=int, required=True)
    rec.add_argument("--const", type=float, default=1.0)
    rec.add_argument("--delta-hat", dest="delta_hat", type=float, default=1.0)
    rec.set_defaults(func=cmd_recipe)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    code = args.func(args)
    if args.command != "recipe":
        print(f"elapsed {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
