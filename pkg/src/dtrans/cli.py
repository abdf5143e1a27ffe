"""Command-line experiment runner.

Every subcommand resolves a flat configuration (defaults, then an optional
``key=value`` file, then flags), validates it, runs, and writes
``<out>/<kind>.json`` plus CSV mirrors.  Exit status: 0 on success, 2 when
the configuration is invalid, 3 on a numerical failure.
"""

import argparse
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .bounds import builtin_gap_models, gap_cost_experiment
from .dynamics import sample_conditional_bridge, bridge_concentration_experiment, time_grid
from .geometry import entropy_convexity_experiment, uniform_model
from .interpolation import InterpolationSchedule, cost_curve, curve_verdicts
from .ot_solver import DiscreteMeasure, certify_c_monotone, solve_kantorovich
from .portfolio import estimate_regularity, parse_generator, transport_map
from .rng import stream
from .schrodinger import MARGINAL_MAX_N, mixture_convergence_experiment
from .serialize import csv_text, dumps
from .simplex import cost, sample_uniform

__all__ = ["ExperimentConfig", "KINDS", "parse_config_text", "validate", "run", "main"]

KINDS = ("cost", "couple", "schrodinger", "paths", "interpolate", "entropy", "gaps")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

_DEFAULT_N = {
    "couple": [32],
    "schrodinger": [4, 6, 8, 10, 12, 14],
    "paths": [64],
    "interpolate": [64],
    "entropy": [10_000],
    "gaps": [64, 128, 256, 512, 1024, 2048, 4096],
}
_DEFAULT_SEEDS = {"couple": 5, "schrodinger": 20, "paths": 20, "interpolate": 10, "entropy": 1, "gaps": 200}
_DEFAULT_LAMBDA = {"paths": [1e2, 1e3, 1e4]}


@dataclass
class ExperimentConfig:
    """Resolved settings for one run.

    ``N`` is the list of sample sizes: atoms per measure for ``couple``,
    ``schrodinger`` and ``interpolate``, particles for ``paths``, Monte Carlo
    samples for ``entropy`` and dimensions for ``gaps``.  ``seeds`` is the
    replica count (``gaps`` replicas included).
    """

    kind: str = "schrodinger"
    n: int = 2
    generator: str = "power:0.5"
    N: list = None
    lam: object = "auto"
    t_grid: int = 33
    grid: int = 256
    seeds: int = None
    seed: int = 0
    eps: float = 0.02
    out: str = "."
    format: str = "json"
    p: list = None
    q: list = None
    model: str = "linear"
    errors: list = field(default_factory=list, repr=False)

    def resolved(self):
        """Copy with kind-specific defaults filled in."""
        cfg = ExperimentConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        if cfg.N is None:
            cfg.N = list(_DEFAULT_N.get(cfg.kind, [32]))
        if cfg.seeds is None:
            cfg.seeds = _DEFAULT_SEEDS.get(cfg.kind, 1)
        if cfg.kind in _DEFAULT_LAMBDA and cfg.lam == "auto":
            cfg.lam = list(_DEFAULT_LAMBDA[cfg.kind])
        cfg.errors = list(self.errors)
        return cfg

    def echo(self):
        d = asdict(self)
        d.pop("errors")
        d["lambda"] = d.pop("lam")
        return d


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _lambda(text):
    text = str(text).strip()
    if text == "auto":
        return "auto"
    values = _float_list(text)
    return values[0] if len(values) == 1 else values


_CONVERTERS = {
    "kind": str,
    "n": int,
    "generator": str,
    "N": _int_list,
    "lam": _lambda,
    "t_grid": int,
    "grid": int,
    "seeds": int,
    "seed": int,
    "eps": float,
    "out": str,
    "format": str,
    "p": _float_list,
    "q": _float_list,
    "model": str,
}
_ALIASES = {"lambda": "lam", "t-grid": "t_grid"}


def _apply(cfg, key, raw):
    key = _ALIASES.get(key, key).replace("-", "_")
    if key not in _CONVERTERS:
        cfg.errors.append(f"{key}: unknown setting")
        return
    try:
        setattr(cfg, key, _CONVERTERS[key](raw))
    except (TypeError, ValueError):
        cfg.errors.append(f"{key}: cannot parse {raw!r}")


def parse_config_text(text, cfg=None):
    """Read ``key=value`` lines into ``cfg``; blank lines and ``#`` comments are skipped."""
    cfg = ExperimentConfig() if cfg is None else cfg
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            cfg.errors.append(f"line {number}: expected key=value")
            continue
        _apply(cfg, key.strip(), value.strip())
    return cfg


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


def _generator_errors(cfg):
    try:
        g = parse_generator(cfg.generator)
    except ValueError as exc:
        return None, [f"generator: {exc}"]
    try:
        g.value(np.full(cfg.n, 1.0 / cfg.n))
    except (ValueError, IndexError) as exc:
        return None, [f"generator: incompatible with n = {cfg.n}: {exc}"]
    return g, []


def validate(config, check_alpha=True):
    """Field errors for a configuration; an empty list means it can run.

    With ``lambda = auto`` the regularity constant of the generator is
    estimated and a degenerate generator is rejected.
    """
    cfg = config.resolved()
    errors = list(cfg.errors)
    if cfg.kind not in KINDS:
        errors.append(f"kind: unknown experiment {cfg.kind!r}")
    if not isinstance(cfg.n, int) or cfg.n < 2:
        errors.append("n: must be an integer >= 2")
        return errors
    if not cfg.N or any(v <= 0 for v in cfg.N):
        errors.append("N: sample sizes must be positive")
    if cfg.seeds is None or cfg.seeds < 1:
        errors.append("seeds: must be positive")
    if cfg.seed < 0:
        errors.append("seed: must be nonnegative")
    if not 0.0 <= cfg.eps < 1.0 / cfg.n:
        errors.append(f"eps: must lie in [0, 1/n) = [0, {1.0 / cfg.n:g})")
    if cfg.t_grid < 3:
        errors.append("t_grid: need at least 3 points")
    if cfg.grid < 1:
        errors.append("grid: must be positive")
    if cfg.format not in ("json", "csv", "both"):
        errors.append("format: one of json, csv, both")
    lams = cfg.lam if isinstance(cfg.lam, list) else [cfg.lam]
    if any(v != "auto" and not v > 0 for v in lams):
        errors.append("lambda: must be positive or 'auto'")
    if cfg.kind == "cost":
        for name in ("p", "q"):
            v = getattr(cfg, name)
            if v is None or len(v) != cfg.n:
                errors.append(f"{name}: need {cfg.n} coordinates")
            elif any(x <= 0 for x in v):
                errors.append(f"{name}: coordinates must be positive")
        return errors
    if cfg.kind == "schrodinger" and cfg.N and max(cfg.N) > MARGINAL_MAX_N:
        errors.append(f"N: at most {MARGINAL_MAX_N} atoms for the mixture coupling")
    if cfg.kind == "gaps":
        if cfg.model not in builtin_gap_models():
            errors.append(f"model: one of {', '.join(builtin_gap_models())}")
        if cfg.N and min(cfg.N) < 2:
            errors.append("N: dimensions must be at least 2")
        return errors
    g, gen_errors = _generator_errors(cfg)
    errors.extend(gen_errors)
    if g is not None and check_alpha and cfg.kind == "schrodinger" and cfg.lam == "auto" and not errors:
        rep = estimate_regularity(g, cfg.n, eps=max(cfg.eps, 1e-3), seed=cfg.seed)
        if rep.degenerate:
            errors.append(f"lambda: 'auto' needs alpha > 0 but {cfg.generator} has alpha = {rep.alpha:.3g}")
    return errors


def lambda_schedule(cfg):
    """``(alpha, [(N, lambda_N)])`` for the auto policy."""
    g = parse_generator(cfg.generator)
    rep = estimate_regularity(g, cfg.n, eps=max(cfg.eps, 1e-3), seed=cfg.seed)
    sched = [(N, 4.0 / rep.alpha * N ** (2.0 / cfg.n) if rep.alpha > 0 else float("inf")) for N in cfg.N]
    return rep, sched


# --------------------------------------------------------------------------
# experiments; each returns (payload, {csv name: (rows, columns)})
# --------------------------------------------------------------------------


def _run_cost(cfg):
    value = float(cost(np.asarray(cfg.p), np.asarray(cfg.q)))
    payload = {"p": cfg.p, "q": cfg.q, "cost": value}
    return payload, {"cost": ([payload], ["cost"])}


def _run_couple(cfg):
    g = parse_generator(cfg.generator)
    rows, triples = [], []
    for N in cfg.N:
        for replica in range(cfg.seeds):
            rng = stream(cfg.seed, "couple", N, replica)
            source = sample_uniform(cfg.n, N, rng, cfg.eps)
            shuffle = rng.permutation(N)
            target = transport_map(g, source)[shuffle]
            plan = solve_kantorovich(DiscreteMeasure(source), DiscreteMeasure(target))
            monge = float(np.mean(cost(source, transport_map(g, source))))
            expected = np.argsort(shuffle)
            recovered = bool(np.all(plan.mass[np.arange(N), expected] > 0.5 / N))
            report = certify_c_monotone(plan, cycle_budget=2000, rng=stream(cfg.seed, "couple-cycles", N, replica))
            if replica == 0:
                triples.append({"N": N, "triples": [list(t) for t in plan.triples(1e-15)]})
            rows.append(
                {
                    "N": N,
                    "replica": replica,
                    "value": plan.value,
                    "monge_value": monge,
                    "recovers_monge": recovered,
                    "min_cycle_value": report.min_value,
                    "certified": report.certified,
                }
            )
    cols = ["N", "replica", "value", "monge_value", "recovers_monge", "min_cycle_value", "certified"]
    return {"rows": rows, "couplings": triples}, {"couple": (rows, cols)}


def _run_schrodinger(cfg):
    g = parse_generator(cfg.generator)
    records, summary = mixture_convergence_experiment(g, cfg.n, cfg.N, seeds=cfg.seeds, seed=cfg.seed, eps=cfg.eps, lam=cfg.lam)
    payload = {"alpha": summary["alpha"], "rows": summary["rows"], "records": records}
    return payload, {
        "schrodinger": (summary["rows"], ["N", "lambda", "median_w2_sq", "median_w2_sq_baseline", "median_w2_sq_sinkhorn", "median_w_n"]),
        "schrodinger_records": (records, ["N", "lambda", "replica", "mode", "w2_sq", "w2_sq_baseline", "w2_sq_sinkhorn", "w2_sq_argmax", "w_n", "ties_perturbed"]),
    }


def _run_paths(cfg):
    g = parse_generator(cfg.generator)
    lams = cfg.lam if isinstance(cfg.lam, list) else [cfg.lam]
    records, summary = bridge_concentration_experiment(g, cfg.n, lams, G=cfg.grid, seeds=cfg.seeds, seed=cfg.seed, particles=cfg.N[0])
    # a few sample trajectories at the largest lambda, for plotting
    rng = stream(cfg.seed, "paths-dump")
    p = sample_uniform(cfg.n, min(8, cfg.N[0]), rng, cfg.eps)
    bridge = sample_conditional_bridge(p, transport_map(g, p), max(lams), time_grid(cfg.grid), rng)
    dump_cols = ["particle", "t"] + [f"q_{i + 1}" for i in range(cfg.n)] + [f"pi_{i + 1}" for i in range(cfg.n)]
    dump = []
    for k in range(p.shape[0]):
        for j, t in enumerate(bridge.t):
            row = {"particle": k, "t": t}
            row.update({f"q_{i + 1}": bridge.q[k, j, i] for i in range(cfg.n)})
            row.update({f"pi_{i + 1}": bridge.weights[k, j, i] for i in range(cfg.n)})
            dump.append(row)
    return {"rows": summary, "records": records}, {
        "paths": (summary, ["lambda", "median_S", "mean_path_distance"]),
        "paths_records": (records, ["lambda", "replica", "S", "path_distance"]),
        "paths_dump": (dump, dump_cols),
    }


def _run_interpolate(cfg):
    g = parse_generator(cfg.generator)
    schedule = InterpolationSchedule(g, np.linspace(0.0, 1.0, cfg.t_grid))
    curves, long_rows = [], []
    for replica in range(cfg.seeds):
        P0 = DiscreteMeasure(sample_uniform(cfg.n, cfg.N[0], stream(cfg.seed, "interpolate", replica), cfg.eps))
        t, values = cost_curve(schedule, P0)
        curves.append({"replica": replica, "values": values, "verdicts": curve_verdicts(values)})
        long_rows.extend({"replica": replica, "t": s, "cost": v} for s, v in zip(t, values))
    payload = {"t_grid": schedule.t, "curves": curves}
    return payload, {"interpolate": (long_rows, ["replica", "t", "cost"])}


def _run_entropy(cfg):
    g = parse_generator(cfg.generator)
    res = entropy_convexity_experiment(uniform_model(cfg.n), g, np.linspace(0.0, 1.0, cfg.t_grid), M=cfg.N[0], seed=cfg.seed)
    verdicts = {
        "surrogate_convex_per_sample": res["min_per_sample_second_difference"] >= -1e-10,
        "min_per_sample_second_difference": res["min_per_sample_second_difference"],
        "difference_range": res["difference_range"],
        "standard_error": res["standard_error"],
        "constant_difference": res["difference_range"] <= 5 * res["standard_error"],
    }
    payload = {
        "t_grid": res["t_grid"],
        "curve_a": res["curve_a"],
        "curve_b": res["curve_b"],
        "second_differences": {"a": res["second_differences_a"], "b": res["second_differences_b"]},
        "verdicts": verdicts,
    }
    rows = [{"t": t, "curve_a": a, "curve_b": b} for t, a, b in zip(res["t_grid"], res["curve_a"], res["curve_b"])]
    return payload, {"entropy": (rows, ["t", "curve_a", "curve_b"])}


def _run_gaps(cfg):
    model = builtin_gap_models()[cfg.model]
    res = gap_cost_experiment(model, cfg.N, replicas=cfg.seeds, seed=cfg.seed)
    payload = {"model": res["model"], "quadrature_bound": res["quadrature_bound"], "rows": res["rows"]}
    cols = ["n", "replicas", "mean_cost", "term1", "term2", "quadrature_bound"]
    return payload, {"gaps": (res["rows"], cols)}


_RUNNERS = {
    "cost": _run_cost,
    "couple": _run_couple,
    "schrodinger": _run_schrodinger,
    "paths": _run_paths,
    "interpolate": _run_interpolate,
    "entropy": _run_entropy,
    "gaps": _run_gaps,
}


def build_document(cfg, payload):
    return {"kind": cfg.kind, "version": __version__, "seed": cfg.seed, "config": cfg.echo(), "payload": payload}


def run(config, stdout=None):
    """Validate, execute and write outputs.  Returns ``(status, document)``."""
    stdout = sys.stdout if stdout is None else stdout
    errors = validate(config, check_alpha=False)
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID, None
    cfg = config.resolved()
    try:
        with np.errstate(all="ignore"):
            payload, tables = _RUNNERS[cfg.kind](cfg)
    except (FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL, None
    doc = build_document(cfg, payload)
    try:
        os.makedirs(cfg.out, exist_ok=True)
        if cfg.format in ("json", "both"):
            with open(os.path.join(cfg.out, f"{cfg.kind}.json"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(dumps(doc))
        if cfg.format in ("csv", "both"):
            for name, (rows, cols) in tables.items():
                with open(os.path.join(cfg.out, f"{name}.csv"), "w", encoding="utf-8", newline="") as fh:
                    fh.write(csv_text(rows, cols))
    except OSError as exc:
        print(f"error: out: cannot write results: {exc}", file=sys.stderr)
        return EXIT_INVALID, doc
    if cfg.kind == "cost":
        print(f"{payload['cost']:.7f}", file=stdout)
    else:
        print(os.path.join(cfg.out, f"{cfg.kind}.json" if cfg.format != "csv" else f"{cfg.kind}.csv"), file=stdout)
    return EXIT_OK, doc


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key=value settings file; flags override it")
    common.add_argument("--n", help="simplex dimension")
    common.add_argument("--generator", help="e.g. phi0, power:0.5, diversity:0.5, affine:1,2")
    common.add_argument("--N", help="comma-separated sample sizes")
    common.add_argument("--lambda", dest="lam", help="positive real(s) or 'auto'")
    common.add_argument("--t-grid", dest="t_grid", help="number of time points")
    common.add_argument("--grid", help="path resolution G")
    common.add_argument("--seeds", help="number of replicas")
    common.add_argument("--seed", help="master seed")
    common.add_argument("--eps", help="truncation level")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", help="json, csv or both")
    common.add_argument("--model", help="gap model: uniform, linear, truncexp:1")

    parser = argparse.ArgumentParser(prog="dtrans", description="Dirichlet transport experiments.")
    parser.add_argument("--version", action="version", version=f"dtrans {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    c = sub.add_parser("cost", parents=[common], help="cost between two simplex points")
    c.add_argument("--p", default=argparse.SUPPRESS, help="comma-separated coordinates")
    c.add_argument("--q", default=argparse.SUPPRESS, help="comma-separated coordinates")
    for kind in KINDS[1:]:
        sub.add_parser(kind, parents=[common])
    v = sub.add_parser("validate", parents=[common], help="check a configuration without running it")
    v.add_argument("--kind", default=argparse.SUPPRESS, help="experiment kind to validate against")
    return parser


def config_from_args(ns):
    args = vars(ns)
    command = args.pop("command")
    cfg = ExperimentConfig()
    if "config" in args:
        path = args.pop("config")
        try:
            with open(path, encoding="utf-8") as fh:
                parse_config_text(fh.read(), cfg)
        except OSError as exc:
            cfg.errors.append(f"config: {exc}")
    if command != "validate":
        cfg.kind = command
    for key, raw in args.items():
        _apply(cfg, key, raw)
    return command, cfg


def main(argv=None):
    ns = _parser().parse_args(argv)
    command, cfg = config_from_args(ns)
    if command == "validate":
        errors = validate(cfg)
        resolved = cfg.resolved()
        if not errors and resolved.kind == "schrodinger" and resolved.lam == "auto":
            rep, sched = lambda_schedule(resolved)
            print(f"alpha = {rep.alpha:.6g}")
            for N, lam in sched:
                print(f"N = {N}: lambda = {lam:.6g}")
        for e in errors:
            print(f"error: {e}")
        if not errors:
            print("ok")
        return EXIT_INVALID if errors else EXIT_OK
    status, _ = run(cfg)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
