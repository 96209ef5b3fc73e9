"""Command-line entry point: ``isoquant <command> [flags]``.

Settings resolve in three layers: built-in defaults, then the JSON file
given by ``--config``, then explicit flags. Reports are JSON with sorted
keys and no timestamps, so a repeated run with the same settings is
byte-identical.

Exit codes: 0 success, 1 malformed configuration, 2 numerical failure
(solver breakdown or divergent integral; a diagnostic report is still
written), 3 an asserted inequality or invariant failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import convexfn as cf
from . import geometry as geo
from . import spectral as sp
from . import transport as tr
from . import verify as vf
from .quadrature import DivergentIntegralError, QuadratureSpec

COMMANDS = ("perimeter", "thm1", "thm2", "example2d", "isotropic", "spectral", "transport", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Constants:
    c_thm2: float = 1.0
    c_prop2: float = 1.0
    C_fmp: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    command: str
    e: object = None
    k: object = None
    l: object = None
    v: object = None
    f: object = "extremal"
    n: int | None = None
    alpha: float = 4.0
    resolution: int = 32
    solver: str = "exact"
    epsilon: float | None = None
    budget: int | None = None
    method: str = "auto"
    cost: dict = field(default_factory=lambda: {"type": "euclidean_power", "p": 1.0})
    quad: dict = field(default_factory=dict)
    constants: Constants = field(default_factory=Constants)
    use_paper: bool = False
    random_pairs: int = 0
    seed: int = 0
    output: str | None = None
    format: str = "json"
    sweep: dict | None = None
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.solver not in ("exact", "entropic"):
            raise ConfigError("solver must be exact or entropic")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if self.resolution < 1:
            raise ConfigError("resolution must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.n is not None and self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.workers < 1 or self.random_pairs < 0 or self.seed < 0:
            raise ConfigError("workers, random_pairs and seed must be nonnegative")
        try:
            QuadratureSpec.from_dict(self.quad)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad quad settings: {exc}") from None
        for name in ("c_thm2", "c_prop2", "C_fmp"):
            if not getattr(self.constants, name) > 0:
                raise ConfigError(f"constant {name} must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name for f in fields(RunConfig)}


def load_config(data: dict) -> RunConfig:
    """Build a validated RunConfig from a plain dict; unknown keys are rejected."""
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "command" not in data:
        raise ConfigError("config needs a command")
    data = dict(data)
    consts = data.pop("constants", None) or {}
    bad = set(consts) - {"c_thm2", "c_prop2", "C_fmp"}
    if bad:
        raise ConfigError(f"unknown constants: {sorted(bad)}")
    try:
        cfg = RunConfig(constants=Constants(**{k: float(v) for k, v in consts.items()}), **data)
        return cfg.validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="isoquant", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration; flags override its keys")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--seed", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--solver", choices=("exact", "entropic"))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--budget", type=int, help="exact-solver pair budget")
    p.add_argument("--e", help="body E (JSON file or inline JSON)")
    p.add_argument("--k", help="body K (JSON file or inline JSON)")
    p.add_argument("--l", help="second isotropic body L")
    p.add_argument("--v", help="convex potential V (JSON file or inline JSON)")
    p.add_argument("--f", help="extremal | gaussian | bump | JSON file")
    p.add_argument("--n", type=int, help="dimension")
    p.add_argument("--method", help="Cheeger/Poincare route: auto | box | grid")
    p.add_argument("--use-paper", action="store_const", const=True, dest="use_paper",
                   help="use the pi/a interval constant instead of the eigensolver value")
    p.add_argument("--random-pairs", type=int, dest="random_pairs",
                   help="perimeter: check this many random polytope pairs")
    p.add_argument("--workers", type=int)
    return p


def resolve_config(argv: list[str] | None = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data["command"] = args.command
    for key, val in vars(args).items():
        if key not in ("command", "config") and val is not None:
            data[key] = val
    return load_config(data)


# ---------------------------------------------------------------------------
# input loading


def _load_json(spec):
    if isinstance(spec, dict):
        return spec
    text = str(spec)
    if text.lstrip().startswith("{"):
        return json.loads(text)
    try:
        return json.loads(Path(text).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {text}: {exc}") from None


def _body(spec, name: str) -> geo.ConvexBody:
    if spec is None:
        raise ConfigError(f"body {name} is required for this command")
    try:
        return geo.body_from_dict(_load_json(spec))
    except (geo.GeometryError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid body {name}: {exc}") from None


def _potential(spec, n: int | None) -> cf.ConvexFunction:
    if spec is None:
        raise ConfigError("potential V is required for thm1")
    data = dict(_load_json(spec))
    if n is not None and data.get("type") in ("quadratic", "power_norm"):
        data.setdefault("dim", n)
    try:
        return cf.potential_from_dict(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid potential: {exc}") from None


def _field(spec, V: cf.ConvexFunction, n: int) -> cf.ScalarField:
    if spec == "extremal":
        return cf.extremal_profile(V, n)
    if spec == "gaussian":
        return cf.gaussian_bump(np.zeros(n), np.eye(n))
    if spec == "bump":
        return cf.compact_bump(np.zeros(n), np.eye(n))
    data = _load_json(spec)
    kind = data.get("type")
    try:
        if kind == "gaussian":
            return cf.gaussian_bump(data["center"], data["precision"], data.get("amplitude", 1.0))
        if kind == "bump":
            return cf.compact_bump(data["center"], data["shape"], data.get("exponent", 4.0),
                                   data.get("amplitude", 1.0))
        if kind == "extremal":
            return cf.extremal_profile(V, n, data.get("a"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid field f: {exc}") from None
    raise ConfigError(f"unknown field type {kind!r}")


def _random_polytope(rng: np.random.Generator, n: int) -> geo.Polytope:
    m = rng.integers(n + 2, 4 * n + 4)
    return geo.Polytope(rng.normal(size=(m, n)) * rng.uniform(0.5, 2.0, size=n))


# ---------------------------------------------------------------------------
# commands; each returns (report dict, list of failed assertions)


def cmd_perimeter(cfg: RunConfig):
    failures = []
    if cfg.random_pairs:
        rng = np.random.default_rng(cfg.seed)
        n = cfg.n or 2
        worst = math.inf
        for _ in range(cfg.random_pairs):
            R = vf.deficit_R(_random_polytope(rng, n), _random_polytope(rng, n)).deficit
            worst = min(worst, R)
        if worst < -1e-9:
            failures.append(f"deficit {worst:.3e} below -1e-9")
        return {"pairs": cfg.random_pairs, "n": n, "min_deficit": worst}, failures
    E, K = _body(cfg.e, "E"), _body(cfg.k, "K")
    rep = vf.deficit_R(E, K)
    mink = geo.minkowski_content(E, K)
    mismatch = abs(mink - rep.lhs) / rep.lhs
    if rep.flags["violated"]:
        failures.append(f"deficit {rep.deficit:.3e} below tolerance")
    if mismatch > 0.02:
        failures.append(f"Minkowski content disagrees with the facet sum by {mismatch:.2%}")
    out = rep.to_dict()
    out["comparison"] = {"minkowski_content": mink, "relative_mismatch": mismatch}
    return out, failures


def cmd_thm1(cfg: RunConfig):
    V = _potential(cfg.v, cfg.n)
    n = cfg.n or getattr(V, "dim", 2)
    f = _field(cfg.f, V, n)
    quad = QuadratureSpec.from_dict(cfg.quad) if cfg.quad else QuadratureSpec()
    rep = vf.thm1_report(V, f, n, quad)
    out = rep.to_dict()
    failures = []
    if rep.flags["both_infinite"] and rep.flags["equality_case"]:
        raise DivergentIntegralError(
            "int V d mu_V diverges: both sides are +inf and the equality check has no finite value"
        )
    if not rep.flags["holds"]:
        failures.append(f"deficit {rep.deficit:.3e} below -{rep.tolerances['deficit']}")
    if rep.flags["equality_case"] and rep.comparison["relative_deficit"] > 0.01:
        failures.append(f"equality case off by {rep.comparison['relative_deficit']:.2%}")
    return out, failures


def cmd_thm2(cfg: RunConfig):
    E, K = _body(cfg.e, "E"), _body(cfg.k, "K")
    rep = vf.thm2_report(E, K, cfg.resolution, cfg.solver, cfg.epsilon, cfg.constants.c_thm2,
                         use_paper=cfg.use_paper, budget=cfg.budget)
    failures = [k for k, ok in rep.flags.items() if not ok]
    return rep.to_dict(), failures


def cmd_example2d(cfg: RunConfig):
    rep = vf.example_2d(cfg.alpha, cfg.resolution, cfg.solver, cfg.epsilon, cfg.constants.C_fmp,
                        cfg.use_paper, budget=cfg.budget)
    failures = []
    if not rep["W1_bound_holds"]:
        failures.append("W1 below the mass-separation bound")
    if abs(rep["R"] - rep["R_oracle"]) > 1e-9:
        failures.append("R disagrees with the facet oracle")
    return rep, failures


def cmd_isotropic(cfg: RunConfig):
    n = cfg.n or 2
    K = _body(cfg.k, "K") if cfg.k is not None else geo.Box(np.full(n, 0.5))
    L = _body(cfg.l, "L") if cfg.l is not None else geo.normalize(geo.Ball(1.0, dimension=n))
    rep = vf.isotropic_w1_bounds(K, L, cfg.resolution, cfg.constants.c_prop2,
                                 solver=cfg.solver, epsilon=cfg.epsilon, budget=cfg.budget)
    failures = [k for k in ("lower_holds", "dual_holds") if not rep[k]]
    return rep, failures


def cmd_spectral(cfg: RunConfig):
    E = _body(cfg.e, "E")
    out = {"cheeger": sp.cheeger_estimate(E, cfg.method, resolution=cfg.resolution,
                                          use_paper=cfg.use_paper).to_dict()}
    if cfg.resolution >= 8:
        out["grid"] = sp.poincare_grid(E, cfg.resolution).to_dict()
    if isinstance(E, geo.Box):
        out["tensorized"] = sp.poincare_box(E.half_sides, cfg.use_paper).to_dict()
    return vf._jsonable(out), []


def cmd_transport(cfg: RunConfig):
    E, K = _body(cfg.e, "E"), _body(cfg.k, "K")
    try:
        cost = tr.cost_from_dict(cfg.cost)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid cost: {exc}") from None
    mu = tr.discretize_body(E, cfg.resolution)
    nu = tr.discretize_body(K, cfg.resolution)
    plan = vf._solve(mu, nu, cost, cfg.solver, cfg.epsilon, cfg.budget)
    tol = 1e-10 if cfg.solver == "exact" else 1e-9
    failures = [] if plan.marginal_defect <= tol else [f"marginal defect {plan.marginal_defect:.3e}"]
    rep = vf._jsonable({**plan.header(), "support_pairs": int(plan.mass.size)})
    return rep, failures, plan


def _expand_grid(grid: dict) -> list[dict]:
    keys = sorted(grid)
    for k in keys:
        if not isinstance(grid[k], list) or not grid[k]:
            raise ConfigError(f"sweep grid entry {k!r} must be a nonempty list")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _sweep_one(payload: dict) -> dict:
    cfg = load_config(payload)
    try:
        report, failures = _dispatch(cfg)[:2]
        status = EXIT_ASSERT if failures else EXIT_OK
    except (tr.TransportError, sp.SpectralError, DivergentIntegralError, RuntimeError) as exc:
        report, failures, status = {"error": str(exc)}, [], EXIT_NUMERIC
    return {"status": status, "failures": failures, "report": report}


def cmd_sweep(cfg: RunConfig):
    spec = cfg.sweep or {}
    unknown = set(spec) - {"command", "grid"}
    if unknown or "command" not in spec or spec["command"] == "sweep":
        raise ConfigError("sweep needs {'command': <non-sweep command>, 'grid': {...}}")
    base = {k: v for k, v in asdict(cfg).items() if k not in ("sweep", "workers", "output", "format")}
    base["command"] = spec["command"]
    combos = _expand_grid(spec.get("grid", {}))
    payloads = []
    for combo in combos:
        bad = set(combo) - _FIELDS
        if bad:
            raise ConfigError(f"unknown sweep keys {sorted(bad)}")
        payloads.append({**base, **combo})
    for p in payloads:
        load_config(p)  # fail fast on a malformed grid point
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_sweep_one, payloads))
    else:
        results = [_sweep_one(p) for p in payloads]
    rows = [{"params": combo, **res} for combo, res in zip(combos, results)]
    failures = [f"{r['params']}: {r['failures']}" for r in rows if r["failures"]]
    worst = max((r["status"] for r in rows), default=EXIT_OK)
    return {"command": spec["command"], "runs": rows, "worst_status": worst}, failures


def _dispatch(cfg: RunConfig):
    handler = {
        "perimeter": cmd_perimeter, "thm1": cmd_thm1, "thm2": cmd_thm2,
        "example2d": cmd_example2d, "isotropic": cmd_isotropic, "spectral": cmd_spectral,
        "transport": cmd_transport, "sweep": cmd_sweep,
    }[cfg.command]
    return handler(cfg)


# ---------------------------------------------------------------------------
# output


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v, sort_keys=True)
        else:
            out[key] = v
    return out


def render(document: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(vf._jsonable(document), sort_keys=True, indent=2) + "\n"
    rows = document["report"].get("runs") if isinstance(document.get("report"), dict) else None
    if rows is None:
        rows = [document["report"]]
    flat = [_flatten(vf._jsonable(r)) for r in rows]
    header = sorted(set().union(*flat)) if flat else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for row in flat:
        w.writerow(row)
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def run(cfg: RunConfig) -> int:
    """Execute one resolved configuration and write its report; returns the exit status."""
    plan = None
    try:
        result = _dispatch(cfg)
        report, failures = result[0], result[1]
        if len(result) > 2:
            plan = result[2]
        status = EXIT_ASSERT if failures else EXIT_OK
        if cfg.command == "sweep" and not failures:
            status = report["worst_status"]
    except ConfigError:
        raise
    except ValueError as exc:
        # invalid inputs surfacing from the library (non-unit volume, bad spectra, ...)
        raise ConfigError(str(exc)) from None
    except (tr.TransportError, sp.SpectralError, DivergentIntegralError, RuntimeError,
            np.linalg.LinAlgError) as exc:
        report, failures, status = {"error": f"{type(exc).__name__}: {exc}"}, [], EXIT_NUMERIC
    document = {"config": cfg.to_dict(), "status": status, "failures": failures, "report": report}
    if cfg.format == "csv" and plan is not None and cfg.output:
        tr.write_plan_csv(plan, cfg.output)
    else:
        _emit(render(document, cfg.format), cfg.output)
    return status


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = resolve_config(argv)
        return run(cfg)
    except ConfigError as exc:
        sys.stderr.write(f"isoquant: configuration error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
