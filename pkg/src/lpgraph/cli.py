"""Command-line entry point: ``lpgraph <subcommand> [flags]``.

Exit codes: 0 when every report passes or is fitted, 1 when any report
fails, 2 on usage, specification or resource errors.  Progress goes to
standard error; data goes to files under ``--out`` (``inspect`` also
prints its summary).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import functionals as fn
from . import verify
from .errors import LpGraphError, ResourceLimitError
from .fitting import fit_envelope
from .generators import generate, save
from .graph import check_LB, check_LDV, doubling_constant
from .kernel import due_check, dump_kernel_csv, kernel_table, tdue_fit, ue_fit
from .spectral import decompose

log = logging.getLogger("lpgraph")

DEFAULTS = {
    "graph": [],
    "check": [],
    "beta": None,
    "p": None,
    "q": None,
    "j": None,
    "lmax": None,
    "n": None,
    "trials": None,
    "tol": None,
    "seed": None,
    "jobs": 1,
    "out": "lpgraph-out",
    "format": ["json"],
    "functional": "g",
    "source": [],
    "kind": ["due", "ue", "tdue"],
    "growth": verify.DEFAULT_GROWTH,
}
# keys that never enter the effective config file
_RUNTIME_ONLY = {"config", "command", "inputs", "verbose"}


class UsageError(Exception):
    pass


def _grid(text, cast=float) -> list:
    if isinstance(text, (list, tuple)):
        vals = [cast(v) for v in text]
    else:
        vals = [cast(v) for v in str(text).split(",") if v.strip()]
    if not vals:
        raise UsageError(f"empty grid {text!r}")
    return vals


def _formats(values) -> list[str]:
    out = []
    for v in values:
        for f in str(v).split(","):
            f = f.strip()
            if f and f not in out:
                if f not in ("json", "csv", "plot"):
                    raise UsageError(f"unknown format {f!r}; choose json, csv or plot")
                out.append(f)
    return out or ["json"]


def _common(p: argparse.ArgumentParser, *, graph=True, seed=False, out=True):
    S = argparse.SUPPRESS
    if graph:
        p.add_argument("--graph", action="append", default=S, metavar="SPEC",
                       help="graph spec, e.g. torus:2x16:loop=1 (repeatable)")
    if seed:
        p.add_argument("--seed", type=int, default=S, help="master seed (required)")
    if out:
        p.add_argument("--out", default=S, metavar="DIR", help="output directory")
        p.add_argument("--format", action="append", default=S,
                       help="json, csv or plot; comma list or repeatable")
    p.add_argument("--config", metavar="JSON", help="config file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="lpgraph",
                                     description="Markov-kernel calculus and square "
                                                 "functionals on finite weighted graphs.")
    parser.add_argument("--version", action="version", version=f"lpgraph {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", help="build graphs and write edge lists")
    _common(p)

    p = sub.add_parser("inspect", help="print (LB), (LDV), doubling and spectral summaries")
    _common(p)

    p = sub.add_parser("kernel", help="write p_l(x, y) tables as CSV")
    _common(p)
    p.add_argument("--lmax", type=int, default=S)
    p.add_argument("--source", action="append", default=S, metavar="LABEL",
                   help="source vertex label (repeatable; default: first vertex)")

    p = sub.add_parser("fit", help="fit DUE/UE/TD-UE kernel bounds")
    _common(p)
    p.add_argument("--lmax", type=int, default=S)
    p.add_argument("--kind", action="append", default=S, help="due, ue or tdue")

    p = sub.add_parser("functional", help="evaluate a square functional on random inputs")
    _common(p, seed=True)
    p.add_argument("--functional", default=S, help="g, g_tilde, g2 or maximal")
    p.add_argument("--beta", default=S, help="comma grid")
    p.add_argument("--p", default=S, help="comma grid of exponents")
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--tol", type=float, default=S)

    p = sub.add_parser("suite", help="run verification suites")
    _common(p, seed=True)
    p.add_argument("--check", action="append", default=S,
                   help="suite name (repeatable): " + ", ".join(sorted(verify.SUITES)))
    p.add_argument("--functional", default=S, help="functional for norm-equiv / weak11")
    p.add_argument("--beta", default=S, help="comma grid")
    p.add_argument("--p", default=S, help="comma grid")
    p.add_argument("--q", default=S, help="comma grid")
    p.add_argument("--j", default=S, help="comma grid of difference orders (gaffney)")
    p.add_argument("--lmax", type=int, default=S)
    p.add_argument("--n", type=int, default=S, help="time horizon (gradient-decay)")
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--tol", type=float, default=S)
    p.add_argument("--growth", type=float, default=S, help="cross-size growth factor")
    p.add_argument("--jobs", type=int, default=S, help="worker processes")

    p = sub.add_parser("report", help="merge report.json files")
    _common(p, graph=False)
    p.add_argument("inputs", nargs="+", help="report.json files or directories holding one")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Flags over config file over defaults."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for k, v in vars(args).items():
        if k in DEFAULTS:
            cfg[k] = v
    for k in ("graph", "check", "source", "kind"):
        if isinstance(cfg[k], str):
            cfg[k] = [cfg[k]]
    cfg["format"] = _formats(cfg["format"] if isinstance(cfg["format"], list)
                             else [cfg["format"]])
    return cfg


def _graphs(cfg):
    if not cfg["graph"]:
        raise UsageError("at least one --graph is required")
    return [(s, generate(s)) for s in cfg["graph"]]


def _write_config(out: Path, cfg: dict, command: str):
    eff = {k: v for k, v in cfg.items() if k not in _RUNTIME_ONLY}
    eff["command"] = command
    (out / "config.json").write_text(json.dumps(eff, sort_keys=True, indent=2) + "\n",
                                     encoding="utf-8")


def _finish(bundle, reports, cfg, command) -> int:
    out = Path(cfg["out"])
    verify.emit(bundle, out, cfg["format"], reports)
    _write_config(out, cfg, command)
    status = verify.bundle_status(bundle)
    log.info("wrote %s (%d reports, %s)", out, len(bundle["reports"]), status)
    return 0 if status == "pass" else 1


# ---- subcommands -------------------------------------------------------------

def cmd_generate(cfg) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for spec, g in _graphs(cfg):
        path = out / (verify._safe(spec) + ".edges")
        save(g, path)
        log.info("%s: %d vertices, %d edges -> %s", spec, g.n, g.num_edges, path)
    return 0


def inspect_summary(g) -> dict:
    eps = check_LB(g)
    dv = doubling_constant(g, max(1, g.diameter // 2))
    dec = decompose(g)
    return {"vertices": g.n, "edges": g.num_edges, "diameter": g.diameter,
            "LB": eps, "LDV": check_LDV(g), "doubling_constant": dv.constant,
            "doubling_exponent": dv.exponent, "spectral_gap": dec.gap,
            "lambda_min": dec.lambda_min, "rho": dec.rho}


def cmd_inspect(cfg) -> int:
    result = {spec: inspect_summary(g) for spec, g in _graphs(cfg)}
    text = json.dumps(verify._jsonable(result), sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if cfg["out"] != DEFAULTS["out"] or Path(cfg["out"]).exists():
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "inspect.json").write_text(text, encoding="utf-8")
    return 0


def cmd_kernel(cfg) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    L = cfg["lmax"] or 64
    for spec, g in _graphs(cfg):
        sources = cfg["source"] or [g.labels[0]]
        for lab in sources:
            x = _vertex(g, lab)
            path = out / verify._safe(f"kernel__{spec}__{g.labels[x]}.csv")
            dump_kernel_csv(kernel_table(g, x, L), path, [str(v) for v in g.labels])
            log.info("%s source %s: l <= %d -> %s", spec, g.labels[x], L, path)
    return 0


def _vertex(g, lab):
    for cand in (lab, _maybe_int(lab)):
        try:
            return g.index(cand)
        except (KeyError, ValueError):
            pass
    raise UsageError(f"unknown vertex {lab!r}")


def _maybe_int(s):
    try:
        return int(s)
    except (TypeError, ValueError):
        return s


def cmd_fit(cfg) -> int:
    L = cfg["lmax"] or 400
    kinds = [k for v in cfg["kind"] for k in str(v).split(",") if k]
    reports = []
    for spec, g in _graphs(cfg):
        for kind in kinds:
            if kind == "due":
                r = due_check(g, L)
                reports.append(verify.VerificationReport(
                    check="fit:due", graph=spec, params={"L": L}, status="fitted",
                    constants={"C": r.constant}, witness={"x": r.witness[0], "l": r.witness[1]}))
            elif kind in ("ue", "tdue"):
                l_range = (min(4, L), L)
                fit = (ue_fit(g, l_range, sources=[0], x_range=(1, 20)) if kind == "ue" else
                       tdue_fit(g, [1], l_range, sources=[0], x_range=(1, 20)))
                ok = fit.c > 0 and not fit.degenerate
                reports.append(verify.VerificationReport(
                    check=f"fit:{kind}", graph=spec, params={"l_range": list(l_range),
                                                             "x_range": [1, 20]},
                    status="fitted" if ok else "fail", constants=fit.envelope.as_dict(),
                    witness={"sample": fit.envelope.witness},
                    plots={kind: verify._envelope_plot(fit.X, fit.values, fit.envelope)}))
            else:
                raise UsageError(f"unknown fit kind {kind!r}")
    return _finish(verify.report_merge(reports), reports, cfg, "fit")


def _require_seed(cfg):
    if cfg["seed"] is None:
        raise UsageError("--seed is required for randomised runs")
    return int(cfg["seed"])


def cmd_functional(cfg) -> int:
    seed = _require_seed(cfg)
    betas = _grid(cfg["beta"] if cfg["beta"] is not None else "0.5")
    ps = _grid(cfg["p"] if cfg["p"] is not None else "2")
    trials = cfg["trials"] or 16
    tol = cfg["tol"] or 1e-10
    name = cfg["functional"]
    reports = []
    for spec, g in _graphs(cfg):
        F, labels = verify.mean_zero_ensemble(g, verify._rng(seed, spec, "functional"), trials)
        for b in betas:
            if name == "maximal":
                T = fn.maximal(g, F)
            else:
                try:
                    T = verify._square(name, g, F, b, tol).values
                except ValueError as exc:
                    raise UsageError(str(exc)) from exc
            ratios = {}
            for p in ps:
                r = fn.lp_norm(g, T, p) / fn.lp_norm(g, F, p)
                ratios[repr(float(p))] = {"max": float(r.max()), "min": float(r.min()),
                                          "argmax": labels[int(np.argmax(r))]}
            reports.append(verify.VerificationReport(
                check=f"functional:{name}", graph=spec,
                params={"beta": b, "ps": ps, "trials": trials, "seed": seed, "tol": tol},
                status="fitted", constants={"ratios": ratios}, witness={"seed": seed}))
            if name == "maximal":
                break
    return _finish(verify.report_merge(reports), reports, cfg, "functional")


def suite_jobs(cfg) -> list[tuple[str, tuple, dict]]:
    """Expand the config into ``(suite, args, kwargs)`` jobs in a stable order."""
    if not cfg["graph"]:
        raise UsageError("at least one --graph is required")
    if not cfg["check"]:
        raise UsageError("at least one --check is required")
    seed = _require_seed(cfg)
    specs = list(cfg["graph"])
    jobs = []
    for check in cfg["check"]:
        if check not in verify.SUITES:
            raise UsageError(f"unknown check {check!r}; choose from "
                             + ", ".join(sorted(verify.SUITES)))
        kw: dict = {"seed": seed}
        if cfg["trials"] and check in ("isometry", "norm-equiv", "nq", "cross-route",
                                       "maximal", "gradient-decay"):
            kw["trials"] = int(cfg["trials"])
        if cfg["tol"] and check in ("isometry", "norm-equiv", "weak11", "cross-route"):
            kw["tol"] = float(cfg["tol"])
        if check in ("norm-equiv", "weak11", "nq"):
            kw["growth"] = float(cfg["growth"])
        if cfg["beta"] is not None:
            betas = _grid(cfg["beta"])
            if check in ("isometry", "cross-route"):
                kw["betas"] = betas
            elif check in ("norm-equiv", "weak11"):
                kw["beta"] = betas[0]
        if check in ("norm-equiv", "weak11"):
            kw["functional"] = cfg["functional"]
        if cfg["p"] is not None and check == "norm-equiv":
            kw["ps"] = _grid(cfg["p"])
        if cfg["q"] is not None and check in ("nq", "gradient-decay"):
            kw["qs"] = _grid(cfg["q"])
        if cfg["j"] is not None and check == "gaffney":
            kw["js"] = _grid(cfg["j"], int)
        if cfg["lmax"] and check in ("gaffney", "kernel"):
            kw["L"] = int(cfg["lmax"])
        if cfg["n"] and check == "gradient-decay":
            kw["N"] = int(cfg["n"])
        if check in verify.FAMILY_SUITES:
            jobs.append((check, (specs,), kw))
        else:
            jobs.extend((check, (s,), dict(kw)) for s in specs)
    return jobs


def _run_job(job):
    check, args, kw = job
    return verify.SUITES[check](*args, **kw)


def cmd_suite(cfg) -> int:
    jobs = suite_jobs(cfg)
    for s in cfg["graph"]:
        generate(s)  # reject bad specs before any work
    workers = max(1, int(cfg["jobs"] or 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = []
        for job in jobs:
            log.info("running %s on %s", job[0], job[1][0])
            results.append(_run_job(job))
    for r in results:
        log.info("%s [%s]: %s (%.2fs)", r.check, r.graph, r.status, r.runtime)
    return _finish(verify.report_merge(results), results, cfg, "suite")


def cmd_report(cfg, inputs) -> int:
    bundles = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            path = path / "report.json"
        try:
            bundles.append(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read {path}: {exc}") from exc
    bundle = verify.report_merge(bundles)
    return _finish(bundle, [], cfg, "report")


COMMANDS = {"generate": cmd_generate, "inspect": cmd_inspect, "kernel": cmd_kernel,
            "fit": cmd_fit, "functional": cmd_functional, "suite": cmd_suite}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="lpgraph: %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = resolve_config(args)
        if args.command == "report":
            return cmd_report(cfg, args.inputs)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lpgraph: error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"lpgraph: resource limit: {exc}", file=sys.stderr)
        return 2
    except LpGraphError as exc:
        print(f"lpgraph: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
