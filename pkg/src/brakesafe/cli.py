"""Command-line front end.

Exit codes: 0 success, 1 an analysis found a violated criterion, 2 usage or
configuration error.  Output is deterministic for a given config and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional

from . import faulttree as ftm
from .dsm import ConfigKind, DetectorModel, DsmConfig, OdometryModel, TrackerConfig, simulate_dsm
from .patterns import (
    PATTERN_SYNTAX,
    ConsecutivePattern,
    CountPattern,
    ErrorSequence,
    PatternError,
    cardinality,
    contains,
    parse_pattern,
    sample,
)
from .risk import (
    aggregate_and_check,
    hep_rate_bound,
    monte_carlo_crash_prob,
    partitions_from_spec,
    stderr_progress,
)
from .scenario import InjectionSpec, ScenarioParams, derive_geometry, simulate
from .severity import (
    ImpactSeverityBounds,
    InfeasibleError,
    SeverityTauTable,
    severity_patterns,
    severity_tau_table,
    steps_in,
)
from .wpp import TAB3, TAB5, build_hep_table, verify_wpp

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    """Bad or missing configuration; the message names the field."""


def _field(block: str, fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except ConfigError:
        raise
    except PatternError as exc:
        msg = str(exc)
        if PATTERN_SYNTAX not in msg:
            msg += f" (pattern syntax: {PATTERN_SYNTAX})"
        raise ConfigError(f"{block}: {msg}") from None
    except KeyError as exc:
        raise ConfigError(f"{block}: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{block}: {exc}") from None


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    return data


def shipped_config(name: str) -> Path:
    """Path of a config shipped with the package (``table2.json`` etc.)."""
    return Path(str(resources.files("brakesafe") / "data" / name))


def scenario_from(cfg: dict) -> ScenarioParams:
    return _field("scenario", lambda: ScenarioParams.from_dict(cfg.get("scenario", {})))


def bounds_from(cfg: dict) -> ImpactSeverityBounds:
    def build():
        data = cfg.get("severity_bounds", {})
        unknown = set(data) - set(ImpactSeverityBounds.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown field(s) {', '.join(sorted(unknown))}")
        return ImpactSeverityBounds(**data)
    return _field("severity_bounds", build)


def _sequence(text: str, n_max: int) -> ErrorSequence:
    seq = parse_pattern(text)
    if not isinstance(seq, ErrorSequence):
        raise PatternError(f"expected a sequence literal, got {text!r}")
    if seq.n_max != n_max:
        raise PatternError(f"sequence horizon {seq.n_max} != scenario n_max {n_max}")
    return seq


def injection_from(cfg: dict, n_max: int) -> Optional[InjectionSpec]:
    block = cfg.get("injection")
    if block is None:
        return None

    def build():
        unknown = set(block) - {"ubi", "eta_braking", "ubi_intervals"}
        if unknown:
            raise ValueError(f"unknown field(s) {', '.join(sorted(unknown))}")
        ubi = _sequence(block["ubi"], n_max) if "ubi" in block else ErrorSequence((), n_max)
        eta = block.get("eta_braking", 0.0)
        eta = float(eta) if isinstance(eta, (int, float)) else tuple(float(x) for x in eta)
        intervals = tuple((float(a), float(b)) for a, b in block.get("ubi_intervals", ()))
        return InjectionSpec(ubi, eta, intervals)
    return _field("injection", build)


def dsm_from(cfg: dict, n_max: int, seed: int) -> Optional[DsmConfig]:
    block = cfg.get("dsm")
    if block is None:
        return None

    def build():
        unknown = set(block) - {"kind", "injected", "detector", "tracker", "odometry"}
        if unknown:
            raise ValueError(f"unknown field(s) {', '.join(sorted(unknown))}")
        injected = block.get("injected")
        if injected is not None:
            injected = parse_pattern(injected)
            if injected.n_max != n_max:
                raise PatternError(f"injected horizon {injected.n_max} != scenario n_max {n_max}")
        return DsmConfig(
            kind=ConfigKind(block.get("kind", "C_DSM")),
            injected=injected,
            detector=DetectorModel(**block.get("detector", {})),
            tracker=TrackerConfig(**block.get("tracker", {})),
            odometry=OdometryModel(**block.get("odometry", {})),
            seed=seed,
        )
    return _field("dsm", build)


def seed_from(cfg: dict, required: bool) -> int:
    if "seed" not in cfg:
        if required:
            raise ConfigError("seed: missing (mandatory for stochastic commands)")
        return 0
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed: must be a non-negative integer, got {seed!r}")
    return seed


# -- output -------------------------------------------------------------

def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


def emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _executor(jobs: int):
    return ProcessPoolExecutor(max_workers=jobs) if jobs and jobs > 1 else None


# -- commands -----------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    params = scenario_from(cfg)
    geom = derive_geometry(params)
    injection = injection_from(cfg, geom.n_max)
    if args.ubi is not None:
        seq = _field("--ubi", lambda: _sequence(args.ubi, geom.n_max))
        base = injection or InjectionSpec(ErrorSequence((), geom.n_max))
        injection = InjectionSpec(seq, base.eta_braking, base.ubi_intervals)
    dsm = dsm_from(cfg, geom.n_max, seed_from(cfg, required=False))
    if dsm is not None and injection is not None:
        raise ConfigError("injection: use either an 'injection' or a 'dsm' block, not both")
    if dsm is not None:
        if dsm.kind is ConfigKind.C_DSM and "seed" not in cfg:
            raise ConfigError("seed: missing (mandatory for stochastic commands)")
        traj = simulate_dsm(params, geom, dsm)
    else:
        traj = _field("injection", lambda: simulate(params, injection))
    if args.csv:
        Path(args.csv).write_text(traj.to_csv(), encoding="utf-8", newline="\n")
    outcome = traj.outcome_dict()
    if dsm is not None:
        outcome["detector_fn_steps"] = list(traj.detector_fn_steps)
        outcome["tracker_fn_steps"] = list(traj.tracker_fn_steps)
    if args.format == "json":
        emit(args, dump_json(outcome))
    else:
        lines = [f"{k}: {v}" for k, v in outcome.items()]
        emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def _tau_table_from(cfg: dict, params: ScenarioParams, bounds, tol: float, jobs: int) -> SeverityTauTable:
    pool = _executor(jobs)
    try:
        return severity_tau_table(params, bounds, tol=tol, executor=pool)
    finally:
        if pool:
            pool.shutdown()


def cmd_severity_table(args) -> int:
    cfg = load_config(args.config)
    params = scenario_from(cfg)
    bounds = bounds_from(cfg)
    geom = derive_geometry(params)
    if bounds.v_s2 > params.v_max:
        raise ConfigError(f"severity_bounds: v_s2={bounds.v_s2} exceeds v_max={params.v_max} "
                          "(infeasible)")
    try:
        tt = _tau_table_from(cfg, params, bounds, args.tol, args.jobs)
    except InfeasibleError as exc:
        raise ConfigError(f"severity_bounds: {exc}") from None
    spt = severity_patterns(tt, geom.n_max)
    data = {
        "tau": {"contact": tt.tau_contact, "S0": tt.tau_s0, "S1": tt.tau_s1, "S2": tt.tau_s2,
                "max": tt.tau_max},
        "k": {"contact": tt.k_contact, "S0": tt.k_s0, "S1": tt.k_s1, "S2": tt.k_s2},
        "patterns": {label: str(p) for label, p in spt.rows()},
    }
    if args.format == "json":
        emit(args, dump_json(data))
    else:
        lines = ["severity   tau [s]   k"]
        for label, key in (("contact", "contact"), ("S0", "S0"), ("S1", "S1"), ("S2", "S2")):
            lines.append(f"{label:<10} {data['tau'][key]:8.4f}  {data['k'][key]:3d}")
        lines.append(f"{'max':<10} {tt.tau_max:8.4f}")
        lines.append("")
        lines += [f"{label:<8} {p}" for label, p in data["patterns"].items()]
        emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_patterns(args) -> int:
    items = []
    for text in args.pattern:
        p = _field("pattern", lambda: parse_pattern(text))
        item: dict[str, Any] = {"pattern": str(p)}
        if isinstance(p, ErrorSequence):
            item.update(kind="sequence", size=len(p), n_max=p.n_max, runs=[list(r) for r in p.runs()])
        else:
            item.update(kind="count" if isinstance(p, CountPattern) else "consecutive",
                        k_min=p.k_min, k_max=p.k_max, n_max=p.n_max)
            if isinstance(p, CountPattern):
                item["cardinality"] = str(cardinality(p))
            if args.contains:
                seq = _field("--contains", lambda: parse_pattern(args.contains))
                if not isinstance(seq, ErrorSequence):
                    raise ConfigError(f"--contains: expected a sequence literal ({PATTERN_SYNTAX})")
                item["contains"] = _field("--contains", lambda: contains(p, seq))
            if args.sample:
                item["samples"] = [str(s) for s in sample(p, args.seed, args.sample)]
        items.append(item)
    if args.format == "json":
        emit(args, dump_json(items))
    else:
        lines = []
        for item in items:
            lines.append(", ".join(f"{k}={v}" for k, v in item.items() if k != "samples"))
            lines += [f"  {s}" for s in item.get("samples", ())]
        emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_wpp(args) -> int:
    cfg = load_config(args.config)
    params = scenario_from(cfg)
    geom = derive_geometry(params)
    block = cfg.get("wpp", {})
    convention = block.get("convention", TAB3)
    if convention not in (TAB3, TAB5):
        raise ConfigError(f"wpp.convention: must be {TAB3!r} or {TAB5!r}, got {convention!r}")
    if "k" in block:
        def from_k():
            k = block["k"]
            return SeverityTauTable(0.0, 0.0, 0.0, 0.0, geom.s_pov / params.v_max,
                                    int(k["contact"]), int(k["S0"]), int(k["S1"]), int(k["S2"]))
        tt = _field("wpp.k", from_k)
    else:
        try:
            tt = _tau_table_from(cfg, params, bounds_from(cfg), args.tol, args.jobs)
        except InfeasibleError as exc:
            raise ConfigError(f"severity_bounds: {exc}") from None
    spt = _field("wpp.k", lambda: severity_patterns(tt, geom.n_max))
    table = build_hep_table(spt, convention)
    pattern = _field("wpp.pattern", lambda: parse_pattern(block.get("pattern", str(spt.p_s0_3))))
    if not isinstance(pattern, CountPattern):
        raise ConfigError(f"wpp.pattern: must be a count(...) pattern ({PATTERN_SYNTAX})")
    trials = block.get("trials", 1000)
    if not isinstance(trials, int) or trials < 1:
        raise ConfigError(f"wpp.trials: must be a positive integer, got {trials!r}")
    report = _field("wpp", lambda: verify_wpp(
        params, pattern, trials=trials, seed=seed_from(cfg, required=False),
        exhaustive=block.get("exhaustive"), c_values=tuple(block.get("c_values", (0, 1, 2, 3)))))
    data = {"convention": convention, "hep_table": table.as_dicts(), "verification": report.as_dict()}
    if args.format == "json":
        emit(args, dump_json(data))
    else:
        lines = ["severity  UBI pattern         tracker FN          detector FN"]
        for row in data["hep_table"]:
            lines.append(f"{row['severity']:<9} {row['ubi']:<19} {row['tracker_fn']:<19} "
                         f"{row['detector_fn']}")
        v = data["verification"]
        lines.append("")
        lines.append(f"identity: {v['sequences_checked']} sequences, max |da| = "
                     f"{v['max_abs_accel_diff']:.3g}, violations {len(v['identity_violations'])}")
        lines.append(f"soundness: {v['soundness_checked']} runs, violations "
                     f"{len(v['soundness_violations'])}")
        lines += [f"  {m}" for m in v["identity_violations"] + v["soundness_violations"]]
        lines.append("OK" if report.ok else "VIOLATED")
        emit(args, "\n".join(lines) + "\n")
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_ft(args) -> int:
    if args.hbb is not None:
        tree = _field("--hbb", lambda: ftm.build_hbb_tree(args.hbb))
    elif args.tree:
        cfg = load_config(args.tree)
        tree = _field("fault_tree", lambda: ftm.FaultTree.from_dict(cfg.get("fault_tree", cfg)))
    else:
        raise ConfigError("fault_tree: give a tree JSON file or --hbb ETA")
    probs: dict[str, float] = {}
    for item in args.leaf or ():
        name, sep, value = item.rpartition("=")
        if not sep:
            raise ConfigError(f"--leaf: expected ID=PROB, got {item!r}")
        probs[name] = _field(f"--leaf {name}", lambda: float(value))
    errors = ftm.validate(tree)
    if errors:
        raise ConfigError("fault_tree: " + "; ".join(errors))
    report = _field("fault_tree", lambda: ftm.evaluate(tree, probs))
    if args.dot:
        Path(args.dot).write_text(tree.to_dot(), encoding="utf-8", newline="\n")
    if args.format == "json":
        emit(args, dump_json({"top": tree.top, **report.as_dict()}))
    else:
        emit(args, report.as_text())
    return EXIT_OK


def cmd_risk(args) -> int:
    spec = load_config(args.spec)
    spec = spec.get("risk", spec)
    parts, residual, criteria = _field("risk", lambda: partitions_from_spec(spec))
    report = _field("risk", lambda: aggregate_and_check(parts, residual, criteria))
    emit(args, dump_json(report.as_dict()) if args.format == "json" else report.as_text())
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_mc(args) -> int:
    cfg = load_config(args.config)
    params = scenario_from(cfg)
    geom = derive_geometry(params)
    seed = seed_from(cfg, required=True)
    block = cfg.get("mc", {})
    trials = args.trials if args.trials is not None else block.get("trials", 1000)
    if not isinstance(trials, int) or trials < 1:
        raise ConfigError(f"mc.trials: must be a positive integer, got {trials!r}")
    dsm = dsm_from(cfg, geom.n_max, seed) or DsmConfig(seed=seed)
    if dsm.kind is not ConfigKind.C_DSM:
        raise ConfigError("dsm.kind: mc-validate runs the stochastic chain (C_DSM)")
    bounds = bounds_from(cfg)
    result = monte_carlo_crash_prob(params, dsm, bounds, trials, seed, jobs=args.jobs,
                                    progress=None if args.quiet else stderr_progress)
    data = result.as_dict()
    ok = True
    if "k_contact" in block:
        k = block["k_contact"]
        if not isinstance(k, int) or not 0 <= k <= geom.n_max:
            raise ConfigError(f"mc.k_contact: must be an integer in [0, {geom.n_max}], got {k!r}")
        bound = hep_rate_bound(dsm.detector.p_fn, geom.n_max, k)
        sigma = (bound * (1.0 - bound) / trials) ** 0.5
        ok = result.estimate("crash") <= bound + 3.0 * sigma
        data["bound"] = {"k_contact": k, "hep_rate_bound": bound, "sigma": sigma, "ok": ok}
    if args.format == "json":
        emit(args, dump_json(data))
    else:
        lines = [f"trials: {trials}  seed: {seed}"]
        for key, v in data["classes"].items():
            lo, hi = v["ci95"]
            lines.append(f"{key:<6} {v['count']:>8d}  {v['estimate']:.6g}  [{lo:.6g}, {hi:.6g}]")
        if "bound" in data:
            b = data["bound"]
            lines.append(f"bound (k>={b['k_contact']}): {b['hep_rate_bound']:.6g} + 3*{b['sigma']:.3g} "
                         f"{'OK' if ok else 'EXCEEDED'}")
        emit(args, "\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_VIOLATION


# -- parser -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brakesafe",
                                     description="Braking-scenario safety analysis with injected error patterns.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "text"), default="text")
    common.add_argument("--out", help="write the report here instead of standard output")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one scenario")
    p.add_argument("--config", help="run config (JSON)")
    p.add_argument("--ubi", help="UBI step sequence, e.g. {26..45,66..87}@150")
    p.add_argument("--csv", help="write the trajectory CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("severity-table", parents=[common], help="severity tau table and UBI patterns")
    p.add_argument("--config")
    p.add_argument("--tol", type=float, default=1e-3, help="duration tolerance [s]")
    p.set_defaults(func=cmd_severity_table)

    p = sub.add_parser("patterns", parents=[common], help="inspect patterns and sequences")
    p.add_argument("pattern", nargs="+")
    p.add_argument("--contains", help="sequence literal to test for membership")
    p.add_argument("--sample", type=int, default=0, help="draw this many members")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("wpp-verify", parents=[common], help="derive and verify HEPs")
    p.add_argument("--config")
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_wpp)

    p = sub.add_parser("ft-eval", parents=[common], help="evaluate a fault tree")
    p.add_argument("tree", nargs="?", help="fault tree JSON")
    p.add_argument("--hbb", type=float, metavar="ETA", help="use the built-in braking tree for eta_a_max")
    p.add_argument("--leaf", action="append", metavar="ID=PROB", help="leaf probability override")
    p.add_argument("--dot", help="write a DOT rendering here")
    p.set_defaults(func=cmd_ft)

    p = sub.add_parser("risk", parents=[common], help="aggregate rates and check criteria")
    p.add_argument("spec", help="risk spec JSON")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("mc-validate", parents=[common], help="Monte Carlo crash frequency of the DSM")
    p.add_argument("--config")
    p.add_argument("--trials", type=int)
    p.add_argument("--quiet", action="store_true", help="no progress on standard error")
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
