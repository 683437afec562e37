"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage error,
3 solver or simulation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .archsim import (BUILTIN_VARIANTS, build_config, compare, load_config_file, metrics_csv,
                      run_network)
from .archsim.engine import format_trace
from .errors import PhotoBnnError, SolverError, ValidationError
from .linkbudget import PUBLISHED_DATARATES, LinkBudgetParams, load_params_file, solve_max_n
from .pca import PcaParams, capacity
from .verify import check_bipolar_identity, flip_first_result, run_verification
from .workloads import BUILTIN_NAMES, load_model

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
CONFIG_DIR_ENV = "PHOTOBNN_CONFIG_DIR"
CONFIG_SUFFIXES = ("", ".cfg", ".ini")


class UsageError(PhotoBnnError):
    pass


@dataclass
class RunManifest:
    """Everything needed to re-run a simulate or compare command."""

    command: str
    configs: list[str]
    models: list[str]
    seed: int = 0
    outputs: dict[str, str | None] = field(default_factory=dict)
    link_mode: str = "table"
    policy: str | None = None
    granularity: str = "block"

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", "utf-8")

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text("utf-8"))
            return cls(**data)
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"cannot read manifest {path}: {exc}") from None


# --------------------------------------------------------------------------
# Resolution helpers


def resolve_config(spec: str, link_mode: str = "table", policy: str | None = None):
    """Resolve a built-in variant name, a config file path, or a file in the config directory.

    Built-in variant names win; a file named ``custom`` shadows the bare
    ``custom`` variant.
    """
    candidates = [Path(spec)]
    base = os.environ.get(CONFIG_DIR_ENV)
    if base:
        candidates += [Path(base) / (spec + sfx) for sfx in CONFIG_SUFFIXES]
    path = next((p for p in candidates if p.is_file()), None)
    if spec.upper() in BUILTIN_VARIANTS:
        cfg = build_config(spec)
    elif path is not None:
        cfg = load_config_file(path)
    elif spec == "custom":
        cfg = build_config(spec)
    else:
        raise UsageError(f"no built-in config or file named {spec!r}")
    if policy is not None:
        cfg = _with_policy(cfg, policy)
    if link_mode == "analytic" and cfg.policy == "oxbnn":
        row = solve_max_n(cfg.datarate_GSps * 1e9, cfg.link, "analytic")
        n = row.max_n
        cap = capacity(cfg.pca_params, n, cfg.datarate_GSps, "analytic")
        cfg = replace(cfg, xpe_size=n, xpes_per_xpc=n, pca_capacity=cap)
    return cfg


def _with_policy(cfg, policy):
    cap = cfg.pca_capacity
    if policy == "oxbnn" and cap is None:
        cap = capacity(cfg.pca_params, cfg.xpe_size, cfg.datarate_GSps, "table")
    return replace(cfg, policy=policy, pca_capacity=cap)


def resolve_models(spec: str) -> list[str]:
    if spec == "all":
        return list(BUILTIN_NAMES)
    return [s for s in spec.split(",") if s]


def _simulate_one(job):
    cfg, model_name, granularity, want_trace = job
    result = run_network(load_model(model_name), cfg, granularity=granularity,
                         keep_trace=want_trace)
    return result.metrics, (result.trace if want_trace else None)


def _run_matrix(manifest: RunManifest, jobs: int = 1, want_trace: bool = False):
    cfgs = [resolve_config(c, manifest.link_mode, manifest.policy) for c in manifest.configs]
    for m in manifest.models:
        load_model(m)  # fail fast on unknown models
    work = [(cfg, m, manifest.granularity, want_trace) for cfg in cfgs for m in manifest.models]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_simulate_one, work))
    else:
        results = [_simulate_one(w) for w in work]
    return cfgs, results


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, "utf-8")


# --------------------------------------------------------------------------
# Commands


def cmd_link_budget(args) -> int:
    params = load_params_file(args.params) if args.params else LinkBudgetParams()
    if args.enob_form:
        params = replace(params, enob_form=args.enob_form)
    rates = PUBLISHED_DATARATES if args.dr is None else (args.dr,)
    rows = []
    for dr in rates:
        row = solve_max_n(dr * 1e9, params, args.mode)
        cap = capacity(PcaParams.for_datarate(dr), row.max_n, dr, "table")
        rows.append((dr, row.pd_sensitivity_dBm, row.max_n, cap.gamma, cap.alpha))
    if args.csv:
        lines = ["dr_gsps,p_pd_dbm,n,gamma,alpha"]
        lines += [f"{dr:g},{p:.2f},{n},{g},{a}" for dr, p, n, g, a in rows]
    else:
        lines = [f"# mode: {args.mode}",
                 f"{'DR(GS/s)':>8} {'P_PD(dBm)':>10} {'N':>4} {'gamma':>7} {'alpha':>6}"]
        lines += [f"{dr:>8g} {p:>10.2f} {n:>4d} {g:>7d} {a:>6d}" for dr, p, n, g, a in rows]
    print("\n".join(lines))
    return EXIT_OK


def cmd_verify(args) -> int:
    fault = flip_first_result if args.inject_fault else None
    report = run_verification(args.instances, args.max_s, args.seed, fault=fault)
    if not report.ok:
        for f in report.failures:
            print(f.describe())
        return EXIT_VERIFY
    bad = check_bipolar_identity(args.bipolar_pairs, args.seed, args.max_s)
    if bad:
        print("bipolar identity failed: " + bad[0])
        return EXIT_VERIFY
    print(f"all {report.instances} instances passed "
          f"({report.checks} policy checks, {args.bipolar_pairs} bipolar pairs)")
    return EXIT_OK


def _manifest_from(args, command) -> RunManifest:
    if getattr(args, "manifest", None):
        return RunManifest.load(args.manifest)
    configs = [args.config] if command == "simulate" else [c for c in args.configs.split(",") if c]
    outputs = {"csv": args.out}
    if command == "simulate":
        outputs["trace"] = args.trace
    return RunManifest(command, configs, resolve_models(args.model if command == "simulate"
                                                        else args.models),
                       seed=args.seed, outputs=outputs, link_mode=args.link_mode,
                       policy=args.policy, granularity=args.granularity)


def cmd_simulate(args) -> int:
    manifest = _manifest_from(args, "simulate")
    if args.save_manifest:
        manifest.save(args.save_manifest)
    trace_path = manifest.outputs.get("trace")
    _, results = _run_matrix(manifest, want_trace=bool(trace_path))
    _write(manifest.outputs.get("csv"), metrics_csv(m for m, _ in results))
    if trace_path:
        _write(trace_path, "".join(format_trace(t) for _, t in results))
    return EXIT_OK


def cmd_compare(args) -> int:
    manifest = _manifest_from(args, "compare")
    if len(manifest.configs) < 2:
        raise UsageError("compare needs at least two configs")
    if args.save_manifest:
        manifest.save(args.save_manifest)
    cfgs, results = _run_matrix(manifest, jobs=args.jobs)
    by_config: dict[str, list] = {}
    per = len(manifest.models)
    for k, cfg in enumerate(cfgs):
        key, dup = cfg.name, 2
        while key in by_config:
            key, dup = f"{cfg.name}#{dup}", dup + 1
        by_config[key] = [metrics for metrics, _ in results[k * per:(k + 1) * per]]
    report = compare(by_config)
    print(report.to_text(), end="")
    out = manifest.outputs.get("csv")
    if out:
        _write(out, report.to_csv())
    if args.metrics_out:
        _write(args.metrics_out, metrics_csv(m for rows in by_config.values() for m in rows))
    return EXIT_OK


def cmd_replay(args) -> int:
    manifest = RunManifest.load(args.manifest_path)
    ns = argparse.Namespace(manifest=args.manifest_path, save_manifest=None, jobs=1,
                            metrics_out=None)
    if manifest.command == "simulate":
        return cmd_simulate(ns)
    if manifest.command == "compare":
        return cmd_compare(ns)
    raise UsageError(f"cannot replay command {manifest.command!r}")


# --------------------------------------------------------------------------
# Parser


def _add_run_flags(p):
    p.add_argument("--link-mode", choices=("table", "analytic"), default="table",
                   help="how oxbnn XPE sizes are derived (default: published table)")
    p.add_argument("--policy", choices=("oxbnn", "baseline"), default=None,
                   help="override the config's mapping policy")
    p.add_argument("--granularity", choices=("block", "pass"), default="block",
                   help="one compute event per block of pairs, or one per PASS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-manifest", metavar="PATH", help="write a replayable run manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photobnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("link-budget", help="XPE size and PCA capacity per datarate")
    p.add_argument("--mode", choices=("table", "analytic"), default="table")
    p.add_argument("--dr", type=float, default=None, help="single datarate in GS/s")
    p.add_argument("--params", metavar="FILE", help="key = value link parameter overrides")
    p.add_argument("--enob-form", choices=("typeset", "standard"), default=None)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_link_budget)

    p = sub.add_parser("verify", help="randomized oracle-equivalence sweep")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--max-s", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bipolar-pairs", type=int, default=1000)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="simulate one config on one or more models")
    p.add_argument("--config", default="OXBNN_50")
    p.add_argument("--model", default="resnet18", help="model name, file, comma list or 'all'")
    p.add_argument("--trace", metavar="FILE")
    p.add_argument("--out", metavar="FILE", help="metrics CSV (default: stdout)")
    p.add_argument("--manifest", metavar="PATH", help=argparse.SUPPRESS)
    _add_run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="FPS and FPS/W ratios of the first config over the rest")
    p.add_argument("--configs", required=True, help="comma-separated configs")
    p.add_argument("--models", default="all")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", metavar="FILE", help="comparison CSV")
    p.add_argument("--metrics-out", metavar="FILE", help="raw metrics CSV")
    p.add_argument("--manifest", metavar="PATH", help=argparse.SUPPRESS)
    _add_run_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="re-run a saved manifest")
    p.add_argument("manifest_path")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (UsageError, ValidationError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PhotoBnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
