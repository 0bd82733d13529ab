# main.py
import argparse
import json
import logging
import sys
from typing import Any

import certify
import exporter
import maps
import montecarlo
import rds
from config import DEFAULT_SEED, HITTING_CAP, M_MAX, N_TRIALS_PROPORTION, N_TRIALS_SWEEP, START_HORIZON
from errors import AlleeError, ConfigurationError, InputError, NotAnAlleeMap, PreconditionError
from maps import MapSpec
from rds import PerturbationSpec, RdsConfig

logger = logging.getLogger("allee_rds")

SYSTEM_KEYS = {"f", "g", "p", "perturbation", "b"}


def load_system(path: str) -> RdsConfig:
    """
    Read a system config file: {"f": MapSpec, "g": MapSpec, "p": float,
    "perturbation": {"delta", "distribution"} (optional), "b": float (optional)}.

    Raises:
        ConfigurationError: unreadable file, bad JSON, unknown or invalid fields.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    return system_from_dict(data, source=path)


def system_from_dict(data: Any, source: str = "config") -> RdsConfig:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a JSON object")
    unknown = set(data) - SYSTEM_KEYS
    if unknown:
        raise ConfigurationError(f"{source}: unknown keys {sorted(unknown)}")
    for key in ("f", "g", "p"):
        if key not in data:
            raise ConfigurationError(f"{source}: missing field '{key}'")

    def field(key, build):
        try:
            return build(data[key])
        except ConfigurationError as e:
            raise ConfigurationError(f"{source}: field '{key}': {e}") from None

    f = field("f", MapSpec.from_dict)
    g = field("g", MapSpec.from_dict)
    perturbation = None
    if data.get("perturbation") is not None:
        perturbation = field("perturbation", PerturbationSpec.from_dict)
    p, b = data["p"], data.get("b")
    if isinstance(p, bool) or not isinstance(p, (int, float)):
        raise ConfigurationError(f"{source}: field 'p' must be a number, got {p!r}")
    if b is not None and (isinstance(b, bool) or not isinstance(b, (int, float))):
        raise ConfigurationError(f"{source}: field 'b' must be a number, got {b!r}")
    try:
        return RdsConfig.build(f, g, float(p), perturbation, None if b is None else float(b))
    except ConfigurationError as e:
        raise ConfigurationError(f"{source}: {e}") from None


def require_allee(config: RdsConfig) -> dict[str, maps.ValidationReport]:
    """Validate both maps; a failed axiom is fatal."""
    reports = {"f": maps.validate_allee(config.f), "g": maps.validate_allee(config.g)}
    for label, report in reports.items():
        if not report.passed:
            failed = ", ".join(
                f"{c.name}" + (f" ({c.detail})" if c.detail else "") for c in report.failures()
            )
            raise NotAnAlleeMap(f"map {label} fails the Allee axioms: {failed}")
    return reports


def _emit(args, payload: dict[str, Any], frame=None, default_format: str = "json") -> None:
    fmt = args.format or default_format
    if fmt == "csv" and frame is None:
        raise InputError(f"{args.command} has no CSV form; use --format json")
    if fmt == "csv":
        exporter.write_csv(frame, args.out)
    else:
        exporter.write_json(payload, args.out)
    if args.export_dir:
        exporter.export_results(payload, frame, args.export_dir, f"{args.command}_{args.seed}")


def _progress() -> bool:
    return sys.stderr.isatty()


# ---- subcommands ----

def cmd_analyze(args, config: RdsConfig) -> int:
    reports = require_allee(config)
    ff, fg = reports["f"].features, reports["g"].features
    order = certify.classify_ordering(ff, fg)
    payload = {
        "config": config.to_dict(),
        "features": {"f": ff.to_dict(), "g": fg.to_dict()},
        "validation": {k: r.to_dict() for k, r in reports.items()},
        "ordering": order.to_dict(),
        "persists_alone": {"f": maps.persists_alone(config.f, ff), "g": maps.persists_alone(config.g, fg)},
    }
    print(f"f: A={ff.A:.6g} K={ff.K:.6g} ({ff.monotonicity.value})", file=sys.stderr)
    print(f"g: A={fg.A:.6g} K={fg.K:.6g} ({fg.monotonicity.value})", file=sys.stderr)
    print(f"Ordering: {order.permutation} -> {order.ordering.value}", file=sys.stderr)
    rows = [{"map": k, **v} for k, v in payload["features"].items()]
    _emit(args, payload, exporter.estimate_frame(rows))
    return 0


def _parse_witness(text: str | None):
    if not text:
        return None
    labels = tuple(s.strip() for s in text.split(","))
    if any(label not in ("f", "g") for label in labels):
        raise InputError(f"--witness takes a comma list of f/g, got {text!r}")
    return labels


def cmd_certify(args, config: RdsConfig) -> int:
    require_allee(config)
    witness = _parse_witness(args.witness)
    theorems = list(certify.Theorem) if args.theorem == "all" else [certify.Theorem(args.theorem)]
    delta = args.delta if args.delta is not None else (config.perturbation.delta if config.perturbed else None)

    reports, skipped = [], []
    for theorem in theorems:
        try:
            report = certify.certify(theorem, config.f, config.g, delta, args.m_max, witness=witness)
        except (PreconditionError, InputError) as e:
            if args.theorem != "all":
                raise
            skipped.append({"theorem": theorem.value, "reason": str(e)})
            continue
        reports.append(report)
        print(f"{theorem.value}: {report.verdict.value}", file=sys.stderr)
        for h in report.hypotheses:
            print(f"  {'ok  ' if h.holds else 'FAIL'} {h.name}", file=sys.stderr)

    if args.theorem == "all":
        payload = {"config": config.to_dict(), "reports": [r.to_dict() for r in reports], "skipped": skipped}
    else:
        payload = {"config": config.to_dict(), **reports[0].to_dict()}
    rows = [{"theorem": r.theorem.value, **h.to_dict()} for r in reports for h in r.hypotheses]
    _emit(args, payload, exporter.estimate_frame(rows) if rows else None)

    ok = bool(reports) and all(r.verdict is certify.Verdict.ALL_HOLD for r in reports)
    return 0 if ok else 1


def cmd_simulate(args, config: RdsConfig) -> int:
    require_allee(config)
    traj = rds.simulate(config, args.x0, args.seed, args.steps, montecarlo.default_classifier(config))
    print(f"Simulated {traj.n_steps} steps from x0={traj.x0} (seed {traj.seed}): outcome {traj.outcome.value}"
          + (f" from step {traj.outcome_step}" if traj.outcome_step is not None else ""), file=sys.stderr)
    payload = {
        "config": config.to_dict(),
        "seed": traj.seed,
        "x0": traj.x0,
        "n_steps": traj.n_steps,
        "outcome": traj.outcome.value,
        "outcome_step": traj.outcome_step,
        "states": traj.states,
        "choices": ["f" if c else "g" for c in traj.choices],
    }
    _emit(args, payload, exporter.trajectory_frame(traj), default_format="csv")
    return 0


def _classifier(args, config: RdsConfig):
    if args.trap == "default":
        return None
    if not config.perturbed:
        raise InputError(f"--trap {args.trap} needs a perturbation in the config")
    delta = config.perturbation.delta
    if args.trap == "theorem5":
        return certify.theorem5_U(config.f, config.g, delta).classifier()
    return certify.theorem2_sets(config.f, config.g, delta).classifier()


def cmd_estimate(args, config: RdsConfig) -> int:
    require_allee(config)
    if args.n_trials < 1:
        raise InputError(f"--n-trials must be at least 1, got {args.n_trials}")

    if args.kind == "absorption":
        result = montecarlo.estimate_absorption(
            config, args.x0, args.n_trials, args.horizon, args.seed,
            classifier=_classifier(args, config), progress=_progress())
        rows = [{"quantity": "p0", **result.p0.to_dict()}, {"quantity": "p1", **result.p1.to_dict()}]
        print(f"p0={result.p0.estimate:.4f} p1={result.p1.estimate:.4f} "
              f"undecided={result.n_undecided} horizon={result.horizon}", file=sys.stderr)
    else:
        estimate = montecarlo.estimate_hitting_time(config, args.x0, args.threshold, args.n_trials, args.cap, args.seed)
        rows = [{"quantity": "T", **estimate.to_dict()}]
        print(f"T={estimate.estimate:.4f} [{estimate.ci_low:.4f}, {estimate.ci_high:.4f}] "
              f"censored={estimate.n_censored}", file=sys.stderr)

    payload = {"config": config.to_dict(), "x0": args.x0, "kind": args.kind, "estimates": rows}
    _emit(args, payload, exporter.estimate_frame(rows))
    return 0


def _parse_grid(text: str | None) -> list[float]:
    if not text:
        raise InputError("sweep requires --p-grid")
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"--p-grid must be a comma list of numbers, got {text!r}") from None


def cmd_sweep(args, config: RdsConfig) -> int:
    require_allee(config)
    if args.n_trials < 1:
        raise InputError(f"--n-trials must be at least 1, got {args.n_trials}")
    grid = _parse_grid(args.p_grid)
    sweep = montecarlo.sweep_T_of_p(config.f, config.g, grid, args.x0, args.n_trials, args.cap, args.seed,
                                    config.perturbation, config.b, progress=_progress())
    failed = [p for p, v in zip(sweep.p_grid, sweep.values) if v.error]
    print(f"Swept {len(grid)} values of p ({len(failed)} unavailable)", file=sys.stderr)
    payload = {"config": config.to_dict(), "x0": args.x0, "seed": args.seed, "points": sweep.to_rows()}
    _emit(args, payload, exporter.sweep_frame(sweep), default_format="csv")
    if len(failed) == len(grid):
        logger.error("every grid point censored")
        return 4
    return 0


COMMANDS = {
    "analyze": cmd_analyze,
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    def global_flags(p: argparse.ArgumentParser, sub: bool) -> None:
        # sub-level copies must not clobber values given before the subcommand
        default = (lambda v: argparse.SUPPRESS) if sub else (lambda v: v)
        p.add_argument("--config", default=default(None), help="system config JSON")
        p.add_argument("--seed", type=int, default=default(DEFAULT_SEED), help="root seed")
        p.add_argument("--out", default=default(None), help="output file (stdout when omitted)")
        p.add_argument("--format", choices=["json", "csv"], default=default(None))
        p.add_argument("--export-dir", default=default(None), help="also write a JSON + CSV pair here")
        p.add_argument("-v", "--verbose", action="store_true", default=default(False))

    parser = argparse.ArgumentParser(prog="allee-rds",
                                     description="Random switching between Allee maps: analyze, certify, simulate, estimate")
    global_flags(parser, sub=False)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("analyze", help="fixed points, critical points and ordering of f and g")
    global_flags(p, sub=True)

    p = subs.add_parser("certify", help="check the hypotheses of a theorem")
    global_flags(p, sub=True)
    p.add_argument("--theorem", required=True, choices=[t.value for t in certify.Theorem] + ["all"])
    p.add_argument("--delta", type=float, default=None,
                   help="noise size for T2 / T5 (default: the config perturbation delta)")
    p.add_argument("--m-max", type=int, default=M_MAX, help="longest composition searched")
    p.add_argument("--witness", default=None, help="check this composition instead, e.g. g,f,g")

    p = subs.add_parser("simulate", help="one trajectory as CSV")
    global_flags(p, sub=True)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--steps", type=int, default=START_HORIZON)

    p = subs.add_parser("estimate", help="Monte Carlo extinction / survival or hitting-time estimate")
    global_flags(p, sub=True)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--kind", choices=["absorption", "hitting"], default="absorption")
    p.add_argument("--n-trials", type=int, default=N_TRIALS_PROPORTION)
    p.add_argument("--horizon", type=int, default=START_HORIZON)
    p.add_argument("--trap", choices=["default", "theorem2", "theorem5"], default="default",
                   help="survival/extinction regions; default picks the noise traps for a perturbed config")
    p.add_argument("--threshold", type=float, default=None, help="hitting threshold (default min(A_f, A_g))")
    p.add_argument("--cap", type=int, default=HITTING_CAP)

    p = subs.add_parser("sweep", help="T(p) over a grid of p")
    global_flags(p, sub=True)
    p.add_argument("--p-grid", default=None, help="comma list of p values in (0, 1)")
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--n-trials", type=int, default=N_TRIALS_SWEEP)
    p.add_argument("--cap", type=int, default=HITTING_CAP)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not args.config:
            raise InputError("--config is required")
        if args.seed < 0:
            raise InputError(f"--seed must be non-negative, got {args.seed}")
        config = load_system(args.config)
        return COMMANDS[args.command](args, config)
    except AlleeError as e:
        print(f"[!] {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
