"""Command-line front end.

Subcommands::

    signedwald test INPUT.json     intersection test of all hypotheses
    signedwald closed INPUT.json   closed testing with adjusted p-values
    signedwald simulate --study N  simulation studies, CSV output
    signedwald bahadur             efficiency-ratio grid, CSV output

Exit codes: 0 on success, 2 on invalid input, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bahadur, simlab
from .estimands import EstimateSet, ScenarioConfig, read_influence_csv
from .exceptions import InputError, NumericalError, SignedWaldError
from .intersection import HypothesisSpec, McConfig, TestResult, minp_test, signed_wald_test
from .multtest import closed_testing

log = logging.getLogger("signedwald")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
INPUT_FIELDS = (
    "n",
    "theta_hat",
    "covariance",
    "covariance_kind",
    "influence_csv",
    "names",
    "deltas",
    "weights",
    "alpha",
    "draws",
    "seed",
)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from exc


def _read_input(path: str) -> tuple[dict, Path]:
    if path == "-":
        return json.load(sys.stdin), Path.cwd()
    p = Path(path)
    try:
        with open(p) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return data, p.parent


def load_analysis_input(args) -> tuple[EstimateSet, dict]:
    """Build the estimate set and test settings from the JSON file and flags.

    Flags override fields of the JSON document. The estimates come either
    from ``covariance`` (with ``covariance_kind`` and ``n``) or from an
    influence CSV, never both.
    """
    if args.input is None and args.influence_csv is None:
        raise InputError("give an input JSON file or --influence-csv")
    data, base = ({}, Path.cwd()) if args.input is None else _read_input(args.input)
    if not isinstance(data, dict):
        raise InputError("input JSON must be an object")
    unknown = set(data) - set(INPUT_FIELDS) - {"statistic", "p_value", "method", "mc_std_error", "mc"}
    if unknown:
        raise InputError(f"unknown input fields: {sorted(unknown)}")
    for key in ("theta_hat", "deltas", "weights", "alpha", "draws", "seed"):
        flag = getattr(args, key, None)
        if flag is not None:
            data[key] = flag
    csv_path = args.influence_csv or data.get("influence_csv")
    if "theta_hat" not in data:
        raise InputError("theta_hat is required")
    if csv_path is not None and "covariance" in data:
        raise InputError("give either a covariance or an influence CSV, not both")
    if csv_path is not None:
        csv_path = Path(csv_path)
        if not csv_path.is_absolute() and args.influence_csv is None:
            csv_path = base / csv_path
        phi, names = read_influence_csv(csv_path)
        est = EstimateSet.from_influence(data["theta_hat"], phi, names=data.get("names") or names)
    else:
        for key in ("n", "covariance", "covariance_kind"):
            if key not in data:
                raise InputError(f"{key} is required with a covariance input")
        est = EstimateSet.from_covariance(
            data["n"], data["theta_hat"], data["covariance"], kind=data["covariance_kind"], names=data.get("names") or ()
        )
    settings = {
        "deltas": data.get("deltas"),
        "weights": data.get("weights"),
        "alpha": float(data.get("alpha", 0.025)),
        "draws": int(data.get("draws", 10_000)),
        "seed": data.get("seed"),
    }
    return est, settings


def _mc(settings, n_jobs=1) -> McConfig:
    if settings["seed"] is None:
        raise InputError("--seed is required for Monte-Carlo p-values")
    return McConfig(draws=settings["draws"], seed=int(settings["seed"]), n_jobs=n_jobs)


def _spec(est, settings) -> HypothesisSpec:
    deltas = settings["deltas"] if settings["deltas"] is not None else [0.0] * est.dim
    return HypothesisSpec(deltas=tuple(deltas), weights=settings["weights"], alpha=settings["alpha"])


def format_test(result: TestResult, spec: HypothesisSpec) -> str:
    title = "Signed Wald Intersection Test" if result.method.startswith("sw") else "Intersection Test"
    if result.method.startswith("minp"):
        title = "Minimum p-value Intersection Test"
    lines = [f"\t{title}", "", "data:  "]
    lines.append("Intersection null hypothesis: theta =< [" + ", ".join(f"{d:g}" for d in spec.deltas) + "]")
    lines.append("w = [" + ", ".join(f"{w:.2f}" for w in spec.weights) + "]")
    p_text = f"= {result.p_value:.4g}"
    if result.mc is not None and result.p_value == 0:
        p_text = f"< {1 / result.mc.draws:g}"
    lines.append(f"Q = {result.statistic:.5f}, p-value {p_text}")
    if result.mc is not None:
        lines.append(f"Monte-Carlo: {result.mc.draws} draws, seed {result.mc.seed}, std. error {result.mc_std_error:.2g}")
    lines.append(f"method: {result.method}")
    return "\n".join(lines)


def cmd_test(args) -> int:
    est, settings = load_analysis_input(args)
    spec = _spec(est, settings)
    mc = None if args.mode == "analytic" and args.method == "sw" else _mc(settings, args.n_jobs)
    if args.method == "sw":
        result = signed_wald_test(est, spec, mc, method=args.mode)
    else:
        result = minp_test(est, spec, mc, mode=args.minp_mode)
    if args.json:
        out = result.to_dict()
        out.update(est.to_dict())
        out.update({"alpha": spec.alpha, "draws": settings["draws"], "seed": settings["seed"]})
        print(json.dumps(out, indent=2))
    else:
        print(format_test(result, spec))
    return EXIT_OK


def cmd_closed(args) -> int:
    est, settings = load_analysis_input(args)
    spec = _spec(est, settings)
    mc = _mc(settings, args.n_jobs) if est.dim > 1 else None
    report = closed_testing(
        est,
        deltas=spec.deltas,
        global_w=spec.weights,
        alpha=spec.alpha,
        mc=mc,
        method=args.method,
        minp_mode=args.minp_mode,
    )
    print(report.to_json(indent=2) if args.json else report.format_table())
    return EXIT_OK


def _emit(table: simlab.StudyResultTable, out) -> None:
    text = table.to_csv(out)
    if out is None:
        sys.stdout.write(text)
    else:
        log.info("wrote %d rows to %s", len(table), out)


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise InputError("--seed is required for simulations")
    config = {}
    if args.config is not None:
        config, _ = _read_input(args.config)
        if not isinstance(config, dict):
            raise InputError("simulation config must be a JSON object")
    if args.study == 1:
        reps = config.pop("reps", simlab.STUDY1_SCALE[args.scale])
        reps = args.reps or reps
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in config.items()}
        try:
            cfg = simlab.Study1Config(reps=int(reps), seed=args.seed, **kw)
        except TypeError as exc:
            raise InputError(f"bad study 1 config: {exc}") from exc
        table = simlab.run_study1(cfg)
    elif args.study == 2:
        default_reps, draws = simlab.STUDY2_SCALE[args.scale]
        scenarios = config.get("scenarios")
        scenarios = None if scenarios is None else [ScenarioConfig.from_dict(s) for s in scenarios]
        weight_sets = config.get("weight_sets")
        if weight_sets is not None:
            weight_sets = [(w["label"], tuple(w["weights"])) for w in weight_sets]
        table = simlab.run_study2(
            scenarios,
            weight_sets,
            reps=int(args.reps or config.get("reps", default_reps)),
            mc=McConfig(draws=int(config.get("draws", draws)), seed=args.seed),
            seed=args.seed,
            n_jobs=args.n_jobs,
        )
    else:
        default_reps, draws = simlab.STUDY3_SCALE[args.scale]
        scenario = config.get("scenario")
        table = simlab.run_study3(
            sample_sizes=config.get("sample_sizes", simlab.SAMPLE_SIZES),
            strategies=config.get("strategies", simlab.STRATEGIES),
            reps=int(args.reps or config.get("reps", default_reps)),
            mc=McConfig(draws=int(config.get("draws", draws)), seed=args.seed),
            seed=args.seed,
            scenario=None if scenario is None else ScenarioConfig.from_dict(scenario),
            n_jobs=args.n_jobs,
        )
    _emit(table, args.out)
    return EXIT_OK


def cmd_bahadur(args) -> int:
    rows = bahadur.ratio_grid(args.rho_grid, args.s_grid, z_max=args.z_max)
    table = simlab.StudyResultTable(["rho", "s", "slope_sw", "slope_minp", "ratio", "ratio_cap"], rows)
    _emit(table, args.out)
    return EXIT_OK


def _add_analysis_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", nargs="?", help="JSON input file, '-' for stdin")
    p.add_argument("--influence-csv", help="influence matrix CSV (header row of names)")
    p.add_argument("--theta-hat", dest="theta_hat", type=_floats, help="estimates, comma separated")
    p.add_argument("--deltas", type=_floats, help="margins (default 0)")
    p.add_argument("--weights", type=_floats, help="weights (default equal)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--draws", type=int, help="Monte-Carlo draws (default 10000)")
    p.add_argument("--seed", type=int, help="Monte-Carlo seed (required for MC p-values)")
    p.add_argument("--method", choices=("sw", "minp"), default="sw")
    p.add_argument("--minp-mode", choices=("joint", "bonferroni"), default="joint")
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signedwald", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="intersection test of all hypotheses")
    _add_analysis_args(p)
    p.add_argument("--mode", choices=("mc", "analytic"), default="mc", help="analytic: two hypotheses, equal weights")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("closed", help="closed testing procedure")
    _add_analysis_args(p)
    p.set_defaults(func=cmd_closed)

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("config", nargs="?", help="JSON config file")
    p.add_argument("--study", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bahadur", help="efficiency-ratio grid")
    p.add_argument("--rho-grid", type=_floats, default=list(simlab.STUDY1_RHOS))
    p.add_argument("--s-grid", type=_floats, default=list(simlab.STUDY1_S))
    p.add_argument("--z-max", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bahadur)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SignedWaldError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error (malformed input): {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
