import argparse
import json
import logging
import math
import sys

import pandas as pd
from pydantic import ValidationError

from .config import config
from .convergence_lab import EXPERIMENTS, resolve_test_functions, run_experiment
from .distributions import classify_regime, eta_law_from_config, norming_a, xi_law_from_config
from .errors import NormingError, QuadratureError, ReportSchemaError
from .models import ExperimentReport, RunConfig
from .resolvent_lab import (
    EtaStarMeasure,
    holding_jumping_resolvent,
    killed_resolvent_V,
    skew_resolvent_at_zero,
)
from .storage import LocalFileStorage, load_report, summary_frame
from .transforms import discrete_hit_laplace_scaled_result, stable_hit_laplace_result
from .utils import timestamp_slug
from .validation import validate_environment
from .walk_engine import simulate_chain

# Set up logging
logging.basicConfig(
    level=getattr(logging, config.log_level, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler()],
)
logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2


def exit_code(verdicts: list[str]) -> int:
    """Any fail gives 1, otherwise any inconclusive gives 2, otherwise 0."""
    if "fail" in verdicts:
        return EXIT_FAIL
    if "inconclusive" in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Config file, then environment overrides, then command-line flags."""
    data: dict = {}
    if args.config:
        with open(args.config, "r") as f:
            data = json.load(f)
    data["operation"] = args.command
    if args.command == "experiment":
        data["experiment"] = args.name
    if config.worker_count is not None:
        data["worker_count"] = config.worker_count
    if config.output_dir is not None:
        data["output_dir"] = config.output_dir
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["worker_count"] = args.workers
    if args.out is not None:
        data["output_dir"] = args.out
    return RunConfig.model_validate(data)


def cmd_simulate(cfg: RunConfig, storage: LocalFileStorage) -> int:
    xi_law = xi_law_from_config(cfg.xi)
    eta_law = eta_law_from_config(cfg.eta)
    p = cfg.parameters
    path = simulate_chain(xi_law, eta_law, p.x0, p.n_steps, cfg.seed)
    name = f"simulate_{timestamp_slug()}"
    bin_path = storage.save_path(path, name)
    frame = pd.DataFrame(
        {"n": range(path.values.size), "X": path.values, "T": path.zero_count}
    )
    csv_path = storage.save_table(frame, name)
    storage.save_run_config(cfg, name)
    logger.info("Wrote %s and %s", bin_path, csv_path)
    return EXIT_PASS


def cmd_transform(cfg: RunConfig, storage: LocalFileStorage) -> int:
    """Discrete and stable hitting transforms with their quadrature errors and the gap between them."""
    xi_law = xi_law_from_config(cfg.xi)
    rows = []
    failed = False
    for lam in cfg.grids.lam:
        for v in cfg.grids.v:
            a = norming_a(xi_law, v)
            for x in cfg.grids.x:
                lattice_x = math.floor(x * a) / a
                try:
                    discrete = discrete_hit_laplace_scaled_result(x, lam, v, xi_law, cfg.quadrature)
                    stable = stable_hit_laplace_result(lattice_x, lam, xi_law.alpha, cfg.quadrature)
                except (QuadratureError, NormingError) as e:
                    logger.warning("Transform failed at x=%s lambda=%s v=%s: %s", x, lam, v, e)
                    failed = True
                    continue
                gap = abs(discrete.value - stable.value)
                rows.append([x, lam, v, discrete.value, discrete.err_estimate, gap, "discrete_scaled"])
                rows.append([lattice_x, lam, v, stable.value, stable.err_estimate, gap, "stable"])
    columns = ["x", "lambda", "v", "value", "err_estimate", "gap", "method"]
    name = f"transform_{timestamp_slug()}"
    storage.save_table(pd.DataFrame(rows, columns=columns), name)
    storage.save_run_config(cfg, name)
    return EXIT_INCONCLUSIVE if failed else EXIT_PASS


def cmd_resolvent(cfg: RunConfig, storage: LocalFileStorage) -> int:
    xi_law = xi_law_from_config(cfg.xi)
    eta_law = eta_law_from_config(cfg.eta)
    functions = resolve_test_functions(cfg.parameters.test_functions)
    skew = classify_regime(xi_law.alpha, eta_law) == "skew"
    rows = []
    failed = False
    for lam in cfg.grids.lam:
        try:
            for v in cfg.grids.v:
                for x in cfg.grids.x:
                    killed = killed_resolvent_V(x, lam, v, xi_law, spec=cfg.quadrature)
                    rows.append(["V1", x, lam, v, killed.value, killed.err, killed.method])
                for f in functions:
                    chain = holding_jumping_resolvent(f, lam, v, xi_law, eta_law)
                    rows.append([f"lambda_R_{f.name}_0", 0.0, lam, v, chain.value, chain.err, chain.method])
            if skew:
                measure = EtaStarMeasure.from_law(eta_law)
                for f in functions:
                    target = skew_resolvent_at_zero(
                        f, lam, measure, xi_law.alpha, cfg.parameters.v_proxy, spec=cfg.quadrature
                    )
                    err = target.proxy_error if target.proxy_error is not None else 0.0
                    rows.append(
                        [f"skew_lambda_R_{f.name}_0", 0.0, lam, math.inf, target.value, err, target.method]
                    )
        except (QuadratureError, NormingError) as e:
            logger.warning("Resolvent evaluation failed at lambda=%s: %s", lam, e)
            failed = True
    columns = ["quantity", "x", "lambda", "v", "value", "err", "method"]
    name = f"resolvent_{timestamp_slug()}"
    storage.save_table(pd.DataFrame(rows, columns=columns), name)
    storage.save_run_config(cfg, name)
    return EXIT_INCONCLUSIVE if failed else EXIT_PASS


def cmd_experiment(cfg: RunConfig, storage: LocalFileStorage) -> int:
    report = run_experiment(cfg)
    json_path, _ = storage.save_report(report, f"{cfg.experiment}_{timestamp_slug()}")
    print(str(report))
    print(f"Report: {json_path}")
    return exit_code([report.verdict])


def cmd_report(paths: list[str], out: str | None) -> int:
    reports: list[ExperimentReport] = [load_report(p) for p in paths]
    frame = summary_frame(reports)
    print(frame.to_markdown(index=False) if not frame.empty else "No reports.")
    if out:
        LocalFileStorage(out).save_table(frame, f"report_{timestamp_slug()}")
    return exit_code([r.verdict for r in reports])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run config JSON file.")
    common.add_argument("--seed", type=int, help="Unsigned 64-bit seed.")
    common.add_argument("--workers", type=int, help="Worker pool size.")
    common.add_argument("--out", help="Output directory for artifacts.")

    parser = argparse.ArgumentParser(
        prog="skewwalk",
        description="Perturbed lattice walks, their transforms and convergence experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="Simulate one perturbed path.")
    sub.add_parser("transform", parents=[common], help="Tabulate hitting transforms.")
    sub.add_parser("resolvent", parents=[common], help="Tabulate resolvents at zero.")
    experiment = sub.add_parser("experiment", parents=[common], help="Run one experiment.")
    experiment.add_argument("name", choices=sorted(EXPERIMENTS))
    report = sub.add_parser("report", parents=[common], help="Consolidate report files.")
    report.add_argument("paths", nargs="*", help="Report JSON files.")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "transform": cmd_transform,
    "resolvent": cmd_resolvent,
    "experiment": cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.paths, args.out)
        cfg = load_run_config(args)
        validate_environment(cfg)
        return COMMANDS[args.command](cfg, LocalFileStorage(cfg.output_dir))
    except ValidationError as e:
        print(f"Invalid run config:\n{e}", file=sys.stderr)
        return EXIT_FAIL
    except (ReportSchemaError, ValueError, RuntimeError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
