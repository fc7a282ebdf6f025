"""Command-line front end: data ingestion, command dispatch and report emission.

Exit codes: 0 success, 1 failed verification or numerical failure, 2 input error. On
exit code 2 no report is written.
"""

import argparse
import csv
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .base import (
    ConfigError,
    DatasetError,
    EmptyFileError,
    MLLabError,
    NonFiniteValueError,
    NumericalError,
    ParseError,
)
from .client import LabClient
from .experiments import CommandResult
from .lab import default_grid, log_grid, synthesize
from .models import (
    Command,
    Coordinate,
    Dataset,
    DatasetDescriptor,
    KernelFamily,
    LabOptions,
    LogLevel,
    NoiseMode,
    ObjectiveKind,
    RunConfig,
    SyntheticKind,
)
from .reports import dataset_descriptor, read_report_config, write_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2


def ingest_csv(path: str) -> Dataset:
    """Read a UTF-8 CSV with a header row; the last column is the target.

    Rows and columns in errors are 1-based and the header is row 1.

    Args:
        path: CSV file

    Returns:
        Dataset: N rows, D = columns - 1

    Raises:
        DatasetError: If the file cannot be read or has fewer than two columns
        EmptyFileError: If there are no data rows
        ParseError: For the first cell that is not a number or a ragged row
        NonFiniteValueError: For the first NaN or infinite cell
    """
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            lines = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"cannot read {path}: {e}") from e

    if not lines or not any(cell.strip() for cell in lines[0]):
        raise EmptyFileError(f"{path} is empty")
    width = len(lines[0])
    if width < 2:
        raise DatasetError(f"{path} needs at least one input column and a target column")

    values: List[List[float]] = []
    for row_number, cells in enumerate(lines[1:], start=2):
        if not cells or all(not cell.strip() for cell in cells):
            continue
        if len(cells) != width:
            raise ParseError(
                f"row {row_number} has {len(cells)} columns, expected {width}",
                row=row_number,
                column=min(len(cells), width) + 1,
            )
        parsed = []
        for column_number, cell in enumerate(cells, start=1):
            try:
                value = float(cell.strip())
            except ValueError as e:
                raise ParseError(
                    f"row {row_number}, column {column_number}: {cell!r} is not a number",
                    row=row_number,
                    column=column_number,
                ) from e
            if not math.isfinite(value):
                raise NonFiniteValueError(
                    f"row {row_number}, column {column_number}: {cell!r} is not finite",
                    row=row_number,
                    column=column_number,
                )
            parsed.append(value)
        values.append(parsed)

    if not values:
        raise EmptyFileError(f"{path} has a header but no data rows")
    table = np.array(values, dtype=np.float64)
    return Dataset(X=table[:, :-1], y=table[:, -1])


def parse_grid(spec: str) -> List[float]:
    """Parse "lo:hi:log:count" (or "lo:hi:lin:count") into a strictly increasing grid.

    Raises:
        ConfigError: If the string is malformed
    """
    parts = spec.split(":")
    if len(parts) != 4:
        raise ConfigError(f"grid must look like lo:hi:log:count, got {spec!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[3])
    except ValueError as e:
        raise ConfigError(f"invalid grid {spec!r}: {e}") from e
    if count < 1 or (count > 1 and not hi > lo):
        raise ConfigError(f"grid {spec!r} must have count >= 1 and hi > lo")

    if parts[2] == "log":
        if lo <= 0:
            raise ConfigError(f"log grid {spec!r} needs lo > 0")
        return log_grid(lo, hi, count)
    if parts[2] == "lin":
        return [lo] if count == 1 else np.linspace(lo, hi, count).tolist()
    raise ConfigError(f"grid spacing must be 'log' or 'lin', got {parts[2]!r}")


def load_data(cfg: RunConfig) -> Tuple[Optional[Dataset], Optional[DatasetDescriptor]]:
    """Dataset and descriptor of a run, or (None, None) when it has no data source."""
    if cfg.data is None:
        return None, None
    if cfg.data.csv is not None:
        d = ingest_csv(cfg.data.csv)
        return d, dataset_descriptor(d, cfg.data.csv)
    spec = cfg.data.synthetic
    assert spec is not None
    d = synthesize(spec)
    return d, dataset_descriptor(d, f"synthetic:{spec.kind.value}:seed={spec.seed}")


def _require_data(cfg: RunConfig) -> Tuple[Dataset, DatasetDescriptor]:
    d, descriptor = load_data(cfg)
    if d is None or descriptor is None:
        raise ConfigError(f"{cfg.command.value} needs --csv or --synthetic")
    return d, descriptor


def _dispatch(lab: LabClient, cfg: RunConfig) -> CommandResult:
    if cfg.command == Command.COMPARE:
        return lab.compare.run(cfg)
    if cfg.command == Command.RECOVER:
        return lab.recover.run(cfg)

    if cfg.command == Command.FIT:
        return lab.fit.run(cfg, *_require_data(cfg))
    if cfg.command == Command.SWEEP:
        d, descriptor = _require_data(cfg)
        grid = parse_grid(cfg.grid) if cfg.grid else default_grid(d)
        return lab.sweep.run(cfg, d, descriptor, grid)

    d, descriptor = load_data(cfg)
    if cfg.command == Command.VERIFY:
        return lab.verify.run(cfg, d, descriptor)
    return lab.gradcheck.run(cfg, d, descriptor)


def run_command(cfg: RunConfig, options: Optional[LabOptions] = None) -> int:
    """Run one command, write its report and return the exit code.

    Args:
        cfg: Run configuration
        options: Logging and worker options (default: LabOptions())

    Returns:
        0 on success, 1 on failed verification or numerical failure, 2 on input error
    """
    output = Path(cfg.output or f"mllab-{cfg.command.value}.json")
    try:
        with LabClient(options) as lab:
            logger.info("running %s", cfg.command.value)
            result = _dispatch(lab, cfg)
        write_report(output, cfg, result.body, result.tables)
        logger.info("%s finished, checks %s", cfg.command.value, "passed" if result.passed else "failed")
    except NumericalError as e:
        print(f"mllab: numerical failure: {e}", file=sys.stderr)
        return EXIT_FAILED
    except (MLLabError, ValueError) as e:
        print(f"mllab: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"mllab: cannot write report: {e}", file=sys.stderr)
        return EXIT_INPUT

    if not result.passed:
        print(f"mllab: {cfg.command.value} checks failed, see {output}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _add_common_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="Re-run the config embedded in a report")
    p.add_argument("--output", type=str, default=None)
    p.add_argument("--log-level", choices=[v.value for v in LogLevel], default=LogLevel.WARN.value)
    p.add_argument("--workers", type=int, default=1)

    data = p.add_argument_group("data")
    data.add_argument("--csv", type=str, default=None)
    data.add_argument("--synthetic", choices=[v.value for v in SyntheticKind], default=None)
    data.add_argument("--n", type=int, default=None)
    data.add_argument("--noise-sd", type=float, default=None)
    data.add_argument("--data-seed", type=int, default=None)
    data.add_argument("--true-lengthscale", type=float, default=None)
    data.add_argument("--true-signal-var", type=float, default=None)

    model = p.add_argument_group("model")
    model.add_argument("--kernel", choices=[v.value for v in KernelFamily], default=None)
    model.add_argument("--net-widths", type=str, default=None, help="Comma-separated, e.g. 16,16,2")
    model.add_argument("--objective", choices=[v.value for v in ObjectiveKind], default=None)
    model.add_argument("--noise-mode", choices=[v.value for v in NoiseMode], default=None)
    model.add_argument("--lengthscale", type=float, default=None)
    model.add_argument("--signal-var", type=float, default=None)
    model.add_argument("--noise", type=float, default=None)
    model.add_argument("--fix", action="append", choices=[v.value for v in Coordinate], default=None)
    model.add_argument("--weight-decay", type=float, default=None)

    opt = p.add_argument_group("optimizer")
    opt.add_argument("--max-iters", type=int, default=None)
    opt.add_argument("--grad-tol", type=float, default=None)
    opt.add_argument("--initial-step", type=float, default=None)
    opt.add_argument("--clml-m", type=int, default=None)
    opt.add_argument("--permutations", type=int, default=None)
    opt.add_argument("--clml-seed", type=int, default=None)
    opt.add_argument("--no-shuffle", action="store_true")

    run = p.add_argument_group("run")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--seeds", type=int, default=None)
    run.add_argument("--grid", type=str, default=None, help="lo:hi:log:count")
    run.add_argument("--random", type=int, default=None)
    run.add_argument("--test-fraction", type=float, default=None)
    run.add_argument("--tol", type=float, default=None)
    run.add_argument("--grad-tol-check", type=float, default=None)
    run.add_argument("--fd-step", type=float, default=None)


def _pick(args: argparse.Namespace, mapping: Dict[str, str]) -> Dict[str, Any]:
    return {key: getattr(args, attr) for key, attr in mapping.items() if getattr(args, attr) is not None}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig from parsed flags; flags left unset take the model defaults.

    Raises:
        ConfigError: If the flags do not form a valid config
    """
    command = Command(args.command)
    if args.config is not None:
        cfg = read_report_config(Path(args.config))
        if cfg.command != command:
            raise ConfigError(f"{args.config} holds a {cfg.command.value} config, not {command.value}")
        return cfg.model_copy(update={"output": args.output}) if args.output else cfg

    fields: Dict[str, Any] = {"command": command}
    if args.csv is not None and args.synthetic is not None:
        raise ConfigError("--csv and --synthetic are mutually exclusive")
    if args.csv is not None:
        fields["data"] = {"csv": args.csv}
    elif args.synthetic is not None:
        synthetic = {"kind": args.synthetic}
        synthetic.update(
            _pick(
                args,
                {
                    "n": "n",
                    "noise_sd": "noise_sd",
                    "seed": "data_seed",
                    "lengthscale": "true_lengthscale",
                    "signal_var": "true_signal_var",
                },
            )
        )
        fields["data"] = {"synthetic": synthetic}

    fields.update(
        _pick(
            args,
            {
                "kernel": "kernel",
                "objective": "objective",
                "noise_mode": "noise_mode",
                "lengthscale": "lengthscale",
                "signal_var": "signal_var",
                "noise": "noise",
                "fixed": "fix",
                "weight_decay": "weight_decay",
                "seed": "seed",
                "seeds": "seeds",
                "grid": "grid",
                "random": "random",
                "test_fraction": "test_fraction",
                "tol": "tol",
                "grad_tol_check": "grad_tol_check",
                "fd_step": "fd_step",
                "output": "output",
            },
        )
    )
    if args.net_widths is not None:
        try:
            fields["net_widths"] = [int(w) for w in args.net_widths.split(",")]
        except ValueError as e:
            raise ConfigError(f"invalid --net-widths {args.net_widths!r}") from e

    optimizer = _pick(
        args, {"max_iters": "max_iters", "grad_tol": "grad_tol", "initial_step": "initial_step"}
    )
    if args.seed is not None:
        optimizer["seed"] = args.seed
    fields["optimizer"] = optimizer

    clml = _pick(args, {"m": "clml_m", "permutations": "permutations", "seed": "clml_seed"})
    if args.no_shuffle:
        clml["shuffle"] = False
    fields["clml"] = clml

    try:
        return RunConfig.model_validate(fields)
    except ValidationError as e:
        raise ConfigError(f"invalid arguments: {e}") from e


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per Command."""
    p = argparse.ArgumentParser(
        prog="mllab", description="Exact GP marginal likelihood engine and experiment lab"
    )
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        Command.FIT: "Optimize an objective and report the trace, breakdown and metrics",
        Command.SWEEP: "LML terms and spectrum along a lengthscale grid",
        Command.COMPARE: "Deep-kernel LML versus CLML comparison over seeds",
        Command.VERIFY: "Check the profiled-likelihood identities",
        Command.GRADCHECK: "Analytic gradients against finite differences",
        Command.RECOVER: "Learned lengthscales on GP-sampled data over seeds",
    }
    for command, text in helps.items():
        _add_common_arguments(sub.add_parser(command.value, help=text))
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run the command and return its exit code."""
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        options = LabOptions(log_level=LogLevel(args.log_level), max_workers=max(args.workers, 1))
    except (MLLabError, ValueError) as e:
        print(f"mllab: {e}", file=sys.stderr)
        return EXIT_INPUT
    return run_command(cfg, options)


if __name__ == "__main__":
    sys.exit(main())
