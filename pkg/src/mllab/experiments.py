"""Command runners behind the CLI, one sub-client per command."""

import logging
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

from pydantic import BaseModel

from .base import BaseLab, ConfigError
from .gp import log_marginal_likelihood, posterior_predict, predictive_metrics
from .lab import (
    random_instance,
    run_dkl_comparison,
    run_lengthscale_recovery,
    run_lengthscale_sweep,
    seed_range,
    train_objective,
    train_test_split,
)
from .models import (
    ComparisonConfig,
    ComparisonReport,
    Dataset,
    DatasetDescriptor,
    FitReport,
    GradCheckRow,
    GradCheckSummary,
    Hyperparameters,
    KernelFamily,
    KernelSpec,
    NetSpec,
    NoiseMode,
    Objective,
    ObjectiveKind,
    RecoveryConfig,
    RecoveryReport,
    RunConfig,
    Seed,
    SweepReport,
    SyntheticSpec,
    VerifyReport,
    VerifyRow,
)
from .objectives import initial_hyperparameters, to_noise_mode, with_overrides
from .optimizer import gradient_check
from .profiled import logdet_split, profiled_objective, verify_stationarity

logger = logging.getLogger(__name__)

# network weight derivatives go through tanh chains and are checked more loosely
NET_GRAD_TOL = 1e-3

Instance = Tuple[Dataset, Hyperparameters, KernelSpec]


class CommandResult(NamedTuple):
    """Report body, CSV side tables and whether every check passed."""

    body: BaseModel
    tables: Dict[str, List[Dict[str, Any]]]
    passed: bool


def kernel_spec(cfg: RunConfig, input_dim: int) -> KernelSpec:
    """Kernel of a run; deep kernels get an MLP from the input width through net_widths."""
    if cfg.kernel == KernelFamily.DEEP_RBF:
        return KernelSpec(family=cfg.kernel, net=NetSpec.mlp([input_dim, *cfg.net_widths]))
    return KernelSpec(family=cfg.kernel)


def starting_point(cfg: RunConfig, d: Dataset, spec: KernelSpec) -> Hyperparameters:
    """Scale-aware initialization with the config's explicit overrides applied."""
    h = initial_hyperparameters(d, spec, Seed(value=cfg.seed), cfg.noise_mode)
    return with_overrides(h, cfg.lengthscale, cfg.signal_var, cfg.noise)


def _instances(
    lab: BaseLab, cfg: RunConfig, d: Optional[Dataset]
) -> List[Tuple[int, Instance]]:
    if cfg.random is not None:
        families = [KernelFamily.RBF, KernelFamily.DEEP_RBF]
        root = Seed(value=cfg.seed)
        return list(
            enumerate(lab.map(lambda i: random_instance(root.spawn(i), families[i % 2]),
                              range(cfg.random)))
        )
    if d is None:
        raise ConfigError("either a dataset or --random is required")
    spec = kernel_spec(cfg, d.d)
    return [(0, (d, starting_point(cfg, d, spec), spec))]


class FitClient:
    """Train one objective on one dataset."""

    def __init__(self, base_client: BaseLab):
        """Initialize the fit client.

        Args:
            base_client: The lab instance owning logging and the worker pool
        """
        self._client = base_client

    def run(self, cfg: RunConfig, d: Dataset, descriptor: DatasetDescriptor) -> CommandResult:
        """Fit hyperparameters by gradient ascent on the configured objective.

        With test_fraction > 0 the data is split first and test metrics are reported.

        Args:
            cfg: Run configuration
            d: Dataset
            descriptor: Provenance of d

        Returns:
            CommandResult: FitReport body and the optimization trace table
        """
        spec = kernel_spec(cfg, d.d)
        train, test = d, None
        if cfg.test_fraction > 0.0:
            train, test = train_test_split(d, 1.0 - cfg.test_fraction, Seed(value=cfg.seed).spawn(7))

        h0 = starting_point(cfg, train, spec)
        h, trace = train_objective(
            cfg.objective,
            train,
            h0,
            spec,
            cfg.optimizer,
            clml=cfg.clml,
            fixed=cfg.fixed,
            weight_decay=cfg.weight_decay,
        )

        train_metrics = predictive_metrics(posterior_predict(train, h, spec, train.X), train.y)
        test_metrics = None
        if test is not None:
            test_metrics = predictive_metrics(posterior_predict(train, h, spec, test.X), test.y)

        body = FitReport(
            dataset=descriptor,
            objective=cfg.objective,
            kernel=cfg.kernel,
            initial=h0.summary(),
            hyperparameters=h.summary(),
            breakdown=log_marginal_likelihood(train, h, spec),
            trace=trace,
            train_metrics=train_metrics,
            test_metrics=test_metrics,
        )
        rows = [
            {
                "iteration": i,
                "value": step.value,
                "grad_max_norm": step.grad_max_norm,
                "step": step.step,
                "log_lengthscale": step.theta[0],
                "log_signal_var": step.theta[1],
                "log_noise": step.theta[2],
            }
            for i, step in enumerate(trace.iterations)
        ]
        return CommandResult(body=body, tables={"trace": rows}, passed=True)


class SweepClient:
    """Lengthscale sweeps of the LML terms."""

    def __init__(self, base_client: BaseLab):
        """Initialize the sweep client.

        Args:
            base_client: The lab instance owning logging and the worker pool
        """
        self._client = base_client

    def run(
        self,
        cfg: RunConfig,
        d: Dataset,
        descriptor: DatasetDescriptor,
        grid: Sequence[float],
    ) -> CommandResult:
        """Evaluate every grid lengthscale at the initial signal and noise variance."""
        spec = kernel_spec(cfg, d.d)
        h_base = starting_point(cfg, d, spec)
        report: SweepReport = run_lengthscale_sweep(d, grid, h_base, spec, self._client.map)
        report = report.model_copy(update={"dataset": descriptor})
        rows = [row.model_dump() for row in report.rows]
        return CommandResult(body=report, tables={"sweep": rows}, passed=True)


class CompareClient:
    """Deep-kernel objective comparisons on synthetic data."""

    def __init__(self, base_client: BaseLab):
        """Initialize the compare client.

        Args:
            base_client: The lab instance owning logging and the worker pool
        """
        self._client = base_client

    def comparison_config(self, cfg: RunConfig) -> ComparisonConfig:
        """ComparisonConfig from CLI settings.

        Raises:
            ConfigError: If the data source is a CSV file
        """
        if cfg.data is not None and cfg.data.synthetic is None:
            raise ConfigError("compare needs a synthetic dataset; it draws a fresh one per seed")
        dataset = cfg.data.synthetic if cfg.data is not None else SyntheticSpec(n=30)
        assert dataset is not None
        objectives = [ObjectiveKind.LML, ObjectiveKind.CLML]
        if cfg.objective not in objectives:
            objectives.append(cfg.objective)
        return ComparisonConfig(
            dataset=dataset,
            net=NetSpec.mlp([1, *cfg.net_widths]),
            objectives=objectives,
            max_iters=cfg.optimizer.max_iters,
            grad_tol=cfg.optimizer.grad_tol,
            seeds=seed_range(cfg.seed, cfg.seeds),
            clml=cfg.clml,
            weight_decay=cfg.weight_decay,
        )

    def run(self, cfg: RunConfig) -> CommandResult:
        """Run the comparison over cfg.seeds consecutive seeds starting at cfg.seed."""
        report: ComparisonReport = run_dkl_comparison(self.comparison_config(cfg), self._client.map)
        rows = []
        for run in report.runs:
            for record in run.records:
                rows.append(
                    {
                        "seed": run.seed,
                        "objective": record.objective.value,
                        "test_rmse": record.test_rmse,
                        "test_nlpd": record.test_nlpd,
                        "train_lml": record.train_breakdown.total if record.train_breakdown else None,
                        "mean_abs_offdiag_corr": record.mean_abs_offdiag_corr,
                        "effective_rank": record.effective_rank,
                        "lengthscale": record.hyperparameters.lengthscale
                        if record.hyperparameters
                        else None,
                        "iterations": record.iterations,
                        "error": record.error,
                    }
                )
        return CommandResult(body=report, tables={"records": rows}, passed=True)


class VerifyClient:
    """Checks of the profiling identities."""

    def __init__(self, base_client: BaseLab):
        """Initialize the verify client.

        Args:
            base_client: The lab instance owning logging and the worker pool
        """
        self._client = base_client

    def _row(self, index: int, instance: Instance, tol: float) -> VerifyRow:
        d, h, spec = instance
        h = to_noise_mode(h, NoiseMode.RATIO)
        profiled = profiled_objective(d, h, spec)
        split = logdet_split(d, h, spec)
        stationarity = verify_stationarity(d, h, spec, tol=tol)
        passed = (
            profiled.passes(tol)
            and split.passes(tol)
            and stationarity.stationary
            and stationarity.maximal
        )
        if not passed:
            logger.warning("profiling identities fail on instance %d", index)
        return VerifyRow(
            instance=index,
            family=spec.family,
            n=d.n,
            sigma_f_hat_sq=profiled.sigma_f_hat_sq,
            equivalence_residual=profiled.equivalence_residual,
            data_fit_residual=profiled.data_fit_residual,
            split_residual=split.residual,
            stationarity_gradient=stationarity.gradient,
            maximal=stationarity.maximal,
            passed=passed,
        )

    def run(
        self, cfg: RunConfig, d: Optional[Dataset], descriptor: Optional[DatasetDescriptor]
    ) -> CommandResult:
        """Check the profiled identities on a dataset or on cfg.random random instances."""
        instances = _instances(self._client, cfg, d)
        rows = self._client.map(lambda item: self._row(item[0], item[1], cfg.tol), instances)
        report = VerifyReport(dataset=descriptor, tol=cfg.tol, rows=rows)
        return CommandResult(
            body=report,
            tables={"verify": [row.model_dump() for row in rows]},
            passed=report.passed,
        )


class GradCheckClient:
    """Analytic gradients against finite differences."""

    def __init__(self, base_client: BaseLab):
        """Initialize the gradient-check client.

        Args:
            base_client: The lab instance owning logging and the worker pool
        """
        self._client = base_client

    def _row(self, index: int, instance: Instance, cfg: RunConfig) -> GradCheckRow:
        d, h, spec = instance
        if cfg.objective == ObjectiveKind.PROFILED_LML:
            h = to_noise_mode(h, NoiseMode.RATIO)
        elif cfg.random is not None and index % 4 >= 2:
            # exercise both noise parametrizations across random instances
            h = to_noise_mode(h, NoiseMode.ABSOLUTE)
        obj = Objective(kind=cfg.objective, dataset=d, spec=spec, clml=cfg.clml)
        check = gradient_check(obj, h, cfg.fd_step)

        kernel_errors = [
            e for name, e in zip(check.coordinate_names, check.relative_errors)
            if not name.startswith("net_")
        ]
        net_errors = [
            e for name, e in zip(check.coordinate_names, check.relative_errors)
            if name.startswith("net_")
        ]
        kernel_max = max(kernel_errors, default=0.0)
        net_max = max(net_errors) if net_errors else None
        passed = kernel_max <= cfg.grad_tol_check and (net_max is None or net_max <= NET_GRAD_TOL)
        return GradCheckRow(
            instance=index,
            family=spec.family,
            objective=cfg.objective,
            n=d.n,
            max_relative_error_kernel=kernel_max,
            max_relative_error_net=net_max,
            passed=passed,
            check=check,
        )

    def run(
        self, cfg: RunConfig, d: Optional[Dataset], descriptor: Optional[DatasetDescriptor]
    ) -> CommandResult:
        """Check the configured objective's gradient on a dataset or random instances."""
        instances = _instances(self._client, cfg, d)
        rows = self._client.map(lambda item: self._row(item[0], item[1], cfg), instances)
        report = GradCheckSummary(
            dataset=descriptor, tol=cfg.grad_tol_check, net_tol=NET_GRAD_TOL, rows=rows
        )
        table = [row.model_dump(exclude={"check"}) for row in rows]
        return CommandResult(body=report, tables={"gradcheck": table}, passed=report.passed)


class RecoveryClient:
    """Learned-lengthscale recovery on GP-sampled data."""

    def __init__(self, base_client: BaseLab):
        """Initialize the recovery client.

        Args:
            base_client: The lab instance owning logging and the worker pool
        """
        self._client = base_client

    def run(self, cfg: RunConfig) -> CommandResult:
        """Learn the lengthscale on cfg.seeds GP samples drawn from the synthetic recipe."""
        if cfg.data is not None and cfg.data.synthetic is None:
            raise ConfigError("recover needs a synthetic gp_sample recipe")
        recipe = cfg.data.synthetic if cfg.data is not None else SyntheticSpec()
        assert recipe is not None
        config = RecoveryConfig(
            n=recipe.n,
            lengthscale=recipe.lengthscale,
            signal_var=recipe.signal_var,
            noise_sd=recipe.noise_sd,
            seeds=seed_range(cfg.seed, cfg.seeds),
            max_iters=cfg.optimizer.max_iters,
            grad_tol=cfg.optimizer.grad_tol,
        )
        report: RecoveryReport = run_lengthscale_recovery(config, self._client.map)
        rows = [row.model_dump() for row in report.rows]
        return CommandResult(body=report, tables={"recovery": rows}, passed=True)
