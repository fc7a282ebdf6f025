"""Experiments: synthetic data, spectrum diagnostics, lengthscale sweeps and comparisons.

Every routine that runs independent jobs takes a ``map_fn`` with the signature of the
builtin ``map``; results are consumed in input order, so a thread pool map gives the
same report as a sequential one.
"""

import logging
import math
from typing import Any, Callable, Iterable, List, Sequence, Tuple

import numpy as np

from .base import MLLabError
from .feature_net import net_init
from .gp import log_marginal_likelihood, noisy_kernel_matrix, posterior_predict, predictive_metrics
from .kernels import kernel_matrix, max_pairwise_distance, median_pairwise_distance
from .models import (
    ComparisonConfig,
    ComparisonRecord,
    ComparisonReport,
    ComparisonRun,
    Dataset,
    Hyperparameters,
    KernelFamily,
    KernelSpec,
    NetSpec,
    NoiseMode,
    Objective,
    ObjectiveKind,
    OptimizerConfig,
    RecoveryConfig,
    RecoveryReport,
    RecoveryRow,
    Seed,
    SpectrumDiagnostics,
    SweepReport,
    SweepRow,
    SymMatrix,
    SyntheticKind,
    SyntheticSpec,
)
from .numerics import cholesky_with_jitter, mvn_sample, sym_eigenvalues
from .objectives import initial_hyperparameters, to_noise_mode
from .optimizer import final_hyperparameters, optimize
from .profiled import induced_hyperparameters, profiled_objective, profiled_signal_variance

logger = logging.getLogger(__name__)

MapFn = Callable[..., Iterable[Any]]

# eigenvalues below this fraction of the largest one are treated as this fraction
_SPECTRUM_FLOOR = 1e-12


def generate_synthetic(
    kind: SyntheticKind,
    n: int,
    noise_sd: float,
    seed: Seed,
    lengthscale: float = 1.0,
    signal_var: float = 1.0,
    lo: float = 0.0,
    hi: float = 10.0,
) -> Dataset:
    """Draw a 1-D regression dataset.

    Inputs are uniform on [lo, hi]. gp_sample draws the latent function from an RBF GP
    prior, sine is sin(2 pi x / 4) and step is sign(x - midpoint). Independent streams
    spawned from the seed drive the inputs, the latent draw and the noise.

    Args:
        kind: Target family
        n: Number of points
        noise_sd: Standard deviation of the Gaussian observation noise
        seed: Root seed
        lengthscale: Prior lengthscale for gp_sample
        signal_var: Prior signal variance for gp_sample
        lo: Lower input bound
        hi: Upper input bound

    Returns:
        Dataset: N x 1 inputs and N targets

    Raises:
        ValueError: For n < 1, negative noise or an empty input range
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be nonnegative, got {noise_sd}")
    if not hi > lo:
        raise ValueError(f"input range [{lo}, {hi}] is empty")

    x = seed.spawn(0).generator().uniform(lo, hi, size=n)
    if kind == SyntheticKind.GP_SAMPLE:
        prior = Hyperparameters.from_values(lengthscale=lengthscale, signal_var=signal_var)
        factor = cholesky_with_jitter(kernel_matrix(x, prior, KernelSpec()))
        f = mvn_sample(np.zeros(n), factor, seed.spawn(1))
    elif kind == SyntheticKind.SINE:
        f = np.sin(2.0 * np.pi * x / 4.0)
    else:
        f = np.sign(x - 0.5 * (lo + hi))

    y = f + noise_sd * seed.spawn(2).generator().standard_normal(n)
    return Dataset(X=x.reshape(-1, 1), y=y)


def synthesize(spec: SyntheticSpec) -> Dataset:
    """generate_synthetic from a recipe."""
    return generate_synthetic(
        spec.kind,
        spec.n,
        spec.noise_sd,
        Seed(value=spec.seed),
        lengthscale=spec.lengthscale,
        signal_var=spec.signal_var,
        lo=spec.lo,
        hi=spec.hi,
    )


def spectrum_diagnostics(k: SymMatrix) -> SpectrumDiagnostics:
    """Eigenvalues, log-determinant, effective rank and mean off-diagonal correlation.

    The effective rank is exp of the entropy of the normalized eigenvalues, with
    eigenvalues floored relative to the largest one. Correlations come from
    D^-1/2 K D^-1/2 with D = diag(K).

    Raises:
        NoConvergenceError: If the eigen-solver fails
    """
    eig = sym_eigenvalues(k)
    n = k.n
    log_det = float(np.sum(np.log(eig))) if np.all(eig > 0.0) else None

    top = float(eig[0]) if eig[0] > 0.0 else 1.0
    p = np.maximum(eig, _SPECTRUM_FLOOR * top)
    p = p / p.sum()
    entropy = -float(np.sum(p * np.log(p)))
    effective_rank = min(max(math.exp(entropy), 1.0), float(n))

    corr = 0.0
    if n > 1:
        diag = np.diag(k.entries)
        scale = np.sqrt(np.maximum(diag, np.finfo(np.float64).tiny))
        c = k.entries / np.outer(scale, scale)
        off = ~np.eye(n, dtype=bool)
        corr = min(float(np.mean(np.abs(c[off]))), 1.0)

    return SpectrumDiagnostics(
        eigenvalues=eig.tolist(),
        logdet=log_det,
        effective_rank=effective_rank,
        mean_abs_offdiag_corr=corr,
    )


def log_grid(lo: float, hi: float, count: int) -> List[float]:
    """count log-spaced values from lo to hi inclusive."""
    if lo <= 0 or hi < lo or count < 1:
        raise ValueError(f"invalid log grid {lo}:{hi}:{count}")
    if count == 1:
        return [float(lo)]
    return np.geomspace(lo, hi, count).tolist()


def default_grid(d: Dataset, count: int = 25) -> List[float]:
    """Log grid from 0.1 to 1000 times the median pairwise input distance."""
    scale = median_pairwise_distance(d.X)
    return log_grid(0.1 * scale, 1000.0 * scale, count)


def _sweep_row(d: Dataset, h: Hyperparameters, spec: KernelSpec) -> SweepRow:
    breakdown = log_marginal_likelihood(d, h, spec)
    # diagnostics of K + sigma_n^2 I, the matrix whose log-determinant is the complexity
    diag = spectrum_diagnostics(noisy_kernel_matrix(d.X, h, spec))
    # the profiled amplitude is undefined for all-zero targets
    profiled = None
    if np.any(d.y != 0.0):
        profiled = profiled_objective(d, to_noise_mode(h, NoiseMode.RATIO), spec)
    return SweepRow(
        lengthscale=h.lengthscale,
        data_fit=breakdown.data_fit,
        complexity=breakdown.complexity,
        total=breakdown.total,
        logdet=diag.logdet,
        effective_rank=diag.effective_rank,
        mean_abs_offdiag_corr=diag.mean_abs_offdiag_corr,
        sigma_f_hat_sq=profiled.sigma_f_hat_sq if profiled else None,
        term_data_refit=profiled.term_data_refit if profiled else None,
        term_logdet_hat=profiled.term_logdet_hat if profiled else None,
        profiled_total=profiled.profiled_total if profiled else None,
    )


def run_lengthscale_sweep(
    d: Dataset,
    grid: Sequence[float],
    h_base: Hyperparameters,
    spec: KernelSpec,
    map_fn: MapFn = map,
) -> SweepReport:
    """LML terms, spectrum and profiled terms at every lengthscale of a grid.

    Signal and noise variance stay at h_base's values. The argmax row is the first row
    with the largest total.

    Raises:
        ValueError: If the grid is empty
        NotPositiveDefiniteError: If a grid point cannot be factored
    """
    if len(grid) == 0:
        raise ValueError("lengthscale grid must not be empty")

    def row_at(lengthscale: float) -> SweepRow:
        point = h_base.model_copy(update={"log_lengthscale": math.log(lengthscale)})
        return _sweep_row(d, point, spec)

    rows = list(map_fn(row_at, list(grid)))
    argmax = int(np.argmax([row.total for row in rows]))
    logger.info("sweep over %d lengthscales: argmax at l = %.6g", len(rows), rows[argmax].lengthscale)
    return SweepReport(
        rows=rows,
        argmax_row=argmax,
        signal_var=h_base.signal_var,
        noise_var=h_base.noise_var,
    )


def train_test_split(d: Dataset, train_fraction: float, seed: Seed) -> Tuple[Dataset, Dataset]:
    """Random split keeping at least one point on each side."""
    if d.n < 2:
        raise ValueError("a train/test split needs at least two points")
    n_train = min(max(int(round(train_fraction * d.n)), 1), d.n - 1)
    order = seed.generator().permutation(d.n)
    return d.subset(np.sort(order[:n_train])), d.subset(np.sort(order[n_train:]))


def _evaluate(
    kind: ObjectiveKind,
    train: Dataset,
    test: Dataset,
    h: Hyperparameters,
    spec: KernelSpec,
    iterations: int,
    stop_reason: Any,
) -> ComparisonRecord:
    breakdown = log_marginal_likelihood(train, h, spec)
    metrics = predictive_metrics(posterior_predict(train, h, spec, test.X), test.y)
    diag = spectrum_diagnostics(kernel_matrix(train.X, h, spec))
    if not (math.isfinite(metrics.rmse) and math.isfinite(metrics.mean_nlpd)):
        raise MLLabError("non-finite test metrics")
    return ComparisonRecord(
        objective=kind,
        hyperparameters=h.summary(),
        train_breakdown=breakdown,
        test_rmse=metrics.rmse,
        test_nlpd=metrics.mean_nlpd,
        mean_abs_offdiag_corr=diag.mean_abs_offdiag_corr,
        effective_rank=diag.effective_rank,
        iterations=iterations,
        stop_reason=stop_reason,
    )


def train_objective(
    kind: ObjectiveKind,
    train: Dataset,
    h0: Hyperparameters,
    spec: KernelSpec,
    optimizer: OptimizerConfig,
    **objective_args: Any,
) -> Tuple[Hyperparameters, Any]:
    """Optimize one objective from h0 and return full hyperparameters with the trace.

    profiled_lml is optimized in ratio mode and its result carries the closed-form
    signal variance.
    """
    start = to_noise_mode(h0, NoiseMode.RATIO) if kind == ObjectiveKind.PROFILED_LML else h0
    obj = Objective(kind=kind, dataset=train, spec=spec, **objective_args)
    trace = optimize(obj, start, optimizer)
    h = final_hyperparameters(start, trace)
    if kind == ObjectiveKind.PROFILED_LML:
        h = induced_hyperparameters(h, profiled_signal_variance(train, h, spec))
    return h, trace


def _comparison_run(config: ComparisonConfig, seed: int) -> ComparisonRun:
    root = Seed(value=seed)
    data = synthesize(config.dataset.model_copy(update={"seed": seed}))
    if config.net.input_dim != data.d:
        raise ValueError(
            f"network input width {config.net.input_dim} does not match data dimension {data.d}"
        )
    train, test = train_test_split(data, config.train_fraction, root.spawn(1))
    spec = KernelSpec(family=KernelFamily.DEEP_RBF, net=config.net)
    h0 = initial_hyperparameters(train, spec, root.spawn(2))
    optimizer = OptimizerConfig(max_iters=config.max_iters, grad_tol=config.grad_tol, seed=seed)

    records: List[ComparisonRecord] = []
    for kind in config.objectives:
        try:
            h, trace = train_objective(
                kind,
                train,
                h0,
                spec,
                optimizer,
                clml=config.clml,
                weight_decay=config.weight_decay,
            )
            records.append(
                _evaluate(kind, train, test, h, spec, len(trace.iterations) - 1, trace.reason)
            )
        except MLLabError as e:
            logger.error("seed %d, objective %s failed: %s", seed, kind.value, e)
            records.append(ComparisonRecord(objective=kind, error=str(e)))
    return ComparisonRun(seed=seed, n_train=train.n, n_test=test.n, records=records)


def run_dkl_comparison(
    config: ComparisonConfig,
    map_fn: MapFn = map,
) -> ComparisonReport:
    """Train a deep kernel with each objective on seeded synthetic data.

    Every objective of a seed starts from the same initialization. An objective that
    fails numerically gets a record with its error and no metrics; the other seeds and
    objectives continue.

    Args:
        config: Comparison settings
        map_fn: map-like callable used to run seeds (default: builtin map)

    Returns:
        ComparisonReport: Per-seed records and the median test RMSE per objective
    """
    runs = list(map_fn(lambda s: _comparison_run(config, s), list(config.seeds)))

    medians = {}
    for kind in config.objectives:
        values = [
            r.test_rmse
            for run in runs
            for r in run.records
            if r.objective == kind and r.test_rmse is not None
        ]
        medians[kind.value] = float(np.median(values)) if values else None
    return ComparisonReport(config=config, runs=runs, median_test_rmse=medians)


def _recovery_row(config: RecoveryConfig, seed: int) -> RecoveryRow:
    data = generate_synthetic(
        SyntheticKind.GP_SAMPLE,
        config.n,
        config.noise_sd,
        Seed(value=seed),
        lengthscale=config.lengthscale,
        signal_var=config.signal_var,
    )
    spec = KernelSpec()
    h0 = initial_hyperparameters(data, spec, Seed(value=seed).spawn(3))
    h, _ = train_objective(
        ObjectiveKind.LML,
        data,
        h0,
        spec,
        OptimizerConfig(max_iters=config.max_iters, grad_tol=config.grad_tol, seed=seed),
    )

    far = 100.0 * max_pairwise_distance(data.X)
    truth = Hyperparameters.from_values(
        lengthscale=config.lengthscale,
        signal_var=config.signal_var,
        noise=config.noise_sd**2,
    )
    at_truth = log_marginal_likelihood(data, truth, spec)
    at_far = log_marginal_likelihood(
        data, truth.model_copy(update={"log_lengthscale": math.log(far)}), spec
    )
    lo, hi = config.band
    return RecoveryRow(
        seed=seed,
        learned_lengthscale=h.lengthscale,
        in_band=lo * config.lengthscale <= h.lengthscale <= hi * config.lengthscale,
        far_lengthscale=far,
        complexity_at_truth=at_truth.complexity,
        complexity_at_far=at_far.complexity,
        total_at_truth=at_truth.total,
        total_at_far=at_far.total,
    )


def run_lengthscale_recovery(
    config: RecoveryConfig,
    map_fn: MapFn = map,
) -> RecoveryReport:
    """Learn the RBF lengthscale by LML ascent on GP-sampled data, one run per seed.

    Each row also compares the complexity term at the true lengthscale with the one at
    a lengthscale far beyond the data range, both at the true variances.
    """
    rows = list(map_fn(lambda s: _recovery_row(config, s), list(config.seeds)))
    return RecoveryReport(config=config, rows=rows)


def random_instance(
    seed: Seed, family: KernelFamily = KernelFamily.RBF
) -> Tuple[Dataset, Hyperparameters, KernelSpec]:
    """Random small problem for identity and gradient checks.

    N is in [2, 50] and D in {1, 2}. Hyperparameters are in ratio mode with a signal
    variance away from 1 so that scale-dependent mistakes show up.
    """
    rng = seed.generator()
    n = int(rng.integers(2, 51))
    dim = int(rng.integers(1, 3))
    X = rng.uniform(0.0, 5.0, size=(n, dim))
    y = rng.standard_normal(n)

    spec = KernelSpec()
    net = None
    if family == KernelFamily.DEEP_RBF:
        spec = KernelSpec(family=family, net=NetSpec.mlp([dim, 4, 2]))
        assert spec.net is not None
        net = net_init(spec.net, seed.spawn(1))

    h = Hyperparameters(
        log_lengthscale=float(rng.uniform(math.log(0.3), math.log(3.0))),
        log_signal_var=float(rng.uniform(math.log(0.2), math.log(5.0))),
        log_noise=float(rng.uniform(math.log(1e-2), 0.0)),
        noise_mode=NoiseMode.RATIO,
        net_weights=net,
    )
    return Dataset(X=X, y=y), h, spec


def seed_range(start: int, count: int) -> List[int]:
    return list(range(start, start + count))

