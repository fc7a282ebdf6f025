"""Pydantic models for mllab matrices, datasets, hyperparameters and reports."""

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

FloatArray = NDArray[np.float64]

# exp() of a log-domain parameter must stay a positive finite double
_LOG_MIN = -700.0
_LOG_MAX = 700.0


def _frozen_array(value: Any, ndim: int, name: str) -> FloatArray:
    array = np.array(value, dtype=np.float64)
    if array.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must contain only finite values")
    array.flags.writeable = False
    return array


class LogLevel(str, Enum):
    """Log level options."""

    INFO = "info"
    WARN = "warn"
    ERROR = "error"


class NoiseMode(str, Enum):
    """How log_noise is interpreted."""

    ABSOLUTE = "absolute"
    RATIO = "ratio"


class KernelFamily(str, Enum):
    """Kernel family options."""

    RBF = "rbf"
    DEEP_RBF = "deep_rbf"


class Activation(str, Enum):
    """Feature-network activation options."""

    TANH = "tanh"
    IDENTITY = "identity"


class ObjectiveKind(str, Enum):
    """Trainable objective options."""

    LML = "lml"
    PROFILED_LML = "profiled_lml"
    CLML = "clml"


class StopReason(str, Enum):
    """Why an optimization run stopped."""

    GRADIENT_TOL = "gradient_tol"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAILURE = "line_search_failure"


class SyntheticKind(str, Enum):
    """Synthetic dataset generators."""

    GP_SAMPLE = "gp_sample"
    SINE = "sine"
    STEP = "step"


class Command(str, Enum):
    """CLI subcommands."""

    FIT = "fit"
    SWEEP = "sweep"
    COMPARE = "compare"
    VERIFY = "verify"
    GRADCHECK = "gradcheck"
    RECOVER = "recover"


class Coordinate(str, Enum):
    """Hyperparameter groups that can be held fixed."""

    LENGTHSCALE = "lengthscale"
    SIGNAL_VAR = "signal_var"
    NOISE = "noise"
    NET = "net"


class LabOptions(BaseModel):
    """Runner options."""

    enable_logging: bool = True
    log_level: LogLevel = LogLevel.WARN
    max_workers: int = Field(default=1, ge=1)


class Seed(BaseModel):
    """Seed of a PCG64 random stream."""

    value: int = Field(ge=0, lt=2**64)

    model_config = ConfigDict(frozen=True)

    def generator(self) -> np.random.Generator:
        """Return a fresh PCG64 generator for this seed."""
        return np.random.Generator(np.random.PCG64(self.value))

    def spawn(self, *keys: int) -> "Seed":
        """Derive an independent child seed from integer keys."""
        sequence = np.random.SeedSequence(self.value, spawn_key=tuple(keys))
        return Seed(value=int(sequence.generate_state(1, dtype=np.uint64)[0]))


class SymMatrix(BaseModel):
    """Dense symmetric matrix, symmetrized as (A + A^T) / 2 on construction."""

    entries: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("entries", mode="before")
    @classmethod
    def _symmetrize(cls, value: Any) -> FloatArray:
        array = np.array(value, dtype=np.float64)
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] < 1:
            raise ValueError(f"entries must be a non-empty square matrix, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("entries must contain only finite values")
        array = 0.5 * (array + array.T)
        array.flags.writeable = False
        return array

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))


class CholFactor(BaseModel):
    """Lower Cholesky factor of A + jitter_used * I."""

    L: np.ndarray
    jitter_used: float = Field(default=0.0, ge=0.0)

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("L", mode="before")
    @classmethod
    def _check_lower(cls, value: Any) -> FloatArray:
        array = _frozen_array(value, 2, "L")
        if array.shape[0] != array.shape[1] or array.shape[0] < 1:
            raise ValueError(f"L must be a non-empty square matrix, got {array.shape}")
        if np.any(np.triu(array, 1) != 0.0):
            raise ValueError("L must be lower triangular")
        if np.any(np.diag(array) < 0.0):
            raise ValueError("L must have a nonnegative diagonal")
        return array

    @property
    def n(self) -> int:
        return int(self.L.shape[0])


class NetSpec(BaseModel):
    """Architecture of the feature network: widths plus one activation per layer."""

    layer_widths: List[int]
    activations: List[Activation]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_layers(self) -> "NetSpec":
        if len(self.layer_widths) < 2:
            raise ValueError("a network needs at least one layer transition")
        if any(width < 1 for width in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if len(self.activations) != len(self.layer_widths) - 1:
            raise ValueError(
                f"expected {len(self.layer_widths) - 1} activations, got {len(self.activations)}"
            )
        return self

    @classmethod
    def mlp(
        cls,
        layer_widths: List[int],
        hidden: Activation = Activation.TANH,
        output: Activation = Activation.IDENTITY,
    ) -> "NetSpec":
        """Build a spec with one hidden activation and a separate output activation."""
        transitions = len(layer_widths) - 1
        return cls(layer_widths=layer_widths, activations=[hidden] * (transitions - 1) + [output])

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_params(self) -> int:
        return sum(
            (fan_in + 1) * fan_out
            for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:])
        )


class NetWeights(BaseModel):
    """Per-layer weights and biases.

    The flattened order is W_0 (row-major), b_0, W_1, b_1, ...
    """

    spec: NetSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            data["weights"] = [_frozen_array(w, 2, "weight") for w in data.get("weights", [])]
            data["biases"] = [_frozen_array(b, 1, "bias") for b in data.get("biases", [])]
        return data

    @model_validator(mode="after")
    def _check_shapes(self) -> "NetWeights":
        widths = self.spec.layer_widths
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise ValueError("one weight matrix and one bias vector are needed per layer")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[layer + 1], widths[layer]):
                raise ValueError(f"layer {layer} weight has shape {w.shape}")
            if b.shape != (widths[layer + 1],):
                raise ValueError(f"layer {layer} bias has shape {b.shape}")
        return self

    @property
    def size(self) -> int:
        return self.spec.n_params

    def flatten(self) -> FloatArray:
        parts: List[FloatArray] = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, spec: NetSpec, vector: Any) -> "NetWeights":
        flat = np.asarray(vector, dtype=np.float64)
        if flat.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} values, got shape {flat.shape}")
        weights, biases = [], []
        offset = 0
        for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
            weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in))
            offset += fan_in * fan_out
            biases.append(flat[offset : offset + fan_out])
            offset += fan_out
        return cls(spec=spec, weights=weights, biases=biases)


class Hyperparameters(BaseModel):
    """Log-domain kernel and noise hyperparameters.

    In ratio mode log_noise holds the noise ratio and the effective noise variance is
    ratio * signal_var. log_noise = -inf encodes a noise variance of exactly zero.
    """

    log_lengthscale: float
    log_signal_var: float
    log_noise: float
    noise_mode: NoiseMode = NoiseMode.ABSOLUTE
    net_weights: Optional[NetWeights] = None

    model_config = ConfigDict(frozen=True)

    @field_validator("log_lengthscale", "log_signal_var")
    @classmethod
    def _check_positive_domain(cls, value: float) -> float:
        if not math.isfinite(value) or not _LOG_MIN < value < _LOG_MAX:
            raise ValueError(f"log-domain value {value} does not exponentiate to a positive float")
        return value

    @field_validator("log_noise")
    @classmethod
    def _check_noise_domain(cls, value: float) -> float:
        if value == -math.inf:
            return value
        if not math.isfinite(value) or not _LOG_MIN < value < _LOG_MAX:
            raise ValueError(f"log_noise {value} does not exponentiate to a nonnegative float")
        return value

    @classmethod
    def from_values(
        cls,
        lengthscale: float,
        signal_var: float = 1.0,
        noise: float = 0.0,
        noise_mode: NoiseMode = NoiseMode.ABSOLUTE,
        net_weights: Optional[NetWeights] = None,
    ) -> "Hyperparameters":
        """Build hyperparameters from natural-domain values."""
        if lengthscale <= 0 or signal_var <= 0 or noise < 0:
            raise ValueError("lengthscale and signal_var must be positive, noise nonnegative")
        return cls(
            log_lengthscale=math.log(lengthscale),
            log_signal_var=math.log(signal_var),
            log_noise=math.log(noise) if noise > 0 else -math.inf,
            noise_mode=noise_mode,
            net_weights=net_weights,
        )

    @property
    def lengthscale(self) -> float:
        return math.exp(self.log_lengthscale)

    @property
    def signal_var(self) -> float:
        return math.exp(self.log_signal_var)

    @property
    def noise_var(self) -> float:
        """Effective noise variance added to the kernel diagonal."""
        if self.noise_mode == NoiseMode.RATIO:
            return math.exp(self.log_noise) * self.signal_var
        return math.exp(self.log_noise)

    @property
    def noise_ratio(self) -> float:
        """Noise variance in units of the signal variance."""
        if self.noise_mode == NoiseMode.RATIO:
            return math.exp(self.log_noise)
        return math.exp(self.log_noise) / self.signal_var

    @property
    def size(self) -> int:
        return 3 + (self.net_weights.size if self.net_weights is not None else 0)

    def coordinate_names(self) -> List[str]:
        names = ["log_lengthscale", "log_signal_var", "log_noise"]
        if self.net_weights is not None:
            names.extend(f"net_{i}" for i in range(self.net_weights.size))
        return names

    def to_vector(self) -> FloatArray:
        head = np.array([self.log_lengthscale, self.log_signal_var, self.log_noise])
        if self.net_weights is None:
            return head
        return np.concatenate([head, self.net_weights.flatten()])

    def with_vector(self, vector: Any) -> "Hyperparameters":
        values = np.asarray(vector, dtype=np.float64)
        if values.shape != (self.size,):
            raise ValueError(f"expected {self.size} values, got shape {values.shape}")
        net = None
        if self.net_weights is not None:
            net = NetWeights.unflatten(self.net_weights.spec, values[3:])
        return Hyperparameters(
            log_lengthscale=float(values[0]),
            log_signal_var=float(values[1]),
            log_noise=float(values[2]),
            noise_mode=self.noise_mode,
            net_weights=net,
        )

    def unit_amplitude(self) -> "Hyperparameters":
        """Same kernel with signal variance 1 and log_noise read as the noise ratio."""
        return self.model_copy(update={"log_signal_var": 0.0, "noise_mode": NoiseMode.RATIO})

    def summary(self) -> "HyperparameterSummary":
        norm = 0.0
        if self.net_weights is not None:
            norm = float(np.linalg.norm(self.net_weights.flatten()))
        return HyperparameterSummary(
            lengthscale=self.lengthscale,
            signal_var=self.signal_var,
            noise_var=self.noise_var,
            noise_mode=self.noise_mode,
            n_net_weights=self.net_weights.size if self.net_weights is not None else 0,
            net_weight_norm=norm,
        )


class HyperparameterSummary(BaseModel):
    """Natural-domain summary of a hyperparameter setting."""

    lengthscale: float
    signal_var: float
    noise_var: float
    noise_mode: NoiseMode
    n_net_weights: int = 0
    net_weight_norm: float = 0.0


class KernelSpec(BaseModel):
    """Kernel family; every family is sigma_f^2 times a unit-amplitude base kernel."""

    family: KernelFamily = KernelFamily.RBF
    net: Optional[NetSpec] = None

    model_config = ConfigDict(frozen=True)


class KernelGrads(BaseModel):
    """Derivatives of the kernel matrix, one matrix per hyperparameter.

    net_weights stacks dK/dw_p along the first axis in flattened weight order.
    """

    log_lengthscale: SymMatrix
    log_signal_var: SymMatrix
    net_weights: Optional[np.ndarray] = None

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class Dataset(BaseModel):
    """N input rows of dimension D and N scalar targets."""

    X: np.ndarray
    y: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("X", mode="before")
    @classmethod
    def _as_matrix(cls, value: Any) -> FloatArray:
        array = np.array(value, dtype=np.float64)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        return _frozen_array(array, 2, "X")

    @field_validator("y", mode="before")
    @classmethod
    def _as_vector(cls, value: Any) -> FloatArray:
        return _frozen_array(np.ravel(np.array(value, dtype=np.float64)), 1, "y")

    @model_validator(mode="after")
    def _check_rows(self) -> "Dataset":
        if self.y.shape[0] < 1:
            raise ValueError("a dataset needs at least one row")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]}")
        return self

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def subset(self, indices: Any) -> "Dataset":
        index = np.asarray(indices, dtype=np.int64)
        return Dataset(X=self.X[index], y=self.y[index])


class DatasetDescriptor(BaseModel):
    """Where a dataset came from, with a content hash."""

    source: str
    n: int
    d: int
    sha256: str


class MLLBreakdown(BaseModel):
    """Log marginal likelihood split into data fit, complexity penalty and constant."""

    data_fit: float = Field(le=0.0)
    complexity: float
    constant: float = Field(lt=0.0)
    jitter_used: float = 0.0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total(self) -> float:
        return self.data_fit + self.complexity + self.constant


class Posterior(BaseModel):
    """Predictive mean and variance at test inputs."""

    mean: np.ndarray
    variance: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class PredictiveMetrics(BaseModel):
    """Test-set error of a posterior."""

    rmse: float
    mean_nlpd: float


class ProfiledResult(BaseModel):
    """Profiled objective terms and their check against the full LML."""

    n: int
    sigma_f_hat_sq: float = Field(gt=0.0)
    term_data_refit: float
    term_logdet_hat: float
    profiled_total: float
    induced: MLLBreakdown
    equivalence_residual: float
    data_fit_residual: float

    def passes(self, tol: float = 1e-8) -> bool:
        scale = max(1.0, abs(self.profiled_total))
        return self.equivalence_residual <= tol * scale and self.data_fit_residual <= tol * max(
            1.0, self.n / 2.0
        )


class LogdetSplit(BaseModel):
    """Both sides of the signal-variance log-determinant split."""

    lhs: float
    rhs: float

    @computed_field  # type: ignore[prop-decorator]
    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    def passes(self, tol: float = 1e-8) -> bool:
        return self.residual <= tol * max(1.0, abs(self.lhs))


class StationarityReport(BaseModel):
    """Whether the closed-form signal variance maximizes the LML."""

    sigma_f_hat_sq: float
    gradient: float
    lml_at_optimum: float
    lml_below: float
    lml_above: float
    tol: float = 1e-8

    @computed_field  # type: ignore[prop-decorator]
    @property
    def stationary(self) -> bool:
        return abs(self.gradient) <= self.tol

    @computed_field  # type: ignore[prop-decorator]
    @property
    def maximal(self) -> bool:
        return self.lml_at_optimum > self.lml_below and self.lml_at_optimum > self.lml_above


class GridArgmaxReport(BaseModel):
    """Profiled objective and per-point maximized full LML over a lengthscale grid."""

    lengthscales: List[float]
    profiled_values: List[float]
    joint_values: List[float]
    profiled_argmax: int
    joint_argmax: int

    @computed_field  # type: ignore[prop-decorator]
    @property
    def agree(self) -> bool:
        return self.profiled_argmax == self.joint_argmax


class ClmlConfig(BaseModel):
    """Conditioning-set size, permutation count and seed of the CLML."""

    m: Optional[int] = Field(default=None, ge=0)
    permutations: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)
    shuffle: bool = True

    def conditioning_size(self, n: int) -> int:
        # ceil(0.8 n) in integer arithmetic
        m = -(-4 * n // 5) if self.m is None else self.m
        if m > n:
            raise ValueError(f"conditioning size {m} exceeds dataset size {n}")
        return m


class Objective(BaseModel):
    """A trainable objective bound to a dataset and kernel."""

    kind: ObjectiveKind = ObjectiveKind.LML
    dataset: Dataset
    spec: KernelSpec = Field(default_factory=KernelSpec)
    clml: ClmlConfig = Field(default_factory=ClmlConfig)
    fixed: List[Coordinate] = Field(default_factory=list)
    weight_decay: float = Field(default=0.0, ge=0.0)

    model_config = ConfigDict(frozen=True)


class OptimizerConfig(BaseModel):
    """Gradient-ascent settings."""

    max_iters: int = Field(default=200, ge=0)
    grad_tol: float = Field(default=1e-6, gt=0.0)
    seed: int = Field(default=0, ge=0)
    initial_step: float = Field(default=0.01, gt=0.0)
    max_step: float = Field(default=10.0, gt=0.0)
    min_step: float = Field(default=1e-14, gt=0.0)
    armijo_c1: float = Field(default=1e-4, gt=0.0, lt=1.0)
    log_every: int = Field(default=25, ge=1)


class OptStep(BaseModel):
    """One accepted iterate.

    theta holds h.to_vector(); a zero noise variance (log_noise = -inf) is stored as None.
    """

    theta: List[Optional[float]]
    value: float
    grad_max_norm: float
    step: float


class OptTrace(BaseModel):
    """History of an optimization run."""

    coordinate_names: List[str]
    iterations: List[OptStep]
    converged: bool
    reason: StopReason

    @property
    def final(self) -> OptStep:
        return self.iterations[-1]


class GradientCheckReport(BaseModel):
    """Analytic gradient against central finite differences."""

    coordinate_names: List[str]
    analytic: List[float]
    numeric: List[float]
    relative_errors: List[float]
    step: float

    @computed_field  # type: ignore[prop-decorator]
    @property
    def max_relative_error(self) -> float:
        return max(self.relative_errors, default=0.0)


class SpectrumDiagnostics(BaseModel):
    """Eigen-structure and overcorrelation summary of a kernel matrix.

    logdet is None when the matrix has a nonpositive eigenvalue.
    """

    eigenvalues: List[float]
    logdet: Optional[float]
    effective_rank: float
    mean_abs_offdiag_corr: float = Field(ge=0.0, le=1.0)


class SyntheticSpec(BaseModel):
    """Recipe of a synthetic dataset."""

    kind: SyntheticKind = SyntheticKind.GP_SAMPLE
    n: int = Field(default=100, ge=1)
    noise_sd: float = Field(default=0.1, ge=0.0)
    seed: int = Field(default=0, ge=0)
    lengthscale: float = Field(default=1.0, gt=0.0)
    signal_var: float = Field(default=1.0, gt=0.0)
    lo: float = 0.0
    hi: float = 10.0


class SweepRow(BaseModel):
    """One lengthscale of a sweep."""

    lengthscale: float
    data_fit: float
    complexity: float
    total: float
    logdet: Optional[float]
    effective_rank: float
    mean_abs_offdiag_corr: float
    # None when every target is zero
    sigma_f_hat_sq: Optional[float] = None
    term_data_refit: Optional[float] = None
    term_logdet_hat: Optional[float] = None
    profiled_total: Optional[float] = None


class SweepReport(BaseModel):
    """LML terms along a lengthscale grid."""

    dataset: Optional[DatasetDescriptor] = None
    rows: List[SweepRow]
    argmax_row: int
    signal_var: float
    noise_var: float
    overcorrelation_metric: str = "mean absolute off-diagonal of D^-1/2 K D^-1/2"


class ComparisonRecord(BaseModel):
    """Outcome of training one objective in a comparison run."""

    objective: ObjectiveKind
    hyperparameters: Optional[HyperparameterSummary] = None
    train_breakdown: Optional[MLLBreakdown] = None
    test_rmse: Optional[float] = None
    test_nlpd: Optional[float] = None
    mean_abs_offdiag_corr: Optional[float] = None
    effective_rank: Optional[float] = None
    iterations: int = 0
    stop_reason: Optional[StopReason] = None
    error: Optional[str] = None


class ComparisonRun(BaseModel):
    """All objectives trained on one seed."""

    seed: int
    n_train: int
    n_test: int
    records: List[ComparisonRecord]


class ComparisonConfig(BaseModel):
    """Settings of an LML versus CLML deep-kernel comparison."""

    dataset: SyntheticSpec = Field(default_factory=lambda: SyntheticSpec(n=30))
    net: NetSpec = Field(default_factory=lambda: NetSpec.mlp([1, 16, 16, 2]))
    objectives: List[ObjectiveKind] = Field(
        default_factory=lambda: [ObjectiveKind.LML, ObjectiveKind.CLML]
    )
    max_iters: int = Field(default=100, ge=0)
    grad_tol: float = Field(default=1e-6, gt=0.0)
    seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    clml: ClmlConfig = Field(default_factory=ClmlConfig)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    weight_decay: float = Field(default=0.0, ge=0.0)


class ComparisonReport(BaseModel):
    """Per-seed comparison runs and their median test RMSE."""

    config: ComparisonConfig
    runs: List[ComparisonRun]
    median_test_rmse: Dict[str, Optional[float]]
    overcorrelation_metric: str = "mean absolute off-diagonal of D^-1/2 K D^-1/2"


class RecoveryConfig(BaseModel):
    """Settings of the learned-lengthscale experiment on GP-sampled data."""

    n: int = Field(default=100, ge=2)
    lengthscale: float = Field(default=1.0, gt=0.0)
    signal_var: float = Field(default=1.0, gt=0.0)
    noise_sd: float = Field(default=0.1, ge=0.0)
    seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    max_iters: int = Field(default=300, ge=0)
    grad_tol: float = Field(default=1e-6, gt=0.0)
    band: Tuple[float, float] = (0.5, 2.0)


class RecoveryRow(BaseModel):
    """Learned lengthscale and penalty comparison for one seed."""

    seed: int
    learned_lengthscale: float
    in_band: bool
    far_lengthscale: float
    complexity_at_truth: float
    complexity_at_far: float
    total_at_truth: float
    total_at_far: float

    @computed_field  # type: ignore[prop-decorator]
    @property
    def penalty_prefers_far(self) -> bool:
        return self.complexity_at_far > self.complexity_at_truth


class RecoveryReport(BaseModel):
    """Learned lengthscales across seeds."""

    config: RecoveryConfig
    rows: List[RecoveryRow]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def fraction_in_band(self) -> float:
        if not self.rows:
            return 0.0
        return sum(row.in_band for row in self.rows) / len(self.rows)


class DataSource(BaseModel):
    """A CSV path or a synthetic recipe."""

    csv: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None

    @model_validator(mode="after")
    def _one_source(self) -> "DataSource":
        if (self.csv is None) == (self.synthetic is None):
            raise ValueError("exactly one of csv or synthetic must be given")
        return self


class RunConfig(BaseModel):
    """Everything needed to re-run one CLI command."""

    command: Command
    data: Optional[DataSource] = None
    kernel: KernelFamily = KernelFamily.RBF
    net_widths: List[int] = Field(default_factory=lambda: [16, 16, 2])
    objective: ObjectiveKind = ObjectiveKind.LML
    noise_mode: NoiseMode = NoiseMode.ABSOLUTE
    lengthscale: Optional[float] = Field(default=None, gt=0.0)
    signal_var: Optional[float] = Field(default=None, gt=0.0)
    noise: Optional[float] = Field(default=None, ge=0.0)
    fixed: List[Coordinate] = Field(default_factory=list)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    clml: ClmlConfig = Field(default_factory=ClmlConfig)
    weight_decay: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0)
    grid: Optional[str] = None
    random: Optional[int] = Field(default=None, ge=1)
    seeds: int = Field(default=10, ge=1)
    test_fraction: float = Field(default=0.0, ge=0.0, lt=1.0)
    tol: float = Field(default=1e-8, gt=0.0)
    grad_tol_check: float = Field(default=1e-5, gt=0.0)
    fd_step: float = Field(default=1e-6, gt=0.0)
    output: Optional[str] = None


class FitReport(BaseModel):
    """Result of training one objective on one dataset."""

    dataset: DatasetDescriptor
    objective: ObjectiveKind
    kernel: KernelFamily
    initial: HyperparameterSummary
    hyperparameters: HyperparameterSummary
    breakdown: MLLBreakdown
    trace: OptTrace
    train_metrics: PredictiveMetrics
    test_metrics: Optional[PredictiveMetrics] = None


class VerifyRow(BaseModel):
    """Profiling identities checked on one instance."""

    instance: int
    family: KernelFamily
    n: int
    sigma_f_hat_sq: float
    equivalence_residual: float
    data_fit_residual: float
    split_residual: float
    stationarity_gradient: float
    maximal: bool
    passed: bool


class VerifyReport(BaseModel):
    """Profiling identities across instances."""

    dataset: Optional[DatasetDescriptor] = None
    tol: float
    rows: List[VerifyRow]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)


class GradCheckRow(BaseModel):
    """Gradient check of one objective on one instance."""

    instance: int
    family: KernelFamily
    objective: ObjectiveKind
    n: int
    max_relative_error_kernel: float
    max_relative_error_net: Optional[float] = None
    passed: bool
    check: GradientCheckReport


class GradCheckSummary(BaseModel):
    """Gradient checks across instances.

    Network weight coordinates are held to net_tol, all others to tol.
    """

    dataset: Optional[DatasetDescriptor] = None
    tol: float
    net_tol: float
    rows: List[GradCheckRow]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)
