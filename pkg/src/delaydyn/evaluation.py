"""Evaluation harness: time-based CV, accuracy and informativeness measures,
and paired statistical comparison of prediction modes.

Accuracy follows the standardized-accuracy convention: a model's MAE is
compared to the exact expected MAE of random guessing (each case estimated
by a uniformly random other case's actual). Informativeness is the relative
width of the 90% credible interval. Mode comparisons use the Wilcoxon
signed-rank test on per-epic absolute errors plus the Vargha-Delaney A12
effect size (values above 0.5 mean the first sample is larger).
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .bayes.hmc import HmcConfig
from .bayes.predictive import PredictiveDistribution
from .clustering import ClusterModel, dataset_profiles, fit_cluster_model, DEFAULT_K_RANGE
from .dataset import Dataset, N_MILESTONES
from .errors import InsufficientDataError, InvalidInputError
from .modes import Mode, fit as fit_mode, predict_at

RWIDTH_MEDIAN_FLOOR = 0.01
WILCOXON_EXACT_MAX_N = 20


def mae(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Mean absolute error over paired observations."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.size == 0:
        raise InvalidInputError("actual and predicted must be equal-length and nonempty")
    return float(np.mean(np.abs(a - p)))


def mae_rg_exact(actuals: Sequence[float]) -> float:
    """Exact expected MAE of random guessing from the other cases' actuals.

    (1/n) * sum_i (1/(n-1)) * sum_{j != i} |y_j - y_i|; the unbiased exact
    form (no Monte Carlo).
    """
    y = np.asarray(actuals, dtype=float)
    n = y.size
    if n < 2:
        raise InvalidInputError("need at least 2 actual values")
    total = np.sum(np.abs(y[:, None] - y[None, :]))
    return float(total / (n * (n - 1)))


def sa(mae_model: float, mae_rg: float) -> float:
    """Standardized accuracy: (1 - MAE/MAE_rg) * 100; negative when worse than random."""
    if mae_rg <= 0:
        raise InvalidInputError("SA undefined: random-guessing MAE is zero")
    return (1.0 - mae_model / mae_rg) * 100.0


def rwidth90(
    pred: PredictiveDistribution,
    denominator: str = "median",
    eps: float = RWIDTH_MEDIAN_FLOOR,
) -> float:
    """Relative width of the 90% credible interval.

    The denominator (posterior median with an eps floor) is a documented
    choice; ``denominator="mean"`` uses the sample mean instead.
    """
    width = pred.q95 - pred.q05
    if denominator == "median":
        ref = pred.median
    elif denominator == "mean":
        ref = float(np.mean(pred.samples))
    else:
        raise InvalidInputError("denominator must be 'median' or 'mean'")
    return float(width / max(ref, eps))


def _signed_rank_distribution(ranks2: np.ndarray) -> np.ndarray:
    """Distribution of W+ (on doubled ranks) over all sign assignments.

    counts[w] = number of subsets with doubled-rank sum w; each of the 2^n
    assignments is equally likely under the null.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped; ties share midranks. Exact sign-flip
    enumeration for n <= 20, normal approximation with continuity and tie
    corrections above. p = min(1, 2*min(P(W+ <= w), P(W+ >= w))).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InvalidInputError("paired samples must have equal length")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n < 5:
        raise InsufficientDataError(
            f"need at least 5 nonzero differences, got {n}"
        )
    ranks = stats.rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    if n <= WILCOXON_EXACT_MAX_N:
        ranks2 = np.rint(2.0 * ranks).astype(int)
        counts = _signed_rank_distribution(ranks2)
        total = counts.sum()
        w2 = int(round(2.0 * w_plus))
        cdf_le = counts[: w2 + 1].sum() / total
        cdf_ge = counts[w2:].sum() / total
        return float(min(1.0, 2.0 * min(cdf_le, cdf_ge)))
    mean_w = n * (n + 1) / 4.0
    tie_sizes = np.unique(ranks, return_counts=True)[1].astype(float)
    var_w = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes**3 - tie_sizes) / 48.0
    shift = w_plus - mean_w
    z = (shift - np.sign(shift) * 0.5) / np.sqrt(var_w)
    return float(min(1.0, 2.0 * stats.norm.sf(abs(z))))


def a12(x: Sequence[float], y: Sequence[float]) -> float:
    """Vargha-Delaney probability of superiority with 0.5 weight on ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise InvalidInputError("A12 inputs must be nonempty")
    greater = (x[:, None] > y[None, :]).sum()
    equal = (x[:, None] == y[None, :]).sum()
    return float((greater + 0.5 * equal) / (x.size * y.size))


@dataclass(frozen=True)
class FoldPlan:
    """Contiguous folds of epic ids ordered by actual start date."""

    folds: tuple[tuple[str, ...], ...]

    def splits(self):
        """Yield (split_index, train_ids, test_ids); train is folds 1..k."""
        for k in range(1, len(self.folds)):
            train = tuple(e for fold in self.folds[:k] for e in fold)
            yield k, train, self.folds[k]


def time_cv_splits(dataset: Dataset, folds: int = 10) -> FoldPlan:
    """Sort epics by actual start (ties by id) into near-equal contiguous folds."""
    if folds < 2:
        raise InvalidInputError("need at least 2 folds")
    epics = sorted(dataset.epics, key=lambda e: (e.actual_start or dt.date.min, e.epic_id))
    if len(epics) < folds:
        raise InvalidInputError(f"need at least {folds} epics, got {len(epics)}")
    ids = [e.epic_id for e in epics]
    parts = np.array_split(np.arange(len(ids)), folds)
    return FoldPlan(tuple(tuple(ids[i] for i in part) for part in parts))


# An estimator factory receives (train dataset, cluster model, seed) and
# returns predict(dataset, epic_id, milestone) -> PredictiveDistribution.
# This is the plug point for external baseline models.
EstimatorFactory = Callable[
    [Dataset, Optional[ClusterModel], int],
    Callable[[Dataset, str, int], PredictiveDistribution],
]


@dataclass(frozen=True)
class CellResult:
    split: int               # 0 = pooled over splits
    estimator: str
    milestone: int
    n: int
    mae: float
    sa: float
    mean_rwidth90: float
    mae_rg: float


@dataclass(frozen=True)
class Comparison:
    milestone: int
    estimator_a: str
    estimator_b: str
    wilcoxon_p: float
    a12: float


@dataclass
class BenchmarkResult:
    per_split: list[CellResult]
    pooled: list[CellResult]
    comparisons: list[Comparison]
    # per (estimator, milestone): aligned per-epic absolute errors, pooled
    errors: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)

    def pooled_cell(self, estimator: str, milestone: int) -> CellResult:
        for cell in self.pooled:
            if cell.estimator == estimator and cell.milestone == milestone:
                return cell
        raise KeyError((estimator, milestone))

    def comparison(self, a: str, b: str, milestone: int) -> Comparison:
        for comp in self.comparisons:
            if (comp.estimator_a, comp.estimator_b, comp.milestone) == (a, b, milestone):
                return comp
        raise KeyError((a, b, milestone))

    def write_results_csv(self, path) -> None:
        from .dataset import _write_csv

        rows = []
        for cell in self.per_split + self.pooled:
            rows.append(
                (
                    cell.split if cell.split else "pooled",
                    cell.estimator,
                    cell.milestone,
                    cell.n,
                    repr(cell.mae),
                    repr(cell.sa),
                    repr(cell.mean_rwidth90),
                )
            )
        _write_csv(path, ("split", "mode", "milestone", "n", "MAE", "SA", "mean_rwidth90"), rows)

    def write_comparisons_csv(self, path) -> None:
        from .dataset import _write_csv

        rows = [
            (c.milestone, c.estimator_a, c.estimator_b, repr(c.wilcoxon_p), repr(c.a12))
            for c in self.comparisons
        ]
        _write_csv(path, ("milestone", "mode_a", "mode_b", "wilcoxon_p", "a12"), rows)


def _model_predictor(model) -> Callable[[Dataset, str, int], PredictiveDistribution]:
    def predictor(data: Dataset, epic_id: str, milestone: int) -> PredictiveDistribution:
        return predict_at(model, data, epic_id, milestone)

    return predictor


def _fit_split_modes(
    modes: Sequence[Mode],
    train: Dataset,
    cluster_model: ClusterModel,
    config: HmcConfig,
    seed: int,
    split: int,
) -> dict[str, Callable]:
    """Fit each requested mode on one training set.

    Global and global-iterative train on identical rows, so they share one
    posterior (same seed, one sampling run) wrapped per mode.
    """
    from .modes import FittedModel

    predictors: dict[str, Callable] = {}
    shared_global = None
    for mode in modes:
        if mode in (Mode.GLOBAL, Mode.GLOBAL_ITERATIVE):
            if shared_global is None:
                shared_global = fit_mode(
                    Mode.GLOBAL, train, None, config, _seed_for(seed, split, 0)
                )
            model = FittedModel(
                mode=mode,
                posterior=shared_global.posterior,
                cluster_model=None,
                covariates=shared_global.covariates,
            )
        else:
            group = 1 if mode is Mode.DYNAMIC else 2
            model = fit_mode(
                mode,
                train,
                cluster_model if mode is Mode.DYNAMIC else None,
                config,
                _seed_for(seed, split, group),
            )
        predictors[mode.value] = _model_predictor(model)
    return predictors


def _seed_for(seed: int, split: int, group: int) -> int:
    return int(np.random.SeedSequence([seed, split, group]).generate_state(1)[0])


def run_benchmark(
    dataset: Dataset,
    modes: Sequence[Mode],
    config: HmcConfig,
    seed: int,
    estimators: Optional[Mapping[str, EstimatorFactory]] = None,
    folds: int = 10,
    k_range: Sequence[int] = DEFAULT_K_RANGE,
) -> BenchmarkResult:
    """Time-based cross-validated comparison of prediction modes.

    Per split: the cluster model (k by elbow) and every estimator are fitted
    on the training folds only, then each test epic is predicted at every
    milestone. The global and global-iterative modes share one posterior
    (identical training rows, same seed). Reported MAE/SA/RWidth pool the
    test predictions across splits; per-split rows are also kept.
    """
    plan = time_cv_splits(dataset, folds)
    outcomes = dataset.outcomes()

    names: list[str] = [m.value for m in modes]
    for name in estimators or {}:
        if name in names:
            raise InvalidInputError(f"duplicate estimator name {name!r}")
        names.append(name)

    pooled_actual: list[float] = []
    errors: dict[tuple[str, int], list[float]] = {
        (name, m): [] for name in names for m in range(1, N_MILESTONES + 1)
    }
    rwidths: dict[tuple[str, int], list[float]] = {
        (name, m): [] for name in names for m in range(1, N_MILESTONES + 1)
    }
    per_split: list[CellResult] = []

    for split, train_ids, test_ids in plan.splits():
        train = dataset.subset(train_ids)
        cluster_model = fit_cluster_model(
            dataset_profiles(train),
            k_range=[k for k in k_range if k <= len(train_ids)],
        )
        predictors = _fit_split_modes(modes, train, cluster_model, config, seed, split)
        for index, (name, factory) in enumerate(sorted((estimators or {}).items())):
            predictors[name] = factory(
                train, cluster_model, _seed_for(seed, split, 100 + index)
            )

        split_actual = [outcomes[e].bre for e in test_ids]
        split_rg = mae_rg_exact(split_actual) if len(split_actual) >= 2 else float("nan")
        pooled_actual.extend(split_actual)
        for name in names:
            for milestone in range(1, N_MILESTONES + 1):
                errs, widths = [], []
                for epic_id in test_ids:
                    pred = predictors[name](dataset, epic_id, milestone)
                    err = abs(outcomes[epic_id].bre - pred.median)
                    width = rwidth90(pred)
                    errs.append(err)
                    widths.append(width)
                errors[(name, milestone)].extend(errs)
                rwidths[(name, milestone)].extend(widths)
                cell_mae = float(np.mean(errs))
                per_split.append(
                    CellResult(
                        split=split,
                        estimator=name,
                        milestone=milestone,
                        n=len(test_ids),
                        mae=cell_mae,
                        sa=sa(cell_mae, split_rg) if np.isfinite(split_rg) else float("nan"),
                        mean_rwidth90=float(np.mean(widths)),
                        mae_rg=split_rg,
                    )
                )

    pooled: list[CellResult] = []
    pooled_rg = mae_rg_exact(pooled_actual)
    for name in names:
        for milestone in range(1, N_MILESTONES + 1):
            errs = np.asarray(errors[(name, milestone)])
            pooled_mae = float(errs.mean())
            pooled.append(
                CellResult(
                    split=0,
                    estimator=name,
                    milestone=milestone,
                    n=errs.size,
                    mae=pooled_mae,
                    sa=sa(pooled_mae, pooled_rg),
                    mean_rwidth90=float(np.mean(rwidths[(name, milestone)])),
                    mae_rg=pooled_rg,
                )
            )

    comparisons: list[Comparison] = []
    for i, name_a in enumerate(names):
        for name_b in names[i + 1 :]:
            for milestone in range(1, N_MILESTONES + 1):
                ea = np.asarray(errors[(name_a, milestone)])
                eb = np.asarray(errors[(name_b, milestone)])
                try:
                    p = wilcoxon_signed_rank(ea, eb)
                except InsufficientDataError:
                    p = float("nan")
                comparisons.append(
                    Comparison(
                        milestone=milestone,
                        estimator_a=name_a,
                        estimator_b=name_b,
                        wilcoxon_p=p,
                        a12=a12(ea, eb),
                    )
                )

    return BenchmarkResult(
        per_split=per_split,
        pooled=pooled,
        comparisons=comparisons,
        errors={k: np.asarray(v) for k, v in errors.items()},
    )
