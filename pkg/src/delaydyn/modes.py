"""The three prediction modes: global, global-iterative, and dynamic.

Global trains once on milestone-1 snapshots and never updates its estimate.
Global-iterative reuses that posterior but feeds it each milestone's fresh
covariates. Dynamic trains on one row per (epic, milestone) with the
milestone index, the milestone's DSP, and the delay-pattern label (from
classifying the observed prefix) as extra covariates; a patternless variant
supports measuring what the labels contribute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from .bayes.design import DesignMatrix
from .bayes.hmc import HmcConfig
from .bayes.posterior import ZibPosterior, fit_zib
from .bayes.predictive import PredictiveDistribution, predict
from .clustering import ClusterModel, classify_partial
from .dataset import Dataset, N_MILESTONES, PREDICTOR_NAMES, dsp_series
from .errors import InvalidInputError, SchemaMismatchError


class Mode(str, Enum):
    GLOBAL = "global"
    GLOBAL_ITERATIVE = "global-iter"
    DYNAMIC = "dynamic"
    DYNAMIC_NOPATTERNS = "dynamic-nopatterns"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise InvalidInputError(f"unknown mode {text!r}")


GLOBAL_COVARIATES = PREDICTOR_NAMES + ("dsp",)
DYNAMIC_COVARIATES = PREDICTOR_NAMES + ("milestone", "dsp", "pattern")
DYNAMIC_NOPATTERN_COVARIATES = PREDICTOR_NAMES + ("milestone", "dsp")


def covariate_names(mode: Mode, pattern_encoding: str = "ordinal", k: int = 0):
    if mode in (Mode.GLOBAL, Mode.GLOBAL_ITERATIVE):
        return GLOBAL_COVARIATES
    if mode is Mode.DYNAMIC_NOPATTERNS:
        return DYNAMIC_NOPATTERN_COVARIATES
    if pattern_encoding == "onehot":
        return DYNAMIC_NOPATTERN_COVARIATES + tuple(
            f"pattern_{label}" for label in range(1, k + 1)
        )
    return DYNAMIC_COVARIATES


def pattern_severity_ranks(
    cluster_model: ClusterModel, bre: Mapping[str, float]
) -> dict[int, float]:
    """Ordinal value per cluster label: rank by mean member BRE, descending.

    Cluster labels themselves are arbitrary (ordered by smallest member
    index); ranking them by observed delay severity makes the single ordinal
    pattern covariate monotone in outcome, mirroring the published cluster
    numbering which descends in median BRE.
    """
    means = {}
    for label in range(1, cluster_model.k + 1):
        values = [
            bre[e] for e, l in cluster_model.assignments.items() if l == label and e in bre
        ]
        means[label] = float(np.mean(values)) if values else float("-inf")
    order = sorted(means, key=lambda l: (-means[l], l))
    return {label: float(rank + 1) for rank, label in enumerate(order)}


def _pattern_value(
    label_available: Optional[int],
    ordinals: Mapping[int, float],
) -> float:
    if label_available is None:
        return float("nan")  # imputed with the training mean, i.e. 0 after centering
    return ordinals[label_available]


def build_rows(
    dataset: Dataset,
    mode: Mode,
    cluster_model: Optional[ClusterModel] = None,
    pattern_ordinals: Optional[Mapping[int, float]] = None,
    pattern_encoding: str = "ordinal",
) -> tuple[DesignMatrix, Optional[dict[int, float]]]:
    """Training rows for a mode; the target is always the epic's final BRE.

    Dynamic rows classify each milestone's observed DSP prefix with the
    cluster model (unknown future milestones are zero-padded inside the
    classifier); at milestones 1-2 the label is unavailable and enters as
    NaN, which standardization maps to exactly 0.
    """
    if pattern_encoding not in ("ordinal", "onehot"):
        raise InvalidInputError("pattern_encoding must be 'ordinal' or 'onehot'")
    needs_patterns = mode is Mode.DYNAMIC
    if needs_patterns and cluster_model is None:
        raise InvalidInputError("dynamic mode requires a fitted cluster model")
    outcomes = dataset.outcomes()

    if mode in (Mode.GLOBAL, Mode.GLOBAL_ITERATIVE):
        names = covariate_names(mode)
        rows, ids, targets = [], [], []
        for epic_id in dataset.epic_ids:
            snap = dataset.snapshot(epic_id, 1)
            rows.append(np.append(snap.predictors.as_array(), float(snap.dsp_raw)))
            ids.append((epic_id, 1))
            targets.append(outcomes[epic_id].bre)
        return (
            DesignMatrix(names, np.array(rows), np.array(targets), tuple(ids)),
            None,
        )

    if needs_patterns and pattern_ordinals is None:
        pattern_ordinals = pattern_severity_ranks(
            cluster_model, {e: o.bre for e, o in outcomes.items()}
        )
    names = covariate_names(mode, pattern_encoding, cluster_model.k if cluster_model else 0)
    rows, ids, targets = [], [], []
    for epic_id in dataset.epic_ids:
        series = outcomes[epic_id].dsp_series
        for milestone in range(1, N_MILESTONES + 1):
            snap = dataset.snapshot(epic_id, milestone)
            base = np.append(snap.predictors.as_array(), [float(milestone), float(snap.dsp_raw)])
            if mode is Mode.DYNAMIC:
                label = classify_partial(series[: milestone - 1], cluster_model).label
                if pattern_encoding == "onehot":
                    onehot = np.zeros(cluster_model.k)
                    if label is not None:
                        onehot[label - 1] = 1.0
                    else:
                        onehot[:] = np.nan
                    base = np.concatenate([base, onehot])
                else:
                    base = np.append(base, _pattern_value(label, pattern_ordinals))
            rows.append(base)
            ids.append((epic_id, milestone))
            targets.append(outcomes[epic_id].bre)
    return (
        DesignMatrix(names, np.array(rows), np.array(targets), tuple(ids)),
        dict(pattern_ordinals) if needs_patterns and pattern_encoding == "ordinal" else None,
    )


@dataclass(frozen=True)
class FittedModel:
    """A mode's posterior plus everything prediction needs."""

    mode: Mode
    posterior: ZibPosterior
    cluster_model: Optional[ClusterModel]
    covariates: tuple[str, ...]
    pattern_ordinals: Optional[Mapping[int, float]] = None
    pattern_encoding: str = "ordinal"

    def __post_init__(self):
        if self.mode is Mode.DYNAMIC and self.cluster_model is None:
            raise InvalidInputError("dynamic mode requires a cluster model")

    def save(self, path, extra: Optional[dict] = None) -> None:
        payload = {
            "mode": self.mode.value,
            "covariates": list(self.covariates),
            "pattern_encoding": self.pattern_encoding,
            "pattern_ordinals": (
                {str(k): v for k, v in self.pattern_ordinals.items()}
                if self.pattern_ordinals
                else None
            ),
            "cluster_model": self.cluster_model.to_json_dict() if self.cluster_model else None,
            "posterior": self.posterior.to_json_dict(),
        }
        if extra:
            payload.update(extra)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "FittedModel":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        return cls(
            mode=Mode.parse(raw["mode"]),
            posterior=ZibPosterior.from_json_dict(raw["posterior"]),
            cluster_model=(
                ClusterModel.from_json_dict(raw["cluster_model"])
                if raw.get("cluster_model")
                else None
            ),
            covariates=tuple(raw["covariates"]),
            pattern_ordinals=(
                {int(k): float(v) for k, v in raw["pattern_ordinals"].items()}
                if raw.get("pattern_ordinals")
                else None
            ),
            pattern_encoding=raw.get("pattern_encoding", "ordinal"),
        )


def fit(
    mode: Mode,
    dataset: Dataset,
    cluster_model: Optional[ClusterModel],
    config: HmcConfig,
    seed: int,
    family: str = "zib",
    pattern_encoding: str = "ordinal",
) -> FittedModel:
    """Build rows, standardize, sample; diagnostics ride along on the posterior."""
    design, ordinals = build_rows(
        dataset, mode, cluster_model, pattern_encoding=pattern_encoding
    )
    posterior = fit_zib(design, config, seed, family=family)
    return FittedModel(
        mode=mode,
        posterior=posterior,
        cluster_model=cluster_model if mode is Mode.DYNAMIC else None,
        covariates=design.names,
        pattern_ordinals=ordinals,
        pattern_encoding=pattern_encoding,
    )


def _prediction_row(
    model: FittedModel, dataset: Dataset, epic_id: str, milestone: int
) -> np.ndarray:
    outcome_series = dsp_series(dataset.epic(epic_id))
    if model.mode is Mode.GLOBAL:
        snap = dataset.snapshot(epic_id, 1)
        return np.append(snap.predictors.as_array(), float(snap.dsp_raw))
    snap = dataset.snapshot(epic_id, milestone)
    if model.mode is Mode.GLOBAL_ITERATIVE:
        return np.append(snap.predictors.as_array(), float(snap.dsp_raw))
    base = np.append(
        snap.predictors.as_array(), [float(milestone), float(snap.dsp_raw)]
    )
    if model.mode is Mode.DYNAMIC:
        label = classify_partial(outcome_series[: milestone - 1], model.cluster_model).label
        if model.pattern_encoding == "onehot":
            onehot = np.zeros(model.cluster_model.k)
            if label is not None:
                onehot[label - 1] = 1.0
            else:
                onehot[:] = np.nan
            base = np.concatenate([base, onehot])
        else:
            base = np.append(base, _pattern_value(label, model.pattern_ordinals))
    return base


def predict_at(
    model: FittedModel, dataset: Dataset, epic_id: str, milestone: int
) -> PredictiveDistribution:
    """Predict an epic's final BRE as of a milestone.

    Global predictions are literally constant in the milestone: the input row
    and the per-row sampling stream are both milestone-independent.
    """
    if not 1 <= milestone <= N_MILESTONES:
        raise InvalidInputError(f"milestone must lie in [1, 10], got {milestone}")
    raw = _prediction_row(model, dataset, epic_id, milestone)
    row_std = model.posterior.standardizer.transform(raw[None, :])[0]
    return predict(model.posterior, row_std)


def predict_row(model: FittedModel, named_values: Mapping[str, float]) -> PredictiveDistribution:
    """Predict from explicitly named covariates; names must match training."""
    if tuple(named_values.keys()) != model.covariates:
        raise SchemaMismatchError(
            "covariate names/order do not match the trained schema: "
            f"expected {model.covariates}"
        )
    raw = np.array([float(v) for v in named_values.values()])
    row_std = model.posterior.standardizer.transform(raw[None, :])[0]
    return predict(model.posterior, row_std)
